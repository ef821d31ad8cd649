//! Command-line front end. Every command writes one table as CSV or JSON;
//! each row repeats the parameters that produced it.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::bounds::{default_ell0_list, dual_upper_bound_optimized, slope_lower_bound};
use crate::channel::{ln_noise_pdf, noise_cdf, noise_pdf, snqnr, ChannelParams, Peak, PowerConstraints};
use crate::error::Error;
use crate::info::{gaussian_capacity, mutual_information, one_bit_low_snr_slope, InputDistribution};
use crate::low_snr::{fisher_tail_upper_bound, low_snr_slope, FisherTailParams};
use crate::montecarlo::{
    conditional_pmf_check, entropy_identity_check_with_bins, mi_estimate, simulate, SimRun, ENTROPY_TOL_SIGMAS,
};
use crate::numerics::QuadratureSpec;
use crate::solver::{capacity, CapacityResult, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_COMPUTATION: i32 = 4;
pub const EXIT_VERIFY_FAIL: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "dithercap",
    version,
    about = "Capacity and low-SNR analysis of the dithered quantized Gaussian channel"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Density and CDF of the equivalent noise N + U.
    Pdf(PdfArgs),
    /// Capacity at a single step size.
    Capacity(CapacityArgs),
    /// Capacity over a grid of step sizes.
    SweepDelta(SweepDeltaArgs),
    /// Capacity over a grid of average powers.
    SweepPower(SweepPowerArgs),
    /// Low-SNR slope, its tail upper bound and threshold lower bound.
    Slope(SlopeArgs),
    /// Duality upper bound and reference capacities.
    Bounds(BoundsArgs),
    /// Raw samples of the simulated channel.
    Simulate(SimArgs),
    /// Monte Carlo checks of the equivalent-noise identities.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output file; standard output if absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Odd number of input grid points.
    #[arg(long, default_value_t = 129)]
    pub grid_points: usize,
    /// Stop when the duality gap falls below this (nats).
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    /// Grid half-width cap, in units of sqrt(P).
    #[arg(long, default_value_t = 6.0)]
    pub peak_proxy: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            grid_points: self.grid_points,
            convergence_tol: self.tol,
            max_iterations: self.max_iter,
            peak_proxy_multiplier: self.peak_proxy,
            ..SolverConfig::default()
        }
    }

    fn meta(&self, m: &mut Map<String, Value>) {
        m.insert("grid_points".into(), json!(self.grid_points));
        m.insert("tol_nats".into(), json!(self.tol));
        m.insert("max_iter".into(), json!(self.max_iter));
        m.insert("peak_proxy".into(), json!(self.peak_proxy));
    }
}

/// Peak amplitude: a number or `inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplitude(pub Option<f64>);

impl FromStr for Amplitude {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("inf") {
            return Ok(Self(None));
        }
        s.parse::<f64>()
            .map(|a| Self(Some(a)))
            .map_err(|e| format!("expected a number or 'inf': {e}"))
    }
}

#[derive(Debug, Args)]
pub struct PeakArgs {
    /// Peak amplitude A, or `inf`.
    #[arg(long, default_value = "inf", conflicts_with = "k")]
    pub a: Amplitude,
    /// Peak-to-average power ratio K = A^2 / P (instead of --a).
    #[arg(long)]
    pub k: Option<f64>,
}

impl PeakArgs {
    fn constraints(&self, p: f64) -> crate::Result<PowerConstraints> {
        match (self.k, self.a.0) {
            (Some(k), _) => PowerConstraints::with_ratio(p, k),
            (None, Some(a)) => PowerConstraints::bounded(p, a),
            (None, None) => PowerConstraints::unbounded(p),
        }
    }
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct PdfArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub delta: f64,
    /// Evaluation points.
    #[arg(long, default_value = "lin:-6:6:121")]
    pub y_grid: Grid,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct CapacityArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub delta: f64,
    /// Average power P.
    #[arg(long)]
    pub p: f64,
    #[command(flatten)]
    pub peak: PeakArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SweepDeltaArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub p: f64,
    #[command(flatten)]
    pub peak: PeakArgs,
    #[arg(long)]
    pub delta_grid: Grid,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SweepPowerArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub p_grid: Grid,
    #[command(flatten)]
    pub peak: PeakArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SlopeArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub delta_grid: Grid,
    /// Tail-bound window edge, in units of sigma.
    #[arg(long, default_value_t = 5.0)]
    pub theta_sigmas: f64,
    /// Threshold offset of the lower bound, in units of sigma.
    #[arg(long, default_value_t = 5.0)]
    pub offset_sigmas: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct BoundsArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub delta_grid: Grid,
    #[arg(long)]
    pub p: f64,
    #[command(flatten)]
    pub peak: PeakArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SimArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub n: u64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub delta: f64,
    /// Input law as `x:p,x:p,...`.
    #[arg(long, default_value = "-1:0.5,1:0.5", allow_hyphen_values = true)]
    pub atoms: Atoms,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    pub n: u64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value = "-1:0.5,1:0.5", allow_hyphen_values = true)]
    pub atoms: Atoms,
    /// Equal-width dither bins.
    #[arg(long, default_value_t = 8)]
    pub u_bins: usize,
    /// Tolerance of the conditional pmf check, in standard errors.
    #[arg(long, default_value_t = 4.0)]
    pub tol_sigmas: f64,
    /// Output format; verification reports default to JSON.
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// `log:start:stop:count`, `lin:start:stop:count`, or an ascending list `a,b,c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub spec: String,
    pub values: Vec<f64>,
}

impl FromStr for Grid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("bad number '{t}': {e}"));
        let values = if let Some(rest) = s.strip_prefix("log:").or_else(|| s.strip_prefix("lin:")) {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(format!("grid '{s}' needs start:stop:count"));
            }
            let (a, b) = (num(parts[0])?, num(parts[1])?);
            let n: usize = parts[2]
                .trim()
                .parse()
                .map_err(|e| format!("bad count '{}': {e}", parts[2]))?;
            if n == 0 {
                return Err("grid count must be >= 1".into());
            }
            let log = s.starts_with("log:");
            if log && !(a > 0.0 && b > 0.0) {
                return Err("log grid endpoints must be > 0".into());
            }
            if n == 1 {
                if a != b {
                    return Err("a one-point grid needs start == stop".into());
                }
                vec![a]
            } else {
                let (la, lb) = if log { (a.log10(), b.log10()) } else { (a, b) };
                (0..n)
                    .map(|k| {
                        let t = la + (lb - la) * k as f64 / (n - 1) as f64;
                        let v = if log { 10f64.powf(t) } else { t };
                        // land exactly on the requested endpoints
                        if k == 0 {
                            a
                        } else if k == n - 1 {
                            b
                        } else {
                            v
                        }
                    })
                    .collect()
            }
        } else {
            s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(format!("grid '{s}' has non-finite values"));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(format!("grid '{s}' must be strictly ascending"));
        }
        Ok(Self {
            spec: s.to_string(),
            values,
        })
    }
}

/// `x:p,x:p,...`
#[derive(Debug, Clone, PartialEq)]
pub struct Atoms {
    pub spec: String,
    pub atoms: Vec<(f64, f64)>,
}

impl FromStr for Atoms {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let atoms = s
            .split(',')
            .map(|item| {
                let (x, p) = item
                    .split_once(':')
                    .ok_or_else(|| format!("atom '{item}' must be x:p"))?;
                let x: f64 = x.trim().parse().map_err(|e| format!("bad location '{x}': {e}"))?;
                let p: f64 = p.trim().parse().map_err(|e| format!("bad mass '{p}': {e}"))?;
                Ok((x, p))
            })
            .collect::<Result<Vec<_>, String>>()?;
        Ok(Self {
            spec: s.to_string(),
            atoms,
        })
    }
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            kind: "validation",
            message: message.into(),
        }
    }

    fn context(e: Error, what: &str) -> Self {
        let (code, kind) = match e {
            Error::InvalidParameter(_)
            | Error::Domain(_)
            | Error::InsufficientSamples { .. }
            | Error::BoundInvalid(_) => (EXIT_VALIDATION, "validation"),
            _ => (EXIT_COMPUTATION, "computation"),
        };
        Self {
            code,
            kind,
            message: format!("{what}: {e}"),
        }
    }

    pub fn record(&self) -> Value {
        json!({ "error": { "kind": self.kind, "code": self.code, "message": self.message } })
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// A self-describing result table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Map<String, Value>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(command: &str, columns: Vec<&'static str>) -> Self {
        let mut meta = Map::new();
        meta.insert("command".into(), json!(command));
        meta.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        meta.insert("units".into(), json!("rates in nats per channel use"));
        Self {
            meta,
            columns,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let m: Map<String, Value> = self
                    .columns
                    .iter()
                    .map(|c| c.to_string())
                    .zip(r.iter().cloned())
                    .collect();
                Value::Object(m)
            })
            .collect();
        json!({ "meta": Value::Object(self.meta.clone()), "rows": rows })
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (k, v) in &self.meta {
            let v = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let _ = writeln!(out, "# {k}={v}");
        }
        let mut w = csv::Writer::from_writer(out);
        let _ = w.write_record(&self.columns);
        for r in &self.rows {
            let _ = w.write_record(r.iter().map(cell_text));
        }
        w.into_inner().unwrap_or_default()
    }

    fn render(&self, format: Format) -> Vec<u8> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => {
                let mut v = serde_json::to_vec_pretty(&self.to_json()).unwrap_or_default();
                v.push(b'\n');
                v
            }
        }
    }
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn num(v: f64) -> Value {
    // non-finite values become null
    json!(v)
}

fn channel(sigma: f64, delta: f64) -> CliResult<ChannelParams> {
    ChannelParams::new(sigma, delta).map_err(|e| CliError::context(e, "channel"))
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "--{name} must be a positive number, got {v}"
        )))
    }
}

fn write_out(bytes: &[u8], path: &Option<PathBuf>) -> CliResult<()> {
    let res = match path {
        Some(p) => std::fs::write(p, bytes),
        None => std::io::stdout().write_all(bytes),
    };
    res.map_err(|e| CliError {
        code: EXIT_COMPUTATION,
        kind: "io",
        message: format!("writing output: {e}"),
    })
}

fn peak_meta(m: &mut Map<String, Value>, peak: &PeakArgs) {
    match (peak.k, peak.a.0) {
        (Some(k), _) => m.insert("k".into(), json!(k)),
        (None, Some(a)) => m.insert("a".into(), json!(a)),
        (None, None) => m.insert("a".into(), json!("inf")),
    };
}

fn amplitude_cell(p: &PowerConstraints) -> Value {
    match p.peak() {
        Peak::Bounded(a) => num(a),
        Peak::Unbounded => json!("inf"),
    }
}

const CAPACITY_COLUMNS: [&str; 13] = [
    "sigma",
    "delta",
    "p",
    "a",
    "capacity_nats",
    "upper_bound_nats",
    "gaussian_capacity_nats",
    "snqnr",
    "converged",
    "iterations",
    "duality_gap_nats",
    "support_size",
    "power_used",
];

fn capacity_row(p: &PowerConstraints, ch: &ChannelParams, res: crate::Result<CapacityResult>) -> CliResult<Vec<Value>> {
    let (r, converged) = match res {
        Ok(r) => (r, true),
        Err(Error::NonConvergence { best, .. }) => (*best, false),
        Err(e) => return Err(CliError::context(e, &format!("capacity at delta = {}", ch.delta()))),
    };
    let gauss = gaussian_capacity(
        &PowerConstraints::unbounded(p.avg_power()).map_err(|e| CliError::context(e, "power"))?,
        ch.sigma(),
    )
    .map_err(|e| CliError::context(e, "gaussian capacity"))?;
    Ok(vec![
        num(ch.sigma()),
        num(ch.delta()),
        num(p.avg_power()),
        amplitude_cell(p),
        num(r.rate),
        num(r.upper_bound),
        num(gauss),
        num(snqnr(p, ch)),
        json!(converged),
        json!(r.iterations),
        num(r.duality_gap_estimate),
        json!(r.distribution.len()),
        num(r.power_used),
    ])
}

fn run_pdf(a: &PdfArgs) -> CliResult<(Table, Format, Option<PathBuf>)> {
    let ch = channel(a.sigma, a.delta)?;
    let mut t = Table::new("pdf", vec!["sigma", "delta", "y", "pdf", "ln_pdf", "cdf"]);
    t.meta.insert("sigma".into(), json!(a.sigma));
    t.meta.insert("delta".into(), json!(a.delta));
    t.meta.insert("y_grid".into(), json!(a.y_grid.spec));
    for &y in &a.y_grid.values {
        t.push(vec![
            num(a.sigma),
            num(a.delta),
            num(y),
            num(noise_pdf(y, &ch)),
            num(ln_noise_pdf(y, &ch)),
            num(noise_cdf(y, &ch)),
        ]);
    }
    Ok((t, a.out.format, a.out.output.clone()))
}

fn run_capacity(a: &CapacityArgs) -> CliResult<(Table, Format, Option<PathBuf>)> {
    let ch = channel(a.sigma, a.delta)?;
    let p = a
        .peak
        .constraints(a.p)
        .map_err(|e| CliError::context(e, "power constraint"))?;
    let cfg = a.solver.config();
    cfg.validate().map_err(|e| CliError::context(e, "solver"))?;
    let mut t = Table::new("capacity", CAPACITY_COLUMNS.to_vec());
    t.meta.insert("sigma".into(), json!(a.sigma));
    t.meta.insert("delta".into(), json!(a.delta));
    t.meta.insert("p".into(), json!(a.p));
    peak_meta(&mut t.meta, &a.peak);
    a.solver.meta(&mut t.meta);
    t.push(capacity_row(&p, &ch, capacity(&p, &ch, &cfg))?);
    Ok((t, a.out.format, a.out.output.clone()))
}

fn run_sweep_delta(a: &SweepDeltaArgs) -> CliResult<(Table, Format, Option<PathBuf>)> {
    positive("sigma", a.sigma)?;
    let p = a
        .peak
        .constraints(a.p)
        .map_err(|e| CliError::context(e, "power constraint"))?;
    let cfg = a.solver.config();
    cfg.validate().map_err(|e| CliError::context(e, "solver"))?;
    let chans = a
        .delta_grid
        .values
        .iter()
        .map(|&d| channel(a.sigma, d))
        .collect::<CliResult<Vec<_>>>()?;
    let results: Vec<_> = chans.par_iter().map(|ch| (*ch, capacity(&p, ch, &cfg))).collect();
    let mut t = Table::new("sweep-delta", CAPACITY_COLUMNS.to_vec());
    t.meta.insert("sigma".into(), json!(a.sigma));
    t.meta.insert("p".into(), json!(a.p));
    peak_meta(&mut t.meta, &a.peak);
    t.meta.insert("delta_grid".into(), json!(a.delta_grid.spec));
    a.solver.meta(&mut t.meta);
    for (ch, r) in results {
        t.push(capacity_row(&p, &ch, r)?);
    }
    Ok((t, a.out.format, a.out.output.clone()))
}

fn run_sweep_power(a: &SweepPowerArgs) -> CliResult<(Table, Format, Option<PathBuf>)> {
    let ch = channel(a.sigma, a.delta)?;
    let cfg = a.solver.config();
    cfg.validate().map_err(|e| CliError::context(e, "solver"))?;
    let ps = a
        .p_grid
        .values
        .iter()
        .map(|&p| {
            a.peak
                .constraints(p)
                .map_err(|e| CliError::context(e, "power constraint"))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let results: Vec<_> = ps.par_iter().map(|p| (*p, capacity(p, &ch, &cfg))).collect();
    let mut t = Table::new("sweep-power", CAPACITY_COLUMNS.to_vec());
    t.meta.insert("sigma".into(), json!(a.sigma));
    t.meta.insert("delta".into(), json!(a.delta));
    t.meta.insert("p_grid".into(), json!(a.p_grid.spec));
    peak_meta(&mut t.meta, &a.peak);
    a.solver.meta(&mut t.meta);
    for (p, r) in results {
        t.push(capacity_row(&p, &ch, r)?);
    }
    Ok((t, a.out.format, a.out.output.clone()))
}

fn run_slope(a: &SlopeArgs) -> CliResult<(Table, Format, Option<PathBuf>)> {
    positive("sigma", a.sigma)?;
    positive("theta-sigmas", a.theta_sigmas)?;
    positive("offset-sigmas", a.offset_sigmas)?;
    let spec = QuadratureSpec::default();
    let ell0 = default_ell0_list();
    let rows: Vec<CliResult<Vec<Value>>> = a
        .delta_grid
        .values
        .par_iter()
        .map(|&d| {
            let ch = channel(a.sigma, d)?;
            let half = low_snr_slope(&ch, &spec).map_err(|e| CliError::context(e, &format!("slope at delta = {d}")))?;
            let tail = FisherTailParams::new(a.theta_sigmas * a.sigma, &ch)
                .and_then(|tp| fisher_tail_upper_bound(&ch, &tp))
                .map(|b| num(b.slope_bound))
                .unwrap_or(Value::Null);
            let lb = slope_lower_bound(&ch, &ell0, a.offset_sigmas * a.sigma)
                .map_err(|e| CliError::context(e, &format!("lower bound at delta = {d}")))?;
            Ok(vec![
                num(a.sigma),
                num(d),
                num(half),
                num(one_bit_low_snr_slope(a.sigma)),
                tail,
                num(lb.value),
                json!(lb.best_ell0),
                num(0.5 / (a.sigma * a.sigma)),
            ])
        })
        .collect();
    let mut t = Table::new(
        "slope",
        vec![
            "sigma",
            "delta",
            "half_fisher_nats_per_power",
            "one_bit_slope_nats_per_power",
            "tail_bound_nats_per_power",
            "threshold_lower_bound_nats_per_power",
            "threshold_ell0",
            "unquantized_slope_nats_per_power",
        ],
    );
    t.meta.insert("sigma".into(), json!(a.sigma));
    t.meta.insert("delta_grid".into(), json!(a.delta_grid.spec));
    t.meta.insert("theta_sigmas".into(), json!(a.theta_sigmas));
    t.meta.insert("offset_sigmas".into(), json!(a.offset_sigmas));
    t.meta.insert("ell0_list".into(), json!(ell0));
    for r in rows {
        t.push(r?);
    }
    Ok((t, a.out.format, a.out.output.clone()))
}

fn run_bounds(a: &BoundsArgs) -> CliResult<(Table, Format, Option<PathBuf>)> {
    positive("sigma", a.sigma)?;
    let p = a
        .peak
        .constraints(a.p)
        .map_err(|e| CliError::context(e, "power constraint"))?;
    let gauss = gaussian_capacity(
        &PowerConstraints::unbounded(a.p).map_err(|e| CliError::context(e, "power"))?,
        a.sigma,
    )
    .map_err(|e| CliError::context(e, "gaussian capacity"))?;
    let rows: Vec<CliResult<Vec<Value>>> = a
        .delta_grid
        .values
        .par_iter()
        .map(|&d| {
            let ch = channel(a.sigma, d)?;
            let b = dual_upper_bound_optimized(&p, &ch);
            Ok(vec![
                num(a.sigma),
                num(d),
                num(a.p),
                amplitude_cell(&p),
                num(b.value),
                num(b.params.alpha),
                num(b.params.beta),
                num(gauss),
                num(gauss.min(b.value)),
                num(snqnr(&p, &ch)),
            ])
        })
        .collect();
    let mut t = Table::new(
        "bounds",
        vec![
            "sigma",
            "delta",
            "p",
            "a",
            "dual_bound_nats",
            "alpha",
            "beta",
            "gaussian_capacity_nats",
            "best_upper_bound_nats",
            "snqnr",
        ],
    );
    t.meta.insert("sigma".into(), json!(a.sigma));
    t.meta.insert("p".into(), json!(a.p));
    peak_meta(&mut t.meta, &a.peak);
    t.meta.insert("delta_grid".into(), json!(a.delta_grid.spec));
    for r in rows {
        t.push(r?);
    }
    Ok((t, a.out.format, a.out.output.clone()))
}

fn sim_run(seed: u64, n: u64, sigma: f64, delta: f64, atoms: &Atoms) -> CliResult<SimRun> {
    let ch = channel(sigma, delta)?;
    let input = InputDistribution::new(atoms.atoms.clone()).map_err(|e| CliError::context(e, "atoms"))?;
    SimRun::new(seed, n, input, ch).map_err(|e| CliError::context(e, "simulation"))
}

fn run_simulate(a: &SimArgs) -> CliResult<(Table, Format, Option<PathBuf>)> {
    let run = sim_run(a.seed, a.n, a.sigma, a.delta, &a.atoms)?;
    let mut t = Table::new("simulate", vec!["index", "x", "u", "y_tilde", "y_index"]);
    t.meta.insert("seed".into(), json!(a.seed));
    t.meta.insert("n".into(), json!(a.n));
    t.meta.insert("sigma".into(), json!(a.sigma));
    t.meta.insert("delta".into(), json!(a.delta));
    t.meta.insert("atoms".into(), json!(a.atoms.spec));
    t.meta
        .insert("rng".into(), json!("chacha8, 8 words per sample, box-muller"));
    for (k, s) in simulate(&run).enumerate() {
        t.push(vec![json!(k), num(s.x), num(s.u), num(s.y_tilde), json!(s.y_index)]);
    }
    Ok((t, a.out.format, a.out.output.clone()))
}

/// Runs the checks; the boolean is true when every check passed.
fn run_verify(a: &VerifyArgs) -> CliResult<(Table, bool)> {
    let run = sim_run(a.seed, a.n, a.sigma, a.delta, &a.atoms)?;
    let spec = QuadratureSpec::default();
    let pmf = conditional_pmf_check(&run, a.u_bins, a.tol_sigmas)
        .map_err(|e| CliError::context(e, "conditional pmf check"))?;
    let ent =
        entropy_identity_check_with_bins(&run, &spec, a.u_bins).map_err(|e| CliError::context(e, "entropy check"))?;
    let mi = mi_estimate(&run, a.u_bins).map_err(|e| CliError::context(e, "mutual information estimate"))?;
    let exact = mutual_information(&run.input, &run.ch, &spec)
        .map_err(|e| CliError::context(e, "mutual information"))?
        .value;
    let mi_pass = (mi.value - exact).abs() <= mi.error;

    let mut t = Table::new(
        "verify",
        vec!["check", "pass", "estimate", "target", "tolerance", "std_error", "cells"],
    );
    for (k, v) in [
        ("seed", json!(a.seed)),
        ("n", json!(a.n)),
        ("sigma", json!(a.sigma)),
        ("delta", json!(a.delta)),
        ("atoms", json!(a.atoms.spec)),
        ("u_bins", json!(a.u_bins)),
        ("tol_sigmas", json!(a.tol_sigmas)),
        ("entropy_tol_sigmas", json!(ENTROPY_TOL_SIGMAS)),
    ] {
        t.meta.insert(k.into(), v);
    }
    let worst_z = pmf.worst.map(|w| w.z).unwrap_or(f64::NAN);
    t.push(vec![
        json!("conditional_pmf"),
        json!(pmf.pass),
        num(worst_z),
        num(0.0),
        num(a.tol_sigmas),
        Value::Null,
        json!(pmf.cells_tested),
    ]);
    for (name, c) in [("entropy_given_u", ent.given_u), ("entropy_given_u_x", ent.given_u_x)] {
        t.push(vec![
            json!(name),
            json!(c.pass),
            num(c.estimate),
            num(c.target),
            num(ENTROPY_TOL_SIGMAS * (c.std_error + c.bias_allowance)),
            num(c.std_error),
            Value::Null,
        ]);
    }
    t.push(vec![
        json!("mutual_information"),
        json!(mi_pass),
        num(mi.value),
        num(exact),
        num(mi.error),
        num(mi.std_error),
        Value::Null,
    ]);
    let all = pmf.pass && ent.pass && mi_pass;
    t.meta.insert("pass".into(), json!(all));
    Ok((t, all))
}

/// Parses `args`, runs the command, writes output, and returns the exit code.
/// Errors go to standard error as a JSON record.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let err = CliError {
                code: EXIT_USAGE,
                kind: "usage",
                message: e.to_string().trim_end().to_string(),
            };
            eprintln!("{}", err.record());
            return EXIT_USAGE;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.record());
            e.code
        }
    }
}

/// Runs a parsed command.
pub fn execute(cmd: &Command) -> CliResult<i32> {
    let (table, format, out) = match cmd {
        Command::Pdf(a) => run_pdf(a)?,
        Command::Capacity(a) => run_capacity(a)?,
        Command::SweepDelta(a) => run_sweep_delta(a)?,
        Command::SweepPower(a) => run_sweep_power(a)?,
        Command::Slope(a) => run_slope(a)?,
        Command::Bounds(a) => run_bounds(a)?,
        Command::Simulate(a) => run_simulate(a)?,
        Command::Verify(a) => {
            let (t, pass) = run_verify(a)?;
            write_out(&t.render(a.format), &a.output)?;
            return Ok(if pass { EXIT_OK } else { EXIT_VERIFY_FAIL });
        }
    };
    write_out(&table.render(format), &out)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g: Grid = "log:1e-2:1e2:9".parse().unwrap();
        assert_eq!(g.values.len(), 9);
        assert_eq!(g.values[0], 1e-2);
        assert_eq!(g.values[8], 1e2);
        assert!((g.values[4] - 1.0).abs() < 1e-15);
        let g: Grid = "lin:0:1:5".parse().unwrap();
        assert_eq!(g.values, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g: Grid = "1,3,10".parse().unwrap();
        assert_eq!(g.values, vec![1.0, 3.0, 10.0]);
        for bad in [
            "log:0:1:3",
            "lin:1:0:3",
            "lin:0:1:0",
            "3,1",
            "lin:0:1",
            "foo:1:2:3",
            "lin:0:1:1",
        ] {
            assert!(bad.parse::<Grid>().is_err(), "{bad}");
        }
        assert_eq!("lin:2:2:1".parse::<Grid>().unwrap().values, vec![2.0]);
    }

    #[test]
    fn atoms_and_amplitude() {
        let a: Atoms = "-1:0.25, 2:0.75".parse().unwrap();
        assert_eq!(a.atoms, vec![(-1.0, 0.25), (2.0, 0.75)]);
        assert!("1".parse::<Atoms>().is_err());
        assert_eq!("inf".parse::<Amplitude>().unwrap(), Amplitude(None));
        assert_eq!("4".parse::<Amplitude>().unwrap(), Amplitude(Some(4.0)));
        assert!("four".parse::<Amplitude>().is_err());
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new("x", vec!["a_nats", "b"]);
        t.push(vec![num(0.1), Value::Null]);
        t.push(vec![json!("q,\"r"), json!(true)]);
        let s = String::from_utf8(t.to_csv()).unwrap();
        assert!(s.starts_with("# command=x\n"));
        assert!(s.contains("a_nats,b\n0.1,\n\"q,\"\"r\",true\n"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(["dithercap", "capacity", "--bogus"]), EXIT_USAGE);
        assert_eq!(
            main_with_args(["dithercap", "pdf", "--delta", "-1", "--output", "/dev/null"]),
            EXIT_VALIDATION
        );
    }
}
