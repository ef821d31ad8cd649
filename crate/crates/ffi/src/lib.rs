//! C interface to `dithercap`.
//!
//! Every fallible call returns a [`DcStatus`]; on failure the message is
//! available from [`dc_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Pass `INFINITY`
//! as the peak amplitude for no peak constraint.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dithercap::bounds::{default_ell0_list, dual_upper_bound_optimized, slope_lower_bound};
use dithercap::channel::{noise_cdf, noise_pdf, snqnr};
use dithercap::info::{mutual_information, one_bit_capacity};
use dithercap::low_snr::low_snr_slope;
use dithercap::solver::capacity;
use dithercap::{
    CapacityResult, ChannelParams, Error, InputDistribution, PowerConstraints, QuadratureSpec, SolverConfig,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Domain = 3,
    ToleranceNotMet = 4,
    /// The capacity iteration hit its cap; the best iterate is still returned.
    NonConvergence = 5,
    InfeasibleBracket = 6,
    FisherBoundViolation = 7,
    BoundInvalid = 8,
    InsufficientSamples = 9,
    Panic = 10,
}

/// Opaque channel handle.
pub struct DcChannel {
    inner: ChannelParams,
}

/// Opaque capacity result handle.
pub struct DcCapacityResult {
    inner: CapacityResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DcStatus {
    match e {
        Error::Domain(_) => DcStatus::Domain,
        Error::InvalidParameter(_) => DcStatus::InvalidParameter,
        Error::ToleranceNotMet { .. } => DcStatus::ToleranceNotMet,
        Error::NonConvergence { .. } => DcStatus::NonConvergence,
        Error::InfeasibleBracket { .. } => DcStatus::InfeasibleBracket,
        Error::FisherBoundViolation { .. } => DcStatus::FisherBoundViolation,
        Error::BoundInvalid(_) => DcStatus::BoundInvalid,
        Error::InsufficientSamples { .. } => DcStatus::InsufficientSamples,
    }
}

fn fail(e: Error) -> DcStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn null() -> DcStatus {
    set_error("null pointer argument");
    DcStatus::NullPointer
}

fn guarded(f: impl FnOnce() -> DcStatus) -> DcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == DcStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => {
            set_error("internal panic");
            DcStatus::Panic
        }
    }
}

fn constraints(p: f64, a: f64) -> dithercap::Result<PowerConstraints> {
    if a == f64::INFINITY {
        PowerConstraints::unbounded(p)
    } else {
        PowerConstraints::bounded(p, a)
    }
}

/// Writes `v` through `out`, or reports the error.
unsafe fn put(out: *mut f64, v: dithercap::Result<f64>) -> DcStatus {
    match v {
        Ok(v) => {
            *out = v;
            DcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a channel with noise standard deviation `sigma` and step `delta`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn dc_channel_new(sigma: f64, delta: f64, out: *mut *mut DcChannel) -> DcStatus {
    guarded(|| {
        if out.is_null() {
            return null();
        }
        match ChannelParams::new(sigma, delta) {
            Ok(ch) => {
                *out = Box::into_raw(Box::new(DcChannel { inner: ch }));
                DcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a channel. Null is ignored.
///
/// # Safety
/// `ch` must come from [`dc_channel_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dc_channel_free(ch: *mut DcChannel) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

/// Density of the equivalent noise at `z`.
///
/// # Safety
/// `ch` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dc_noise_pdf(ch: *const DcChannel, z: f64, out: *mut f64) -> DcStatus {
    guarded(|| {
        if ch.is_null() || out.is_null() {
            return null();
        }
        put(out, Ok(noise_pdf(z, &(*ch).inner)))
    })
}

/// CDF of the equivalent noise at `z`.
///
/// # Safety
/// `ch` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dc_noise_cdf(ch: *const DcChannel, z: f64, out: *mut f64) -> DcStatus {
    guarded(|| {
        if ch.is_null() || out.is_null() {
            return null();
        }
        put(out, Ok(noise_cdf(z, &(*ch).inner)))
    })
}

/// `P / (sigma^2 + delta^2 / 12)`.
///
/// # Safety
/// `ch` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dc_snqnr(ch: *const DcChannel, p: f64, out: *mut f64) -> DcStatus {
    guarded(|| {
        if ch.is_null() || out.is_null() {
            return null();
        }
        put(out, PowerConstraints::unbounded(p).map(|pc| snqnr(&pc, &(*ch).inner)))
    })
}

/// Capacity under average power `p` and peak amplitude `a`. Zero for
/// `grid_points`, `tol` or `max_iter` selects the default. On
/// `DC_STATUS_NON_CONVERGENCE` the best iterate is still written to `out`.
///
/// # Safety
/// `ch` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dc_capacity(
    ch: *const DcChannel,
    p: f64,
    a: f64,
    grid_points: usize,
    tol: f64,
    max_iter: usize,
    out: *mut *mut DcCapacityResult,
) -> DcStatus {
    guarded(|| {
        if ch.is_null() || out.is_null() {
            return null();
        }
        let mut cfg = SolverConfig::default();
        if grid_points != 0 {
            cfg.grid_points = grid_points;
        }
        if tol != 0.0 {
            cfg.convergence_tol = tol;
        }
        if max_iter != 0 {
            cfg.max_iterations = max_iter;
        }
        let pc = match constraints(p, a) {
            Ok(pc) => pc,
            Err(e) => return fail(e),
        };
        match capacity(&pc, &(*ch).inner, &cfg) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(DcCapacityResult { inner: r }));
                DcStatus::Ok
            }
            Err(Error::NonConvergence { iterations, gap, best }) => {
                set_error(&format!("no convergence after {iterations} iterations (gap {gap:e})"));
                *out = Box::into_raw(Box::new(DcCapacityResult { inner: *best }));
                DcStatus::NonConvergence
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a capacity result. Null is ignored.
///
/// # Safety
/// `r` must come from [`dc_capacity`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dc_capacity_result_free(r: *mut DcCapacityResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Achieved rate in nats; NaN for a null handle.
///
/// # Safety
/// `r` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn dc_capacity_result_rate(r: *const DcCapacityResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.rate)
}

/// Upper bound in nats; NaN for a null handle.
///
/// # Safety
/// `r` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn dc_capacity_result_upper_bound(r: *const DcCapacityResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.upper_bound)
}

/// Final duality gap estimate; NaN for a null handle.
///
/// # Safety
/// `r` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn dc_capacity_result_gap(r: *const DcCapacityResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.duality_gap_estimate)
}

/// Iterations used; 0 for a null handle.
///
/// # Safety
/// `r` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn dc_capacity_result_iterations(r: *const DcCapacityResult) -> usize {
    r.as_ref().map_or(0, |r| r.inner.iterations)
}

/// Number of atoms in the optimizing input; 0 for a null handle.
///
/// # Safety
/// `r` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn dc_capacity_result_len(r: *const DcCapacityResult) -> usize {
    r.as_ref().map_or(0, |r| r.inner.distribution.len())
}

/// Copies up to `cap` atoms into `xs` and `ps`; `written` receives the count.
///
/// # Safety
/// `xs` and `ps` must each hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_capacity_result_atoms(
    r: *const DcCapacityResult,
    xs: *mut f64,
    ps: *mut f64,
    cap: usize,
    written: *mut usize,
) -> DcStatus {
    guarded(|| {
        if r.is_null() || xs.is_null() || ps.is_null() || written.is_null() {
            return null();
        }
        let atoms = (*r).inner.distribution.atoms();
        let n = atoms.len().min(cap);
        for (k, &(x, p)) in atoms.iter().take(n).enumerate() {
            *xs.add(k) = x;
            *ps.add(k) = p;
        }
        *written = n;
        DcStatus::Ok
    })
}

/// `I(X; X + Z)` in nats for the input with `n` atoms at `xs` with masses `ps`.
///
/// # Safety
/// `xs` and `ps` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_mutual_information(
    ch: *const DcChannel,
    xs: *const f64,
    ps: *const f64,
    n: usize,
    out: *mut f64,
) -> DcStatus {
    guarded(|| {
        if ch.is_null() || xs.is_null() || ps.is_null() || out.is_null() {
            return null();
        }
        let atoms: Vec<(f64, f64)> = (0..n).map(|k| (*xs.add(k), *ps.add(k))).collect();
        let v = InputDistribution::new(atoms)
            .and_then(|d| mutual_information(&d, &(*ch).inner, &QuadratureSpec::default()))
            .map(|e| e.value);
        put(out, v)
    })
}

/// Low-SNR slope `I(0)/2` under a finite peak-to-average ratio.
///
/// # Safety
/// `ch` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dc_low_snr_slope(ch: *const DcChannel, out: *mut f64) -> DcStatus {
    guarded(|| {
        if ch.is_null() || out.is_null() {
            return null();
        }
        put(out, low_snr_slope(&(*ch).inner, &QuadratureSpec::default()))
    })
}

/// Threshold-probe lower bound on the slope without peak constraint, over
/// cell counts 1, 2, ..., 64.
///
/// # Safety
/// `ch` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dc_slope_lower_bound(ch: *const DcChannel, offset: f64, out: *mut f64) -> DcStatus {
    guarded(|| {
        if ch.is_null() || out.is_null() {
            return null();
        }
        put(
            out,
            slope_lower_bound(&(*ch).inner, &default_ell0_list(), offset).map(|b| b.value),
        )
    })
}

/// Optimized duality upper bound on the capacity, in nats.
///
/// # Safety
/// `ch` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dc_dual_upper_bound(ch: *const DcChannel, p: f64, a: f64, out: *mut f64) -> DcStatus {
    guarded(|| {
        if ch.is_null() || out.is_null() {
            return null();
        }
        put(
            out,
            constraints(p, a).map(|pc| dual_upper_bound_optimized(&pc, &(*ch).inner).value),
        )
    })
}

/// Capacity of the 1-bit quantizer without dither, in nats.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_one_bit_capacity(p: f64, sigma: f64, out: *mut f64) -> DcStatus {
    guarded(|| {
        if out.is_null() {
            return null();
        }
        if !(p >= 0.0 && p.is_finite() && sigma > 0.0 && sigma.is_finite()) {
            return fail(Error::InvalidParameter(format!(
                "need p >= 0 and sigma > 0, got p = {p}, sigma = {sigma}"
            )));
        }
        put(out, Ok(one_bit_capacity(p, sigma)))
    })
}
