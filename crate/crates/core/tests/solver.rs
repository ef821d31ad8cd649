use dithercap::info::gaussian_capacity;
use dithercap::solver::{capacity, capacity_sweep, unquantized_capacity_numeric};
use dithercap::{ChannelParams, PowerConstraints, SolverConfig};

fn ch(delta: f64) -> ChannelParams {
    ChannelParams::new(1.0, delta).unwrap()
}

#[test]
fn unquantized_reference_points() {
    let cfg = SolverConfig::default();
    let awgn = gaussian_capacity(&PowerConstraints::unbounded(1.0).unwrap(), 1.0).unwrap();
    let free = unquantized_capacity_numeric(&PowerConstraints::unbounded(1.0).unwrap(), 1.0, &cfg).unwrap();
    assert!((free.rate - awgn).abs() / awgn < 0.02, "{}", free.rate);
    for p in [0.1, 1.0, 10.0] {
        let r = unquantized_capacity_numeric(&PowerConstraints::unbounded(p).unwrap(), 1.0, &cfg).unwrap();
        let c = gaussian_capacity(&PowerConstraints::unbounded(p).unwrap(), 1.0).unwrap();
        assert!(
            r.rate <= c + 1e-6 && (c - r.rate) / c < 0.02,
            "P={p}: {} vs {c}",
            r.rate
        );
    }

    let peak = unquantized_capacity_numeric(&PowerConstraints::bounded(1.0, 1.0).unwrap(), 1.0, &cfg).unwrap();
    assert!(peak.rate <= awgn);

    let loose = unquantized_capacity_numeric(&PowerConstraints::bounded(1.0, 1e6).unwrap(), 1.0, &cfg).unwrap();
    assert!((loose.rate - free.rate).abs() <= 1e-6);
}

#[test]
fn result_invariants() {
    let cfg = SolverConfig::default();
    for (p, a, d) in [(1.0, 4.0, 1.0), (1.0, 1.0, 3.0), (0.5, 2.0, 0.2), (2.0, 2.0, 10.0)] {
        let pc = PowerConstraints::bounded(p, a).unwrap();
        let r = capacity(&pc, &ch(d), &cfg).unwrap();
        assert!(
            r.rate_trace.windows(2).all(|w| w[1] >= w[0] - 1e-13),
            "trace decreased at {d}"
        );
        assert!(r.duality_gap_estimate <= 10.0 * cfg.convergence_tol);
        assert!(r.power_used <= p * (1.0 + 1e-9));
        assert!(r.distribution.atoms().iter().all(|&(x, _)| x.abs() <= a + 1e-12));
        assert!(r.lower_bound <= r.upper_bound + 1e-6);
        assert!(r.rate <= gaussian_capacity(&PowerConstraints::unbounded(p).unwrap(), 1.0).unwrap() + 1e-6);
        // power is either used up or its multiplier is zero
        assert!(r.power_used >= p * (1.0 - 1e-3) || r.lagrange_multiplier == 0.0);
    }
}

#[test]
fn sweep_is_ordered_and_deterministic() {
    let cfg = SolverConfig::default();
    let pc = PowerConstraints::bounded(1.0, 4.0).unwrap();
    let out = capacity_sweep(&pc, &[ch(1e-2), ch(1.0), ch(1e2), ch(1.0)], &cfg).unwrap();
    let rates: Vec<f64> = out.iter().map(|(_, r)| r.as_ref().unwrap().rate).collect();
    assert!(rates[0] > rates[1] && rates[1] > rates[2]);
    assert_eq!(out[1].1.as_ref().unwrap(), out[3].1.as_ref().unwrap());
    assert_eq!(
        out.iter().map(|(d, _)| *d).collect::<Vec<_>>(),
        vec![1e-2, 1.0, 1e2, 1.0]
    );
    assert!(capacity_sweep(&pc, &[], &cfg).is_err());

    let unq = unquantized_capacity_numeric(&pc, 1.0, &cfg).unwrap().rate;
    assert!((unq - rates[0]).abs() / unq < 0.01);
}

#[test]
fn sweep_keeps_failed_points() {
    let cfg = SolverConfig {
        max_iterations: 3,
        convergence_tol: 1e-14,
        ..SolverConfig::default()
    };
    let pc = PowerConstraints::bounded(1.0, 4.0).unwrap();
    let out = capacity_sweep(&pc, &[ch(1.0), ch(10.0)], &cfg).unwrap();
    assert_eq!(out.len(), 2);
    assert!(out
        .iter()
        .all(|(_, r)| matches!(r, Err(dithercap::Error::NonConvergence { .. }))));
}

#[test]
fn grid_refinement_is_stable() {
    let pc = PowerConstraints::bounded(1.0, 4.0).unwrap();
    for d in [1e-2, 1.0, 10.0] {
        let a = capacity(&pc, &ch(d), &SolverConfig::default()).unwrap().rate;
        let fine = SolverConfig {
            grid_points: 257,
            ..SolverConfig::default()
        };
        let b = capacity(&pc, &ch(d), &fine).unwrap().rate;
        assert!((a - b).abs() / b < 5e-3, "delta={d}: {a} vs {b}");
    }
}

#[test]
fn low_resolution_collapse() {
    let r = capacity(
        &PowerConstraints::bounded(1.0, 1.0).unwrap(),
        &ch(1e3),
        &SolverConfig::default(),
    )
    .unwrap();
    assert!(r.rate <= 0.01);
    assert!(r.rate <= r.upper_bound);
}
