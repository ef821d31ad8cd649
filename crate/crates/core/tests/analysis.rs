use dithercap::bounds::{
    default_ell0_list, dual_upper_bound, dual_upper_bound_optimized, kl_ratio_direct, slope_lower_bound, threshold_kl,
    DualBoundParams, ThresholdProbe,
};
use dithercap::info::{gaussian_capacity, mutual_information};
use dithercap::low_snr::{fisher_information, fisher_tail_upper_bound, low_snr_slope, FisherTailParams};
use dithercap::{ChannelParams, InputDistribution, PowerConstraints, QuadratureSpec};

fn ch(sigma: f64, delta: f64) -> ChannelParams {
    ChannelParams::new(sigma, delta).unwrap()
}

#[test]
fn slope_window_and_invariances() {
    let spec = QuadratureSpec::default();
    for d in [0.01, 0.3, 1.0, 4.0, 30.0, 300.0] {
        let s = low_snr_slope(&ch(1.0, d), &spec).unwrap();
        assert!((0.0..=0.5 + 1e-6).contains(&s), "delta={d}: {s}");
        let scaled = low_snr_slope(&ch(3.0, 3.0 * d), &spec).unwrap();
        assert!(((scaled * 9.0 - s) / s).abs() < 1e-6);
    }
    let c = ch(1.0, 2.0);
    let i0 = fisher_information(0.0, &c, &spec).unwrap().value;
    for x in [-5.0, -1.7, 2.2, 5.0] {
        assert!((fisher_information(x, &c, &spec).unwrap().value - i0).abs() <= 1e-8);
    }
}

#[test]
fn tail_bound_dominates_where_valid() {
    let spec = QuadratureSpec::default();
    for d in [11.0, 20.0, 50.0, 100.0, 1000.0] {
        let c = ch(1.0, d);
        let tp = FisherTailParams::default_for(&c).unwrap();
        let b = fisher_tail_upper_bound(&c, &tp).unwrap();
        assert!(b.slope_bound >= low_snr_slope(&c, &spec).unwrap());
    }
}

#[test]
fn kl_ratio_local_limit_and_data_processing() {
    let spec = QuadratureSpec::default();
    let c = ch(1.0, 1.0);
    let slope = low_snr_slope(&c, &spec).unwrap();
    let r = kl_ratio_direct(1e-3, &c, &spec).unwrap();
    assert!(((r - slope) / slope).abs() < 0.02, "{r} vs {slope}");
    for l in [1u32, 4, 16] {
        let tp = ThresholdProbe::new(l, 5.0, &c).unwrap();
        for x in [tp.x_probe, 0.5 * tp.x_probe, 2.0] {
            let probe = threshold_kl(x, &tp, &c).unwrap() / (x * x);
            let direct = kl_ratio_direct(x, &c, &spec).unwrap();
            assert!(direct >= probe - 1e-9, "l0={l} x={x}: {direct} < {probe}");
            assert!(direct > 0.0 && direct <= 0.5 + 1e-6);
        }
    }
}

#[test]
fn slope_lower_bound_window() {
    for d in [0.2, 1.0, 7.0, 100.0] {
        let b = slope_lower_bound(&ch(1.0, d), &default_ell0_list(), 5.0).unwrap();
        assert!(b.value >= 0.0 && b.value <= 0.5 + 1e-6, "delta={d}: {}", b.value);
        assert!(b.per_ell0.iter().all(|(_, v)| v.is_finite()));
    }
}

#[test]
fn dual_bound_sandwiches_binary_inputs() {
    let spec = QuadratureSpec::default();
    for d in [0.5, 3.0, 30.0] {
        let c = ch(1.0, d);
        let pc = PowerConstraints::bounded(1.0, 1.0).unwrap();
        let ub = dual_upper_bound_optimized(&pc, &c).value;
        let mi = mutual_information(&InputDistribution::antipodal(1.0).unwrap(), &c, &spec)
            .unwrap()
            .value;
        assert!(mi <= ub + 1e-8, "delta={d}: {mi} > {ub}");
    }
    let g = gaussian_capacity(&PowerConstraints::unbounded(1.0).unwrap(), 1.0).unwrap();
    assert!(g > 0.0);
}

#[test]
fn dual_bound_decreases_with_beta_at_large_step() {
    let c = ch(1.0, 1e5);
    let pc = PowerConstraints::bounded(1.0, 1.0).unwrap();
    let mut prev = f64::INFINITY;
    for beta in [0.9, 0.5, 0.1, 1e-2, 1e-4] {
        let v = dual_upper_bound(&pc, &c, &DualBoundParams::new(2.0, beta).unwrap())
            .unwrap()
            .value;
        assert!(v <= prev + 1e-12, "beta={beta}");
        prev = v;
    }
}
