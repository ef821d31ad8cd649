pub mod quadrature;
pub mod special;

pub use quadrature::{gauss_legendre, integrate, integrate_with_breakpoints, Integral, QuadratureSpec};
pub use special::{binary_entropy, gaussian_q, gaussian_q_bounds, ln_q, ln_q_diff, q_diff};

/// Central difference `(f(x+h) - f(x-h)) / 2h`.
pub fn finite_diff<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_differences() {
        assert!((finite_diff(|x| x * x, 3.0, 1e-4) - 6.0).abs() < 1e-6);
        assert_eq!(finite_diff(|_| 4.2, 1.0, 0.1), 0.0);
        let d = finite_diff(gaussian_q, 0.0, 1e-4);
        assert!((d + special::FRAC_1_SQRT_2PI).abs() < 1e-6);
    }
}
