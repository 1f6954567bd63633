use std::f64::consts::{LN_2, PI};

use statrs::function::gamma::ln_gamma;

use super::GWishartParams;

/// log Γ_p(a) = p(p−1)/4 · log π + Σ_{j=1..p} log Γ(a + (1−j)/2).
pub fn log_multivariate_gamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    pf * (pf - 1.0) / 4.0 * PI.ln() + (1..=p).map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

/// Exact log normalizing constant for the complete graph on `p` nodes:
/// the Wishart integral with ν = δ + p − 1 degrees of freedom.
pub fn log_norm_complete(params: &GWishartParams) -> f64 {
    let p = params.p() as f64;
    let nu = params.delta() + p - 1.0;
    nu * p / 2.0 * LN_2 + log_multivariate_gamma(params.p(), nu / 2.0) - nu / 2.0 * params.log_det_rate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn one_dimensional_gamma_integral() {
        let one = GWishartParams::new(3.0, DMatrix::identity(1, 1)).unwrap();
        // ∫ k^{1/2} e^{-k/2} dk = 2^{3/2} Γ(3/2) = √(2π)
        assert_abs_diff_eq!(log_norm_complete(&one), 0.5 * (2.0 * PI).ln(), epsilon = 1e-12);
        let two = GWishartParams::new(3.0, DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert_abs_diff_eq!(log_norm_complete(&two), log_norm_complete(&one) - 1.5 * LN_2, epsilon = 1e-12);
    }

    #[test]
    fn multivariate_gamma_reduces() {
        assert_abs_diff_eq!(log_multivariate_gamma(1, 2.5), ln_gamma(2.5), epsilon = 1e-14);
        let want = 0.5 * PI.ln() + ln_gamma(2.0) + ln_gamma(1.5);
        assert_abs_diff_eq!(log_multivariate_gamma(2, 2.0), want, epsilon = 1e-14);
    }
}
