//! Chinese-restaurant-process predictives, Dirichlet-process concentration
//! updates and the prior probability of a partition.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::scalar::Real;

/// Table sizes seen by one arriving customer, and the concentration.
#[derive(Clone, Debug, PartialEq)]
pub struct CrpCounts<T> {
    counts: Vec<usize>,
    concentration: T,
}

impl<T: Real> CrpCounts<T> {
    pub fn new(counts: Vec<usize>, concentration: T) -> Result<Self> {
        if counts.contains(&0) {
            return Err(Error::input("CRP table sizes must be positive"));
        }
        if !(concentration > T::zero()) {
            return Err(Error::input(format!("concentration must be positive, got {concentration}")));
        }
        Ok(CrpCounts { counts, concentration })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn concentration(&self) -> T {
        self.concentration
    }
}

/// Probabilities of joining each existing table, then a new one.
pub fn crp_predictive<T: Real>(counts: &CrpCounts<T>) -> Vec<T> {
    if counts.counts.is_empty() {
        return vec![T::one()];
    }
    let denom = T::from_count(counts.total()) + counts.concentration;
    let mut out: Vec<T> = counts.counts.iter().map(|&c| T::from_count(c) / denom).collect();
    out.push(counts.concentration / denom);
    out
}

/// Predictive for the shared-label multigraph prior. `pooled` holds the
/// per-block counts over baseline labels and untied group labels, with the
/// customers being updated already removed; the form is the single-graph
/// one applied to the pooled counts.
pub fn multi_crp_predictive<T: Real>(pooled: &CrpCounts<T>) -> Vec<T> {
    crp_predictive(pooled)
}

/// Unnormalized log predictive weights, appended to `out`: log n_k for each
/// table, then log of the concentration.
pub fn crp_log_weights(sizes: &[usize], concentration: f64, out: &mut Vec<f64>) {
    out.extend(sizes.iter().map(|&s| (s as f64).ln()));
    out.push(concentration.ln());
}

/// Weight π of the Γ(a + K, ·) component in the concentration update given
/// the auxiliary t.
pub fn concentration_mixture_weight(n_blocks: usize, customers: usize, a: f64, b: f64, t: f64) -> f64 {
    let odds = (a + n_blocks as f64 - 1.0) / (customers as f64 * (b - t.ln()));
    odds / (1.0 + odds)
}

/// Draws the concentration given the auxiliary t.
pub fn sample_concentration_given_t<R: Rng + ?Sized>(n_blocks: usize, customers: usize, a: f64, b: f64, t: f64, rng: &mut R) -> f64 {
    let pi = concentration_mixture_weight(n_blocks, customers, a, b, t);
    let rate = b - t.ln();
    let shape = if rng.random::<f64>() < pi { a + n_blocks as f64 } else { a + n_blocks as f64 - 1.0 };
    // shape can only reach 0 when a + K − 1 = 0, which a > 0 and K ≥ 1 exclude
    Gamma::new(shape, 1.0 / rate).expect("valid gamma parameters").sample(rng)
}

/// Auxiliary-variable Gibbs update of a Dirichlet-process concentration
/// under a Gamma(a, rate b) prior, given K occupied tables among m customers.
pub fn update_concentration<R: Rng + ?Sized>(
    n_blocks: usize,
    customers: usize,
    a: f64,
    b: f64,
    current: f64,
    rng: &mut R,
) -> f64 {
    debug_assert!(n_blocks >= 1 && customers >= 1);
    let t = Beta::new(current + 1.0, customers as f64).expect("valid beta parameters").sample(rng);
    // Beta draws can underflow to 0 for tiny concentrations.
    let t = t.max(f64::MIN_POSITIVE);
    sample_concentration_given_t(n_blocks, customers, a, b, t, rng)
}

/// log p(z | ν) = log[ν^K ∏ₖ(nₖ−1)! / ∏_{i<p}(ν+i)].
pub fn log_prior_partition<T: Real>(z: &Partition, nu: T) -> T {
    let mut out = T::from_count(z.n_blocks()) * nu.ln();
    for size in z.sizes() {
        for i in 1..size {
            out = out + T::from_count(i).ln();
        }
    }
    for i in 0..z.p() {
        out = out - (nu + T::from_count(i)).ln();
    }
    out
}

const GL_NODES: usize = 256;

/// Gauss–Legendre nodes and weights on [−1, 1].
fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_rule(GL_NODES))
}

pub(crate) fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            // P_n(x) and P_n'(x) by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            deriv = nf * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / deriv;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * deriv * deriv);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl_integrate(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (nodes, weights) = gauss_legendre();
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    half * nodes.iter().zip(weights).map(|(&x, &w)| w * f(mid + half * x)).sum::<f64>()
}

/// Adaptive Gauss–Legendre with interval halving on [lo, hi].
pub(crate) fn integrate(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, rel_tol: f64) -> Result<f64> {
    fn rec(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, whole: f64, tol: f64, depth: usize) -> Result<f64> {
        let mid = 0.5 * (lo + hi);
        let left = gl_integrate(f, lo, mid);
        let right = gl_integrate(f, mid, hi);
        let halves = left + right;
        let err = (halves - whole).abs();
        if err <= tol {
            return Ok(halves);
        }
        if depth == 0 {
            return Err(Error::Quadrature { estimate: halves, error: err });
        }
        Ok(rec(f, lo, mid, left, tol / 2.0, depth - 1)? + rec(f, mid, hi, right, tol / 2.0, depth - 1)?)
    }
    let whole = gl_integrate(f, lo, hi);
    let tol = rel_tol * whole.abs().max(f64::MIN_POSITIVE);
    rec(f, lo, hi, whole, tol, 40)
}

/// p(z*) = ∫ p(z* | ν) Γ(ν | a, rate b) dν, integrated on u = ν/(1+ν).
pub fn prior_partition_marginal(z_star: &Partition, a_nu: f64, b_nu: f64) -> Result<f64> {
    if !(a_nu > 0.0 && b_nu > 0.0) {
        return Err(Error::input("gamma prior parameters must be positive"));
    }
    if z_star.p() <= 1 {
        return Ok(1.0);
    }
    let log_norm = a_nu * b_nu.ln() - ln_gamma(a_nu);
    let integrand = |u: f64| {
        if u <= 0.0 || u >= 1.0 {
            return 0.0;
        }
        let nu = u / (1.0 - u);
        let log_f = log_prior_partition(z_star, nu) + log_norm + (a_nu - 1.0) * nu.ln() - b_nu * nu - 2.0 * (1.0 - u).ln();
        log_f.exp()
    };
    integrate(&integrand, 0.0, 1.0, 1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::set_partitions;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn predictive_examples() {
        let p = crp_predictive(&CrpCounts::new(vec![2, 1], 1.0).unwrap());
        assert_eq!(p, vec![0.5, 0.25, 0.25]);
        let p = crp_predictive(&CrpCounts::new(vec![5, 5], 2.0).unwrap());
        for (got, want) in p.iter().zip([5.0 / 12.0, 5.0 / 12.0, 2.0 / 12.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        let p = crp_predictive(&CrpCounts::new(vec![1], 1e-300).unwrap());
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-15);
        assert_eq!(crp_predictive(&CrpCounts::new(vec![], 1.0).unwrap()), vec![1.0]);
        let p = multi_crp_predictive(&CrpCounts::new(vec![3, 1], 2.0f32).unwrap());
        for (got, want) in p.iter().zip([0.5f32, 1.0 / 6.0, 1.0 / 3.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(CrpCounts::new(vec![0, 1], 1.0).is_err());
        assert!(CrpCounts::new(vec![1], 0.0).is_err());
    }

    #[test]
    fn mixture_weight_example() {
        let pi = concentration_mixture_weight(1, 10, 2.0, 2.0, (-2.0f64).exp());
        assert_abs_diff_eq!(pi, 1.0 / 21.0, epsilon = 1e-15);
    }

    #[test]
    fn mixture_draws_match_analytic_mean() {
        let (a, b, k, m, t) = (2.0, 2.0, 3, 5, 0.3f64);
        let pi = concentration_mixture_weight(k, m, a, b, t);
        let rate = b - t.ln();
        let want = pi * (a + k as f64) / rate + (1.0 - pi) * (a + k as f64 - 1.0) / rate;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_concentration_given_t(k, m, a, b, t, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean / want - 1.0).abs() < 0.01, "{mean} vs {want}");
    }

    #[test]
    fn concentration_update_recovers_gamma_prior() {
        // Alternate a CRP seating of m customers given ν with ν given K; the
        // ν-marginal is the Γ(2, 2) prior, mean 1 and variance 1/2.
        let (a, b, m) = (2.0, 2.0, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut nu = 1.0;
        let iters = 40_000;
        let mut draws = Vec::with_capacity(iters);
        for _ in 0..iters {
            let mut sizes: Vec<usize> = Vec::new();
            for _ in 0..m {
                let mut w = Vec::new();
                crp_log_weights(&sizes, nu, &mut w);
                let k = crate::probit::sample_log_categorical(&w, &mut rng);
                if k == sizes.len() {
                    sizes.push(1);
                } else {
                    sizes[k] += 1;
                }
            }
            nu = update_concentration(sizes.len(), m, a, b, nu, &mut rng);
            draws.push(nu);
        }
        let mean = draws.iter().sum::<f64>() / iters as f64;
        let batch = 200;
        let means: Vec<f64> = draws.chunks(batch).map(|c| c.iter().sum::<f64>() / batch as f64).collect();
        let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
        let se = (var / means.len() as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn log_prior_examples() {
        assert_abs_diff_eq!(log_prior_partition(&Partition::new(&[1, 1, 1]), 1.0), (1.0f64 / 3.0).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(log_prior_partition(&Partition::new(&[1, 2]), 1.0), 0.5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn prior_sums_to_one() {
        for p in 1..=5 {
            for nu in [0.1f64, 1.0, 10.0] {
                let total: f64 = set_partitions(p).iter().map(|z| log_prior_partition(z, nu).exp()).sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre_rule(8);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        let x14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_abs_diff_eq!(x14, 2.0 / 15.0, epsilon = 1e-14);
        let (_, w) = gauss_legendre();
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn marginal_examples() {
        assert_eq!(prior_partition_marginal(&Partition::single_block(1), 2.0, 2.0).unwrap(), 1.0);

        // E[1/(ν+1)] under Γ(2, 2) by composite Simpson on ν.
        let f = |v: f64| 4.0 * v * (-2.0 * v).exp() / (1.0 + v);
        let (hi, n) = (60.0, 600_000);
        let h = hi / n as f64;
        let simpson = (0..=n)
            .map(|i| {
                let c = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                c * f(i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0;
        let got = prior_partition_marginal(&Partition::single_block(2), 2.0, 2.0).unwrap();
        assert_abs_diff_eq!(got, simpson, epsilon = 1e-10);

        let total: f64 = set_partitions(3).iter().map(|z| prior_partition_marginal(z, 2.0, 2.0).unwrap()).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn marginal_ignores_labels() {
        let a = prior_partition_marginal(&Partition::new(&[1, 1, 2, 3]), 1.5, 0.5).unwrap();
        let b = prior_partition_marginal(&Partition::new(&[3, 3, 1, 2]), 1.5, 0.5).unwrap();
        assert_eq!(a, b);
    }
}
