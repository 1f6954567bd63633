use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix};

use super::dense::cholesky_solve;
use super::{GWishartParams, LogNormConst, NormConstMethod};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::Matrix;

/// Stopping rule for the mode search.
#[derive(Clone, Copy, Debug)]
pub struct ModeOptions {
    /// Largest allowed free-entry gradient, scaled by √(D_ii D_jj).
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for ModeOptions {
    fn default() -> Self {
        ModeOptions { tolerance: 1e-8, max_sweeps: 5000 }
    }
}

/// Mode K̂ of the G-Wishart density and its inverse.
#[derive(Clone, Debug)]
pub struct LaplaceMode {
    pub precision: Matrix,
    pub covariance: Matrix,
    pub log_det: f64,
    pub sweeps: usize,
    pub gradient: f64,
}

/// Finds the mode of W_G(δ, D).
///
/// The mode is the unique K with zeros off the graph whose inverse matches
/// D/(δ−2) on the diagonal and on every edge. It is found by cycling over
/// columns and solving each neighbourhood regression against the current
/// covariance (the unpenalized graphical-lasso iteration). `warm` is a
/// covariance to start from, typically the mode of a neighbouring graph.
///
/// The column iteration is fast but its intermediate covariance can stop
/// being positive definite on ill-conditioned problems. It is then retried
/// cold, and failing that the mode is found by iterative proportional
/// scaling, which is slower but stays positive definite throughout.
pub fn find_mode(graph: &Graph, params: &GWishartParams, warm: Option<&Matrix>, opts: &ModeOptions) -> Result<LaplaceMode> {
    let p = graph.p();
    if params.p() != p {
        return Err(Error::input(format!("graph has {p} nodes, G-Wishart is {}-dimensional", params.p())));
    }
    let scale = params.delta() - 2.0;
    let s: Vec<f64> = (0..p * p).map(|x| params.rate()[(x / p, x % p)] / scale).collect();

    if params.rate_is_diagonal() {
        // The diagonal matrix already satisfies every constraint.
        let covariance = DMatrix::from_fn(p, p, |i, j| if i == j { s[i * p + i] } else { 0.0 });
        let precision = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 / s[i * p + i] } else { 0.0 });
        let log_det = -(0..p).map(|i| s[i * p + i].ln()).sum::<f64>();
        return Ok(LaplaceMode { precision, covariance, log_det, sweeps: 0, gradient: 0.0 });
    }

    let nbrs: Vec<Vec<usize>> = (0..p).map(|j| graph.neighbors(j).collect()).collect();
    match column_iteration(&s, &nbrs, warm, opts) {
        Err(Error::Numeric(_)) if warm.is_some() => match column_iteration(&s, &nbrs, None, opts) {
            Err(Error::Numeric(_)) => proportional_scaling(&s, &nbrs, opts),
            other => other,
        },
        Err(Error::Numeric(_)) => proportional_scaling(&s, &nbrs, opts),
        other => other,
    }
}

fn column_iteration(s: &[f64], nbrs: &[Vec<usize>], warm: Option<&Matrix>, opts: &ModeOptions) -> Result<LaplaceMode> {
    let p = nbrs.len();
    let mut w: Vec<f64> = match warm {
        Some(m) if m.nrows() == p && m.ncols() == p => (0..p * p).map(|x| m[(x / p, x % p)]).collect(),
        _ => s.to_vec(),
    };
    for i in 0..p {
        w[i * p + i] = s[i * p + i];
    }
    let mut betas: Vec<Vec<f64>> = nbrs.iter().map(|n| vec![0.0; n.len()]).collect();
    let mut a = vec![0.0; p * p];
    let mut w12 = vec![0.0; p];
    let mut gradient = f64::INFINITY;

    for sweep in 1..=opts.max_sweeps {
        let mut change = 0.0f64;
        for j in 0..p {
            let nb = &nbrs[j];
            let d = nb.len();
            let beta = &mut betas[j];
            if d == 0 {
                for l in (0..p).filter(|&l| l != j) {
                    let old = w[l * p + j];
                    change = change.max(old.abs() / (s[l * p + l] * s[j * p + j]).sqrt());
                    w[l * p + j] = 0.0;
                    w[j * p + l] = 0.0;
                }
                continue;
            }
            for (x, &l) in nb.iter().enumerate() {
                for (y, &m) in nb.iter().enumerate() {
                    a[x * d + y] = w[l * p + m];
                }
                beta[x] = s[l * p + j];
            }
            if !cholesky_solve(&mut a[..d * d], d, beta) {
                return Err(Error::numeric("mode search lost positive definiteness"));
            }
            for l in (0..p).filter(|&l| l != j) {
                let row = &w[l * p..(l + 1) * p];
                w12[l] = nb.iter().zip(beta.iter()).map(|(&m, &b)| row[m] * b).sum();
            }
            for l in (0..p).filter(|&l| l != j) {
                change = change.max((w12[l] - w[l * p + j]).abs() / (s[l * p + l] * s[j * p + j]).sqrt());
                w[l * p + j] = w12[l];
                w[j * p + l] = w12[l];
            }
        }
        if change < opts.tolerance {
            let mode = assemble(p, s, nbrs, &betas, sweep)?;
            gradient = mode.gradient;
            if gradient < opts.tolerance {
                return Ok(mode);
            }
        }
    }
    Err(Error::NoConvergence { sweeps: opts.max_sweeps, gradient })
}

/// Iterative proportional scaling over the edges and isolated nodes. Each
/// step sets the covariance of one edge (or node) to its target by a
/// low-rank change of K, so K stays positive definite with exact zeros off
/// the graph.
fn proportional_scaling(s: &[f64], nbrs: &[Vec<usize>], opts: &ModeOptions) -> Result<LaplaceMode> {
    let p = nbrs.len();
    log::debug!("falling back to proportional scaling");
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    for (i, nb) in nbrs.iter().enumerate() {
        if nb.is_empty() {
            cliques.push(vec![i]);
        }
        cliques.extend(nb.iter().filter(|&&j| j > i).map(|&j| vec![i, j]));
    }
    let target = DMatrix::from_fn(p, p, |i, j| s[i * p + j]);
    let mut k = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 / s[i * p + i] } else { 0.0 });
    let mut sigma = DMatrix::from_fn(p, p, |i, j| if i == j { s[i * p + i] } else { 0.0 });
    let scaled = |sigma: &Matrix, i: usize, j: usize| (sigma[(i, j)] - s[i * p + j]).abs() / (s[i * p + i] * s[j * p + j]).sqrt();
    let mut gradient = f64::INFINITY;

    for sweep in 1..=opts.max_sweeps {
        for c in &cliques {
            let cur = sigma.select_rows(c).select_columns(c);
            let want = target.select_rows(c).select_columns(c);
            let (Some(cur_inv), Some(want_inv)) = (cur.clone().try_inverse(), want.clone().try_inverse()) else {
                return Err(Error::numeric("proportional scaling met a singular block"));
            };
            let delta = &want_inv - &cur_inv;
            for (x, &a) in c.iter().enumerate() {
                for (y, &b) in c.iter().enumerate() {
                    k[(a, b)] += delta[(x, y)];
                }
            }
            // Σ ← Σ − Σ_{·C} Σ_CC⁻¹ (Σ_CC − S_CC) Σ_CC⁻¹ Σ_{C·}
            let cols = sigma.select_columns(c);
            let m = &cur_inv * (&cur - &want) * &cur_inv;
            sigma -= &cols * m * cols.transpose();
        }
        gradient = 0.0;
        for i in 0..p {
            gradient = gradient.max(scaled(&sigma, i, i));
            for &j in &nbrs[i] {
                gradient = gradient.max(scaled(&sigma, i, j));
            }
        }
        if gradient < opts.tolerance {
            let precision = (&k + k.transpose()) * 0.5;
            let chol = Cholesky::new(precision.clone()).ok_or_else(|| Error::numeric("mode is not positive definite"))?;
            let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let covariance = chol.inverse();
            return Ok(LaplaceMode { precision, covariance, log_det, sweeps: sweep, gradient });
        }
    }
    Err(Error::NoConvergence { sweeps: opts.max_sweeps, gradient })
}

/// Builds K̂ from the regression coefficients, so that non-edges are exact
/// zeros, then measures the scaled gradient on the free entries.
fn assemble(p: usize, s: &[f64], nbrs: &[Vec<usize>], betas: &[Vec<f64>], sweeps: usize) -> Result<LaplaceMode> {
    let mut k = DMatrix::zeros(p, p);
    for j in 0..p {
        let resid = s[j * p + j] - nbrs[j].iter().zip(&betas[j]).map(|(&m, &b)| s[m * p + j] * b).sum::<f64>();
        if !(resid > 0.0) {
            return Err(Error::numeric("mode search produced a non-positive conditional variance"));
        }
        let kjj = 1.0 / resid;
        k[(j, j)] = kjj;
        for (&m, &b) in nbrs[j].iter().zip(&betas[j]) {
            k[(m, j)] = -b * kjj;
        }
    }
    let precision = (&k + k.transpose()) * 0.5;
    let chol = Cholesky::new(precision.clone()).ok_or_else(|| Error::numeric("mode is not positive definite"))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let covariance = chol.inverse();
    let mut gradient = 0.0f64;
    for i in 0..p {
        let scaled = |j: usize| (covariance[(i, j)] - s[i * p + j]).abs() / (s[i * p + i] * s[j * p + j]).sqrt();
        gradient = gradient.max(scaled(i));
        for &j in &nbrs[i] {
            gradient = gradient.max(scaled(j));
        }
    }
    Ok(LaplaceMode { precision, covariance, log_det, sweeps, gradient })
}

/// Laplace approximation of log I_G(δ, D) around a mode, using the diagonal
/// of the Hessian in the free entries of K.
pub fn laplace_from_mode(graph: &Graph, params: &GWishartParams, mode: &LaplaceMode) -> f64 {
    let p = graph.p();
    let dm2 = params.delta() - 2.0;
    let sigma = &mode.covariance;
    let h = 0.5 * dm2 * mode.log_det - 0.5 * params.rate().component_mul(&mode.precision).sum();
    let mut log_curv = 0.0;
    for i in 0..p {
        log_curv += (0.5 * dm2 * sigma[(i, i)] * sigma[(i, i)]).ln();
        for j in graph.neighbors(i).filter(|&j| j > i) {
            log_curv += (dm2 * (sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)] * sigma[(i, j)])).ln();
        }
    }
    let m = (p + graph.n_edges()) as f64;
    h + 0.5 * m * (2.0 * PI).ln() - 0.5 * log_curv
}

/// Laplace approximation of log I_G(δ, D), whatever the graph.
pub fn log_norm_laplace(graph: &Graph, params: &GWishartParams) -> Result<LogNormConst> {
    let mode = find_mode(graph, params, None, &ModeOptions::default())?;
    Ok(LogNormConst { value: laplace_from_mode(graph, params, &mode), method: NormConstMethod::Laplace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_rate(p: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Matrix = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
        &a * a.transpose() + DMatrix::identity(p, p) * p as f64
    }

    fn cycle(p: usize) -> Graph {
        let edges: Vec<_> = (0..p).map(|i| (i, (i + 1) % p)).collect();
        Graph::from_edges(p, &edges).unwrap()
    }

    #[test]
    fn mode_is_stationary_with_exact_zeros() {
        let params = GWishartParams::new(5.0, random_rate(6, 1)).unwrap();
        let g = cycle(6);
        let mode = find_mode(&g, &params, None, &ModeOptions::default()).unwrap();
        let target = params.rate() / 3.0;
        for i in 0..6 {
            for j in 0..6 {
                if i == j || g.has_edge(i, j) {
                    assert_abs_diff_eq!(mode.covariance[(i, j)], target[(i, j)], epsilon = 1e-7);
                } else {
                    assert_eq!(mode.precision[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn complete_graph_mode_is_scaled_inverse() {
        let d = random_rate(4, 2);
        let params = GWishartParams::new(4.0, d.clone()).unwrap();
        let mode = find_mode(&Graph::complete(4), &params, None, &ModeOptions::default()).unwrap();
        let want = (d / 2.0).try_inverse().unwrap();
        assert!((mode.precision - want).amax() < 1e-8);
    }

    #[test]
    fn warm_start_reaches_same_mode() {
        let params = GWishartParams::new(3.5, random_rate(7, 3)).unwrap();
        let mut g = cycle(7);
        let first = find_mode(&g, &params, None, &ModeOptions::default()).unwrap();
        g.add_edge(0, 3);
        let cold = find_mode(&g, &params, None, &ModeOptions::default()).unwrap();
        let warm = find_mode(&g, &params, Some(&first.covariance), &ModeOptions::default()).unwrap();
        assert!((cold.precision - warm.precision).amax() < 1e-6);
    }

    #[test]
    fn diagonal_rate_laplace_is_additive_in_edges() {
        // With D diagonal the mode is diagonal for every graph, so each edge
        // contributes the same constant.
        let params = GWishartParams::new(3.0, DMatrix::identity(5, 5)).unwrap();
        let empty = log_norm_laplace(&Graph::empty(5), &params).unwrap().value;
        let one = log_norm_laplace(&Graph::from_edges(5, &[(1, 3)]).unwrap(), &params).unwrap().value;
        let three = log_norm_laplace(&Graph::from_edges(5, &[(0, 1), (1, 2), (3, 4)]).unwrap(), &params).unwrap().value;
        let per_edge = one - empty;
        assert_abs_diff_eq!(per_edge, 0.5 * (2.0 * PI).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(three - empty, 3.0 * per_edge, epsilon = 1e-12);
    }

    #[test]
    fn empty_graph_factorizes() {
        // The empty graph splits into p one-dimensional problems.
        let d = random_rate(4, 4);
        let params = GWishartParams::new(4.0, d.clone()).unwrap();
        let joint = log_norm_laplace(&Graph::empty(4), &params).unwrap().value;
        let parts: f64 = (0..4)
            .map(|i| {
                let one = GWishartParams::new(4.0, DMatrix::from_element(1, 1, d[(i, i)])).unwrap();
                log_norm_laplace(&Graph::empty(1), &one).unwrap().value
            })
            .sum();
        assert_abs_diff_eq!(joint, parts, epsilon = 1e-10);
    }

    #[test]
    fn proportional_scaling_agrees_with_column_iteration() {
        let params = GWishartParams::new(3.5, random_rate(7, 6)).unwrap();
        let mut g = cycle(7);
        g.add_edge(1, 4);
        let s: Vec<f64> = params.rate().iter().map(|v| v / 1.5).collect();
        let nbrs: Vec<Vec<usize>> = (0..7).map(|j| g.neighbors(j).collect()).collect();
        let fast = column_iteration(&s, &nbrs, None, &ModeOptions::default()).unwrap();
        let slow = proportional_scaling(&s, &nbrs, &ModeOptions::default()).unwrap();
        assert!((fast.precision - &slow.precision).amax() < 1e-6);
        assert_abs_diff_eq!(fast.log_det, slow.log_det, epsilon = 1e-8);
        assert_eq!(slow.precision[(0, 3)], 0.0);
    }

    #[test]
    fn reports_non_convergence() {
        let params = GWishartParams::new(3.0, random_rate(5, 5)).unwrap();
        let opts = ModeOptions { tolerance: 1e-8, max_sweeps: 1 };
        let err = find_mode(&cycle(5), &params, None, &opts).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }), "{err}");
    }
}
