use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::dense::{cholesky_in_place, solve_lower, solve_lower_transpose};
use super::laplace::{find_mode, ModeOptions};
use super::GWishartParams;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::Matrix;

pub const DEFAULT_PRECISION_SWEEPS: usize = 20;

/// Draws K ~ W_G(δ, D) by `sweeps` rounds of column-wise block Gibbs,
/// started at the mode.
pub fn sample_gwishart<R: Rng + ?Sized>(graph: &Graph, params: &GWishartParams, sweeps: usize, rng: &mut R) -> Result<Matrix> {
    let mode = find_mode(graph, params, None, &ModeOptions::default())?;
    sample_gwishart_from(graph, params, &mode.precision, sweeps, rng)
}

/// Block Gibbs from a given start, which must respect the zero pattern of
/// `graph` and be positive definite.
///
/// Each column update draws the Schur complement c ~ Gamma(δ/2, rate D_jj/2)
/// and the free off-diagonal entries from their Gaussian conditional, then
/// refreshes the covariance by a rank-one correction.
pub fn sample_gwishart_from<R: Rng + ?Sized>(
    graph: &Graph,
    params: &GWishartParams,
    start: &Matrix,
    sweeps: usize,
    rng: &mut R,
) -> Result<Matrix> {
    let p = graph.p();
    let d = params.rate();
    let mut k: Vec<f64> = (0..p * p).map(|x| start[(x / p, x % p)]).collect();
    for i in 0..p {
        for j in 0..p {
            if i != j && !graph.has_edge(i, j) && k[i * p + j] != 0.0 {
                return Err(Error::input("start matrix is not zero off the graph"));
            }
        }
    }
    let mut sigma = inverse(&k, p)?;
    let nbrs: Vec<Vec<usize>> = (0..p).map(|j| graph.neighbors(j).collect()).collect();
    let mut b = vec![0.0; p * p];
    let mut a = vec![0.0; p * p];
    let mut kn = vec![0.0; p];
    let mut bk = vec![0.0; p];

    for _ in 0..sweeps {
        for j in 0..p {
            let sjj = sigma[j * p + j];
            for l in 0..p {
                for m in 0..p {
                    b[l * p + m] = sigma[l * p + m] - sigma[l * p + j] * sigma[j * p + m] / sjj;
                }
            }
            let djj = d[(j, j)];
            let c = Gamma::new(params.delta() / 2.0, 2.0 / djj)
                .map_err(|e| Error::numeric(format!("gamma draw: {e}")))?
                .sample(rng);
            let nb = &nbrs[j];
            let q = nb.len();
            let mut quad = 0.0;
            if q > 0 {
                for (x, &l) in nb.iter().enumerate() {
                    for (y, &m) in nb.iter().enumerate() {
                        a[x * q + y] = djj * b[l * p + m];
                    }
                }
                if !cholesky_in_place(&mut a[..q * q], q) {
                    return Err(Error::numeric("precision sampler lost positive definiteness"));
                }
                // mean = −P⁻¹ D_Nj, draw = mean + L⁻ᵀ ε
                for (x, &l) in nb.iter().enumerate() {
                    kn[x] = -d[(l, j)];
                }
                solve_lower(&a[..q * q], q, &mut kn[..q]);
                for v in kn[..q].iter_mut() {
                    let e: f64 = StandardNormal.sample(rng);
                    *v += e;
                }
                solve_lower_transpose(&a[..q * q], q, &mut kn[..q]);
                for (x, &l) in nb.iter().enumerate() {
                    for (y, &m) in nb.iter().enumerate() {
                        quad += kn[x] * b[l * p + m] * kn[y];
                    }
                }
            }
            for (x, &l) in nb.iter().enumerate() {
                k[l * p + j] = kn[x];
                k[j * p + l] = kn[x];
            }
            k[j * p + j] = c + quad;

            for l in 0..p {
                bk[l] = if l == j { 0.0 } else { nb.iter().zip(&kn).map(|(&m, &v)| b[l * p + m] * v).sum() };
            }
            for l in 0..p {
                for m in 0..p {
                    sigma[l * p + m] = if l == j || m == j {
                        0.0
                    } else {
                        b[l * p + m] + bk[l] * bk[m] / c
                    };
                }
            }
            sigma[j * p + j] = 1.0 / c;
            for l in (0..p).filter(|&l| l != j) {
                sigma[l * p + j] = -bk[l] / c;
                sigma[j * p + l] = -bk[l] / c;
            }
        }
        sigma = inverse(&k, p)?;
    }
    Ok(DMatrix::from_row_slice(p, p, &k))
}

fn inverse(k: &[f64], p: usize) -> Result<Vec<f64>> {
    let m = DMatrix::from_row_slice(p, p, k);
    let chol = Cholesky::new(m).ok_or_else(|| Error::numeric("precision matrix is not positive definite"))?;
    let inv = chol.inverse();
    Ok((0..p * p).map(|x| inv[(x / p, x % p)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn complete_graph_mean_matches_wishart() {
        // Complete graph: W(δ + p − 1, D⁻¹) with mean (δ + p − 1) D⁻¹.
        let d = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.5, 0.3, 0.0, 0.3, 1.0]);
        let params = GWishartParams::new(4.0, d.clone()).unwrap();
        let g = Graph::complete(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut k = find_mode(&g, &params, None, &ModeOptions::default()).unwrap().precision;
        let mut mean = DMatrix::zeros(3, 3);
        let draws = 20_000;
        for _ in 0..draws {
            k = sample_gwishart_from(&g, &params, &k, 1, &mut rng).unwrap();
            mean += &k;
        }
        mean /= draws as f64;
        let want = d.try_inverse().unwrap() * 6.0;
        assert!((mean - &want).amax() < 0.05 * want.amax(), "mean off");
    }

    #[test]
    fn respects_zero_pattern() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let params = GWishartParams::new(3.0, DMatrix::identity(4, 4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = sample_gwishart(&g, &params, DEFAULT_PRECISION_SWEEPS, &mut rng).unwrap();
        assert_eq!(k[(0, 2)], 0.0);
        assert_eq!(k[(0, 3)], 0.0);
        assert_eq!(k[(1, 3)], 0.0);
        assert!(Cholesky::new(k.clone()).is_some());
        assert_eq!(k, k.transpose());
    }

    #[test]
    fn empty_graph_diagonal_is_gamma() {
        // Empty graph: K_ii ~ Gamma(δ/2, rate D_ii/2), mean δ / D_ii.
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0]));
        let params = GWishartParams::new(5.0, d).unwrap();
        let g = Graph::empty(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut k = find_mode(&g, &params, None, &ModeOptions::default()).unwrap().precision;
        let (mut m0, mut m1) = (0.0, 0.0);
        let draws = 20_000;
        for _ in 0..draws {
            k = sample_gwishart_from(&g, &params, &k, 1, &mut rng).unwrap();
            m0 += k[(0, 0)];
            m1 += k[(1, 1)];
        }
        assert!((m0 / draws as f64 - 5.0).abs() < 0.1);
        assert!((m1 / draws as f64 - 1.25).abs() < 0.025);
    }
}
