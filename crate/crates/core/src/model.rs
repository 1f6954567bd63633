//! Shared model types and the deterministic maps used by every sampler.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::scalar::Real;
use crate::Matrix;

/// Prior hyperparameters shared by the models.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Hyperparameters {
    pub s2_beta: f64,
    pub s2_theta: f64,
    pub a_nu: f64,
    pub b_nu: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
    /// G-Wishart degrees of freedom.
    pub delta: f64,
    /// G-Wishart rate matrix; `None` means the identity.
    pub rate: Option<Matrix>,
    /// Prior probability that a group's block label is tied to the baseline.
    pub gamma: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            s2_beta: 1.0,
            s2_theta: 1.0,
            a_nu: 2.0,
            b_nu: 2.0,
            a_alpha: 2.0,
            b_alpha: 2.0,
            delta: 3.0,
            rate: None,
            gamma: 0.5,
        }
    }
}

impl Hyperparameters {
    pub fn rate_matrix(&self, p: usize) -> Matrix {
        self.rate.clone().unwrap_or_else(|| DMatrix::identity(p, p))
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let positive = [
            ("s2_beta", self.s2_beta),
            ("s2_theta", self.s2_theta),
            ("a_nu", self.a_nu),
            ("b_nu", self.b_nu),
            ("a_alpha", self.a_alpha),
            ("b_alpha", self.b_alpha),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.delta > 2.0) {
            return Err(Error::input(format!("delta must exceed 2, got {}", self.delta)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::input(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if let Some(d) = &self.rate {
            if d.nrows() != p || d.ncols() != p {
                return Err(Error::input(format!("rate matrix is {}x{}, expected {p}x{p}", d.nrows(), d.ncols())));
            }
            if (d - d.transpose()).amax() > 1e-10 * d.amax().max(1.0) {
                return Err(Error::input("rate matrix is not symmetric"));
            }
            if Cholesky::new(d.clone()).is_none() {
                return Err(Error::input("rate matrix is not positive definite"));
            }
        }
        Ok(())
    }
}

/// Block interaction strengths and node popularities of the degree-corrected
/// blockmodel.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BlockParams {
    /// One strength per block of `z`.
    pub beta_star: Vec<f64>,
    /// One popularity per cluster of `c`.
    pub theta_star: Vec<f64>,
}

impl BlockParams {
    /// Node-level popularities θᵢ = θ*_{cᵢ}.
    pub fn theta(&self, c: &Partition) -> Vec<f64> {
        c.labels().iter().map(|&m| self.theta_star[m]).collect()
    }

    /// Node-level strengths βᵢ = β*_{zᵢ}.
    pub fn beta(&self, z: &Partition) -> Vec<f64> {
        z.labels().iter().map(|&k| self.beta_star[k]).collect()
    }
}

/// n × p observations with the cross-product YᵀY cached at construction.
#[derive(Clone, Debug)]
pub struct DataMatrix {
    values: Matrix,
    cross_product: Matrix,
}

impl DataMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::input(format!("non-finite value at row {}, column {}", row + 1, col + 1)));
        }
        let cross_product = values.tr_mul(&values);
        Ok(DataMatrix { values, cross_product })
    }

    /// A data set with no observations on `p` variables.
    pub fn empty(p: usize) -> Self {
        DataMatrix { values: DMatrix::zeros(0, p), cross_product: DMatrix::zeros(p, p) }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::input("rows have differing lengths"));
        }
        DataMatrix::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// YᵀY.
    pub fn cross_product(&self) -> &Matrix {
        &self.cross_product
    }
}

/// Symmetric p × p field of probit means; the diagonal is unused (zero).
#[derive(Clone, Debug, PartialEq)]
pub struct MuField<T> {
    p: usize,
    values: Vec<T>,
}

impl<T: Real> MuField<T> {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.p + j]
    }

    pub fn p(&self) -> usize {
        self.p
    }
}

/// μᵢⱼ = θᵢ + θⱼ + βᵢ·1[zᵢ = zⱼ].
pub fn compute_mu<T: Real>(theta: &[T], beta: &[T], z: &Partition) -> Result<MuField<T>> {
    let p = z.p();
    if theta.len() != p || beta.len() != p {
        return Err(Error::input(format!(
            "length mismatch: theta {}, beta {}, partition {p}",
            theta.len(),
            beta.len()
        )));
    }
    let mut values = vec![T::zero(); p * p];
    for i in 0..p {
        for j in (i + 1)..p {
            let mut mu = theta[i] + theta[j];
            if z.same_block(i, j) {
                if beta[i] != beta[j] {
                    return Err(Error::input(format!(
                        "nodes {} and {} share a block but have different strengths",
                        i + 1,
                        j + 1
                    )));
                }
                mu = mu + beta[i];
            }
            values[i * p + j] = mu;
            values[j * p + i] = mu;
        }
    }
    Ok(MuField { p, values })
}

/// log p(Y | Ω) for rows of Y i.i.d. N(0, Ω⁻¹).
pub fn gaussian_loglik(data: &DataMatrix, omega: &Matrix) -> Result<f64> {
    let p = data.p();
    if omega.nrows() != p || omega.ncols() != p {
        return Err(Error::input("precision matrix dimension does not match the data"));
    }
    let chol = Cholesky::new(omega.clone()).ok_or_else(|| Error::numeric("precision matrix is not positive definite"))?;
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let n = data.n() as f64;
    let trace = omega.component_mul(data.cross_product()).sum();
    Ok(-0.5 * n * p as f64 * (2.0 * PI).ln() + 0.5 * n * log_det - 0.5 * trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn mu_examples() {
        let mu = compute_mu(&[0.0, 0.0], &[1.0, 1.0], &Partition::new(&[1, 1])).unwrap();
        assert_eq!(mu.get(0, 1), 1.0);
        let mu = compute_mu(&[0.5, -0.5], &[2.0, 3.0], &Partition::new(&[1, 2])).unwrap();
        assert_eq!(mu.get(0, 1), 0.0);
        let mu = compute_mu(&[1.0, 1.0, 1.0], &[2.0, 2.0, 5.0], &Partition::new(&[1, 1, 2])).unwrap();
        assert_eq!((mu.get(0, 1), mu.get(0, 2), mu.get(1, 2)), (4.0, 2.0, 2.0));
        assert_eq!(mu.get(2, 1), mu.get(1, 2));
    }

    #[test]
    fn mu_rejects_bad_input() {
        assert!(compute_mu(&[0.0], &[1.0, 1.0], &Partition::new(&[1, 1])).is_err());
        assert!(compute_mu(&[0.0, 0.0], &[1.0, 2.0], &Partition::new(&[1, 1])).is_err());
    }

    #[test]
    fn loglik_examples() {
        let y = DataMatrix::from_rows(&[vec![0.0]]).unwrap();
        let one = DMatrix::identity(1, 1);
        assert_abs_diff_eq!(gaussian_loglik(&y, &one).unwrap(), -0.5 * (2.0 * PI).ln(), epsilon = 1e-14);
        let y = DataMatrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        assert_abs_diff_eq!(gaussian_loglik(&y, &one).unwrap(), -(2.0 * PI).ln() - 1.0, epsilon = 1e-14);
    }

    #[test]
    fn loglik_matches_rowwise_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Matrix = DMatrix::from_fn(3, 3, |_, _| StandardNormal.sample(&mut rng));
        let omega: Matrix = &a * a.transpose() + DMatrix::identity(3, 3);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let data = DataMatrix::from_rows(&rows).unwrap();

        // Brute force: Σ log N(yᵢ | 0, Ω⁻¹) with Σ = Ω⁻¹ formed explicitly.
        let sigma = omega.clone().try_inverse().unwrap();
        let det_sigma = sigma.determinant();
        let sigma_inv = sigma.clone().try_inverse().unwrap();
        let brute: f64 = rows
            .iter()
            .map(|r| {
                let y = nalgebra::DVector::from_column_slice(r);
                let quad = (y.transpose() * &sigma_inv * &y)[(0, 0)];
                -1.5 * (2.0 * PI).ln() - 0.5 * det_sigma.ln() - 0.5 * quad
            })
            .sum();
        assert_abs_diff_eq!(gaussian_loglik(&data, &omega).unwrap(), brute, epsilon = 1e-10);

        // Row order does not matter.
        let mut rev = rows.clone();
        rev.reverse();
        let data_rev = DataMatrix::from_rows(&rev).unwrap();
        assert_abs_diff_eq!(
            gaussian_loglik(&data_rev, &omega).unwrap(),
            gaussian_loglik(&data, &omega).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn loglik_rejects_non_pd() {
        let y = DataMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(gaussian_loglik(&y, &bad), Err(Error::Numeric(_))));
    }

    #[test]
    fn data_rejects_nan() {
        let err = DataMatrix::from_rows(&[vec![0.0, 1.0], vec![f64::NAN, 0.0]]).unwrap_err();
        assert!(err.to_string().contains("row 2, column 1"), "{err}");
    }

    #[test]
    fn default_hyperparameters_validate() {
        let h = Hyperparameters::default();
        assert!(h.validate(4).is_ok());
        let bad = Hyperparameters { delta: 2.0, ..Hyperparameters::default() };
        assert!(bad.validate(4).is_err());
        let bad = Hyperparameters { gamma: 1.0, ..Hyperparameters::default() };
        assert!(bad.validate(4).is_err());
    }
}
