//! Baseline partition model: a Wishart prior whose scale matrix is the
//! block-diagonal mask of the inverse scatter matrix, with a CRP on the
//! blocks. Partition weights are available in closed form.

use nalgebra::Cholesky;
use rand::Rng;

use crate::crp::{crp_log_weights, update_concentration};
use crate::error::{Error, Result};
use crate::model::{DataMatrix, Hyperparameters};
use crate::partition::{first_appearance_map, Partition, Tables};
use crate::probit::sample_log_categorical;
use crate::Matrix;

/// Cached scatter matrix and its inverse.
#[derive(Clone, Debug)]
pub struct SunModel {
    n: usize,
    scatter: Matrix,
    scatter_inv: Matrix,
    delta_prime: f64,
}

impl SunModel {
    /// Requires n ≥ p so that YᵀY is invertible.
    pub fn new(data: &DataMatrix) -> Result<Self> {
        if data.n() < data.p() {
            return Err(Error::input(format!(
                "the baseline model needs at least as many observations as variables (n = {}, p = {})",
                data.n(),
                data.p()
            )));
        }
        SunModel::from_scatter(data.cross_product().clone(), data.n())
    }

    /// From a scatter matrix U directly, with δ′ = max(p, n).
    pub fn from_scatter(scatter: Matrix, n: usize) -> Result<Self> {
        let p = scatter.nrows();
        let chol = Cholesky::new(scatter.clone()).ok_or_else(|| Error::numeric("scatter matrix is not positive definite"))?;
        Ok(SunModel { n, scatter_inv: chol.inverse(), scatter, delta_prime: p.max(n) as f64 })
    }

    pub fn p(&self) -> usize {
        self.scatter.nrows()
    }

    pub fn delta_prime(&self) -> f64 {
        self.delta_prime
    }

    /// (n/2)·log|D(z)| − ((n+δ′)/2)·log|I + D(z)U|, where D(z) keeps the
    /// within-block entries of U⁻¹.
    pub fn log_partition_weight(&self, z: &Partition) -> Result<f64> {
        let w = self.weight_labels(z.labels());
        if w == f64::NEG_INFINITY {
            return Err(Error::numeric("masked scale matrix is not positive definite"));
        }
        Ok(w)
    }

    /// As [`Self::log_partition_weight`] on raw labels; −∞ when the masked
    /// matrix is not positive definite.
    fn weight_labels(&self, labels: &[usize]) -> f64 {
        // log|I + DU| = log|D| + log|D⁻¹ + U|, and D⁻¹ is block diagonal.
        let p = self.p();
        let n_labels = labels.iter().max().map_or(0, |m| m + 1);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let mut log_det_d = 0.0;
        let mut m = self.scatter.clone();
        for block in members.iter().filter(|b| !b.is_empty()) {
            let sub = Matrix::from_fn(block.len(), block.len(), |a, b| self.scatter_inv[(block[a], block[b])]);
            let Some(chol) = Cholesky::new(sub) else {
                return f64::NEG_INFINITY;
            };
            log_det_d += 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let inv = chol.inverse();
            for (a, &i) in block.iter().enumerate() {
                for (b, &j) in block.iter().enumerate() {
                    m[(i, j)] += inv[(a, b)];
                }
            }
        }
        debug_assert_eq!(m.nrows(), p);
        let Some(chol) = Cholesky::new(m) else {
            return f64::NEG_INFINITY;
        };
        let log_det_m = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let n = self.n as f64;
        0.5 * n * log_det_d - 0.5 * (n + self.delta_prime) * (log_det_d + log_det_m)
    }
}

#[derive(Clone, Debug)]
pub struct SunOptions {
    pub update_nu: bool,
}

impl Default for SunOptions {
    fn default() -> Self {
        SunOptions { update_nu: true }
    }
}

#[derive(Clone, Debug)]
pub struct SunState {
    z: Vec<usize>,
    pub nu: f64,
}

impl SunState {
    pub fn new(z: &Partition, nu: f64) -> Self {
        SunState { z: z.labels().to_vec(), nu }
    }

    pub fn z(&self) -> Partition {
        Partition::new(&self.z)
    }

    pub fn n_blocks(&self) -> usize {
        self.z.iter().max().map_or(0, |m| m + 1)
    }
}

pub struct SunSampler {
    model: SunModel,
    hyper: Hyperparameters,
    opts: SunOptions,
}

impl SunSampler {
    pub fn new(model: SunModel, hyper: Hyperparameters, opts: SunOptions) -> Self {
        SunSampler { model, hyper, opts }
    }

    pub fn model(&self) -> &SunModel {
        &self.model
    }

    pub fn initial_state(&self) -> SunState {
        SunState::new(&Partition::single_block(self.model.p()), 1.0)
    }

    /// Gibbs scan over zᵢ, then the concentration update.
    pub fn sweep<R: Rng + ?Sized>(&self, s: &mut SunState, rng: &mut R) -> Result<()> {
        let p = self.model.p();
        let mut tables = Tables::from_labels(&s.z, s.n_blocks());
        let mut weights = Vec::with_capacity(p + 1);
        for i in 0..p {
            if let Some(vac) = tables.remove(s.z[i]) {
                vac.relabel(&mut s.z);
            }
            weights.clear();
            crp_log_weights(tables.sizes(), s.nu, &mut weights);
            for (k, w) in weights.iter_mut().enumerate() {
                s.z[i] = k;
                *w += self.model.weight_labels(&s.z);
            }
            if weights.iter().all(|w| *w == f64::NEG_INFINITY) {
                return Err(Error::numeric(format!("no admissible block for node {}", i + 1)));
            }
            let pick = sample_log_categorical(&weights, rng);
            s.z[i] = pick;
            tables.add(pick);
        }
        if self.opts.update_nu && p > 0 {
            s.nu = update_concentration(s.n_blocks(), p, self.hyper.a_nu, self.hyper.b_nu, s.nu, rng);
        }
        let map = first_appearance_map(&s.z, s.n_blocks());
        s.z.iter_mut().for_each(|l| *l = map[*l]);
        Ok(())
    }
}
