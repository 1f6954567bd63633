//! G-Wishart numerics: normalizing constants, the marginal likelihood
//! p(Y | G), precision-matrix sampling and single-edge graph moves.
//!
//! Density convention: W_G(δ, D) ∝ |K|^{(δ−2)/2} exp(−tr(DK)/2) on positive
//! definite K with K_ij = 0 for every non-edge (i, j).

mod complete;
mod dense;
mod edge;
mod laplace;
mod marginal;
mod sampler;

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DataMatrix;
use crate::Matrix;

pub use complete::{log_multivariate_gamma, log_norm_complete};
pub use edge::{edge_flip_update, flip_log_acceptance};
pub use laplace::{find_mode, laplace_from_mode, log_norm_laplace, LaplaceMode, ModeOptions};
pub use marginal::{log_marginal_likelihood, GraphScore, MarginalLikelihood};
pub use sampler::{sample_gwishart, sample_gwishart_from, DEFAULT_PRECISION_SWEEPS};

/// Degrees of freedom and rate matrix of a G-Wishart distribution.
#[derive(Clone, Debug)]
pub struct GWishartParams {
    delta: f64,
    rate: Matrix,
    log_det_rate: f64,
}

impl GWishartParams {
    pub fn new(delta: f64, rate: Matrix) -> Result<Self> {
        if !(delta > 2.0) {
            return Err(Error::input(format!("G-Wishart degrees of freedom must exceed 2, got {delta}")));
        }
        if rate.nrows() != rate.ncols() {
            return Err(Error::input("rate matrix must be square"));
        }
        let chol = Cholesky::new(rate.clone()).ok_or_else(|| Error::numeric("rate matrix is not positive definite"))?;
        let log_det_rate = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(GWishartParams { delta, rate, log_det_rate })
    }

    /// Conjugate update: (δ + n, D + YᵀY).
    pub fn posterior(&self, data: &DataMatrix) -> Result<Self> {
        if data.p() != self.p() {
            return Err(Error::input(format!("data has {} columns, prior is {}-dimensional", data.p(), self.p())));
        }
        GWishartParams::new(self.delta + data.n() as f64, &self.rate + data.cross_product())
    }

    #[inline]
    pub fn delta(&self) -> f64 {
        self.delta
    }

    #[inline]
    pub fn rate(&self) -> &Matrix {
        &self.rate
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.rate.nrows()
    }

    pub fn log_det_rate(&self) -> f64 {
        self.log_det_rate
    }

    fn rate_is_diagonal(&self) -> bool {
        let p = self.p();
        (0..p).all(|i| (0..p).all(|j| i == j || self.rate[(i, j)] == 0.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormConstMethod {
    ExactComplete,
    Laplace,
}

/// log I_G(δ, D) together with how it was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogNormConst {
    pub value: f64,
    pub method: NormConstMethod,
}

/// log I_G(δ, D): exact for the complete graph, Laplace otherwise.
pub fn log_norm_const(graph: &crate::graph::Graph, params: &GWishartParams) -> Result<LogNormConst> {
    if graph.is_complete() {
        Ok(LogNormConst { value: log_norm_complete(params), method: NormConstMethod::ExactComplete })
    } else {
        log_norm_laplace(graph, params)
    }
}
