use std::f64::consts::PI;

use super::laplace::{find_mode, laplace_from_mode, LaplaceMode, ModeOptions};
use super::{log_norm_complete, GWishartParams};
use crate::error::Result;
use crate::graph::Graph;
use crate::model::DataMatrix;

/// Evaluates log p(Y | G) for a fixed data set and G-Wishart prior.
///
/// Both normalizing constants are exact for the complete graph and Laplace
/// approximations otherwise. Modes from a previous [`GraphScore`] are used
/// as warm starts, which makes single-edge moves cheap.
#[derive(Clone, Debug)]
pub struct MarginalLikelihood {
    prior: GWishartParams,
    posterior: GWishartParams,
    n: usize,
    opts: ModeOptions,
    complete_prior: f64,
    complete_posterior: f64,
}

/// log p(Y | G) for one graph plus the modes used to get it.
#[derive(Clone, Debug)]
pub struct GraphScore {
    pub log_ml: f64,
    prior_mode: Option<LaplaceMode>,
    posterior_mode: Option<LaplaceMode>,
}

impl MarginalLikelihood {
    pub fn new(data: &DataMatrix, prior: GWishartParams) -> Result<Self> {
        let posterior = prior.posterior(data)?;
        Ok(MarginalLikelihood {
            complete_prior: log_norm_complete(&prior),
            complete_posterior: log_norm_complete(&posterior),
            n: data.n(),
            prior,
            posterior,
            opts: ModeOptions::default(),
        })
    }

    pub fn with_options(mut self, opts: ModeOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn prior(&self) -> &GWishartParams {
        &self.prior
    }

    pub fn posterior(&self) -> &GWishartParams {
        &self.posterior
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn score(&self, graph: &Graph, warm: Option<&GraphScore>) -> Result<GraphScore> {
        if self.n == 0 {
            return Ok(GraphScore { log_ml: 0.0, prior_mode: None, posterior_mode: None });
        }
        if graph.is_complete() {
            let log_ml = self.complete_posterior - self.complete_prior - self.gaussian_constant();
            return Ok(GraphScore { log_ml, prior_mode: None, posterior_mode: None });
        }
        let prior_mode = find_mode(graph, &self.prior, warm.and_then(|w| w.prior_mode.as_ref()).map(|m| &m.covariance), &self.opts)?;
        let posterior_mode = find_mode(
            graph,
            &self.posterior,
            warm.and_then(|w| w.posterior_mode.as_ref()).map(|m| &m.covariance),
            &self.opts,
        )?;
        let log_ml = laplace_from_mode(graph, &self.posterior, &posterior_mode)
            - laplace_from_mode(graph, &self.prior, &prior_mode)
            - self.gaussian_constant();
        Ok(GraphScore { log_ml, prior_mode: Some(prior_mode), posterior_mode: Some(posterior_mode) })
    }

    pub fn log_ml(&self, graph: &Graph) -> Result<f64> {
        Ok(self.score(graph, None)?.log_ml)
    }

    /// Mode of the G-Wishart posterior of Ω given G, reusing the one stored
    /// in `score` when present.
    pub fn posterior_mode(&self, graph: &Graph, score: Option<&GraphScore>) -> Result<LaplaceMode> {
        if let Some(mode) = score.and_then(|s| s.posterior_mode.as_ref()) {
            return Ok(mode.clone());
        }
        find_mode(graph, &self.posterior, None, &self.opts)
    }

    fn gaussian_constant(&self) -> f64 {
        0.5 * (self.n * self.prior.p()) as f64 * (2.0 * PI).ln()
    }
}

/// One-off log p(Y | G) under the prior W_G(δ, D).
pub fn log_marginal_likelihood(graph: &Graph, data: &DataMatrix, prior: &GWishartParams) -> Result<f64> {
    MarginalLikelihood::new(data, prior.clone())?.log_ml(graph)
}
