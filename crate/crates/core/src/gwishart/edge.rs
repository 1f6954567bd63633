use rand::Rng;

use super::marginal::{GraphScore, MarginalLikelihood};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Log acceptance ratio of toggling one edge: the change in log p(Y | G)
/// plus the prior log odds of presence, with sign by direction.
pub fn flip_log_acceptance(adding: bool, delta_log_ml: f64, prior_log_odds: f64) -> f64 {
    if adding {
        delta_log_ml + prior_log_odds
    } else {
        delta_log_ml - prior_log_odds
    }
}

/// Metropolis–Hastings toggle of edge (i, j). `score` must hold the score of
/// `graph` and is kept in sync. Returns whether the move was accepted.
pub fn edge_flip_update<R: Rng + ?Sized>(
    graph: &mut Graph,
    score: &mut GraphScore,
    (i, j): (usize, usize),
    prior_log_odds: f64,
    ml: &MarginalLikelihood,
    rng: &mut R,
) -> Result<bool> {
    let adding = !graph.has_edge(i, j);
    let blocked = if adding { prior_log_odds == f64::NEG_INFINITY } else { prior_log_odds == f64::INFINITY };
    if blocked {
        return Ok(false);
    }
    graph.toggle(i, j);
    let proposed = match ml.score(graph, Some(score)) {
        Ok(s) => s,
        Err(e) => {
            graph.toggle(i, j);
            return Err(e);
        }
    };
    let log_a = flip_log_acceptance(adding, proposed.log_ml - score.log_ml, prior_log_odds);
    if log_a.is_nan() {
        graph.toggle(i, j);
        return Err(Error::numeric(format!("edge ({}, {}) acceptance ratio is NaN", i + 1, j + 1)));
    }
    if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
        *score = proposed;
        Ok(true)
    } else {
        graph.toggle(i, j);
        Ok(false)
    }
}
