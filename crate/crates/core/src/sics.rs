//! Clique-block graph prior: every block is a clique and edges between
//! blocks are independent Bernoulli(ρ), with a CRP on the blocks.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::crp::update_concentration;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::gwishart::{sample_gwishart_from, GWishartParams, GraphScore, MarginalLikelihood, DEFAULT_PRECISION_SWEEPS};
use crate::model::{gaussian_loglik, DataMatrix, Hyperparameters};
use crate::partition::{first_appearance_map, Partition, Tables};
use crate::Matrix;

#[derive(Clone, Debug)]
pub struct SicsOptions {
    pub update_rho: bool,
    pub update_graph: bool,
    pub update_labels: bool,
    pub update_nu: bool,
    /// Single-edge proposals on between-block pairs per sweep.
    pub edge_moves: usize,
    pub sample_precision: bool,
    pub precision_sweeps: usize,
}

impl Default for SicsOptions {
    fn default() -> Self {
        SicsOptions {
            update_rho: true,
            update_graph: true,
            update_labels: true,
            update_nu: true,
            edge_moves: 1,
            sample_precision: true,
            precision_sweeps: DEFAULT_PRECISION_SWEEPS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SicsState {
    pub graph: Graph,
    z: Vec<usize>,
    pub rho: f64,
    pub nu: f64,
    pub omega: Option<Matrix>,
    /// log p(Y | Ω) at the sampled Ω, or log p(Y | G) when Ω is not sampled.
    pub loglik: f64,
    score: Option<GraphScore>,
}

impl SicsState {
    /// State with blocks `z` and exactly the edges the cliques force.
    pub fn new(z: &Partition) -> Self {
        let p = z.p();
        let mut graph = Graph::empty(p);
        for i in 0..p {
            for j in (i + 1)..p {
                if z.same_block(i, j) {
                    graph.add_edge(i, j);
                }
            }
        }
        SicsState { graph, z: z.labels().to_vec(), rho: 0.5, nu: 1.0, omega: None, loglik: 0.0, score: None }
    }

    pub fn p(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> Partition {
        Partition::new(&self.z)
    }

    pub fn n_blocks(&self) -> usize {
        self.z.iter().max().map_or(0, |m| m + 1)
    }

    /// Number of within-block pairs, all of which are edges.
    pub fn within_pairs(&self) -> usize {
        self.z().within_pairs()
    }

    /// Whether every within-block pair is an edge.
    pub fn cliques_hold(&self) -> bool {
        let p = self.p();
        (0..p).all(|i| ((i + 1)..p).all(|j| self.z[i] != self.z[j] || self.graph.has_edge(i, j)))
    }
}

pub struct SicsSampler {
    hyper: Hyperparameters,
    data: DataMatrix,
    ml: MarginalLikelihood,
    opts: SicsOptions,
}

/// log p(Y | G) values computed within one sweep, keyed by graph.
pub type ScoreCache = HashMap<Vec<u64>, GraphScore>;

impl SicsSampler {
    pub fn new(data: DataMatrix, hyper: Hyperparameters, opts: SicsOptions) -> Result<Self> {
        hyper.validate(data.p())?;
        let prior = GWishartParams::new(hyper.delta, hyper.rate_matrix(data.p()))?;
        let ml = MarginalLikelihood::new(&data, prior)?;
        Ok(SicsSampler { hyper, data, ml, opts })
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    /// Starting state: blocks `z` (all singletons if `None`) with only the
    /// forced edges.
    pub fn initial_state(&self, z: Option<&Partition>) -> Result<SicsState> {
        let p = self.p();
        let z = z.cloned().unwrap_or_else(|| Partition::singletons(p));
        if z.p() != p {
            return Err(Error::input(format!("initial partition has {} nodes, data has {p}", z.p())));
        }
        let mut state = SicsState::new(&z);
        state.score = Some(self.ml.score(&state.graph, None)?);
        Ok(state)
    }

    pub fn sweep<R: Rng + ?Sized>(&self, s: &mut SicsState, rng: &mut R) -> Result<()> {
        let mut cache = ScoreCache::new();
        if self.opts.update_rho {
            self.update_rho(s, rng);
        }
        if self.opts.update_graph {
            for _ in 0..self.opts.edge_moves {
                self.free_edge_update(s, &mut cache, rng)?;
            }
        }
        if self.opts.update_labels {
            for i in 0..s.p() {
                self.joint_update(s, i, &mut cache, rng)?;
            }
        }
        if self.opts.update_nu && s.p() > 0 {
            s.nu = update_concentration(s.n_blocks(), s.p(), self.hyper.a_nu, self.hyper.b_nu, s.nu, rng);
        }
        let map = first_appearance_map(&s.z, s.n_blocks());
        s.z.iter_mut().for_each(|l| *l = map[*l]);
        debug_assert!(s.cliques_hold());
        self.refresh_loglik(s, rng)
    }

    /// ρ | G, z ~ Beta(1 + between-block edges, 1 + between-block non-edges).
    pub fn update_rho<R: Rng + ?Sized>(&self, s: &mut SicsState, rng: &mut R) {
        let within = s.within_pairs();
        let present = s.graph.n_edges() - within;
        let absent = s.graph.max_edges() - s.graph.n_edges();
        s.rho = Beta::new(1.0 + present as f64, 1.0 + absent as f64).expect("valid beta parameters").sample(rng);
    }

    fn score_of(&self, graph: &Graph, warm: &GraphScore, cache: &mut ScoreCache) -> Result<GraphScore> {
        let key = graph.key();
        if let Some(hit) = cache.get(&key) {
            return Ok(hit.clone());
        }
        let score = self.ml.score(graph, Some(warm))?;
        cache.insert(key, score.clone());
        Ok(score)
    }

    /// Adds or removes one between-block edge.
    ///
    /// An addition is proposed with probability ½ (1 when no between-block
    /// edge exists, 0 when all are present) and picks a uniform absent pair;
    /// a removal picks a uniform present between-block edge. The Hastings
    /// ratio accounts for both choices, and the prior odds ρ/(1−ρ) enter
    /// the target.
    pub fn free_edge_update<R: Rng + ?Sized>(&self, s: &mut SicsState, cache: &mut ScoreCache, rng: &mut R) -> Result<bool> {
        let p = s.p();
        let mut present = Vec::new();
        let mut absent = Vec::new();
        for i in 0..p {
            for j in (i + 1)..p {
                if s.z[i] != s.z[j] {
                    if s.graph.has_edge(i, j) {
                        present.push((i, j));
                    } else {
                        absent.push((i, j));
                    }
                }
            }
        }
        let (n_present, n_absent) = (present.len(), absent.len());
        if n_present + n_absent == 0 {
            return Ok(false);
        }
        let add_prob = |np: usize, na: usize| match (np, na) {
            (0, _) => 1.0,
            (_, 0) => 0.0,
            _ => 0.5,
        };
        let adding = rng.random::<f64>() < add_prob(n_present, n_absent);
        let (i, j) = if adding {
            absent[rng.random_range(0..n_absent)]
        } else {
            present[rng.random_range(0..n_present)]
        };
        let log_proposal = if adding {
            // reverse: remove one of n_present + 1 edges from the new graph
            (1.0 - add_prob(n_present + 1, n_absent - 1)).ln() - ((n_present + 1) as f64).ln()
                - (add_prob(n_present, n_absent).ln() - (n_absent as f64).ln())
        } else {
            add_prob(n_present - 1, n_absent + 1).ln() - ((n_absent + 1) as f64).ln()
                - ((1.0 - add_prob(n_present, n_absent)).ln() - (n_present as f64).ln())
        };
        let log_prior = if adding { 1.0 } else { -1.0 } * (s.rho / (1.0 - s.rho)).ln();
        let current = s.score.take().map_or_else(|| self.ml.score(&s.graph, None), Ok)?;
        s.graph.toggle(i, j);
        let proposed = self.score_of(&s.graph, &current, cache)?;
        let log_r = proposed.log_ml - current.log_ml + log_prior + log_proposal;
        if log_r.is_nan() {
            return Err(Error::numeric("edge move acceptance ratio is NaN"));
        }
        if log_r >= 0.0 || rng.random::<f64>().ln() < log_r {
            s.score = Some(proposed);
            Ok(true)
        } else {
            s.graph.toggle(i, j);
            s.score = Some(current);
            Ok(false)
        }
    }

    /// Joint Metropolis–Hastings move of zᵢ and the edges it touches.
    ///
    /// The new label is uniform over the other nodes' blocks plus a fresh
    /// one. Edges to the new block-mates are forced; edges to the old
    /// block-mates are redrawn from Bernoulli(ρ), or, if the label does not
    /// change, all of node i's between-block edges are. Because edges are
    /// proposed from their prior, the ratio is the CRP predictive ratio
    /// times the marginal-likelihood ratio.
    pub fn joint_update<R: Rng + ?Sized>(&self, s: &mut SicsState, i: usize, cache: &mut ScoreCache, rng: &mut R) -> Result<bool> {
        let p = s.p();
        let mut tables = Tables::from_labels(&s.z, s.n_blocks());
        let current_label = match tables.remove(s.z[i]) {
            Some(vac) => {
                vac.relabel(&mut s.z);
                tables.n_tables()
            }
            None => s.z[i],
        };
        // z[i] is stale until the end; compare other nodes against labels.
        let k = tables.n_tables();
        let proposal = rng.random_range(0..=k);
        let log_pred = |l: usize| if l < k { (tables.sizes()[l] as f64).ln() } else { s.nu.ln() };

        let mut graph = s.graph.clone();
        for j in (0..p).filter(|&j| j != i) {
            let lj = s.z[j];
            let old_mate = current_label < k && lj == current_label;
            let new_mate = proposal < k && lj == proposal;
            if proposal == current_label {
                if !old_mate {
                    graph.set_edge(i, j, rng.random::<f64>() < s.rho);
                }
            } else if new_mate {
                graph.set_edge(i, j, true);
            } else if old_mate {
                graph.set_edge(i, j, rng.random::<f64>() < s.rho);
            }
        }

        let current = s.score.take().map_or_else(|| self.ml.score(&s.graph, None), Ok)?;
        let proposed = if graph == s.graph { current.clone() } else { self.score_of(&graph, &current, cache)? };
        let log_r = log_pred(proposal) - log_pred(current_label) + proposed.log_ml - current.log_ml;
        if log_r.is_nan() {
            return Err(Error::numeric(format!("label move for node {} has a NaN ratio", i + 1)));
        }
        let accept = log_r >= 0.0 || rng.random::<f64>().ln() < log_r;
        let label = if accept {
            s.graph = graph;
            s.score = Some(proposed);
            proposal
        } else {
            s.score = Some(current);
            current_label
        };
        s.z[i] = label;
        Ok(accept)
    }

    fn refresh_loglik<R: Rng + ?Sized>(&self, s: &mut SicsState, rng: &mut R) -> Result<()> {
        let score = s.score.take().map_or_else(|| self.ml.score(&s.graph, None), Ok)?;
        if self.opts.sample_precision {
            let start = self.ml.posterior_mode(&s.graph, Some(&score))?;
            let omega =
                sample_gwishart_from(&s.graph, self.ml.posterior(), &start.precision, self.opts.precision_sweeps, rng)?;
            s.loglik = if self.data.n() == 0 { 0.0 } else { gaussian_loglik(&self.data, &omega)? };
            s.omega = Some(omega);
        } else {
            s.loglik = score.log_ml;
        }
        s.score = Some(score);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sampler(p: usize) -> SicsSampler {
        SicsSampler::new(DataMatrix::empty(p), Hyperparameters::default(), SicsOptions::default()).unwrap()
    }

    #[test]
    fn rho_conditional_examples() {
        // z = (1,1,2) with edges (1,2),(1,3): one of two between pairs present.
        let smp = sampler(3);
        let mut s = SicsState::new(&Partition::new(&[1, 1, 2]));
        s.graph.add_edge(0, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| {
                smp.update_rho(&mut s, &mut rng);
                s.rho
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.005);
        let mut one = SicsState::new(&Partition::single_block(3));
        let mean = (0..n)
            .map(|_| {
                smp.update_rho(&mut one, &mut rng);
                one.rho
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.005);
    }

    #[test]
    fn cliques_survive_sweeps() {
        let smp = sampler(6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = smp.initial_state(None).unwrap();
        for _ in 0..300 {
            smp.sweep(&mut s, &mut rng).unwrap();
            assert!(s.cliques_hold());
            assert!(s.within_pairs() <= s.graph.n_edges());
        }
    }

    #[test]
    fn single_block_skips_edge_moves() {
        let smp = sampler(3);
        let mut s = smp.initial_state(Some(&Partition::single_block(3))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cache = ScoreCache::new();
        assert!(!smp.free_edge_update(&mut s, &mut cache, &mut rng).unwrap());
        assert!(s.graph.is_complete());
    }

    #[test]
    fn prior_edge_frequency_follows_rho() {
        // With ρ pinned and no data the free edge of a two-block p = 2
        // model is present with probability ρ.
        let opts = SicsOptions { update_rho: false, update_labels: false, ..SicsOptions::default() };
        let smp = SicsSampler::new(DataMatrix::empty(2), Hyperparameters::default(), opts).unwrap();
        let mut s = smp.initial_state(None).unwrap();
        s.rho = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mut on = 0;
        for _ in 0..n {
            smp.sweep(&mut s, &mut rng).unwrap();
            on += usize::from(s.graph.has_edge(0, 1));
        }
        assert!((on as f64 / n as f64 - 0.3).abs() < 0.01);
    }
}
