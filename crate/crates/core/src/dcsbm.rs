//! Degree-corrected stochastic blockmodel prior on the graph, sampled jointly
//! with the graph through probit data augmentation.
//!
//! Edge (i, j) is present with probability Φ(θᵢ + θⱼ + β_{zᵢ}·1[zᵢ = zⱼ]).
//! Blocks z and popularity clusters c both follow Chinese restaurant
//! processes, with concentrations ν and α under gamma priors.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::crp::{crp_log_weights, update_concentration};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::gwishart::{
    edge_flip_update, sample_gwishart_from, GWishartParams, GraphScore, MarginalLikelihood, DEFAULT_PRECISION_SWEEPS,
};
use crate::model::{gaussian_loglik, DataMatrix, Hyperparameters};
use crate::partition::{first_appearance_map, permute_params, Partition, Tables};
use crate::probit::{log_norm_cdf, probit_log_odds, sample_log_categorical, sample_truncated_unit_normal};
use crate::Matrix;

/// Which parts of the state a sweep updates. Everything is on by default;
/// the switches exist to pin pieces of the state, e.g. a fixed partition for
/// the denominator chain of a Bayes factor.
#[derive(Clone, Debug)]
pub struct DcsbmOptions {
    pub update_graph: bool,
    pub update_beta: bool,
    pub update_theta: bool,
    pub update_block_labels: bool,
    pub update_popularity: bool,
    pub update_nu: bool,
    pub update_alpha: bool,
    /// Draw Ω | G, Y at the end of each sweep.
    pub sample_precision: bool,
    pub precision_sweeps: usize,
    /// Hold every block strength at this value.
    pub fixed_beta: Option<f64>,
}

impl Default for DcsbmOptions {
    fn default() -> Self {
        DcsbmOptions {
            update_graph: true,
            update_beta: true,
            update_theta: true,
            update_block_labels: true,
            update_popularity: true,
            update_nu: true,
            update_alpha: true,
            sample_precision: true,
            precision_sweeps: DEFAULT_PRECISION_SWEEPS,
            fixed_beta: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DcsbmState {
    pub graph: Graph,
    z: Vec<usize>,
    pub beta_star: Vec<f64>,
    c: Vec<usize>,
    pub theta_star: Vec<f64>,
    pub nu: f64,
    pub alpha: f64,
    zeta: Vec<f64>,
    pub omega: Option<Matrix>,
    /// log p(Y | Ω) at the sampled Ω, or log p(Y | G) when Ω is not sampled.
    pub loglik: f64,
    score: Option<GraphScore>,
}

impl DcsbmState {
    /// Empty graph, blocks `z`, one popularity cluster at θ = 0 and β* = 0.
    pub fn new(z: &Partition) -> Self {
        let p = z.p();
        DcsbmState {
            graph: Graph::empty(p),
            z: z.labels().to_vec(),
            beta_star: vec![0.0; z.n_blocks()],
            c: vec![0; p],
            theta_star: vec![0.0; usize::from(p > 0)],
            nu: 1.0,
            alpha: 1.0,
            zeta: vec![0.0; p * p],
            omega: None,
            loglik: 0.0,
            score: None,
        }
    }

    pub fn p(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> Partition {
        Partition::new(&self.z)
    }

    pub fn c(&self) -> Partition {
        Partition::new(&self.c)
    }

    pub fn n_blocks(&self) -> usize {
        self.beta_star.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.theta_star.len()
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.theta_star[self.c[i]]
    }

    /// Latent probit variable of pair (i, j).
    pub fn zeta(&self, i: usize, j: usize) -> f64 {
        self.zeta[i * self.p() + j]
    }

    /// Probit mean μᵢⱼ under the current parameters.
    pub fn mu(&self, i: usize, j: usize) -> f64 {
        let mut mu = self.theta(i) + self.theta(j);
        if self.z[i] == self.z[j] {
            mu += self.beta_star[self.z[i]];
        }
        mu
    }

    fn canonicalize(&mut self) {
        let map = first_appearance_map(&self.z, self.beta_star.len());
        self.beta_star = permute_params(&self.beta_star, &map);
        self.z.iter_mut().for_each(|l| *l = map[*l]);
        let map = first_appearance_map(&self.c, self.theta_star.len());
        self.theta_star = permute_params(&self.theta_star, &map);
        self.c.iter_mut().for_each(|l| *l = map[*l]);
    }
}

/// log Pr(edge indicator | μ) under the probit link.
#[inline]
pub(crate) fn edge_log_lik(present: bool, mu: f64) -> f64 {
    if present {
        log_norm_cdf(mu)
    } else {
        log_norm_cdf(-mu)
    }
}

/// Draws β for a new block (or returns the pinned value).
pub(crate) fn fresh_beta<R: Rng + ?Sized>(hyper: &Hyperparameters, fixed: Option<f64>, rng: &mut R) -> f64 {
    fixed.unwrap_or_else(|| hyper.s2_beta.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal))
}

pub(crate) fn gaussian<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> f64 {
    Normal::new(mean, var.sqrt()).expect("finite normal parameters").sample(rng)
}

pub struct DcsbmSampler {
    hyper: Hyperparameters,
    data: DataMatrix,
    ml: MarginalLikelihood,
    opts: DcsbmOptions,
}

impl DcsbmSampler {
    pub fn new(data: DataMatrix, hyper: Hyperparameters, opts: DcsbmOptions) -> Result<Self> {
        hyper.validate(data.p())?;
        let prior = GWishartParams::new(hyper.delta, hyper.rate_matrix(data.p()))?;
        let ml = MarginalLikelihood::new(&data, prior)?;
        Ok(DcsbmSampler { hyper, data, ml, opts })
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    pub fn options(&self) -> &DcsbmOptions {
        &self.opts
    }

    /// Starting state: empty graph, blocks `z` (one block if `None`).
    pub fn initial_state<R: Rng + ?Sized>(&self, z: Option<&Partition>, rng: &mut R) -> Result<DcsbmState> {
        let p = self.p();
        let z = z.cloned().unwrap_or_else(|| Partition::single_block(p));
        if z.p() != p {
            return Err(Error::input(format!("initial partition has {} nodes, data has {p}", z.p())));
        }
        let mut state = DcsbmState::new(&z);
        if let Some(b) = self.opts.fixed_beta {
            state.beta_star.iter_mut().for_each(|v| *v = b);
        }
        state.score = Some(self.ml.score(&state.graph, None)?);
        self.sample_latents(&mut state, rng);
        Ok(state)
    }

    /// One full sweep.
    pub fn sweep<R: Rng + ?Sized>(&self, s: &mut DcsbmState, rng: &mut R) -> Result<()> {
        if self.opts.update_graph {
            self.update_graph(s, rng)?;
        }
        self.sample_latents(s, rng);
        if self.opts.update_beta {
            self.update_beta_star(s, rng);
        }
        if self.opts.update_theta {
            self.update_theta_star(s, rng);
        }
        if self.opts.update_block_labels {
            self.update_block_labels(s, rng);
            // The label draw integrated the latents out; refresh them before
            // anything conditions on ζ again.
            self.sample_latents(s, rng);
        }
        if self.opts.update_popularity {
            self.update_popularity_labels(s, rng);
        }
        let p = self.p();
        if self.opts.update_nu && p > 0 {
            s.nu = update_concentration(s.n_blocks(), p, self.hyper.a_nu, self.hyper.b_nu, s.nu, rng);
        }
        if self.opts.update_alpha && p > 0 {
            s.alpha = update_concentration(s.n_clusters(), p, self.hyper.a_alpha, self.hyper.b_alpha, s.alpha, rng);
        }
        s.canonicalize();
        self.refresh_loglik(s, rng)
    }

    /// One Metropolis–Hastings toggle per node pair.
    pub fn update_graph<R: Rng + ?Sized>(&self, s: &mut DcsbmState, rng: &mut R) -> Result<()> {
        let p = self.p();
        let mut score = match s.score.take() {
            Some(score) => score,
            None => self.ml.score(&s.graph, None)?,
        };
        for i in 0..p {
            for j in (i + 1)..p {
                let odds = probit_log_odds(s.mu(i, j));
                edge_flip_update(&mut s.graph, &mut score, (i, j), odds, &self.ml, rng)?;
            }
        }
        s.score = Some(score);
        Ok(())
    }

    /// ζᵢⱼ ~ N(μᵢⱼ, 1) truncated to the side given by the edge indicator.
    pub fn sample_latents<R: Rng + ?Sized>(&self, s: &mut DcsbmState, rng: &mut R) {
        let p = s.p();
        for i in 0..p {
            for j in (i + 1)..p {
                let v = sample_truncated_unit_normal(s.mu(i, j), s.graph.has_edge(i, j), rng);
                s.zeta[i * p + j] = v;
                s.zeta[j * p + i] = v;
            }
        }
    }

    pub fn update_beta_star<R: Rng + ?Sized>(&self, s: &mut DcsbmState, rng: &mut R) {
        if let Some(b) = self.opts.fixed_beta {
            s.beta_star.iter_mut().for_each(|v| *v = b);
            return;
        }
        let p = s.p();
        let k = s.n_blocks();
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for i in 0..p {
            for j in (i + 1)..p {
                if s.z[i] == s.z[j] {
                    sums[s.z[i]] += s.zeta(i, j) - s.theta(i) - s.theta(j);
                    counts[s.z[i]] += 1;
                }
            }
        }
        for b in 0..k {
            let var = 1.0 / (1.0 / self.hyper.s2_beta + counts[b] as f64);
            s.beta_star[b] = gaussian(var * sums[b], var, rng);
        }
    }

    /// Updates each θ*_m in turn given the others.
    pub fn update_theta_star<R: Rng + ?Sized>(&self, s: &mut DcsbmState, rng: &mut R) {
        let p = s.p();
        for m in 0..s.n_clusters() {
            let mut within = 0.0;
            let mut n_within = 0usize;
            let mut cross = 0.0;
            let mut size = 0usize;
            for i in (0..p).filter(|&i| s.c[i] == m) {
                size += 1;
                for j in (0..p).filter(|&j| j != i) {
                    let r = self.beta_residual(s, i, j);
                    if s.c[j] == m {
                        if j > i {
                            within += r;
                            n_within += 1;
                        }
                    } else {
                        cross += r - s.theta(j);
                    }
                }
            }
            let precision = 1.0 / self.hyper.s2_theta + 4.0 * n_within as f64 + (size * (p - size)) as f64;
            let var = 1.0 / precision;
            s.theta_star[m] = gaussian(var * (2.0 * within + cross), var, rng);
        }
    }

    /// ζᵢⱼ with the block term removed.
    fn beta_residual(&self, s: &DcsbmState, i: usize, j: usize) -> f64 {
        let mut r = s.zeta(i, j);
        if s.z[i] == s.z[j] {
            r -= s.beta_star[s.z[i]];
        }
        r
    }

    /// Gibbs scan over zᵢ with the latents integrated out.
    pub fn update_block_labels<R: Rng + ?Sized>(&self, s: &mut DcsbmState, rng: &mut R) {
        let p = s.p();
        let mut tables = Tables::from_labels(&s.z, s.n_blocks());
        let mut weights = Vec::with_capacity(p + 1);
        let mut block_terms = Vec::with_capacity(p + 1);
        for i in 0..p {
            if let Some(vac) = tables.remove(s.z[i]) {
                vac.relabel(&mut s.z);
                vac.apply(&mut s.beta_star);
            }
            let k = tables.n_tables();
            // Every label starts from the no-block-term likelihood; members
            // of block b then swap in their β term.
            let mut base = 0.0;
            block_terms.clear();
            block_terms.resize(k, 0.0);
            let ti = s.theta(i);
            for j in (0..p).filter(|&j| j != i) {
                let mu = ti + s.theta(j);
                let present = s.graph.has_edge(i, j);
                let off = edge_log_lik(present, mu);
                base += off;
                let b = s.z[j];
                block_terms[b] += edge_log_lik(present, mu + s.beta_star[b]) - off;
            }
            weights.clear();
            crp_log_weights(tables.sizes(), s.nu, &mut weights);
            for (b, w) in weights.iter_mut().enumerate() {
                *w += base + if b < k { block_terms[b] } else { 0.0 };
            }
            let pick = sample_log_categorical(&weights, rng);
            if pick == k {
                s.beta_star.push(fresh_beta(&self.hyper, self.opts.fixed_beta, rng));
            }
            s.z[i] = pick;
            tables.add(pick);
        }
    }

    /// Gibbs scan over the popularity labels cᵢ given the latents, with a
    /// fresh θ drawn from its conditional when a new cluster opens.
    pub fn update_popularity_labels<R: Rng + ?Sized>(&self, s: &mut DcsbmState, rng: &mut R) {
        let p = s.p();
        if p < 2 {
            return;
        }
        let mut tables = Tables::from_labels(&s.c, s.n_clusters());
        let s2 = self.hyper.s2_theta;
        let var_new = 1.0 / ((p - 1) as f64 + 1.0 / s2);
        let mut weights = Vec::with_capacity(p + 1);
        for i in 0..p {
            if let Some(vac) = tables.remove(s.c[i]) {
                vac.relabel(&mut s.c);
                vac.apply(&mut s.theta_star);
            }
            let resid: f64 = (0..p).filter(|&j| j != i).map(|j| self.beta_residual(s, i, j) - s.theta(j)).sum();
            let mean_new = var_new * resid;
            weights.clear();
            crp_log_weights(tables.sizes(), s.alpha, &mut weights);
            let m = tables.n_tables();
            for (t, w) in weights.iter_mut().enumerate() {
                *w += if t < m {
                    let th = s.theta_star[t];
                    th * resid - 0.5 * (p - 1) as f64 * th * th
                } else {
                    0.5 * (var_new / s2).ln() + 0.5 * mean_new * mean_new / var_new
                };
            }
            let pick = sample_log_categorical(&weights, rng);
            if pick == m {
                s.theta_star.push(gaussian(mean_new, var_new, rng));
            }
            s.c[i] = pick;
            tables.add(pick);
        }
    }

    fn refresh_loglik<R: Rng + ?Sized>(&self, s: &mut DcsbmState, rng: &mut R) -> Result<()> {
        let score = match s.score.take() {
            Some(score) => score,
            None => self.ml.score(&s.graph, None)?,
        };
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
    use crate::probit::norm_cdf;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sampler(p: usize, opts: DcsbmOptions) -> DcsbmSampler {
        DcsbmSampler::new(DataMatrix::empty(p), Hyperparameters::default(), opts).unwrap()
    }

    #[test]
    fn latent_signs_follow_edges() {
        let smp = sampler(5, DcsbmOptions::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = smp.initial_state(None, &mut rng).unwrap();
        for _ in 0..20 {
            smp.sweep(&mut s, &mut rng).unwrap();
            smp.sample_latents(&mut s, &mut rng);
            for i in 0..5 {
                for j in (i + 1)..5 {
                    assert_eq!(s.zeta(i, j) > 0.0, s.graph.has_edge(i, j));
                    assert_eq!(s.zeta(i, j), s.zeta(j, i));
                }
            }
            assert_eq!(s.z().n_blocks(), s.n_blocks());
            assert_eq!(s.c().n_blocks(), s.n_clusters());
        }
    }

    #[test]
    fn beta_posterior_moments() {
        // One within-block pair with residual 1 and s²_β = 1: N(0.5, 0.5).
        let smp = sampler(2, DcsbmOptions::default());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = DcsbmState::new(&Partition::single_block(2));
        s.zeta = vec![0.0, 1.0, 1.0, 0.0];
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                smp.update_beta_star(&mut s, &mut rng);
                s.beta_star[0]
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
        assert!((var / 0.5 - 1.0).abs() < 0.02);
    }

    #[test]
    fn theta_posterior_variance() {
        // p = 2, both nodes in one cluster: precision 1 + 4 = 5.
        let smp = sampler(2, DcsbmOptions::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = DcsbmState::new(&Partition::singletons(2));
        s.zeta = vec![0.0, 2.0, 2.0, 0.0];
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                smp.update_theta_star(&mut s, &mut rng);
                s.theta_star[0]
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 0.2 * 4.0).abs() < 0.01);
        assert!((var / 0.2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn joining_weight_example() {
        // p = 2, no edge, θ = 0, β* = 3 for node 2's block: joining costs
        // (1 − Φ(3)) / (1 − Φ(0)) relative to the CRP odds.
        let factor = (1.0 - norm_cdf(3.0)) / 0.5;
        assert_abs_diff_eq!(factor, 0.0027, epsilon = 1e-5);
        let smp = sampler(2, DcsbmOptions { fixed_beta: Some(3.0), ..DcsbmOptions::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = DcsbmState::new(&Partition::singletons(2));
        s.beta_star = vec![3.0, 3.0];
        let n = 200_000;
        let mut together = 0;
        for _ in 0..n {
            smp.update_block_labels(&mut s, &mut rng);
            together += usize::from(s.z[0] == s.z[1]);
        }
        // Node 1 given node 2 alone: join ∝ 1·factor, new ∝ ν = 1.
        let want = factor / (1.0 + factor);
        let got = together as f64 / n as f64;
        assert!((got - want).abs() < 5.0 * (want / n as f64).sqrt() + 1e-4, "{got} vs {want}");
    }
}
