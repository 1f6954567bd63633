//! Several condition-specific graphs with shared node popularities and
//! dependent block structures.
//!
//! Group 0 is the baseline. Node i of group x either copies the baseline
//! label (tied, with prior probability γ) or takes its own label. All labels
//! come from one restaurant whose customers are the baseline nodes plus the
//! untied group nodes, so blocks can be shared across groups.

use rand::Rng;

use crate::crp::{crp_log_weights, update_concentration};
use crate::dcsbm::{edge_log_lik, fresh_beta, gaussian};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::gwishart::{
    edge_flip_update, sample_gwishart_from, GWishartParams, GraphScore, MarginalLikelihood, DEFAULT_PRECISION_SWEEPS,
};
use crate::model::{gaussian_loglik, DataMatrix, Hyperparameters};
use crate::partition::{first_appearance_map, permute_params, Partition, Tables};
use crate::probit::{log_sum_exp, probit_log_odds, sample_log_categorical, sample_truncated_unit_normal};
use crate::Matrix;

#[derive(Clone, Debug)]
pub struct MultiOptions {
    pub update_graph: bool,
    pub update_beta: bool,
    pub update_theta: bool,
    pub update_baseline_labels: bool,
    pub update_popularity: bool,
    pub update_genealogy: bool,
    pub update_nu: bool,
    pub update_alpha: bool,
    pub sample_precision: bool,
    pub precision_sweeps: usize,
}

impl Default for MultiOptions {
    fn default() -> Self {
        MultiOptions {
            update_graph: true,
            update_beta: true,
            update_theta: true,
            update_baseline_labels: true,
            update_popularity: true,
            update_genealogy: true,
            update_nu: true,
            update_alpha: true,
            sample_precision: true,
            precision_sweeps: DEFAULT_PRECISION_SWEEPS,
        }
    }
}

/// Data sets of all groups on a common set of variables.
#[derive(Clone, Debug)]
pub struct MultiData {
    groups: Vec<DataMatrix>,
}

impl MultiData {
    pub fn new(groups: Vec<DataMatrix>) -> Result<Self> {
        let p = groups.first().ok_or_else(|| Error::input("at least one group is required"))?.p();
        if let Some(x) = groups.iter().position(|g| g.p() != p) {
            return Err(Error::input(format!("group {} has {} variables, group 1 has {p}", x + 1, groups[x].p())));
        }
        Ok(MultiData { groups })
    }

    pub fn q(&self) -> usize {
        self.groups.len()
    }

    pub fn p(&self) -> usize {
        self.groups[0].p()
    }

    pub fn groups(&self) -> &[DataMatrix] {
        &self.groups
    }
}

#[derive(Clone, Debug)]
pub struct MultiState {
    pub graphs: Vec<Graph>,
    z: Vec<Vec<usize>>,
    tied: Vec<Vec<bool>>,
    pub beta_star: Vec<f64>,
    c: Vec<usize>,
    pub theta_star: Vec<f64>,
    pub nu: f64,
    pub alpha: f64,
    zeta: Vec<Vec<f64>>,
    pub omegas: Vec<Matrix>,
    /// Σₓ log p(Yₓ | Ωₓ), or Σₓ log p(Yₓ | Gₓ) when Ω is not sampled.
    pub loglik: f64,
    scores: Vec<Option<GraphScore>>,
}

impl MultiState {
    /// Empty graphs, one block shared by all groups, every node tied.
    pub fn new(q: usize, p: usize) -> Self {
        MultiState {
            graphs: vec![Graph::empty(p); q],
            z: vec![vec![0; p]; q],
            tied: vec![vec![true; p]; q],
            beta_star: vec![0.0; usize::from(p > 0)],
            c: vec![0; p],
            theta_star: vec![0.0; usize::from(p > 0)],
            nu: 1.0,
            alpha: 1.0,
            zeta: vec![vec![0.0; p * p]; q],
            omegas: Vec::new(),
            loglik: 0.0,
            scores: vec![None; q],
        }
    }

    pub fn q(&self) -> usize {
        self.z.len()
    }

    pub fn p(&self) -> usize {
        self.c.len()
    }

    /// Partition of group `x`.
    pub fn z(&self, x: usize) -> Partition {
        Partition::new(&self.z[x])
    }

    /// Labels of group `x` on the shared label set (0-based, canonical
    /// across groups jointly).
    pub fn labels(&self, x: usize) -> &[usize] {
        &self.z[x]
    }

    pub fn tied(&self, x: usize) -> &[bool] {
        &self.tied[x]
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

    /// Number of restaurant customers: every baseline node plus each untied
    /// group node.
    pub fn customers(&self) -> usize {
        self.p() + self.tied.iter().skip(1).flatten().filter(|t| !**t).count()
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.theta_star[self.c[i]]
    }

    pub fn mu(&self, x: usize, i: usize, j: usize) -> f64 {
        let mut mu = self.theta(i) + self.theta(j);
        if self.z[x][i] == self.z[x][j] {
            mu += self.beta_star[self.z[x][i]];
        }
        mu
    }

    fn zeta(&self, x: usize, i: usize, j: usize) -> f64 {
        self.zeta[x][i * self.p() + j]
    }

    fn beta_residual(&self, x: usize, i: usize, j: usize) -> f64 {
        let mut r = self.zeta(x, i, j);
        if self.z[x][i] == self.z[x][j] {
            r -= self.beta_star[self.z[x][i]];
        }
        r
    }

    /// Whether every tied node carries its baseline label.
    pub fn ties_hold(&self) -> bool {
        (0..self.q()).all(|x| (0..self.p()).all(|i| !self.tied[x][i] || self.z[x][i] == self.z[0][i]))
    }

    fn tables(&self) -> Tables {
        let mut sizes = vec![0usize; self.n_blocks()];
        for (x, zx) in self.z.iter().enumerate() {
            for (i, &l) in zx.iter().enumerate() {
                if x == 0 || !self.tied[x][i] {
                    sizes[l] += 1;
                }
            }
        }
        let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(l, &n)| std::iter::repeat_n(l, n)).collect();
        Tables::from_labels(&labels, sizes.len())
    }

    fn canonicalize(&mut self) {
        let map = first_appearance_map(self.z.iter().flatten(), self.beta_star.len());
        self.beta_star = permute_params(&self.beta_star, &map);
        for zx in &mut self.z {
            zx.iter_mut().for_each(|l| *l = map[*l]);
        }
        let map = first_appearance_map(&self.c, self.theta_star.len());
        self.theta_star = permute_params(&self.theta_star, &map);
        self.c.iter_mut().for_each(|l| *l = map[*l]);
    }
}

pub struct MultiSampler {
    hyper: Hyperparameters,
    data: MultiData,
    mls: Vec<MarginalLikelihood>,
    opts: MultiOptions,
}

impl MultiSampler {
    pub fn new(data: MultiData, hyper: Hyperparameters, opts: MultiOptions) -> Result<Self> {
        let p = data.p();
        hyper.validate(p)?;
        let prior = GWishartParams::new(hyper.delta, hyper.rate_matrix(p))?;
        let mls = data.groups().iter().map(|y| MarginalLikelihood::new(y, prior.clone())).collect::<Result<Vec<_>>>()?;
        Ok(MultiSampler { hyper, data, mls, opts })
    }

    pub fn q(&self) -> usize {
        self.data.q()
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<MultiState> {
        let mut s = MultiState::new(self.q(), self.p());
        for x in 0..self.q() {
            s.scores[x] = Some(self.mls[x].score(&s.graphs[x], None)?);
        }
        self.sample_latents(&mut s, rng);
        Ok(s)
    }

    pub fn sweep<R: Rng + ?Sized>(&self, s: &mut MultiState, rng: &mut R) -> Result<()> {
        if self.opts.update_graph {
            for x in 0..self.q() {
                self.update_graph(s, x, rng)?;
            }
        }
        self.sample_latents(s, rng);
        if self.opts.update_beta {
            self.update_beta_star(s, rng);
        }
        if self.opts.update_theta {
            self.update_theta_star(s, rng);
        }
        if self.opts.update_baseline_labels {
            self.update_baseline_labels(s, rng);
            self.sample_latents(s, rng);
        }
        if self.opts.update_popularity {
            self.update_popularity_labels(s, rng);
        }
        if self.opts.update_genealogy {
            for x in 1..self.q() {
                for i in 0..self.p() {
                    self.update_genealogy(s, x, i, rng);
                }
            }
        }
        let p = self.p();
        if self.opts.update_nu && p > 0 {
            s.nu = update_concentration(s.n_blocks(), s.customers(), self.hyper.a_nu, self.hyper.b_nu, s.nu, rng);
        }
        if self.opts.update_alpha && p > 0 {
            s.alpha = update_concentration(s.n_clusters(), p, self.hyper.a_alpha, self.hyper.b_alpha, s.alpha, rng);
        }
        s.canonicalize();
        debug_assert!(s.ties_hold());
        self.refresh_loglik(s, rng)
    }

    pub fn update_graph<R: Rng + ?Sized>(&self, s: &mut MultiState, x: usize, rng: &mut R) -> Result<()> {
        let p = self.p();
        let mut score = match s.scores[x].take() {
            Some(score) => score,
            None => self.mls[x].score(&s.graphs[x], None)?,
        };
        for i in 0..p {
            for j in (i + 1)..p {
                let odds = probit_log_odds(s.mu(x, i, j));
                edge_flip_update(&mut s.graphs[x], &mut score, (i, j), odds, &self.mls[x], rng)?;
            }
        }
        s.scores[x] = Some(score);
        Ok(())
    }

    pub fn sample_latents<R: Rng + ?Sized>(&self, s: &mut MultiState, rng: &mut R) {
        let p = self.p();
        for x in 0..self.q() {
            for i in 0..p {
                for j in (i + 1)..p {
                    let v = sample_truncated_unit_normal(s.mu(x, i, j), s.graphs[x].has_edge(i, j), rng);
                    s.zeta[x][i * p + j] = v;
                    s.zeta[x][j * p + i] = v;
                }
            }
        }
    }

    /// β*_k pooled over the within-block pairs of every group.
    pub fn update_beta_star<R: Rng + ?Sized>(&self, s: &mut MultiState, rng: &mut R) {
        let p = self.p();
        let k = s.n_blocks();
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for x in 0..self.q() {
            for i in 0..p {
                for j in (i + 1)..p {
                    let l = s.z[x][i];
                    if l == s.z[x][j] {
                        sums[l] += s.zeta(x, i, j) - s.theta(i) - s.theta(j);
                        counts[l] += 1;
                    }
                }
            }
        }
        for b in 0..k {
            let var = 1.0 / (1.0 / self.hyper.s2_beta + counts[b] as f64);
            s.beta_star[b] = gaussian(var * sums[b], var, rng);
        }
    }

    pub fn update_theta_star<R: Rng + ?Sized>(&self, s: &mut MultiState, rng: &mut R) {
        let p = self.p();
        let q = self.q();
        for m in 0..s.n_clusters() {
            let (mut within, mut n_within, mut cross, mut size) = (0.0, 0usize, 0.0, 0usize);
            for i in (0..p).filter(|&i| s.c[i] == m) {
                size += 1;
                for j in (0..p).filter(|&j| j != i) {
                    for x in 0..q {
                        let r = s.beta_residual(x, i, j);
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
            }
            let precision = 1.0 / self.hyper.s2_theta + 4.0 * n_within as f64 + (q * size * (p - size)) as f64;
            let var = 1.0 / precision;
            s.theta_star[m] = gaussian(var * (2.0 * within + cross), var, rng);
        }
    }

    /// Log-likelihood of node i's edges in group x for each candidate label
    /// `0..k` and a new label (last entry), with the latents integrated out.
    fn label_loglik(&self, s: &MultiState, x: usize, i: usize, k: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(k + 1, 0.0);
        let mut base = 0.0;
        let ti = s.theta(i);
        for j in (0..self.p()).filter(|&j| j != i) {
            let mu = ti + s.theta(j);
            let present = s.graphs[x].has_edge(i, j);
            let off = edge_log_lik(present, mu);
            base += off;
            let b = s.z[x][j];
            out[b] += edge_log_lik(present, mu + s.beta_star[b]) - off;
        }
        out.iter_mut().for_each(|v| *v += base);
    }

    /// Baseline labels, with every tied copy moving in lockstep.
    pub fn update_baseline_labels<R: Rng + ?Sized>(&self, s: &mut MultiState, rng: &mut R) {
        let p = self.p();
        let mut tables = s.tables();
        let mut weights = Vec::with_capacity(p + 1);
        let mut lik = Vec::with_capacity(p + 1);
        for i in 0..p {
            if let Some(vac) = tables.remove(s.z[0][i]) {
                s.z.iter_mut().for_each(|zx| vac.relabel(zx));
                vac.apply(&mut s.beta_star);
            }
            let k = tables.n_tables();
            weights.clear();
            crp_log_weights(tables.sizes(), s.nu, &mut weights);
            for x in (0..self.q()).filter(|&x| s.tied[x][i]) {
                self.label_loglik(s, x, i, k, &mut lik);
                weights.iter_mut().zip(&lik).for_each(|(w, l)| *w += l);
            }
            let pick = sample_log_categorical(&weights, rng);
            if pick == k {
                s.beta_star.push(fresh_beta(&self.hyper, None, rng));
            }
            for x in (0..self.q()).filter(|&x| s.tied[x][i]) {
                s.z[x][i] = pick;
            }
            tables.add(pick);
        }
    }

    /// Gibbs draw of (g_xi, z_xi) for a non-baseline group.
    pub fn update_genealogy<R: Rng + ?Sized>(&self, s: &mut MultiState, x: usize, i: usize, rng: &mut R) {
        debug_assert!(x >= 1);
        let mut tables = s.tables();
        if !s.tied[x][i] {
            if let Some(vac) = tables.remove(s.z[x][i]) {
                s.z.iter_mut().for_each(|zx| vac.relabel(zx));
                vac.apply(&mut s.beta_star);
            }
        }
        let k = tables.n_tables();
        let mut lik = Vec::with_capacity(k + 1);
        self.label_loglik(s, x, i, k, &mut lik);
        let mut pred = Vec::with_capacity(k + 1);
        crp_log_weights(tables.sizes(), s.nu, &mut pred);
        let norm = (tables.total() as f64 + s.nu).ln();
        let untied: Vec<f64> = pred.iter().zip(&lik).map(|(p, l)| p - norm + l).collect();
        let baseline = s.z[0][i];
        let log_tie = self.hyper.gamma.ln() + lik[baseline];
        let log_free = (1.0 - self.hyper.gamma).ln() + log_sum_exp(&untied);
        let prob_tie = 1.0 / (1.0 + (log_free - log_tie).exp());
        if rng.random::<f64>() < prob_tie {
            s.tied[x][i] = true;
            s.z[x][i] = baseline;
        } else {
            let pick = sample_log_categorical(&untied, rng);
            if pick == k {
                s.beta_star.push(fresh_beta(&self.hyper, None, rng));
            }
            s.tied[x][i] = false;
            s.z[x][i] = pick;
        }
    }

    pub fn update_popularity_labels<R: Rng + ?Sized>(&self, s: &mut MultiState, rng: &mut R) {
        let p = self.p();
        if p < 2 {
            return;
        }
        let q = self.q();
        let mut tables = Tables::from_labels(&s.c, s.n_clusters());
        let s2 = self.hyper.s2_theta;
        let pairs = (q * (p - 1)) as f64;
        let var_new = 1.0 / (pairs + 1.0 / s2);
        let mut weights = Vec::with_capacity(p + 1);
        for i in 0..p {
            if let Some(vac) = tables.remove(s.c[i]) {
                vac.relabel(&mut s.c);
                vac.apply(&mut s.theta_star);
            }
            let mut resid = 0.0;
            for j in (0..p).filter(|&j| j != i) {
                for x in 0..q {
                    resid += s.beta_residual(x, i, j) - s.theta(j);
                }
            }
            let mean_new = var_new * resid;
            weights.clear();
            crp_log_weights(tables.sizes(), s.alpha, &mut weights);
            let m = tables.n_tables();
            for (t, w) in weights.iter_mut().enumerate() {
                *w += if t < m {
                    let th = s.theta_star[t];
                    th * resid - 0.5 * pairs * th * th
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

    fn refresh_loglik<R: Rng + ?Sized>(&self, s: &mut MultiState, rng: &mut R) -> Result<()> {
        s.loglik = 0.0;
        s.omegas.clear();
        for x in 0..self.q() {
            let score = match s.scores[x].take() {
                Some(score) => score,
                None => self.mls[x].score(&s.graphs[x], None)?,
            };
            if self.opts.sample_precision {
                let ml = &self.mls[x];
                let start = ml.posterior_mode(&s.graphs[x], Some(&score))?;
                let omega =
                    sample_gwishart_from(&s.graphs[x], ml.posterior(), &start.precision, self.opts.precision_sweeps, rng)?;
                let y = &self.data.groups()[x];
                if y.n() > 0 {
                    s.loglik += gaussian_loglik(y, &omega)?;
                }
                s.omegas.push(omega);
            } else {
                s.loglik += score.log_ml;
            }
            s.scores[x] = Some(score);
        }
        Ok(())
    }
}
