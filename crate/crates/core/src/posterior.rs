//! Reductions over recorded MCMC states: co-clustering and edge-inclusion
//! frequencies, point estimates, partition distances and Bayes factors.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::crp::prior_partition_marginal;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::partition::Partition;
use crate::probit::log_sum_exp;
use crate::scalar::Real;
use crate::Matrix;

/// One recorded iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Index of the chain that produced the record.
    #[serde(default)]
    pub chain: usize,
    pub iteration: usize,
    /// Block partition (the baseline group's for multigraph runs).
    pub z: Partition,
    /// One graph per group; empty for models without a graph.
    pub graphs: Vec<Graph>,
    /// Per-group block labels on the shared label set, 1-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_labels: Option<Vec<Vec<usize>>>,
    /// Per-group tie indicators to the baseline labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tied: Option<Vec<Vec<bool>>>,
    pub loglik: f64,
    pub n_blocks: usize,
    pub nu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

/// Recorded states of one chain, after burn-in and thinning.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleLog {
    pub records: Vec<SampleRecord>,
}

impl SampleLog {
    pub fn partitions(&self) -> Vec<Partition> {
        self.records.iter().map(|r| r.z.clone()).collect()
    }

    pub fn logliks(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loglik).collect()
    }

    pub fn n_groups(&self) -> usize {
        self.records.first().map_or(0, |r| r.graphs.len())
    }
}

/// Fraction of samples with zᵢ = zⱼ.
pub fn similarity_matrix(samples: &[Partition]) -> Result<Matrix> {
    let first = samples.first().ok_or_else(|| Error::input("no samples to summarize"))?;
    let p = first.p();
    let mut sim = Matrix::zeros(p, p);
    for z in samples {
        if z.p() != p {
            return Err(Error::input("samples have differing numbers of nodes"));
        }
        for i in 0..p {
            for j in 0..p {
                if z.same_block(i, j) {
                    sim[(i, j)] += 1.0;
                }
            }
        }
    }
    Ok(sim / samples.len() as f64)
}

/// Fraction of samples with a_i = b_j, for label vectors drawn from one
/// shared label set (e.g. two groups of a multigraph run).
pub fn cross_similarity(pairs: &[(Vec<usize>, Vec<usize>)]) -> Result<Matrix> {
    let (a0, _) = pairs.first().ok_or_else(|| Error::input("no samples to summarize"))?;
    let p = a0.len();
    let mut sim = Matrix::zeros(p, p);
    for (a, b) in pairs {
        if a.len() != p || b.len() != p {
            return Err(Error::input("samples have differing numbers of nodes"));
        }
        for i in 0..p {
            for j in 0..p {
                if a[i] == b[j] {
                    sim[(i, j)] += 1.0;
                }
            }
        }
    }
    Ok(sim / pairs.len() as f64)
}

/// Fraction of graphs containing each edge (diagonal zero).
pub fn edge_inclusion(graphs: &[&Graph]) -> Result<Matrix> {
    let first = graphs.first().ok_or_else(|| Error::input("no graphs to summarize"))?;
    let p = first.p();
    let mut probs = Matrix::zeros(p, p);
    for g in graphs {
        for (i, j) in g.edges() {
            probs[(i, j)] += 1.0;
            probs[(j, i)] += 1.0;
        }
    }
    Ok(probs / graphs.len() as f64)
}

/// Σ_{i<j} |1[zᵢ = zⱼ] − similarityᵢⱼ|.
pub fn binder_loss(z: &Partition, similarity: &Matrix) -> f64 {
    let p = z.p();
    let mut loss = 0.0;
    for i in 0..p {
        for j in (i + 1)..p {
            let together = if z.same_block(i, j) { 1.0 } else { 0.0 };
            loss += (together - similarity[(i, j)]).abs();
        }
    }
    loss
}

/// The sampled partition with least Binder loss; ties go to the earliest.
pub fn binder_estimate(samples: &[Partition], similarity: &Matrix) -> Result<Partition> {
    let mut seen = HashSet::new();
    let mut best: Option<(f64, &Partition)> = None;
    for z in samples {
        if !seen.insert(z) {
            continue;
        }
        let loss = binder_loss(z, similarity);
        if best.is_none_or(|(b, _)| loss < b) {
            best = Some((loss, z));
        }
    }
    best.map(|(_, z)| z.clone()).ok_or_else(|| Error::input("no samples to summarize"))
}

/// Fraction of node pairs on which two partitions agree.
pub fn rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    if a.p() != b.p() {
        return Err(Error::input(format!("partitions have {} and {} nodes", a.p(), b.p())));
    }
    let p = a.p();
    if p < 2 {
        return Ok(1.0);
    }
    let mut agree = 0usize;
    for i in 0..p {
        for j in (i + 1)..p {
            agree += usize::from(a.same_block(i, j) == b.same_block(i, j));
        }
    }
    Ok(agree as f64 / (p * (p - 1) / 2) as f64)
}

/// Hubert–Arabie adjusted Rand index.
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    if a.p() != b.p() {
        return Err(Error::input(format!("partitions have {} and {} nodes", a.p(), b.p())));
    }
    let choose2 = |n: usize| (n * n.saturating_sub(1) / 2) as f64;
    let mut table = vec![vec![0usize; b.n_blocks()]; a.n_blocks()];
    for i in 0..a.p() {
        table[a.label(i)][b.label(i)] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&n| choose2(n)).sum();
    let rows: f64 = a.sizes().into_iter().map(choose2).sum();
    let cols: f64 = b.sizes().into_iter().map(choose2).sum();
    let total = choose2(a.p());
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Edges with inclusion probability strictly above one half.
pub fn median_probability_graph(edge_probs: &Matrix) -> Graph {
    let p = edge_probs.nrows();
    let mut g = Graph::empty(p);
    for i in 0..p {
        for j in (i + 1)..p {
            if edge_probs[(i, j)] > 0.5 {
                g.add_edge(i, j);
            }
        }
    }
    g
}

/// Smallest prior mass for which a Savage–Dickey estimate is attempted.
pub const MIN_PRIOR_MASS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavageDickey {
    /// Posterior-to-prior probability ratio of z*.
    pub estimate: f64,
    pub prior_mass: f64,
    pub frequency: f64,
}

/// Bayes factor of the model restricted to z* against the full model,
/// estimated as the posterior frequency of z* over its prior probability.
pub fn savage_dickey_bf(samples: &[Partition], z_star: &Partition, a_nu: f64, b_nu: f64) -> Result<SavageDickey> {
    if samples.is_empty() {
        return Err(Error::input("no samples to summarize"));
    }
    let prior_mass = prior_partition_marginal(z_star, a_nu, b_nu)?;
    if prior_mass < MIN_PRIOR_MASS {
        return Err(Error::PriorMassTooSmall(prior_mass));
    }
    let hits = samples.iter().filter(|z| *z == z_star).count();
    let frequency = hits as f64 / samples.len() as f64;
    Ok(SavageDickey { estimate: frequency / prior_mass, prior_mass, frequency })
}

/// Running estimate after each sample, for convergence plots.
pub fn running_savage_dickey(samples: &[Partition], z_star: &Partition, prior_mass: f64) -> Vec<f64> {
    let mut hits = 0usize;
    samples
        .iter()
        .enumerate()
        .map(|(t, z)| {
            hits += usize::from(z == z_star);
            hits as f64 / (t + 1) as f64 / prior_mass
        })
        .collect()
}

/// Harmonic-mean estimate of log p(Y) from log-likelihood draws:
/// −[log Σₜ exp(−ℓₜ) − log T].
pub fn harmonic_mean_log_ml<T: Real>(loglik: &[T]) -> Result<T> {
    if loglik.is_empty() {
        return Err(Error::input("no log-likelihood samples"));
    }
    let neg: Vec<T> = loglik.iter().map(|&l| -l).collect();
    Ok(-(log_sum_exp(&neg) - T::from_count(loglik.len()).ln()))
}

/// Harmonic-mean estimate after each prefix of the draws.
pub fn running_harmonic_mean(loglik: &[f64]) -> Vec<f64> {
    let mut acc = f64::NEG_INFINITY;
    loglik
        .iter()
        .enumerate()
        .map(|(t, &l)| {
            let x = -l;
            acc = if acc == f64::NEG_INFINITY { x } else { acc.max(x) + (-(acc - x).abs()).exp().ln_1p() };
            -(acc - ((t + 1) as f64).ln())
        })
        .collect()
}

/// Standard error of the mean by non-overlapping batch means.
pub fn batch_means_se(values: &[f64], n_batches: usize) -> f64 {
    let size = values.len() / n_batches.max(1);
    if size == 0 || n_batches < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = values.chunks_exact(size).take(n_batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    (var / means.len() as f64).sqrt()
}

/// Everything `fit` reports about a chain.
#[derive(Clone, Debug)]
pub struct PosteriorSummary {
    /// Co-clustering frequencies of `z`.
    pub similarity: Matrix,
    /// Edge-inclusion frequencies, one matrix per group.
    pub edge_probs: Vec<Matrix>,
    pub binder_z: Partition,
    /// Savage–Dickey estimate for the one-block model, if computable.
    pub bayes_factor: Option<SavageDickey>,
    /// Per-group co-clustering matrices of multigraph runs.
    pub group_similarity: Vec<Matrix>,
    /// Co-clustering of group 1 against group 2 (z₁ᵢ = z₂ⱼ).
    pub cross_similarity: Option<Matrix>,
}

pub fn summarize(log: &SampleLog, a_nu: f64, b_nu: f64) -> Result<PosteriorSummary> {
    let parts = log.partitions();
    let similarity = similarity_matrix(&parts)?;
    let binder_z = binder_estimate(&parts, &similarity)?;
    let edge_probs = (0..log.n_groups())
        .map(|x| edge_inclusion(&log.records.iter().map(|r| &r.graphs[x]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let p = binder_z.p();
    let bayes_factor = savage_dickey_bf(&parts, &Partition::single_block(p), a_nu, b_nu).ok();
    let mut group_similarity = Vec::new();
    let mut cross = None;
    if let Some(Some(first)) = log.records.first().map(|r| r.group_labels.as_ref()) {
        for x in 0..first.len() {
            let zs: Vec<Partition> =
                log.records.iter().map(|r| Partition::new(&r.group_labels.as_ref().expect("uniform records")[x])).collect();
            group_similarity.push(similarity_matrix(&zs)?);
        }
        if first.len() >= 2 {
            let pairs: Vec<(Vec<usize>, Vec<usize>)> = log
                .records
                .iter()
                .map(|r| {
                    let labels = r.group_labels.as_ref().expect("uniform records");
                    (labels[0].clone(), labels[1].clone())
                })
                .collect();
            cross = Some(cross_similarity(&pairs)?);
        }
    }
    Ok(PosteriorSummary { similarity, edge_probs, binder_z, bayes_factor, group_similarity, cross_similarity: cross })
}
