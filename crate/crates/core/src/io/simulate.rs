//! Synthetic data: a block structure, a graph drawn from one of the block
//! priors (or the karate fixture), Ω ~ W_G(δ, D) and Gaussian rows.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::gwishart::{sample_gwishart, GWishartParams};
use crate::io::karate::{karate_factions, karate_graph, KARATE_NODES};
use crate::model::{DataMatrix, Hyperparameters};
use crate::partition::Partition;
use crate::probit::norm_cdf;
use crate::rng::chain_rng;
use crate::Matrix;

/// Random stream reserved for simulation, apart from the chain streams.
pub const SIMULATION_STREAM: u64 = 1 << 32;

/// Gibbs sweeps used to draw the true precision matrix.
const PRECISION_SWEEPS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub enum BlockSpec {
    /// Labels drawn uniformly with replacement from K blocks.
    Count(usize),
    Labels(Partition),
}

#[derive(Clone, Debug, PartialEq)]
pub enum GraphSpec {
    /// Blocks are cliques, between-block edges Bernoulli(ρ).
    Sics { rho: f64 },
    /// Probit blockmodel with θᵢ ~ N(0, s²_θ) per node and β_k ~ N(0, s²_β)
    /// per block.
    Dcsbm,
    /// The karate club graph and factions; `p` and the blocks are ignored.
    Karate,
}

#[derive(Clone, Debug)]
pub struct SimulationSpec {
    pub p: usize,
    pub blocks: BlockSpec,
    pub graph: GraphSpec,
    pub n: usize,
    pub hyper: Hyperparameters,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub z: Partition,
    pub graph: Graph,
    pub omega: Matrix,
    pub data: DataMatrix,
}

pub fn simulate(spec: &SimulationSpec, seed: u64) -> Result<Simulation> {
    let mut rng = chain_rng(seed, SIMULATION_STREAM);
    let (z, graph) = match &spec.graph {
        GraphSpec::Karate => (karate_factions(), karate_graph()),
        other => {
            let z = draw_blocks(spec.p, &spec.blocks, &mut rng)?;
            let g = match other {
                GraphSpec::Sics { rho } => sics_graph(&z, *rho, &mut rng)?,
                _ => dcsbm_graph(&z, &spec.hyper, &mut rng),
            };
            (z, g)
        }
    };
    let p = graph.p();
    debug_assert!(!matches!(spec.graph, GraphSpec::Karate) || p == KARATE_NODES);
    spec.hyper.validate(p)?;
    let prior = GWishartParams::new(spec.hyper.delta, spec.hyper.rate_matrix(p))?;
    let omega = sample_gwishart(&graph, &prior, PRECISION_SWEEPS, &mut rng)?;
    let data = gaussian_rows(&omega, spec.n, &mut rng)?;
    Ok(Simulation { z, graph, omega, data })
}

fn draw_blocks<R: Rng + ?Sized>(p: usize, blocks: &BlockSpec, rng: &mut R) -> Result<Partition> {
    match blocks {
        BlockSpec::Count(0) => Err(Error::input("number of blocks must be positive")),
        BlockSpec::Count(k) => Ok(Partition::new(&(0..p).map(|_| rng.random_range(0..*k)).collect::<Vec<_>>())),
        BlockSpec::Labels(z) if z.p() != p => Err(Error::input(format!("partition has {} labels, expected {p}", z.p()))),
        BlockSpec::Labels(z) => Ok(z.clone()),
    }
}

pub fn sics_graph<R: Rng + ?Sized>(z: &Partition, rho: f64, rng: &mut R) -> Result<Graph> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::input(format!("rho must lie in [0, 1], got {rho}")));
    }
    let p = z.p();
    let mut g = Graph::empty(p);
    for i in 0..p {
        for j in (i + 1)..p {
            // draw for every pair so the stream does not depend on z
            let u: f64 = rng.random();
            g.set_edge(i, j, z.same_block(i, j) || u < rho);
        }
    }
    Ok(g)
}

fn dcsbm_graph<R: Rng + ?Sized>(z: &Partition, hyper: &Hyperparameters, rng: &mut R) -> Graph {
    let p = z.p();
    let normal = |var: f64, rng: &mut R| { let e: f64 = StandardNormal.sample(rng); var.sqrt() * e };
    let theta: Vec<f64> = (0..p).map(|_| normal(hyper.s2_theta, rng)).collect();
    let beta: Vec<f64> = (0..z.n_blocks()).map(|_| normal(hyper.s2_beta, rng)).collect();
    let mut g = Graph::empty(p);
    for i in 0..p {
        for j in (i + 1)..p {
            let mut mu = theta[i] + theta[j];
            if z.same_block(i, j) {
                mu += beta[z.label(i)];
            }
            let u: f64 = rng.random();
            g.set_edge(i, j, u < norm_cdf(mu));
        }
    }
    g
}

/// n rows from N(0, Ω⁻¹): with Ω = LLᵀ, y = L⁻ᵀε.
fn gaussian_rows<R: Rng + ?Sized>(omega: &Matrix, n: usize, rng: &mut R) -> Result<DataMatrix> {
    let p = omega.nrows();
    let chol = Cholesky::new(omega.clone()).ok_or_else(|| Error::numeric("sampled precision is not positive definite"))?;
    let lt = chol.l().transpose();
    let mut y = DMatrix::zeros(n, p);
    for r in 0..n {
        let eps = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        let row = lt.solve_upper_triangular(&eps).ok_or_else(|| Error::numeric("singular Cholesky factor"))?;
        y.set_row(r, &row.transpose());
    }
    DataMatrix::new(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(graph: GraphSpec, blocks: BlockSpec, p: usize, n: usize) -> SimulationSpec {
        SimulationSpec { p, blocks, graph, n, hyper: Hyperparameters::default() }
    }

    #[test]
    fn degenerate_rho() {
        let sim = simulate(&spec(GraphSpec::Sics { rho: 0.0 }, BlockSpec::Count(1), 6, 3), 1).unwrap();
        assert!(sim.graph.is_complete());
        let z = Partition::new(&[1, 2, 3, 1, 2]);
        let sim = simulate(&spec(GraphSpec::Sics { rho: 1.0 }, BlockSpec::Labels(z), 5, 3), 1).unwrap();
        assert!(sim.graph.is_complete());
    }

    #[test]
    fn between_block_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut hits, mut total) = (0usize, 0usize);
        for _ in 0..1000 {
            let z = draw_blocks(20, &BlockSpec::Count(4), &mut rng).unwrap();
            let g = sics_graph(&z, 0.2, &mut rng).unwrap();
            for i in 0..20 {
                for j in (i + 1)..20 {
                    if !z.same_block(i, j) {
                        total += 1;
                        hits += usize::from(g.has_edge(i, j));
                    }
                }
            }
        }
        let f = hits as f64 / total as f64;
        let se = (0.2 * 0.8 / total as f64).sqrt();
        assert!((f - 0.2).abs() < 3.0 * se, "{f}");
    }

    #[test]
    fn deterministic_and_zero_patterned() {
        let s = spec(GraphSpec::Dcsbm, BlockSpec::Count(2), 6, 10);
        let a = simulate(&s, 9).unwrap();
        let b = simulate(&s, 9).unwrap();
        assert_eq!(a.data.values(), b.data.values());
        assert_eq!(a.graph, b.graph);
        for i in 0..6 {
            for j in (i + 1)..6 {
                if !a.graph.has_edge(i, j) {
                    assert_eq!(a.omega[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn karate_mode() {
        let sim = simulate(&spec(GraphSpec::Karate, BlockSpec::Count(1), 0, 5), 2).unwrap();
        assert_eq!(sim.graph.n_edges(), 78);
        assert_eq!((sim.data.n(), sim.data.p()), (5, 34));
    }
}
