//! Bayesian Gaussian graphical models with block-structured graph priors.

pub mod crp;
pub mod dcsbm;
pub mod error;
pub mod graph;
pub mod gwishart;
pub mod io;
pub mod model;
pub mod multi;
pub mod partition;
pub mod posterior;
pub mod probit;
pub mod rng;
pub mod scalar;
pub mod sics;
pub mod sun;

pub use dcsbm::{DcsbmOptions, DcsbmSampler, DcsbmState};
pub use error::{Error, Result};
pub use graph::Graph;
pub use model::{DataMatrix, Hyperparameters};
pub use multi::{MultiData, MultiOptions, MultiSampler, MultiState};
pub use partition::Partition;
pub use scalar::Real;
pub use sics::{SicsOptions, SicsSampler, SicsState};
pub use sun::{SunModel, SunOptions, SunSampler, SunState};

pub type Scalar = f64;
pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type CrpCounts64 = crp::CrpCounts<f64>;
pub type CrpCounts32 = crp::CrpCounts<f32>;
