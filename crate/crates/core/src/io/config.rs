//! Run configuration: per-model defaults, a `key = value` file, and
//! command-line overrides on top.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::Hyperparameters;
use crate::partition::Partition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dcsbm,
    Sics,
    Multi,
    Sun,
}

impl ModelKind {
    /// Default (iterations, burn-in).
    pub fn default_budget(self) -> (usize, usize) {
        match self {
            ModelKind::Dcsbm | ModelKind::Sics | ModelKind::Sun => (6000, 1000),
            ModelKind::Multi => (55000, 5000),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dcsbm => "dcsbm",
            ModelKind::Sics => "sics",
            ModelKind::Multi => "multi",
            ModelKind::Sun => "sun",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dcsbm" => Ok(ModelKind::Dcsbm),
            "sics" => Ok(ModelKind::Sics),
            "multi" => Ok(ModelKind::Multi),
            "sun" => Ok(ModelKind::Sun),
            other => Err(Error::input(format!("unknown model {other:?} (expected dcsbm, sics, multi or sun)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelKind,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub hyper: Hyperparameters,
    /// Data CSV, or the group manifest for multigraph runs.
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    /// Hold the block partition fixed at this value.
    pub fixed_z: Option<PartitionSpec>,
    /// Partition tested by `bf`; the single block by default.
    pub z_star: Option<PartitionSpec>,
    /// Quantile-normalize each column before fitting.
    pub normalize: bool,
    /// Draw Ω each iteration for the recorded log-likelihood; otherwise
    /// log p(Y | G) is recorded.
    pub sample_precision: bool,
    pub edge_moves: usize,
}

impl RunConfig {
    pub fn new(model: ModelKind) -> Self {
        let (iterations, burn_in) = model.default_budget();
        RunConfig {
            model,
            iterations,
            burn_in,
            thin: 1,
            seed: 1,
            chains: 1,
            hyper: Hyperparameters::default(),
            data: None,
            out: PathBuf::from("."),
            fixed_z: None,
            z_star: None,
            normalize: false,
            sample_precision: true,
            edge_moves: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::input(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::input("thin must be at least 1"));
        }
        if self.chains == 0 {
            return Err(Error::input("chains must be at least 1"));
        }
        Ok(())
    }

    /// Number of states kept after burn-in and thinning.
    pub fn recorded(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }

    /// Overrides fields with those present in a `key = value` file. Values
    /// may be bare numbers, booleans or quoted strings; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
        self.apply_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::input(e.message().to_string()))?;
        if let Some(m) = file.model {
            let (it, burn) = m.default_budget();
            if m != self.model {
                (self.iterations, self.burn_in) = (it, burn);
            }
            self.model = m;
        }
        set(&mut self.iterations, file.iters);
        set(&mut self.burn_in, file.burnin);
        set(&mut self.thin, file.thin);
        set(&mut self.seed, file.seed);
        set(&mut self.chains, file.chains);
        set(&mut self.normalize, file.normalize);
        set(&mut self.sample_precision, file.sample_precision);
        set(&mut self.edge_moves, file.edge_moves);
        let h = &mut self.hyper;
        set(&mut h.s2_beta, file.s2_beta);
        set(&mut h.s2_theta, file.s2_theta);
        set(&mut h.a_nu, file.a_nu);
        set(&mut h.b_nu, file.b_nu);
        set(&mut h.a_alpha, file.a_alpha);
        set(&mut h.b_alpha, file.b_alpha);
        set(&mut h.delta, file.delta);
        set(&mut h.gamma, file.gamma);
        if let Some(d) = file.data {
            self.data = Some(PathBuf::from(d));
        }
        if let Some(o) = file.out {
            self.out = PathBuf::from(o);
        }
        if let Some(z) = file.fixed_z {
            self.fixed_z = Some(PartitionSpec(z));
        }
        if let Some(z) = file.z_star {
            self.z_star = Some(PartitionSpec(z));
        }
        Ok(())
    }
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

/// A partition written as `single`, `singletons` or a label list, resolved
/// once p is known.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionSpec(pub String);

impl PartitionSpec {
    pub fn resolve(&self, p: usize) -> Result<Partition> {
        Partition::parse(&self.0, p)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    model: Option<ModelKind>,
    iters: Option<usize>,
    burnin: Option<usize>,
    thin: Option<usize>,
    seed: Option<u64>,
    chains: Option<usize>,
    data: Option<String>,
    out: Option<String>,
    fixed_z: Option<String>,
    z_star: Option<String>,
    normalize: Option<bool>,
    sample_precision: Option<bool>,
    edge_moves: Option<usize>,
    s2_beta: Option<f64>,
    s2_theta: Option<f64>,
    a_nu: Option<f64>,
    b_nu: Option<f64>,
    a_alpha: Option<f64>,
    b_alpha: Option<f64>,
    delta: Option<f64>,
    gamma: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_model() {
        let c = RunConfig::new(ModelKind::Multi);
        assert_eq!((c.iterations, c.burn_in), (55000, 5000));
        assert_eq!(RunConfig::new(ModelKind::Sics).recorded(), 5000);
    }

    #[test]
    fn file_overrides() {
        let mut c = RunConfig::new(ModelKind::Dcsbm);
        c.apply_str("model = \"sics\"\niters = 200 # short\nburnin = 50\ndelta = 4.0\nz_star = \"1,1,2\"\n").unwrap();
        assert_eq!(c.model, ModelKind::Sics);
        assert_eq!((c.iterations, c.burn_in), (200, 50));
        assert_eq!(c.hyper.delta, 4.0);
        assert_eq!(c.z_star.as_ref().unwrap().resolve(3).unwrap(), Partition::new(&[1, 1, 2]));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = RunConfig::new(ModelKind::Dcsbm);
        assert!(c.apply_str("itres = 5").is_err());
        assert!(c.apply_str("iters = \"many\"").is_err());
        c.burn_in = c.iterations;
        assert!(matches!(c.validate(), Err(Error::Input(_))));
        assert!("graphical".parse::<ModelKind>().is_err());
    }
}
