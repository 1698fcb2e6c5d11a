//! Declarative run configuration (TOML).
//!
//! ```toml
//! seed = 0
//!
//! [model]
//! n = 8
//! omega = 1.0
//! hbar = 1.0
//! coupling = 0.02          # used for every atom unless `couplings` is given
//! # couplings = [0.02, 0.02, ...]
//! photon_factors = "bosonic"
//! max_atoms = 15
//!
//! [evolution]
//! dt = 0.05
//! steps = 3200
//! taylor_order = 10
//! strategy = "serial"      # or "2x2", "4x4", ...
//! renormalize_trace = false
//! stride = 1
//!
//! [output]
//! trajectory = "trajectory.csv"
//! summary = "summary.json"
//! ```
//!
//! Every key is optional; the values above are the defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::EvolutionConfig;
use crate::model::{ModelParams, PhotonFactors, DEFAULT_MAX_ATOMS};

pub const DEFAULT_COUPLING: f64 = 0.02;
pub const DEFAULT_ATOMS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n: u32,
    pub omega: f64,
    pub hbar: f64,
    pub coupling: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Vec<f64>>,
    pub photon_factors: PhotonFactors,
    pub max_atoms: u32,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            n: DEFAULT_ATOMS,
            omega: 1.0,
            hbar: 1.0,
            coupling: DEFAULT_COUPLING,
            couplings: None,
            photon_factors: PhotonFactors::Bosonic,
            max_atoms: DEFAULT_MAX_ATOMS,
        }
    }
}

impl ModelSection {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            n: self.n,
            hbar: self.hbar,
            omega: self.omega,
            couplings: self
                .couplings
                .clone()
                .unwrap_or_else(|| vec![self.coupling; self.n as usize]),
            photon_factors: self.photon_factors,
            max_atoms: self.max_atoms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub trajectory: PathBuf,
    pub summary: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            trajectory: PathBuf::from("trajectory.csv"),
            summary: PathBuf::from("summary.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds random inputs of `verify` and `bench`; `simulate` is
    /// deterministic regardless.
    pub seed: u64,
    pub model: ModelSection,
    pub evolution: EvolutionConfig,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed {} does not fit a TOML integer", self.seed)));
        }
        if !(self.model.coupling.is_finite() && self.model.coupling >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coupling must be finite and non-negative, got {}",
                self.model.coupling
            )));
        }
        self.model.params().validate()?;
        self.evolution.validate()?;
        let dim = self.model.params().dimension();
        if !self.evolution.strategy.supports_dimension(dim) {
            return Err(Error::Config(format!(
                "strategy {} does not divide dimension {dim}",
                self.evolution.strategy
            )));
        }
        if self.output.trajectory == self.output.summary {
            return Err(Error::Config("trajectory and summary paths must differ".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cannon::GridStrategy;
    use proptest::prelude::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.model.params(), ModelParams::uniform(8, 0.02));
        c.validate().unwrap();
    }

    #[test]
    fn partial_sections() {
        let c = RunConfig::from_toml_str(
            "seed = 7\n[model]\nn = 2\ncouplings = [0.1, 0.2]\n[evolution]\nsteps = 10\nstrategy = \"2x2\"\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.model.params().couplings, vec![0.1, 0.2]);
        assert_eq!(c.evolution.steps, 10);
        assert_eq!(c.evolution.dt, 0.05);
        assert_eq!(c.evolution.strategy, GridStrategy::Grid(2));
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_toml_str("[model]\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml_str("[evolution]\nstrategy = \"3y3\"\n").is_err());
        let c = RunConfig::from_toml_str("[evolution]\nsteps = 0\n").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::from_toml_str("[model]\nn = 3\ncouplings = [0.1]\n").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::from_toml_str("[model]\nn = 16\n").unwrap();
        assert!(matches!(c.validate(), Err(Error::DimensionOverflow { .. })));
        let c = RunConfig::from_toml_str("[model]\nn = 3\n[evolution]\nstrategy = \"16x16\"\n").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig {
            seed: u64::MAX,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn round_trip_with_couplings() {
        let mut c = RunConfig::default();
        c.model.couplings = Some(vec![0.1; 8]);
        c.model.photon_factors = PhotonFactors::Unit;
        c.evolution.strategy = GridStrategy::Grid(4);
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(
            seed in 0..=i64::MAX as u64,
            n in 1u32..12,
            omega in 1e-3f64..1e3,
            g in 0f64..1.0,
            dt in 1e-6f64..1.0,
            steps in 1usize..100_000,
            order in 1usize..30,
            q in 0usize..17,
            renorm in any::<bool>(),
            stride in 1usize..100,
        ) {
            let mut c = RunConfig::default();
            c.seed = seed;
            c.model.n = n;
            c.model.omega = omega;
            c.model.coupling = g;
            c.evolution.dt = dt;
            c.evolution.steps = steps;
            c.evolution.taylor_order = order;
            c.evolution.strategy = if q == 0 { GridStrategy::Serial } else { GridStrategy::Grid(q) };
            c.evolution.renormalize_trace = renorm;
            c.evolution.stride = stride;
            let text = c.to_toml_string().unwrap();
            let back = RunConfig::from_toml_str(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.to_toml_string().unwrap(), text);
        }
    }
}
