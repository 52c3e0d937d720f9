use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obstacle::PsorOptions;
use crate::spde::PicardOptions;

use super::properties::PropertyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DeterministicConvergence,
    StochasticConvergence,
    GreenTable,
    PropertySuite,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::DeterministicConvergence => "deterministic-convergence",
            ExperimentKind::StochasticConvergence => "stochastic-convergence",
            ExperimentKind::GreenTable => "green-table",
            ExperimentKind::PropertySuite => "property-suite",
        }
    }
}

/// Smallest moment order used when the config leaves `p` unset.
pub fn default_moment_order(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 6.0,
        _ => 8.0,
    }
}

/// One experiment, read from JSON.
///
/// ```json
/// {"kind": "stochastic-convergence", "d": 1, "levels": [4, 8, 16, 32],
///  "reference": 64, "replicates": 100, "p": 2, "seed": 42,
///  "f": "linear:-0.1,-1", "sigma": "const:0.1"}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub d: usize,
    #[serde(default)]
    pub levels: Vec<usize>,
    #[serde(default)]
    pub reference: Option<usize>,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_barrier")]
    pub barrier: String,
    #[serde(default = "zero_name")]
    pub f: String,
    #[serde(default = "zero_name")]
    pub sigma: String,
    #[serde(default)]
    pub psor: PsorOptions,
    #[serde(default)]
    pub picard: PicardOptions,
    /// Green table: evaluation points per axis are `i / grid`, `0 < i < grid`.
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub properties: PropertyConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn default_barrier() -> String {
    "sine".into()
}

fn zero_name() -> String {
    "zero".into()
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, d: usize) -> Self {
        ExperimentConfig {
            kind,
            d,
            levels: Vec::new(),
            reference: None,
            replicates: 1,
            p: None,
            seed: 0,
            barrier: default_barrier(),
            f: zero_name(),
            sigma: zero_name(),
            psor: PsorOptions::default(),
            picard: PicardOptions::default(),
            grid: None,
            properties: PropertyConfig::default(),
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn moment_order(&self) -> f64 {
        self.p.unwrap_or_else(|| default_moment_order(self.d))
    }

    /// The reference resolution of a convergence study.
    pub fn reference_n(&self) -> Result<usize> {
        self.reference
            .ok_or_else(|| Error::Config("convergence study needs a reference level".into()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(Error::Config(format!(
                "dimension must be 1, 2 or 3, got {}",
                self.d
            )));
        }
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        let p = self.moment_order();
        if !(p >= 1.0) {
            return Err(Error::Config(format!(
                "moment order must be at least 1, got {p}"
            )));
        }
        match self.kind {
            ExperimentKind::DeterministicConvergence | ExperimentKind::StochasticConvergence => {
                self.validate_levels()
            }
            ExperimentKind::GreenTable => {
                if self.levels.len() != 1 || self.levels[0] < 2 {
                    return Err(Error::Config(
                        "green table needs exactly one level n >= 2".into(),
                    ));
                }
                match self.grid {
                    Some(g) if g >= 2 => Ok(()),
                    _ => Err(Error::Config("green table needs grid >= 2".into())),
                }
            }
            ExperimentKind::PropertySuite => Ok(()),
        }
    }

    fn validate_levels(&self) -> Result<()> {
        let reference = self.reference_n()?;
        if self.levels.is_empty() {
            return Err(Error::Config("at least one level is required".into()));
        }
        if self.levels[0] < 2 {
            return Err(Error::Config(format!(
                "levels must be at least 2, got {}",
                self.levels[0]
            )));
        }
        for w in self.levels.windows(2) {
            if w[1] <= w[0] || w[1] % w[0] != 0 {
                return Err(Error::Config(format!(
                    "levels must increase and each must divide the next ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        let last = *self.levels.last().expect("non-empty");
        if reference <= last || reference % last != 0 {
            return Err(Error::Config(format!(
                "reference {reference} must exceed and be divisible by every level"
            )));
        }
        if self.kind == ExperimentKind::StochasticConvergence {
            // noise is refined by halving, so all levels sit on one dyadic chain
            let base = self.levels[0];
            for &n in self.levels.iter().chain(std::iter::once(&reference)) {
                if !(n / base).is_power_of_two() {
                    return Err(Error::Config(format!(
                        "level {n} is not a power-of-two multiple of {base}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stoch() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(ExperimentKind::StochasticConvergence, 1);
        c.levels = vec![4, 8, 16];
        c.reference = Some(64);
        c
    }

    #[test]
    fn parses_json() {
        let cfg = ExperimentConfig::from_json(
            r#"{"kind":"deterministic-convergence","d":2,"levels":[4,8,16],"reference":64}"#,
        )
        .unwrap();
        assert_eq!(cfg.kind, ExperimentKind::DeterministicConvergence);
        assert_eq!(cfg.barrier, "sine");
        assert_eq!(cfg.moment_order(), 6.0);
        assert!(ExperimentConfig::from_json(r#"{"kind":"nope","d":1}"#).is_err());
        assert!(
            ExperimentConfig::from_json(r#"{"kind":"property-suite","d":1,"extra":1}"#).is_err()
        );
    }

    #[test]
    fn level_validation() {
        assert!(stoch().validate().is_ok());
        let mut c = stoch();
        c.levels = vec![8, 4];
        assert!(c.validate().is_err());
        let mut c = stoch();
        c.levels = vec![4, 12];
        c.reference = Some(48);
        assert!(c.validate().is_err(), "12/4 is not a power of two");
        c.kind = ExperimentKind::DeterministicConvergence;
        assert!(c.validate().is_ok());
        let mut c = stoch();
        c.reference = Some(16);
        assert!(c.validate().is_err());
        let mut c = stoch();
        c.replicates = 0;
        assert!(c.validate().is_err());
        let mut c = stoch();
        c.p = Some(0.5);
        assert!(c.validate().is_err());
    }
}
