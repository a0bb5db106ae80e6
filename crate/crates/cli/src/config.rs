//! Experiment configuration file.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use ttcomp_core::ensembles::{Ensemble, PartitionRule};
use ttcomp_core::{FunctionKind, Partition, ShiftPolicy, SourceModel, TypeThresholdFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Figure3,
    Figure4,
    LemmaSweep,
    OracleCheck,
    RateTable,
    Simulate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Figure3 => "figure3",
            Experiment::Figure4 => "figure4",
            Experiment::LemmaSweep => "lemma_sweep",
            Experiment::OracleCheck => "oracle_check",
            Experiment::RateTable => "rate_table",
            Experiment::Simulate => "simulate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Either a standard function (`{"kind": "maximum", "q": 4}`) or an explicit
/// reducer table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionSpec {
    Table(TypeThresholdFunction),
    Standard {
        #[serde(flatten)]
        kind: FunctionKind,
        q: usize,
    },
}

impl FunctionSpec {
    pub fn build(&self) -> Result<TypeThresholdFunction> {
        Ok(match self {
            FunctionSpec::Table(f) => f.clone(),
            FunctionSpec::Standard { kind, q } => TypeThresholdFunction::standard(*kind, *q)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_function")]
    pub function: FunctionSpec,
    /// Explicit source; when absent every `M` of the grid gets the uniform
    /// i.i.d. source over the function's alphabet.
    #[serde(default)]
    pub source: Option<SourceModel>,
    /// Explicit partitions (one per symbol, or one per stage for the binary
    /// search); otherwise built with `partition_rule`.
    #[serde(default)]
    pub partitions: Option<Vec<Partition>>,
    #[serde(default = "default_rule")]
    pub partition_rule: PartitionRule,
    #[serde(default = "default_shift")]
    pub shift: ShiftPolicy,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_true")]
    pub early_termination: bool,
    #[serde(default)]
    pub binary_search: bool,
}

fn default_function() -> FunctionSpec {
    FunctionSpec::Standard { kind: FunctionKind::Maximum, q: 4 }
}

fn default_rule() -> PartitionRule {
    PartitionRule::Lemma
}

fn default_shift() -> ShiftPolicy {
    ShiftPolicy::UniformRandom
}

fn default_k() -> usize {
    10_000
}

fn default_true() -> bool {
    true
}

impl Default for SimulationSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

/// Everything is optional; absent grids take per-experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    /// Sensor counts.
    pub m: Option<Vec<usize>>,
    /// Power per sensor in dB (`P = 10^(dB/10)`).
    pub power_db: Option<Vec<f64>>,
    pub power_linear: Option<Vec<f64>>,
    pub ensembles: Option<Vec<Ensemble>>,
    pub rules: Option<Vec<PartitionRule>>,
    pub seeds: Option<Vec<u64>>,
    /// Random models per seed for the sweeps.
    pub cases: Option<usize>,
    pub max_m: Option<usize>,
    pub max_q: Option<usize>,
    pub max_theta: Option<usize>,
    /// Rate curves must increase from this `M` on.
    pub m0: Option<usize>,
    /// Allowed growth of the round-robin bound over its first grid value.
    pub irr_factor: Option<f64>,
    /// Allowed max/min ratio of constant-source rates across `M`.
    pub spread_factor: Option<f64>,
    pub simulation: Option<SimulationSpec>,
    pub output: Option<OutputSpec>,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn check_kind(&self, run: Experiment) -> Result<()> {
        match self.experiment {
            Some(e) if e != run => bail!("config is for `{}`, not `{}`", e.name(), run.name()),
            _ => Ok(()),
        }
    }

    pub fn sensor_counts(&self, default: &[usize]) -> Result<Vec<usize>> {
        let m = self.m.clone().unwrap_or_else(|| default.to_vec());
        non_empty("m", &m)?;
        if m.contains(&0) {
            bail!("sensor counts must be positive");
        }
        Ok(m)
    }

    /// Linear powers; dB values come first when both lists are given.
    pub fn powers(&self, default_db: f64) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = self.power_db.iter().flatten().map(|&d| db_to_linear(d)).collect();
        out.extend(self.power_linear.iter().flatten());
        if self.power_db.is_none() && self.power_linear.is_none() {
            out.push(db_to_linear(default_db));
        }
        non_empty("power", &out)?;
        if let Some(p) = out.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            bail!("power must be finite and non-negative, got {p}");
        }
        Ok(out)
    }

    pub fn ensembles(&self, default: Ensemble) -> Result<Vec<Ensemble>> {
        let e = self.ensembles.clone().unwrap_or_else(|| vec![default]);
        non_empty("ensembles", &e)?;
        Ok(e)
    }

    pub fn seeds(&self, cli: Option<u64>, default: &[u64]) -> Result<Vec<u64>> {
        let s = match cli {
            Some(seed) => vec![seed],
            None => self.seeds.clone().unwrap_or_else(|| default.to_vec()),
        };
        non_empty("seeds", &s)?;
        Ok(s)
    }
}

fn non_empty<T>(name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        bail!("grid `{name}` is empty");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_db_is_one_hundred() {
        assert!((db_to_linear(20.0) - 100.0).abs() < 1e-12);
        let c: ExperimentConfig = serde_json::from_str(r#"{"power_db":[20],"power_linear":[3]}"#).unwrap();
        assert_eq!(c.powers(0.0).unwrap().len(), 2);
        assert!((c.powers(0.0).unwrap()[0] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn empty_grids_are_rejected() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"m":[]}"#).unwrap();
        assert!(c.sensor_counts(&[4]).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn function_specs() {
        let s: FunctionSpec = serde_json::from_str(r#"{"kind":"heavy_hitters","threshold":2,"q":3}"#).unwrap();
        assert_eq!(s.build().unwrap().theta(), &[2, 2, 2]);
        let table = serde_json::to_string(&s.build().unwrap()).unwrap();
        let back: FunctionSpec = serde_json::from_str(&table).unwrap();
        assert_eq!(back.build().unwrap(), s.build().unwrap());
    }

    #[test]
    fn simulation_defaults() {
        let s = SimulationSpec::default();
        assert_eq!(s.k, 10_000);
        assert!(s.early_termination);
        assert_eq!(s.shift, ShiftPolicy::UniformRandom);
    }
}
