//! Experiment configuration files.
//!
//! A config is TOML with the blocks `matrix`, `sequence`, `z0`,
//! `simulation`, `estimation` (optional), `replication` and `output`.
//! A matrix given as a file path is read at load time and stored inline, so
//! the loaded value is self-contained and hashes to the same digest
//! wherever it came from.

use std::path::{Path, PathBuf};

use rspnet::netgraph::{mean_field, validate_matrix, ValidatedMatrix, DEFAULT_COLUMN_TOL};
use rspnet::rspsim::InitialCondition;
use rspnet::{Execution, ReinforcementSequence, SequenceSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixSpec {
    /// `w[l1][l2] = 1/(2N) + δ(l1, l2)/2`.
    MeanField { n: usize },
    Inline { rows: Vec<Vec<f64>> },
    /// CSV file with one matrix row per line, relative to the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Z0Spec {
    /// Every agent starts at `value`.
    Constant { value: f64 },
    Fixed { z: Vec<f64> },
    UniformProduct,
}

impl Default for Z0Spec {
    fn default() -> Self {
        Z0Spec::Constant { value: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    pub n_steps: usize,
    /// Steps at which the state is recorded. Empty means `{0, n_steps}`.
    #[serde(default)]
    pub checkpoints: Vec<usize>,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        SimulationBlock {
            n_steps: 10_000,
            checkpoints: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationBlock {
    pub n: usize,
    pub t: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Horizon of the refined target and of the long-horizon proxy.
    #[serde(default = "default_long_horizon")]
    pub long_horizon: usize,
    /// Further snapshot steps for the figure and coverage commands. Each is
    /// estimated at `n' + (t - n)`.
    #[serde(default)]
    pub compare_n: Vec<usize>,
    /// Half-width of the barrier parts when checking coverage.
    #[serde(default = "default_barrier_eps")]
    pub barrier_eps: f64,
    #[serde(default = "default_max_records")]
    pub max_records: usize,
}

fn default_k() -> usize {
    100
}
fn default_eta() -> f64 {
    0.2
}
fn default_eps() -> f64 {
    0.05
}
fn default_alpha() -> f64 {
    0.05
}
fn default_long_horizon() -> usize {
    100_000
}
fn default_barrier_eps() -> f64 {
    1e-3
}
fn default_max_records() -> usize {
    rspnet::estimate::DEFAULT_MAX_RECORDS
}

impl EstimationBlock {
    /// The snapshot steps `n` followed by `compare_n`, without repeats.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let mut out = vec![self.n];
        for &m in &self.compare_n {
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }

    pub fn horizon_for(&self, n: usize) -> usize {
        n + (self.t - self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationBlock {
    /// Number of master runs `S`.
    pub runs: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for ReplicationBlock {
    fn default() -> Self {
        ReplicationBlock {
            runs: 1,
            master_seed: 0,
            threads: None,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
    /// Also write every continuation's bounds to `records.csv`.
    #[serde(default)]
    pub records: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: PathBuf::from("out"),
            records: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub matrix: MatrixSpec,
    pub sequence: SequenceSpec,
    #[serde(default)]
    pub z0: Z0Spec,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub estimation: Option<EstimationBlock>,
    #[serde(default)]
    pub replication: ReplicationBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Parses, inlines a file matrix and validates.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let MatrixSpec::File { path: rel } = &cfg.matrix {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.matrix = MatrixSpec::Inline {
                rows: read_matrix_csv(&base.join(rel))?,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.replication.runs == 0 {
            return Err(HarnessError::Config("replication.runs must be >= 1".into()));
        }
        if self.replication.threads == Some(0) {
            return Err(HarnessError::Config("replication.threads must be >= 1".into()));
        }
        if let Some(est) = &self.estimation {
            if est.t <= est.n {
                return Err(HarnessError::Config(format!(
                    "estimation.t = {} must exceed estimation.n = {}",
                    est.t, est.n
                )));
            }
            if est.k == 0 {
                return Err(HarnessError::Config("estimation.k must be >= 1".into()));
            }
            if est.k > est.max_records {
                return Err(HarnessError::Config(format!(
                    "estimation.k = {} exceeds max_records = {}",
                    est.k, est.max_records
                )));
            }
            if !(est.alpha > 0.0 && est.alpha < 1.0) {
                return Err(HarnessError::Config(format!(
                    "estimation.alpha must lie in (0, 1), got {}",
                    est.alpha
                )));
            }
            if !(est.eta > 0.0 && est.eps > 0.0 && est.eps < 1.0) {
                return Err(HarnessError::Config("estimation.eta and eps must be positive, eps < 1".into()));
            }
            for n in est.snapshot_steps() {
                if est.long_horizon <= n {
                    return Err(HarnessError::Config(format!(
                        "estimation.long_horizon = {} must exceed snapshot step {n}",
                        est.long_horizon
                    )));
                }
            }
        }
        self.build_matrix()?;
        self.build_sequence()?;
        self.initial_condition(self.matrix_size()?)?;
        Ok(())
    }

    fn matrix_size(&self) -> Result<usize, HarnessError> {
        match &self.matrix {
            MatrixSpec::MeanField { n } => Ok(*n),
            MatrixSpec::Inline { rows } => Ok(rows.len()),
            MatrixSpec::File { .. } => Err(HarnessError::Config(
                "matrix file must be resolved by loading the config from disk".into(),
            )),
        }
    }

    pub fn build_matrix(&self) -> Result<ValidatedMatrix, HarnessError> {
        let rows = match &self.matrix {
            MatrixSpec::MeanField { n } => {
                if *n == 0 {
                    return Err(HarnessError::Config("matrix.n must be >= 1".into()));
                }
                mean_field(*n)
            }
            MatrixSpec::Inline { rows } => rows.clone(),
            MatrixSpec::File { .. } => {
                self.matrix_size()?;
                unreachable!()
            }
        };
        validate_matrix(&rows, DEFAULT_COLUMN_TOL).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn build_sequence(&self) -> Result<ReinforcementSequence, HarnessError> {
        self.sequence
            .build()
            .map_err(|e| HarnessError::Config(format!("sequence: {e}")))
    }

    pub fn initial_condition(&self, n_agents: usize) -> Result<InitialCondition, HarnessError> {
        let z = match &self.z0 {
            Z0Spec::Constant { value } => vec![*value; n_agents],
            Z0Spec::Fixed { z } => z.clone(),
            Z0Spec::UniformProduct => return Ok(InitialCondition::UniformProduct),
        };
        if z.len() != n_agents || z.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(HarnessError::Config(format!(
                "z0 must have {n_agents} components in [0, 1]"
            )));
        }
        Ok(InitialCondition::Fixed { z })
    }

    pub fn estimation(&self) -> Result<&EstimationBlock, HarnessError> {
        self.estimation
            .as_ref()
            .ok_or_else(|| HarnessError::Config("this command needs an [estimation] block".into()))
    }

    /// SHA-256 of the canonical JSON form, hex encoded. Thread count,
    /// execution mode and output settings do not change results and are
    /// left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.replication.threads = None;
        canonical.replication.execution = Execution::default();
        canonical.output = OutputBlock::default();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>, HarnessError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = r#"
[matrix]
kind = "mean_field"
n = 3

[sequence]
family = "power_law"
c = 1.0
gamma = 0.75
b = 0.1

[z0]
kind = "constant"
value = 0.5

[simulation]
n_steps = 10000
checkpoints = [100, 10000]

[estimation]
n = 100
t = 10100
k = 100

[replication]
runs = 100
master_seed = 7

[output]
dir = "out"
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str(FIG1).unwrap();
        cfg.validate().unwrap();
        let est = cfg.estimation().unwrap();
        assert_eq!(est.alpha, 0.05);
        assert_eq!(est.long_horizon, 100_000);
        assert_eq!(cfg.sequence.cap, 0.99);
        assert_eq!(cfg.replication.execution, Execution::Parallel);
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = ExperimentConfig::from_toml_str(FIG1).unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
        let mut other = cfg.clone();
        other.replication.threads = Some(3);
        other.output.dir = "elsewhere".into();
        assert_eq!(cfg.hash(), other.hash());
        other.replication.master_seed += 1;
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn rejects_bad_blocks() {
        let bad = FIG1.replace("t = 10100", "t = 100");
        let cfg = ExperimentConfig::from_toml_str(&bad).unwrap();
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
        let bad = FIG1.replace("runs = 100", "runs = 0");
        assert!(ExperimentConfig::from_toml_str(&bad).unwrap().validate().is_err());
        let bad = FIG1.replace("k = 100", "k = 100\nbogus = 1");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = FIG1.replace("value = 0.5", "value = 1.5");
        assert!(ExperimentConfig::from_toml_str(&bad).unwrap().validate().is_err());
    }

    #[test]
    fn file_matrix_is_inlined() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("w.csv"), "0.5, 0.25\n0.5, 0.75\n").unwrap();
        let text = FIG1.replace("kind = \"mean_field\"\nn = 3", "kind = \"file\"\npath = \"w.csv\"");
        std::fs::write(dir.path().join("c.toml"), text).unwrap();
        let cfg = ExperimentConfig::load(&dir.path().join("c.toml")).unwrap();
        assert_eq!(
            cfg.matrix,
            MatrixSpec::Inline {
                rows: vec![vec![0.5, 0.25], vec![0.5, 0.75]]
            }
        );
        let v = cfg.build_matrix().unwrap();
        assert!((v.left_eigenvector().unwrap()[0] - 1.0 / 3.0).abs() < 1e-12);
    }
}
