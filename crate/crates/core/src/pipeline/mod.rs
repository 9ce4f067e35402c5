//! Reproducible batch runs: simulate or ingest, optional subsampling,
//! discovery, prediction, and a manifest hashing every artifact.

mod stages;

pub use stages::{
    extract_features, run_discover, run_ingest, run_pipeline, run_predict, run_simulate,
    run_subsample, StageRecord,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::discovery::DiscoveryConfig;
use crate::features::{GoalSet, SubsampleConfig};
use crate::gpr::KernelConfig;
use crate::simulator::MovingObstacleSimConfig;
use crate::timeseries::SchemaConfig;
use crate::vo::DEFAULT_RADIUS;
use crate::{Error, Result};

pub const TRACKS_CSV: &str = "tracks.csv";
pub const FEATURES_CSV: &str = "features.csv";
pub const GROUND_TRUTH_JSON: &str = "ground_truth.json";
pub const KEPT_INDICES_CSV: &str = "kept_indices.csv";
pub const SUBSAMPLED_CSV: &str = "features_subsampled.csv";
pub const GRAPH_JSON: &str = "graph.json";
pub const GRAPH_DOT: &str = "graph.dot";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    HumanGoal,
    MovingObstacles,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS
}

/// A recorded tracking log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInput {
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
    #[serde(default = "SchemaConfig::simulator")]
    pub schema: SchemaConfig,
    /// Selected agent; defaults to the agent with the most samples.
    #[serde(default)]
    pub agent: Option<String>,
    pub goals: GoalSet,
    #[serde(default = "default_radius")]
    pub agent_radius: f64,
    #[serde(default = "default_radius")]
    pub obstacle_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum InputSource {
    /// Synthetic run; the human-goal scenario uses `simulation.agent` only.
    Simulator {
        #[serde(default)]
        simulation: MovingObstacleSimConfig,
    },
    Dataset(DatasetInput),
}

fn default_split() -> f64 {
    0.8
}

fn default_resample_dt() -> f64 {
    0.2
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scenario: Scenario,
    pub input: InputSource,
    /// Grid step for recorded tracks (s).
    #[serde(default = "default_resample_dt")]
    pub resample_dt: f64,
    #[serde(default)]
    pub subsample: Option<SubsampleConfig>,
    #[serde(default)]
    pub discovery: DiscoveryConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl PipelineConfig {
    /// Builtin synthetic configuration for `scenario`.
    pub fn synthetic(scenario: Scenario) -> Self {
        PipelineConfig {
            scenario,
            input: InputSource::Simulator {
                simulation: MovingObstacleSimConfig::default(),
            },
            resample_dt: default_resample_dt(),
            subsample: None,
            discovery: DiscoveryConfig::default(),
            kernel: KernelConfig::default(),
            split: default_split(),
            output_dir: default_output_dir(),
        }
    }

    /// Parse a JSON config; relative dataset paths become relative to the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let InputSource::Dataset(d) = &mut cfg.input {
            if d.path.is_relative() {
                if let Some(dir) = path.parent() {
                    d.path = dir.join(&d.path);
                }
            }
        }
        Ok(cfg)
    }

    /// Override every seed in the config.
    pub fn set_seed(&mut self, seed: u64) {
        self.discovery.seed = seed;
        if let InputSource::Simulator { simulation } = &mut self.input {
            simulation.agent.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.input {
            InputSource::Simulator { simulation } => match self.scenario {
                Scenario::HumanGoal => simulation.agent.validate()?,
                Scenario::MovingObstacles => simulation.validate()?,
            },
            InputSource::Dataset(d) => {
                d.schema
                    .validate()
                    .map_err(|e| Error::Config(e.to_string()))?;
                d.goals
                    .validate()
                    .map_err(|e| Error::Config(e.to_string()))?;
                if !(d.agent_radius > 0.0 && d.obstacle_radius > 0.0) {
                    return Err(Error::Config("radii must be positive".into()));
                }
            }
        }
        if !(self.resample_dt.is_finite() && self.resample_dt > 0.0) {
            return Err(Error::Config("resample_dt must be positive".into()));
        }
        if let Some(s) = &self.subsample {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.discovery.validate()?;
        self.kernel.validate()?;
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config("split must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of every field except `output_dir`.
    pub fn hash(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&value)?)))
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path relative to the output directory when inside it.
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, root: &Path) -> Result<Self> {
        let shown = path.strip_prefix(root).unwrap_or(path);
        Ok(FileDigest {
            path: shown.display().to_string(),
            sha256: file_sha256(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub scenario: Scenario,
    pub stages: Vec<StageRecord>,
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub created_unix: u64,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::io(path, e))
    }
}
