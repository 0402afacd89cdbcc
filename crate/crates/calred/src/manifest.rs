//! Run manifests and partial configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use calred_core::sim::ExperimentSpec;
use calred_core::{AngleDerivative, DenoiserSpec, Method, ProjectorConfig, SolverConfig, SupportMask};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::fsutil::{absolute, sha256_file, write_atomic};

pub const TOOL: &str = "calred";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self, CliError> {
        Ok(Self {
            path: absolute(path),
            sha256: sha256_file(path)?,
        })
    }
}

/// Fully resolved configuration of one command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub projector: ProjectorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
}

/// Step sizes actually used, after defaults were resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSteps {
    pub gamma_x: f64,
    pub gamma_theta: f64,
}

/// Everything needed to re-run a command and check its inputs.
/// `started_at` is informational only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub started_at: String,
    pub seed: u64,
    pub out_prefix: PathBuf,
    pub inputs: BTreeMap<String, FileRecord>,
    pub outputs: BTreeMap<String, FileRecord>,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved: Option<ResolvedSteps>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, out_prefix: &Path, config: RunConfig) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            seed,
            out_prefix: absolute(out_prefix),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            config,
            resolved: None,
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, |f| std::io::Write::write_all(f, text.as_bytes()))
    }

    /// Fails if an input file changed since the manifest was written.
    pub fn verify_inputs(&self) -> Result<(), CliError> {
        for (role, rec) in &self.inputs {
            let now = sha256_file(&rec.path)?;
            if now != rec.sha256 {
                return Err(CliError::format(
                    &rec.path,
                    format!("{role} input changed since the manifest was written"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default)]
pub struct ProjectorOverrides {
    pub n: Option<usize>,
    pub num_detectors: Option<usize>,
    pub support_mask: Option<SupportMask>,
    pub angle_derivative: Option<AngleDerivative>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default)]
pub struct ExperimentOverrides {
    pub num_angles: Option<usize>,
    pub angle_noise_sd_deg: Option<f64>,
    pub input_snr_db: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default)]
pub struct SolverOverrides {
    pub method: Option<Method>,
    pub gamma_x: Option<f64>,
    pub gamma_theta: Option<f64>,
    pub tau_x: Option<f64>,
    pub tau_theta: Option<f64>,
    pub tv_weight: Option<f64>,
    pub tv_iterations: Option<usize>,
    pub denoiser: Option<DenoiserSpec>,
    pub iterations: Option<usize>,
    pub accelerate: Option<bool>,
    pub seed: Option<u64>,
}

/// A `--config` file. Any field may be omitted. A manifest is accepted too:
/// its `config` section is used.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    pub projector: ProjectorOverrides,
    pub experiment: ExperimentOverrides,
    pub solver: SolverOverrides,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_json::from_value(value).map_err(|e| CliError::format(path, e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        path.map(Self::read).transpose().map(Option::unwrap_or_default)
    }
}
