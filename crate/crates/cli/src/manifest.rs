use std::path::Path;

use fkdv::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// How a job ended.
#[derive(Clone, Debug)]
pub enum Outcome {
    Success,
    /// The job ran but did not meet its criteria.
    Failed(String),
    ConfigError(String),
    BlowUp { t: f64, message: String },
}

impl Outcome {
    pub fn from_error(e: Error) -> Outcome {
        match e {
            Error::BlowUp { t, .. } => Outcome::BlowUp {
                t,
                message: e.to_string(),
            },
            other => Outcome::ConfigError(other.to_string()),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Failed(_) | Outcome::ConfigError(_) => 1,
            Outcome::BlowUp { .. } => 2,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failed(_) => "failed",
            Outcome::ConfigError(_) => "config_error",
            Outcome::BlowUp { .. } => "blow_up",
        }
    }

    pub fn message(&self) -> Option<&str> {
        match self {
            Outcome::Success => None,
            Outcome::Failed(m) | Outcome::ConfigError(m) => Some(m),
            Outcome::BlowUp { message, .. } => Some(message),
        }
    }
}

/// `manifest.json`, written once per run.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub scenario: Option<String>,
    pub config_path: Option<String>,
    pub output_dir: String,
    pub tool_version: String,
    /// SHA-256 of the config file bytes.
    pub config_sha256: Option<String>,
    pub wall_time_seconds: f64,
    pub status: String,
    pub exit_code: u8,
    pub message: Option<String>,
    pub blow_up_time: Option<f64>,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, scenario: Option<String>, config: Option<&Path>, out: &Path) -> Manifest {
        Manifest {
            command: command.to_string(),
            scenario,
            config_path: config.map(|p| p.display().to_string()),
            output_dir: out.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: None,
            wall_time_seconds: 0.0,
            status: "running".into(),
            exit_code: 1,
            message: None,
            blow_up_time: None,
            artifacts: Vec::new(),
        }
    }

    pub fn set_config_bytes(&mut self, bytes: Option<&[u8]>) {
        self.config_sha256 = bytes.map(|b| hex::encode(Sha256::digest(b)));
    }

    pub fn finish(&mut self, outcome: &Outcome, artifacts: &[String], wall: f64) {
        self.status = outcome.status().into();
        self.exit_code = outcome.exit_code();
        self.message = outcome.message().map(String::from);
        if let Outcome::BlowUp { t, .. } = outcome {
            self.blow_up_time = Some(*t);
        }
        self.artifacts = artifacts.to_vec();
        self.wall_time_seconds = wall;
    }

    pub fn write(&self, out: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(out.join("manifest.json"), text)
    }
}
