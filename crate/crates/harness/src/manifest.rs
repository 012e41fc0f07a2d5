//! `manifest.json`: how a run directory was produced and how far it got.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fsutil::write_json;
use crate::{io_at, CliError};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRef {
    pub path: String,
    pub name: String,
    /// Hex SHA-256 of the input contents.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// Full argument vector, enough to rerun the command.
    pub argv: Vec<String>,
    pub tool_version: String,
    pub template_version: String,
    pub seed: Option<u64>,
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default)]
    pub methods: Vec<String>,
    #[serde(default)]
    pub inputs: Vec<InputRef>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Methods or cells skipped without failing the run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Files written, relative to the run directory.
    #[serde(default)]
    pub outputs: Vec<String>,
    /// RFC 3339; the only nondeterministic field of a run.
    pub created: String,
}

impl Manifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        Self {
            command: command.into(),
            argv: argv.to_vec(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            template_version: llmexpert_core::prompting::TEMPLATE_VERSION.trim().into(),
            seed: None,
            models: Vec::new(),
            methods: Vec::new(),
            inputs: Vec::new(),
            status: RunStatus::Running,
            failure_stage: None,
            error: None,
            notes: Vec::new(),
            outputs: Vec::new(),
            created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn write(&self, run_dir: &Path) -> Result<(), CliError> {
        let path = run_dir.join(MANIFEST);
        write_json(&path, self).map_err(io_at(&path))
    }

    pub fn read(run_dir: &Path) -> Result<Self, CliError> {
        let path = run_dir.join(MANIFEST);
        let bytes = std::fs::read(&path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn output(&mut self, rel: impl Into<String>) {
        let rel = rel.into();
        if !self.outputs.contains(&rel) {
            self.outputs.push(rel);
        }
    }

    /// Records the failure, writes the manifest and returns the error to
    /// surface.
    pub fn fail(&mut self, run_dir: &Path, stage: &str, err: CliError) -> CliError {
        self.status = match err {
            CliError::Config(_) => RunStatus::Failed,
            _ => RunStatus::Partial,
        };
        self.failure_stage = Some(stage.into());
        self.error = Some(err.to_string());
        match self.write(run_dir) {
            Ok(()) => err,
            Err(write_err) => write_err,
        }
    }
}
