use std::path::Path;

use oslr_core::analysis::TestOutcome;
use oslr_core::design::DesignResult;
use oslr_core::presets::SweepScenario;
use oslr_core::simulate::{OperatingRow, SimulationReport, SweepReport, TableRow};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

pub const TOOL: &str = "oslr";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub scenario: SweepScenario,
    pub report: SweepReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "result", rename_all = "snake_case")]
pub enum Payload {
    Design(DesignResult),
    Analysis(TestOutcome),
    Simulation(SimulationReport),
    Sweep(Vec<SweepResult>),
    Table(Vec<TableRow>),
    Operating(Vec<OperatingRow>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// RFC 3339, UTC.
    pub generated_at: String,
    /// Effective configuration, including the seed and replication count
    /// actually used; running it again reproduces `payload`.
    pub config: RunConfig,
    pub payload: Payload,
    pub warnings: Vec<String>,
}

impl ReportEnvelope {
    pub fn new(command: &str, config: RunConfig, payload: Payload, warnings: Vec<String>) -> Self {
        let generated_at = time::OffsetDateTime::now_utc()
            .format(&time::format_description::well_known::Rfc3339)
            .unwrap_or_default();
        Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            generated_at,
            config,
            payload,
            warnings,
        }
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Serialise(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Serialise(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| CliError::io(path, e))
    }
}
