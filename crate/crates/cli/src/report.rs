//! Versioned JSON report written by every subcommand.

use std::collections::BTreeMap;
use std::fmt;

use janeeye::accel::{EnergyError, ScheduleError, SimError};
use janeeye::event_io::EventError;
use janeeye::model_io::ModelIoError;
use janeeye::network::{ConfigError, NetworkError};
use serde::Serialize;
use serde_json::Value;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Default, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub tool_version: String,
    pub inputs: BTreeMap<String, String>,
    pub params: BTreeMap<String, Value>,
    pub outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Manifest {
    pub fn new(subcommand: &str) -> Self {
        Manifest { subcommand: subcommand.into(), tool_version: env!("CARGO_PKG_VERSION").into(), ..Default::default() }
    }

    pub fn input(&mut self, k: &str, v: impl fmt::Display) {
        self.inputs.insert(k.into(), v.to_string());
    }

    pub fn output(&mut self, k: &str, v: impl fmt::Display) {
        self.outputs.insert(k.into(), v.to_string());
    }

    pub fn param(&mut self, k: &str, v: impl Serialize) {
        self.params.insert(k.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorInfo {
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub manifest: Manifest,
    pub results: Value,
    pub counters: Value,
    pub error: Option<ErrorInfo>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    pub fn io(path: &str, e: std::io::Error) -> Self {
        CliError::new("io", format!("{path}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<EventError> for CliError {
    fn from(e: EventError) -> Self {
        let code = match e {
            EventError::Io(_) => "io",
            EventError::InvalidParameter(_) | EventError::NotDivisible { .. } => "invalid_argument",
            _ => "event_parse",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ModelIoError> for CliError {
    fn from(e: ModelIoError) -> Self {
        let code = match e {
            ModelIoError::Io(_) => "io",
            ModelIoError::Checksum => "checksum",
            ModelIoError::Shape(_) | ModelIoError::Weights(_) => "shape",
            _ => "model_format",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new("config", e.to_string())
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        let code = match e {
            NetworkError::InputShape { .. } | NetworkError::Weights(_) => "shape",
            NetworkError::Config(_) => "config",
            NetworkError::MissingFixedWeights => "missing_weights",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> Self {
        let code = match e {
            ScheduleError::Sram { .. } => "sram_overflow",
            ScheduleError::TileBuffer { .. } => "tile_buffer",
            ScheduleError::Config(_) => "config",
            ScheduleError::Hardware(_) => "invalid_argument",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<EnergyError> for CliError {
    fn from(e: EnergyError) -> Self {
        CliError::new("coefficients", e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Schedule(e) => e.into(),
            SimError::Energy(e) => e.into(),
            SimError::Network(e) => e.into(),
            e => CliError::new("invalid_argument", e.to_string()),
        }
    }
}
