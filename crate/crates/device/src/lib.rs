//! Device backends: the contract the agent drives, an ADB adapter for real
//! emulators and a deterministic simulator for tests.

use revperf_core::{CommandOutcome, DeviceCommand, GuiError, GuiState, LogEntry, MetricSample};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod adb;
pub mod sim;

pub use adb::{AdbBackend, AdbConfig, AdbRunner, ProcessRunner, RunOutput};
pub use sim::{load_scenario, parse_scenario, FaultSpec, Scenario, ScenarioError, Screen, SimDevice, Transition};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("device unreachable: {0}")]
    DeviceUnreachable(String),
    #[error("selector not found: {0}")]
    SelectorNotFound(String),
    #[error("malformed ui dump: {0}")]
    MalformedDump(String),
    #[error("invalid command: {0}")]
    InvalidCommand(String),
}

impl From<GuiError> for BackendError {
    fn from(e: GuiError) -> Self {
        match e {
            GuiError::MalformedDump(m) => BackendError::MalformedDump(m),
            other => BackendError::SelectorNotFound(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendCapabilities {
    pub supports_rotation: bool,
    pub supports_lock: bool,
    pub supports_settings: bool,
    pub log_streaming: bool,
}

impl BackendCapabilities {
    pub const ALL: BackendCapabilities =
        BackendCapabilities { supports_rotation: true, supports_lock: true, supports_settings: true, log_streaming: true };
}

/// Operations the agent and the monitors need from a device.
///
/// Commands are issued one at a time; the caller owns the backend for the
/// whole episode.
pub trait DeviceBackend: Send {
    fn capabilities(&self) -> BackendCapabilities;

    /// Performs one command. `Wait` blocks (or advances simulated time) for
    /// its duration; `InvokeDetector` touches nothing.
    fn execute_command(&mut self, cmd: &DeviceCommand) -> Result<CommandOutcome, BackendError>;

    fn dump_gui(&mut self) -> Result<GuiState, BackendError>;

    /// Every entry with `timestamp > since`, in stream order.
    fn poll_logs(&mut self, since: i64) -> Result<Vec<LogEntry>, BackendError>;

    fn sample_metrics(&mut self) -> Result<MetricSample, BackendError>;

    /// Device clock in epoch milliseconds.
    fn now_ms(&self) -> i64;

    /// Restores anything the episode changed (rotation settings, log reader).
    fn finish(&mut self) -> Result<(), BackendError> {
        Ok(())
    }
}

impl<B: DeviceBackend + ?Sized> DeviceBackend for Box<B> {
    fn capabilities(&self) -> BackendCapabilities {
        (**self).capabilities()
    }
    fn execute_command(&mut self, cmd: &DeviceCommand) -> Result<CommandOutcome, BackendError> {
        (**self).execute_command(cmd)
    }
    fn dump_gui(&mut self) -> Result<GuiState, BackendError> {
        (**self).dump_gui()
    }
    fn poll_logs(&mut self, since: i64) -> Result<Vec<LogEntry>, BackendError> {
        (**self).poll_logs(since)
    }
    fn sample_metrics(&mut self) -> Result<MetricSample, BackendError> {
        (**self).sample_metrics()
    }
    fn now_ms(&self) -> i64 {
        (**self).now_ms()
    }
    fn finish(&mut self) -> Result<(), BackendError> {
        (**self).finish()
    }
}
