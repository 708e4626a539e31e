//! Execution stage: drives a device through an observe, think, act loop
//! while collecting logs, metrics and GUI checkpoints.

use std::fmt;

use revperf_core::{extract_frame_stats, CommandOutcome, DeviceCommand, FrameStatsSample, GuiError, GuiState, LogEntry, MetricSample, Selector};
use revperf_device::BackendError;
use revperf_reasoner::ReasonerError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod adjust;
pub mod episode;
pub mod grammar;
pub mod observe;

pub use adjust::adjustments_for;
pub use episode::{check_transition, decide_next, run_episode, Episode, EpisodeAbort, EpisodeOutput, AGENT_CHANNEL, TRANSITION_CHANNEL};
pub use grammar::{operation_grammar, parse_command};
pub use observe::{build_observation, operation_catalog, render_gui, Observation, OperationDescriptor};

pub const MIN_WAIT_MS: u64 = 100;
pub const MAX_WAIT_MS: u64 = 60_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("device unreachable: {0}")]
    DeviceUnreachable(String),
    #[error("malformed reasoner output: {0}")]
    MalformedReasonerOutput(String),
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
    #[error("backend error: {0}")]
    Backend(String),
}

impl From<BackendError> for AgentError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::DeviceUnreachable(m) => AgentError::DeviceUnreachable(m),
            other => AgentError::Backend(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub step_budget: usize,
    pub gui_char_cap: usize,
    pub reproduction_token_budget: usize,
    /// Ask the reasoner after each successful step whether the issue shows.
    pub ask_transition: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { step_budget: 25, gui_char_cap: 8000, reproduction_token_budget: 10_000, ask_transition: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationError {
    SelectorNotFound(String),
    Ambiguous { selector: String, count: usize },
    OutOfBounds { x: i32, y: i32 },
    DurationOutOfRange(u64),
    InvalidPayload(String),
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationError::SelectorNotFound(s) => write!(f, "no node matches {s}"),
            ValidationError::Ambiguous { selector, count } => write!(f, "{selector} matches {count} nodes"),
            ValidationError::OutOfBounds { x, y } => write!(f, "point ({x}, {y}) is outside the screen"),
            ValidationError::DurationOutOfRange(ms) => {
                write!(f, "wait of {ms} ms is outside [{MIN_WAIT_MS}, {MAX_WAIT_MS}]")
            }
            ValidationError::InvalidPayload(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for ValidationError {}

/// Checks a command against the current screen without touching the device.
pub fn validate_command(cmd: &DeviceCommand, gui: &GuiState) -> Result<(), ValidationError> {
    cmd.check_payload().map_err(ValidationError::InvalidPayload)?;
    let screen = gui.root.bounds;
    let in_screen = |x: i32, y: i32| {
        if screen.contains(x, y) {
            Ok(())
        } else {
            Err(ValidationError::OutOfBounds { x, y })
        }
    };
    match cmd {
        DeviceCommand::Wait { duration_ms } if !(MIN_WAIT_MS..=MAX_WAIT_MS).contains(duration_ms) => {
            Err(ValidationError::DurationOutOfRange(*duration_ms))
        }
        DeviceCommand::Swipe { from, to, .. } => {
            in_screen(from.0, from.1)?;
            in_screen(to.0, to.1)
        }
        DeviceCommand::Click { target } | DeviceCommand::InputText { target: Some(target), .. } => match target {
            Selector::Point { x, y } => in_screen(*x, *y),
            sel => gui.root.resolve(sel).map(|_| ()).map_err(|e| match e {
                GuiError::AmbiguousSelector { selector, count } => ValidationError::Ambiguous { selector, count },
                _ => ValidationError::SelectorNotFound(sel.to_string()),
            }),
        },
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub command: DeviceCommand,
    pub detail: String,
    pub step: usize,
}

/// Commands that failed or were rejected, in the order they happened.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedAttemptLedger {
    entries: Vec<LedgerEntry>,
}

impl FailedAttemptLedger {
    pub fn record(&mut self, command: DeviceCommand, detail: impl Into<String>, step: usize) {
        self.entries.push(LedgerEntry { command, detail: detail.into(), step });
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Earliest entry with the same kind and target as `cmd`.
    pub fn find(&self, cmd: &DeviceCommand) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| same_attempt(&e.command, cmd))
    }

    pub fn contains(&self, cmd: &DeviceCommand) -> bool {
        self.find(cmd).is_some()
    }

    /// Prompt text listing every failed attempt.
    pub fn digest(&self) -> String {
        if self.entries.is_empty() {
            return "none".to_string();
        }
        self.entries
            .iter()
            .map(|e| format!("- step {}: {} -> {}", e.step, e.command, e.detail))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Two commands are the same attempt when kind and target agree.
pub fn same_attempt(a: &DeviceCommand, b: &DeviceCommand) -> bool {
    a.kind() == b.kind() && a.target() == b.target()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Executed,
    /// The device ran the command but reported failure.
    Failed,
    /// Validation refused the command; the device never saw it.
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    pub command: DeviceCommand,
    pub status: StepStatus,
    /// Outcome without the GUI snapshot; the checkpoints carry that.
    pub outcome: CommandOutcome,
    pub activity_before: String,
    pub digest_before: String,
    pub digest_after: String,
    /// Device clock once the step finished.
    pub timestamp: i64,
}

impl TraceStep {
    pub fn gui_unchanged(&self) -> bool {
        self.digest_before == self.digest_after
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub steps: Vec<TraceStep>,
    pub ledger: FailedAttemptLedger,
    pub started_at: i64,
    pub ended_at: i64,
}

impl ExecutionTrace {
    pub fn duration_ms(&self) -> i64 {
        self.ended_at - self.started_at
    }

    /// Steps the device actually ran.
    pub fn executed(&self) -> impl Iterator<Item = &TraceStep> {
        self.steps.iter().filter(|s| s.status != StepStatus::Rejected)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub label: String,
    pub step: usize,
    pub state: GuiState,
}

impl Checkpoint {
    pub fn before_label(step: usize) -> String {
        format!("step-{step:03}-before")
    }

    pub fn after_label(step: usize) -> String {
        format!("step-{step:03}-after")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitoringBundle {
    pub logs: Vec<LogEntry>,
    pub frames: Vec<FrameStatsSample>,
    pub metrics: Vec<MetricSample>,
    pub gui_checkpoints: Vec<Checkpoint>,
}

impl MonitoringBundle {
    /// Builds a bundle, deriving the frame stream from the logs.
    pub fn new(logs: Vec<LogEntry>, metrics: Vec<MetricSample>, gui_checkpoints: Vec<Checkpoint>) -> Self {
        let frames = logs.iter().filter_map(extract_frame_stats).collect();
        MonitoringBundle { logs, frames, metrics, gui_checkpoints }
    }

    pub fn checkpoint(&self, label: &str) -> Option<&Checkpoint> {
        self.gui_checkpoints.iter().find(|c| c.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "detail")]
pub enum TransitionReason {
    /// The reasoner judged the screen to show the complaint.
    IssueObserved,
    DetectorInvoked,
    StepBudgetExhausted,
    /// The reasoner could not produce a usable answer; the episode stops
    /// with what it has.
    ReasonerStopped(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use revperf_core::parse_gui_dump;

    const GUI: &str = r#"<hierarchy><node class="root" bounds="[0,0][1080,1920]"><node class="b" resource-id="a:id/fab_add" bounds="[880,1720][1040,1880]"/><node class="t" resource-id="a:id/dup" text="Hi" bounds="[0,0][10,10]"/><node class="t" resource-id="a:id/dup" bounds="[0,10][10,20]"/></node></hierarchy>"#;

    fn click(id: &str) -> DeviceCommand {
        DeviceCommand::Click { target: Selector::ResourceId(id.into()) }
    }

    #[test]
    fn validation_examples() {
        let gui = parse_gui_dump(GUI).unwrap();
        assert_eq!(validate_command(&click("fab_add"), &gui), Ok(()));
        assert!(matches!(validate_command(&click("nope"), &gui), Err(ValidationError::SelectorNotFound(_))));
        assert!(matches!(validate_command(&click("dup"), &gui), Err(ValidationError::Ambiguous { count: 2, .. })));
        assert_eq!(
            validate_command(&DeviceCommand::Wait { duration_ms: 0 }, &gui),
            Err(ValidationError::InvalidPayload("wait duration must be > 0".into()))
        );
        assert_eq!(
            validate_command(&DeviceCommand::Wait { duration_ms: 99 }, &gui),
            Err(ValidationError::DurationOutOfRange(99))
        );
        assert_eq!(validate_command(&DeviceCommand::Wait { duration_ms: 60_000 }, &gui), Ok(()));
        assert_eq!(
            validate_command(&DeviceCommand::Click { target: Selector::Point { x: 2000, y: 5 } }, &gui),
            Err(ValidationError::OutOfBounds { x: 2000, y: 5 })
        );
        let text = DeviceCommand::Click { target: Selector::Text("Hi".into()) };
        assert_eq!(validate_command(&text, &gui), Ok(()));
        let swipe = DeviceCommand::Swipe { from: (500, 1500), to: (500, -1), duration_ms: 300 };
        assert_eq!(validate_command(&swipe, &gui), Err(ValidationError::OutOfBounds { x: 500, y: -1 }));
    }

    #[test]
    fn ledger_matches_kind_and_target() {
        let mut ledger = FailedAttemptLedger::default();
        assert_eq!(ledger.digest(), "none");
        ledger.record(click("save"), "no node matches id=save", 3);
        assert!(ledger.contains(&click("save")));
        assert!(!ledger.contains(&click("fab_add")));
        assert!(ledger.digest().contains("CLICK id=save"));
        let typed = DeviceCommand::InputText { target: Some(Selector::ResourceId("save".into())), text: "x".into() };
        assert!(!ledger.contains(&typed));
    }
}
