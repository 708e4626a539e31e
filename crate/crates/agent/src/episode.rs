//! The reproduction loop and its runtime monitors.

use std::fmt;

use revperf_augment::EnrichedReview;
use revperf_core::{CommandOutcome, DeviceCommand, GuiState, LogEntry, MetricSample};
use revperf_device::{BackendError, DeviceBackend};
use revperf_reasoner::{compress_history, complete, Conversation, Message, Reasoner};

use crate::adjust::adjustments_for;
use crate::grammar::parse_command;
use crate::observe::{build_observation, render_gui, review_prompt, system_prompt, operation_catalog};
use crate::{
    validate_command, AgentConfig, AgentError, Checkpoint, ExecutionTrace, FailedAttemptLedger, MonitoringBundle,
    StepStatus, TraceStep, TransitionReason,
};

pub const AGENT_CHANNEL: &str = "agent";
pub const TRANSITION_CHANNEL: &str = "transition";

/// Asks for the next command.
///
/// The turn text is appended to `conv`, which is compressed to `budget`
/// before every call. A reply that does not parse, or that repeats a
/// command from the ledger, gets one corrective reprompt.
pub fn decide_next(
    turn: &str,
    conv: &mut Conversation,
    reasoner: &dyn Reasoner,
    ledger: &FailedAttemptLedger,
    budget: usize,
) -> Result<DeviceCommand, AgentError> {
    conv.push(Message::user(turn));
    for attempt in 0..2 {
        *conv = compress_history(conv, budget, None)?;
        let reply = complete(conv, budget, reasoner)?;
        conv.push(Message::assistant(reply.clone()));
        let problem = match parse_command(&reply) {
            Ok(cmd) => match ledger.find(&cmd) {
                None => return Ok(cmd),
                Some(e) => format!(
                    "`{cmd}` already failed at step {} ({}). Choose an alternative UI component or backtrack.",
                    e.step, e.detail
                ),
            },
            Err(e) => format!("{e}. Reply with exactly one command line from the operation list."),
        };
        if attempt == 1 {
            return Err(AgentError::MalformedReasonerOutput(problem));
        }
        conv.push(Message::user(problem));
    }
    unreachable!("loop returns on its second pass")
}

fn parse_yes_no(reply: &str) -> Option<bool> {
    reply.lines().rev().find_map(|l| {
        let l = l.trim().trim_start_matches("VERDICT:").trim();
        let word: String = l.chars().take_while(|c| c.is_ascii_alphabetic()).collect::<String>().to_ascii_uppercase();
        match word.as_str() {
            "YES" => Some(true),
            "NO" => Some(false),
            _ => None,
        }
    })
}

fn ask_gui_matches(
    gui: &GuiState,
    enriched: &EnrichedReview,
    reasoner: &dyn Reasoner,
    config: &AgentConfig,
) -> Result<bool, AgentError> {
    let mut conv = Conversation::with_channel(TRANSITION_CHANNEL);
    conv.push(Message::system(
        "Decide whether the current screen already shows the performance problem described. \
         Answer with a single word: YES or NO.",
    ));
    conv.push(Message::user(format!(
        "Problem: {}\n\nCurrent screen:\n{}",
        enriched.symptom_summary.trim(),
        render_gui(gui, config.gui_char_cap)
    )));
    for attempt in 0..2 {
        let reply = complete(&conv, config.reproduction_token_budget, reasoner)?;
        if let Some(v) = parse_yes_no(&reply) {
            return Ok(v);
        }
        if attempt == 1 {
            return Err(AgentError::MalformedReasonerOutput(format!("expected YES or NO, got `{}`", reply.trim())));
        }
        conv.push(Message::assistant(reply));
        conv.push(Message::user("Answer with exactly one word: YES or NO."));
    }
    unreachable!("loop returns on its second pass")
}

/// Decides whether execution hands over to detection.
///
/// `last` is the command just decided on or executed. Detector invocation
/// and budget exhaustion need no reasoner; otherwise, when enabled, the
/// reasoner judges the screen after each successful state-changing step.
pub fn check_transition(
    gui: &GuiState,
    enriched: &EnrichedReview,
    trace: &ExecutionTrace,
    last: Option<&DeviceCommand>,
    reasoner: &dyn Reasoner,
    config: &AgentConfig,
) -> Result<Option<TransitionReason>, AgentError> {
    if matches!(last, Some(DeviceCommand::InvokeDetector)) {
        return Ok(Some(TransitionReason::DetectorInvoked));
    }
    if trace.steps.len() >= config.step_budget {
        return Ok(Some(TransitionReason::StepBudgetExhausted));
    }
    let judge = config.ask_transition
        && trace
            .steps
            .last()
            .is_some_and(|s| s.status == StepStatus::Executed && s.command.is_state_changing());
    if judge && ask_gui_matches(gui, enriched, reasoner, config)? {
        return Ok(Some(TransitionReason::IssueObserved));
    }
    Ok(None)
}

/// Log, metric and checkpoint collection for one episode.
#[derive(Debug, Default)]
struct Monitor {
    logs: Vec<LogEntry>,
    metrics: Vec<MetricSample>,
    checkpoints: Vec<Checkpoint>,
    last_log_ts: i64,
    seen_at_last: usize,
}

impl Monitor {
    fn start(&mut self, backend: &mut dyn DeviceBackend) -> Result<(), BackendError> {
        self.last_log_ts = backend.now_ms();
        self.poll(backend)?;
        self.metrics.push(backend.sample_metrics()?);
        Ok(())
    }

    /// Pulls entries newer than the last one seen. Entries sharing the last
    /// timestamp are re-read and the known ones skipped.
    fn poll(&mut self, backend: &mut dyn DeviceBackend) -> Result<(), BackendError> {
        let mut skip = self.seen_at_last;
        for e in backend.poll_logs(self.last_log_ts - 1)? {
            if e.timestamp < self.last_log_ts {
                continue;
            }
            if e.timestamp == self.last_log_ts && skip > 0 {
                skip -= 1;
                continue;
            }
            if e.timestamp > self.last_log_ts {
                self.last_log_ts = e.timestamp;
                self.seen_at_last = 0;
            }
            self.seen_at_last += 1;
            self.logs.push(e);
        }
        Ok(())
    }

    fn after_command(&mut self, backend: &mut dyn DeviceBackend) -> Result<(), BackendError> {
        self.poll(backend)?;
        self.metrics.push(backend.sample_metrics()?);
        Ok(())
    }

    fn snapshot(&self) -> MonitoringBundle {
        let mut logs = self.logs.clone();
        logs.sort_by_key(|e| e.timestamp);
        let mut metrics = self.metrics.clone();
        metrics.sort_by_key(|m| m.timestamp);
        MonitoringBundle::new(logs, metrics, self.checkpoints.clone())
    }
}

/// An execution episode that can be resumed after an unsuccessful detection
/// round. The step budget covers all runs together.
pub struct Episode<'a> {
    enriched: &'a EnrichedReview,
    reasoner: &'a dyn Reasoner,
    config: AgentConfig,
    conv: Conversation,
    trace: ExecutionTrace,
    monitor: Monitor,
    gui: Option<GuiState>,
    last_outcome: Option<CommandOutcome>,
    runs: usize,
}

impl<'a> Episode<'a> {
    pub fn new(enriched: &'a EnrichedReview, reasoner: &'a dyn Reasoner, config: AgentConfig) -> Self {
        Episode {
            enriched,
            reasoner,
            config,
            conv: Conversation::with_channel(AGENT_CHANNEL),
            trace: ExecutionTrace::default(),
            monitor: Monitor::default(),
            gui: None,
            last_outcome: None,
            runs: 0,
        }
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    /// Immutable copy of everything collected so far.
    pub fn bundle(&self) -> MonitoringBundle {
        self.monitor.snapshot()
    }

    pub fn conversation(&self) -> &Conversation {
        &self.conv
    }

    pub fn budget_left(&self) -> usize {
        self.config.step_budget.saturating_sub(self.trace.steps.len())
    }

    /// Runs until a transition condition holds. The first call applies
    /// environment adjustments and launches the app; later calls continue
    /// from the current screen.
    pub fn run(&mut self, backend: &mut dyn DeviceBackend) -> Result<TransitionReason, AgentError> {
        let result = self.run_inner(backend);
        self.trace.ended_at = backend.now_ms().max(self.trace.started_at);
        result
    }

    fn run_inner(&mut self, backend: &mut dyn DeviceBackend) -> Result<TransitionReason, AgentError> {
        self.runs += 1;
        let mut note = None;
        if self.runs == 1 {
            self.trace.started_at = backend.now_ms();
            self.monitor.start(backend)?;
            self.gui = Some(backend.dump_gui()?);
            let mut setup = adjustments_for(&self.enriched.triggers);
            setup.push(DeviceCommand::LaunchApp { package: self.enriched.original.app_id.clone() });
            for cmd in setup {
                if self.budget_left() == 0 {
                    break;
                }
                self.act(backend, cmd)?;
            }
            self.conv.push_pinned(Message::system(system_prompt(&operation_catalog())));
            self.conv.push_pinned(Message::user(review_prompt(self.enriched)));
        } else {
            note = Some("Detection has not confirmed the problem yet. Keep reproducing it from the current screen.");
        }

        loop {
            if self.budget_left() == 0 {
                return Ok(TransitionReason::StepBudgetExhausted);
            }
            let gui = self.gui.clone().expect("screen captured at start");
            let status = format!("Step {} of {}", self.trace.steps.len() + 1, self.config.step_budget);
            let (obs, _) = build_observation(
                &gui,
                self.enriched,
                &self.trace.ledger,
                self.last_outcome.as_ref(),
                &status,
                self.config.gui_char_cap,
            );
            let mut turn = obs.turn_text(self.config.gui_char_cap);
            if let Some(n) = note.take() {
                turn = format!("{n}\n{turn}");
            }
            let cmd = match decide_next(
                &turn,
                &mut self.conv,
                self.reasoner,
                &self.trace.ledger,
                self.config.reproduction_token_budget,
            ) {
                Ok(cmd) => cmd,
                Err(e) => return Ok(TransitionReason::ReasonerStopped(e.to_string())),
            };
            if cmd != DeviceCommand::InvokeDetector {
                self.act(backend, cmd.clone())?;
            }
            let gui = self.gui.as_ref().expect("screen captured at start");
            match check_transition(gui, self.enriched, &self.trace, Some(&cmd), self.reasoner, &self.config) {
                Ok(Some(reason)) => return Ok(reason),
                Ok(None) => {}
                Err(e) => return Ok(TransitionReason::ReasonerStopped(e.to_string())),
            }
        }
    }

    /// Validates and executes one command, recording step, ledger entry,
    /// checkpoints and monitoring data.
    fn act(&mut self, backend: &mut dyn DeviceBackend, cmd: DeviceCommand) -> Result<(), AgentError> {
        let index = self.trace.steps.len() + 1;
        let before = self.gui.clone().expect("screen captured at start");
        let (status, mut outcome, after) = match validate_command(&cmd, &before) {
            Err(v) => (StepStatus::Rejected, CommandOutcome::failed(format!("rejected: {v}"), None, 0), before.clone()),
            Ok(()) => {
                let (status, mut outcome) = match backend.execute_command(&cmd) {
                    Ok(o) if o.success => (StepStatus::Executed, o),
                    Ok(o) => (StepStatus::Failed, o),
                    Err(e @ (BackendError::DeviceUnreachable(_) | BackendError::MalformedDump(_))) => return Err(e.into()),
                    Err(e) => (StepStatus::Failed, CommandOutcome::failed(e.to_string(), None, 0)),
                };
                let after = match outcome.gui_after.take() {
                    Some(g) => g,
                    None => backend.dump_gui()?,
                };
                self.monitor.after_command(backend)?;
                (status, outcome, after)
            }
        };
        outcome.gui_after = None;
        if status != StepStatus::Executed {
            self.trace.ledger.record(cmd.clone(), outcome.detail.clone(), index);
        }
        self.monitor.checkpoints.push(Checkpoint { label: Checkpoint::before_label(index), step: index, state: before.clone() });
        self.monitor.checkpoints.push(Checkpoint { label: Checkpoint::after_label(index), step: index, state: after.clone() });
        self.trace.steps.push(TraceStep {
            index,
            command: cmd,
            status,
            outcome: outcome.clone(),
            activity_before: before.foreground_activity.clone(),
            digest_before: before.digest(),
            digest_after: after.digest(),
            timestamp: backend.now_ms(),
        });
        self.gui = Some(after);
        self.last_outcome = Some(outcome);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutput {
    pub trace: ExecutionTrace,
    pub bundle: MonitoringBundle,
    pub reason: TransitionReason,
}

/// An episode cut short by the device; what was collected is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeAbort {
    pub error: AgentError,
    pub trace: ExecutionTrace,
    pub bundle: MonitoringBundle,
}

impl fmt::Display for EpisodeAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "episode aborted after {} steps: {}", self.trace.steps.len(), self.error)
    }
}

impl std::error::Error for EpisodeAbort {}

/// One uninterrupted episode, followed by backend cleanup.
#[allow(clippy::result_large_err)]
pub fn run_episode(
    enriched: &EnrichedReview,
    backend: &mut dyn DeviceBackend,
    reasoner: &dyn Reasoner,
    config: &AgentConfig,
) -> Result<EpisodeOutput, EpisodeAbort> {
    let mut episode = Episode::new(enriched, reasoner, config.clone());
    let result = episode.run(backend);
    let _ = backend.finish();
    match result {
        Ok(reason) => Ok(EpisodeOutput { trace: episode.trace().clone(), bundle: episode.bundle(), reason }),
        Err(error) => Err(EpisodeAbort { error, trace: episode.trace().clone(), bundle: episode.bundle() }),
    }
}
