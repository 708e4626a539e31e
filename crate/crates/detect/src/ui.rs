//! UI inspector: unresponsive input and failed navigation from checkpoints.

use revperf_agent::{Checkpoint, ExecutionTrace, MonitoringBundle, StepStatus, TraceStep};
use revperf_augment::EnrichedReview;
use revperf_core::{DeviceCommand, IssueCategory};
use revperf_reasoner::Reasoner;

use crate::prompt::{reasoner_review, Excerpt};
use crate::{Analyzer, Artifact, DetectConfig, DetectorVerdict, EvidenceItem};

/// Commands a user would expect to change the screen.
fn is_interaction(cmd: &DeviceCommand) -> bool {
    matches!(
        cmd,
        DeviceCommand::Click { .. } | DeviceCommand::Swipe { .. } | DeviceCommand::InputText { .. } | DeviceCommand::PressBack
    )
}

fn is_wait(cmd: &DeviceCommand) -> bool {
    matches!(cmd, DeviceCommand::Wait { .. })
}

fn missed_selector(step: &TraceStep) -> bool {
    let d = step.outcome.detail.to_ascii_lowercase();
    step.status != StepStatus::Executed && (d.contains("no node matches") || d.contains("not found"))
}

fn checkpoints(bundle: &MonitoringBundle, step: &TraceStep) -> Vec<Artifact> {
    [Checkpoint::before_label(step.index), Checkpoint::after_label(step.index)]
        .iter()
        .filter_map(|l| bundle.checkpoint(l))
        .map(|c| Artifact::Checkpoint {
            label: c.label.clone(),
            step: c.step,
            activity: c.state.foreground_activity.clone(),
            digest: c.state.digest(),
        })
        .collect()
}

fn item(rule: &str, summary: String, artifacts: Vec<Artifact>) -> EvidenceItem {
    EvidenceItem {
        source: Analyzer::UIInspector,
        category: IssueCategory::FreezeUnresponsive,
        rule: rule.into(),
        summary,
        artifacts,
    }
}

/// U1: an interaction leaves the screen unchanged and later interactions
/// still see the same screen at least `unresponsive_ms` afterwards.
fn unresponsive(bundle: &MonitoringBundle, steps: &[TraceStep], config: &DetectConfig) -> Option<EvidenceItem> {
    for (i, trigger) in steps.iter().enumerate() {
        if trigger.status != StepStatus::Executed || !is_interaction(&trigger.command) || !trigger.gui_unchanged() {
            continue;
        }
        let mut stretch = vec![trigger];
        for later in &steps[i + 1..] {
            if later.status == StepStatus::Rejected {
                continue;
            }
            if later.digest_before != trigger.digest_before || !later.gui_unchanged() {
                break;
            }
            stretch.push(later);
            let frozen_for = later.timestamp - trigger.timestamp;
            if !is_wait(&later.command) && is_interaction(&later.command) && frozen_for >= config.unresponsive_ms {
                let artifacts = stretch.iter().flat_map(|s| checkpoints(bundle, s)).collect();
                return Some(item(
                    "U1",
                    format!(
                        "screen unchanged for {frozen_for} ms after step {} ({}) across {} step(s)",
                        trigger.index,
                        trigger.command,
                        stretch.len()
                    ),
                    artifacts,
                ));
            }
        }
    }
    None
}

/// U2: consecutive failed attempts on one screen. Waits neither count nor
/// break the run.
fn failed_navigation(bundle: &MonitoringBundle, steps: &[TraceStep], config: &DetectConfig) -> Option<EvidenceItem> {
    let mut run: Vec<&TraceStep> = Vec::new();
    for step in steps {
        if is_wait(&step.command) {
            continue;
        }
        let attempt = missed_selector(step)
            || (step.status == StepStatus::Executed && is_interaction(&step.command) && step.gui_unchanged());
        if !attempt {
            run.clear();
            continue;
        }
        if run.first().is_some_and(|f| f.digest_before != step.digest_before) {
            run.clear();
        }
        run.push(step);
        if run.len() >= config.failed_navigation_attempts {
            return Some(item(
                "U2",
                format!("{} consecutive attempts made no progress on {}", run.len(), run[0].activity_before),
                run.iter().flat_map(|s| checkpoints(bundle, s)).collect(),
            ));
        }
    }
    None
}

pub fn ui_rules(bundle: &MonitoringBundle, trace: &ExecutionTrace, config: &DetectConfig) -> Vec<EvidenceItem> {
    unresponsive(bundle, &trace.steps, config).into_iter().chain(failed_navigation(bundle, &trace.steps, config)).collect()
}

fn excerpt(bundle: &MonitoringBundle, trace: &ExecutionTrace) -> Excerpt {
    let mut ex = Excerpt::default();
    for step in &trace.steps {
        for a in checkpoints(bundle, step) {
            let text = format!("t={} {:?} {} | {}", step.timestamp, step.status, step.command, a.excerpt());
            ex.push(a, text);
        }
    }
    ex
}

pub fn inspect_ui(
    bundle: &MonitoringBundle,
    trace: &ExecutionTrace,
    enriched: &EnrichedReview,
    reasoner: Option<&dyn Reasoner>,
    config: &DetectConfig,
) -> DetectorVerdict {
    let mut items = ui_rules(bundle, trace, config);
    let mut notes = Vec::new();
    if let Some(r) = reasoner {
        let review = reasoner_review(Analyzer::UIInspector, &excerpt(bundle, trace), enriched, r, config.report_token_budget);
        items.extend(review.issues);
        notes.push(review.note);
    }
    DetectorVerdict::from_evidence(Analyzer::UIInspector, items, "no unresponsive or failed navigation", &notes)
}
