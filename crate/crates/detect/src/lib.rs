//! Detection stage: log, resource and UI analyzers over the monitoring
//! bundle, verdict aggregation across rounds and report rendering.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use revperf_agent::{ExecutionTrace, MonitoringBundle};
use revperf_augment::EnrichedReview;
use revperf_core::{IssueCategory, LogEntry, MetricSample};
use revperf_reasoner::Reasoner;
use serde::{Deserialize, Serialize};

pub mod aggregate;
pub mod logs;
pub mod prompt;
pub mod report;
pub mod resources;
pub mod ui;

pub use aggregate::{aggregate_and_decide, RoundRecord};
pub use logs::analyze_logs;
pub use prompt::{build_detection_prompt, parse_verdict, Excerpt, MalformedVerdict, DETECT_CHANNEL};
pub use report::render_report;
pub use resources::{diagnose_resources, least_squares_slope, leak_detected, max_drawdown};
pub use ui::inspect_ui;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Analyzer {
    LogAnalyzer,
    ResourceDiagnoser,
    UIInspector,
}

impl Analyzer {
    pub const ALL: [Analyzer; 3] = [Analyzer::LogAnalyzer, Analyzer::ResourceDiagnoser, Analyzer::UIInspector];

    pub fn as_str(self) -> &'static str {
        match self {
            Analyzer::LogAnalyzer => "LogAnalyzer",
            Analyzer::ResourceDiagnoser => "ResourceDiagnoser",
            Analyzer::UIInspector => "UIInspector",
        }
    }

    /// Category assumed for reasoner findings that name none.
    pub fn default_category(self) -> IssueCategory {
        match self {
            Analyzer::LogAnalyzer => IssueCategory::SlowInteraction,
            Analyzer::ResourceDiagnoser => IssueCategory::ExcessiveResource,
            Analyzer::UIInspector => IssueCategory::FreezeUnresponsive,
        }
    }
}

impl fmt::Display for Analyzer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Analyzer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "loganalyzer" | "log" | "logs" => Ok(Analyzer::LogAnalyzer),
            "resourcediagnoser" | "resource" | "resources" => Ok(Analyzer::ResourceDiagnoser),
            "uiinspector" | "ui" => Ok(Analyzer::UIInspector),
            _ => Err(format!("unknown analyzer `{s}` (expected LogAnalyzer, ResourceDiagnoser or UIInspector)")),
        }
    }
}

/// A record an evidence item points at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Artifact {
    Log { index: usize, entry: LogEntry },
    Metric { index: usize, sample: MetricSample },
    Checkpoint { label: String, step: usize, activity: String, digest: String },
}

impl Artifact {
    /// Reference token used in prompts, e.g. `[log:12]`.
    pub fn reference(&self) -> String {
        match self {
            Artifact::Log { index, .. } => format!("[log:{index}]"),
            Artifact::Metric { index, .. } => format!("[metric:{index}]"),
            Artifact::Checkpoint { label, .. } => format!("[checkpoint:{label}]"),
        }
    }

    /// One-line excerpt for reports.
    pub fn excerpt(&self) -> String {
        match self {
            Artifact::Log { entry, .. } => revperf_core::format_threadtime(entry),
            Artifact::Metric { sample: m, .. } => format!(
                "t={} heap={}KB total={}KB swap={}KB cpu={:.1}% activities={} running={}",
                m.timestamp, m.heap_kb, m.total_mem_kb, m.swap_kb, m.cpu_percent, m.activity_count, m.process_running
            ),
            Artifact::Checkpoint { label, activity, digest, .. } => {
                format!("{label} {activity} digest={}", &digest[..digest.len().min(12)])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub source: Analyzer,
    pub category: IssueCategory,
    /// Rule that fired (`R1`..`R4`, `H1`..`H3`, `U1`, `U2`, `P<n>` for
    /// configured patterns) or `reasoner`.
    pub rule: String,
    pub summary: String,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictStatus {
    Success,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorVerdict {
    pub source: Analyzer,
    pub status: VerdictStatus,
    pub error_type: String,
    pub issues: Vec<EvidenceItem>,
    /// Conclusion on success, failure analysis otherwise.
    pub conclusion: String,
}

impl DetectorVerdict {
    /// Success when any evidence is present, Failed with `failure` otherwise.
    pub fn from_evidence(source: Analyzer, issues: Vec<EvidenceItem>, failure: &str, notes: &[String]) -> Self {
        let mut conclusion: Vec<String> = Vec::new();
        if issues.is_empty() {
            conclusion.push(failure.to_string());
        } else {
            conclusion.extend(issues.iter().map(|i| format!("{}: {}", i.rule, i.summary)));
        }
        conclusion.extend(notes.iter().filter(|n| !n.trim().is_empty()).cloned());
        let categories: BTreeSet<IssueCategory> = issues.iter().map(|i| i.category).collect();
        DetectorVerdict {
            source,
            status: if issues.is_empty() { VerdictStatus::Failed } else { VerdictStatus::Success },
            error_type: categories.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", "),
            issues,
            conclusion: conclusion.join("\n"),
        }
    }

    pub fn categories(&self) -> BTreeSet<IssueCategory> {
        self.issues.iter().map(|i| i.category).collect()
    }

    /// Success backed by at least one artifact-citing item.
    pub fn is_backed_success(&self) -> bool {
        self.status == VerdictStatus::Success && self.issues.iter().any(|i| !i.artifacts.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Reproduced,
    NotReproduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionReport {
    pub review_id: String,
    pub outcome: Outcome,
    pub issue_type: BTreeSet<IssueCategory>,
    pub total_operations: usize,
    pub total_duration_ms: i64,
    pub rounds_used: usize,
    pub evidence: Vec<EvidenceItem>,
    pub analysis: String,
    pub rounds: Vec<RoundRecord>,
}

/// A log message pattern mapped to a category, beyond the built-in rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogPattern {
    pub contains: String,
    pub category: IssueCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub lag_avg_ms: f64,
    pub skipped_frames_min: u32,
    pub leak_slope_kb_per_sample: f64,
    pub leak_drawdown_ratio: f64,
    pub cpu_saturation_percent: f64,
    pub cpu_saturation_samples: usize,
    pub unresponsive_ms: i64,
    pub failed_navigation_attempts: usize,
    pub report_token_budget: usize,
    pub detection_rounds_max: usize,
    pub enabled_analyzers: BTreeSet<Analyzer>,
    pub extra_log_patterns: Vec<LogPattern>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            lag_avg_ms: 700.0,
            skipped_frames_min: 30,
            leak_slope_kb_per_sample: 50.0,
            leak_drawdown_ratio: 0.2,
            cpu_saturation_percent: 80.0,
            cpu_saturation_samples: 10,
            unresponsive_ms: 5000,
            failed_navigation_attempts: 3,
            report_token_budget: 50_000,
            detection_rounds_max: 3,
            enabled_analyzers: Analyzer::ALL.into_iter().collect(),
            extra_log_patterns: Vec::new(),
        }
    }
}

/// One detection round: every enabled analyzer in a fixed order.
pub fn run_detectors(
    bundle: &MonitoringBundle,
    trace: &ExecutionTrace,
    enriched: &EnrichedReview,
    reasoner: Option<&dyn Reasoner>,
    config: &DetectConfig,
) -> Vec<DetectorVerdict> {
    config
        .enabled_analyzers
        .iter()
        .map(|a| match a {
            Analyzer::LogAnalyzer => analyze_logs(bundle, enriched, reasoner, config),
            Analyzer::ResourceDiagnoser => diagnose_resources(bundle, enriched, reasoner, config),
            Analyzer::UIInspector => inspect_ui(bundle, trace, enriched, reasoner, config),
        })
        .collect()
}
