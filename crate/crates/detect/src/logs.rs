//! Log analyzer: frame-time, skipped-frame, ANR and resource-warning rules.

use std::sync::LazyLock;

use regex::Regex;
use revperf_agent::MonitoringBundle;
use revperf_augment::EnrichedReview;
use revperf_core::{extract_frame_stats, format_threadtime, IssueCategory, LogEntry};
use revperf_reasoner::Reasoner;

use crate::prompt::{reasoner_review, Excerpt};
use crate::{Analyzer, Artifact, DetectConfig, DetectorVerdict, EvidenceItem};

static SKIPPED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Skipped (\d+) frames").expect("valid regex"));

pub const RESOURCE_WARNING: &str = "A resource failed to call close";

fn is_anr(e: &LogEntry) -> bool {
    e.message.starts_with("ANR in ") || e.message.contains("Input dispatching timed out")
}

fn skipped_frames(e: &LogEntry) -> Option<u32> {
    if e.tag != "Choreographer" {
        return None;
    }
    SKIPPED.captures(&e.message)?.get(1)?.as_str().parse().ok()
}

fn artifact(index: usize, e: &LogEntry) -> Artifact {
    Artifact::Log { index, entry: e.clone() }
}

/// Deterministic findings, one item per rule that fires.
pub fn log_rules(logs: &[LogEntry], config: &DetectConfig) -> Vec<EvidenceItem> {
    let mut items = Vec::new();
    let mut rule = |rule: &str, category: IssueCategory, hits: Vec<(usize, &LogEntry)>, summary: String| {
        if !hits.is_empty() {
            items.push(EvidenceItem {
                source: Analyzer::LogAnalyzer,
                category,
                rule: rule.to_string(),
                summary,
                artifacts: hits.into_iter().map(|(i, e)| artifact(i, e)).collect(),
            });
        }
    };

    let lag: Vec<(usize, &LogEntry, f64)> = logs
        .iter()
        .enumerate()
        .filter_map(|(i, e)| extract_frame_stats(e).filter(|f| f.avg_ms > config.lag_avg_ms).map(|f| (i, e, f.avg_ms)))
        .collect();
    let worst = lag.iter().map(|l| l.2).fold(0.0_f64, f64::max);
    rule(
        "R1",
        IssueCategory::SlowInteraction,
        lag.iter().map(|(i, e, _)| (*i, *e)).collect(),
        format!(
            "{} frame batch(es) averaged above {} ms (worst {worst:.2} ms)",
            lag.len(),
            config.lag_avg_ms
        ),
    );

    let anr: Vec<_> = logs.iter().enumerate().filter(|(_, e)| is_anr(e)).collect();
    rule(
        "R2",
        IssueCategory::FreezeUnresponsive,
        anr.clone(),
        format!("application not responding reported ({} line(s))", anr.len()),
    );

    let skipped: Vec<(usize, &LogEntry, u32)> = logs
        .iter()
        .enumerate()
        .filter_map(|(i, e)| skipped_frames(e).filter(|&n| n >= config.skipped_frames_min).map(|n| (i, e, n)))
        .collect();
    let most = skipped.iter().map(|s| s.2).max().unwrap_or(0);
    rule(
        "R3",
        IssueCategory::SlowInteraction,
        skipped.iter().map(|(i, e, _)| (*i, *e)).collect(),
        format!("main thread skipped up to {most} frames ({} warning(s))", skipped.len()),
    );

    let leaked: Vec<_> = logs.iter().enumerate().filter(|(_, e)| e.message.contains(RESOURCE_WARNING)).collect();
    rule(
        "R4",
        IssueCategory::ExcessiveResource,
        leaked.clone(),
        format!("resources acquired but never closed ({} warning(s))", leaked.len()),
    );

    for (n, p) in config.extra_log_patterns.iter().enumerate() {
        let hits: Vec<_> = logs.iter().enumerate().filter(|(_, e)| e.message.contains(&p.contains)).collect();
        let count = hits.len();
        rule(&format!("P{}", n + 1), p.category, hits, format!("`{}` logged {count} time(s)", p.contains));
    }
    items
}

fn excerpt(logs: &[LogEntry], items: &[EvidenceItem]) -> Excerpt {
    let mut ex = Excerpt::default();
    for (i, e) in logs.iter().enumerate() {
        ex.push(artifact(i, e), format_threadtime(e));
    }
    ex.focus = items.iter().flat_map(|it| &it.artifacts).find_map(|a| match a {
        Artifact::Log { index, .. } => Some(*index),
        _ => None,
    });
    ex
}

pub fn analyze_logs(
    bundle: &MonitoringBundle,
    enriched: &EnrichedReview,
    reasoner: Option<&dyn Reasoner>,
    config: &DetectConfig,
) -> DetectorVerdict {
    let mut items = log_rules(&bundle.logs, config);
    let mut notes = Vec::new();
    if let Some(r) = reasoner {
        let review =
            reasoner_review(Analyzer::LogAnalyzer, &excerpt(&bundle.logs, &items), enriched, r, config.report_token_budget);
        items.extend(review.issues);
        notes.push(review.note);
    }
    DetectorVerdict::from_evidence(Analyzer::LogAnalyzer, items, "no log evidence", &notes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use revperf_core::LogPriority;

    fn entry(tag: &str, message: &str) -> LogEntry {
        LogEntry { timestamp: 0, pid: 7, tid: 7, priority: LogPriority::I, tag: tag.into(), message: message.into() }
    }

    #[test]
    fn skipped_frames_threshold() {
        let cfg = DetectConfig::default();
        let logs = [
            entry("Choreographer", "Skipped 29 frames!  The application may be doing too much work on its main thread."),
            entry("Choreographer", "Skipped 30 frames!  The application may be doing too much work on its main thread."),
            entry("Other", "Skipped 99 frames!"),
        ];
        let items = log_rules(&logs, &cfg);
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].rule, "R3");
        assert_eq!(items[0].artifacts.len(), 1);
    }

    #[test]
    fn anr_rule_forms() {
        let cfg = DetectConfig::default();
        for m in ["ANR in com.example.app", "Reason: Input dispatching timed out (x)"] {
            let items = log_rules(&[entry("ActivityManager", m)], &cfg);
            assert_eq!(items.len(), 1, "{m}");
            assert_eq!(items[0].category, IssueCategory::FreezeUnresponsive);
        }
        assert!(log_rules(&[entry("ActivityManager", "Start proc ANR in")], &cfg).is_empty());
    }

    #[test]
    fn configured_patterns() {
        let mut cfg = DetectConfig::default();
        cfg.extra_log_patterns.push(crate::LogPattern { contains: "Davey! duration=".into(), category: IssueCategory::SlowInteraction });
        let items = log_rules(&[entry("OpenGLRenderer", "Davey! duration=1200ms")], &cfg);
        assert_eq!(items[0].rule, "P1");
    }
}
