//! Round bookkeeping and the final reproduced / not-reproduced decision.

use std::collections::BTreeSet;
use std::fmt::Write;

use revperf_agent::ExecutionTrace;
use revperf_augment::EnrichedReview;
use revperf_core::IssueCategory;
use serde::{Deserialize, Serialize};

use crate::{DetectConfig, DetectorVerdict, EvidenceItem, Outcome, ReproductionReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub verdicts: Vec<DetectorVerdict>,
    pub passed: bool,
}

/// Evidence that cites at least one artifact, from Success verdicts only.
fn backed(verdicts: &[DetectorVerdict]) -> Vec<EvidenceItem> {
    verdicts
        .iter()
        .filter(|v| v.is_backed_success())
        .flat_map(|v| v.issues.iter().filter(|i| !i.artifacts.is_empty()).cloned())
        .collect()
}

pub fn round_passes(verdicts: &[DetectorVerdict], expected: &BTreeSet<IssueCategory>) -> bool {
    let evidence = backed(verdicts);
    !evidence.is_empty() && (expected.is_empty() || evidence.iter().any(|i| expected.contains(&i.category)))
}

/// Runs up to `detection_rounds_max` rounds. `run_round(n)` performs round
/// `n` (1-based), resuming execution first when `n > 1`, and returns that
/// round's verdicts with the trace as it stands.
pub fn aggregate_and_decide<F>(mut run_round: F, enriched: &EnrichedReview, config: &DetectConfig) -> ReproductionReport
where
    F: FnMut(usize) -> (Vec<DetectorVerdict>, ExecutionTrace),
{
    let max = config.detection_rounds_max.max(1);
    let mut rounds = Vec::new();
    let mut trace = ExecutionTrace::default();
    for n in 1..=max {
        let (verdicts, t) = run_round(n);
        trace = t;
        let passed = round_passes(&verdicts, &enriched.expected_categories);
        rounds.push(RoundRecord { round: n, verdicts, passed });
        if passed {
            break;
        }
    }

    let last = rounds.last().expect("at least one round");
    let (outcome, evidence, analysis) = if last.passed {
        let evidence = backed(&last.verdicts);
        let analysis = last
            .verdicts
            .iter()
            .filter(|v| v.is_backed_success())
            .map(|v| format!("{}: {}", v.source, v.conclusion))
            .collect::<Vec<_>>()
            .join("\n");
        (Outcome::Reproduced, evidence, analysis)
    } else {
        let mut analysis = String::new();
        for r in &rounds {
            let _ = writeln!(analysis, "Round {}:", r.round);
            for v in &r.verdicts {
                let _ = writeln!(analysis, "- {}: {}", v.source, v.conclusion.replace('\n', "; "));
            }
        }
        (Outcome::NotReproduced, Vec::new(), analysis.trim_end().to_string())
    };

    ReproductionReport {
        review_id: enriched.original.id.clone(),
        outcome,
        issue_type: evidence.iter().map(|i| i.category).collect(),
        total_operations: trace.steps.len(),
        total_duration_ms: trace.duration_ms(),
        rounds_used: rounds.len(),
        evidence,
        analysis,
        rounds,
    }
}
