//! Human and machine renderings of a reproduction report.

use std::fmt::Write;

use crate::{Outcome, ReproductionReport};

/// Markdown summary and pretty JSON. Both are byte-stable for equal input.
pub fn render_report(report: &ReproductionReport) -> (String, String) {
    let mut md = String::new();
    let outcome = match report.outcome {
        Outcome::Reproduced => "Reproduced",
        Outcome::NotReproduced => "NotReproduced",
    };
    let types = if report.issue_type.is_empty() {
        "none".to_string()
    } else {
        report.issue_type.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", ")
    };
    let _ = writeln!(md, "# Reproduction report: {}\n", report.review_id);
    let _ = writeln!(md, "- Outcome: {outcome}");
    let _ = writeln!(md, "- Issue type: {types}");
    let _ = writeln!(md, "- Operations executed: {}", report.total_operations);
    let _ = writeln!(md, "- Duration: {} ms", report.total_duration_ms);
    let _ = writeln!(md, "- Detection rounds: {}", report.rounds_used);

    let _ = writeln!(md, "\n## Evidence\n");
    if report.evidence.is_empty() {
        let _ = writeln!(md, "None.");
    }
    for (n, item) in report.evidence.iter().enumerate() {
        let _ = writeln!(md, "{}. [{}] {} {}: {}", n + 1, item.category.as_str(), item.source, item.rule, item.summary);
        for a in &item.artifacts {
            let _ = writeln!(md, "   - `{}` {}", a.reference(), a.excerpt());
        }
    }

    let _ = writeln!(md, "\n## Analysis\n");
    let _ = writeln!(md, "{}", if report.analysis.is_empty() { "None." } else { report.analysis.as_str() });

    let _ = writeln!(md, "\n## Rounds\n");
    for r in &report.rounds {
        let _ = writeln!(md, "- Round {}: {}", r.round, if r.passed { "passed" } else { "failed" });
        for v in &r.verdicts {
            let _ = writeln!(md, "  - {} {:?} ({} issue(s))", v.source, v.status, v.issues.len());
        }
    }

    let json = serde_json::to_string_pretty(report).expect("report serializes");
    (md, json)
}
