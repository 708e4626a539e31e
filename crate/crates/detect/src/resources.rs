//! Resource diagnoser: heap growth, CPU saturation and heap-cap death.

use revperf_agent::MonitoringBundle;
use revperf_augment::EnrichedReview;
use revperf_core::{format_threadtime, IssueCategory, MetricSample};
use revperf_reasoner::Reasoner;

use crate::prompt::{reasoner_review, Excerpt};
use crate::{Analyzer, Artifact, DetectConfig, DetectorVerdict, EvidenceItem};

/// Least-squares slope of `ys` against their indices. Zero for fewer than
/// two points.
pub fn least_squares_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (num, den) = ys.iter().enumerate().fold((0.0, 0.0), |(num, den), (i, y)| {
        let dx = i as f64 - mean_x;
        (num + dx * (y - mean_y), den + dx * dx)
    });
    num / den
}

/// Largest drop from a running peak to a later value.
pub fn max_drawdown(ys: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0_f64;
    for &y in ys {
        peak = peak.max(y);
        worst = worst.max(peak - y);
    }
    worst
}

/// Leak heuristic: the series climbs faster than `min_slope` per sample,
/// ends higher than it started, and never falls back by `ratio` of that rise.
pub fn leak_detected(ys: &[f64], min_slope: f64, ratio: f64) -> bool {
    if ys.len() < 3 {
        return false;
    }
    let rise = ys[ys.len() - 1] - ys[0];
    rise > 0.0 && least_squares_slope(ys) > min_slope && max_drawdown(ys) < ratio * rise
}

fn metric(index: usize, sample: &MetricSample) -> Artifact {
    Artifact::Metric { index, sample: *sample }
}

fn item(rule: &str, summary: String, artifacts: Vec<Artifact>) -> EvidenceItem {
    EvidenceItem {
        source: Analyzer::ResourceDiagnoser,
        category: IssueCategory::ExcessiveResource,
        rule: rule.into(),
        summary,
        artifacts,
    }
}

/// Deterministic findings over the metric series and, for heap-cap death,
/// the logs.
pub fn resource_rules(bundle: &MonitoringBundle, app_id: &str, config: &DetectConfig) -> Vec<EvidenceItem> {
    let metrics = &bundle.metrics;
    let mut items = Vec::new();

    let running: Vec<(usize, &MetricSample)> = metrics.iter().enumerate().filter(|(_, m)| m.process_running).collect();
    let heap: Vec<f64> = running.iter().map(|(_, m)| m.heap_kb as f64).collect();
    if leak_detected(&heap, config.leak_slope_kb_per_sample, config.leak_drawdown_ratio) {
        let (first, last) = (running[0], running[running.len() - 1]);
        items.push(item(
            "H1",
            format!(
                "heap grew from {} KB to {} KB over {} samples ({:.1} KB per sample, drawdown {:.0} KB)",
                first.1.heap_kb,
                last.1.heap_kb,
                heap.len(),
                least_squares_slope(&heap),
                max_drawdown(&heap)
            ),
            vec![metric(first.0, first.1), metric(last.0, last.1)],
        ));
    }

    let mut run: Vec<usize> = Vec::new();
    let mut longest: Vec<usize> = Vec::new();
    for (i, m) in metrics.iter().enumerate() {
        if m.process_running && m.cpu_percent > config.cpu_saturation_percent {
            run.push(i);
            if run.len() > longest.len() {
                longest = run.clone();
            }
        } else {
            run.clear();
        }
    }
    if longest.len() >= config.cpu_saturation_samples {
        items.push(item(
            "H2",
            format!("CPU above {}% for {} consecutive samples", config.cpu_saturation_percent, longest.len()),
            longest.iter().map(|&i| metric(i, &metrics[i])).collect(),
        ));
    }

    let mut series_start = 0;
    for (j, m) in metrics.iter().enumerate() {
        if m.process_running {
            continue;
        }
        let before = &metrics[series_start..j];
        series_start = j + 1;
        let rising = before.len() >= 2 && before.last().map(|l| l.heap_kb) > before.first().map(|f| f.heap_kb);
        if !rising {
            continue;
        }
        let mut artifacts = vec![metric(j - 1, &metrics[j - 1]), metric(j, m)];
        artifacts.extend(
            bundle
                .logs
                .iter()
                .enumerate()
                .filter(|(_, e)| {
                    (e.message.contains("has died") && e.message.contains(app_id)) || e.message.contains("OutOfMemoryError")
                })
                .map(|(i, e)| Artifact::Log { index: i, entry: e.clone() }),
        );
        items.push(item(
            "H3",
            format!(
                "process gone after heap rose from {} KB to {} KB",
                before[0].heap_kb,
                before[before.len() - 1].heap_kb
            ),
            artifacts,
        ));
        break;
    }
    items
}

fn excerpt(bundle: &MonitoringBundle, app_id: &str) -> Excerpt {
    let mut ex = Excerpt::default();
    for (i, m) in bundle.metrics.iter().enumerate() {
        let a = metric(i, m);
        let text = a.excerpt();
        ex.push(a, text);
    }
    for (i, e) in bundle.logs.iter().enumerate() {
        if e.message.contains("has died") && e.message.contains(app_id) {
            ex.push(Artifact::Log { index: i, entry: e.clone() }, format_threadtime(e));
        }
    }
    ex
}

pub fn diagnose_resources(
    bundle: &MonitoringBundle,
    enriched: &EnrichedReview,
    reasoner: Option<&dyn Reasoner>,
    config: &DetectConfig,
) -> DetectorVerdict {
    if bundle.metrics.len() < 3 {
        return DetectorVerdict::from_evidence(Analyzer::ResourceDiagnoser, Vec::new(), "insufficient samples", &[]);
    }
    let app_id = &enriched.original.app_id;
    let mut items = resource_rules(bundle, app_id, config);
    let mut notes = Vec::new();
    if let Some(r) = reasoner {
        let review =
            reasoner_review(Analyzer::ResourceDiagnoser, &excerpt(bundle, app_id), enriched, r, config.report_token_budget);
        items.extend(review.issues);
        notes.push(review.note);
    }
    DetectorVerdict::from_evidence(Analyzer::ResourceDiagnoser, items, "no resource anomaly", &notes)
}
