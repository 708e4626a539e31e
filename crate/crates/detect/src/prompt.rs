//! Detection prompts, verdict parsing and the reasoner's additive review.

use std::collections::BTreeMap;
use std::fmt::Write;

use revperf_augment::EnrichedReview;
use revperf_core::IssueCategory;
use revperf_reasoner::{complete, Conversation, Message, Reasoner};
use thiserror::Error;

use crate::{Analyzer, Artifact, DetectorVerdict, EvidenceItem, VerdictStatus};

pub const DETECT_CHANNEL: &str = "detect";

pub const SECTION_HEADERS: [&str; 5] = [
    "## Task Overview",
    "## Background Knowledge",
    "## Chain of Thought Instructions",
    "## Output Format Examples",
    "## Review Context",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed verdict: {0}")]
pub struct MalformedVerdict(pub String);

/// Records shown to the reasoner, one line each, with reference tags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Excerpt {
    pub lines: Vec<String>,
    pub refs: BTreeMap<String, Artifact>,
    /// Line the window should stay centred on when it has to be cut.
    pub focus: Option<usize>,
}

impl Excerpt {
    pub fn push(&mut self, artifact: Artifact, text: String) {
        let tag = artifact.reference();
        self.lines.push(format!("{tag} {text}"));
        self.refs.insert(tag, artifact);
    }

    /// Artifacts whose tags appear in `text`.
    pub fn cited(&self, text: &str) -> Vec<Artifact> {
        self.refs.iter().filter(|(tag, _)| text.contains(tag.as_str())).map(|(_, a)| a.clone()).collect()
    }
}

fn task(analyzer: Analyzer) -> &'static str {
    match analyzer {
        Analyzer::LogAnalyzer => "logcat messages collected while an app was driven to reproduce a user's performance complaint",
        Analyzer::ResourceDiagnoser => "resource metrics sampled after every step while an app was driven to reproduce a user's performance complaint",
        Analyzer::UIInspector => "GUI checkpoints taken before and after every step while an app was driven to reproduce a user's performance complaint",
    }
}

fn background(analyzer: Analyzer) -> &'static [&'static str] {
    match analyzer {
        Analyzer::LogAnalyzer => &[
            "Lines are in threadtime format: date, time, pid, tid, priority, tag, message.",
            "EGL_emulation `app_time_stats` lines give average, minimum and maximum frame time over a batch of frames. Around 16-33 ms is normal; averages of hundreds of milliseconds or more are visible lag.",
            "Choreographer `Skipped N frames` means the main thread blocked rendering for N frames.",
            "ActivityManager `ANR in <package>` and `Input dispatching timed out` mean the app ignored input for about five seconds.",
            "StrictMode `A resource failed to call close` means the app leaks handles or streams.",
            "`Process <package> (pid N) has died` after an OutOfMemoryError means the app exceeded its heap limit.",
        ],
        Analyzer::ResourceDiagnoser => &[
            "heap_kb: Java plus native heap of the app, from `dumpsys meminfo <package>`.",
            "total_mem_kb: total PSS of the app, from `dumpsys meminfo <package>`.",
            "swap_kb: device swap in use, SwapTotal minus SwapFree from `/proc/meminfo`.",
            "cpu_percent: the app's CPU share normalised to one core, from `/proc/<pid>/stat` and `/proc/stat` deltas.",
            "activity_count: the app's activities in the back stack, from `dumpsys activity activities`.",
            "running=false: the process was not alive when sampled.",
            "Heap that keeps growing across steps with only small dips suggests a leak; a dead process after growth suggests the heap limit was hit.",
        ],
        Analyzer::UIInspector => &[
            "Each step has a before and an after checkpoint; equal digests mean the screen did not change.",
            "An input that leaves the screen unchanged, followed by more than five seconds without any change, indicates an unresponsive app.",
            "Several failed attempts to reach widgets on the same screen indicate failed navigation.",
            "WAIT steps change nothing on purpose and are not interactions.",
        ],
    }
}

fn steps(analyzer: Analyzer) -> [&'static str; 3] {
    match analyzer {
        Analyzer::LogAnalyzer => [
            "Scan the excerpt for frame-time, skipped-frame, ANR and resource warnings from the app's process.",
            "Compare suspicious lines with the normal lines around them and relate them to the complaint.",
            "Decide whether a performance issue was triggered and cite the lines you rely on.",
        ],
        Analyzer::ResourceDiagnoser => [
            "Follow each metric across the samples and note trends, spikes and process deaths.",
            "Separate sustained growth from normal fluctuation and reclamation dips.",
            "Decide whether resource consumption is excessive and cite the samples you rely on.",
        ],
        Analyzer::UIInspector => [
            "Walk through the steps and note which inputs changed the screen.",
            "Measure how long the screen stayed unchanged after each unanswered input.",
            "Decide whether the UI froze or navigation failed and cite the checkpoints you rely on.",
        ],
    }
}

fn hint(analyzer: Analyzer) -> &'static str {
    match analyzer {
        Analyzer::LogAnalyzer => "Focus on lines from the app's own process and on system lines naming its package.",
        Analyzer::ResourceDiagnoser => "Heap growth of a few MB per step is far above normal for this kind of interaction.",
        Analyzer::UIInspector => "Five seconds without a response to input counts as unresponsive.",
    }
}

const FORMATS: &str = "SUCCESS FORMAT\n## Success <error type: specific_error_type>\nISSUES DETECTED:\n- Issue 1: [Evidence Summary citing records such as [log:12]]\n- Issue 2: [Evidence Summary]\nCONCLUSION: [Conclusions]\n\nFAILED FORMAT\n## Failed <potential error type>\n<Content you tried to find>\nIssue 1: [Failure Summary]\nIssue 2: [Failure Summary]\n[Analysis on the current failure]\n\nUse one of SlowInteraction, FreezeUnresponsive or ExcessiveResource as the error type.";

fn render(analyzer: Analyzer, body: &str, enriched: &EnrichedReview) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}\nYou are analyzing {}.\n\n{body}\n", SECTION_HEADERS[0], task(analyzer));
    let _ = writeln!(out, "{}", SECTION_HEADERS[1]);
    for b in background(analyzer) {
        let _ = writeln!(out, "- {b}");
    }
    let _ = writeln!(out, "\n{}\nINSTRUCTIONS:", SECTION_HEADERS[2]);
    for (i, s) in steps(analyzer).iter().enumerate() {
        let _ = writeln!(out, "Step {}: {s}", i + 1);
    }
    let _ = writeln!(out, "\n{}\n{FORMATS}\n", SECTION_HEADERS[3]);
    let _ = write!(
        out,
        "{}\n{}\nHint: {}\nNow output your response:",
        SECTION_HEADERS[4],
        enriched.render().trim_end(),
        hint(analyzer)
    );
    out
}

/// Picks the lines that fit in `room` characters, centred on the focus
/// line when given, else the most recent ones.
fn window(excerpt: &Excerpt, room: usize) -> String {
    let len = |i: usize| excerpt.lines[i].chars().count() + 1;
    let total: usize = (0..excerpt.lines.len()).map(len).sum();
    if total <= room {
        return excerpt.lines.join("\n");
    }
    let n = excerpt.lines.len();
    let marker_room = 64;
    let room = room.saturating_sub(2 * marker_room);
    let centre = excerpt.focus.unwrap_or(n.saturating_sub(1)).min(n.saturating_sub(1));
    let (mut lo, mut hi) = (centre, centre);
    let mut used = len(centre);
    if used > room {
        return format!("... {n} lines omitted");
    }
    loop {
        let mut grew = false;
        if hi + 1 < n && used + len(hi + 1) <= room {
            hi += 1;
            used += len(hi);
            grew = true;
        }
        if lo > 0 && used + len(lo - 1) <= room {
            lo -= 1;
            used += len(lo);
            grew = true;
        }
        if !grew {
            break;
        }
    }
    let mut out = Vec::new();
    if lo > 0 {
        out.push(format!("... {lo} earlier lines omitted"));
    }
    out.extend(excerpt.lines[lo..=hi].iter().cloned());
    if hi + 1 < n {
        out.push(format!("... {} later lines omitted", n - hi - 1));
    }
    out.join("\n")
}

/// The five-section detection prompt, with the excerpt windowed so the
/// whole prompt stays within `budget` estimated tokens.
pub fn build_detection_prompt(analyzer: Analyzer, excerpt: &Excerpt, enriched: &EnrichedReview, budget: usize) -> String {
    let fixed = render(analyzer, "", enriched).chars().count();
    let room = (budget * 4).saturating_sub(fixed);
    let body = if excerpt.lines.is_empty() { "(no records)".to_string() } else { window(excerpt, room) };
    render(analyzer, &format!("Records:\n{body}"), enriched)
}

fn bracketed(line: &str) -> Option<String> {
    let start = line.find('<')?;
    let end = line[start..].find('>')? + start;
    Some(line[start + 1..end].trim().to_string())
}

fn strip_issue_prefix(line: &str) -> &str {
    let l = line.trim().trim_start_matches(['-', '*']).trim();
    let lower = l.to_ascii_lowercase();
    if lower.starts_with("issue") {
        if let Some((_, rest)) = l.split_once(':') {
            return rest.trim();
        }
    }
    l
}

/// Parses a reply in the Success/Failed output format.
pub fn parse_verdict(text: &str, source: Analyzer) -> Result<DetectorVerdict, MalformedVerdict> {
    let lines: Vec<&str> = text.lines().collect();
    let (at, success) = lines
        .iter()
        .enumerate()
        .find_map(|(i, l)| {
            let l = l.trim().to_ascii_lowercase();
            if l.starts_with("## success") {
                Some((i, true))
            } else if l.starts_with("## failed") {
                Some((i, false))
            } else {
                None
            }
        })
        .ok_or_else(|| MalformedVerdict("no `## Success` or `## Failed` header".into()))?;
    let header = lines[at].trim();
    let body = &lines[at + 1..];

    if !success {
        let error_type = bracketed(header).unwrap_or_default();
        let analysis = body.iter().map(|l| l.trim()).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("\n");
        let conclusion = if analysis.is_empty() { "failure reported without analysis".to_string() } else { analysis };
        return Ok(DetectorVerdict { source, status: VerdictStatus::Failed, error_type, issues: Vec::new(), conclusion });
    }

    let error_type = std::iter::once(header)
        .chain(body.iter().copied())
        .find_map(|l| {
            let b = bracketed(l)?;
            let lower = b.to_ascii_lowercase();
            lower.starts_with("error type").then(|| b.split_once(':').map_or(String::new(), |(_, t)| t.trim().to_string()))
        })
        .unwrap_or_default();
    let issues_at = body
        .iter()
        .position(|l| l.trim().to_ascii_uppercase().starts_with("ISSUES DETECTED"))
        .ok_or_else(|| MalformedVerdict("success without an ISSUES DETECTED list".into()))?;
    let conclusion_at = body.iter().position(|l| l.trim().to_ascii_uppercase().starts_with("CONCLUSION"));
    let issue_end = conclusion_at.filter(|&c| c > issues_at).unwrap_or(body.len());

    let category = error_type.parse::<IssueCategory>().unwrap_or(source.default_category());
    let issues: Vec<EvidenceItem> = body[issues_at + 1..issue_end]
        .iter()
        .map(|l| strip_issue_prefix(l))
        .filter(|l| !l.is_empty())
        .map(|summary| EvidenceItem {
            source,
            category,
            rule: "reasoner".into(),
            summary: summary.to_string(),
            artifacts: Vec::new(),
        })
        .collect();
    if issues.is_empty() {
        return Err(MalformedVerdict("success with no issues listed".into()));
    }
    let conclusion = match conclusion_at {
        Some(c) => {
            let first = body[c].trim().split_once(':').map_or("", |(_, r)| r.trim());
            std::iter::once(first)
                .chain(body[c + 1..].iter().map(|l| l.trim()))
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join("\n")
        }
        None => String::new(),
    };
    Ok(DetectorVerdict { source, status: VerdictStatus::Success, error_type, issues, conclusion })
}

/// What the reasoner adds to an analyzer's deterministic findings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReasonerReview {
    /// Findings that cite at least one record of the excerpt.
    pub issues: Vec<EvidenceItem>,
    pub note: String,
}

/// Asks the reasoner for a verdict on `excerpt`, reprompting once on a
/// malformed reply. Findings that cite no record are dropped.
pub fn reasoner_review(
    analyzer: Analyzer,
    excerpt: &Excerpt,
    enriched: &EnrichedReview,
    reasoner: &dyn Reasoner,
    budget: usize,
) -> ReasonerReview {
    let mut conv = Conversation::with_channel(DETECT_CHANNEL);
    conv.push(Message::user(build_detection_prompt(analyzer, excerpt, enriched, budget)));
    let mut verdict = None;
    for _ in 0..2 {
        let reply = match complete(&conv, budget, reasoner) {
            Ok(r) => r,
            Err(e) => return ReasonerReview { issues: Vec::new(), note: format!("reasoner unavailable: {e}") },
        };
        match parse_verdict(&reply, analyzer) {
            Ok(v) => {
                verdict = Some(v);
                break;
            }
            Err(e) => {
                conv.push(Message::assistant(reply));
                conv.push(Message::user(format!("{e}. Reply using exactly the SUCCESS or FAILED format.")));
            }
        }
    }
    let Some(v) = verdict else {
        return ReasonerReview { issues: Vec::new(), note: "reasoner verdict malformed twice; treated as failed".into() };
    };
    match v.status {
        VerdictStatus::Failed => ReasonerReview { issues: Vec::new(), note: format!("reasoner: {}", v.conclusion) },
        VerdictStatus::Success => {
            let total = v.issues.len();
            let issues: Vec<EvidenceItem> = v
                .issues
                .into_iter()
                .filter_map(|mut i| {
                    i.artifacts = excerpt.cited(&i.summary);
                    (!i.artifacts.is_empty()).then_some(i)
                })
                .collect();
            let dropped = total - issues.len();
            let mut note = format!("reasoner: {}", v.conclusion);
            if dropped > 0 {
                let _ = write!(note, " ({dropped} finding(s) without cited records ignored)");
            }
            ReasonerReview { issues, note }
        }
    }
}
