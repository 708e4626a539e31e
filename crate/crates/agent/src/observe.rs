//! What the agent sees each turn and how it is put into words.

use std::fmt::Write;

use revperf_augment::EnrichedReview;
use revperf_core::{CommandKind, CommandOutcome, GuiNode, GuiState};
use serde::{Deserialize, Serialize};

use crate::grammar::operation_grammar;
use crate::FailedAttemptLedger;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationDescriptor {
    pub kind: CommandKind,
    pub grammar: String,
    pub description: String,
}

pub fn operation_catalog() -> Vec<OperationDescriptor> {
    CommandKind::ALL
        .into_iter()
        .map(|kind| {
            let (grammar, description) = operation_grammar(kind);
            OperationDescriptor { kind, grammar: grammar.into(), description: description.into() }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub gui: GuiState,
    pub enriched: EnrichedReview,
    pub available_operations: Vec<OperationDescriptor>,
    pub history_digest: String,
    pub last_outcome: Option<CommandOutcome>,
    pub task_status: String,
}

const INSTRUCTIONS: &str = "You operate an Android device to reproduce the performance problem a user \
complained about. Each turn you get the current screen and must answer with exactly one command on its \
own line, optionally preceded by a short thought. Use only the operations listed below. Never repeat a \
command from the failed attempts list; when something failed, choose an alternative UI component or \
backtrack. Reply INVOKE_DETECTOR once every step needed to trigger the problem has been performed.";

fn short_id(rid: &str) -> &str {
    rid.rsplit_once('/').map_or(rid, |(_, s)| s)
}

fn node_line(out: &mut String, depth: usize, n: &GuiNode) {
    let class = n.class_name.rsplit('.').next().unwrap_or(&n.class_name);
    let _ = write!(out, "{:indent$}{class}", "", indent = depth * 2);
    if !n.resource_id.is_empty() {
        let _ = write!(out, " id={}", short_id(&n.resource_id));
    }
    if !n.text.is_empty() {
        let _ = write!(out, " text={:?}", n.text);
    }
    if !n.content_desc.is_empty() {
        let _ = write!(out, " desc={:?}", n.content_desc);
    }
    let _ = write!(out, " {}", n.bounds);
    if n.clickable {
        out.push_str(" clickable");
    }
    if !n.enabled {
        out.push_str(" disabled");
    }
    out.push('\n');
}

fn render_to_depth(out: &mut String, n: &GuiNode, depth: usize, limit: usize) {
    node_line(out, depth, n);
    if n.children.is_empty() {
        return;
    }
    if depth == limit {
        let hidden = n.children.iter().map(GuiNode::node_count).sum::<usize>();
        let _ = writeln!(out, "{:indent$}... {hidden} deeper nodes elided", "", indent = (depth + 1) * 2);
        return;
    }
    for c in &n.children {
        render_to_depth(out, c, depth + 1, limit);
    }
}

/// Compact text form of a screen, at most `cap` characters.
///
/// Levels are dropped from the bottom of the tree until the text fits,
/// keeping at least the root's children. If that is still too long the full
/// rendering is cut at a line boundary and a truncation marker is appended.
pub fn render_gui(gui: &GuiState, cap: usize) -> String {
    let render = |limit: usize| {
        let mut text = String::new();
        let _ = writeln!(text, "activity: {}", gui.foreground_activity);
        render_to_depth(&mut text, &gui.root, 0, limit);
        text
    };
    let depth = gui.root.depth();
    for limit in (1.min(depth)..=depth).rev() {
        let text = render(limit);
        if text.chars().count() <= cap {
            return text;
        }
    }
    let text = render(depth);
    let total = text.chars().count();
    let mut kept = String::new();
    let mut used = 0;
    let marker_room = 48;
    for line in text.split_inclusive('\n') {
        let len = line.chars().count();
        if used + len + marker_room > cap {
            break;
        }
        kept.push_str(line);
        used += len;
    }
    let marker = format!("[gui truncated, {} characters omitted]", total - used);
    if used + marker.chars().count() > cap {
        // cap too small for even one line
        return marker.chars().take(cap).collect();
    }
    kept.push_str(&marker);
    kept
}

/// Text of the pinned system message: rules plus the operation list.
pub fn system_prompt(operations: &[OperationDescriptor]) -> String {
    let mut out = String::from(INSTRUCTIONS);
    out.push_str("\n\nOperations:\n");
    for op in operations {
        let _ = writeln!(out, "- {}  ({})", op.grammar, op.description);
    }
    out
}

/// Text of the pinned review message.
pub fn review_prompt(enriched: &EnrichedReview) -> String {
    format!("Complaint to reproduce:\n{}", enriched.render())
}

impl Observation {
    /// The per-turn message: screen, failed attempts, last outcome, status.
    pub fn turn_text(&self, gui_char_cap: usize) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} | screen {}", self.task_status, self.gui.foreground_activity);
        match &self.last_outcome {
            Some(o) => {
                let _ = writeln!(out, "Last outcome: {} ({})", if o.success { "ok" } else { "FAILED" }, o.detail);
            }
            None => out.push_str("Last outcome: none yet\n"),
        }
        let _ = writeln!(out, "Failed attempts (do not repeat):\n{}", self.history_digest);
        let _ = write!(out, "Current screen:\n{}", render_gui(&self.gui, gui_char_cap));
        out
    }
}

/// Assembles the observation and the full prompt text it stands for.
pub fn build_observation(
    gui: &GuiState,
    enriched: &EnrichedReview,
    ledger: &FailedAttemptLedger,
    last_outcome: Option<&CommandOutcome>,
    task_status: &str,
    gui_char_cap: usize,
) -> (Observation, String) {
    let obs = Observation {
        gui: gui.clone(),
        enriched: enriched.clone(),
        available_operations: operation_catalog(),
        history_digest: ledger.digest(),
        last_outcome: last_outcome.map(|o| CommandOutcome { gui_after: None, ..o.clone() }),
        task_status: task_status.to_string(),
    };
    let prompt = format!(
        "{}\n\n{}\n\n{}",
        system_prompt(&obs.available_operations),
        review_prompt(enriched),
        obs.turn_text(gui_char_cap)
    );
    (obs, prompt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use revperf_augment::EssentialContext;
    use revperf_core::{Bounds, DeviceCommand, Review, Selector};

    fn enriched() -> EnrichedReview {
        let review = Review {
            id: "r1".into(),
            app_id: "org.example.notes".into(),
            app_version: "2.1".into(),
            rating: 1,
            text: "Opening a note takes forever, the screen just hangs".into(),
            timestamp: 0,
            developer_reply: None,
        };
        EnrichedReview::passthrough(review, EssentialContext::new("A note taking app"), Default::default())
    }

    fn flat_gui(children: usize) -> GuiState {
        let mut root = GuiNode::new("android.widget.FrameLayout", Bounds::new(0, 0, 1080, 1920));
        for i in 0..children {
            let mut n = GuiNode::new("android.widget.TextView", Bounds::new(0, 0, 10, 10));
            n.resource_id = format!("org.x:id/row_{i}");
            n.text = format!("row number {i} with some padding text");
            root.children.push(n);
        }
        GuiState::from_tree(root, "org.x/.Main", 0)
    }

    #[test]
    fn first_step_prompt() {
        let gui = flat_gui(3);
        let (obs, prompt) = build_observation(&gui, &enriched(), &FailedAttemptLedger::default(), None, "step 1 of 25", 8000);
        assert!(prompt.contains("Opening a note takes forever"));
        assert!(prompt.contains("LAUNCH_APP pkg=<package>"));
        assert!(obs.available_operations.iter().any(|o| o.kind == CommandKind::LaunchApp));
        assert!(prompt.contains("id=row_2"));
    }

    #[test]
    fn ledger_surfaces_failed_selector() {
        let mut ledger = FailedAttemptLedger::default();
        let cmd = DeviceCommand::Click { target: Selector::ResourceId("save_btn".into()) };
        ledger.record(cmd, "no node matches id=save_btn", 2);
        let (_, prompt) = build_observation(&flat_gui(1), &enriched(), &ledger, None, "step 3 of 25", 8000);
        assert!(prompt.contains("CLICK id=save_btn"));
    }

    #[test]
    fn huge_gui_is_capped() {
        let gui = flat_gui(2000);
        assert!(gui.raw_dump.len() >= 100_000, "{}", gui.raw_dump.len());
        let text = render_gui(&gui, 8000);
        assert!(text.chars().count() <= 8000);
        assert!(text.contains("[gui truncated"));
        assert!(text.contains("id=row_0"));
    }

    #[test]
    fn deep_levels_go_first() {
        let mut root = GuiNode::new("Root", Bounds::new(0, 0, 100, 100));
        let mut mid = GuiNode::new("Mid", Bounds::new(0, 0, 50, 50));
        mid.resource_id = "x:id/keep".into();
        for i in 0..50 {
            let mut leaf = GuiNode::new("Leaf", Bounds::new(0, 0, 1, 1));
            leaf.text = format!("leaf text {i}");
            mid.children.push(leaf);
        }
        root.children.push(mid);
        let gui = GuiState::from_tree(root, "a/.B", 0);
        let full = render_gui(&gui, 100_000);
        assert!(full.contains("leaf text 49"));
        let capped = render_gui(&gui, 200);
        assert!(capped.contains("id=keep"));
        assert!(capped.contains("50 deeper nodes elided"));
        assert!(!capped.contains("leaf text"));
    }
}
