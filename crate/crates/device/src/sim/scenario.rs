//! Scenario files for the simulated device.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! app_id = "org.example.notes"
//! initial_screen = "home"
//! heap_cap_kb = 65536
//! seed = 7
//!
//! [baseline]
//! heap_kb = 40960
//! total_mem_kb = 98304
//! swap_kb = 0
//! cpu_percent = 6.0
//! activity_count = 1
//!
//! [screens.home]
//! activity = "org.example.notes/.MainActivity"
//! gui = '''<hierarchy>...</hierarchy>'''
//!
//! [[transitions]]
//! from = "home"
//! on = "click:open_note"
//! to = "editor"
//!
//! [[faults]]
//! kind = "lag_frames"
//! trigger_screen = "editor"
//! avg_ms = 3456.54
//! ```
//!
//! Action matchers are `<action>` or `<action>:<argument>`; actions are
//! `click`, `swipe`, `input_text`, `back`, `rotate`, `lock`, `unlock`,
//! `launch` and `setting`. For `click`, `swipe` and `input_text` the argument
//! is the short resource id or the text of the node acted on.

use std::collections::BTreeMap;
use std::path::Path;

use revperf_core::{parse_gui_dump, GuiNode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 2025-06-01T12:00:00Z, used when a scenario gives no start time.
pub const DEFAULT_START_MS: i64 = 1_748_779_200_000;

pub const MATCHER_ACTIONS: [&str; 9] =
    ["click", "swipe", "input_text", "back", "rotate", "lock", "unlock", "launch", "setting"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {message}")]
    Io { path: String, message: String },
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub heap_kb: u64,
    pub total_mem_kb: u64,
    #[serde(default)]
    pub swap_kb: u64,
    #[serde(default)]
    pub cpu_percent: f64,
    #[serde(default = "one")]
    pub activity_count: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Screen {
    pub name: String,
    pub gui: GuiNode,
    pub activity_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: String,
    pub on: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultSpec {
    LagFrames { trigger_screen: String, avg_ms: f64 },
    MemoryLeak { per_action_kb: u64 },
    AnrFreeze { trigger_action: String, freeze_ms: u64 },
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub app_id: String,
    pub screens: BTreeMap<String, Screen>,
    pub initial_screen: String,
    pub transitions: Vec<Transition>,
    pub faults: Vec<FaultSpec>,
    pub baseline: Baseline,
    pub heap_cap_kb: u64,
    pub seed: u64,
    pub start_time_ms: i64,
}

impl Scenario {
    pub fn launch_activity(&self) -> &str {
        &self.screens[&self.initial_screen].activity_name
    }

    /// Faults other than `None`.
    pub fn active_faults(&self) -> impl Iterator<Item = &FaultSpec> {
        self.faults.iter().filter(|f| !matches!(f, FaultSpec::None))
    }

    pub fn leak_per_action_kb(&self) -> u64 {
        self.faults
            .iter()
            .map(|f| if let FaultSpec::MemoryLeak { per_action_kb } = f { *per_action_kb } else { 0 })
            .sum()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScreen {
    activity: String,
    gui: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    app_id: String,
    initial_screen: String,
    heap_cap_kb: u64,
    seed: u64,
    #[serde(default)]
    start_time_ms: Option<i64>,
    baseline: Baseline,
    screens: BTreeMap<String, RawScreen>,
    #[serde(default)]
    transitions: Vec<Transition>,
    #[serde(default)]
    faults: Vec<FaultSpec>,
}

fn check_matcher(m: &str) -> Result<(), String> {
    let action = m.split_once(':').map_or(m, |(a, _)| a);
    if MATCHER_ACTIONS.contains(&action) {
        Ok(())
    } else {
        Err(format!("unknown action `{action}`"))
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let mut problems = Vec::new();

    if raw.app_id.trim().is_empty() {
        problems.push("app_id: must not be empty".to_string());
    }
    let mut screens = BTreeMap::new();
    for (name, s) in &raw.screens {
        match parse_gui_dump(&s.gui) {
            Ok(state) => {
                if let Some(bad) = state.root.iter().find(|n| !n.bounds.is_well_formed()) {
                    problems.push(format!("screens.{name}.gui: node `{}` has inverted bounds", bad.class_name));
                }
                screens.insert(
                    name.clone(),
                    Screen { name: name.clone(), gui: state.root, activity_name: s.activity.clone() },
                );
            }
            Err(e) => problems.push(format!("screens.{name}.gui: {e}")),
        }
        if s.activity.trim().is_empty() {
            problems.push(format!("screens.{name}.activity: must not be empty"));
        }
    }
    if !raw.screens.contains_key(&raw.initial_screen) {
        problems.push(format!("initial_screen: unknown screen `{}`", raw.initial_screen));
    }
    for (i, t) in raw.transitions.iter().enumerate() {
        let edge = format!("{} --{}--> {}", t.from, t.on, t.to);
        if !raw.screens.contains_key(&t.from) {
            problems.push(format!("transitions[{i}].from: unknown screen `{}` in edge {edge}", t.from));
        }
        if !raw.screens.contains_key(&t.to) {
            problems.push(format!("transitions[{i}].to: unknown screen `{}` in edge {edge}", t.to));
        }
        if let Err(e) = check_matcher(&t.on) {
            problems.push(format!("transitions[{i}].on: {e}"));
        }
    }
    if raw.heap_cap_kb <= raw.baseline.heap_kb {
        problems.push(format!(
            "heap_cap_kb: {} must exceed baseline.heap_kb {}",
            raw.heap_cap_kb, raw.baseline.heap_kb
        ));
    }
    if !(0.0..=100.0).contains(&raw.baseline.cpu_percent) {
        problems.push("baseline.cpu_percent: must lie in [0, 100]".to_string());
    }
    for (i, f) in raw.faults.iter().enumerate() {
        match f {
            FaultSpec::LagFrames { trigger_screen, avg_ms } => {
                if !(avg_ms.is_finite() && *avg_ms > 0.0) {
                    problems.push(format!("faults[{i}].avg_ms: must be > 0"));
                }
                if !raw.screens.contains_key(trigger_screen) {
                    problems.push(format!("faults[{i}].trigger_screen: unknown screen `{trigger_screen}`"));
                }
            }
            FaultSpec::MemoryLeak { per_action_kb } => {
                if *per_action_kb == 0 {
                    problems.push(format!("faults[{i}].per_action_kb: must be > 0"));
                }
            }
            FaultSpec::AnrFreeze { trigger_action, freeze_ms } => {
                if *freeze_ms == 0 {
                    problems.push(format!("faults[{i}].freeze_ms: must be > 0"));
                }
                if let Err(e) = check_matcher(trigger_action) {
                    problems.push(format!("faults[{i}].trigger_action: {e}"));
                }
            }
            FaultSpec::None => {}
        }
    }
    if !problems.is_empty() {
        return Err(ScenarioError::Invalid(problems));
    }
    Ok(Scenario {
        app_id: raw.app_id,
        screens,
        initial_screen: raw.initial_screen,
        transitions: raw.transitions,
        faults: raw.faults,
        baseline: raw.baseline,
        heap_cap_kb: raw.heap_cap_kb,
        seed: raw.seed,
        start_time_ms: raw.start_time_ms.unwrap_or(DEFAULT_START_MS),
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_scenario(&text)
}
