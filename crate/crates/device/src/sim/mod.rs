//! Deterministic simulated device.
//!
//! Time is simulated: every command advances the clock by a per-kind cost
//! and nothing sleeps. Randomness (frame-time jitter, occasional skipped
//! frames) comes from a ChaCha8 stream seeded by the scenario.

mod scenario;

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revperf_core::logcat::{frame_stats_message, FRAME_STATS_TAG};
use revperf_core::{
    Bounds, CommandKind, CommandOutcome, DeviceCommand, GuiNode, GuiState, LogEntry, LogPriority, MetricSample,
    Orientation, Selector,
};

pub use scenario::{
    load_scenario, parse_scenario, Baseline, FaultSpec, Scenario, ScenarioError, Screen, Transition, DEFAULT_START_MS,
    MATCHER_ACTIONS,
};

use crate::{BackendCapabilities, BackendError, DeviceBackend};

pub const LAUNCHER_ACTIVITY: &str = "com.android.launcher3/.Launcher";
pub const KEYGUARD_ACTIVITY: &str = "com.android.systemui/.keyguard.KeyguardActivity";
/// Freeze length after which the system reports an ANR.
pub const ANR_THRESHOLD_MS: i64 = 5000;

const SYSTEM_PID: u32 = 612;
const FIRST_APP_PID: u32 = 4310;
const FROZEN_CPU_PERCENT: f64 = 97.0;

/// Simulated cost of one command.
pub fn command_cost_ms(cmd: &DeviceCommand) -> u64 {
    match cmd {
        DeviceCommand::Click { .. } | DeviceCommand::PressBack | DeviceCommand::LockScreen => 300,
        DeviceCommand::Swipe { duration_ms, .. } => duration_ms + 200,
        DeviceCommand::InputText { text, .. } => 100 + 20 * text.chars().count() as u64,
        DeviceCommand::RotateScreen { .. } => 700,
        DeviceCommand::Wait { duration_ms } => *duration_ms,
        DeviceCommand::UnlockScreen => 800,
        DeviceCommand::LaunchApp { .. } => 1500,
        DeviceCommand::AdjustSetting { .. } => 200,
        DeviceCommand::InvokeDetector => 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Freeze {
    start: i64,
    until: i64,
    freeze_ms: u64,
    anr_logged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum View {
    App,
    Launcher,
    Keyguard,
}

pub struct SimDevice {
    scenario: Scenario,
    rng: ChaCha8Rng,
    clock: i64,
    running: bool,
    foreground: bool,
    locked: bool,
    screen: String,
    back_stack: Vec<String>,
    orientation: Orientation,
    heap_kb: u64,
    pid: u32,
    overlays: BTreeMap<(String, String), String>,
    focused: Option<String>,
    settings: BTreeMap<String, String>,
    logs: Vec<LogEntry>,
    freeze: Option<Freeze>,
    anr_triggered: bool,
    online: bool,
}

fn node_key(n: &GuiNode) -> String {
    if n.resource_id.is_empty() {
        n.bounds.to_string()
    } else {
        n.resource_id.clone()
    }
}

fn short_id(rid: &str) -> &str {
    rid.rsplit_once('/').map_or(rid, |(_, s)| s)
}

fn transpose(node: &mut GuiNode) {
    let b = node.bounds;
    node.bounds = Bounds::new(b.top, b.left, b.bottom, b.right);
    node.children.iter_mut().for_each(transpose);
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

impl SimDevice {
    pub fn new(scenario: Scenario) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        SimDevice {
            rng,
            clock: scenario.start_time_ms,
            running: true,
            foreground: true,
            locked: false,
            screen: scenario.initial_screen.clone(),
            back_stack: Vec::new(),
            orientation: Orientation::Portrait,
            heap_kb: scenario.baseline.heap_kb,
            pid: FIRST_APP_PID,
            overlays: BTreeMap::new(),
            focused: None,
            settings: BTreeMap::new(),
            logs: Vec::new(),
            freeze: None,
            anr_triggered: false,
            online: true,
            scenario,
        }
    }

    /// Same scenario with a different seed.
    pub fn with_seed(mut scenario: Scenario, seed: u64) -> Self {
        scenario.seed = seed;
        SimDevice::new(scenario)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn current_screen(&self) -> Option<&str> {
        (self.view() == View::App).then_some(self.screen.as_str())
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    pub fn heap_kb(&self) -> u64 {
        if self.running {
            self.heap_kb
        } else {
            0
        }
    }

    pub fn setting(&self, namespace: &str, key: &str) -> Option<&str> {
        self.settings.get(&format!("{namespace}/{key}")).map(String::as_str)
    }

    /// Simulates losing the bridge connection.
    pub fn set_online(&mut self, online: bool) {
        self.online = online;
    }

    /// Every log entry emitted so far.
    pub fn all_logs(&self) -> &[LogEntry] {
        &self.logs
    }

    fn check_online(&self) -> Result<(), BackendError> {
        if self.online {
            Ok(())
        } else {
            Err(BackendError::DeviceUnreachable("simulated device offline".into()))
        }
    }

    fn view(&self) -> View {
        if self.locked {
            View::Keyguard
        } else if self.running && self.foreground {
            View::App
        } else {
            View::Launcher
        }
    }

    fn frozen(&self) -> bool {
        self.freeze.is_some_and(|f| self.clock < f.until)
    }

    fn screen_size(&self) -> Bounds {
        self.scenario.screens[&self.scenario.initial_screen].gui.bounds
    }

    fn launcher_tree(&self) -> GuiNode {
        let full = self.screen_size();
        let mut root = GuiNode::new("android.widget.FrameLayout", full);
        root.resource_id = "com.android.launcher3:id/launcher".into();
        let mut icon = GuiNode::new("android.widget.TextView", Bounds::new(40, 200, 280, 480));
        icon.resource_id = "com.android.launcher3:id/app_icon".into();
        icon.text = self.scenario.app_id.clone();
        icon.content_desc = self.scenario.app_id.clone();
        icon.clickable = true;
        root.children.push(icon);
        root
    }

    fn keyguard_tree(&self) -> GuiNode {
        let full = self.screen_size();
        let mut root = GuiNode::new("android.widget.FrameLayout", full);
        root.resource_id = "com.android.systemui:id/keyguard_root".into();
        let mut clock = GuiNode::new("android.widget.TextClock", Bounds::new(0, 300, full.right, 500));
        clock.resource_id = "com.android.systemui:id/clock".into();
        clock.text = "12:00".into();
        root.children.push(clock);
        root
    }

    fn app_tree(&self) -> GuiNode {
        let mut tree = self.scenario.screens[&self.screen].gui.clone();
        self.apply_overlays(&mut tree);
        tree
    }

    fn apply_overlays(&self, node: &mut GuiNode) {
        if let Some(t) = self.overlays.get(&(self.screen.clone(), node_key(node))) {
            node.text = t.clone();
        }
        for c in &mut node.children {
            self.apply_overlays(c);
        }
    }

    fn render(&self) -> GuiState {
        let (mut tree, activity) = match self.view() {
            View::Keyguard => (self.keyguard_tree(), KEYGUARD_ACTIVITY.to_string()),
            View::Launcher => (self.launcher_tree(), LAUNCHER_ACTIVITY.to_string()),
            View::App => (self.app_tree(), self.scenario.screens[&self.screen].activity_name.clone()),
        };
        if self.orientation == Orientation::Landscape {
            transpose(&mut tree);
        }
        GuiState::from_tree(tree, activity, self.clock)
    }

    fn emit(&mut self, pid: u32, priority: LogPriority, tag: &str, message: String) {
        self.logs.push(LogEntry { timestamp: self.clock, pid, tid: pid, priority, tag: tag.into(), message });
    }

    /// Matcher keys a command produces on the current screen.
    fn matcher_keys(cmd: &DeviceCommand, node: Option<&GuiNode>) -> Vec<String> {
        let action = match cmd.kind() {
            CommandKind::Click => "click",
            CommandKind::Swipe => "swipe",
            CommandKind::InputText => "input_text",
            CommandKind::PressBack => "back",
            CommandKind::RotateScreen => "rotate",
            CommandKind::LockScreen => "lock",
            CommandKind::UnlockScreen => "unlock",
            CommandKind::LaunchApp => "launch",
            CommandKind::AdjustSetting => "setting",
            CommandKind::Wait | CommandKind::InvokeDetector => return Vec::new(),
        };
        let mut keys = Vec::new();
        if let Some(n) = node {
            if !n.resource_id.is_empty() {
                keys.push(format!("{action}:{}", short_id(&n.resource_id)));
                keys.push(format!("{action}:{}", n.resource_id));
            }
            if !n.text.is_empty() {
                keys.push(format!("{action}:{}", n.text));
            }
            if !n.content_desc.is_empty() {
                keys.push(format!("{action}:{}", n.content_desc));
            }
        }
        match cmd {
            DeviceCommand::RotateScreen { orientation } => keys.push(format!(
                "rotate:{}",
                if *orientation == Orientation::Landscape { "landscape" } else { "portrait" }
            )),
            DeviceCommand::AdjustSetting { key, .. } => keys.push(format!("setting:{key}")),
            _ => {}
        }
        keys.push(action.to_string());
        keys
    }

    fn find_transition(&self, keys: &[String]) -> Option<String> {
        keys.iter().find_map(|k| {
            self.scenario.transitions.iter().find(|t| t.from == self.screen && t.on == *k).map(|t| t.to.clone())
        })
    }

    fn is_anr_trigger(&self, keys: &[String]) -> Option<u64> {
        if self.anr_triggered || self.view() != View::App {
            return None;
        }
        self.scenario.faults.iter().find_map(|f| match f {
            FaultSpec::AnrFreeze { trigger_action, freeze_ms } if keys.contains(trigger_action) => Some(*freeze_ms),
            _ => None,
        })
    }

    fn enter_screen(&mut self, to: String) {
        let from = std::mem::replace(&mut self.screen, to);
        self.back_stack.push(from);
        self.focused = None;
    }

    fn start_process(&mut self) {
        self.pid += 1;
        self.running = true;
        self.heap_kb = self.scenario.baseline.heap_kb;
        self.overlays.clear();
        let pkg = self.scenario.app_id.clone();
        let activity = self.scenario.launch_activity().to_string();
        self.emit(SYSTEM_PID, LogPriority::I, "ActivityManager", format!("Start proc {}:{pkg}/u0a142 for activity {{{activity}}}", self.pid));
    }

    fn bring_to_front(&mut self) {
        self.foreground = true;
        self.screen = self.scenario.initial_screen.clone();
        self.back_stack.clear();
        self.focused = None;
        let activity = self.scenario.launch_activity().to_string();
        self.emit(SYSTEM_PID, LogPriority::I, "ActivityManager", format!("Displayed {activity}: +412ms"));
    }

    fn emit_frame_batch(&mut self, lag: Option<f64>) {
        let pid = self.pid;
        let (avg, min, max, count) = match lag {
            Some(avg) => (avg, avg, avg, 1),
            None => {
                let avg = round2(30.0 + self.rng.random_range(-3.0..=3.0));
                let min = round2(avg - self.rng.random_range(8.0..=14.0));
                let max = round2(avg + self.rng.random_range(1.0..=6.0));
                (avg, min, max, self.rng.random_range(30..=38u32))
            }
        };
        self.emit(pid, LogPriority::I, FRAME_STATS_TAG, frame_stats_message(avg, min, max, count));
        if lag.is_none() && self.rng.random_range(0..100u32) < 15 {
            let n = self.rng.random_range(1..=29u32);
            self.emit(
                pid,
                LogPriority::I,
                "Choreographer",
                format!("Skipped {n} frames!  The application may be doing too much work on its main thread."),
            );
        }
    }

    fn kill_for_heap(&mut self) {
        let pkg = self.scenario.app_id.clone();
        let pid = self.pid;
        let cap = self.scenario.heap_cap_kb;
        self.emit(
            pid,
            LogPriority::E,
            "art",
            format!(
                "Throwing OutOfMemoryError \"Failed to allocate a {} byte allocation; heap {} KB exceeds growth limit {cap} KB\"",
                self.scenario.leak_per_action_kb().max(1) * 1024,
                self.heap_kb
            ),
        );
        self.emit(SYSTEM_PID, LogPriority::I, "ActivityManager", format!("Process {pkg} (pid {pid}) has died: fg TOP"));
        self.running = false;
        self.foreground = false;
        self.heap_kb = 0;
        self.back_stack.clear();
        self.focused = None;
        self.freeze = None;
    }

    /// Emits the ANR entry once the clock runs past the threshold and ends
    /// freezes whose window is over.
    fn tick_freeze(&mut self) {
        let Some(mut f) = self.freeze else { return };
        if !f.anr_logged && f.freeze_ms as i64 > ANR_THRESHOLD_MS && self.clock > f.start + ANR_THRESHOLD_MS {
            f.anr_logged = true;
            let pkg = self.scenario.app_id.clone();
            let activity = self.scenario.screens[&self.screen].activity_name.clone();
            self.emit(SYSTEM_PID, LogPriority::E, "ActivityManager", format!("ANR in {pkg} ({activity})"));
            self.emit(
                SYSTEM_PID,
                LogPriority::E,
                "ActivityManager",
                format!("Reason: Input dispatching timed out (Waiting to send key event because the focused window has not finished processing all of the input events that were previously delivered to it. Wait queue length: 3.  Wait queue head age: {}ms.)", self.clock - f.start),
            );
        }
        self.freeze = if self.clock >= f.until { None } else { Some(f) };
    }

    fn step(&mut self, cmd: &DeviceCommand) -> Result<CommandOutcome, BackendError> {
        cmd.check_payload().map_err(BackendError::InvalidCommand)?;
        let cost = command_cost_ms(cmd);
        match cmd {
            DeviceCommand::InvokeDetector => return Ok(CommandOutcome::ok("detector invoked", None, 0)),
            DeviceCommand::Wait { duration_ms } => {
                self.clock += *duration_ms as i64;
                self.tick_freeze();
                return Ok(CommandOutcome::ok(format!("waited {duration_ms} ms"), None, *duration_ms));
            }
            _ => {}
        }

        let before = self.render();
        let target = match cmd {
            DeviceCommand::InputText { target: None, .. } => match &self.focused {
                Some(rid) if self.view() == View::App => Some(Selector::ResourceId(rid.clone())),
                _ => {
                    return Err(BackendError::SelectorNotFound("no focused input field".into()));
                }
            },
            other => other.target(),
        };
        let node = match &target {
            Some(sel) => Some(before.root.resolve(sel).map_err(BackendError::from)?.clone()),
            None => None,
        };
        let keys = Self::matcher_keys(cmd, node.as_ref());

        self.clock += cost as i64;

        if self.frozen() {
            self.tick_freeze();
            return Ok(CommandOutcome::failed(
                "input not acknowledged: application is not responding",
                Some(self.render()),
                cost,
            ));
        }

        let view = self.view();
        let mut entered = None;
        let mut detail = format!("{cmd}");
        let mut ok = true;

        if let Some(freeze_ms) = self.is_anr_trigger(&keys) {
            self.anr_triggered = true;
            self.freeze = Some(Freeze { start: self.clock, until: self.clock + freeze_ms as i64, freeze_ms, anr_logged: false });
        } else {
            match cmd {
                DeviceCommand::LockScreen => self.locked = true,
                DeviceCommand::UnlockScreen => self.locked = false,
                DeviceCommand::RotateScreen { orientation } => self.orientation = *orientation,
                DeviceCommand::AdjustSetting { namespace, key, value } => {
                    self.settings.insert(format!("{}/{key}", namespace.as_str()), value.clone());
                }
                DeviceCommand::LaunchApp { package } => {
                    if package != &self.scenario.app_id {
                        ok = false;
                        detail = format!("package {package} is not installed");
                    } else if self.locked {
                        ok = false;
                        detail = "screen is locked".into();
                    } else {
                        if !self.running {
                            self.start_process();
                        }
                        self.bring_to_front();
                        entered = Some(self.screen.clone());
                    }
                }
                DeviceCommand::Click { .. } if view == View::Launcher => {
                    let n = node.as_ref().expect("click resolves a node");
                    if n.resource_id.ends_with("app_icon") {
                        if !self.running {
                            self.start_process();
                        }
                        self.bring_to_front();
                        entered = Some(self.screen.clone());
                    }
                }
                DeviceCommand::PressBack if view == View::App => {
                    if let Some(to) = self.find_transition(&keys) {
                        self.enter_screen(to.clone());
                        entered = Some(to);
                    } else if let Some(prev) = self.back_stack.pop() {
                        self.screen = prev.clone();
                        self.focused = None;
                        entered = Some(prev);
                    } else {
                        self.foreground = false;
                    }
                }
                DeviceCommand::InputText { text, .. } if view == View::App => {
                    let n = node.as_ref().expect("input resolves a node");
                    let key = (self.screen.clone(), node_key(n));
                    let mut current = self.overlays.get(&key).cloned().unwrap_or_else(|| n.text.clone());
                    if !self.overlays.contains_key(&key) && !n.class_name.contains("EditText") {
                        current.clear();
                    }
                    current.push_str(text);
                    self.overlays.insert(key, current);
                    if let Some(to) = self.find_transition(&keys) {
                        self.enter_screen(to.clone());
                        entered = Some(to);
                    }
                }
                DeviceCommand::Click { .. } | DeviceCommand::Swipe { .. } if view == View::App => {
                    if let (DeviceCommand::Click { .. }, Some(n)) = (cmd, node.as_ref()) {
                        if n.class_name.contains("EditText") && !n.resource_id.is_empty() {
                            self.focused = Some(n.resource_id.clone());
                        }
                    }
                    if let Some(to) = self.find_transition(&keys) {
                        self.enter_screen(to.clone());
                        entered = Some(to);
                    }
                }
                _ => {}
            }
        }

        if self.running && self.foreground && !self.locked && self.freeze.is_none() {
            let lag = entered.as_ref().and_then(|s| {
                self.scenario.faults.iter().find_map(|f| match f {
                    FaultSpec::LagFrames { trigger_screen, avg_ms } if trigger_screen == s => Some(*avg_ms),
                    _ => None,
                })
            });
            self.emit_frame_batch(lag);
        }

        if self.running {
            let leak = self.scenario.leak_per_action_kb();
            if leak > 0 {
                self.heap_kb += leak;
                if self.heap_kb > self.scenario.heap_cap_kb {
                    self.kill_for_heap();
                }
            }
        }
        self.tick_freeze();

        let after = self.render();
        Ok(if ok { CommandOutcome::ok(detail, Some(after), cost) } else { CommandOutcome::failed(detail, Some(after), cost) })
    }
}

impl DeviceBackend for SimDevice {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities::ALL
    }

    fn execute_command(&mut self, cmd: &DeviceCommand) -> Result<CommandOutcome, BackendError> {
        self.check_online()?;
        self.step(cmd)
    }

    fn dump_gui(&mut self) -> Result<GuiState, BackendError> {
        self.check_online()?;
        Ok(self.render())
    }

    fn poll_logs(&mut self, since: i64) -> Result<Vec<LogEntry>, BackendError> {
        self.check_online()?;
        Ok(self.logs.iter().filter(|e| e.timestamp > since).cloned().collect())
    }

    fn sample_metrics(&mut self) -> Result<MetricSample, BackendError> {
        self.check_online()?;
        let b = self.scenario.baseline;
        if !self.running {
            return Ok(MetricSample {
                timestamp: self.clock,
                heap_kb: 0,
                total_mem_kb: 0,
                swap_kb: b.swap_kb,
                cpu_percent: 0.0,
                activity_count: 0,
                process_running: false,
            });
        }
        Ok(MetricSample {
            timestamp: self.clock,
            heap_kb: self.heap_kb,
            total_mem_kb: b.total_mem_kb + self.heap_kb.saturating_sub(b.heap_kb),
            swap_kb: b.swap_kb,
            cpu_percent: if self.frozen() { FROZEN_CPU_PERCENT } else { b.cpu_percent },
            activity_count: b.activity_count + self.back_stack.len() as u32,
            process_running: true,
        })
    }

    fn now_ms(&self) -> i64 {
        self.clock
    }
}
