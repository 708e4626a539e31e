//! Value types shared across the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gui::GuiState;

/// One piece of user feedback from an app store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub app_id: String,
    pub app_version: String,
    pub rating: u8,
    pub text: String,
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub developer_reply: Option<String>,
}

impl Review {
    /// Checks the per-record invariants (rating range, non-empty text).
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id is empty".into());
        }
        if !(1..=5).contains(&self.rating) {
            return Err(format!("rating {} outside [1,5]", self.rating));
        }
        if self.text.trim().is_empty() {
            return Err("text is empty".into());
        }
        Ok(())
    }
}

/// The three performance-issue categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IssueCategory {
    SlowInteraction,
    FreezeUnresponsive,
    ExcessiveResource,
}

impl IssueCategory {
    pub const ALL: [IssueCategory; 3] = [
        IssueCategory::SlowInteraction,
        IssueCategory::FreezeUnresponsive,
        IssueCategory::ExcessiveResource,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IssueCategory::SlowInteraction => "SlowInteraction",
            IssueCategory::FreezeUnresponsive => "FreezeUnresponsive",
            IssueCategory::ExcessiveResource => "ExcessiveResource",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            IssueCategory::SlowInteraction => "slow interaction and delayed response",
            IssueCategory::FreezeUnresponsive => "app freezing and unresponsiveness",
            IssueCategory::ExcessiveResource => "excessive resource consumption",
        }
    }
}

impl fmt::Display for IssueCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IssueCategory {
    type Err = String;

    /// Accepts the canonical names plus a few loose spellings reasoners tend to produce.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "slowinteraction" | "slow" | "slowinteractionanddelayedresponse" | "lag" => {
                Ok(IssueCategory::SlowInteraction)
            }
            "freezeunresponsive" | "freeze" | "appfreezingandunresponsiveness" | "unresponsive"
            | "anr" => Ok(IssueCategory::FreezeUnresponsive),
            "excessiveresource" | "excessiveresourceconsumption" | "resource" => {
                Ok(IssueCategory::ExcessiveResource)
            }
            _ => Err(format!("unknown issue category `{s}`")),
        }
    }
}

/// Logcat priority level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LogPriority {
    V,
    D,
    I,
    W,
    E,
    F,
}

impl LogPriority {
    pub fn from_char(c: char) -> Option<Self> {
        Some(match c {
            'V' => LogPriority::V,
            'D' => LogPriority::D,
            'I' => LogPriority::I,
            'W' => LogPriority::W,
            'E' => LogPriority::E,
            'F' => LogPriority::F,
            _ => return None,
        })
    }

    pub fn as_char(self) -> char {
        match self {
            LogPriority::V => 'V',
            LogPriority::D => 'D',
            LogPriority::I => 'I',
            LogPriority::W => 'W',
            LogPriority::E => 'E',
            LogPriority::F => 'F',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub timestamp: i64,
    pub pid: u32,
    pub tid: u32,
    pub priority: LogPriority,
    pub tag: String,
    pub message: String,
}

/// One `app_time_stats` batch reported by the emulator's GL layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameStatsSample {
    pub avg_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub count: u32,
    pub timestamp: i64,
}

/// A single reading of the monitored process's resource metrics.
///
/// `cpu_percent` is normalised to one core's worth of time. When the target
/// process is not running, `process_running` is false and the per-process
/// fields (`heap_kb`, `cpu_percent`, `activity_count`) are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub timestamp: i64,
    pub heap_kb: u64,
    pub total_mem_kb: u64,
    pub swap_kb: u64,
    pub cpu_percent: f64,
    pub activity_count: u32,
    #[serde(default = "default_true")]
    pub process_running: bool,
}

fn default_true() -> bool {
    true
}

/// How an agent addresses a widget.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    ResourceId(String),
    Text(String),
    Point { x: i32, y: i32 },
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::ResourceId(id) => write!(f, "id={}", quote_if_needed(id)),
            Selector::Text(text) => write!(f, "text={}", quote(text)),
            Selector::Point { x, y } => write!(f, "x={x} y={y}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Portrait,
    Landscape,
}

impl Orientation {
    /// Value for the `user_rotation` system setting.
    pub fn user_rotation(self) -> u8 {
        match self {
            Orientation::Portrait => 0,
            Orientation::Landscape => 1,
        }
    }
}

/// Namespace of the Android settings store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingNamespace {
    System,
    Secure,
    Global,
}

impl SettingNamespace {
    pub fn as_str(self) -> &'static str {
        match self {
            SettingNamespace::System => "system",
            SettingNamespace::Secure => "secure",
            SettingNamespace::Global => "global",
        }
    }
}

impl FromStr for SettingNamespace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "system" => Ok(SettingNamespace::System),
            "secure" => Ok(SettingNamespace::Secure),
            "global" => Ok(SettingNamespace::Global),
            other => Err(format!("unknown settings namespace `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CommandKind {
    Click,
    Swipe,
    InputText,
    RotateScreen,
    Wait,
    LockScreen,
    UnlockScreen,
    PressBack,
    LaunchApp,
    AdjustSetting,
    InvokeDetector,
}

impl CommandKind {
    pub const ALL: [CommandKind; 11] = [
        CommandKind::LaunchApp,
        CommandKind::Click,
        CommandKind::Swipe,
        CommandKind::InputText,
        CommandKind::RotateScreen,
        CommandKind::Wait,
        CommandKind::LockScreen,
        CommandKind::UnlockScreen,
        CommandKind::PressBack,
        CommandKind::AdjustSetting,
        CommandKind::InvokeDetector,
    ];

    /// Keyword used by the agent's one-line command grammar.
    pub fn keyword(self) -> &'static str {
        match self {
            CommandKind::Click => "CLICK",
            CommandKind::Swipe => "SWIPE",
            CommandKind::InputText => "INPUT_TEXT",
            CommandKind::RotateScreen => "ROTATE",
            CommandKind::Wait => "WAIT",
            CommandKind::LockScreen => "LOCK_SCREEN",
            CommandKind::UnlockScreen => "UNLOCK_SCREEN",
            CommandKind::PressBack => "BACK",
            CommandKind::LaunchApp => "LAUNCH_APP",
            CommandKind::AdjustSetting => "SET_SETTING",
            CommandKind::InvokeDetector => "INVOKE_DETECTOR",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        CommandKind::ALL.into_iter().find(|k| k.keyword() == word)
    }

    /// Whether executing the command can change device or app state.
    pub fn is_state_changing(self) -> bool {
        !matches!(self, CommandKind::Wait | CommandKind::InvokeDetector)
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// The agent's action vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceCommand {
    Click {
        target: Selector,
    },
    Swipe {
        from: (i32, i32),
        to: (i32, i32),
        duration_ms: u64,
    },
    InputText {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<Selector>,
        text: String,
    },
    RotateScreen {
        orientation: Orientation,
    },
    Wait {
        duration_ms: u64,
    },
    LockScreen,
    UnlockScreen,
    PressBack,
    LaunchApp {
        package: String,
    },
    AdjustSetting {
        namespace: SettingNamespace,
        key: String,
        value: String,
    },
    InvokeDetector,
}

impl DeviceCommand {
    pub fn kind(&self) -> CommandKind {
        match self {
            DeviceCommand::Click { .. } => CommandKind::Click,
            DeviceCommand::Swipe { .. } => CommandKind::Swipe,
            DeviceCommand::InputText { .. } => CommandKind::InputText,
            DeviceCommand::RotateScreen { .. } => CommandKind::RotateScreen,
            DeviceCommand::Wait { .. } => CommandKind::Wait,
            DeviceCommand::LockScreen => CommandKind::LockScreen,
            DeviceCommand::UnlockScreen => CommandKind::UnlockScreen,
            DeviceCommand::PressBack => CommandKind::PressBack,
            DeviceCommand::LaunchApp { .. } => CommandKind::LaunchApp,
            DeviceCommand::AdjustSetting { .. } => CommandKind::AdjustSetting,
            DeviceCommand::InvokeDetector => CommandKind::InvokeDetector,
        }
    }

    /// The widget or location the command is aimed at, if any.
    pub fn target(&self) -> Option<Selector> {
        match self {
            DeviceCommand::Click { target } => Some(target.clone()),
            DeviceCommand::InputText { target, .. } => target.clone(),
            DeviceCommand::Swipe { from, .. } => Some(Selector::Point { x: from.0, y: from.1 }),
            _ => None,
        }
    }

    pub fn is_state_changing(&self) -> bool {
        self.kind().is_state_changing()
    }

    /// Checks that the kind-specific payload is present and sane.
    pub fn check_payload(&self) -> Result<(), String> {
        match self {
            DeviceCommand::Wait { duration_ms: 0 } => Err("wait duration must be > 0".into()),
            DeviceCommand::InputText { text, .. } if text.is_empty() => {
                Err("input text must not be empty".into())
            }
            DeviceCommand::LaunchApp { package } if package.trim().is_empty() => {
                Err("launch package must not be empty".into())
            }
            DeviceCommand::AdjustSetting { key, .. } if key.trim().is_empty() => {
                Err("setting key must not be empty".into())
            }
            DeviceCommand::Click { target: Selector::ResourceId(s) | Selector::Text(s) }
                if s.is_empty() =>
            {
                Err("selector must not be empty".into())
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DeviceCommand {
    /// Renders the command in the agent's one-line grammar.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kw = self.kind().keyword();
        match self {
            DeviceCommand::Click { target } => write!(f, "{kw} {target}"),
            DeviceCommand::Swipe { from, to, duration_ms } => write!(
                f,
                "{kw} x1={} y1={} x2={} y2={} ms={duration_ms}",
                from.0, from.1, to.0, to.1
            ),
            DeviceCommand::InputText { target: Some(t), text } => {
                write!(f, "{kw} {t} value={}", quote(text))
            }
            DeviceCommand::InputText { target: None, text } => {
                write!(f, "{kw} value={}", quote(text))
            }
            DeviceCommand::RotateScreen { orientation } => {
                let o = match orientation {
                    Orientation::Portrait => "portrait",
                    Orientation::Landscape => "landscape",
                };
                write!(f, "{kw} orientation={o}")
            }
            DeviceCommand::Wait { duration_ms } => write!(f, "{kw} ms={duration_ms}"),
            DeviceCommand::LaunchApp { package } => write!(f, "{kw} pkg={package}"),
            DeviceCommand::AdjustSetting { namespace, key, value } => write!(
                f,
                "{kw} ns={} key={} value={}",
                namespace.as_str(),
                quote_if_needed(key),
                quote_if_needed(value)
            ),
            DeviceCommand::LockScreen
            | DeviceCommand::UnlockScreen
            | DeviceCommand::PressBack
            | DeviceCommand::InvokeDetector => f.write_str(kw),
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn quote_if_needed(s: &str) -> String {
    if !s.is_empty() && s.chars().all(|c| !c.is_whitespace() && c != '"' && c != '\\' && c != '=') {
        s.to_string()
    } else {
        quote(s)
    }
}

/// Result of executing one command on a device backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandOutcome {
    pub success: bool,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gui_after: Option<GuiState>,
    pub elapsed_ms: u64,
}

impl CommandOutcome {
    pub fn ok(detail: impl Into<String>, gui_after: Option<GuiState>, elapsed_ms: u64) -> Self {
        CommandOutcome { success: true, detail: detail.into(), gui_after, elapsed_ms }
    }

    pub fn failed(detail: impl Into<String>, gui_after: Option<GuiState>, elapsed_ms: u64) -> Self {
        let mut detail = detail.into();
        if detail.is_empty() {
            detail.push_str("command failed");
        }
        CommandOutcome { success: false, detail, gui_after, elapsed_ms }
    }
}
