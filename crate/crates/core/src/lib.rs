//! Shared domain types and deterministic parsers.

pub mod classify;
pub mod gui;
pub mod logcat;
pub mod model;

pub use classify::{classify_review, Classifier, KeywordMap};
pub use gui::{normalize_gui, parse_gui_dump, serialize_gui, Bounds, GuiError, GuiNode, GuiState};
pub use logcat::{extract_frame_stats, format_threadtime, parse_logcat, parse_logcat_line};
pub use model::{
    CommandKind, CommandOutcome, DeviceCommand, FrameStatsSample, IssueCategory, LogEntry, LogPriority,
    MetricSample, Orientation, Review, Selector, SettingNamespace,
};
