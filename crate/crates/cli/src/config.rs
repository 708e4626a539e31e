//! Run configuration file and its validation.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use revperf_agent::AgentConfig;
use revperf_augment::EssentialContext;
use revperf_core::KeywordMap;
use revperf_detect::{Analyzer, DetectConfig, LogPattern};
use revperf_reasoner::ReasonerConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Adb,
    Sim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasonerKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    /// Offline hashed term-frequency vectors.
    Hashed,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSettings {
    pub kind: EmbedderKind,
    pub endpoint: String,
    pub model: String,
    pub dim: usize,
    pub retries: u32,
}

impl Default for EmbedderSettings {
    fn default() -> Self {
        EmbedderSettings {
            kind: EmbedderKind::Hashed,
            endpoint: "http://127.0.0.1:8080/v1/embeddings".into(),
            model: "default".into(),
            dim: 768,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdbSettings {
    pub adb_binary_path: PathBuf,
    pub device_serial: Option<String>,
    pub poll_interval_ms: u64,
}

impl Default for AdbSettings {
    fn default() -> Self {
        AdbSettings { adb_binary_path: PathBuf::from("adb"), device_serial: None, poll_interval_ms: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub k: usize,
    pub reproduction_token_budget: usize,
    pub report_token_budget: usize,
    pub lag_avg_ms: f64,
    pub leak_slope_kb_per_sample: f64,
    pub step_budget: usize,
    pub detection_rounds_max: usize,
    pub enabled_analyzers: Vec<String>,
    pub enable_augmentation: bool,
    pub enable_version_filter: bool,
    /// Let the reasoner review excerpts in addition to the rules.
    pub detection_reasoner: bool,
    pub ask_transition: bool,
    pub gui_char_cap: usize,
    pub backend: BackendKind,
    pub reasoner: ReasonerKind,
    pub scenario: Option<PathBuf>,
    pub reasoner_script: Option<PathBuf>,
    pub seed: Option<u64>,
    pub extra_log_patterns: Vec<LogPattern>,
    pub context: Option<EssentialContext>,
    pub keywords: Option<KeywordMap>,
    pub http: ReasonerConfig,
    pub embedder: EmbedderSettings,
    pub adb: AdbSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let detect = DetectConfig::default();
        RunConfig {
            k: revperf_augment::DEFAULT_K,
            reproduction_token_budget: 10_000,
            report_token_budget: detect.report_token_budget,
            lag_avg_ms: detect.lag_avg_ms,
            leak_slope_kb_per_sample: detect.leak_slope_kb_per_sample,
            step_budget: 25,
            detection_rounds_max: detect.detection_rounds_max,
            enabled_analyzers: Analyzer::ALL.iter().map(|a| a.to_string()).collect(),
            enable_augmentation: true,
            enable_version_filter: true,
            detection_reasoner: true,
            ask_transition: true,
            gui_char_cap: 8000,
            backend: BackendKind::Sim,
            reasoner: ReasonerKind::Http,
            scenario: None,
            reasoner_script: None,
            seed: None,
            extra_log_patterns: Vec::new(),
            context: None,
            keywords: None,
            http: ReasonerConfig::default(),
            embedder: EmbedderSettings::default(),
            adb: AdbSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn analyzers(&self) -> BTreeSet<Analyzer> {
        self.enabled_analyzers.iter().filter_map(|a| a.parse().ok()).collect()
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            step_budget: self.step_budget,
            gui_char_cap: self.gui_char_cap,
            reproduction_token_budget: self.reproduction_token_budget,
            ask_transition: self.ask_transition,
        }
    }

    pub fn detect_config(&self) -> DetectConfig {
        DetectConfig {
            lag_avg_ms: self.lag_avg_ms,
            leak_slope_kb_per_sample: self.leak_slope_kb_per_sample,
            report_token_budget: self.report_token_budget,
            detection_rounds_max: self.detection_rounds_max,
            enabled_analyzers: self.analyzers(),
            extra_log_patterns: self.extra_log_patterns.clone(),
            ..DetectConfig::default()
        }
    }

    pub fn reasoner_config(&self) -> ReasonerConfig {
        ReasonerConfig {
            reproduction_token_budget: self.reproduction_token_budget,
            report_token_budget: self.report_token_budget,
            ..self.http.clone()
        }
    }

    pub fn keyword_map(&self) -> KeywordMap {
        self.keywords.clone().unwrap_or_default()
    }

    /// Semantic checks that serde cannot express.
    pub fn check(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: String| out.push(Diagnostic::new(field, message));
        if self.k == 0 {
            bad("k", "must be at least 1".into());
        }
        for (field, v) in [
            ("reproduction_token_budget", self.reproduction_token_budget),
            ("report_token_budget", self.report_token_budget),
            ("step_budget", self.step_budget),
            ("detection_rounds_max", self.detection_rounds_max),
            ("gui_char_cap", self.gui_char_cap),
        ] {
            if v == 0 {
                bad(field, "must be at least 1".into());
            }
        }
        if !(self.lag_avg_ms.is_finite() && self.lag_avg_ms > 0.0) {
            bad("lag_avg_ms", format!("must be a positive number of milliseconds, got {}", self.lag_avg_ms));
        }
        if !(self.leak_slope_kb_per_sample.is_finite() && self.leak_slope_kb_per_sample > 0.0) {
            bad("leak_slope_kb_per_sample", format!("must be positive, got {}", self.leak_slope_kb_per_sample));
        }
        if self.enabled_analyzers.is_empty() {
            bad("enabled_analyzers", "at least one analyzer must be enabled".into());
        }
        for (i, name) in self.enabled_analyzers.iter().enumerate() {
            if let Err(e) = name.parse::<Analyzer>() {
                bad(&format!("enabled_analyzers[{i}]"), e);
            }
        }
        for (i, p) in self.extra_log_patterns.iter().enumerate() {
            if p.contains.is_empty() {
                bad(&format!("extra_log_patterns[{i}].contains"), "must not be empty".into());
            }
        }
        if let Some(c) = &self.context {
            if let Err(e) = c.validate() {
                bad("context.app_description", e);
            }
        }
        if self.embedder.dim == 0 {
            bad("embedder.dim", "must be at least 1".into());
        }
        if self.adb.poll_interval_ms < 100 {
            bad("adb.poll_interval_ms", format!("must be >= 100, got {}", self.adb.poll_interval_ms));
        }
        out
    }
}

/// A configuration problem tied to a field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

fn deserialize(table: toml::Table) -> Result<RunConfig, Diagnostic> {
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { String::new() } else { path };
        Diagnostic::new(field, e.into_inner().to_string())
    })
}

/// Parses config text, applying defaults. Every top-level entry is checked
/// on its own so one bad field does not hide the others.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<Diagnostic>> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| vec![Diagnostic::new("", e.to_string())])?;
    let mut diags = Vec::new();
    for (key, value) in &table {
        let single = toml::Table::from_iter([(key.clone(), value.clone())]);
        if let Err(mut d) = deserialize(single) {
            if d.field.is_empty() {
                d.field = key.clone();
            }
            diags.push(d);
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    let config = deserialize(table).map_err(|d| vec![d])?;
    let diags = config.check();
    if diags.is_empty() {
        Ok(config)
    } else {
        Err(diags)
    }
}

pub fn validate_config(path: &Path) -> Result<RunConfig, Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::new("", format!("cannot read {}: {e}", path.display()))])?;
    let mut config = parse_config(&text)?;
    // relative file references are relative to the config file
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut config.scenario, &mut config.reasoner_script].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(config)
}
