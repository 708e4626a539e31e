//! Uniform access to a text-completion reasoner.
//!
//! Every completion goes through [`complete`], which enforces the token budget
//! before any adapter is touched. Long agent histories are shrunk with
//! [`compress_history`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod compress;
mod http;
mod scripted;

pub use compress::{compress_history, RECENT_EXCHANGES_KEPT};
pub use http::HttpReasoner;
pub use scripted::{ScriptedReasoner, TranscriptEntry};

/// Environment variable carrying the bearer credential for the HTTP adapter.
pub const API_KEY_ENV: &str = "REVPERF_API_KEY";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReasonerError {
    #[error("reasoner provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("reasoner script exhausted (channel `{channel}`)")]
    ScriptExhausted { channel: String },
    #[error("conversation needs {estimate} tokens, budget is {budget}")]
    BudgetExceeded { estimate: usize, budget: usize },
    #[error("pinned messages need {pinned} tokens, budget is {budget}")]
    CannotCompress { pinned: usize, budget: usize },
    #[error("invalid reasoner script: {0}")]
    InvalidScript(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

/// Ordered message history with a set of pinned indices that compression keeps.
///
/// `channel` names the purpose of the conversation (e.g. `agent`, `detect`);
/// remote adapters ignore it, the scripted adapter routes on it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    messages: Vec<Message>,
    pinned: BTreeSet<usize>,
    #[serde(default)]
    channel: String,
}

impl Conversation {
    pub fn new() -> Self {
        Conversation::default()
    }

    pub fn with_channel(channel: impl Into<String>) -> Self {
        Conversation { channel: channel.into(), ..Conversation::default() }
    }

    pub fn channel(&self) -> &str {
        &self.channel
    }

    pub fn set_channel(&mut self, channel: impl Into<String>) {
        self.channel = channel.into();
    }

    pub fn push(&mut self, message: Message) -> usize {
        self.messages.push(message);
        self.messages.len() - 1
    }

    pub fn push_pinned(&mut self, message: Message) -> usize {
        let i = self.push(message);
        self.pinned.insert(i);
        i
    }

    /// Appends every message of `other`, carrying its pins over.
    pub fn extend(&mut self, other: &Conversation) {
        let offset = self.messages.len();
        self.messages.extend(other.messages.iter().cloned());
        self.pinned.extend(other.pinned.iter().map(|i| i + offset));
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn pinned(&self) -> &BTreeSet<usize> {
        &self.pinned
    }

    pub fn is_pinned(&self, index: usize) -> bool {
        self.pinned.contains(&index)
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn last(&self) -> Option<&Message> {
        self.messages.last()
    }

    pub(crate) fn from_parts(messages: Vec<Message>, pinned: BTreeSet<usize>, channel: String) -> Self {
        debug_assert!(pinned.iter().all(|&i| i < messages.len()));
        Conversation { messages, pinned, channel }
    }
}

/// Connection and budget settings for the reasoner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasonerConfig {
    pub endpoint: String,
    pub model_name: String,
    pub reproduction_token_budget: usize,
    pub report_token_budget: usize,
    pub retries: u32,
    pub timeout_secs: u64,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig {
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model_name: "default".into(),
            reproduction_token_budget: 10_000,
            report_token_budget: 50_000,
            retries: 2,
            timeout_secs: 120,
        }
    }
}

/// A source of assistant completions.
pub trait Reasoner: Send + Sync {
    fn name(&self) -> &str;

    /// Produces the next assistant text for the conversation. Callers go
    /// through [`complete`] so budgets are checked first.
    fn respond(&self, conv: &Conversation) -> Result<String, ReasonerError>;
}

/// Budget-checked completion.
pub fn complete(conv: &Conversation, budget: usize, adapter: &dyn Reasoner) -> Result<String, ReasonerError> {
    let estimate = estimate_tokens(conv);
    if estimate > budget {
        return Err(ReasonerError::BudgetExceeded { estimate, budget });
    }
    adapter.respond(conv)
}

/// Token estimate of one message: a quarter of its character count, rounded up,
/// and never less than one so that only an empty conversation estimates to zero.
pub fn message_tokens(message: &Message) -> usize {
    message.content.chars().count().div_ceil(4).max(1)
}

/// Sum of per-message estimates. Additive over concatenation.
pub fn estimate_tokens(conv: &Conversation) -> usize {
    conv.messages.iter().map(message_tokens).sum()
}
