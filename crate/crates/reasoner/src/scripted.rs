//! Deterministic reasoner replaying a prepared script.
//!
//! Script files hold records separated by a line containing only `---`. A
//! record may open with a routing header:
//!
//! ```text
//! [agent]          queued for conversations on the `agent` channel
//! [detect repeat]  answer for every `detect` call once its queue is empty
//! ```
//!
//! Untagged records form the default queue, consumed by any channel whose
//! own queue and repeat answer are both absent.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use crate::{Conversation, Reasoner, ReasonerError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub channel: String,
    /// Content of the last message in the conversation that was answered.
    pub prompt: String,
    pub reply: String,
}

#[derive(Debug, Default)]
struct ScriptState {
    default: VecDeque<String>,
    channels: BTreeMap<String, VecDeque<String>>,
    repeat: BTreeMap<String, String>,
    transcript: Vec<TranscriptEntry>,
}

#[derive(Debug, Default)]
pub struct ScriptedReasoner {
    state: Mutex<ScriptState>,
}

impl ScriptedReasoner {
    /// Untagged responses, answered in order.
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let state = ScriptState {
            default: responses.into_iter().map(Into::into).collect(),
            ..ScriptState::default()
        };
        ScriptedReasoner { state: Mutex::new(state) }
    }

    pub fn from_file(path: &Path) -> Result<Self, ReasonerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ReasonerError::InvalidScript(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ReasonerError> {
        let reasoner = ScriptedReasoner::default();
        let mut record: Vec<&str> = Vec::new();
        for line in text.lines().chain(std::iter::once("---")) {
            if line.trim_end() == "---" {
                reasoner.add_record(&record)?;
                record.clear();
            } else {
                record.push(line);
            }
        }
        Ok(reasoner)
    }

    fn add_record(&self, lines: &[&str]) -> Result<(), ReasonerError> {
        let start = lines.iter().position(|l| !l.trim().is_empty());
        let Some(start) = start else { return Ok(()) };
        let end = lines.iter().rposition(|l| !l.trim().is_empty()).unwrap_or(start);
        let lines = &lines[start..=end];

        let header = lines[0].trim();
        let routed = header
            .strip_prefix('[')
            .and_then(|h| h.strip_suffix(']'))
            .filter(|h| h.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == ' '));
        match routed {
            Some(h) => {
                let mut parts = h.split_whitespace();
                let channel = parts
                    .next()
                    .ok_or_else(|| ReasonerError::InvalidScript("empty routing header".into()))?;
                let repeat = match parts.next() {
                    None => false,
                    Some("repeat") => true,
                    Some(other) => {
                        return Err(ReasonerError::InvalidScript(format!("unknown header flag `{other}`")))
                    }
                };
                let body = lines[1..].join("\n").trim().to_string();
                if body.is_empty() {
                    return Err(ReasonerError::InvalidScript(format!("record for `{channel}` has no body")));
                }
                if repeat {
                    self.set_repeat(channel, body);
                } else {
                    self.push_channel(channel, body);
                }
            }
            None => self.lock().default.push_back(lines.join("\n")),
        }
        Ok(())
    }

    pub fn push_channel(&self, channel: &str, response: impl Into<String>) {
        self.lock().channels.entry(channel.to_string()).or_default().push_back(response.into());
    }

    pub fn set_repeat(&self, channel: &str, response: impl Into<String>) {
        self.lock().repeat.insert(channel.to_string(), response.into());
    }

    /// Queued (non-repeating) responses left across all queues.
    pub fn remaining(&self) -> usize {
        let s = self.lock();
        s.default.len() + s.channels.values().map(VecDeque::len).sum::<usize>()
    }

    pub fn remaining_on(&self, channel: &str) -> usize {
        self.lock().channels.get(channel).map_or(0, VecDeque::len)
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.lock().transcript.clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ScriptState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl Reasoner for ScriptedReasoner {
    fn name(&self) -> &str {
        "scripted"
    }

    fn respond(&self, conv: &Conversation) -> Result<String, ReasonerError> {
        let mut s = self.lock();
        let channel = conv.channel().to_string();
        let reply = s
            .channels
            .get_mut(&channel)
            .and_then(VecDeque::pop_front)
            .or_else(|| s.repeat.get(&channel).cloned())
            .or_else(|| s.default.pop_front())
            .ok_or(ReasonerError::ScriptExhausted { channel: channel.clone() })?;
        let prompt = conv.last().map(|m| m.content.clone()).unwrap_or_default();
        s.transcript.push(TranscriptEntry { channel, prompt, reply: reply.clone() });
        Ok(reply)
    }
}
