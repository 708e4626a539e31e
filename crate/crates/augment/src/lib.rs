//! Review augmentation: retrieve same-version reviews that look alike, let the
//! reasoner keep the relevant ones, then ask it for a structured enrichment.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use revperf_core::{IssueCategory, Review};
use revperf_reasoner::ReasonerError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod corpus;
pub mod embed;
pub mod enrich;
pub mod relevance;
pub mod retrieve;

pub use corpus::{load_corpus, parse_corpus};
pub use embed::{cosine_similarity, EmbeddingProvider, EmbeddingVector, HashedTfEmbedder, HttpEmbedder, FALLBACK_DIM};
pub use enrich::{enrich_review, parse_enrichment};
pub use relevance::{filter_relevant, parse_relevance};
pub use retrieve::{retrieve_similar, CorpusIndex, ScoredReview};

/// Default number of similar reviews retrieved.
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("malformed reasoner output: {0}")]
    MalformedReasonerOutput(String),
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
    #[error("corpus: {0}")]
    Corpus(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub username: String,
    pub password: String,
}

/// App facts the agent needs but reviews never mention (login, purpose).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssentialContext {
    pub app_description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credentials: Option<Credentials>,
    #[serde(default)]
    pub extra_notes: String,
}

impl EssentialContext {
    pub fn new(app_description: impl Into<String>) -> Self {
        EssentialContext { app_description: app_description.into(), credentials: None, extra_notes: String::new() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.app_description.trim().is_empty() {
            return Err("app_description is empty".into());
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = format!("App: {}\n", self.app_description.trim());
        if let Some(c) = &self.credentials {
            let _ = writeln!(out, "Login: username `{}`, password `{}`", c.username, c.password);
        }
        if !self.extra_notes.trim().is_empty() {
            let _ = writeln!(out, "Notes: {}", self.extra_notes.trim());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichedReview {
    pub original: Review,
    pub related: Vec<Review>,
    pub symptom_summary: String,
    pub triggers: Vec<String>,
    pub expected_categories: BTreeSet<IssueCategory>,
    pub context: EssentialContext,
    pub analysis: String,
}

impl EnrichedReview {
    /// The original review with no enrichment, used when augmentation is off.
    /// Expected categories still come from the keyword classifier.
    pub fn passthrough(
        original: Review,
        context: EssentialContext,
        expected_categories: BTreeSet<IssueCategory>,
    ) -> Self {
        EnrichedReview {
            symptom_summary: original.text.clone(),
            original,
            related: Vec::new(),
            triggers: Vec::new(),
            expected_categories,
            context,
            analysis: String::new(),
        }
    }

    /// Prompt-ready text block.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let o = &self.original;
        let _ = writeln!(out, "Review {} ({} v{}, {} stars):", o.id, o.app_id, o.app_version, o.rating);
        let _ = writeln!(out, "\"{}\"", o.text.trim());
        let _ = writeln!(out, "Symptom: {}", self.symptom_summary.trim());
        if !self.triggers.is_empty() {
            let _ = writeln!(out, "Triggers:");
            for t in &self.triggers {
                let _ = writeln!(out, "- {t}");
            }
        }
        if !self.expected_categories.is_empty() {
            let cats: Vec<_> = self.expected_categories.iter().map(|c| c.as_str()).collect();
            let _ = writeln!(out, "Expected categories: {}", cats.join(", "));
        }
        if !self.related.is_empty() {
            let _ = writeln!(out, "Related reviews:");
            for r in &self.related {
                let _ = writeln!(out, "- [{}] {}", r.id, r.text.trim());
            }
        }
        if !self.analysis.trim().is_empty() {
            let _ = writeln!(out, "Analysis: {}", self.analysis.trim());
        }
        out.push_str(&self.context.render());
        out
    }
}
