//! Keyword-based classification of review text into issue categories.
//!
//! Keywords match case-insensitively on word boundaries. Multi-word keywords
//! tolerate any run of whitespace between words, and a trailing `*` turns the
//! last word into a stem (`lag*` matches "lag", "laggy", "lagging").

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::IssueCategory;

/// Category → keyword list. Ordered so iteration is deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeywordMap(pub BTreeMap<IssueCategory, Vec<String>>);

impl Default for KeywordMap {
    fn default() -> Self {
        let slow = [
            "slow*", "lag*", "delay*", "sluggish*", "stutter*", "jank*", "choppy", "takes forever",
            "long time", "loading forever", "typing blind", "input lag", "scroll* jerk*", "wait* forever",
        ];
        let freeze = [
            "freez*", "froze*", "frozen", "hang*", "hung", "unresponsive", "not responding", "anr",
            "stuck", "crash*", "stops working", "stopped working",
        ];
        let resource = [
            "battery", "drain*", "memory", "leak*", "hot", "overheat*", "heats up", "cpu",
            "data usage", "ram", "storage",
        ];
        let to_vec = |words: &[&str]| words.iter().map(|w| w.to_string()).collect::<Vec<_>>();
        KeywordMap(BTreeMap::from([
            (IssueCategory::SlowInteraction, to_vec(&slow)),
            (IssueCategory::FreezeUnresponsive, to_vec(&freeze)),
            (IssueCategory::ExcessiveResource, to_vec(&resource)),
        ]))
    }
}

impl KeywordMap {
    pub fn is_empty(&self) -> bool {
        self.0.values().all(|v| v.is_empty())
    }

    /// Compiles the map once for repeated classification.
    pub fn compile(&self) -> Classifier {
        let rules = self
            .0
            .iter()
            .map(|(cat, words)| {
                let patterns = words
                    .iter()
                    .filter_map(|w| keyword_regex(w).map(|re| (w.clone(), re)))
                    .collect();
                (*cat, patterns)
            })
            .collect();
        Classifier { rules }
    }
}

fn keyword_regex(keyword: &str) -> Option<Regex> {
    let keyword = keyword.trim();
    let (body, stem) = match keyword.strip_suffix('*') {
        Some(b) => (b.trim_end(), true),
        None => (keyword, false),
    };
    if body.is_empty() {
        return None;
    }
    let words: Vec<String> = body
        .split_whitespace()
        .map(|w| match w.strip_suffix('*') {
            Some(inner) => format!("{}\\w*", regex::escape(inner)),
            None => regex::escape(w),
        })
        .collect();
    let mut pat = format!(r"(?i)\b{}", words.join(r"\s+"));
    if stem {
        pat.push_str(r"\w*");
    }
    pat.push_str(r"\b");
    Regex::new(&pat).ok()
}

pub struct Classifier {
    rules: Vec<(IssueCategory, Vec<(String, Regex)>)>,
}

impl Classifier {
    pub fn classify(&self, text: &str) -> BTreeSet<IssueCategory> {
        self.rules
            .iter()
            .filter(|(_, pats)| pats.iter().any(|(_, re)| re.is_match(text)))
            .map(|(cat, _)| *cat)
            .collect()
    }

    /// Keywords that fired, per category.
    pub fn hits(&self, text: &str) -> BTreeMap<IssueCategory, Vec<String>> {
        self.rules
            .iter()
            .filter_map(|(cat, pats)| {
                let hit: Vec<String> =
                    pats.iter().filter(|(_, re)| re.is_match(text)).map(|(w, _)| w.clone()).collect();
                (!hit.is_empty()).then_some((*cat, hit))
            })
            .collect()
    }
}

/// Every category whose keyword list intersects the text.
pub fn classify_review(text: &str, keyword_map: &KeywordMap) -> BTreeSet<IssueCategory> {
    keyword_map.compile().classify(text)
}
