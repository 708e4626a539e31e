//! JSON Lines review corpora.

use std::collections::HashSet;
use std::path::Path;

use revperf_core::Review;

use crate::AugmentError;

/// Parses one review per non-blank line; rejects invalid records and duplicate ids.
pub fn parse_corpus(text: &str) -> Result<Vec<Review>, AugmentError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let review: Review = serde_json::from_str(line)
            .map_err(|e| AugmentError::Corpus(format!("line {}: {e}", i + 1)))?;
        review.validate().map_err(|e| AugmentError::Corpus(format!("line {}: {e}", i + 1)))?;
        if !seen.insert(review.id.clone()) {
            return Err(AugmentError::Corpus(format!("line {}: duplicate id `{}`", i + 1, review.id)));
        }
        out.push(review);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Review>, AugmentError> {
    let text = std::fs::read_to_string(path).map_err(|e| AugmentError::Corpus(format!("{}: {e}", path.display())))?;
    parse_corpus(&text)
}
