//! Top-k retrieval of similar reviews.

use std::cmp::Ordering;

use rayon::prelude::*;
use revperf_core::Review;

use crate::embed::{cosine_similarity, EmbeddingProvider, EmbeddingVector};
use crate::AugmentError;

/// A review with its similarity to the query.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredReview {
    pub review: Review,
    pub score: f64,
}

/// Precomputed embeddings of a review corpus. Read-only once built.
pub struct CorpusIndex {
    reviews: Vec<Review>,
    vectors: Vec<EmbeddingVector>,
}

impl CorpusIndex {
    pub fn build(reviews: Vec<Review>, provider: &dyn EmbeddingProvider) -> Result<Self, AugmentError> {
        let vectors = reviews
            .par_iter()
            .map(|r| provider.embed(&r.text))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(bad) = vectors.iter().find(|v| v.dim() != provider.dim()) {
            return Err(AugmentError::DimensionMismatch { left: provider.dim(), right: bad.dim() });
        }
        Ok(CorpusIndex { reviews, vectors })
    }

    pub fn reviews(&self) -> &[Review] {
        &self.reviews
    }

    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    pub fn find(&self, id: &str) -> Option<&Review> {
        self.reviews.iter().find(|r| r.id == id)
    }

    /// Ranks candidates for `target`: same version only when `version_filter`
    /// is on, the target itself excluded, descending similarity with ties
    /// broken by ascending id, at most `k` results.
    pub fn retrieve(
        &self,
        target: &Review,
        query: &EmbeddingVector,
        k: usize,
        version_filter: bool,
    ) -> Result<Vec<ScoredReview>, AugmentError> {
        let mut scored = self
            .reviews
            .par_iter()
            .zip(self.vectors.par_iter())
            .filter(|(r, _)| r.id != target.id && r.app_id == target.app_id)
            .filter(|(r, _)| !version_filter || r.app_version == target.app_version)
            .map(|(r, v)| Ok(ScoredReview { review: r.clone(), score: cosine_similarity(query, v)? }))
            .collect::<Result<Vec<_>, AugmentError>>()?;
        scored.sort_by(rank_order);
        scored.truncate(k);
        Ok(scored)
    }
}

/// Descending score, then ascending id.
pub fn rank_order(a: &ScoredReview, b: &ScoredReview) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.review.id.cmp(&b.review.id))
}

/// One-shot retrieval that embeds the corpus on the fly.
pub fn retrieve_similar(
    target: &Review,
    corpus: &[Review],
    k: usize,
    version_filter: bool,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Review>, AugmentError> {
    let index = CorpusIndex::build(corpus.to_vec(), provider)?;
    let query = provider.embed(&target.text)?;
    Ok(index.retrieve(target, &query, k, version_filter)?.into_iter().map(|s| s.review).collect())
}
