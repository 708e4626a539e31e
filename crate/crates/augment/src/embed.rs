//! Text embeddings and cosine similarity.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::AugmentError;

/// Dimension of the built-in hashed term-frequency embedding.
pub const FALLBACK_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector { values }
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector { values: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// dot(a,b) / (|a||b|); zero when either operand is the zero vector.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, AugmentError> {
    if a.dim() != b.dim() {
        return Err(AugmentError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, AugmentError>;
}

/// Deterministic offline embedding: lower-cased alphanumeric tokens hashed
/// (FNV-1a) into 512 buckets, term counts L2-normalised.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashedTfEmbedder;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

impl EmbeddingProvider for HashedTfEmbedder {
    fn dim(&self) -> usize {
        FALLBACK_DIM
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, AugmentError> {
        let mut values = vec![0.0; FALLBACK_DIM];
        for token in tokenize(text) {
            values[(fnv1a(token.as_bytes()) % FALLBACK_DIM as u64) as usize] += 1.0;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(EmbeddingVector::new(values))
    }
}

/// Remote embedding service: POST `{"model", "input"}`, reads
/// `data[0].embedding` or a top-level `embedding` array.
pub struct HttpEmbedder {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    dim: usize,
    retries: u32,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, dim: usize, retries: u32) -> Self {
        HttpEmbedder {
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(30)).build(),
            endpoint: endpoint.into(),
            model: model.into(),
            dim,
            retries,
        }
    }

    fn attempt(&self, text: &str) -> Result<Vec<f64>, String> {
        let resp = self
            .agent
            .post(&self.endpoint)
            .send_json(json!({"model": self.model, "input": text}))
            .map_err(|e| e.to_string())?;
        let v: Value = resp.into_json().map_err(|e| e.to_string())?;
        let arr = v
            .pointer("/data/0/embedding")
            .or_else(|| v.get("embedding"))
            .and_then(Value::as_array)
            .ok_or_else(|| "response carries no embedding".to_string())?;
        arr.iter().map(|x| x.as_f64().ok_or_else(|| "non-numeric embedding value".to_string())).collect()
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, AugmentError> {
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(250 * u64::from(attempt)));
            }
            match self.attempt(text) {
                Ok(values) if values.len() == self.dim => return Ok(EmbeddingVector::new(values)),
                Ok(values) => {
                    return Err(AugmentError::DimensionMismatch { left: self.dim, right: values.len() })
                }
                Err(e) => last = e,
            }
        }
        Err(AugmentError::ProviderUnavailable(last))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_basics() {
        let v = |x: &[f64]| EmbeddingVector::new(x.to_vec());
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((cosine_similarity(&v(&[3.0, -2.0]), &v(&[3.0, -2.0])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 2.0])).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(AugmentError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn fallback_is_deterministic() {
        let e = HashedTfEmbedder;
        let a = e.embed("Scrolling lags when the note list is long").unwrap();
        let b = e.embed("Scrolling lags when the note list is long").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 512);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let v = HashedTfEmbedder.embed("").unwrap();
        assert_eq!(v.dim(), 512);
        assert!(v.is_zero());
    }

    #[test]
    fn unrelated_texts_are_dissimilar() {
        let e = HashedTfEmbedder;
        let a = e.embed("The editor freezes whenever I open a large markdown file").unwrap();
        let b = e.embed("Great podcast catalogue and friendly support team").unwrap();
        let sim = cosine_similarity(&a, &b).unwrap();
        // regression constant for this pair: no shared tokens, no bucket collisions
        assert_eq!(sim, 0.0);
        assert!(sim < 0.5);
    }

    fn arb_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 1..32)
    }

    proptest! {
        #[test]
        fn self_similarity_and_symmetry(a in arb_vec(), b in arb_vec()) {
            let va = EmbeddingVector::new(a.clone());
            prop_assume!(!va.is_zero());
            prop_assert!((cosine_similarity(&va, &va).unwrap() - 1.0).abs() < 1e-9);
            if a.len() == b.len() {
                let vb = EmbeddingVector::new(b);
                prop_assert_eq!(cosine_similarity(&va, &vb).unwrap(), cosine_similarity(&vb, &va).unwrap());
            }
        }
    }
}
