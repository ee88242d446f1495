//! Text embedding behind a pluggable similarity interface.
//!
//! The offline default embeds text as sparse token-count vectors and
//! compares them by cosine. Tokens are lowercased alphanumeric runs with a
//! small suffix stemmer so that surface variants of the same word (merge /
//! merging / merged, acceleration / accelerative) count together. A
//! production embedder can be swapped in over HTTP.

use std::time::Duration;

use serde_json::json;

use super::SynthError;

/// Similarity oracle over raw text. Implementations must be deterministic
/// for a given input pair.
pub trait TextEmbedder {
    /// Cosine-style similarity; 0 when either side embeds to a zero vector.
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Strip one common suffix and a trailing `e`, deduplicating a doubled
/// consonant. Only words of length >= 5 are touched.
fn stem(word: &str) -> String {
    let mut w = word.to_string();
    if w.len() >= 5 {
        for suffix in ["ing", "ion", "ive", "es", "ed", "ly", "s"] {
            if let Some(prefix) = w.strip_suffix(suffix) {
                if prefix.len() >= 3 {
                    w = prefix.to_string();
                    break;
                }
            }
        }
        if w.len() >= 4 && w.ends_with('e') {
            w.pop();
        }
        let bytes = w.as_bytes();
        if bytes.len() >= 2
            && bytes[bytes.len() - 1] == bytes[bytes.len() - 2]
            && matches!(bytes[bytes.len() - 1], b'b' | b'd' | b'g' | b'm' | b'n' | b'p' | b'r' | b't')
        {
            w.pop();
        }
    }
    w
}

/// Lowercased, stemmed alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(stem)
        .collect()
}

fn token_counts(text: &str) -> std::collections::BTreeMap<String, f64> {
    let mut counts = std::collections::BTreeMap::new();
    for tok in tokenize(text) {
        *counts.entry(tok).or_insert(0.0) += 1.0;
    }
    counts
}

/// Offline deterministic embedder: cosine over token-count vectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenCountEmbedder;

impl TextEmbedder for TokenCountEmbedder {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        let ca = token_counts(a);
        let cb = token_counts(b);
        let dot: f64 = ca
            .iter()
            .filter_map(|(t, x)| cb.get(t).map(|y| x * y))
            .sum();
        let na: f64 = ca.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = cb.values().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

/// Remote embedder speaking the common embeddings wire shape:
/// `POST endpoint {model, input: [a, b]}` returning
/// `{data: [{embedding: [...]}, ...]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl HttpEmbedder {
    fn embed_pair(&self, a: &str, b: &str) -> Result<(Vec<f64>, Vec<f64>), SynthError> {
        let mut req = ureq::post(&self.endpoint)
            .timeout(Duration::from_secs(self.timeout_secs.max(1)));
        if let Ok(key) = std::env::var(&self.api_key_env) {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = req
            .send_json(json!({ "model": self.model, "input": [a, b] }))
            .map_err(|e| SynthError::Backend(format!("embedding request failed: {e}")))?;
        let body: serde_json::Value = resp
            .into_json()
            .map_err(|e| SynthError::Backend(format!("embedding response unreadable: {e}")))?;
        let vec_at = |i: usize| -> Result<Vec<f64>, SynthError> {
            body["data"][i]["embedding"]
                .as_array()
                .map(|xs| xs.iter().filter_map(|x| x.as_f64()).collect())
                .ok_or_else(|| SynthError::Backend("embedding response missing data".into()))
        };
        Ok((vec_at(0)?, vec_at(1)?))
    }
}

impl TextEmbedder for HttpEmbedder {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        match self.embed_pair(a, b) {
            Ok((va, vb)) => dense_cosine(&va, &vb),
            Err(_) => 0.0,
        }
    }
}

pub fn dense_cosine(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stemming_collapses_word_families() {
        for (a, b) in [
            ("merge", "merging"),
            ("merged", "merges"),
            ("acceleration", "accelerative"),
            ("accelerate", "accelerating"),
            ("stop", "stopped"),
            ("crawl", "crawling"),
            ("follow", "following"),
            ("cross", "crossing"),
            ("speed", "speeds"),
        ] {
            assert_eq!(stem(a), stem(b), "{a} vs {b}");
        }
        assert_ne!(stem("merge"), stem("speed"));
    }

    #[test]
    fn identical_text_has_similarity_one() {
        let e = TokenCountEmbedder;
        let s = e.similarity("late merging at ramp end", "late merging at ramp end");
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_token_sets_have_similarity_zero() {
        let e = TokenCountEmbedder;
        assert_eq!(e.similarity("alpha beta", "gamma delta"), 0.0);
        assert_eq!(e.similarity("", "anything"), 0.0);
    }

    #[test]
    fn cosine_matches_hand_computation() {
        // a = "ramp ramp merge", b = "ramp merge merge merge"
        // counts: a = {ramp:2, merge:1}, b = {ramp:1, merge:3}
        // dot = 2*1 + 1*3 = 5; |a| = sqrt(5); |b| = sqrt(10)
        let e = TokenCountEmbedder;
        let got = e.similarity("ramp ramp merge", "ramp merge merge merge");
        let expected = 5.0 / (5.0f64.sqrt() * 10.0f64.sqrt());
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn similarity_is_symmetric_and_deterministic() {
        let e = TokenCountEmbedder;
        let a = "hold the on-ramp until close to the end";
        let b = "in_state(close_to_end_of_acceleration_area)";
        assert_eq!(e.similarity(a, b), e.similarity(b, a));
        assert_eq!(e.similarity(a, b), e.similarity(a, b));
        assert!(e.similarity(a, b) > 0.0);
    }

    #[test]
    fn dense_cosine_bounds() {
        assert_eq!(dense_cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((dense_cosine(&[1.0, 2.0], &[2.0, 4.0]) - 1.0).abs() < 1e-12);
        assert_eq!(dense_cosine(&[1.0], &[1.0, 2.0]), 0.0);
    }
}
