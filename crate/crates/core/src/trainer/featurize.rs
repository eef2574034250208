use serde::{Deserialize, Serialize};

use crate::rng;

pub const DEFAULT_BUCKETS: usize = 1 << 15;
pub const DEFAULT_MAX_TOKENS: usize = 256;

/// Sparse feature vector: `(bucket, value)` pairs sorted by bucket, no repeats.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseFeatures(pub Vec<(u32, f64)>);

impl SparseFeatures {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.0.iter().map(|&(b, v)| (b as usize, v))
    }

    pub fn nnz(&self) -> usize {
        self.0.len()
    }
}

/// Lowercased whitespace tokens with surrounding punctuation stripped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Hashed bag-of-tokens. Texts are truncated to `max_tokens` tokens here, not at
/// load time. Counts are L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedFeaturizer {
    pub buckets: usize,
    pub max_tokens: usize,
}

impl Default for HashedFeaturizer {
    fn default() -> Self {
        HashedFeaturizer {
            buckets: DEFAULT_BUCKETS,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl HashedFeaturizer {
    pub fn new(buckets: usize, max_tokens: usize) -> Self {
        assert!(buckets > 0 && buckets <= u32::MAX as usize, "bucket count out of range");
        HashedFeaturizer {
            buckets,
            max_tokens,
        }
    }

    pub fn dim(&self) -> usize {
        self.buckets
    }

    pub fn features(&self, text: &str) -> SparseFeatures {
        let mut idx: Vec<u32> = tokenize(text)
            .iter()
            .take(self.max_tokens)
            .map(|t| (rng::hash_str(t) % self.buckets as u64) as u32)
            .collect();
        idx.sort_unstable();
        let mut out: Vec<(u32, f64)> = Vec::with_capacity(idx.len());
        for b in idx {
            match out.last_mut() {
                Some((last, v)) if *last == b => *v += 1.0,
                _ => out.push((b, 1.0)),
            }
        }
        let norm = out.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut out {
                *v /= norm;
            }
        }
        SparseFeatures(out)
    }
}
