use serde::{Deserialize, Serialize};

use crate::error::{LaftError, Result};

pub const SUM_TOLERANCE: f64 = 1e-9;

/// Probability distribution over the classes of a [`ClassSet`](crate::corpus::ClassSet).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ConfidenceVector(Vec<f64>);

impl ConfidenceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(LaftError::InvalidArgument("empty confidence vector".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(LaftError::InvalidArgument(format!(
                "confidences must be finite and non-negative: {values:?}"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(LaftError::InvalidArgument(format!(
                "confidences sum to {sum}, expected 1"
            )));
        }
        Ok(ConfidenceVector(values))
    }

    /// Scale non-negative weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(LaftError::InvalidArgument(format!(
                "cannot normalize weights {weights:?}"
            )));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n: usize) -> Self {
        ConfidenceVector(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, class: usize) -> Self {
        let mut v = vec![0.0; n];
        v[class] = 1.0;
        ConfidenceVector(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    /// Index of the largest value, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl TryFrom<Vec<f64>> for ConfidenceVector {
    type Error = LaftError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ConfidenceVector::new(v)
    }
}

impl From<ConfidenceVector> for Vec<f64> {
    fn from(c: ConfidenceVector) -> Self {
        c.0
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Elementwise mean over augmented views.
pub fn aggregate_confidences(vectors: &[ConfidenceVector]) -> Result<ConfidenceVector> {
    let first = vectors
        .first()
        .ok_or_else(|| LaftError::InvalidArgument("no confidence vectors to aggregate".into()))?;
    let n = first.len();
    if vectors.iter().any(|v| v.len() != n) {
        return Err(LaftError::InvalidArgument(
            "confidence vectors differ in length".into(),
        ));
    }
    let m = vectors.len() as f64;
    let mean: Vec<f64> = (0..n)
        .map(|j| vectors.iter().map(|v| v.0[j]).sum::<f64>() / m)
        .collect();
    ConfidenceVector::new(mean)
}

/// Class predicted by the oracle.
pub fn llm_label(confidences: &ConfidenceVector) -> usize {
    confidences.argmax()
}
