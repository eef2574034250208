use std::io::{Read, Write};

use super::featurize::{HashedFeaturizer, SparseFeatures};
use crate::error::{LaftError, Result};
use crate::oracle::ConfidenceVector;
use crate::separate::classifier_confidence;

/// Differentiable classifier over sparse features.
pub trait Classifier {
    fn num_classes(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn logits(&self, x: &SparseFeatures) -> Vec<f64>;
    /// `grad += scale * (d logits / d params)^T dlogits`.
    fn accumulate_grad(&self, x: &SparseFeatures, dlogits: &[f64], scale: f64, grad: &mut [f64]);

    fn num_params(&self) -> usize {
        self.params().len()
    }

    fn confidence(&self, x: &SparseFeatures) -> Result<ConfidenceVector> {
        classifier_confidence(&self.logits(x))
    }
}

/// Single linear layer `z = W x + b`. Parameters are `W` row-major (one row of
/// `dim` weights per class) followed by the `n_classes` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    n_classes: usize,
    dim: usize,
    params: Vec<f64>,
}

const MAGIC: &[u8; 8] = b"LAFTLIN\0";
const FORMAT_VERSION: u32 = 1;

impl LinearClassifier {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        LinearClassifier {
            n_classes,
            dim,
            params: vec![0.0; n_classes * dim + n_classes],
        }
    }

    pub fn from_params(n_classes: usize, dim: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != n_classes * dim + n_classes {
            return Err(LaftError::InvalidArgument(format!(
                "expected {} parameters, got {}",
                n_classes * dim + n_classes,
                params.len()
            )));
        }
        Ok(LinearClassifier {
            n_classes,
            dim,
            params,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Binary layout, little-endian:
    /// magic `LAFTLIN\0`, u32 version (1), u32 classes, u64 dim,
    /// u64 bucket count, u64 max tokens, then every parameter as f64.
    pub fn write_to<W: Write>(&self, featurizer: &HashedFeaturizer, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_classes as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(featurizer.buckets as u64).to_le_bytes())?;
        w.write_all(&(featurizer.max_tokens as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<(Self, HashedFeaturizer)> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(LaftError::Dataset("not a model file".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(LaftError::Dataset(format!("unsupported model version {version}")));
        }
        r.read_exact(&mut b4)?;
        let n_classes = u32::from_le_bytes(b4) as usize;
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let dim = read_u64(&mut r)? as usize;
        let buckets = read_u64(&mut r)? as usize;
        let max_tokens = read_u64(&mut r)? as usize;
        let mut params = Vec::with_capacity(n_classes * dim + n_classes);
        for _ in 0..n_classes * dim + n_classes {
            params.push(f64::from_le_bytes({
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                b
            }));
        }
        Ok((
            Self::from_params(n_classes, dim, params)?,
            HashedFeaturizer {
                buckets,
                max_tokens,
            },
        ))
    }
}

impl Classifier for LinearClassifier {
    fn num_classes(&self) -> usize {
        self.n_classes
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn logits(&self, x: &SparseFeatures) -> Vec<f64> {
        let bias = &self.params[self.n_classes * self.dim..];
        (0..self.n_classes)
            .map(|c| {
                let row = &self.params[c * self.dim..(c + 1) * self.dim];
                bias[c] + x.iter().map(|(b, v)| row[b] * v).sum::<f64>()
            })
            .collect()
    }

    fn accumulate_grad(&self, x: &SparseFeatures, dlogits: &[f64], scale: f64, grad: &mut [f64]) {
        let bias_at = self.n_classes * self.dim;
        for (c, &g) in dlogits.iter().enumerate() {
            let g = g * scale;
            if g == 0.0 {
                continue;
            }
            let row = &mut grad[c * self.dim..(c + 1) * self.dim];
            for (b, v) in x.iter() {
                row[b] += g * v;
            }
            grad[bias_at + c] += g;
        }
    }
}
