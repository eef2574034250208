use rand::Rng;

use super::confidence::{argmax, ConfidenceVector};
use super::prompt::render_response;
use super::{OracleClient, OracleRequest};
use crate::corpus::{ClassSet, Sample};
use crate::error::{LaftError, Result};
use crate::rng;

pub const DEFAULT_SHARPNESS: f64 = 2.0;

/// Stand-in oracle with a controlled accuracy.
///
/// The predicted class depends only on `(seed, sample id, true label)`: it is
/// the true label with probability `accuracy`, otherwise a uniformly chosen
/// other class. The assigned label is never read. Each view draws its own
/// confidence shape, `softmax(sharpness * g)` with `g` standard normal, with
/// the largest entry moved onto the predicted class.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    accuracy: f64,
    sharpness: f64,
    seed: u64,
    model_id: String,
}

impl SimulatedOracle {
    pub fn new(accuracy: f64, sharpness: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(LaftError::InvalidArgument(format!(
                "oracle accuracy must lie in [0, 1], got {accuracy}"
            )));
        }
        if !(sharpness.is_finite() && sharpness >= 0.0) {
            return Err(LaftError::InvalidArgument(format!("invalid sharpness {sharpness}")));
        }
        Ok(SimulatedOracle {
            accuracy,
            sharpness,
            seed,
            model_id: format!("simulated:acc={accuracy}:sharpness={sharpness}:seed={seed}"),
        })
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    pub fn predicted_class(&self, sample: &Sample, n_classes: usize) -> Result<usize> {
        let truth = sample.true_label.ok_or_else(|| LaftError::Missing {
            what: "true label",
            id: sample.id.clone(),
        })?;
        if self.accuracy < 1.0 / n_classes as f64 - 1e-12 {
            return Err(LaftError::InvalidArgument(format!(
                "oracle accuracy {} is below chance 1/{n_classes}",
                self.accuracy
            )));
        }
        let mut rng = rng::stream(self.seed, &[0x0c1, rng::hash_str(&sample.id)]);
        let u: f64 = rng.random();
        if u < self.accuracy {
            return Ok(truth);
        }
        let r = rng.random_range(0..n_classes - 1);
        Ok(if r >= truth { r + 1 } else { r })
    }

    pub fn confidences(&self, sample: &Sample, n_classes: usize, view: usize) -> Result<ConfidenceVector> {
        let class = self.predicted_class(sample, n_classes)?;
        let mut rng = rng::stream(self.seed, &[0x0c2, rng::hash_str(&sample.id), view as u64]);
        let logits: Vec<f64> = (0..n_classes)
            .map(|_| self.sharpness * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
        let peak = argmax(&p);
        p.swap(peak, class);
        ConfidenceVector::normalized(p)
    }
}

impl OracleClient for SimulatedOracle {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, req: &OracleRequest<'_>) -> Result<String> {
        let v = self.confidences(req.sample, req.classes.len(), req.view_index)?;
        Ok(render_response(&v, req.classes))
    }
}

/// Single-query simulated confidences for `sample`.
pub fn simulated_oracle(
    sample: &Sample,
    classes: &ClassSet,
    target_accuracy: f64,
    sharpness: f64,
    seed: u64,
) -> Result<ConfidenceVector> {
    SimulatedOracle::new(target_accuracy, sharpness, seed)?.confidences(sample, classes.len(), 0)
}
