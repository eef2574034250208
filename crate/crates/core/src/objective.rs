//! Subset losses and their combination.
//!
//! Every per-sample loss has the form
//! `-sum_j w_j log p_j  -  s * p_k log p_k`
//! with weights `w` and an optional sharpening class `k` (`s` in {0, 1}) fixed
//! when the sample is evaluated:
//!
//! | subset | `w`                     | sharpening            |
//! |--------|-------------------------|-----------------------|
//! | EC     | one-hot oracle label    | none                  |
//! | HC     | one-hot assigned + phi  | none                  |
//! | TN     | aggregated oracle conf. | argmax of p when delta = 1 |
//!
//! Weights, phi, delta and the sharpening class carry no gradient. Log
//! arguments are floored at [`LOG_FLOOR`].

use serde::{Deserialize, Serialize};

use crate::error::{LaftError, Result};
use crate::oracle::ConfidenceVector;
use crate::separate::{adaptive_threshold, softmax, Subset, ThresholdSchedule};
use crate::trainer::featurize::SparseFeatures;
use crate::trainer::model::Classifier;

pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_h: f64,
    pub lambda_n: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_h: 1.0,
            lambda_n: 1.0,
            alpha: 1.5,
            beta: 0.9,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.lambda_h, self.lambda_n, self.alpha, self.beta]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !ok || self.alpha <= 1.0 {
            return Err(LaftError::Config(format!(
                "loss weights must be non-negative with alpha > 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Per-subset mean losses and their weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub easy: f64,
    pub hard: f64,
    pub noisy: f64,
    pub total: f64,
    pub n_easy: usize,
    pub n_hard: usize,
    pub n_noisy: usize,
}

fn ln_floor(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

fn nonempty(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        return Err(LaftError::InvalidArgument(format!("{what}: empty batch")));
    }
    Ok(())
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(LaftError::InvalidArgument(format!("batch length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Mean cross-entropy against the oracle labels.
pub fn loss_easy(classifier: &[ConfidenceVector], llm_labels: &[usize]) -> Result<f64> {
    nonempty(classifier.len(), "loss_easy")?;
    same_len(classifier.len(), llm_labels.len())?;
    let sum: f64 = classifier
        .iter()
        .zip(llm_labels)
        .map(|(p, &y)| -ln_floor(p.get(y)))
        .sum();
    Ok(sum / classifier.len() as f64)
}

/// `max(p_a + p - alpha * tau(t), 0)`.
pub fn phi(llm_j: f64, classifier_j: f64, epoch: u32, sched: &ThresholdSchedule, alpha: f64) -> f64 {
    (llm_j + classifier_j - alpha * adaptive_threshold(epoch, sched)).max(0.0)
}

/// Hard-clean cross-entropy weights `onehot(assigned) + phi`.
pub fn hard_weights(
    classifier: &[f64],
    assigned: usize,
    llm_agg: &ConfidenceVector,
    epoch: u32,
    sched: &ThresholdSchedule,
    alpha: f64,
) -> Vec<f64> {
    classifier
        .iter()
        .zip(llm_agg.values())
        .enumerate()
        .map(|(j, (&p, &q))| f64::from(u8::from(j == assigned)) + phi(q, p, epoch, sched, alpha))
        .collect()
}

pub fn loss_hard(
    classifier: &[ConfidenceVector],
    assigned: &[usize],
    llm_agg: &[ConfidenceVector],
    epoch: u32,
    sched: &ThresholdSchedule,
    alpha: f64,
) -> Result<f64> {
    nonempty(classifier.len(), "loss_hard")?;
    same_len(classifier.len(), assigned.len())?;
    same_len(classifier.len(), llm_agg.len())?;
    let mut sum = 0.0;
    for ((p, &y), q) in classifier.iter().zip(assigned).zip(llm_agg) {
        let w = hard_weights(p.values(), y, q, epoch, sched, alpha);
        sum += cross_entropy(p.values(), &w);
    }
    Ok(sum / classifier.len() as f64)
}

/// 1 when the classifier's top confidence is strictly above `beta * tau(t)`.
pub fn delta(classifier: &ConfidenceVector, epoch: u32, sched: &ThresholdSchedule, beta: f64) -> f64 {
    delta_of_max(classifier.max(), epoch, sched, beta)
}

fn delta_of_max(max: f64, epoch: u32, sched: &ThresholdSchedule, beta: f64) -> f64 {
    if max > beta * adaptive_threshold(epoch, sched) {
        1.0
    } else {
        0.0
    }
}

pub fn loss_noisy(
    classifier: &[ConfidenceVector],
    llm_agg: &[ConfidenceVector],
    epoch: u32,
    sched: &ThresholdSchedule,
    beta: f64,
) -> Result<f64> {
    nonempty(classifier.len(), "loss_noisy")?;
    same_len(classifier.len(), llm_agg.len())?;
    let n = classifier.len() as f64;
    let mut soft = 0.0;
    let mut sharpen = 0.0;
    for (p, q) in classifier.iter().zip(llm_agg) {
        soft += cross_entropy(p.values(), q.values());
        let top = p.max();
        sharpen += -delta(p, epoch, sched, beta) * top * ln_floor(top);
    }
    Ok(soft / n + sharpen / n)
}

/// Mean per-subset losses and their sizes; a subset with size 0 contributes nothing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SubsetLosses {
    pub easy: f64,
    pub hard: f64,
    pub noisy: f64,
    pub n_easy: usize,
    pub n_hard: usize,
    pub n_noisy: usize,
}

pub fn total_loss(parts: &SubsetLosses, weights: &LossWeights) -> LossBreakdown {
    let val = |v: f64, n: usize| if n == 0 { 0.0 } else { v };
    let easy = val(parts.easy, parts.n_easy);
    let hard = val(parts.hard, parts.n_hard);
    let noisy = val(parts.noisy, parts.n_noisy);
    LossBreakdown {
        easy,
        hard,
        noisy,
        total: easy + weights.lambda_h * hard + weights.lambda_n * noisy,
        n_easy: parts.n_easy,
        n_hard: parts.n_hard,
        n_noisy: parts.n_noisy,
    }
}

fn cross_entropy(p: &[f64], w: &[f64]) -> f64 {
    -p.iter().zip(w).map(|(&pj, &wj)| if wj == 0.0 { 0.0 } else { wj * ln_floor(pj) }).sum::<f64>()
}

/// Frozen per-sample loss terms.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTarget {
    pub subset: Subset,
    pub weights: Vec<f64>,
    pub sharpen: Option<usize>,
}

impl SampleTarget {
    pub fn loss(&self, p: &[f64]) -> f64 {
        let mut l = cross_entropy(p, &self.weights);
        if let Some(k) = self.sharpen {
            l -= p[k] * ln_floor(p[k]);
        }
        l
    }

    /// Gradient of [`SampleTarget::loss`] with respect to the logits.
    pub fn grad_logits(&self, p: &[f64]) -> Vec<f64> {
        let n = p.len();
        let mut g = vec![0.0; n];
        // d(-log p_j)/dz = p - e_j, zero where the floor is active.
        let mut mass = 0.0;
        for (j, &w) in self.weights.iter().enumerate() {
            if w != 0.0 && p[j] >= LOG_FLOOR {
                mass += w;
                g[j] -= w;
            }
        }
        for (gi, &pi) in g.iter_mut().zip(p) {
            *gi += mass * pi;
        }
        if let Some(k) = self.sharpen {
            // d(-p_k log p_k)/dz_i = -(log p_k + 1) p_k (e_k - p_i), log floored.
            let c = if p[k] >= LOG_FLOOR {
                -(p[k].ln() + 1.0) * p[k]
            } else {
                -LOG_FLOOR.ln() * p[k]
            };
            for (i, gi) in g.iter_mut().enumerate() {
                *gi += c * (f64::from(u8::from(i == k)) - p[i]);
            }
        }
        g
    }
}

/// How TN samples are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoisyRule {
    /// Soft oracle targets plus thresholded sharpening.
    OracleSoft,
    /// Cross-entropy against the classifier's own argmax.
    PseudoLabel,
}

/// What the objective needs to know about one training sample.
#[derive(Debug, Clone)]
pub struct ObjectiveSample<'a> {
    pub features: &'a SparseFeatures,
    pub subset: Subset,
    /// Label trained on for EC samples.
    pub easy_label: usize,
    pub assigned: usize,
    pub llm_agg: &'a ConfidenceVector,
}

#[derive(Debug, Clone, Copy)]
pub struct ObjectiveContext {
    pub epoch: u32,
    pub schedule: ThresholdSchedule,
    pub weights: LossWeights,
    pub noisy_rule: NoisyRule,
}

/// Fix weights, phi, delta and the sharpening class from the current confidences `p`.
pub fn freeze_target(s: &ObjectiveSample<'_>, p: &[f64], ctx: &ObjectiveContext) -> SampleTarget {
    let n = p.len();
    let one_hot = |c: usize| {
        let mut v = vec![0.0; n];
        v[c] = 1.0;
        v
    };
    let (weights, sharpen) = match s.subset {
        Subset::EasyClean => (one_hot(s.easy_label), None),
        Subset::HardClean => (
            hard_weights(p, s.assigned, s.llm_agg, ctx.epoch, &ctx.schedule, ctx.weights.alpha),
            None,
        ),
        Subset::TrueNoisy => {
            let k = crate::oracle::confidence::argmax(p);
            match ctx.noisy_rule {
                NoisyRule::OracleSoft => {
                    let d = delta_of_max(p[k], ctx.epoch, &ctx.schedule, ctx.weights.beta);
                    (s.llm_agg.values().to_vec(), (d > 0.0).then_some(k))
                }
                NoisyRule::PseudoLabel => (one_hot(k), None),
            }
        }
    };
    SampleTarget {
        subset: s.subset,
        weights,
        sharpen,
    }
}

pub fn freeze_targets<C: Classifier + ?Sized>(
    model: &C,
    batch: &[ObjectiveSample<'_>],
    ctx: &ObjectiveContext,
) -> Vec<SampleTarget> {
    batch
        .iter()
        .map(|s| freeze_target(s, &softmax(&model.logits(s.features)), ctx))
        .collect()
}

fn subset_scale(subset: Subset, counts: (usize, usize, usize), w: &LossWeights) -> f64 {
    let (n, lambda) = match subset {
        Subset::EasyClean => (counts.0, 1.0),
        Subset::HardClean => (counts.1, w.lambda_h),
        Subset::TrueNoisy => (counts.2, w.lambda_n),
    };
    if n == 0 {
        0.0
    } else {
        lambda / n as f64
    }
}

/// Combined loss and its parameter gradient for a minibatch with frozen targets.
pub fn objective_with_targets<C: Classifier + ?Sized>(
    model: &C,
    batch: &[ObjectiveSample<'_>],
    targets: &[SampleTarget],
    weights: &LossWeights,
) -> Result<(LossBreakdown, Vec<f64>)> {
    same_len(batch.len(), targets.len())?;
    let mut counts = (0, 0, 0);
    for t in targets {
        match t.subset {
            Subset::EasyClean => counts.0 += 1,
            Subset::HardClean => counts.1 += 1,
            Subset::TrueNoisy => counts.2 += 1,
        }
    }
    let mut sums = [0.0; 3];
    let mut grads = [
        vec![0.0; model.num_params()],
        vec![0.0; model.num_params()],
        vec![0.0; model.num_params()],
    ];
    for (s, t) in batch.iter().zip(targets) {
        let p = softmax(&model.logits(s.features));
        let slot = t.subset as usize;
        sums[slot] += t.loss(&p);
        let scale = subset_scale(t.subset, counts, weights);
        if scale != 0.0 {
            model.accumulate_grad(s.features, &t.grad_logits(&p), scale, &mut grads[slot]);
        }
    }
    let mean = |slot: usize, n: usize| if n == 0 { 0.0 } else { sums[slot] / n as f64 };
    let parts = SubsetLosses {
        easy: mean(0, counts.0),
        hard: mean(1, counts.1),
        noisy: mean(2, counts.2),
        n_easy: counts.0,
        n_hard: counts.1,
        n_noisy: counts.2,
    };
    let breakdown = total_loss(&parts, weights);
    for (subset, g) in Subset::ALL.iter().zip(&grads) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(LaftError::NonFinite(format!("gradient of the {subset} loss")));
        }
    }
    if !breakdown.total.is_finite() {
        return Err(LaftError::NonFinite("total loss".into()));
    }
    let [mut grad, g_hard, g_noisy] = grads;
    for ((g, h), n) in grad.iter_mut().zip(&g_hard).zip(&g_noisy) {
        *g += h + n;
    }
    Ok((breakdown, grad))
}

/// Combined loss of a minibatch and its gradient with respect to all model
/// parameters, with targets frozen at the current parameters.
pub fn loss_gradient<C: Classifier + ?Sized>(
    model: &C,
    batch: &[ObjectiveSample<'_>],
    ctx: &ObjectiveContext,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let targets = freeze_targets(model, batch, ctx);
    objective_with_targets(model, batch, &targets, &ctx.weights)
}
