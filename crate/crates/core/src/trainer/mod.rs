//! Classifier training with per-epoch subset separation and early stopping.

pub mod featurize;
pub mod model;
pub mod optim;

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Sample};
use crate::error::{LaftError, Result};
use crate::objective::{
    loss_gradient, LossBreakdown, LossWeights, NoisyRule, ObjectiveContext, ObjectiveSample,
};
use crate::oracle::{ConfidenceVector, OracleOutputs};
use crate::rng;
use crate::separate::{coarse_separate, fine_separate, IdSet, Subset, SubsetAssignment, ThresholdSchedule};

pub use featurize::{tokenize, HashedFeaturizer, SparseFeatures};
pub use model::{Classifier, LinearClassifier};
pub use optim::Adam;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoCoarse,
    NoFine,
    NoNoisyLoss,
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::NoCoarse => "no_coarse",
            Ablation::NoFine => "no_fine",
            Ablation::NoNoisyLoss => "no_noisy_loss",
        })
    }
}

impl FromStr for Ablation {
    type Err = LaftError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_coarse" => Ok(Ablation::NoCoarse),
            "no_fine" => Ok(Ablation::NoFine),
            "no_noisy_loss" => Ok(Ablation::NoNoisyLoss),
            other => Err(LaftError::Config(format!("unknown ablation '{other}'"))),
        }
    }
}

/// `Base` trains with plain cross-entropy on the assigned labels and ignores the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Laft,
    Base,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Laft => "laft",
            Method::Base => "base",
        })
    }
}

impl FromStr for Method {
    type Err = LaftError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laft" => Ok(Method::Laft),
            "base" => Ok(Method::Base),
            other => Err(LaftError::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: u32,
    pub early_stop_patience: u32,
    pub seed: u64,
    pub max_tokens: usize,
    pub buckets: usize,
    pub schedule: ThresholdSchedule,
    pub weights: LossWeights,
    pub ablation: Ablation,
    pub method: Method,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 100,
            early_stop_patience: 10,
            seed: 0,
            max_tokens: 256,
            buckets: 1 << 15,
            schedule: ThresholdSchedule::default(),
            weights: LossWeights::default(),
            ablation: Ablation::Full,
            method: Method::Laft,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LaftError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.max_tokens == 0 || self.early_stop_patience == 0 {
            return Err(LaftError::Config(
                "batch_size, max_tokens and early_stop_patience must be positive".into(),
            ));
        }
        if self.buckets == 0 || self.buckets > u32::MAX as usize {
            return Err(LaftError::Config(format!("buckets out of range: {}", self.buckets)));
        }
        self.schedule.validate()?;
        self.weights.validate()
    }

    pub fn featurizer(&self) -> HashedFeaturizer {
        HashedFeaturizer::new(self.buckets, self.max_tokens)
    }
}

/// Featurizer plus linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct TextClassifier {
    pub featurizer: HashedFeaturizer,
    pub linear: LinearClassifier,
}

impl TextClassifier {
    pub fn new(featurizer: HashedFeaturizer, num_classes: usize) -> Self {
        let linear = LinearClassifier::zeros(num_classes, featurizer.dim());
        TextClassifier { featurizer, linear }
    }

    pub fn num_classes(&self) -> usize {
        self.linear.num_classes()
    }

    pub fn confidence(&self, text: &str) -> ConfidenceVector {
        self.linear
            .confidence(&self.featurizer.features(text))
            .expect("finite parameters give finite confidences")
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        self.linear.write_to(&self.featurizer, w)
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let (linear, featurizer) = LinearClassifier::read_from(r)?;
        Ok(TextClassifier { featurizer, linear })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub confidence: ConfidenceVector,
    pub label: usize,
}

/// Confidences and argmax labels (lowest index on ties).
pub fn predict(model: &TextClassifier, samples: &[Sample]) -> Vec<Prediction> {
    samples
        .par_iter()
        .map(|s| {
            let confidence = model.confidence(&s.text);
            Prediction {
                label: confidence.argmax(),
                confidence,
            }
        })
        .collect()
}

/// Fraction of argmax predictions equal to the assigned labels of `test`.
pub fn evaluate_accuracy(model: &TextClassifier, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(LaftError::Dataset("cannot evaluate on an empty dataset".into()));
    }
    let preds = predict(model, test.samples());
    let hits = preds
        .iter()
        .zip(test.samples())
        .filter(|(p, s)| p.label == s.assigned_label)
        .count();
    Ok(hits as f64 / test.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    /// Means over the epoch's minibatches.
    pub loss: LossBreakdown,
    pub val_accuracy: f64,
    pub n_easy: usize,
    pub n_hard: usize,
    pub n_noisy: usize,
    /// Mean snapshot confidence in the assigned label over clean samples.
    pub conf_clean: Option<f64>,
    /// Same over flipped samples.
    pub conf_flipped: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<u32>,
    pub best_val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Subset assignment used at each epoch (LAFT only).
    pub assignments: Vec<SubsetAssignment>,
}

pub const METRICS_HEADER: [&str; 13] = [
    "epoch",
    "loss_easy",
    "loss_hard",
    "loss_noisy",
    "loss_total",
    "val_accuracy",
    "n_easy",
    "n_hard",
    "n_noisy",
    "conf_clean",
    "conf_flipped",
    "is_best",
    "num_params",
];

impl RunRecord {
    pub fn final_assignment(&self) -> Option<&SubsetAssignment> {
        self.assignments.last()
    }

    pub fn write_metrics_csv<W: Write>(&self, num_params: usize, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(METRICS_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.loss.easy.to_string(),
                e.loss.hard.to_string(),
                e.loss.noisy.to_string(),
                e.loss.total.to_string(),
                e.val_accuracy.to_string(),
                e.n_easy.to_string(),
                e.n_hard.to_string(),
                e.n_noisy.to_string(),
                opt(e.conf_clean),
                opt(e.conf_flipped),
                u8::from(Some(e.epoch) == self.best_epoch).to_string(),
                num_params.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn snapshot(model: &LinearClassifier, feats: &[SparseFeatures]) -> Result<Vec<ConfidenceVector>> {
    feats.par_iter().map(|x| model.confidence(x)).collect()
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn assignment_for_epoch(
    train: &Dataset,
    oracle: &OracleOutputs,
    llm_agg: &HashMap<String, ConfidenceVector>,
    fixed_coarse: Option<&(IdSet, IdSet)>,
    snap: &[ConfidenceVector],
    cfg: &TrainConfig,
    epoch: u32,
) -> Result<SubsetAssignment> {
    let clf: HashMap<String, ConfidenceVector> = train
        .samples()
        .iter()
        .zip(snap)
        .map(|(s, p)| (s.id.clone(), p.clone()))
        .collect();
    let owned;
    let (easy, disagreed) = match (cfg.ablation, fixed_coarse) {
        (Ablation::NoCoarse, _) | (_, None) => {
            let labels: HashMap<String, usize> = if cfg.ablation == Ablation::NoCoarse {
                train.samples().iter().zip(snap).map(|(s, p)| (s.id.clone(), p.argmax())).collect()
            } else {
                oracle.llm_labels()
            };
            owned = coarse_separate(train, &labels)?;
            (&owned.0, &owned.1)
        }
        (_, Some(c)) => (&c.0, &c.1),
    };
    let agg = (cfg.ablation != Ablation::NoFine).then_some(llm_agg);
    let (hard, noisy) = fine_separate(disagreed, agg, &clf, &cfg.schedule, epoch)?;
    SubsetAssignment::new(train, epoch, easy, &hard, &noisy)
}

fn accumulate(acc: &mut [f64; 4], counts: &mut [usize; 3], b: &LossBreakdown) {
    acc[0] += b.easy;
    acc[1] += b.hard;
    acc[2] += b.noisy;
    acc[3] += b.total;
    counts[0] += b.n_easy;
    counts[1] += b.n_hard;
    counts[2] += b.n_noisy;
}

/// Trains a classifier. `oracle` must cover every training sample for
/// [`Method::Laft`] and is ignored for [`Method::Base`].
pub fn fit(
    train: &Dataset,
    val: &Dataset,
    oracle: Option<&OracleOutputs>,
    cfg: &TrainConfig,
) -> Result<(TextClassifier, RunRecord)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(LaftError::Dataset("training set is empty".into()));
    }
    let n_classes = train.num_classes();
    if val.num_classes() != n_classes {
        return Err(LaftError::Dataset("train and validation class sets differ".into()));
    }
    let featurizer = cfg.featurizer();
    let mut model = TextClassifier::new(featurizer.clone(), n_classes);
    let mut record = RunRecord::default();
    if cfg.max_epochs == 0 {
        return Ok((model, record));
    }

    let laft = cfg.method == Method::Laft;
    let empty = OracleOutputs::default();
    let oracle: &OracleOutputs = match (laft, oracle) {
        (true, Some(o)) => {
            for s in train.samples() {
                let out = o.require(&s.id)?;
                if out.aggregated.len() != n_classes {
                    return Err(LaftError::Dataset(format!("oracle output for '{}' has the wrong width", s.id)));
                }
            }
            o
        }
        (true, None) => {
            return Err(LaftError::Missing {
                what: "oracle outputs",
                id: String::new(),
            })
        }
        (false, _) => &empty,
    };
    let llm_agg = oracle.aggregated();
    let placeholder = ConfidenceVector::uniform(n_classes);

    let feats: Vec<SparseFeatures> = train.samples().par_iter().map(|s| featurizer.features(&s.text)).collect();
    let flipped: Vec<Option<bool>> = train.samples().iter().map(Sample::is_flipped).collect();
    let coarse = if laft && cfg.ablation != Ablation::NoCoarse {
        Some(coarse_separate(train, &oracle.llm_labels())?)
    } else {
        None
    };
    let ctx_base = ObjectiveContext {
        epoch: 0,
        schedule: cfg.schedule,
        weights: cfg.weights,
        noisy_rule: if cfg.ablation == Ablation::NoNoisyLoss {
            NoisyRule::PseudoLabel
        } else {
            NoisyRule::OracleSoft
        },
    };

    let mut adam = Adam::new(cfg.learning_rate, model.linear.num_params());
    let mut best = (f64::NEG_INFINITY, model.linear.clone());
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.max_epochs {
        let snap = snapshot(&model.linear, &feats)?;
        let conf_of = |want: bool| {
            mean_of(
                train
                    .samples()
                    .iter()
                    .zip(&snap)
                    .zip(&flipped)
                    .filter(|(_, f)| **f == Some(want))
                    .map(|((s, p), _)| p.get(s.assigned_label)),
            )
        };
        let (conf_clean, conf_flipped) = (conf_of(false), conf_of(true));

        let subsets: Vec<Subset> = if laft {
            let a = assignment_for_epoch(train, oracle, &llm_agg, coarse.as_ref(), &snap, cfg, epoch)?;
            let subs = a.iter().map(|(_, s)| s).collect();
            record.assignments.push(a);
            subs
        } else {
            vec![Subset::EasyClean; train.len()]
        };
        let counts = subsets.iter().fold([0usize; 3], |mut c, s| {
            c[*s as usize] += 1;
            c
        });

        let ctx = ObjectiveContext { epoch, ..ctx_base };
        order.shuffle(&mut rng::stream(cfg.seed, &[0x7a11, u64::from(epoch)]));
        let mut acc = [0.0; 4];
        let mut acc_n = [0usize; 3];
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<ObjectiveSample<'_>> = chunk
                .iter()
                .map(|&i| {
                    let s = &train.samples()[i];
                    let out = oracle.get(&s.id);
                    let easy_label = match (laft, cfg.ablation, out) {
                        (true, Ablation::Full | Ablation::NoFine | Ablation::NoNoisyLoss, Some(o)) => o.llm_label,
                        _ => s.assigned_label,
                    };
                    ObjectiveSample {
                        features: &feats[i],
                        subset: subsets[i],
                        easy_label,
                        assigned: s.assigned_label,
                        llm_agg: llm_agg.get(&s.id).unwrap_or(&placeholder),
                    }
                })
                .collect();
            let (b, grad) = loss_gradient(&model.linear, &batch, &ctx)
                .map_err(|e| e.in_stage("train"))?;
            adam.step(model.linear.params_mut(), &grad);
            accumulate(&mut acc, &mut acc_n, &b);
            steps += 1;
        }
        let denom = steps.max(1) as f64;
        let loss = LossBreakdown {
            easy: acc[0] / denom,
            hard: acc[1] / denom,
            noisy: acc[2] / denom,
            total: acc[3] / denom,
            n_easy: acc_n[0],
            n_hard: acc_n[1],
            n_noisy: acc_n[2],
        };

        let val_accuracy = evaluate_accuracy(&model, val)?;
        record.epochs.push(EpochRecord {
            epoch,
            loss,
            val_accuracy,
            n_easy: counts[0],
            n_hard: counts[1],
            n_noisy: counts[2],
            conf_clean,
            conf_flipped,
        });
        if val_accuracy > best.0 {
            best = (val_accuracy, model.linear.clone());
            record.best_epoch = Some(epoch);
            record.best_val_accuracy = Some(val_accuracy);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    model.linear = best.1;
    Ok((model, record))
}
