//! Two-stage partition of the training set into Easy-Clean (EC), Hard-Clean
//! (HC) and True-Noisy (TN) samples.
//!
//! Coarse separation puts samples whose oracle label equals their assigned
//! label into EC; the rest form the disagreed set D. Fine separation moves a
//! disagreed sample into HC when both the aggregated oracle confidence and the
//! classifier confidence are below their thresholds (strictly), and leaves it
//! in TN otherwise.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{LaftError, Result};
use crate::oracle::ConfidenceVector;

pub type IdSet = BTreeSet<String>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    /// Fixed threshold on aggregated oracle confidence.
    pub tau_hat: f64,
    /// Asymptote of the adaptive classifier threshold.
    pub tau_tilde: f64,
    /// Growth rate of the adaptive classifier threshold.
    pub lambda: f64,
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        ThresholdSchedule {
            tau_hat: 0.8,
            tau_tilde: 0.8,
            lambda: 0.7,
        }
    }
}

impl ThresholdSchedule {
    pub fn new(tau_hat: f64, tau_tilde: f64, lambda: f64) -> Result<Self> {
        let s = ThresholdSchedule {
            tau_hat,
            tau_tilde,
            lambda,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.tau_hat) || !unit(self.tau_tilde) || !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(LaftError::Config(format!("invalid threshold schedule {self:?}")));
        }
        Ok(())
    }

    pub fn classifier_threshold(&self, epoch: u32) -> f64 {
        adaptive_threshold(epoch, self)
    }
}

/// `tau_tilde - exp(-lambda * t)`. Negative for small `t` under the defaults,
/// which keeps HC empty at the first epoch.
pub fn adaptive_threshold(epoch: u32, sched: &ThresholdSchedule) -> f64 {
    sched.tau_tilde - (-sched.lambda * f64::from(epoch)).exp()
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn classifier_confidence(logits: &[f64]) -> Result<ConfidenceVector> {
    if logits.is_empty() || logits.iter().any(|z| !z.is_finite()) {
        return Err(LaftError::NonFinite(format!("logits {logits:?}")));
    }
    ConfidenceVector::new(softmax(logits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subset {
    #[serde(rename = "EC")]
    EasyClean,
    #[serde(rename = "HC")]
    HardClean,
    #[serde(rename = "TN")]
    TrueNoisy,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::EasyClean, Subset::HardClean, Subset::TrueNoisy];
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::EasyClean => "EC",
            Subset::HardClean => "HC",
            Subset::TrueNoisy => "TN",
        })
    }
}

impl FromStr for Subset {
    type Err = LaftError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "EC" => Ok(Subset::EasyClean),
            "HC" => Ok(Subset::HardClean),
            "TN" => Ok(Subset::TrueNoisy),
            other => Err(LaftError::InvalidArgument(format!("unknown subset '{other}'"))),
        }
    }
}

/// `(E, D)`: samples whose reference label agrees with the assigned label, and the rest.
pub fn coarse_separate(train: &Dataset, llm_labels: &HashMap<String, usize>) -> Result<(IdSet, IdSet)> {
    let mut easy = IdSet::new();
    let mut disagreed = IdSet::new();
    for s in train.samples() {
        let y_hat = *llm_labels.get(&s.id).ok_or_else(|| LaftError::Missing {
            what: "oracle label",
            id: s.id.clone(),
        })?;
        if y_hat == s.assigned_label {
            easy.insert(s.id.clone());
        } else {
            disagreed.insert(s.id.clone());
        }
    }
    Ok((easy, disagreed))
}

/// Hard-clean membership rule for one disagreed sample. `llm_max = None` drops
/// the oracle conjunct.
pub fn is_hard_clean(llm_max: Option<f64>, classifier_max: f64, sched: &ThresholdSchedule, epoch: u32) -> bool {
    llm_max.is_none_or(|m| m < sched.tau_hat) && classifier_max < adaptive_threshold(epoch, sched)
}

/// `(H, N)` split of the disagreed set. Passing `llm_agg = None` separates on
/// classifier confidence alone.
pub fn fine_separate(
    disagreed: &IdSet,
    llm_agg: Option<&HashMap<String, ConfidenceVector>>,
    classifier: &HashMap<String, ConfidenceVector>,
    sched: &ThresholdSchedule,
    epoch: u32,
) -> Result<(IdSet, IdSet)> {
    let mut hard = IdSet::new();
    let mut noisy = IdSet::new();
    for id in disagreed {
        let clf = classifier.get(id).ok_or_else(|| LaftError::Missing {
            what: "classifier confidence",
            id: id.clone(),
        })?;
        let llm_max = match llm_agg {
            Some(map) => Some(
                map.get(id)
                    .ok_or_else(|| LaftError::Missing {
                        what: "aggregated oracle confidence",
                        id: id.clone(),
                    })?
                    .max(),
            ),
            None => None,
        };
        if is_hard_clean(llm_max, clf.max(), sched, epoch) {
            hard.insert(id.clone());
        } else {
            noisy.insert(id.clone());
        }
    }
    Ok((hard, noisy))
}

/// `(H*, N*)`: disagreed samples split by whether the assigned label is the true one.
pub fn ideal_separate(disagreed: &IdSet, train: &Dataset) -> Result<(IdSet, IdSet)> {
    let by_id: HashMap<&str, _> = train.samples().iter().map(|s| (s.id.as_str(), s)).collect();
    let mut hard = IdSet::new();
    let mut noisy = IdSet::new();
    for id in disagreed {
        let s = by_id.get(id.as_str()).ok_or_else(|| LaftError::Missing {
            what: "sample",
            id: id.clone(),
        })?;
        match s.is_flipped() {
            Some(false) => hard.insert(id.clone()),
            Some(true) => noisy.insert(id.clone()),
            None => {
                return Err(LaftError::Missing {
                    what: "true label",
                    id: id.clone(),
                })
            }
        };
    }
    Ok((hard, noisy))
}

/// Subset label of every training sample at one epoch, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetAssignment {
    pub epoch: u32,
    labels: Vec<(String, Subset)>,
}

impl SubsetAssignment {
    /// Checks that the three sets partition the training ids.
    pub fn new(train: &Dataset, epoch: u32, easy: &IdSet, hard: &IdSet, noisy: &IdSet) -> Result<Self> {
        if easy.len() + hard.len() + noisy.len() != train.len() {
            return Err(LaftError::Dataset(format!(
                "subsets hold {} ids for {} samples",
                easy.len() + hard.len() + noisy.len(),
                train.len()
            )));
        }
        let labels = train
            .samples()
            .iter()
            .map(|s| {
                let hits = [easy.contains(&s.id), hard.contains(&s.id), noisy.contains(&s.id)];
                match hits {
                    [true, false, false] => Ok((s.id.clone(), Subset::EasyClean)),
                    [false, true, false] => Ok((s.id.clone(), Subset::HardClean)),
                    [false, false, true] => Ok((s.id.clone(), Subset::TrueNoisy)),
                    _ => Err(LaftError::Dataset(format!(
                        "sample '{}' is not in exactly one subset",
                        s.id
                    ))),
                }
            })
            .collect::<Result<_>>()?;
        Ok(SubsetAssignment { epoch, labels })
    }

    pub fn labels(&self) -> &[(String, Subset)] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Subset)> {
        self.labels.iter().map(|(id, s)| (id.as_str(), *s))
    }

    pub fn members(&self, subset: Subset) -> IdSet {
        self.iter().filter(|(_, s)| *s == subset).map(|(id, _)| id.to_string()).collect()
    }

    /// `(|EC|, |HC|, |TN|)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for (_, s) in &self.labels {
            match s {
                Subset::EasyClean => c.0 += 1,
                Subset::HardClean => c.1 += 1,
                Subset::TrueNoisy => c.2 += 1,
            }
        }
        c
    }

    /// `sample_id,subset` rows followed by a `#summary` row with the three sizes.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sample_id", "subset"])?;
        for (id, s) in &self.labels {
            w.write_record([id.as_str(), &s.to_string()])?;
        }
        let (ec, hc, tn) = self.counts();
        w.write_record(["#summary", &format!("EC={ec};HC={hc};TN={tn}")])?;
        w.flush()?;
        Ok(())
    }
}
