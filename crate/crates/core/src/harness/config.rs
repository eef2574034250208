//! Flat key-value experiment configuration in TOML syntax.
//!
//! ```toml
//! # data: either the three CSV paths or the synthetic generator
//! train = "data/train.csv"
//! val = "data/val.csv"
//! test = "data/test.csv"
//! synth_classes = 4
//! synth_train = 2000
//!
//! noise_kind = "sn"        # sn | an | idn | none
//! noise_ratio = 0.4
//!
//! oracle = "simulated"     # simulated | http | cache
//! oracle_accuracy = 0.8
//! cache_dir = "cache"
//!
//! method = "laft"          # laft | base
//! ablation = "full"        # full | no_coarse | no_fine | no_noisy_loss
//! seeds = [1, 2, 3]
//! out_dir = "runs/demo"
//! ```
//!
//! Every key can be overridden with `key=value`; values are parsed as TOML
//! and fall back to plain strings.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::SynthSpec;
use crate::augment::{Augmentation, AugmentationKind};
use crate::error::{LaftError, Result};
use crate::noise::NoiseKind;
use crate::objective::LossWeights;
use crate::oracle::simulated::DEFAULT_SHARPNESS;
use crate::separate::ThresholdSchedule;
use crate::trainer::{Ablation, Method, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,

    pub synth_classes: usize,
    pub synth_train: usize,
    pub synth_val: usize,
    pub synth_test: usize,
    pub synth_cue_vocab: usize,
    pub synth_filler_vocab: usize,
    pub synth_cue_tokens: usize,
    pub synth_filler_tokens: usize,
    pub synth_seed: u64,

    pub noise_kind: String,
    pub noise_ratio: f64,
    /// `from,to` CSV for asymmetric noise.
    pub noise_map: Option<PathBuf>,

    pub oracle: String,
    /// Model id sent to the HTTP endpoint.
    pub oracle_model: String,
    pub oracle_accuracy: f64,
    pub oracle_sharpness: f64,
    pub oracle_seed: u64,
    pub cache_dir: PathBuf,
    pub fanout: usize,
    /// Comma-separated `kind:rate` list, one view each.
    pub augmentations: String,
    pub augment_seed: u64,

    pub method: String,
    pub ablation: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: u32,
    pub patience: u32,
    pub max_tokens: usize,
    pub buckets: usize,
    pub tau_hat: f64,
    pub tau_tilde: f64,
    pub threshold_lambda: f64,
    pub lambda_h: f64,
    pub lambda_n: f64,
    pub alpha: f64,
    pub beta: f64,

    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let s = SynthSpec::default();
        ExperimentConfig {
            train: None,
            val: None,
            test: None,
            synth_classes: s.n_classes,
            synth_train: 2000,
            synth_val: 500,
            synth_test: 500,
            synth_cue_vocab: s.cue_vocab,
            synth_filler_vocab: s.filler_vocab,
            synth_cue_tokens: s.cue_tokens,
            synth_filler_tokens: s.filler_tokens,
            synth_seed: s.seed,
            noise_kind: "sn".into(),
            noise_ratio: 0.2,
            noise_map: None,
            oracle: "simulated".into(),
            oracle_model: "gpt-4".into(),
            oracle_accuracy: 0.75,
            oracle_sharpness: DEFAULT_SHARPNESS,
            oracle_seed: 0,
            cache_dir: PathBuf::from("cache"),
            fanout: 4,
            augmentations: "back_translation:0.1,random_insertion:0.1,random_deletion:0.1,random_swap:0.1".into(),
            augment_seed: 0,
            method: t.method.to_string(),
            ablation: t.ablation.to_string(),
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.early_stop_patience,
            max_tokens: t.max_tokens,
            buckets: t.buckets,
            tau_hat: t.schedule.tau_hat,
            tau_tilde: t.schedule.tau_tilde,
            threshold_lambda: t.schedule.lambda,
            lambda_h: t.weights.lambda_h,
            lambda_n: t.weights.lambda_n,
            alpha: t.weights.alpha,
            beta: t.weights.beta,
            seeds: vec![0],
            out_dir: PathBuf::from("runs/experiment"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Simulated,
    Http,
    CacheOnly,
}

fn config_err(e: impl std::fmt::Display) -> LaftError {
    LaftError::Config(e.to_string())
}

/// Parse the right-hand side of `key=value`.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(config_err)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| LaftError::Config(format!("override '{o}' is not key=value")))?;
            table.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        let cfg: ExperimentConfig = table.try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LaftError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    /// Effective configuration in the same format it is read from.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.train, &self.val, &self.test) {
            (None, None, None) => self.synth_spec().validate()?,
            (Some(_), Some(_), Some(_)) => {
                for p in [&self.train, &self.val, &self.test].into_iter().flatten() {
                    if !p.is_file() {
                        return Err(LaftError::Config(format!("{} does not exist", p.display())));
                    }
                }
            }
            _ => return Err(config_err("train, val and test must be given together")),
        }
        if let Some(map) = &self.noise_map {
            if !map.is_file() {
                return Err(LaftError::Config(format!("{} does not exist", map.display())));
            }
        }
        self.noise()?;
        if !(0.0..=1.0).contains(&self.noise_ratio) {
            return Err(config_err(format!("noise_ratio must lie in [0, 1], got {}", self.noise_ratio)));
        }
        self.oracle_kind()?;
        self.augmentation_list()?;
        if self.seeds.is_empty() {
            return Err(config_err("seeds must not be empty"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(config_err("seeds must be distinct"));
        }
        self.train_config(0)?.validate()
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            n_classes: self.synth_classes,
            cue_vocab: self.synth_cue_vocab,
            filler_vocab: self.synth_filler_vocab,
            cue_tokens: self.synth_cue_tokens,
            filler_tokens: self.synth_filler_tokens,
            seed: self.synth_seed,
        }
    }

    /// `None` for `noise_kind = "none"`.
    pub fn noise(&self) -> Result<Option<NoiseKind>> {
        if self.noise_kind == "none" {
            return Ok(None);
        }
        self.noise_kind.parse().map(Some).map_err(config_err)
    }

    pub fn oracle_kind(&self) -> Result<OracleKind> {
        match self.oracle.as_str() {
            "simulated" => Ok(OracleKind::Simulated),
            "http" => Ok(OracleKind::Http),
            "cache" => Ok(OracleKind::CacheOnly),
            other => Err(config_err(format!("unknown oracle '{other}'"))),
        }
    }

    pub fn augmentation_list(&self) -> Result<Vec<Augmentation>> {
        self.augmentations
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| {
                let (kind, rate) = item.split_once(':').unwrap_or((item, "0.1"));
                let kind: AugmentationKind = kind.trim().parse().map_err(config_err)?;
                let rate: f64 = rate.trim().parse().map_err(config_err)?;
                Augmentation::new(kind, rate).map_err(config_err)
            })
            .collect()
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let method: Method = self.method.parse()?;
        let ablation: Ablation = self.ablation.parse()?;
        Ok(TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            early_stop_patience: self.patience,
            seed,
            max_tokens: self.max_tokens,
            buckets: self.buckets,
            schedule: ThresholdSchedule {
                tau_hat: self.tau_hat,
                tau_tilde: self.tau_tilde,
                lambda: self.threshold_lambda,
            },
            weights: LossWeights {
                lambda_h: self.lambda_h,
                lambda_n: self.lambda_n,
                alpha: self.alpha,
                beta: self.beta,
            },
            ablation,
            method,
        })
    }
}
