//! Semantics-preserving text views used to average oracle confidences.
//!
//! Tokens are whitespace-separated. An augmentation that performs at least one
//! operation re-joins tokens with single spaces; one that performs none
//! returns the input untouched. The number of operations is
//! `max(1, round(rate * tokens))` for a positive rate and 0 otherwise.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LaftError, Result};
use crate::rng;

pub const DEFAULT_RATE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationKind {
    BackTranslation,
    RandomInsertion,
    RandomDeletion,
    RandomSwap,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 4] = [
        AugmentationKind::BackTranslation,
        AugmentationKind::RandomInsertion,
        AugmentationKind::RandomDeletion,
        AugmentationKind::RandomSwap,
    ];

    fn tag(self) -> u64 {
        self as u64 + 0xa0
    }
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AugmentationKind::BackTranslation => "back_translation",
            AugmentationKind::RandomInsertion => "random_insertion",
            AugmentationKind::RandomDeletion => "random_deletion",
            AugmentationKind::RandomSwap => "random_swap",
        })
    }
}

impl FromStr for AugmentationKind {
    type Err = LaftError;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "back_translation" | "bt" => Ok(AugmentationKind::BackTranslation),
            "random_insertion" | "insertion" | "ri" => Ok(AugmentationKind::RandomInsertion),
            "random_deletion" | "deletion" | "rd" => Ok(AugmentationKind::RandomDeletion),
            "random_swap" | "swap" | "rs" => Ok(AugmentationKind::RandomSwap),
            other => Err(LaftError::InvalidArgument(format!("unknown augmentation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub kind: AugmentationKind,
    pub rate: f64,
}

impl Augmentation {
    pub fn new(kind: AugmentationKind, rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(LaftError::InvalidArgument(format!(
                "augmentation rate must lie in [0, 1], got {rate}"
            )));
        }
        Ok(Augmentation { kind, rate })
    }
}

/// One view per kind at the default rate.
pub fn default_augmentations() -> Vec<Augmentation> {
    AugmentationKind::ALL
        .iter()
        .map(|&kind| Augmentation {
            kind,
            rate: DEFAULT_RATE,
        })
        .collect()
}

/// Round-trip translation backend for [`AugmentationKind::BackTranslation`].
pub trait Translator: Send + Sync {
    fn back_translate(&self, text: &str, seed: u64) -> Result<String>;
}

#[derive(Clone, Default)]
pub struct Augmenter {
    translator: Option<Arc<dyn Translator>>,
}

impl fmt::Debug for Augmenter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Augmenter")
            .field("translator", &self.translator.is_some())
            .finish()
    }
}

fn op_count(rate: f64, len: usize) -> usize {
    if rate <= 0.0 {
        0
    } else {
        ((rate * len as f64).round() as usize).max(1)
    }
}

impl Augmenter {
    pub fn with_translator(translator: Arc<dyn Translator>) -> Self {
        Augmenter {
            translator: Some(translator),
        }
    }

    pub fn augment(&self, text: &str, aug: Augmentation, seed: u64) -> Result<String> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(LaftError::Augment("text has no tokens".into()));
        }
        let mut rng = rng::stream(seed, &[aug.kind.tag()]);
        let ops = op_count(aug.rate, tokens.len());
        match aug.kind {
            AugmentationKind::BackTranslation => match &self.translator {
                Some(t) => t.back_translate(text, seed),
                None => Ok(text.to_string()),
            },
            AugmentationKind::RandomDeletion => {
                let k = ops.min(tokens.len() - 1);
                if k == 0 {
                    return Ok(text.to_string());
                }
                let mut drop = vec![false; tokens.len()];
                for i in index::sample(&mut rng, tokens.len(), k) {
                    drop[i] = true;
                }
                let kept: Vec<&str> = tokens
                    .iter()
                    .zip(&drop)
                    .filter(|(_, &d)| !d)
                    .map(|(t, _)| *t)
                    .collect();
                Ok(kept.join(" "))
            }
            AugmentationKind::RandomSwap => {
                if ops == 0 || tokens.len() < 2 {
                    return Ok(text.to_string());
                }
                let mut out = tokens;
                for _ in 0..ops {
                    let i = rng.random_range(0..out.len());
                    let mut j = rng.random_range(0..out.len() - 1);
                    if j >= i {
                        j += 1;
                    }
                    out.swap(i, j);
                }
                Ok(out.join(" "))
            }
            AugmentationKind::RandomInsertion => {
                // No synonym source: insert a copy of a randomly chosen token.
                if ops == 0 {
                    return Ok(text.to_string());
                }
                let mut out = tokens;
                for _ in 0..ops {
                    let word = out[rng.random_range(0..out.len())];
                    let at = rng.random_range(0..=out.len());
                    out.insert(at, word);
                }
                Ok(out.join(" "))
            }
        }
    }

    pub fn make_views(&self, text: &str, augs: &[Augmentation], seed: u64) -> Result<Vec<String>> {
        if augs.is_empty() {
            return Err(LaftError::Augment("no augmentations requested".into()));
        }
        augs.iter()
            .enumerate()
            .map(|(m, &aug)| self.augment(text, aug, rng::derive(seed, &[m as u64])))
            .collect()
    }
}

/// [`Augmenter::augment`] with back-translation as identity.
pub fn augment(text: &str, aug: Augmentation, seed: u64) -> Result<String> {
    Augmenter::default().augment(text, aug, seed)
}

pub fn make_views(text: &str, augs: &[Augmentation], seed: u64) -> Result<Vec<String>> {
    Augmenter::default().make_views(text, augs, seed)
}
