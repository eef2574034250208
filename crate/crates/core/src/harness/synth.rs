//! Synthetic corpora that are linearly separable by construction.
//!
//! Every class owns a disjoint vocabulary of cue words; a sample of class `c`
//! holds `cue_tokens` words drawn from class `c`'s vocabulary mixed with
//! `filler_tokens` words from a shared vocabulary. A large cue vocabulary
//! makes individual cue words rare, so noisy labels hurt a learner that has
//! to estimate each cue from few occurrences.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassSet, Dataset, Sample, SplitTag};
use crate::error::{LaftError, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub cue_vocab: usize,
    pub filler_vocab: usize,
    pub cue_tokens: usize,
    pub filler_tokens: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_classes: 4,
            cue_vocab: 400,
            filler_vocab: 2000,
            cue_tokens: 4,
            filler_tokens: 24,
            seed: 0,
        }
    }
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "to", "vi", "pe", "da", "go", "hu", "ji", "bo", "fe", "zu",
];

/// Pronounceable, collision-free word for index `i` in namespace `ns`.
fn word(ns: &str, mut i: usize) -> String {
    let mut w = String::from(ns);
    loop {
        w.push_str(SYLLABLES[i % 16]);
        i /= 16;
        if i == 0 {
            break;
        }
    }
    w
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.cue_vocab == 0 || self.cue_tokens == 0 {
            return Err(LaftError::Config(format!("invalid synthetic corpus spec {self:?}")));
        }
        if self.filler_tokens > 0 && self.filler_vocab == 0 {
            return Err(LaftError::Config("filler tokens need a filler vocabulary".into()));
        }
        Ok(())
    }

    pub fn classes(&self) -> ClassSet {
        ClassSet::new((0..self.n_classes).map(|c| format!("topic{c}"))).expect("distinct names")
    }

    pub fn cue_word(&self, class: usize, j: usize) -> String {
        word(&format!("q{class}"), j)
    }

    /// `n` clean samples with ids `{prefix}{i}`; labels are balanced, in shuffled order.
    pub fn generate(&self, prefix: &str, n: usize, split: SplitTag) -> Result<Dataset> {
        self.validate()?;
        let mut r = rng::stream(self.seed, &[rng::hash_str(prefix), 0x5e]);
        let mut labels: Vec<usize> = (0..n).map(|i| i % self.n_classes).collect();
        labels.shuffle(&mut r);
        let samples = labels
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let mut toks: Vec<String> = (0..self.cue_tokens)
                    .map(|_| self.cue_word(c, r.random_range(0..self.cue_vocab)))
                    .collect();
                for _ in 0..self.filler_tokens {
                    toks.push(word("f", r.random_range(0..self.filler_vocab)));
                }
                toks.shuffle(&mut r);
                Sample::new(format!("{prefix}{i}"), toks.join(" "), c)
            })
            .collect();
        Dataset::new(samples, self.classes(), split)
    }
}
