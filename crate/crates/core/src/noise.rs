//! Synthetic label noise: symmetric, asymmetric, and instance-dependent.
//!
//! Every injector flips exactly `round(ratio * n)` samples and records the
//! clean label of every sample in `true_label`.
//!
//! Instance-dependent noise uses a fixed feature-projection recipe:
//! 1. each sample gets a flip rate `q_i ~ N(ratio, 0.1^2)` truncated to `[0, 1]`,
//!    drawn from a generator keyed by `(seed, text)`;
//! 2. the `round(ratio * n)` samples with the largest weighted-sampling keys
//!    `ln(u_i) / q_i` (`u_i` uniform, same generator) are flipped;
//! 3. the destination is the argmax, over classes other than the true one, of
//!    `W x_i` where `x_i` is the hashed bag-of-tokens vector and `W` is a
//!    standard-normal matrix seeded by `feature_projection_seed`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassSet, Dataset, Sample};
use crate::error::{LaftError, Result};
use crate::rng;
use crate::trainer::featurize::HashedFeaturizer;

pub const IDN_RATE_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Sn,
    An,
    Idn,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Sn, NoiseKind::An, NoiseKind::Idn];
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Sn => "sn",
            NoiseKind::An => "an",
            NoiseKind::Idn => "idn",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = LaftError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sn" | "symmetric" => Ok(NoiseKind::Sn),
            "an" | "asymmetric" => Ok(NoiseKind::An),
            "idn" | "instance" | "instance-dependent" => Ok(NoiseKind::Idn),
            other => Err(LaftError::InvalidArgument(format!("unknown noise kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub ratio: f64,
    pub seed: u64,
    /// Asymmetric noise only: destination class for each class.
    pub transition_map: Option<Vec<usize>>,
    /// Instance-dependent noise only.
    pub feature_projection_seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, ratio: f64, seed: u64) -> Self {
        NoiseSpec {
            kind,
            ratio,
            seed,
            transition_map: None,
            feature_projection_seed: rng::derive(seed, &[0x1d9]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipRecord {
    pub sample_id: String,
    pub original_label: usize,
    pub flipped_label: usize,
}

pub fn inject(d: &Dataset, spec: &NoiseSpec) -> Result<(Dataset, Vec<FlipRecord>)> {
    match spec.kind {
        NoiseKind::Sn => inject_symmetric(d, spec.ratio, spec.seed),
        NoiseKind::An => inject_asymmetric(d, spec.ratio, spec.transition_map.as_deref(), spec.seed),
        NoiseKind::Idn => {
            inject_instance_dependent(d, spec.ratio, spec.seed, spec.feature_projection_seed)
        }
    }
}

fn flip_count(d: &Dataset, ratio: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(LaftError::InvalidArgument(format!(
            "noise ratio must lie in [0, 1], got {ratio}"
        )));
    }
    if d.samples().iter().any(|s| s.is_flipped() == Some(true)) {
        return Err(LaftError::InvalidArgument(
            "noise must be injected into a clean dataset".into(),
        ));
    }
    Ok((ratio * d.len() as f64).round() as usize)
}

/// Apply `dest[i]` to the selected sample indices; returns the noisy copy.
fn apply(d: &Dataset, mut chosen: Vec<usize>, dest: impl Fn(usize) -> usize) -> Result<(Dataset, Vec<FlipRecord>)> {
    chosen.sort_unstable();
    let mut samples: Vec<Sample> = d
        .samples()
        .iter()
        .map(|s| Sample {
            true_label: Some(s.assigned_label),
            ..s.clone()
        })
        .collect();
    let mut flips = Vec::with_capacity(chosen.len());
    for i in chosen {
        let s = &mut samples[i];
        let to = dest(i);
        debug_assert_ne!(to, s.assigned_label);
        flips.push(FlipRecord {
            sample_id: s.id.clone(),
            original_label: s.assigned_label,
            flipped_label: to,
        });
        s.assigned_label = to;
    }
    let out = Dataset::new(samples, d.classes().clone(), d.split())?;
    Ok((out, flips))
}

pub fn inject_symmetric(d: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Vec<FlipRecord>)> {
    let k = flip_count(d, ratio)?;
    let n_classes = d.num_classes();
    let mut rng = rng::stream(seed, &[0x5a]);
    let chosen = rand::seq::index::sample(&mut rng, d.len(), k).into_vec();
    let mut chosen = chosen;
    chosen.sort_unstable();
    // Destinations are drawn in dataset order, independent of selection order.
    let mut dest = vec![usize::MAX; d.len()];
    for &i in &chosen {
        let orig = d.samples()[i].assigned_label;
        let r = rng.random_range(0..n_classes - 1);
        dest[i] = if r >= orig { r + 1 } else { r };
    }
    apply(d, chosen, |i| dest[i])
}

/// `c_j -> c_{(j+1) mod n}`.
pub fn cyclic_map(n_classes: usize) -> Vec<usize> {
    (0..n_classes).map(|j| (j + 1) % n_classes).collect()
}

pub fn validate_transition_map(map: &[usize], n_classes: usize) -> Result<()> {
    if map.len() != n_classes {
        return Err(LaftError::InvalidArgument(format!(
            "transition map covers {} classes, dataset has {n_classes}",
            map.len()
        )));
    }
    for (from, &to) in map.iter().enumerate() {
        if to >= n_classes {
            return Err(LaftError::InvalidArgument(format!("transition target {to} out of range")));
        }
        if to == from {
            return Err(LaftError::InvalidArgument(format!(
                "transition map has a fixed point at class {from}"
            )));
        }
    }
    Ok(())
}

pub fn inject_asymmetric(
    d: &Dataset,
    ratio: f64,
    transition_map: Option<&[usize]>,
    seed: u64,
) -> Result<(Dataset, Vec<FlipRecord>)> {
    let default_map;
    let map = match transition_map {
        Some(m) => m,
        None => {
            default_map = cyclic_map(d.num_classes());
            &default_map
        }
    };
    validate_transition_map(map, d.num_classes())?;
    let k = flip_count(d, ratio)?;
    let mut rng = rng::stream(seed, &[0xa5]);
    let chosen = rand::seq::index::sample(&mut rng, d.len(), k).into_vec();
    apply(d, chosen, |i| map[d.samples()[i].assigned_label])
}

/// Flip rate and selection key of one sample, both pure functions of `(seed, text)`.
pub fn idn_rate_and_key(text: &str, ratio: f64, seed: u64) -> (f64, f64) {
    let mut rng = rng::stream(seed, &[0x1d, rng::hash_str(text)]);
    let q = truncated_normal(&mut rng, ratio, IDN_RATE_STD);
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let key = if q > 0.0 { u.ln() / q } else { f64::NEG_INFINITY };
    (q, key)
}

fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, std: f64) -> f64 {
    if mean <= 0.0 && std == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(mean, std).expect("valid normal");
    for _ in 0..10_000 {
        let v = normal.sample(rng);
        if (0.0..=1.0).contains(&v) {
            return v;
        }
    }
    mean.clamp(0.0, 1.0)
}

/// Seeded class-projection matrix for instance-dependent destinations.
#[derive(Debug, Clone)]
pub struct FeatureProjection {
    featurizer: HashedFeaturizer,
    weights: Vec<Vec<f64>>,
}

impl FeatureProjection {
    pub fn new(n_classes: usize, featurizer: HashedFeaturizer, seed: u64) -> Self {
        let weights = (0..n_classes)
            .map(|c| {
                let mut rng = rng::stream(seed, &[0x9e0, c as u64]);
                (0..featurizer.dim())
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        FeatureProjection {
            featurizer,
            weights,
        }
    }

    pub fn scores(&self, text: &str) -> Vec<f64> {
        let x = self.featurizer.features(text);
        self.weights
            .iter()
            .map(|w| x.iter().map(|(b, v)| w[b] * v).sum())
            .collect()
    }

    /// Highest-scoring class other than `true_class`, lowest index on ties.
    pub fn destination(&self, text: &str, true_class: usize) -> usize {
        let scores = self.scores(text);
        let mut best: Option<(usize, f64)> = None;
        for (c, &s) in scores.iter().enumerate() {
            if c == true_class {
                continue;
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        best.expect("at least two classes").0
    }
}

pub fn inject_instance_dependent(
    d: &Dataset,
    ratio: f64,
    seed: u64,
    feature_projection_seed: u64,
) -> Result<(Dataset, Vec<FlipRecord>)> {
    let k = flip_count(d, ratio)?;
    let mut keyed: Vec<(f64, usize)> = d
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| (idn_rate_and_key(&s.text, ratio, seed).1, i))
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let chosen: Vec<usize> = keyed.iter().take(k).map(|&(_, i)| i).collect();
    let proj = FeatureProjection::new(
        d.num_classes(),
        HashedFeaturizer::default(),
        feature_projection_seed,
    );
    apply(d, chosen, |i| {
        let s = &d.samples()[i];
        proj.destination(&s.text, s.assigned_label)
    })
}

/// Transition map CSV: header `from,to`, class names, one row per class.
pub fn load_transition_map(path: &Path, classes: &ClassSet) -> Result<Vec<usize>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut map = vec![None; classes.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let lookup = |k: usize| {
            let name = rec.get(k).unwrap_or("");
            classes
                .index_of(name)
                .ok_or_else(|| LaftError::InvalidArgument(format!("unknown class '{name}' in transition map")))
        };
        map[lookup(0)?] = Some(lookup(1)?);
    }
    let map: Vec<usize> = map
        .into_iter()
        .enumerate()
        .map(|(c, m)| {
            m.ok_or_else(|| {
                LaftError::InvalidArgument(format!("transition map misses class '{}'", classes.name(c)))
            })
        })
        .collect::<Result<_>>()?;
    validate_transition_map(&map, classes.len())?;
    Ok(map)
}

/// Flip CSV: header `sample_id,original_label,flipped_label`, class names.
pub fn save_flips(flips: &[FlipRecord], classes: &ClassSet, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "original_label", "flipped_label"])?;
    for f in flips {
        w.write_record([
            f.sample_id.as_str(),
            classes.name(f.original_label),
            classes.name(f.flipped_label),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_flips(path: &Path, classes: &ClassSet) -> Result<Vec<FlipRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let label = |k: usize| {
            let name = rec.get(k).unwrap_or("");
            classes
                .index_of(name)
                .ok_or_else(|| LaftError::Dataset(format!("unknown class '{name}' in flip file")))
        };
        out.push(FlipRecord {
            sample_id: rec.get(0).unwrap_or("").to_string(),
            original_label: label(1)?,
            flipped_label: label(2)?,
        });
    }
    Ok(out)
}
