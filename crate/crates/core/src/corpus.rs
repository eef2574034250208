//! Samples, class sets, datasets, and their CSV form.
//!
//! Files carry a header `id,text,label` or `id,text,label,true_label`, with
//! labels written as class names. `true_label` holds the clean label and is
//! only ever read by diagnostics.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{LaftError, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub assigned_label: usize,
    pub true_label: Option<usize>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: usize) -> Self {
        Sample {
            id: id.into(),
            text: text.into(),
            assigned_label: label,
            true_label: None,
        }
    }

    pub fn with_true_label(mut self, label: usize) -> Self {
        self.true_label = Some(label);
        self
    }

    /// `Some(true)` when the assigned label disagrees with the known clean label.
    pub fn is_flipped(&self) -> Option<bool> {
        self.true_label.map(|t| t != self.assigned_label)
    }
}

/// Ordered, duplicate-free list of class names. Index `j` is class `c_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ClassSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(LaftError::Dataset(format!(
                "a class set needs at least 2 classes, got {}",
                names.len()
            )));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(LaftError::Dataset(format!("duplicate class name '{name}'")));
            }
        }
        Ok(ClassSet { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    classes: ClassSet,
    split: SplitTag,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, classes: ClassSet, split: SplitTag) -> Result<Self> {
        let n_classes = classes.len();
        let mut seen = HashSet::with_capacity(samples.len());
        let has_true = samples.first().map(|s| s.true_label.is_some());
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(LaftError::Dataset(format!("duplicate sample id '{}'", s.id)));
            }
            if s.assigned_label >= n_classes {
                return Err(LaftError::Dataset(format!(
                    "sample '{}' has label {} outside 0..{n_classes}",
                    s.id, s.assigned_label
                )));
            }
            if let Some(t) = s.true_label {
                if t >= n_classes {
                    return Err(LaftError::Dataset(format!(
                        "sample '{}' has true label {t} outside 0..{n_classes}",
                        s.id
                    )));
                }
            }
            if Some(s.true_label.is_some()) != has_true {
                return Err(LaftError::Dataset(
                    "true labels must be present on all samples or on none".into(),
                ));
            }
        }
        Ok(Dataset {
            samples,
            classes,
            split,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn classes(&self) -> &ClassSet {
        &self.classes
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn has_true_labels(&self) -> bool {
        self.samples.first().is_some_and(|s| s.true_label.is_some())
    }

    pub fn with_split(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }
}

/// Load a dataset from a CSV file. With `classes = None` the class set is
/// inferred in order of first appearance.
pub fn load_dataset(path: &Path, classes: Option<&ClassSet>, split: SplitTag) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| LaftError::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    read_dataset(file, classes, split).map_err(|e| match e {
        LaftError::Load { message, .. } => LaftError::Load {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

fn load_err(message: String) -> LaftError {
    LaftError::Load {
        path: "<input>".into(),
        message,
    }
}

pub fn read_dataset<R: Read>(
    reader: R,
    classes: Option<&ClassSet>,
    split: SplitTag,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let has_true = match cols.as_slice() {
        ["id", "text", "label"] => false,
        ["id", "text", "label", "true_label"] => true,
        _ => {
            return Err(load_err(format!(
                "expected header 'id,text,label[,true_label]', found '{}'",
                cols.join(",")
            )))
        }
    };

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| load_err(format!("malformed CSV at row {row}: {e}")))?;
        let field = |k: usize| rec.get(k).unwrap_or("").to_string();
        let true_name = if has_true {
            let t = field(3);
            if t.is_empty() {
                return Err(load_err(format!("missing true_label at row {row}")));
            }
            Some(t)
        } else {
            None
        };
        rows.push((row, field(0), field(1), field(2), true_name));
    }

    let classes = match classes {
        Some(c) => c.clone(),
        None => {
            let mut names: Vec<String> = Vec::new();
            let mut seen = HashSet::new();
            for (_, _, _, label, truth) in &rows {
                for name in std::iter::once(label).chain(truth.iter()) {
                    if seen.insert(name.clone()) {
                        names.push(name.clone());
                    }
                }
            }
            ClassSet::new(names).map_err(|e| load_err(e.to_string()))?
        }
    };

    let mut ids = HashSet::new();
    let mut samples = Vec::with_capacity(rows.len());
    for (row, id, text, label, truth) in rows {
        if id.is_empty() {
            return Err(load_err(format!("empty id at row {row}")));
        }
        if !ids.insert(id.clone()) {
            return Err(load_err(format!("duplicate id '{id}' at row {row}")));
        }
        let lookup = |name: &str| {
            classes
                .index_of(name)
                .ok_or_else(|| load_err(format!("unknown class '{name}' at row {row}")))
        };
        let assigned_label = lookup(&label)?;
        let true_label = truth.as_deref().map(lookup).transpose()?;
        samples.push(Sample {
            id,
            text,
            assigned_label,
            true_label,
        });
    }
    Dataset::new(samples, classes, split)
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(d, file)
}

pub fn write_dataset<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let with_true = d.has_true_labels();
    if with_true {
        w.write_record(["id", "text", "label", "true_label"])?;
    } else {
        w.write_record(["id", "text", "label"])?;
    }
    let c = d.classes();
    for s in d.samples() {
        let label = c.name(s.assigned_label);
        match s.true_label {
            Some(t) if with_true => w.write_record([&s.id, &s.text, label, c.name(t)])?,
            _ => w.write_record([&s.id, &s.text, label])?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Seeded disjoint split into train and validation parts of
/// `floor(frac * n)` samples each. Both parts keep the input's relative order.
pub fn split_dataset(
    d: &Dataset,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && val_frac > 0.0) || train_frac + val_frac > 1.0 + 1e-12 {
        return Err(LaftError::InvalidArgument(format!(
            "split fractions must be positive with sum <= 1, got ({train_frac}, {val_frac})"
        )));
    }
    let n = d.len();
    let n_train = (train_frac * n as f64).floor() as usize;
    let n_val = (val_frac * n as f64).floor() as usize;
    if n_train == 0 || n_val == 0 {
        return Err(LaftError::InvalidArgument(format!(
            "split of {n} samples with fractions ({train_frac}, {val_frac}) leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[0x5917]));
    let mut train_idx = order[..n_train].to_vec();
    let mut val_idx = order[n_train..n_train + n_val].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    let pick = |idx: &[usize], split| {
        let samples = idx.iter().map(|&i| d.samples[i].clone()).collect();
        Dataset::new(samples, d.classes.clone(), split)
    };
    Ok((
        pick(&train_idx, SplitTag::Train)?,
        pick(&val_idx, SplitTag::Validation)?,
    ))
}
