//! End-to-end experiments: noise injection, oracle queries, training,
//! evaluation, and the diagnostics written next to each run.

pub mod config;
pub mod synth;

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::Augmenter;
use crate::corpus::{load_dataset, save_dataset, Dataset, SplitTag};
use crate::error::{LaftError, Result};
use crate::noise::{self, FlipRecord, NoiseKind, NoiseSpec};
use crate::oracle::{
    fetch_oracle_outputs, CacheOnly, FetchOptions, HttpOracle, OracleCache, OracleClient, OracleOutputs,
    SimulatedOracle,
};
use crate::rng;
use crate::separate::{coarse_separate, ideal_separate, IdSet, Subset, SubsetAssignment};
use crate::trainer::{evaluate_accuracy, fit, Classifier, Method, RunRecord};

pub use config::{ExperimentConfig, OracleKind};
pub use synth::SynthSpec;

/// LLM-label accuracy inside each subset of one partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRow {
    /// `ideal` or `realized`.
    pub partition: String,
    pub epoch: Option<u32>,
    pub n_easy: usize,
    pub n_hard: usize,
    pub n_noisy: usize,
    pub acc_easy: Option<f64>,
    pub acc_hard: Option<f64>,
    pub acc_noisy: Option<f64>,
    pub overall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRow {
    pub epoch: u32,
    pub clean: Option<f64>,
    pub flipped: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_epoch: Option<u32>,
    pub epochs_run: usize,
    pub flips: usize,
    pub subset_table: Vec<SubsetRow>,
    pub dynamics: Vec<DynamicsRow>,
    pub rundir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub method: String,
    pub ablation: String,
    pub noise_kind: String,
    pub noise_ratio: f64,
    pub oracle_model: Option<String>,
    pub runs: Vec<SeedRun>,
    pub accuracy_mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub accuracy_std: f64,
}

impl DiagnosticsReport {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn llm_accuracy(ids: &IdSet, truth: &HashMap<&str, usize>, llm: &HashMap<String, usize>) -> Result<Option<f64>> {
    if ids.is_empty() {
        return Ok(None);
    }
    let mut hits = 0usize;
    for id in ids {
        let y = llm.get(id).ok_or_else(|| LaftError::Missing {
            what: "oracle label",
            id: id.clone(),
        })?;
        hits += usize::from(truth.get(id.as_str()) == Some(y));
    }
    Ok(Some(hits as f64 / ids.len() as f64))
}

fn partition_row(
    partition: &str,
    epoch: Option<u32>,
    sets: [&IdSet; 3],
    truth: &HashMap<&str, usize>,
    llm: &HashMap<String, usize>,
    overall: f64,
) -> Result<SubsetRow> {
    Ok(SubsetRow {
        partition: partition.into(),
        epoch,
        n_easy: sets[0].len(),
        n_hard: sets[1].len(),
        n_noisy: sets[2].len(),
        acc_easy: llm_accuracy(sets[0], truth, llm)?,
        acc_hard: llm_accuracy(sets[1], truth, llm)?,
        acc_noisy: llm_accuracy(sets[2], truth, llm)?,
        overall,
    })
}

/// Ideal and realized rows of LLM-label accuracy per subset. `train` must
/// carry true labels.
pub fn subset_report(
    realized: &SubsetAssignment,
    train: &Dataset,
    llm_labels: &HashMap<String, usize>,
) -> Result<Vec<SubsetRow>> {
    let mut truth = HashMap::new();
    for s in train.samples() {
        let t = s.true_label.ok_or_else(|| LaftError::Missing {
            what: "flip record",
            id: s.id.clone(),
        })?;
        truth.insert(s.id.as_str(), t);
    }
    let all: IdSet = train.samples().iter().map(|s| s.id.clone()).collect();
    let overall = llm_accuracy(&all, &truth, llm_labels)?.unwrap_or(f64::NAN);
    let (easy, disagreed) = coarse_separate(train, llm_labels)?;
    let (hard, noisy) = ideal_separate(&disagreed, train)?;
    let ideal = partition_row("ideal", None, [&easy, &hard, &noisy], &truth, llm_labels, overall)?;
    let r = Subset::ALL.map(|s| realized.members(s));
    let real = partition_row(
        "realized",
        Some(realized.epoch),
        [&r[0], &r[1], &r[2]],
        &truth,
        llm_labels,
        overall,
    )?;
    Ok(vec![ideal, real])
}

pub fn write_subset_report<W: Write>(rows: &[SubsetRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-epoch mean confidence in the assigned label on clean and flipped samples.
pub fn confidence_dynamics(run: &RunRecord) -> Result<Vec<DynamicsRow>> {
    run.epochs
        .iter()
        .map(|e| {
            if e.conf_clean.is_none() && e.conf_flipped.is_none() {
                return Err(LaftError::Missing {
                    what: "flip record",
                    id: format!("epoch {}", e.epoch),
                });
            }
            Ok(DynamicsRow {
                epoch: e.epoch,
                clean: e.conf_clean,
                flipped: e.conf_flipped,
            })
        })
        .collect()
}

pub fn write_dynamics<W: Write>(rows: &[DynamicsRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "mean_conf_clean", "mean_conf_flipped"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([r.epoch.to_string(), opt(r.clean), opt(r.flipped)])?;
    }
    w.flush()?;
    Ok(())
}

/// Clean train, validation and test sets named by the config.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset, Dataset)> {
    match (&cfg.train, &cfg.val, &cfg.test) {
        (Some(tr), Some(va), Some(te)) => {
            let train = load_dataset(tr, None, SplitTag::Train)?;
            let val = load_dataset(va, Some(train.classes()), SplitTag::Validation)?;
            let test = load_dataset(te, Some(train.classes()), SplitTag::Test)?;
            Ok((train, val, test))
        }
        _ => {
            let spec = cfg.synth_spec();
            Ok((
                spec.generate("tr", cfg.synth_train, SplitTag::Train)?,
                spec.generate("va", cfg.synth_val, SplitTag::Validation)?,
                spec.generate("te", cfg.synth_test, SplitTag::Test)?,
            ))
        }
    }
}

/// Client named by the config.
pub fn build_client(cfg: &ExperimentConfig) -> Result<Box<dyn OracleClient>> {
    Ok(match cfg.oracle_kind()? {
        OracleKind::Simulated => Box::new(
            SimulatedOracle::new(cfg.oracle_accuracy, cfg.oracle_sharpness, cfg.oracle_seed)
                .map_err(|e| LaftError::Config(e.to_string()))?,
        ),
        OracleKind::Http => Box::new(HttpOracle::from_env(cfg.oracle_model.clone())?),
        OracleKind::CacheOnly => Box::new(CacheOnly::new(cfg.oracle_model.clone())),
    })
}

fn flips_from_truth(d: &Dataset) -> Vec<FlipRecord> {
    d.samples()
        .iter()
        .filter_map(|s| match s.true_label {
            Some(t) if t != s.assigned_label => Some(FlipRecord {
                sample_id: s.id.clone(),
                original_label: t,
                flipped_label: s.assigned_label,
            }),
            _ => None,
        })
        .collect()
}

/// Noisy copies of train and validation for one seed.
pub fn apply_noise(
    cfg: &ExperimentConfig,
    train: &Dataset,
    val: &Dataset,
    seed: u64,
) -> Result<(Dataset, Dataset, Vec<FlipRecord>)> {
    let Some(kind) = cfg.noise()? else {
        return Ok((train.clone(), val.clone(), flips_from_truth(train)));
    };
    let map = match (&cfg.noise_map, kind) {
        (Some(p), NoiseKind::An) => Some(noise::load_transition_map(p, train.classes())?),
        _ => None,
    };
    let spec = |tag: u64| NoiseSpec {
        transition_map: map.clone(),
        ..NoiseSpec::new(kind, cfg.noise_ratio, rng::derive(seed, &[0x401e, tag]))
    };
    let (noisy_train, flips) = noise::inject(train, &spec(0))?;
    let (noisy_val, _) = noise::inject(val, &spec(1))?;
    Ok((noisy_train, noisy_val, flips))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Oracle outputs for `train` through the shared cache.
pub fn fetch_for(cfg: &ExperimentConfig, train: &Dataset, client: &dyn OracleClient) -> Result<OracleOutputs> {
    let cache = OracleCache::open(&cfg.cache_dir)?;
    let opts = FetchOptions {
        augmentations: cfg.augmentation_list()?,
        seed: cfg.augment_seed,
        fanout: cfg.fanout,
        ..FetchOptions::default()
    };
    fetch_oracle_outputs(train, &Augmenter::default(), &opts, client, &cache)
}

fn run_seed(
    cfg: &ExperimentConfig,
    data: &(Dataset, Dataset, Dataset),
    seed: u64,
    client: Option<&dyn OracleClient>,
) -> Result<SeedRun> {
    let rundir = cfg.out_dir.join(format!("seed_{seed}"));
    fs::create_dir_all(&rundir)?;
    let tc = cfg.train_config(seed)?;
    fs::write(rundir.join("config.echo"), cfg.echo())?;

    let (train, val, flips) = apply_noise(cfg, &data.0, &data.1, seed).map_err(|e| e.in_stage("noise"))?;
    save_dataset(&train, &rundir.join("train_noisy.csv")).map_err(|e| e.in_stage("noise"))?;
    noise::save_flips(&flips, train.classes(), &rundir.join("flips.csv")).map_err(|e| e.in_stage("noise"))?;

    let oracle = match (tc.method, client) {
        (Method::Laft, Some(c)) => Some(fetch_for(cfg, &train, c).map_err(|e| e.in_stage("oracle"))?),
        (Method::Laft, None) => {
            return Err(LaftError::Config("LAFT needs an oracle client".into()));
        }
        (Method::Base, _) => None,
    };

    let (model, mut record) = fit(&train, &val, oracle.as_ref(), &tc).map_err(|e| e.in_stage("train"))?;
    model.save(create(&rundir.join("model.bin"))?)?;
    let test_accuracy = evaluate_accuracy(&model, &data.2).map_err(|e| e.in_stage("evaluate"))?;
    record.test_accuracy = Some(test_accuracy);
    record.write_metrics_csv(model.linear.num_params(), create(&rundir.join("metrics.csv"))?)?;

    let mut subset_table = Vec::new();
    if let (Some(o), Some(a)) = (&oracle, record.final_assignment()) {
        a.write_csv(create(&rundir.join("subsets.csv"))?)?;
        if train.has_true_labels() {
            subset_table = subset_report(a, &train, &o.llm_labels()).map_err(|e| e.in_stage("report"))?;
            write_subset_report(&subset_table, create(&rundir.join("subset_report.csv"))?)?;
        }
    }
    let dynamics = if train.has_true_labels() {
        let rows = confidence_dynamics(&record).map_err(|e| e.in_stage("report"))?;
        write_dynamics(&rows, create(&rundir.join("confidence_dynamics.csv"))?)?;
        rows
    } else {
        Vec::new()
    };
    Ok(SeedRun {
        seed,
        test_accuracy,
        best_epoch: record.best_epoch,
        epochs_run: record.epochs.len(),
        flips: flips.len(),
        subset_table,
        dynamics,
        rundir,
    })
}

/// Runs every seed with `client` answering oracle queries that miss the cache.
pub fn run_experiment_with_client(cfg: &ExperimentConfig, client: Option<&dyn OracleClient>) -> Result<DiagnosticsReport> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let data = load_data(cfg).map_err(|e| e.in_stage("load"))?;
    let runs = cfg
        .seeds
        .iter()
        .map(|&seed| run_seed(cfg, &data, seed, client))
        .collect::<Result<Vec<_>>>()?;
    let accs: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    let (accuracy_mean, accuracy_std) = mean_std(&accs);
    let report = DiagnosticsReport {
        method: cfg.method.clone(),
        ablation: cfg.ablation.clone(),
        noise_kind: cfg.noise_kind.clone(),
        noise_ratio: cfg.noise_ratio,
        oracle_model: client.map(|c| c.model_id().to_string()),
        runs,
        accuracy_mean,
        accuracy_std,
    };
    serde_json::to_writer_pretty(create(&cfg.out_dir.join("report.json"))?, &report)?;
    let mut w = csv::Writer::from_writer(create(&cfg.out_dir.join("accuracy.csv"))?);
    w.write_record(["seed", "test_accuracy"])?;
    for r in &report.runs {
        w.write_record([r.seed.to_string(), r.test_accuracy.to_string()])?;
    }
    w.write_record(["mean".to_string(), accuracy_mean.to_string()])?;
    w.write_record(["std".to_string(), accuracy_std.to_string()])?;
    w.flush()?;
    Ok(report)
}

/// Runs the experiment with the oracle client named by the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<DiagnosticsReport> {
    cfg.validate()?;
    if cfg.train_config(0)?.method == Method::Base {
        return run_experiment_with_client(cfg, None);
    }
    let client = build_client(cfg)?;
    run_experiment_with_client(cfg, Some(client.as_ref()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub noise_kind: String,
    pub noise_ratio: f64,
    pub method: String,
    pub ablation: String,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub seeds: usize,
}

/// One experiment per `(kind, ratio)`, each under `out_dir/<kind>_<ratio>`;
/// the table is also written to `out_dir/sweep.csv`.
pub fn sweep_noise(
    cfg: &ExperimentConfig,
    kinds: &[NoiseKind],
    ratios: &[f64],
    client: Option<&dyn OracleClient>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &kind in kinds {
        for &ratio in ratios {
            let sub = ExperimentConfig {
                noise_kind: kind.to_string(),
                noise_ratio: ratio,
                out_dir: cfg.out_dir.join(format!("{kind}_{ratio}")),
                ..cfg.clone()
            };
            let report = match client {
                Some(c) => run_experiment_with_client(&sub, Some(c))?,
                None => run_experiment(&sub)?,
            };
            rows.push(SweepRow {
                noise_kind: kind.to_string(),
                noise_ratio: ratio,
                method: report.method,
                ablation: report.ablation,
                accuracy_mean: report.accuracy_mean,
                accuracy_std: report.accuracy_std,
                seeds: report.runs.len(),
            });
        }
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let mut w = csv::Writer::from_writer(create(&cfg.out_dir.join("sweep.csv"))?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}
