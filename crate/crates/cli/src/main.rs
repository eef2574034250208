use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use laft_core::augment::{default_augmentations, Augmentation, AugmentationKind, Augmenter};
use laft_core::corpus::{load_dataset, save_dataset, split_dataset, Dataset, SplitTag};
use laft_core::harness::{self, build_client, fetch_for, run_experiment, sweep_noise, ExperimentConfig, SynthSpec};
use laft_core::noise::{self, NoiseKind, NoiseSpec};
use laft_core::oracle::{fetch_oracle_outputs, CacheOnly, FetchOptions, OracleCache, OracleClient, SimulatedOracle};
use laft_core::separate::{coarse_separate, fine_separate, SubsetAssignment};
use laft_core::trainer::{evaluate_accuracy, fit, Classifier, Method, TextClassifier};
use laft_core::{LaftError, Result};

#[derive(Parser)]
#[command(name = "laft", version, about = "Train text classifiers on noisy labels with LLM-guided sample separation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect, split or generate datasets.
    #[command(subcommand)]
    Data(DataCmd),
    /// Corrupt labels of a clean dataset.
    #[command(subcommand)]
    Noise(NoiseCmd),
    /// Preview text augmentations.
    #[command(subcommand)]
    Augment(AugmentCmd),
    /// Query and cache oracle confidences.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Write the EC/HC/TN partition at one epoch.
    Separate(SeparateArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Run configured experiments.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    /// Summarize an experiment directory.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum DataCmd {
    /// Load a dataset and print its shape.
    Validate { path: PathBuf },
    /// Split into train/val (and the remainder as test).
    Split {
        path: PathBuf,
        #[arg(long)]
        train_frac: f64,
        #[arg(long)]
        val_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Generate a separable synthetic corpus.
    Synth {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "s")]
        prefix: String,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum NoiseCmd {
    /// Writes `<out>` and `<out>.flips.csv`.
    Inject {
        input: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `from,to` CSV for asymmetric noise.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AugmentCmd {
    Preview {
        text: String,
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        rate: f64,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Query every sample (original text plus views) through the cache.
    Fetch(FetchArgs),
}

#[derive(Args)]
struct FetchArgs {
    data: PathBuf,
    /// Model id sent to the endpoint (ignored with --simulate).
    #[arg(long, default_value = "gpt-4")]
    model: String,
    #[arg(long, default_value_t = 4)]
    views: usize,
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    simulate: bool,
    #[arg(long, default_value_t = 0.75)]
    accuracy: f64,
    #[arg(long, default_value_t = laft_core::oracle::simulated::DEFAULT_SHARPNESS)]
    sharpness: f64,
    /// Seeds the simulated oracle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seeds the augmented views.
    #[arg(long, default_value_t = 0)]
    augment_seed: u64,
    /// Serve from the cache only.
    #[arg(long)]
    offline: bool,
    #[arg(long, default_value_t = 4)]
    fanout: usize,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML key-value file).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set noise_ratio=0.4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, extra: Vec<String>) -> Result<ExperimentConfig> {
        let overrides: Vec<String> = extra.into_iter().chain(self.overrides.iter().cloned()).collect();
        match &self.config {
            Some(p) => ExperimentConfig::load(p, &overrides),
            None => ExperimentConfig::from_toml_str("", &overrides),
        }
    }
}

fn path_override(key: &str, p: &Path) -> String {
    format!("{key}={}", toml_string(&p.to_string_lossy()))
}

fn toml_string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

#[derive(Args)]
struct SeparateArgs {
    #[arg(long)]
    epoch: u32,
    #[command(flatten)]
    config: ConfigArgs,
    /// Training data; defaults to the config's `train`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Classifier for the confidences; an untrained model otherwise.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    oracle_cache: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// inject -> oracle -> train -> evaluate for every seed.
    Run(ConfigArgs),
    /// One experiment per (noise kind, ratio).
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "sn,an,idn")]
        kinds: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6")]
        ratios: Vec<f64>,
    },
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment output directory holding `report.json`.
    dir: PathBuf,
}

fn stdout_or(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn data_cmd(cmd: DataCmd) -> Result<()> {
    match cmd {
        DataCmd::Validate { path } => {
            let d = load_dataset(&path, None, SplitTag::Train)?;
            println!("{}: {} samples, {} classes", path.display(), d.len(), d.num_classes());
            for (i, name) in d.classes().names().iter().enumerate() {
                let n = d.samples().iter().filter(|s| s.assigned_label == i).count();
                println!("  {name}\t{n}");
            }
            if d.has_true_labels() {
                let flipped = d.samples().iter().filter(|s| s.is_flipped() == Some(true)).count();
                println!("true labels present; {flipped} flipped");
            }
        }
        DataCmd::Split {
            path,
            train_frac,
            val_frac,
            seed,
            out_dir,
        } => {
            let d = load_dataset(&path, None, SplitTag::Train)?;
            let (train, val) = split_dataset(&d, train_frac, val_frac, seed)?;
            fs::create_dir_all(&out_dir)?;
            save_dataset(&train, &out_dir.join("train.csv"))?;
            save_dataset(&val, &out_dir.join("val.csv"))?;
            let used: HashSet<&str> = train.samples().iter().chain(val.samples()).map(|s| s.id.as_str()).collect();
            let rest: Vec<_> = d.samples().iter().filter(|s| !used.contains(s.id.as_str())).cloned().collect();
            let n_rest = rest.len();
            if n_rest > 0 {
                save_dataset(&Dataset::new(rest, d.classes().clone(), SplitTag::Test)?, &out_dir.join("test.csv"))?;
            }
            println!("train {}, val {}, test {n_rest} -> {}", train.len(), val.len(), out_dir.display());
        }
        DataCmd::Synth {
            n,
            classes,
            seed,
            prefix,
            out,
        } => {
            let spec = SynthSpec {
                n_classes: classes,
                seed,
                ..SynthSpec::default()
            };
            save_dataset(&spec.generate(&prefix, n, SplitTag::Train)?, &out)?;
        }
    }
    Ok(())
}

fn noise_cmd(cmd: NoiseCmd) -> Result<()> {
    let NoiseCmd::Inject {
        input,
        kind,
        ratio,
        seed,
        map,
        out,
    } = cmd;
    let kind: NoiseKind = kind.parse().map_err(|e: LaftError| LaftError::Config(e.to_string()))?;
    let d = load_dataset(&input, None, SplitTag::Train)?;
    let mut spec = NoiseSpec::new(kind, ratio, seed);
    if let Some(p) = map {
        spec.transition_map = Some(noise::load_transition_map(&p, d.classes())?);
    }
    let (noisy, flips) = noise::inject(&d, &spec).map_err(|e| e.in_stage("noise"))?;
    save_dataset(&noisy, &out)?;
    let mut flips_path = out.clone().into_os_string();
    flips_path.push(".flips.csv");
    noise::save_flips(&flips, d.classes(), Path::new(&flips_path))?;
    println!("{} of {} labels flipped ({kind})", flips.len(), d.len());
    Ok(())
}

fn augment_cmd(cmd: AugmentCmd) -> Result<()> {
    let AugmentCmd::Preview { text, kind, seed, rate } = cmd;
    let kind: AugmentationKind = kind.parse()?;
    println!("{}", Augmenter::default().augment(&text, Augmentation::new(kind, rate)?, seed)?);
    Ok(())
}

fn oracle_cmd(cmd: OracleCmd) -> Result<()> {
    let OracleCmd::Fetch(a) = cmd;
    let d = load_dataset(&a.data, None, SplitTag::Train)?;
    let cache = OracleCache::open(&a.cache)?;
    let client: Box<dyn OracleClient> = if a.offline {
        Box::new(CacheOnly::new(a.model.clone()))
    } else if a.simulate {
        Box::new(SimulatedOracle::new(a.accuracy, a.sharpness, a.seed)?)
    } else {
        Box::new(laft_core::oracle::HttpOracle::from_env(a.model.clone())?)
    };
    let kinds = default_augmentations();
    let augmentations: Vec<Augmentation> = (0..a.views).map(|m| kinds[m % kinds.len()]).collect();
    let opts = FetchOptions {
        augmentations,
        seed: a.augment_seed,
        fanout: a.fanout,
        ..FetchOptions::default()
    };
    let out = fetch_oracle_outputs(&d, &Augmenter::default(), &opts, client.as_ref(), &cache)
        .map_err(|e| e.in_stage("oracle"))?;
    println!("{} samples, {} views each, model {}", out.len(), a.views, client.model_id());
    if d.has_true_labels() {
        let hits = d
            .samples()
            .iter()
            .filter(|s| out.get(&s.id).map(|o| o.llm_label) == s.true_label)
            .count();
        println!("oracle label accuracy {:.4}", hits as f64 / d.len() as f64);
    }
    Ok(())
}

fn separate_cmd(a: SeparateArgs) -> Result<()> {
    let cfg = a.config.load(Vec::new())?;
    let path = a
        .data
        .or(cfg.train.clone())
        .ok_or_else(|| LaftError::Config("no training data: pass --data or set `train`".into()))?;
    let train = load_dataset(&path, None, SplitTag::Train)?;
    let client = build_client(&cfg)?;
    let outputs = fetch_for(&cfg, &train, client.as_ref()).map_err(|e| e.in_stage("oracle"))?;
    let tc = cfg.train_config(cfg.seeds[0])?;
    let model = match &a.model {
        Some(p) => TextClassifier::load(File::open(p)?)?,
        None => TextClassifier::new(tc.featurizer(), train.num_classes()),
    };
    if model.num_classes() != train.num_classes() {
        return Err(LaftError::Config("model and data disagree on the number of classes".into()));
    }
    let clf: HashMap<_, _> = train
        .samples()
        .iter()
        .map(|s| (s.id.clone(), model.confidence(&s.text)))
        .collect();
    let (easy, disagreed) = coarse_separate(&train, &outputs.llm_labels())?;
    let agg = outputs.aggregated();
    let with_llm = tc.ablation != laft_core::Ablation::NoFine;
    let (hard, noisy) = fine_separate(&disagreed, with_llm.then_some(&agg), &clf, &tc.schedule, a.epoch)?;
    SubsetAssignment::new(&train, a.epoch, &easy, &hard, &noisy)?.write_csv(stdout_or(a.out.as_deref())?)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut extra = vec![path_override("train", &a.data), path_override("val", &a.val)];
    extra.push(path_override("test", a.test.as_ref().unwrap_or(&a.val)));
    if let Some(c) = &a.oracle_cache {
        extra.push(path_override("cache_dir", c));
    }
    let cfg = a.config.load(extra)?;
    let tc = cfg.train_config(cfg.seeds[0])?;
    let train = load_dataset(&a.data, None, SplitTag::Train)?;
    let val = load_dataset(&a.val, Some(train.classes()), SplitTag::Validation)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("config.echo"), cfg.echo())?;
    let outputs = match tc.method {
        Method::Laft => {
            let client = build_client(&cfg)?;
            Some(fetch_for(&cfg, &train, client.as_ref()).map_err(|e| e.in_stage("oracle"))?)
        }
        Method::Base => None,
    };
    let (model, mut record) = fit(&train, &val, outputs.as_ref(), &tc).map_err(|e| e.in_stage("train"))?;
    model.save(BufWriter::new(File::create(a.out.join("model.bin"))?))?;
    if let Some(t) = &a.test {
        let test = load_dataset(t, Some(train.classes()), SplitTag::Test)?;
        let acc = evaluate_accuracy(&model, &test).map_err(|e| e.in_stage("evaluate"))?;
        record.test_accuracy = Some(acc);
        println!("test accuracy {acc:.4}");
    }
    record.write_metrics_csv(model.linear.num_params(), BufWriter::new(File::create(a.out.join("metrics.csv"))?))?;
    if let Some(last) = record.final_assignment() {
        last.write_csv(BufWriter::new(File::create(a.out.join("subsets.csv"))?))?;
    }
    println!(
        "{} epochs, best epoch {:?}, best validation accuracy {:.4}",
        record.epochs.len(),
        record.best_epoch,
        record.best_val_accuracy.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn print_report(r: &harness::DiagnosticsReport) {
    println!(
        "{} ({}) {} {}: accuracy {:.4} +- {:.4} over {} seeds",
        r.method,
        r.ablation,
        r.noise_kind,
        r.noise_ratio,
        r.accuracy_mean,
        r.accuracy_std,
        r.runs.len()
    );
    let pct = |v: Option<f64>| v.map(|x| format!("{:.2}", 100.0 * x)).unwrap_or_else(|| "-".into());
    for run in &r.runs {
        for row in &run.subset_table {
            println!(
                "  seed {} {:<8} EC {} ({})  HC {} ({})  TN {} ({})  overall {:.2}",
                run.seed,
                row.partition,
                pct(row.acc_easy),
                row.n_easy,
                pct(row.acc_hard),
                row.n_hard,
                pct(row.acc_noisy),
                row.n_noisy,
                100.0 * row.overall
            );
        }
    }
}

fn experiment_cmd(cmd: ExperimentCmd) -> Result<()> {
    match cmd {
        ExperimentCmd::Run(c) => {
            let cfg = c.load(Vec::new())?;
            print_report(&run_experiment(&cfg)?);
        }
        ExperimentCmd::Sweep { config, kinds, ratios } => {
            let cfg = config.load(Vec::new())?;
            let kinds: Vec<NoiseKind> = kinds
                .iter()
                .map(|k| k.parse().map_err(|e: LaftError| LaftError::Config(e.to_string())))
                .collect::<Result<_>>()?;
            for row in sweep_noise(&cfg, &kinds, &ratios, None)? {
                println!(
                    "{}\t{}\t{:.4}\t{:.4}",
                    row.noise_kind, row.noise_ratio, row.accuracy_mean, row.accuracy_std
                );
            }
        }
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let path = a.dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| LaftError::Load {
        path: path.clone(),
        message: e.to_string(),
    })?;
    print_report(&harness::DiagnosticsReport::from_json(&text)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Data(c) => data_cmd(c),
        Command::Noise(c) => noise_cmd(c),
        Command::Augment(c) => augment_cmd(c),
        Command::Oracle(c) => oracle_cmd(c),
        Command::Separate(a) => separate_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Experiment(c) => experiment_cmd(c),
        Command::Report(a) => report_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
