use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn laft(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laft"))
        .args(args)
        .current_dir(dir)
        .env_remove("LAFT_LLM_ENDPOINT")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = laft(dir, args);
    assert!(
        out.status.success(),
        "laft {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path) {
    ok(dir, &["data", "synth", "--n", "240", "--seed", "1", "-o", "all.csv"]);
    ok(dir, &["data", "split", "all.csv", "--train-frac", "0.6", "--val-frac", "0.2", "--seed", "2"]);
}

const SMALL: &str = "buckets = 1024\nmax_epochs = 3\nlearning_rate = 0.01\noracle_accuracy = 0.8\ncache_dir = \"cache\"\n";

#[test]
fn data_commands() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let v = ok(dir.path(), &["data", "validate", "train.csv"]);
    assert!(v.contains("144 samples, 4 classes"), "{v}");
    assert!(dir.path().join("val.csv").exists() && dir.path().join("test.csv").exists());
    let bad = laft(dir.path(), &["data", "validate", "missing.csv"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn noise_inject_writes_flips() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = ok(
        dir.path(),
        &["noise", "inject", "train.csv", "--kind", "sn", "--ratio", "0.25", "--seed", "3", "-o", "noisy.csv"],
    );
    assert!(out.starts_with("36 of 144"), "{out}");
    let flips = fs::read_to_string(dir.path().join("noisy.csv.flips.csv")).unwrap();
    assert_eq!(flips.lines().count(), 37);
    assert!(flips.starts_with("sample_id,original_label,flipped_label"));
    let v = ok(dir.path(), &["data", "validate", "noisy.csv"]);
    assert!(v.contains("36 flipped"), "{v}");
    let bad = laft(dir.path(), &["noise", "inject", "train.csv", "--kind", "pair", "--ratio", "0.2", "-o", "x.csv"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn augment_preview_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["augment", "preview", "one two three four five six", "--kind", "random_swap", "--seed", "4", "--rate", "0.5"];
    let a = ok(dir.path(), &args);
    assert_eq!(a, ok(dir.path(), &args));
    assert_eq!(a.split_whitespace().count(), 6);
}

#[test]
fn oracle_fetch_then_offline() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    ok(dir.path(), &["noise", "inject", "train.csv", "--kind", "sn", "--ratio", "0.2", "-o", "noisy.csv"]);
    let first = ok(dir.path(), &["oracle", "fetch", "noisy.csv", "--cache", "c", "--simulate", "--accuracy", "1.0", "--seed", "5"]);
    assert!(first.contains("oracle label accuracy 1.0000"), "{first}");
    let model = first.split("model ").nth(1).unwrap().lines().next().unwrap().to_string();
    let again = ok(dir.path(), &["oracle", "fetch", "noisy.csv", "--cache", "c", "--offline", "--model", &model]);
    assert!(again.contains("144 samples"));
    let cold = laft(dir.path(), &["oracle", "fetch", "noisy.csv", "--cache", "empty", "--offline"]);
    assert_eq!(cold.status.code(), Some(3), "{}", String::from_utf8_lossy(&cold.stderr));
}

#[test]
fn train_writes_rundir_and_separate_emits_partition() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    ok(dir.path(), &["noise", "inject", "train.csv", "--kind", "sn", "--ratio", "0.3", "-o", "noisy.csv"]);
    ok(dir.path(), &["noise", "inject", "val.csv", "--kind", "sn", "--ratio", "0.3", "-o", "noisy_val.csv"]);
    fs::write(dir.path().join("cfg.toml"), SMALL).unwrap();
    let out = ok(
        dir.path(),
        &[
            "train", "--data", "noisy.csv", "--val", "noisy_val.csv", "--test", "test.csv", "--oracle-cache", "cache",
            "--config", "cfg.toml", "--out", "run",
        ],
    );
    assert!(out.contains("test accuracy"), "{out}");
    for f in ["model.bin", "metrics.csv", "config.echo", "subsets.csv"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    let metrics = fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,loss_easy,loss_hard,loss_noisy,loss_total"));
    assert!(metrics.lines().count() >= 2);
    let echo = fs::read_to_string(dir.path().join("run/config.echo")).unwrap();
    assert!(echo.contains("max_epochs = 3"));

    let part = ok(
        dir.path(),
        &["separate", "--epoch", "2", "--config", "cfg.toml", "--data", "noisy.csv", "--model", "run/model.bin"],
    );
    let lines: Vec<&str> = part.lines().collect();
    assert_eq!(lines[0], "sample_id,subset");
    assert_eq!(lines.len(), 146);
    assert!(lines[145].starts_with("#summary,EC="));

    let base = ok(
        dir.path(),
        &[
            "train", "--data", "noisy.csv", "--val", "noisy_val.csv", "--config", "cfg.toml", "--set", "method=base", "--out",
            "base",
        ],
    );
    assert!(base.contains("best epoch"), "{base}");
}

#[test]
fn experiment_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}synth_train = 120\nsynth_val = 40\nsynth_test = 40\nnoise_ratio = 0.3\nseeds = [1, 2]\nout_dir = \"exp\"\n");
    fs::write(dir.path().join("exp.toml"), cfg).unwrap();
    let out = ok(dir.path(), &["experiment", "run", "--config", "exp.toml"]);
    assert!(out.contains("over 2 seeds"), "{out}");
    for f in ["report.json", "accuracy.csv", "seed_1/metrics.csv", "seed_2/confidence_dynamics.csv", "seed_1/subset_report.csv"] {
        assert!(dir.path().join("exp").join(f).exists(), "{f}");
    }
    let report = ok(dir.path(), &["report", "exp"]);
    assert_eq!(report, out);

    let sweep = ok(
        dir.path(),
        &["experiment", "sweep", "--config", "exp.toml", "--set", "method=base", "--kinds", "sn,an", "--ratios", "0,0.4"],
    );
    assert_eq!(sweep.lines().count(), 4);
    assert!(dir.path().join("exp/sweep.csv").exists());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "no_such_key = 3\n").unwrap();
    assert_eq!(laft(dir.path(), &["experiment", "run", "--config", "bad.toml"]).status.code(), Some(1));
    assert_eq!(
        laft(dir.path(), &["experiment", "run", "--set", "ablation=no_llm"]).status.code(),
        Some(1)
    );
    assert_eq!(laft(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(laft(dir.path(), &["--help"]).status.code(), Some(0));
}
