use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ringfit::data::io::{read_predictions, read_sparse};
use ringfit::{Checkpoint, EngineState};

fn ringfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringfit"))
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ringfit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    ringfit(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate_small(dir: &Path, kind: &str) {
    ok(&[
        "simulate",
        "--shape",
        "6,5,4",
        "--rank",
        "2",
        "--missing",
        "0.3",
        "--kind",
        kind,
        "--seed",
        "4",
        "--out",
        s(dir),
    ]);
}

fn gibbs_fit(data: &Path, out: &Path, samples: &str, extra: &[&str]) {
    let mut args = vec![
        "fit",
        "--engine",
        "gibbs",
        "--data",
        s(data),
        "--out",
        s(out),
        "--rank",
        "2",
        "--burn-in",
        "20",
        "--samples",
        samples,
    ];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_writes_split_truth_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "simulate",
        "--shape",
        "10,10,10,10",
        "--rank",
        "5",
        "--snr",
        "20",
        "--missing",
        "0.1",
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    let train = read_sparse(dir.path().join("train.txt")).unwrap();
    let test = read_sparse(dir.path().join("test.txt")).unwrap();
    assert_eq!(train.len() + test.len(), 10_000);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
    assert!(dir.path().join("truth.json").exists());
}

#[test]
fn simulate_binary() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "simulate",
        "--kind",
        "binary",
        "--shape",
        "20,20,20",
        "--rank",
        "3",
        "--missing",
        "0.5",
        "--out",
        s(dir.path()),
    ]);
    let train = read_sparse(dir.path().join("train.txt")).unwrap();
    assert!(train.values().iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&["simulate", "--rank", "2", "--out", s(dir.path())]),
        2
    );
    assert_eq!(
        code(&[
            "simulate",
            "--shape",
            "3,3",
            "--rank",
            "0",
            "--out",
            s(dir.path())
        ]),
        2
    );
    simulate_small(dir.path(), "continuous");
    let data = dir.path().join("train.txt");
    let out = dir.path().join("fit");
    assert_eq!(
        code(&[
            "fit",
            "--engine",
            "nonsense",
            "--data",
            s(&data),
            "--out",
            s(&out)
        ]),
        2
    );
    assert_eq!(code(&["fit", "--data", s(&data), "--out", s(&out)]), 2);
    assert_eq!(
        code(&[
            "fit",
            "--engine",
            "gibbs",
            "--data",
            s(&data),
            "--out",
            s(&out),
            "--a0",
            "-1"
        ]),
        2
    );
}

#[test]
fn unreadable_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let out = dir.path().join("fit");
    assert_eq!(
        code(&[
            "fit",
            "--engine",
            "gibbs",
            "--data",
            s(&missing),
            "--out",
            s(&out)
        ]),
        3
    );
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "shape 2 2\nkind binary\n1 1 2\n").unwrap();
    assert_eq!(
        code(&[
            "fit",
            "--engine",
            "online",
            "--data",
            s(&bad),
            "--out",
            s(&out)
        ]),
        3
    );
}

#[test]
fn gibbs_fit_outputs_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "continuous");
    let data = dir.path().join("train.txt");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    gibbs_fit(&data, &a, "5", &[]);
    gibbs_fit(&data, &b, "5", &["--threads", "1"]);
    for f in ["checkpoint.json", "ranks.txt", "train_metrics.txt"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let ranks = fs::read_to_string(a.join("ranks.txt")).unwrap();
    assert_eq!(ranks.lines().count(), 25);
    assert_eq!(
        fs::read_to_string(a.join("log.jsonl"))
            .unwrap()
            .lines()
            .count(),
        25
    );
    let metrics = fs::read_to_string(a.join("train_metrics.txt")).unwrap();
    assert!(metrics.contains("rmse = ") && metrics.contains("ranks = "));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["config"]["gibbs"]["a0"], 2.0);
    assert_eq!(manifest["config"]["gibbs"]["beta0"], 0.3);
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "continuous");
    let data = dir.path().join("train.txt");
    let cfg = dir.path().join("fit.toml");
    fs::write(
        &cfg,
        "initial_rank = 3\n[gibbs]\nburn_in = 7\nn_samples = 2\n",
    )
    .unwrap();
    let out = dir.path().join("fit");
    ok(&[
        "fit",
        "--engine",
        "gibbs",
        "--data",
        s(&data),
        "--out",
        s(&out),
        "--config",
        s(&cfg),
        "--burn-in",
        "4",
    ]);
    let ranks = fs::read_to_string(out.join("ranks.txt")).unwrap();
    assert_eq!(ranks.lines().count(), 6);

    fs::write(&cfg, "[gibbs]\nburnin = 7\n").unwrap();
    assert_eq!(
        code(&[
            "fit",
            "--engine",
            "gibbs",
            "--data",
            s(&data),
            "--out",
            s(&out),
            "--config",
            s(&cfg)
        ]),
        3
    );
}

#[test]
fn predict_single_sample_matches_entry() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "continuous");
    let data = dir.path().join("train.txt");
    let test = dir.path().join("test.txt");
    let fit = dir.path().join("fit");
    let pred = dir.path().join("pred.txt");
    gibbs_fit(&data, &fit, "1", &["--no-standardize"]);
    let ckpt_path = fit.join("checkpoint.json");
    ok(&[
        "predict",
        "--checkpoint",
        s(&ckpt_path),
        "--indices",
        s(&test),
        "--out",
        s(&pred),
    ]);
    assert!(dir.path().join("pred.txt.manifest.json").exists());

    let ckpt = Checkpoint::load(&ckpt_path).unwrap();
    let EngineState::Gibbs(g) = &ckpt.engine else {
        panic!("gibbs checkpoint")
    };
    assert_eq!(g.samples.models.len(), 1);
    let preds = read_predictions(&pred).unwrap();
    let at = read_sparse(&test).unwrap();
    assert_eq!(preds.len(), at.len());
    for n in 0..at.len() {
        let direct = g.samples.models[0].eval_entry(at.index(n)).unwrap();
        assert_eq!(preds.values[n], direct);
    }
}

#[test]
fn predict_averages_retained_samples() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "continuous");
    let data = dir.path().join("train.txt");
    let test = dir.path().join("test.txt");
    let fit = dir.path().join("fit");
    let pred = dir.path().join("pred.txt");
    gibbs_fit(&data, &fit, "2", &[]);
    let ckpt_path = fit.join("checkpoint.json");
    ok(&[
        "predict",
        "--checkpoint",
        s(&ckpt_path),
        "--indices",
        s(&test),
        "--out",
        s(&pred),
    ]);

    let ckpt = Checkpoint::load(&ckpt_path).unwrap();
    let EngineState::Gibbs(g) = &ckpt.engine else {
        panic!("gibbs checkpoint")
    };
    let t = ckpt
        .transform
        .expect("continuous fits are standardized by default");
    let preds = read_predictions(&pred).unwrap();
    let at = read_sparse(&test).unwrap();
    for n in 0..at.len() {
        let a = g.samples.models[0].eval_entry(at.index(n)).unwrap();
        let b = g.samples.models[1].eval_entry(at.index(n)).unwrap();
        let expected = t.inverse((a + b) / 2.0);
        assert!((preds.values[n] - expected).abs() < 1e-12);
    }
}

#[test]
fn binary_pipeline_probabilities_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "binary");
    let data = dir.path().join("train.txt");
    let test = dir.path().join("test.txt");
    let fit = dir.path().join("fit");
    let pred = dir.path().join("pred.txt");
    gibbs_fit(&data, &fit, "5", &[]);
    ok(&[
        "predict",
        "--checkpoint",
        s(&fit.join("checkpoint.json")),
        "--indices",
        s(&test),
        "--out",
        s(&pred),
    ]);
    let text = fs::read_to_string(&pred).unwrap();
    for line in text.lines().skip(2) {
        let p: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
        assert!(p > 0.0 && p < 1.0);
    }
    let report = dir.path().join("report.txt");
    let out = ok(&[
        "eval",
        "--predictions",
        s(&pred),
        "--test",
        s(&test),
        "--truth",
        s(&dir.path().join("truth.json")),
        "--checkpoint",
        s(&fit.join("checkpoint.json")),
        "--out",
        s(&report),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("auc = ") && stdout.contains("acc = ") && stdout.contains("rank_err = ")
    );
    assert_eq!(fs::read_to_string(&report).unwrap(), stdout);
}

#[test]
fn eval_reports_missing_prediction() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "continuous");
    let test = dir.path().join("test.txt");
    let pred = dir.path().join("pred.txt");
    fs::write(&pred, "shape 6 5 4\nkind continuous\n1 1 1 0.5\n").unwrap();
    assert_eq!(
        code(&["eval", "--predictions", s(&pred), "--test", s(&test)]),
        2
    );
}

#[test]
fn online_fit_logs_iterations() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "continuous");
    let data = dir.path().join("train.txt");
    let fit = dir.path().join("fit");
    ok(&[
        "fit",
        "--engine",
        "online",
        "--data",
        s(&data),
        "--out",
        s(&fit),
        "--rank",
        "2",
        "--batch-size",
        "16",
        "--epochs",
        "3",
        "--step-size",
        "0.01",
    ]);
    let n = read_sparse(&data).unwrap().len();
    let per_epoch = n.div_ceil(16);
    let log = fs::read_to_string(fit.join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3 * per_epoch);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert!(first["free_energy"].is_f64());
    assert_eq!(
        fs::read_to_string(fit.join("ranks.txt"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    assert_eq!(
        Checkpoint::load(fit.join("checkpoint.json"))
            .unwrap()
            .engine_name(),
        "online"
    );
}

#[test]
fn resuming_a_finished_fit_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "continuous");
    let data = dir.path().join("train.txt");
    let a = dir.path().join("a");
    gibbs_fit(&data, &a, "5", &[]);
    let b = dir.path().join("b");
    let ckpt = a.join("checkpoint.json");
    ok(&[
        "fit",
        "--data",
        s(&data),
        "--out",
        s(&b),
        "--resume",
        s(&ckpt),
    ]);
    assert_eq!(
        fs::read(&ckpt).unwrap(),
        fs::read(b.join("checkpoint.json")).unwrap()
    );
    assert_eq!(
        code(&[
            "fit",
            "--engine",
            "online",
            "--data",
            s(&data),
            "--out",
            s(&b),
            "--resume",
            s(&ckpt)
        ]),
        2
    );
}

#[test]
fn bench_single_size_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("bench.txt");
    let out = ok(&[
        "bench",
        "--sizes",
        "6",
        "--order",
        "3",
        "--missing",
        "0.5",
        "--repeats",
        "1",
        "--out",
        s(&table),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("size observed"));
    assert!(lines[1].starts_with("6 "));
    assert!(dir.path().join("bench.txt.manifest.json").exists());
}
