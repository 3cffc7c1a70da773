use std::path::{Path, PathBuf};
use std::process::Command;

use csd_bench::cli::run_cli;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn csd(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["csd"];
    argv.extend_from_slice(args);
    let code = run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn train(dir: &Path, order: usize) -> String {
    let out = dir.join(format!("m{order}.json"));
    let (code, _, err) = csd(&[
        "train",
        "--order",
        &order.to_string(),
        "--corpus",
        data("train.txt").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    out.to_str().unwrap().to_string()
}

#[test]
fn train_then_run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let m3 = train(dir.path(), 3);
    let m2 = train(dir.path(), 2);
    let prompt = "Q: Maria has 4 apples. Maria buys 3 more apples at the park. How many apples does Maria have now? A:";
    let args = |mode: &str, seed: &str| {
        vec![
            "run".to_string(),
            "--target".into(),
            m3.clone(),
            "--draft".into(),
            m2.clone(),
            "--k".into(),
            "4".into(),
            "--mode".into(),
            mode.into(),
            "--seed".into(),
            seed.into(),
            "--prompt".into(),
            prompt.into(),
        ]
    };
    let run = |mode: &str, seed: &str| {
        let a = args(mode, seed);
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        csd(&refs)
    };
    let (code, first, err) = run("sampling", "11");
    assert_eq!(code, 0, "{err}");
    assert!(first.starts_with(prompt));
    assert!(first.contains("tokens emitted"));
    assert_eq!(run("sampling", "11").1, first);

    // Greedy speculative output equals greedy target-only output.
    let (_, sd_text, _) = run("greedy", "1");
    let (code, ar_text, _) = csd(&["run", "--target", &m3, "--seed", "5", "--prompt", prompt]);
    assert_eq!(code, 0);
    assert_eq!(sd_text.lines().next(), ar_text.lines().next());
}

#[test]
fn run_with_cascade_k_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let m3 = train(dir.path(), 3);
    let m2 = train(dir.path(), 2);
    let mag = dir.path().join("mag.json");
    let (code, _, err) = csd(&[
        "train",
        "--type",
        "mag",
        "--corpus",
        data("train.txt").to_str().unwrap(),
        "--out",
        mag.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let (code, out, err) = csd(&[
        "run",
        "--target",
        &m3,
        "--draft",
        &m2,
        "--draft",
        mag.to_str().unwrap(),
        "--k-matrix",
        "[[2,10],[0,10]]",
        "--lenience",
        "3",
        "--seed",
        "0",
        "--prompt",
        "Q: Omar has 9 coins. A:",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("mag="), "{out}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(csd(&["frobnicate"]).0, 2);
    assert_eq!(csd(&["run", "--bogus"]).0, 2);
    // --seed is mandatory for run and bench.
    assert_eq!(csd(&["run", "--target", "m.json", "--prompt", "x"]).0, 2);
    assert_eq!(csd(&["bench", "--config", "b.json"]).0, 2);
    assert_eq!(csd(&["--help"]).0, 0);
}

#[test]
fn config_errors_exit_two_and_runtime_errors_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"corpus\": 3}").unwrap();
    let (code, _, err) = csd(&["bench", "--config", bad.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(code, 2, "{err}");
    let (code, _, _) = csd(&["bench", "--config", "/no/such/bench.json", "--seed", "1"]);
    assert_eq!(code, 2);

    // A readable config whose corpus file is missing fails at run time.
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"corpus": {"train": "missing.txt", "eval": "missing.txt", "prompts": 1},
            "models": [{"name": "m", "type": "ngram", "order": 2}],
            "runs": [{"label": "ar", "method": "autoregressive", "target": "m", "mode": "greedy", "max_new_tokens": 4, "seed": 1}]}"#,
    )
    .unwrap();
    let (code, _, err) = csd(&["bench", "--config", cfg.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("missing.txt"), "{err}");

    // Unknown model reference is a config error.
    std::fs::write(
        &cfg,
        r#"{"corpus": {"train": "missing.txt", "eval": "missing.txt", "prompts": 1},
            "models": [{"name": "m", "type": "ngram", "order": 2}],
            "runs": [{"label": "ar", "method": "autoregressive", "target": "nope", "mode": "greedy", "max_new_tokens": 4, "seed": 1}]}"#,
    )
    .unwrap();
    let (code, _, err) = csd(&["bench", "--config", cfg.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(code, 2);
    assert!(err.contains("nope"), "{err}");
}

#[test]
fn accept_curve_writes_thirty_positions() {
    let dir = tempfile::tempdir().unwrap();
    let m5 = train(dir.path(), 5);
    let m2 = train(dir.path(), 2);
    let (code, out, err) = csd(&[
        "accept-curve",
        "--target",
        &m5,
        "--draft",
        &m2,
        "--k",
        "30",
        "--steps",
        "200",
        "--prompts",
        data("eval.txt").to_str().unwrap(),
        "--delimiter",
        "A:",
    ]);
    assert_eq!(code, 0, "{err}");
    let lines: Vec<_> = out.lines().collect();
    assert!(lines[0].starts_with("position,accept_rate,n"));
    assert_eq!(lines.len(), 31);
}

#[test]
fn analyze_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("grid.json");
    std::fs::write(
        &spec,
        r#"{"analysis": "sd_grid", "alpha": [0.6, 0.8], "c": [0.0], "k": [3, 5], "simulate": {"trials": 20000, "seed": 1}}"#,
    )
    .unwrap();
    let (code, out, err) = csd(&["analyze", "--spec", spec.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(lines[0], "alpha,c,k,ewif,simulated,ci95");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0.6,0,3,2.176"), "{}", lines[1]);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_csd");
    let status = Command::new(bin).arg("nonsense").output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(!status.stderr.is_empty());
    let status = Command::new(bin).arg("--version").output().unwrap();
    assert_eq!(status.status.code(), Some(0));
}
