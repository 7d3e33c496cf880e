use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "\
[synth]
n_samples = 120
n_features = 30
n_clusters = 3
hazards = 1, 2, 3

[model]
hidden = 32
latent_dim = 8
slots = 4
codebook_size = 8
epochs = 5
batch_size = 32

[cluster]
k = 3

[analysis]
tsne_iterations = 250
perplexity = 10
";

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("subtype-cli-test-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn subtype(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subtype")).args(args).output().unwrap()
}

fn config(dir: &Path, text: &str) -> String {
    let path = dir.join("small.ini");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {text}");
    serde_json::from_str(lines[0]).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pipeline_writes_contract_and_reruns_identically() {
    let dir = scratch("pipeline");
    let cfg = config(&dir, SMALL);
    let (a, b) = (dir.join("a"), dir.join("b"));
    for run in [&a, &b] {
        let out = subtype(&["pipeline", "--config", &cfg, "--out", run.to_str().unwrap(), "--seed", "3"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let status: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(status["status"], "ok");
    }
    for name in ["latents.tsv", "clusters.tsv", "metrics.json", "pca.svg", "tsne.svg", "km.tsv", "logrank.json"] {
        assert!(a.join(name).is_file(), "missing {name}");
    }
    let mut compared = 0;
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().into_owned();
        if name == "manifest.json" {
            continue;
        }
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name} differs");
        compared += 1;
    }
    assert!(compared > 10);

    let manifest = read_json(&a.join("manifest.json"));
    assert_eq!(manifest["command"], "pipeline");
    assert_eq!(manifest["seeds"]["root"], 3);
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert!(manifest["modules"]["subtype-core"].is_string());
    let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(outputs.contains(&"clusters.tsv"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = scratch("echo");
    let cfg = config(&dir, SMALL);
    let first = dir.join("first");
    let out = subtype(&["cluster", "--config", &cfg, "--out", first.to_str().unwrap(), "--seed", "11"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo = first.join("config.ini");
    let second = dir.join("second");
    let out = subtype(&["cluster", "--config", echo.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(first.join("clusters.tsv")).unwrap(), fs::read(second.join("clusters.tsv")).unwrap());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn evaluate_with_truth_reports_all_metrics() {
    let dir = scratch("evaluate");
    let cfg = config(&dir, SMALL);
    let clustered = dir.join("clustered");
    let out = subtype(&["cluster", "--config", &cfg, "--out", clustered.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let clusters = format!("input.clusters={}", clustered.join("clusters.tsv").display());
    let eval = dir.join("eval");
    let out = subtype(&["evaluate", "--config", &cfg, "--set", &clusters, "--out", eval.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = read_json(&eval.join("metrics.json"));
    for key in ["nmi", "purity", "silhouette", "ari"] {
        assert!(metrics.to_string().contains(&format!("\"{key}\"")), "{key} absent: {metrics}");
    }
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn config_errors_are_listed_together() {
    let dir = scratch("badcfg");
    let cfg = config(&dir, "[model]\nepochs = 0\nbeta = -1\nmystery = 1\n\n[cluster]\nk = 1\n");
    let out = subtype(&["train", "--config", &cfg, "--out", dir.join("run").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["problems"].as_array().unwrap().len() >= 4, "{err}");
    assert!(!dir.join("run").exists(), "no work before validation");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn missing_input_and_usage_errors_are_single_json_lines() {
    let dir = scratch("errors");
    let out = subtype(&["enrich", "--out", dir.join("run").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "missing_input");

    let out = subtype(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = subtype(&["train", "--config", dir.join("absent.ini").to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
    stderr_json(&out);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn outputs_never_overwrite_inputs() {
    let dir = scratch("protect");
    let cfg = config(&dir, SMALL);
    let synth = dir.join("synth");
    let out = subtype(&["synth", "--config", &cfg, "--out", synth.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let expression = synth.join("expression.tsv");
    let before = fs::read(&expression).unwrap();
    let set = format!("input.expression={}", expression.display());
    let out = subtype(&["synth", "--config", &cfg, "--set", &set, "--out", synth.to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
    assert_eq!(fs::read(&expression).unwrap(), before);
    let _ = fs::remove_dir_all(&dir);
}
