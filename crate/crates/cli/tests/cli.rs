use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

const SMALL: &str = "seed = 5\nworkers = 1\n\n[corpus]\nclips_per_task = 2\nmin_secs = 8.0\nmax_secs = 9.0\n";

fn flamenco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flamenco"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("FLAMENCO_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = flamenco(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(args: &[&str]) -> i32 {
    flamenco(args).status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small corpus with GMM models and their annotations, built once.
struct Fixture {
    _dir: TempDir,
    config: PathBuf,
    corpus: PathBuf,
    models: PathBuf,
    ann: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let config = dir.path().join("small.toml");
        std::fs::write(&config, SMALL).unwrap();
        let (corpus, models, ann) = (dir.path().join("corpus"), dir.path().join("models"), dir.path().join("ann"));
        ok(&["--config", s(&config), "synth", "--out", s(&corpus)]);
        ok(&["--config", s(&config), "train", "--data", s(&corpus), "--family", "gmm", "--out", s(&models)]);
        ok(&["--config", s(&config), "annotate", "--models", s(&models), "--family", "gmm", "--data", s(&corpus), "--out", s(&ann)]);
        Fixture { _dir: dir, config, corpus, models, ann }
    })
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["retrieve", "--metric", "cosine", "--annotations", "a", "--metadata", "m", "--out", "o"]), 2);
}

#[test]
fn help_exits_zero() {
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn missing_input_exits_3() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&["train", "--data", "/definitely/not/here", "--out", s(&out)]), 3);
    assert_eq!(code(&["--config", "/no/such/config.toml", "synth", "--out", s(&out)]), 3);
}

#[test]
fn bad_config_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\nno_such_key = true\n").unwrap();
    assert_eq!(code(&["--config", s(&cfg), "synth", "--out", s(&tmp.path().join("o"))]), 2);
    assert_eq!(code(&["--workers", "0", "synth", "--out", s(&tmp.path().join("o"))]), 2);
}

#[test]
fn missing_model_exits_3() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("a");
    // GMM models exist, CNN models do not.
    let args = ["annotate", "--models", s(&f.models), "--family", "cnn", "--data", s(&f.corpus), "--out", s(&out)];
    assert_eq!(code(&args), 3);
}

#[test]
fn too_few_groups_for_folds_exits_5() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("e");
    let args = ["--config", s(&f.config), "evaluate", "--data", s(&f.corpus), "--task", "vocal", "--family", "gmm", "--out", s(&out)];
    assert_eq!(code(&args), 5);
}

#[test]
fn annotations_are_valid_json_and_svg() {
    let f = fixture();
    for id in ["vocal_00", "guitar_01", "palmas_00"] {
        let json: serde_json::Value = serde_json::from_slice(&std::fs::read(f.ann.join(format!("{id}.json"))).unwrap()).unwrap();
        assert_eq!(json["recording_id"], id);
        let segments = json["segments"].as_array().expect("segments array");
        assert!(!segments.is_empty());
        let mut last_end = 0.0;
        for seg in segments {
            let (start, end) = (seg["start"].as_f64().unwrap(), seg["end"].as_f64().unwrap());
            assert!((start - last_end).abs() < 1e-9 && end > start, "{id}: segments must tile the timeline");
            last_end = end;
        }
        let svg = std::fs::read_to_string(f.ann.join(format!("{id}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(f.ann.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "annotate");
}

#[test]
fn retrieval_mrr_is_a_reciprocal_rank() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    let meta = f.corpus.join("metadata.csv");
    ok(&["retrieve", "--annotations", s(&f.ann), "--metadata", s(&meta), "--top-k", "3", "--out", s(&out)]);
    for metric in ["profile", "dtw"] {
        let mut reader = csv::Reader::from_path(out.join(format!("mrr_{metric}.csv"))).unwrap();
        let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 3, "one row per style");
        for row in rows {
            assert_eq!(&row[1], "2");
            let mrr: f64 = row[2].parse().unwrap();
            assert!((0.0..=1.0).contains(&mrr), "{metric}: {mrr}");
        }
    }
    // With 6 recordings, asking for 10 neighbours cannot be satisfied.
    let out = tmp.path().join("r2");
    let args = ["retrieve", "--annotations", s(&f.ann), "--metadata", s(&meta), "--out", s(&out)];
    assert_eq!(code(&args), 2);
}

#[test]
fn analyses_are_idempotent() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let meta = f.corpus.join("metadata.csv");
    for run in ["a", "b"] {
        let base = tmp.path().join(run);
        ok(&["stats", "--annotations", s(&f.ann), "--metadata", s(&meta), "--out", s(&base.join("stats"))]);
        ok(&["--seed", "3", "similarity", "--annotations", s(&f.ann), "--metadata", s(&meta), "--out", s(&base.join("sim"))]);
        ok(&["discover", "--annotations", s(&f.ann), "--metadata", s(&meta), "--out", s(&base.join("disc"))]);
    }
    for sub in ["stats", "sim", "disc"] {
        let a = std::fs::read(tmp.path().join("a").join(sub).join("manifest.json")).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(sub).join("manifest.json")).unwrap();
        assert_eq!(a, b, "{sub} manifests differ");
    }
    let layout: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("a/sim/layout_profile.json")).unwrap()).unwrap();
    assert_eq!(layout.as_array().unwrap().len(), 6);
}

#[test]
fn tonality_writes_templates_and_densities() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("t");
    ok(&["tonality", "--data", s(&f.corpus), "--annotations", s(&f.ann), "--template-style", "vocal-emphasis", "--out", s(&out)]);
    let major = std::fs::read_to_string(out.join("template_major.txt")).unwrap();
    assert!(major.contains("mode=major"));
    let flamenco = std::fs::read_to_string(out.join("template_flamenco.txt")).unwrap();
    assert!(flamenco.contains("mode=flamenco") && flamenco.contains("source=corpus-derived"));
    assert!(out.join("correlations.csv").exists());
}
