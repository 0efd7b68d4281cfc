use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn mock_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/mock")
}

/// The demo config with paths made absolute and `edit` applied, written to `dir`.
fn config_variant(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let text = std::fs::read_to_string(mock_dir().join("run.toml")).unwrap();
    let m = mock_dir();
    let text = text
        .replace(
            "seekers = \"seekers\"",
            &format!("seekers = {:?}", m.join("seekers").display().to_string()),
        )
        .replace(
            "events = \"events.jsonl\"",
            &format!("events = {:?}", m.join("events.jsonl").display().to_string()),
        );
    let path = dir.join("run.toml");
    std::fs::write(&path, edit(text)).unwrap();
    path
}

fn seekersim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seekersim")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn simulate(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    seekersim(&args)
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn lines(p: impl AsRef<Path>) -> Vec<Value> {
    read(p).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn mock_simulation_is_deterministic() {
    let cfg = mock_dir().join("run.toml");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = simulate(&cfg, d.path(), &["--rounds", "5", "--sessions", "2"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["ana-s001.jsonl", "ana-s001.meta.json", "ana-s002.jsonl", "ana-s002.meta.json"] {
        let p = Path::new("scripted/ana").join(f);
        assert_eq!(read(a.path().join(&p)), read(b.path().join(&p)), "{f} differs");
    }
}

#[test]
fn rounds_flag_bounds_the_transcript() {
    let out = tempfile::tempdir().unwrap();
    let o = simulate(&mock_dir().join("run.toml"), out.path(), &["--rounds", "3"]);
    assert_eq!(code(&o), 0);
    let u = lines(out.path().join("scripted/ana/ana-s001.jsonl"));
    assert_eq!(u.len(), 6);
    for (i, u) in u.iter().enumerate() {
        let want = if i % 2 == 0 { "counselor" } else { "seeker" };
        assert_eq!(u["speaker"], want);
        assert_eq!(u["turn_index"], i);
    }
}

#[test]
fn missing_backend_binding_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_variant(dir.path(), |t| t.replace("[backends.judge]", "[unused_judge]"));
    let o = simulate(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("engine") && err.contains("judge"), "{err}");

    let o = simulate(&mock_dir().join("run.toml"), &dir.path().join("out"), &["--counselor", "nobody"]);
    assert_eq!(code(&o), 2);
    let o = seekersim(&["simulate", "--config", "/does/not/exist.toml", "--out", "/tmp"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn ablation_flags_reach_the_runtime() {
    let out = tempfile::tempdir().unwrap();
    let o = simulate(
        &mock_dir().join("run.toml"),
        out.path(),
        &["--rounds", "5", "--no-dynamic-evolution"],
    );
    assert_eq!(code(&o), 0);
    for u in lines(out.path().join("scripted/ana/ana-s001.jsonl")) {
        if u["speaker"] == "seeker" {
            assert_eq!(u["annotations"]["emotion"], "neutral");
            assert_eq!(u["annotations"]["complaint_stage"], 0);
        }
    }
}

#[test]
fn backend_failure_mid_run_flags_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_variant(dir.path(), |t| {
        t.replace(
            "[backends.seeker_generator]\nkind = \"mock\"",
            "[backends.seeker_generator]\nkind = \"mock\"\nfail_after = 2\nbackoff_ms = 0",
        )
    });
    let out = dir.path().join("out");
    let o = simulate(&cfg, &out, &["--rounds", "5"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let meta: Value = serde_json::from_str(&read(out.join("scripted/ana/ana-s001.meta.json"))).unwrap();
    assert_eq!(meta["incomplete"], true);
    assert!(meta["closed_at"].is_string());
}

#[test]
fn eval_on_identical_sets_is_perfect() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(&mock_dir().join("run.toml"), out.path(), &["--rounds", "4"])), 0);
    let t = out.path().to_str().unwrap();
    let o = seekersim(&[
        "eval", "--transcripts", t, "--references", t, "--provider", "exact", "--sample-rate", "1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["anthropomorphism"]["overall"]["f1"], 1.0);
    assert_eq!(report["provenance"]["similarity_provider"], "exact");
}

#[test]
fn eval_on_empty_directory_exits_3() {
    let empty = tempfile::tempdir().unwrap();
    let t = empty.path().to_str().unwrap();
    let o = seekersim(&["eval", "--transcripts", t, "--references", t]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn seeded_eval_reports_are_byte_identical() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(&mock_dir().join("run.toml"), out.path(), &["--rounds", "5", "--sessions", "2"])), 0);
    let refs = out.path().join("refs.txt");
    std::fs::write(&refs, "I cannot sleep at all\nmy parents expect a lot\nexams scare me\n").unwrap();
    let t = out.path().join("scripted");
    let (r1, r2) = (out.path().join("r1.json"), out.path().join("r2.json"));
    for r in [&r1, &r2] {
        let o = seekersim(&[
            "eval",
            "--transcripts",
            t.to_str().unwrap(),
            "--references",
            refs.to_str().unwrap(),
            "--sample-rate",
            "0.1",
            "--seed",
            "9",
            "--out",
            r.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(&r1), read(&r2));
    let v: Value = serde_json::from_str(&read(&r1)).unwrap();
    assert_eq!(v["provenance"]["sample_seed"], 9);
}

#[test]
fn judge_metrics_run_against_mocks() {
    let out = tempfile::tempdir().unwrap();
    let cfg = mock_dir().join("run.toml");
    assert_eq!(code(&simulate(&cfg, out.path(), &["--rounds", "3"])), 0);
    let o = seekersim(&[
        "eval",
        "--transcripts",
        out.path().to_str().unwrap(),
        "--metrics",
        "fidelity,ltm",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["personality_fidelity"]["mean"], 4.0);
    assert_eq!(v["ltm_accuracy"]["with_memory"]["mean"], 4.0);
    assert_eq!(v["ltm_accuracy"]["without_memory"]["mean"], 4.0);
    assert_eq!(v["provenance"]["judge_backend"], "mock:judge");
}
