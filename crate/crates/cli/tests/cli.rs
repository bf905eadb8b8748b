use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use onoma::dsp::read_wav;
use onoma::model::{Checkpoint, ModelConfig, Seq2Seq, TrainedModel};
use onoma::phoneme::PhonemeInventory;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn onoma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onoma"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_checkpoint(path: &Path, conditioned: bool) {
    let inventory = PhonemeInventory::default();
    let cfg = ModelConfig {
        vocab: inventory.len(),
        embed_dim: 4,
        hidden: 6,
        n_bins: 1025,
        n_labels: 3,
        conditioned,
    };
    let model = TrainedModel {
        model: Seq2Seq::new(cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap(),
        inventory,
        labels: ["whistle", "burst", "buzz"].map(String::from).to_vec(),
    };
    Checkpoint::new(model).save(path).unwrap();
}

fn synth(ckpt: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "synth",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--gl-iters",
        "3",
    ];
    args.extend_from_slice(extra);
    onoma(&args)
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(onoma(&[]).status.code(), Some(1));
    assert_eq!(onoma(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(onoma(&["synth", "--ckpt", "x.ckpt"]).status.code(), Some(1));
    assert_eq!(onoma(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy");
    let r = onoma(&["gen-toy", "--classes", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1), "{}", stderr(&r));
}

#[test]
fn json_usage_error_is_structured() {
    let r = onoma(&["--json", "synth"]);
    assert_eq!(r.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(stderr(&r).trim()).unwrap();
    assert_eq!(v["ok"], false);
    assert_eq!(v["code"], "Usage");
}

#[test]
fn synth_contract_errors() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("plain.ckpt");
    let cond = dir.path().join("cond.ckpt");
    tiny_checkpoint(&plain, false);
    tiny_checkpoint(&cond, true);
    let out = dir.path().join("o.wav");

    let r = synth(&plain, &out, &["--phonemes", "p a N", "--label", "burst"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("UnexpectedLabel"), "{}", stderr(&r));

    let r = synth(&cond, &out, &["--phonemes", "p a N"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("MissingLabel"));

    let r = synth(&cond, &out, &["--phonemes", "p a N", "--label", "thunder"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("UnknownLabel"));

    let r = synth(&plain, &out, &["--json", "--phonemes", "p a 9"]);
    assert_eq!(r.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(stderr(&r).trim()).unwrap();
    assert_eq!(v["code"], "UnknownToken");

    let r = synth(&plain, &out, &["--phonemes", "p a N", "--frames", "0"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(!out.exists());

    let missing = dir.path().join("missing.ckpt");
    let r = synth(&missing, &out, &["--phonemes", "p a N"]);
    assert_eq!(r.status.code(), Some(2), "{}", stderr(&r));
}

#[test]
fn synth_writes_wav_of_expected_length_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("cond.ckpt");
    tiny_checkpoint(&ckpt, true);
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    let flags = ["--phonemes", "b i: i q", "--label", "whistle", "--frames", "9", "--seed", "4"];
    for out in [&a, &b] {
        let r = synth(&ckpt, out, &flags);
        assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(&bytes[..4], b"RIFF");
    assert_eq!(bytes, fs::read(&b).unwrap());
    assert_eq!(read_wav(&a).unwrap().len(), 8 * 512 + 2048);
}

#[test]
fn train_then_eval_with_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let r = onoma(&["gen-toy", "--classes", "2", "--per-class", "2", "--seed", "1", "--out", &p("toy")]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let manifest = p("toy/manifest.tsv");
    let r = onoma(&["--json", "features", "--manifest", &manifest, "--out", &p("cache")]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["clips"], 4);

    fs::write(p("bad.toml"), "epochs = 1\nlearning_rate = 3\n").unwrap();
    let r = onoma(&["train", "--config", &p("bad.toml"), "--manifest", &manifest, "--out", &p("m.ckpt")]);
    assert_eq!(r.status.code(), Some(1), "{}", stderr(&r));

    fs::write(
        p("tiny.toml"),
        "epochs = 2\nhidden = 8\nembed_dim = 4\neval_fraction = 0.25\nconditioned = true\n",
    )
    .unwrap();
    let r = onoma(&[
        "--json", "train", "--config", &p("tiny.toml"), "--manifest", &manifest, "--cache", &p("cache"),
        "--out", &p("m.ckpt"),
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["epochs"], 2);
    assert!(v["val_l1"].as_f64().unwrap().is_finite());
    let metrics = fs::read_to_string(p("m.metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    let r = onoma(&["--json", "eval", "--ckpt", &p("m.ckpt"), "--manifest", &manifest]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert!(v["pairs"].as_u64().unwrap() >= 1);
    assert!(v["free_running_l1"].as_f64().unwrap().is_finite());
}

#[test]
fn run_returns_exit_codes_in_process() {
    assert_eq!(onoma_cli::run(["onoma", "eval"]), 1);
    assert_eq!(onoma_cli::run(["onoma", "eval", "--ckpt", "/nonexistent", "--manifest", "/nonexistent"]), 2);
}
