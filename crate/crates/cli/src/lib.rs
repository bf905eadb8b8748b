//! `onoma` command-line interface.
//!
//! Exit codes: 0 success, 1 usage or input validation error (bad flags,
//! unknown phoneme, label given to an unconditioned model, invalid config),
//! 2 runtime failure. With `--json` every command prints one JSON object on
//! stdout on success and `{"ok": false, "code", "message"}` on stderr on
//! failure.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use onoma::data::{
    extract_features, generate_toy_dataset, load_manifest, FeatureCache, ToySpec,
};
use onoma::dsp::{write_wav, DEFAULT_GL_ITERS};
use onoma::model::{Checkpoint, CheckpointError, ModelError, DEFAULT_FRAMES};
use onoma::phoneme::{PhonemeError, PhonemeInventory};
use onoma::trainer::{best_checkpoint_path, evaluate_manifest, train, TrainConfig, TrainError, TrainOutputs};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "onoma", version, about = "Onomatopoeia-to-environmental-sound synthesis")]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic toy corpus and its manifest.
    GenToy {
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute and cache log-spectrograms for every clip in a manifest.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model.
    Train {
        /// TOML training config; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Feature cache directory.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Metrics log; defaults to `<out>.metrics.jsonl`.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Phoneme inventory file, one symbol per line.
        #[arg(long)]
        inventory: Option<PathBuf>,
    },
    /// Synthesize a WAV from a phoneme string.
    Synth {
        #[arg(long)]
        ckpt: PathBuf,
        /// Space-separated phonemes, e.g. "b i: i q".
        #[arg(long)]
        phonemes: String,
        #[arg(long)]
        label: Option<String>,
        #[arg(long, default_value_t = DEFAULT_FRAMES)]
        frames: usize,
        #[arg(long, default_value_t = DEFAULT_GL_ITERS)]
        gl_iters: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Teacher-forced and free-running L1 on a manifest.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Score every pair instead of the checkpoint's held-out split.
        #[arg(long)]
        all: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Concurrent synthesis jobs.
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub exit: i32,
    pub code: String,
    pub message: String,
}

impl CliError {
    fn usage(code: &str, message: impl Into<String>) -> Self {
        Self {
            exit: 1,
            code: code.into(),
            message: message.into(),
        }
    }

    fn runtime(code: &str, message: impl Into<String>) -> Self {
        Self {
            exit: 2,
            code: code.into(),
            message: message.into(),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let msg = e.to_string();
        match e {
            ModelError::MissingLabel => Self::usage("MissingLabel", msg),
            ModelError::UnexpectedLabel => Self::usage("UnexpectedLabel", msg),
            ModelError::UnknownLabel(_) => Self::usage("UnknownLabel", msg),
            ModelError::Phoneme(PhonemeError::UnknownToken { .. }) => Self::usage("UnknownToken", msg),
            ModelError::Phoneme(PhonemeError::EmptyInput) => Self::usage("EmptyInput", msg),
            _ => Self::runtime("ModelError", msg),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let msg = e.to_string();
        match e {
            TrainError::InvalidConfig(_) | TrainError::Config(_) => Self::usage("InvalidConfig", msg),
            TrainError::Model(m) => m.into(),
            TrainError::NonFiniteLoss { .. } => Self::runtime("NonFiniteLoss", msg),
            TrainError::IncompatibleCheckpoint(_) => Self::runtime("IncompatibleCheckpoint", msg),
            _ => Self::runtime("TrainError", msg),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        Self::runtime("CheckpointError", e.to_string())
    }
}

impl From<onoma::data::DataError> for CliError {
    fn from(e: onoma::data::DataError) -> Self {
        Self::runtime("DataError", e.to_string())
    }
}

impl From<onoma::dsp::DspError> for CliError {
    fn from(e: onoma::dsp::DspError) -> Self {
        Self::runtime("DspError", e.to_string())
    }
}

fn text_or_json(json: bool, value: Value, text: String) {
    if json {
        println!("{value}");
    } else {
        println!("{text}");
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Ok(Checkpoint::load(path)?)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let json = cli.json;
    match cli.command {
        Command::GenToy {
            classes,
            per_class,
            seed,
            out,
        } => {
            let spec = ToySpec {
                classes,
                samples_per_class: per_class,
                seed,
            };
            let m = generate_toy_dataset(&spec, &out).map_err(|e| match e {
                onoma::data::DataError::InvalidToySpec(msg) => CliError::usage("InvalidToySpec", msg),
                other => other.into(),
            })?;
            let manifest = out.join(onoma::data::MANIFEST_FILE);
            text_or_json(
                json,
                json!({"ok": true, "command": "gen-toy", "manifest": manifest, "entries": m.entries.len(), "pairs": m.n_pairs(), "labels": m.labels}),
                format!("wrote {} clips ({} pairs) and {}", m.entries.len(), m.n_pairs(), manifest.display()),
            );
        }
        Command::Features { manifest, out } => {
            let m = load_manifest(&manifest)?;
            let cache = FeatureCache::new(&out)?;
            let feats = extract_features(&m, Some(&cache))?;
            let frames: usize = feats.iter().map(|s| s.n_frames()).sum();
            text_or_json(
                json,
                json!({"ok": true, "command": "features", "cache": out, "clips": feats.len(), "frames": frames}),
                format!("cached features for {} clips ({frames} frames) in {}", feats.len(), out.display()),
            );
        }
        Command::Train {
            config,
            manifest,
            out,
            cache,
            metrics,
            inventory,
        } => {
            let cfg = match &config {
                Some(p) => TrainConfig::load(p)?,
                None => TrainConfig::default(),
            };
            let inv = match &inventory {
                Some(p) => PhonemeInventory::load(p)
                    .map_err(|e| CliError::usage("InvalidInventory", e.to_string()))?,
                None => PhonemeInventory::default(),
            };
            let m = load_manifest(&manifest)?;
            let cache = cache.map(FeatureCache::new).transpose()?;
            let metrics = metrics.unwrap_or_else(|| out.with_extension("metrics.jsonl"));
            let outputs = TrainOutputs {
                checkpoint: Some(out.clone()),
                metrics: Some(metrics.clone()),
            };
            let report = train(&cfg, &m, &inv, cache.as_ref(), &outputs, |e| {
                if !json {
                    let val = e.val_l1.map_or("-".to_string(), |v| format!("{v:.4}"));
                    eprintln!("epoch {:>4}  step {:>6}  train_l1 {:.4}  val_l1 {val}", e.epoch, e.step, e.train_l1);
                }
            })?;
            let last = report.history.last().copied();
            text_or_json(
                json,
                json!({
                    "ok": true,
                    "command": "train",
                    "checkpoint": out,
                    "best_checkpoint": best_checkpoint_path(&out),
                    "metrics": metrics,
                    "epochs": report.history.len(),
                    "steps": last.map_or(0, |l| l.step),
                    "train_l1": last.map(|l| l.train_l1),
                    "val_l1": last.and_then(|l| l.val_l1),
                    "best_epoch": report.best_epoch,
                }),
                format!("saved {} after {} epochs", out.display(), report.history.len()),
            );
        }
        Command::Synth {
            ckpt,
            phonemes,
            label,
            frames,
            gl_iters,
            seed,
            out,
        } => {
            if frames == 0 {
                return Err(CliError::usage("InvalidFrames", "--frames must be at least 1"));
            }
            let ck = load_checkpoint(&ckpt)?;
            let synth = ck
                .model
                .synthesize_text(&phonemes, label.as_deref(), frames, gl_iters, seed)?;
            write_wav(&out, &synth.waveform)?;
            text_or_json(
                json,
                json!({"ok": true, "command": "synth", "out": out, "frames": frames, "samples": synth.waveform.len(), "duration_ms": (synth.waveform.duration_secs() * 1000.0).round()}),
                format!("wrote {} ({} samples)", out.display(), synth.waveform.len()),
            );
        }
        Command::Eval {
            ckpt,
            manifest,
            cache,
            all,
        } => {
            let ck = load_checkpoint(&ckpt)?;
            let m = load_manifest(&manifest)?;
            let cache = cache.map(FeatureCache::new).transpose()?;
            let r = evaluate_manifest(&ck, &m, cache.as_ref(), !all)?;
            text_or_json(
                json,
                json!({"ok": true, "command": "eval", "val_l1": r.val_l1, "free_running_l1": r.free_running_l1, "pairs": r.pairs}),
                format!("val_l1 {:.4}  free_running_l1 {:.4}  pairs {}", r.val_l1, r.free_running_l1, r.pairs),
            );
        }
        Command::Serve {
            ckpt,
            port,
            host,
            workers,
        } => {
            let ck = load_checkpoint(&ckpt)?;
            let mut cfg = onoma_server::ServiceConfig::default();
            if let Some(w) = workers {
                cfg.workers = w.max(1);
            }
            let addr = SocketAddr::new(host, port);
            if json {
                println!("{}", json!({"ok": true, "command": "serve", "addr": addr.to_string()}));
            } else {
                eprintln!("listening on http://{addr}");
            }
            let rt = tokio::runtime::Runtime::new()
                .map_err(|e| CliError::runtime("Io", e.to_string()))?;
            rt.block_on(onoma_server::serve(addr, ck.model, cfg))
                .map_err(|e| CliError::runtime("Io", e.to_string()))?;
        }
    }
    Ok(())
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let wants_json = argv.iter().any(|a| a == "--json");
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            if wants_json {
                eprintln!("{}", json!({"ok": false, "code": "Usage", "message": e.to_string()}));
            } else {
                let _ = e.print();
            }
            return 1;
        }
    };
    let json = cli.json;
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            if json {
                eprintln!("{}", json!({"ok": false, "code": e.code, "message": e.message}));
            } else {
                eprintln!("error: {}: {}", e.code, e.message);
            }
            e.exit
        }
    }
}
