//! Corpus handling: manifests, cached features, normalization, padded
//! batches and the synthetic toy corpus.

mod batch;
mod features;
mod manifest;
mod norm;
mod toy;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use batch::{batch_order, Batch, Dataset, TrainingPair, DEFAULT_BATCH_SIZE};
pub use features::{extract_features, FeatureCache};
pub use manifest::{load_manifest, Manifest, ManifestEntry, PairRef, MANIFEST_FILE};
pub use norm::{compute_norm_stats, NormStats, STD_FLOOR};
pub use toy::{
    generate_toy_dataset, render_clip, whistle_repeats, whistle_tone_secs, ToySpec, SHARED_WORD,
    TOY_FAMILIES,
};

use crate::dsp::DspError;
use crate::phoneme::PhonemeError;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("manifest line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("manifest line {line}: label {label:?} is not in the @labels header")]
    UnknownLabel { line: usize, label: String },
    #[error("audio file {0} does not exist or cannot be read")]
    MissingAudio(PathBuf),
    #[error("no data")]
    Empty,
    #[error("inconsistent data: {0}")]
    Inconsistent(String),
    #[error("transcription {text:?}: {source}")]
    Transcription {
        text: String,
        #[source]
        source: PhonemeError,
    },
    #[error("invalid toy corpus request: {0}")]
    InvalidToySpec(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl DataError {
    fn parse(line: usize, message: &str) -> Self {
        Self::ParseError {
            line,
            message: message.to_string(),
        }
    }
}

/// Seeded entry-level split: returns (train, held-out) entry indices, each
/// sorted. At least one entry stays in training; `fraction` 0 holds out
/// nothing, and any positive fraction holds out at least one entry when
/// there are two or more.
pub fn split_entries(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_val = (n as f64 * fraction.clamp(0.0, 1.0)).round() as usize;
    if fraction > 0.0 && n > 1 {
        n_val = n_val.max(1);
    }
    n_val = n_val.min(n.saturating_sub(1));
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// The 95/5 per-class split used for real corpora: within each label, a
/// seeded 5% of entries is held out.
pub fn split_per_class(manifest: &Manifest, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (c, label) in manifest.labels.iter().enumerate() {
        let members: Vec<usize> = manifest
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| &e.label == label)
            .map(|(i, _)| i)
            .collect();
        let (t, v) = split_entries(members.len(), fraction, seed.wrapping_add(c as u64));
        train.extend(t.iter().map(|&k| members[k]));
        val.extend(v.iter().map(|&k| members[k]));
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}
