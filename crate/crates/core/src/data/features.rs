//! Log-spectrogram extraction with an on-disk cache.
//!
//! Cache files live directly in the cache directory and are named
//! `<sha256 of the audio file bytes>-w<win_len>-h<hop>.feat`. Layout, all
//! little-endian: magic `ONOMAFT1`, `u32` frames, `u32` bins, then
//! `frames * bins` `f32` values row by row.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::{DataError, Manifest};
use crate::dsp::{self, read_wav_bytes, Spectrogram, Stft};

const FEATURE_MAGIC: &[u8; 8] = b"ONOMAFT1";

#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, DataError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(audio: &[u8], win_len: usize, hop: usize) -> String {
        let digest = Sha256::digest(audio);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        format!("{hex}-w{win_len}-h{hop}.feat")
    }

    fn read(&self, path: &Path, win_len: usize, hop: usize) -> Option<Spectrogram> {
        let bytes = fs::read(path).ok()?;
        if bytes.len() < 16 || &bytes[..8] != FEATURE_MAGIC {
            return None;
        }
        let frames = u32::from_le_bytes(bytes[8..12].try_into().ok()?) as usize;
        let bins = u32::from_le_bytes(bytes[12..16].try_into().ok()?) as usize;
        let body = &bytes[16..];
        if body.len() != frames * bins * 4 {
            return None;
        }
        let values: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let arr = Array2::from_shape_vec((frames, bins), values).ok()?;
        Spectrogram::new(arr, win_len, hop, dsp::SAMPLE_RATE).ok()
    }

    fn write(&self, path: &Path, s: &Spectrogram) -> Result<(), DataError> {
        let mut out = Vec::with_capacity(16 + s.frames().len() * 4);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&(s.n_frames() as u32).to_le_bytes());
        out.extend_from_slice(&(s.n_bins() as u32).to_le_bytes());
        for v in s.frames().iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, out)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Features of the audio file at `audio`, computed on a miss and stored.
    pub fn load_or_compute(&self, audio: &Path, stft: &Stft) -> Result<Spectrogram, DataError> {
        let bytes = fs::read(audio).map_err(|_| DataError::MissingAudio(audio.to_path_buf()))?;
        let path = self.dir.join(Self::key(&bytes, stft.win_len(), stft.hop()));
        if let Some(s) = self.read(&path, stft.win_len(), stft.hop()) {
            return Ok(s);
        }
        let s = features_from_bytes(&bytes, stft)?;
        self.write(&path, &s)?;
        Ok(s)
    }
}

fn features_from_bytes(bytes: &[u8], stft: &Stft) -> Result<Spectrogram, DataError> {
    let w = read_wav_bytes(bytes)?;
    Ok(dsp::log_spectrogram_with(stft, &w)?)
}

/// Log-spectrogram of every manifest entry, in entry order. Clips are split
/// across the available cores.
pub fn extract_features(
    manifest: &Manifest,
    cache: Option<&FeatureCache>,
) -> Result<Vec<Spectrogram>, DataError> {
    let paths: Vec<PathBuf> = manifest.entries.iter().map(|e| manifest.resolve(e)).collect();
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(paths.len().max(1));
    let chunk = paths.len().div_ceil(workers).max(1);
    let one = |p: &PathBuf, stft: &Stft| match cache {
        Some(c) => c.load_or_compute(p, stft),
        None => {
            let bytes = fs::read(p).map_err(|_| DataError::MissingAudio(p.clone()))?;
            features_from_bytes(&bytes, stft)
        }
    };
    let results: Vec<Result<Vec<Spectrogram>, DataError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = paths
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    let stft = Stft::new(dsp::WIN_LEN, dsp::HOP);
                    part.iter().map(|p| one(p, &stft)).collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("feature worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(paths.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
