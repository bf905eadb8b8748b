//! Synthetic three-family corpus used for tests and demos.
//!
//! * `whistle`: a steady tone near 1.2 kHz with slight vibrato. Clip `k`
//!   carries `n = 1 + k % 4` "i" syllables and the tone lasts
//!   `0.15 + 0.2 n` seconds, so longer words mean longer sounds.
//! * `burst`: exponentially decaying white noise.
//! * `buzz`: an amplitude-modulated soft-clipped low tone.
//!
//! Every clip has a faint noise floor and every class includes the word
//! "b i: i q", so a shared transcription can be rendered under any label.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Manifest, ManifestEntry, MANIFEST_FILE};
use crate::dsp::{write_wav, Waveform, SAMPLE_RATE};

pub const TOY_FAMILIES: [&str; 3] = ["whistle", "burst", "buzz"];
pub const SHARED_WORD: &str = "b i: i q";
const NOISE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToySpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            classes: 3,
            samples_per_class: 10,
            seed: 0,
        }
    }
}

/// Number of "i" syllables (and tone length class) of whistle clip `index`.
pub fn whistle_repeats(index: usize) -> usize {
    1 + index % 4
}

pub fn whistle_tone_secs(repeats: usize) -> f64 {
    0.15 + 0.2 * repeats as f64
}

fn transcriptions(family: &str, index: usize) -> Vec<String> {
    match family {
        "whistle" => {
            let n = whistle_repeats(index);
            vec![
                format!("p{}", " i".repeat(n)),
                format!("p i:{}", " i".repeat(n - 1)),
                SHARED_WORD.to_string(),
            ]
        }
        "burst" => vec!["p a N".into(), "b a N".into(), SHARED_WORD.into()],
        _ => vec![SHARED_WORD.into(), "b i i i".into()],
    }
}

fn fade(t: f64, start: f64, end: f64, ramp: f64) -> f64 {
    if t < start || t >= end {
        0.0
    } else {
        ((t - start) / ramp).min((end - t) / ramp).min(1.0)
    }
}

/// Renders one clip of the given family; deterministic in `rng`.
pub fn render_clip(family: &str, index: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let sr = SAMPLE_RATE as f64;
    let (len_secs, signal): (f64, Box<dyn Fn(f64, &mut ChaCha8Rng) -> f64>) = match family {
        "whistle" => {
            let tone = whistle_tone_secs(whistle_repeats(index));
            let len = rng.gen_range((0.25 + tone).max(1.0)..=2.0);
            let f0 = 1200.0 + rng.gen_range(-50.0..50.0);
            let rate = rng.gen_range(4.0..7.0);
            let phase0 = rng.gen_range(0.0..2.0 * PI);
            // integrated phase of f0 + 60 sin(2 pi rate t)
            let sig = move |t: f64, _: &mut ChaCha8Rng| {
                let phase =
                    2.0 * PI * f0 * t + 60.0 / rate * (1.0 - (2.0 * PI * rate * t).cos()) + phase0;
                0.5 * fade(t, 0.05, 0.05 + tone, 0.01) * phase.sin()
            };
            (len, Box::new(sig))
        }
        "burst" => {
            let len = rng.gen_range(1.0..=2.0);
            let tau = rng.gen_range(0.05..0.3);
            let onset = rng.gen_range(0.05..0.15);
            let sig = move |t: f64, r: &mut ChaCha8Rng| {
                if t < onset {
                    0.0
                } else {
                    0.6 * (-(t - onset) / tau).exp() * r.gen_range(-1.0..1.0)
                }
            };
            (len, Box::new(sig))
        }
        _ => {
            let len = rng.gen_range(1.0..=2.0);
            let f0 = rng.gen_range(140.0..160.0);
            let fam = rng.gen_range(20.0..40.0);
            let sig = move |t: f64, _: &mut ChaCha8Rng| {
                let carrier = (3.0 * (2.0 * PI * f0 * t).sin()).tanh() / 3f64.tanh();
                let am = 0.6 + 0.4 * (2.0 * PI * fam * t).sin();
                0.4 * fade(t, 0.05, len - 0.1, 0.02) * am * carrier
            };
            (len, Box::new(sig))
        }
    };
    let n = (len_secs * sr).round() as usize;
    let floor = NOISE_FLOOR * 3f64.sqrt();
    (0..n)
        .map(|k| {
            let t = k as f64 / sr;
            let v = signal(t, rng) + rng.gen_range(-floor..floor);
            v.clamp(-1.0, 1.0) as f32
        })
        .collect()
}

/// Writes `classes * samples_per_class` WAVs and a manifest into `out_dir`.
/// Output bytes depend only on `spec`.
pub fn generate_toy_dataset(spec: &ToySpec, out_dir: impl AsRef<Path>) -> Result<Manifest, DataError> {
    if spec.classes == 0 || spec.classes > TOY_FAMILIES.len() {
        return Err(DataError::InvalidToySpec(format!(
            "classes must be between 1 and {}, got {}",
            TOY_FAMILIES.len(),
            spec.classes
        )));
    }
    if spec.samples_per_class == 0 {
        return Err(DataError::InvalidToySpec("samples_per_class must be positive".into()));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let families = &TOY_FAMILIES[..spec.classes];
    let mut entries = Vec::new();
    for (c, family) in families.iter().enumerate() {
        for k in 0..spec.samples_per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(((c as u64) << 32) | k as u64);
            let samples = render_clip(family, k, &mut rng);
            let name = format!("{family}_{k:03}.wav");
            write_wav(out_dir.join(&name), &Waveform::new(samples, SAMPLE_RATE)?)?;
            entries.push(ManifestEntry {
                audio_path: name.into(),
                label: family.to_string(),
                onomatopoeias: transcriptions(family, k),
            });
        }
    }
    let manifest = Manifest {
        labels: families.iter().map(|s| s.to_string()).collect(),
        entries,
        root: out_dir.to_path_buf(),
    };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
