//! Audio I/O, log-amplitude spectrogram analysis and Griffin-Lim synthesis.
//!
//! Acoustic conditions: 16 kHz mono 16-bit PCM, 2048-sample (128 ms) Hann
//! window, 512-sample (32 ms) hop, natural-log amplitudes floored at 1e-5.

mod griffin_lim;
mod stft;
mod wav;

use ndarray::Array2;

pub use griffin_lim::{griffin_lim, spectral_convergence, GriffinLim};
pub use stft::{frame_count, hann_window, signal_len, Stft};
pub use wav::{
    from_pcm16, read_wav, read_wav_bytes, read_wav_from, to_pcm16, wav_bytes, write_wav,
    write_wav_to,
};

pub const SAMPLE_RATE: u32 = 16_000;
pub const WIN_LEN: usize = 2048;
pub const HOP: usize = 512;
pub const N_BINS: usize = WIN_LEN / 2 + 1;
pub const AMP_FLOOR: f64 = 1e-5;
pub const DEFAULT_GL_ITERS: usize = 60;

pub fn log_floor() -> f32 {
    AMP_FLOOR.ln() as f32
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DspError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("signal of {len} samples is shorter than one {win_len}-sample window")]
    TooShort { len: usize, win_len: usize },
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("invalid spectrogram: {0}")]
    InvalidSpectrogram(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, DspError> {
        if sample_rate == 0 {
            return Err(DspError::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::InvalidWaveform(format!("non-finite sample at {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    /// Duration of the envelope frames (256 samples, no overlap) whose energy
    /// lies within `threshold_db` of the loudest frame. Zero for silence.
    pub fn non_silent_duration(&self, threshold_db: f64) -> f64 {
        const FRAME: usize = 256;
        let energies: Vec<f64> = self
            .samples
            .chunks(FRAME)
            .map(|c| c.iter().map(|&s| (s as f64) * (s as f64)).sum())
            .collect();
        let peak = energies.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            return 0.0;
        }
        let threshold = peak * 10f64.powf(-threshold_db.abs() / 10.0);
        let active = energies.iter().filter(|&&e| e >= threshold).count();
        (active * FRAME) as f64 / self.sample_rate as f64
    }
}

/// Log-amplitude spectrogram: `frames x bins`, natural log, every entry at
/// least `ln(AMP_FLOOR)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: Array2<f32>,
    win_len: usize,
    hop: usize,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn new(
        frames: Array2<f32>,
        win_len: usize,
        hop: usize,
        sample_rate: u32,
    ) -> Result<Self, DspError> {
        let (t, f) = frames.dim();
        if t == 0 {
            return Err(DspError::InvalidSpectrogram("no frames".into()));
        }
        if f != win_len / 2 + 1 {
            return Err(DspError::InvalidSpectrogram(format!(
                "{f} bins, expected {} for a {win_len}-sample window",
                win_len / 2 + 1
            )));
        }
        // f32 rounding of ln(1e-5) can land a hair below the f64 value
        let floor = log_floor() - 1e-6;
        if let Some(v) = frames.iter().find(|v| !v.is_finite() || **v < floor) {
            return Err(DspError::InvalidSpectrogram(format!(
                "entry {v} is non-finite or below the amplitude floor"
            )));
        }
        Ok(Self {
            frames,
            win_len,
            hop,
            sample_rate,
        })
    }

    /// Like [`Spectrogram::new`] but raises entries below the floor to it.
    /// Used for model outputs, which are unconstrained.
    pub fn from_unclamped(
        mut frames: Array2<f32>,
        win_len: usize,
        hop: usize,
        sample_rate: u32,
    ) -> Result<Self, DspError> {
        let floor = log_floor();
        frames.mapv_inplace(|v| if v < floor { floor } else { v });
        Self::new(frames, win_len, hop, sample_rate)
    }

    pub fn frames(&self) -> &Array2<f32> {
        &self.frames
    }

    pub fn into_frames(self) -> Array2<f32> {
        self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn win_len(&self) -> usize {
        self.win_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Linear magnitudes `exp(frames)`.
    pub fn magnitudes(&self) -> Array2<f64> {
        self.frames.mapv(|v| (v as f64).exp())
    }

    /// Mean over frames of each bin; a fixed-length summary for comparisons.
    pub fn mean_spectrum(&self) -> Vec<f32> {
        let t = self.n_frames() as f32;
        self.frames
            .columns()
            .into_iter()
            .map(|c| c.sum() / t)
            .collect()
    }
}

pub fn log_spectrogram(w: &Waveform, win_len: usize, hop: usize) -> Result<Spectrogram, DspError> {
    log_spectrogram_with(&Stft::new(win_len, hop), w)
}

pub fn log_spectrogram_with(stft: &Stft, w: &Waveform) -> Result<Spectrogram, DspError> {
    if frame_count(w.len(), stft.win_len(), stft.hop()).is_none() {
        return Err(DspError::TooShort {
            len: w.len(),
            win_len: stft.win_len(),
        });
    }
    let x: Vec<f64> = w.samples.iter().map(|&s| s as f64).collect();
    let frames = stft
        .forward(&x)
        .mapv(|c| c.norm().max(AMP_FLOOR).ln() as f32);
    Spectrogram::new(frames, stft.win_len(), stft.hop(), w.sample_rate)
}
