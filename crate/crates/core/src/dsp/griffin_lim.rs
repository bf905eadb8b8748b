use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::{DspError, Spectrogram, Stft, Waveform};

/// Normalizer floor for the final inverse, relative to the interior
/// squared-window sum. Only the outermost ~65 samples at 2048/512 fall below.
const FINAL_FLOOR_RATIO: f64 = 1e-3;
const PEAK_TARGET: f32 = 0.95;

/// `|| |STFT(x)| - M ||_F / ||M||_F`.
pub fn spectral_convergence(stft: &Stft, x: &[f64], target: &Array2<f64>) -> f64 {
    let mag = stft.magnitudes(x);
    let num: f64 = mag
        .iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let den: f64 = target.iter().map(|b| b * b).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Griffin-Lim phase reconstruction.
#[derive(Debug, Clone)]
pub struct GriffinLim {
    pub iters: usize,
    /// `None` starts from zero phase, otherwise uniform random phase from
    /// this seed.
    pub seed: Option<u64>,
}

impl Default for GriffinLim {
    fn default() -> Self {
        Self {
            iters: super::DEFAULT_GL_ITERS,
            seed: None,
        }
    }
}

impl GriffinLim {
    pub fn new(iters: usize, seed: Option<u64>) -> Self {
        Self { iters, seed }
    }

    fn initial_phase(&self, frames: usize, bins: usize) -> Array2<Complex64> {
        match self.seed {
            None => Array2::from_elem((frames, bins), Complex64::new(1.0, 0.0)),
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Array2::from_shape_simple_fn((frames, bins), || {
                    Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI))
                })
            }
        }
    }

    /// Runs the iterations and returns the last iterate (untapered, f64)
    /// together with the spectral-convergence error of every iterate
    /// `x_0 ..= x_iters`.
    pub fn run_traced(&self, stft: &Stft, target: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
        self.iterate(stft, target, true)
    }

    fn iterate(&self, stft: &Stft, target: &Array2<f64>, trace: bool) -> (Vec<f64>, Vec<f64>) {
        let (frames, bins) = target.dim();
        let mut spec = self.initial_phase(frames, bins);
        spec.zip_mut_with(target, |c, &m| *c *= m);
        let mut x = stft.inverse(&spec, 0.0);
        let mut errors = Vec::new();
        for _ in 0..self.iters {
            let current = stft.forward(&x);
            if trace {
                errors.push(error_of(&current, target));
            }
            spec = current;
            spec.zip_mut_with(target, |c, &m| {
                let n = c.norm();
                *c = if n > 0.0 { *c * (m / n) } else { Complex64::new(m, 0.0) };
            });
            x = stft.inverse(&spec, 0.0);
        }
        if trace {
            errors.push(error_of(&stft.forward(&x), target));
        }
        (x, errors)
    }

    pub fn reconstruct(&self, stft: &Stft, s: &Spectrogram) -> Result<Waveform, DspError> {
        if s.win_len() != stft.win_len() || s.hop() != stft.hop() {
            return Err(DspError::InvalidSpectrogram(format!(
                "spectrogram uses {}/{} window/hop, transform uses {}/{}",
                s.win_len(),
                s.hop(),
                stft.win_len(),
                stft.hop()
            )));
        }
        let target = s.magnitudes();
        let (frames, bins) = target.dim();
        // Final pass: the phases of the last iterate with the target
        // magnitudes, inverted with a floored normalizer.
        let spec = if self.iters == 0 {
            let mut spec = self.initial_phase(frames, bins);
            spec.zip_mut_with(&target, |c, &m| *c *= m);
            spec
        } else {
            let (x, _) = self.iterate(stft, &target, false);
            let mut spec = stft.forward(&x);
            spec.zip_mut_with(&target, |c, &m| {
                let n = c.norm();
                *c = if n > 0.0 { *c * (m / n) } else { Complex64::new(m, 0.0) };
            });
            spec
        };
        let interior = stft.window().iter().map(|w| w * w).sum::<f64>() * stft.hop() as f64
            / stft.win_len() as f64;
        let x = stft.inverse(&spec, FINAL_FLOOR_RATIO * interior);
        let mut samples: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let peak = samples.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        if peak > 1.0 {
            let g = PEAK_TARGET / peak;
            samples.iter_mut().for_each(|v| *v *= g);
        }
        Waveform::new(samples, s.sample_rate())
    }
}

fn error_of(spec: &Array2<Complex64>, target: &Array2<f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (c, &m) in spec.iter().zip(target.iter()) {
        num += (c.norm() - m).powi(2);
        den += m * m;
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Reconstructs a waveform of `(frames - 1) * hop + win_len` samples whose
/// STFT magnitude approximates `exp(s)`.
pub fn griffin_lim(s: &Spectrogram, iters: usize, seed: Option<u64>) -> Result<Waveform, DspError> {
    let stft = Stft::new(s.win_len(), s.hop());
    GriffinLim::new(iters, seed).reconstruct(&stft, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{log_spectrogram, log_floor, HOP, SAMPLE_RATE, WIN_LEN};

    fn chirp(len: usize) -> Waveform {
        let samples = (0..len)
            .map(|n| {
                let t = n as f64 / 16_000.0;
                let env = (-(t - 0.4).powi(2) * 8.0).exp();
                (0.4 * env * (2.0 * PI * (300.0 * t + 400.0 * t * t)).sin()) as f32
            })
            .collect();
        Waveform::new(samples, SAMPLE_RATE).unwrap()
    }

    #[test]
    fn output_length() {
        let s = Spectrogram::new(Array2::from_elem((28, 1025), log_floor()), WIN_LEN, HOP, 16_000)
            .unwrap();
        let w = griffin_lim(&s, 2, None).unwrap();
        assert_eq!(w.len(), 27 * 512 + 2048);
        assert_eq!(w.len(), 15_872);
    }

    #[test]
    fn silent_spectrogram_gives_near_silence() {
        let s = Spectrogram::new(Array2::from_elem((10, 1025), log_floor()), WIN_LEN, HOP, 16_000)
            .unwrap();
        let w = griffin_lim(&s, 60, None).unwrap();
        assert!(w.peak() < 1e-3, "peak {}", w.peak());
    }

    #[test]
    fn iterations_reduce_error() {
        let w = chirp(16_000);
        let s = log_spectrogram(&w, WIN_LEN, HOP).unwrap();
        let stft = Stft::new(WIN_LEN, HOP);
        let target = s.magnitudes();
        let (_, trace) = GriffinLim::new(60, None).run_traced(&stft, &target);
        assert_eq!(trace.len(), 61);
        assert!(trace[60] < trace[0]);
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0], "{} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn seeded_phase_is_reproducible() {
        let s = log_spectrogram(&chirp(8000), WIN_LEN, HOP).unwrap();
        let a = griffin_lim(&s, 5, Some(9)).unwrap();
        let b = griffin_lim(&s, 5, Some(9)).unwrap();
        let c = griffin_lim(&s, 5, Some(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn loud_targets_are_peak_normalized() {
        let s = Spectrogram::new(Array2::from_elem((4, 1025), 8.0), WIN_LEN, HOP, 16_000).unwrap();
        let w = griffin_lim(&s, 3, Some(1)).unwrap();
        assert!((w.peak() - 0.95).abs() < 1e-6, "peak {}", w.peak());
    }
}
