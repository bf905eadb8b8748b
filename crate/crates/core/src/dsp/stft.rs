use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Periodic Hann window. With a hop of a quarter window the squared window
/// sums to a constant 1.5 in the interior.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Frame count for a signal of `len` samples: `floor((len - win) / hop) + 1`,
/// or `None` when the signal is shorter than one window.
pub fn frame_count(len: usize, win_len: usize, hop: usize) -> Option<usize> {
    (len >= win_len).then(|| (len - win_len) / hop + 1)
}

/// Sample count produced by overlap-adding `frames` frames.
pub fn signal_len(frames: usize, win_len: usize, hop: usize) -> usize {
    (frames - 1) * hop + win_len
}

/// Hann-windowed short-time Fourier transform with a least-squares inverse.
///
/// Frames are not centred: frame `t` covers samples `[t*hop, t*hop + win_len)`.
#[derive(Clone)]
pub struct Stft {
    win_len: usize,
    hop: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft")
            .field("win_len", &self.win_len)
            .field("hop", &self.hop)
            .finish()
    }
}

impl Stft {
    pub fn new(win_len: usize, hop: usize) -> Self {
        assert!(win_len >= 2 && win_len.is_multiple_of(2), "window length must be even");
        assert!(hop > 0 && hop <= win_len, "hop must be in 1..=win_len");
        let mut planner = FftPlanner::new();
        Self {
            win_len,
            hop,
            window: hann_window(win_len),
            forward: planner.plan_fft_forward(win_len),
            inverse: planner.plan_fft_inverse(win_len),
        }
    }

    pub fn win_len(&self) -> usize {
        self.win_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn n_bins(&self) -> usize {
        self.win_len / 2 + 1
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// One-sided spectra, `frames x (win_len/2 + 1)`. Panics if `x` is
    /// shorter than one window.
    pub fn forward(&self, x: &[f64]) -> Array2<Complex64> {
        let n_frames = frame_count(x.len(), self.win_len, self.hop)
            .expect("signal shorter than one window");
        let bins = self.n_bins();
        let mut out = Array2::zeros((n_frames, bins));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.win_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..n_frames {
            let start = t * self.hop;
            for (n, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(x[start + n] * self.window[n], 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for (k, v) in out.row_mut(t).iter_mut().enumerate() {
                *v = buf[k];
            }
        }
        out
    }

    pub fn magnitudes(&self, x: &[f64]) -> Array2<f64> {
        self.forward(x).mapv(|c| c.norm())
    }

    /// Sum of squared windows at each output sample.
    pub fn window_power_envelope(&self, n_frames: usize) -> Vec<f64> {
        let mut env = vec![0.0; signal_len(n_frames, self.win_len, self.hop)];
        for t in 0..n_frames {
            let start = t * self.hop;
            for (n, w) in self.window.iter().enumerate() {
                env[start + n] += w * w;
            }
        }
        env
    }

    /// Weighted overlap-add inverse. With `floor == 0` this is the exact
    /// least-squares signal for the given (possibly inconsistent) spectra;
    /// samples no window touches come out as zero. A positive `floor` bounds
    /// the normalizer from below, which tapers the first and last few dozen
    /// samples instead of amplifying them.
    pub fn inverse(&self, spectra: &Array2<Complex64>, floor: f64) -> Vec<f64> {
        let (n_frames, bins) = spectra.dim();
        assert_eq!(bins, self.n_bins(), "bin count mismatch");
        let len = signal_len(n_frames, self.win_len, self.hop);
        let mut out = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.win_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / self.win_len as f64;
        for t in 0..n_frames {
            let row = spectra.row(t);
            for k in 0..bins {
                buf[k] = row[k];
            }
            // Hermitian completion; DC and Nyquist must be real.
            buf[0].im = 0.0;
            buf[self.win_len / 2].im = 0.0;
            for k in 1..self.win_len / 2 {
                buf[self.win_len - k] = row[k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * self.hop;
            for n in 0..self.win_len {
                out[start + n] += buf[n].re * scale * self.window[n];
            }
        }
        let env = self.window_power_envelope(n_frames);
        for (x, e) in out.iter_mut().zip(env) {
            let denom = e.max(floor);
            *x = if denom > 0.0 { *x / denom } else { 0.0 };
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn frame_arithmetic() {
        assert_eq!(frame_count(16_000, 2048, 512), Some(28));
        assert_eq!(frame_count(2048, 2048, 512), Some(1));
        assert_eq!(frame_count(2047, 2048, 512), None);
        assert_eq!(signal_len(28, 2048, 512), 15_872);
        assert_eq!(signal_len(1, 2048, 512), 2048);
    }

    #[test]
    fn hann_cola_interior() {
        let stft = Stft::new(2048, 512);
        let env = stft.window_power_envelope(10);
        for v in &env[2048..env.len() - 2048] {
            assert!((v - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let stft = Stft::new(256, 64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..1024).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spec = stft.forward(&x);
        let n = stft.win_len();
        for t in 0..spec.nrows() {
            let time: f64 = (0..n)
                .map(|i| (x[t * 64 + i] * stft.window()[i]).powi(2))
                .sum();
            let row = spec.row(t);
            let mut freq = row[0].norm_sqr() + row[n / 2].norm_sqr();
            for k in 1..n / 2 {
                freq += 2.0 * row[k].norm_sqr();
            }
            freq /= n as f64;
            assert!((time - freq).abs() <= 1e-6 * time, "frame {t}: {time} vs {freq}");
        }
    }

    #[test]
    fn inverse_reconstructs_consistent_spectra() {
        let stft = Stft::new(512, 128);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..512 + 128 * 7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = stft.inverse(&stft.forward(&x), 0.0);
        assert_eq!(y.len(), x.len());
        // sample 0 is covered only by w[0] = 0
        for n in 1..x.len() {
            assert!((x[n] - y[n]).abs() < 1e-9, "sample {n}");
        }
    }
}
