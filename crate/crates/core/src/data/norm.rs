use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::dsp::Spectrogram;

pub const STD_FLOOR: f32 = 1e-3;

/// Per-bin feature mean and standard deviation over all training frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl NormStats {
    /// Zero mean, unit std.
    pub fn identity(bins: usize) -> Self {
        Self {
            mean: vec![0.0; bins],
            std: vec![1.0; bins],
        }
    }

    pub fn n_bins(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, frames: &Array2<f32>) -> Array2<f32> {
        let mut out = frames.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn denormalize(&self, frames: &Array2<f32>) -> Array2<f32> {
        let mut out = frames.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        out
    }
}

/// Mean and population std of each bin over every frame of every
/// spectrogram; std is floored at [`STD_FLOOR`]. Accumulates in f64.
pub fn compute_norm_stats<'a, I>(features: I) -> Result<NormStats, DataError>
where
    I: IntoIterator<Item = &'a Spectrogram>,
{
    let mut sum: Vec<f64> = Vec::new();
    let mut count = 0usize;
    let specs: Vec<&Spectrogram> = features.into_iter().collect();
    for s in &specs {
        if sum.is_empty() {
            sum = vec![0.0; s.n_bins()];
        } else if sum.len() != s.n_bins() {
            return Err(DataError::Inconsistent(format!(
                "spectrograms with {} and {} bins",
                sum.len(),
                s.n_bins()
            )));
        }
        for row in s.frames().rows() {
            for (acc, &v) in sum.iter_mut().zip(row) {
                *acc += v as f64;
            }
        }
        count += s.n_frames();
    }
    if count == 0 {
        return Err(DataError::Empty);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut var = vec![0.0f64; mean.len()];
    for s in &specs {
        for row in s.frames().axis_iter(Axis(0)) {
            for ((acc, &v), m) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v as f64 - m).powi(2);
            }
        }
    }
    Ok(NormStats {
        mean: mean.iter().map(|&m| m as f32).collect(),
        std: var
            .iter()
            .map(|&v| ((v / count as f64).sqrt() as f32).max(STD_FLOOR))
            .collect(),
    })
}
