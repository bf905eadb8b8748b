use ndarray::{s, Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Manifest, NormStats};
use crate::dsp::Spectrogram;
use crate::phoneme::PhonemeInventory;

pub const DEFAULT_BATCH_SIZE: usize = 5;

/// A tokenized training example pointing at its clip's features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPair {
    pub phonemes: Vec<usize>,
    pub label: usize,
    pub entry: usize,
}

/// Tokenized pairs plus normalized target frames, one matrix per clip.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub pairs: Vec<TrainingPair>,
    pub targets: Vec<Array2<f32>>,
    pub labels: Vec<String>,
}

impl Dataset {
    /// Tokenizes every transcription and normalizes every clip's features.
    /// `features` must be in manifest entry order.
    pub fn build(
        manifest: &Manifest,
        features: &[Spectrogram],
        inventory: &PhonemeInventory,
        norm: &NormStats,
    ) -> Result<Self, DataError> {
        if features.len() != manifest.entries.len() {
            return Err(DataError::Inconsistent(format!(
                "{} feature matrices for {} entries",
                features.len(),
                manifest.entries.len()
            )));
        }
        let mut pairs = Vec::with_capacity(manifest.n_pairs());
        for p in manifest.pairs() {
            let seq = inventory
                .tokenize(&p.onomatopoeia)
                .map_err(|source| DataError::Transcription {
                    text: p.onomatopoeia.clone(),
                    source,
                })?;
            pairs.push(TrainingPair {
                phonemes: seq.ids().to_vec(),
                label: p.label,
                entry: p.entry,
            });
        }
        let targets = features
            .iter()
            .map(|s| {
                if s.n_bins() == norm.n_bins() {
                    Ok(norm.normalize(s.frames()))
                } else {
                    Err(DataError::Inconsistent(format!(
                        "{}-bin features with {}-bin statistics",
                        s.n_bins(),
                        norm.n_bins()
                    )))
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            pairs,
            targets,
            labels: manifest.labels.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn n_bins(&self) -> usize {
        self.targets.first().map_or(0, |t| t.ncols())
    }

    /// Pads the selected pairs into one batch.
    pub fn collate(&self, indices: &[usize]) -> Batch {
        let bsz = indices.len();
        let max_t = indices
            .iter()
            .map(|&i| self.pairs[i].phonemes.len())
            .max()
            .unwrap_or(0);
        let max_frames = indices
            .iter()
            .map(|&i| self.targets[self.pairs[i].entry].nrows())
            .max()
            .unwrap_or(0);
        let bins = self.n_bins();
        let mut phonemes = Array2::zeros((bsz, max_t));
        let mut targets = Array3::zeros((bsz, max_frames, bins));
        let mut frame_mask = Array2::from_elem((bsz, max_frames), false);
        let mut phoneme_lengths = Vec::with_capacity(bsz);
        let mut frame_lengths = Vec::with_capacity(bsz);
        let mut labels = Vec::with_capacity(bsz);
        for (b, &i) in indices.iter().enumerate() {
            let pair = &self.pairs[i];
            let target = &self.targets[pair.entry];
            let (t, n) = (pair.phonemes.len(), target.nrows());
            for (k, &id) in pair.phonemes.iter().enumerate() {
                phonemes[[b, k]] = id;
            }
            targets.slice_mut(s![b, ..n, ..]).assign(target);
            frame_mask.slice_mut(s![b, ..n]).fill(true);
            phoneme_lengths.push(t);
            frame_lengths.push(n);
            labels.push(pair.label);
        }
        Batch {
            indices: indices.to_vec(),
            phonemes,
            phoneme_lengths,
            targets,
            frame_lengths,
            frame_mask,
            labels,
            n_classes: self.labels.len(),
        }
    }

    /// One epoch of batches over `indices`: a seeded shuffle, then
    /// consecutive chunks of `batch_size` (the last may be smaller).
    pub fn make_batches(&self, indices: &[usize], batch_size: usize, seed: u64) -> Vec<Batch> {
        batch_order(indices, batch_size, seed)
            .iter()
            .map(|chunk| self.collate(chunk))
            .collect()
    }
}

/// The shuffled chunking behind [`Dataset::make_batches`].
pub fn batch_order(indices: &[usize], batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
        .chunks(batch_size.max(1))
        .map(|c| c.to_vec())
        .collect()
}

/// A padded mini-batch. Phoneme ids past a row's length are 0 and target
/// frames past it are 0 with `frame_mask` false.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Pair indices into the dataset, in row order.
    pub indices: Vec<usize>,
    pub phonemes: Array2<usize>,
    pub phoneme_lengths: Vec<usize>,
    pub targets: Array3<f32>,
    pub frame_lengths: Vec<usize>,
    pub frame_mask: Array2<bool>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Unpadded phoneme ids of each row.
    pub fn sequences(&self) -> Vec<Vec<usize>> {
        self.phonemes
            .rows()
            .into_iter()
            .zip(&self.phoneme_lengths)
            .map(|(row, &n)| row.iter().take(n).copied().collect())
            .collect()
    }

    pub fn onehot_labels(&self) -> Array2<f32> {
        let mut out = Array2::zeros((self.len(), self.n_classes));
        for (b, &l) in self.labels.iter().enumerate() {
            out[[b, l]] = 1.0;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(frames: &[usize]) -> Dataset {
        let targets = frames
            .iter()
            .enumerate()
            .map(|(i, &n)| Array2::from_elem((n, 3), i as f32 + 1.0))
            .collect();
        let pairs = frames
            .iter()
            .enumerate()
            .map(|(i, _)| TrainingPair {
                phonemes: vec![1; i % 3 + 1],
                label: i % 2,
                entry: i,
            })
            .collect();
        Dataset {
            pairs,
            targets,
            labels: vec!["a".into(), "b".into()],
        }
    }

    #[test]
    fn remainder_batch() {
        let d = dataset(&[2, 3, 4, 2, 5, 1, 3]);
        let idx: Vec<usize> = (0..7).collect();
        let batches = d.make_batches(&idx, 5, 4);
        let sizes: Vec<usize> = batches.iter().map(|b| b.len()).collect();
        assert_eq!(sizes, [5, 2]);
        let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
        seen.sort();
        assert_eq!(seen, idx);
        assert_eq!(d.make_batches(&idx, 5, 4), batches);
        assert_ne!(batch_order(&idx, 5, 4), batch_order(&idx, 5, 5));
    }

    #[test]
    fn padding_and_masks() {
        let d = dataset(&[2, 4]);
        let b = d.collate(&[0, 1]);
        assert_eq!(b.targets.dim(), (2, 4, 3));
        assert_eq!(b.frame_lengths, [2, 4]);
        let mask: Vec<bool> = b.frame_mask.iter().copied().collect();
        assert_eq!(mask, [true, true, false, false, true, true, true, true]);
        assert_eq!(b.targets[[0, 3, 0]], 0.0);
        assert_eq!(b.targets[[0, 1, 0]], 1.0);
        assert_eq!(b.sequences(), [vec![1], vec![1, 1]]);
        assert_eq!(b.phonemes.dim(), (2, 2));
        assert_eq!(b.onehot_labels().row(1).to_vec(), [0.0, 1.0]);
    }
}
