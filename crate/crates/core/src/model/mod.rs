//! Sequence-to-sequence acoustic model.
//!
//! A one-layer bidirectional LSTM reads the embedded phoneme sequence and the
//! final hidden state of each direction is concatenated into the word vector
//! `nu = [nu_f, nu_b]`. The decoder is a two-layer LSTM that emits one
//! spectrogram frame per step from the previous frame. Its initial `(h, c)`
//! for both layers is a linear map of `nu`, or of `[nu; onehot(label)]` for
//! the label-conditioned variant; `h` goes through `tanh`. There is no
//! attention and no stop token: the caller chooses the output length.

mod checkpoint;

use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Graph, LstmCell, ParamId, ParamStore, Real, Var};
use crate::data::NormStats;
use crate::dsp::{self, DspError, GriffinLim, Spectrogram, Stft, Waveform};
use crate::phoneme::{PhonemeError, PhonemeInventory, PhonemeSequence};

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

/// Default inference length: 63 frames, about two seconds at a 512 hop.
pub const DEFAULT_FRAMES: usize = 63;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("phoneme id {id} out of range for a {vocab}-symbol inventory")]
    InvalidId { id: usize, vocab: usize },
    #[error("this model is conditioned on an event label but none was given")]
    MissingLabel,
    #[error("this model is not conditioned on event labels but a label was given")]
    UnexpectedLabel,
    #[error("unknown event label {0:?}")]
    UnknownLabel(String),
    #[error("teacher forcing requested without target frames")]
    MissingTargets,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Phoneme(#[from] PhonemeError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Inventory size V.
    pub vocab: usize,
    /// Phoneme embedding width E.
    pub embed_dim: usize,
    /// Units per encoder direction and per decoder layer, H.
    pub hidden: usize,
    /// Spectrogram bins F.
    pub n_bins: usize,
    /// Event classes C; only used when `conditioned`.
    pub n_labels: usize,
    pub conditioned: bool,
}

impl ModelConfig {
    /// Full-size setting: 512 units everywhere, 1025 bins, 10 classes.
    pub fn full(vocab: usize, conditioned: bool) -> Self {
        Self {
            vocab,
            embed_dim: 128,
            hidden: 512,
            n_bins: dsp::N_BINS,
            n_labels: 10,
            conditioned,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.vocab == 0 || self.embed_dim == 0 || self.hidden == 0 || self.n_bins == 0 {
            return Err(ModelError::InvalidConfig("dimensions must be positive".into()));
        }
        if self.conditioned && self.n_labels == 0 {
            return Err(ModelError::InvalidConfig(
                "a conditioned model needs at least one label".into(),
            ));
        }
        Ok(())
    }

    /// Width of the vector the decoder's initial state is projected from.
    pub fn init_dim(&self) -> usize {
        2 * self.hidden + if self.conditioned { self.n_labels } else { 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventLabel {
    index: usize,
    n_classes: usize,
}

impl EventLabel {
    pub fn new(index: usize, n_classes: usize) -> Result<Self, ModelError> {
        if index >= n_classes {
            return Err(ModelError::UnknownLabel(format!(
                "class {index} of {n_classes}"
            )));
        }
        Ok(Self { index, n_classes })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn onehot(&self) -> Vec<f32> {
        let mut v = vec![0.0; self.n_classes];
        v[self.index] = 1.0;
        v
    }
}

/// Final hidden states of the two encoder directions.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState<T> {
    pub nu_f: Array1<T>,
    pub nu_b: Array1<T>,
    pub nu: Array1<T>,
}

/// Initial `(h, c)` of both decoder layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<T> {
    pub h1: Array1<T>,
    pub c1: Array1<T>,
    pub h2: Array1<T>,
    pub c2: Array1<T>,
}

impl<T: Real> DecoderState<T> {
    pub fn flat(&self) -> Vec<T> {
        [&self.h1, &self.c1, &self.h2, &self.c2]
            .iter()
            .flat_map(|a| a.iter().copied())
            .collect()
    }
}

/// Decoder state on a graph, batched along rows.
#[derive(Debug, Clone, Copy)]
pub struct DecoderVars {
    pub h1: Var,
    pub c1: Var,
    pub h2: Var,
    pub c2: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct EncodedVars {
    pub nu_f: Var,
    pub nu_b: Var,
    pub nu: Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    embedding: ParamId,
    enc_fwd: LstmCell,
    enc_bwd: LstmCell,
    dec1: LstmCell,
    dec2: LstmCell,
    init_h1: ParamId,
    init_c1: ParamId,
    init_h2: ParamId,
    init_c2: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

impl Layout {
    fn find<T: Real>(store: &ParamStore<T>) -> Result<Self, AutodiffError> {
        let get = |name: &str| {
            store
                .find(name)
                .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
        };
        Ok(Self {
            embedding: get("embedding")?,
            enc_fwd: LstmCell::from_store(store, "encoder.fwd")?,
            enc_bwd: LstmCell::from_store(store, "encoder.bwd")?,
            dec1: LstmCell::from_store(store, "decoder.l1")?,
            dec2: LstmCell::from_store(store, "decoder.l2")?,
            init_h1: get("init.h1")?,
            init_c1: get("init.c1")?,
            init_h2: get("init.h2")?,
            init_c2: get("init.c2")?,
            out_w: get("output.w")?,
            out_b: get("output.b")?,
        })
    }
}

/// Model weights plus the feature statistics its outputs are expressed in.
#[derive(Debug, Clone)]
pub struct Seq2Seq<T> {
    config: ModelConfig,
    store: ParamStore<T>,
    layout: Layout,
    norm: NormStats,
}

impl<T: Real> Seq2Seq<T> {
    /// Seeded initialization: matrices uniform in `±1/sqrt(H)`, LSTM input
    /// weights in `±1/sqrt(max(H, D))`, biases zero except LSTM forget
    /// gates at 1.
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let ModelConfig {
            vocab,
            embed_dim,
            hidden,
            n_bins,
            ..
        } = config;
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut store = ParamStore::new();
        store.add_uniform("embedding", (vocab, embed_dim), bound, rng);
        LstmCell::new(&mut store, "encoder.fwd", embed_dim, hidden, rng);
        LstmCell::new(&mut store, "encoder.bwd", embed_dim, hidden, rng);
        LstmCell::new(&mut store, "decoder.l1", n_bins, hidden, rng);
        LstmCell::new(&mut store, "decoder.l2", hidden, hidden, rng);
        let z = config.init_dim();
        for name in ["init.h1", "init.c1", "init.h2", "init.c2"] {
            store.add_uniform(name, (hidden, z), bound, rng);
        }
        store.add_uniform("output.w", (n_bins, hidden), bound, rng);
        store.add("output.b", Array2::zeros((1, n_bins)));
        Self::from_parts(config, store, NormStats::identity(n_bins))
    }

    pub fn from_parts(
        config: ModelConfig,
        store: ParamStore<T>,
        norm: NormStats,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::find(&store)?;
        let expect = |id: ParamId, shape: (usize, usize)| {
            let got = store.value(id).dim();
            if got == shape {
                Ok(())
            } else {
                Err(ModelError::InvalidConfig(format!(
                    "{} is {got:?}, expected {shape:?}",
                    store.name(id)
                )))
            }
        };
        let (h, z) = (config.hidden, config.init_dim());
        expect(layout.embedding, (config.vocab, config.embed_dim))?;
        expect(layout.enc_fwd.w_x, (4 * h, config.embed_dim))?;
        expect(layout.enc_bwd.w_x, (4 * h, config.embed_dim))?;
        expect(layout.enc_fwd.w_h, (4 * h, h))?;
        expect(layout.enc_bwd.w_h, (4 * h, h))?;
        expect(layout.dec1.w_x, (4 * h, config.n_bins))?;
        expect(layout.dec1.w_h, (4 * h, h))?;
        expect(layout.dec2.w_x, (4 * h, h))?;
        expect(layout.dec2.w_h, (4 * h, h))?;
        for id in [layout.init_h1, layout.init_c1, layout.init_h2, layout.init_c2] {
            expect(id, (h, z))?;
        }
        expect(layout.out_w, (config.n_bins, h))?;
        expect(layout.out_b, (1, config.n_bins))?;
        if norm.n_bins() != config.n_bins || norm.std.iter().any(|&s| !(s > 0.0)) {
            return Err(ModelError::InvalidConfig(
                "feature statistics do not match the bin count or have non-positive std".into(),
            ));
        }
        Ok(Self {
            config,
            store,
            layout,
            norm,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    pub fn set_norm(&mut self, norm: NormStats) -> Result<(), ModelError> {
        if norm.n_bins() != self.config.n_bins {
            return Err(ModelError::InvalidConfig(format!(
                "{} normalization bins for a {}-bin model",
                norm.n_bins(),
                self.config.n_bins
            )));
        }
        self.norm = norm;
        Ok(())
    }

    /// Same weights in another precision.
    pub fn cast<U: Real>(&self) -> Seq2Seq<U> {
        Seq2Seq {
            config: self.config,
            store: self.store.cast(),
            layout: self.layout,
            norm: self.norm.clone(),
        }
    }

    fn check_ids(&self, ids: &[usize]) -> Result<(), ModelError> {
        match ids.iter().find(|&&id| id >= self.config.vocab) {
            Some(&id) => Err(ModelError::InvalidId {
                id,
                vocab: self.config.vocab,
            }),
            None => Ok(()),
        }
    }

    /// Runs the bidirectional encoder over a padded batch. Each sequence's
    /// state only advances on its own tokens, so the backward direction
    /// starts from zero at the sequence's last real token.
    pub fn encode_graph(
        &self,
        g: &mut Graph<T>,
        seqs: &[&[usize]],
    ) -> Result<EncodedVars, ModelError> {
        if seqs.is_empty() || seqs.iter().any(|s| s.is_empty()) {
            return Err(ModelError::LengthMismatch("empty phoneme sequence".into()));
        }
        for s in seqs {
            self.check_ids(s)?;
        }
        let batch = seqs.len();
        let h = self.config.hidden;
        let max_len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let table = g.param(&self.store, self.layout.embedding);

        let run = |g: &mut Graph<T>, cell: &LstmCell, order: &mut dyn Iterator<Item = usize>| {
            let mut hv = g.zeros(batch, h);
            let mut cv = g.zeros(batch, h);
            for t in order {
                let ids: Vec<usize> = seqs.iter().map(|s| s.get(t).copied().unwrap_or(0)).collect();
                let mask: Vec<bool> = seqs.iter().map(|s| t < s.len()).collect();
                let x = g.gather(table, &ids)?;
                let (hn, cn) = cell.step(g, &self.store, x, hv, cv)?;
                if mask.iter().all(|&m| m) {
                    hv = hn;
                    cv = cn;
                } else {
                    hv = g.select_rows(&mask, hn, hv)?;
                    cv = g.select_rows(&mask, cn, cv)?;
                }
            }
            Ok::<Var, AutodiffError>(hv)
        };
        let nu_f = run(g, &self.layout.enc_fwd, &mut (0..max_len))?;
        let nu_b = run(g, &self.layout.enc_bwd, &mut (0..max_len).rev())?;
        let nu = g.concat(&[nu_f, nu_b])?;
        Ok(EncodedVars { nu_f, nu_b, nu })
    }

    /// Projects `nu` (or `[nu; c]`) to the decoder's initial state. `labels`
    /// holds one class index per batch row.
    pub fn init_decoder_graph(
        &self,
        g: &mut Graph<T>,
        nu: Var,
        labels: Option<&[usize]>,
    ) -> Result<DecoderVars, ModelError> {
        let batch = g.shape(nu).0;
        let z = match (self.config.conditioned, labels) {
            (true, None) => return Err(ModelError::MissingLabel),
            (false, Some(_)) => return Err(ModelError::UnexpectedLabel),
            (false, None) => nu,
            (true, Some(labels)) => {
                if labels.len() != batch {
                    return Err(ModelError::LengthMismatch(format!(
                        "{} labels for a batch of {batch}",
                        labels.len()
                    )));
                }
                let c = self.config.n_labels;
                let mut onehot = Array2::zeros((batch, c));
                for (row, &l) in labels.iter().enumerate() {
                    if l >= c {
                        return Err(ModelError::UnknownLabel(format!("class {l} of {c}")));
                    }
                    onehot[[row, l]] = T::one();
                }
                let cv = g.input(onehot);
                g.concat(&[nu, cv])?
            }
        };
        let mut project = |id: ParamId| {
            let p = g.param(&self.store, id);
            g.matmul_t(z, p)
        };
        let h1 = project(self.layout.init_h1)?;
        let c1 = project(self.layout.init_c1)?;
        let h2 = project(self.layout.init_h2)?;
        let c2 = project(self.layout.init_c2)?;
        let h1 = g.tanh(h1);
        let h2 = g.tanh(h2);
        Ok(DecoderVars { h1, c1, h2, c2 })
    }

    /// Autoregressive decoding of `t_out` frames (normalized units).
    ///
    /// Step 0 reads an all-zero frame. Afterwards, for every batch row and
    /// step, a Bernoulli(`tf_rate`) draw decides between the ground-truth
    /// previous frame from `targets` (`B x T' x F`, `T' == t_out`) and the
    /// model's own previous output. With `tf_rate == 0` neither `targets`
    /// nor `rng` is touched.
    pub fn decode_graph<R: Rng>(
        &self,
        g: &mut Graph<T>,
        init: DecoderVars,
        t_out: usize,
        targets: Option<&Array3<T>>,
        tf_rate: f64,
        rng: &mut R,
    ) -> Result<Vec<Var>, ModelError> {
        if t_out == 0 {
            return Err(ModelError::LengthMismatch("at least one frame required".into()));
        }
        if !(0.0..=1.0).contains(&tf_rate) {
            return Err(ModelError::InvalidConfig(format!("teacher forcing rate {tf_rate}")));
        }
        let batch = g.shape(init.h1).0;
        let bins = self.config.n_bins;
        let forced = if tf_rate > 0.0 {
            let t = targets.ok_or(ModelError::MissingTargets)?;
            if t.dim() != (batch, t_out, bins) {
                return Err(ModelError::LengthMismatch(format!(
                    "targets {:?}, expected ({batch}, {t_out}, {bins})",
                    t.dim()
                )));
            }
            Some(t)
        } else {
            None
        };
        let out_w = g.param(&self.store, self.layout.out_w);
        let out_b = g.param(&self.store, self.layout.out_b);
        let DecoderVars {
            mut h1,
            mut c1,
            mut h2,
            mut c2,
        } = init;
        let mut frames = Vec::with_capacity(t_out);
        let mut input = g.zeros(batch, bins);
        for t in 0..t_out {
            if t > 0 {
                let prev = frames[t - 1];
                input = match forced {
                    None => prev,
                    Some(targets) => {
                        let use_truth: Vec<bool> =
                            (0..batch).map(|_| rng.gen::<f64>() < tf_rate).collect();
                        if use_truth.iter().any(|&u| u) {
                            let truth = g.input(targets.index_axis(Axis(1), t - 1).to_owned());
                            if use_truth.iter().all(|&u| u) {
                                truth
                            } else {
                                g.select_rows(&use_truth, truth, prev)?
                            }
                        } else {
                            prev
                        }
                    }
                };
            }
            (h1, c1) = self.layout.dec1.step(g, &self.store, input, h1, c1)?;
            (h2, c2) = self.layout.dec2.step(g, &self.store, h1, h2, c2)?;
            let y = g.matmul_t(h2, out_w)?;
            let y = g.add_bias(y, out_b)?;
            frames.push(y);
        }
        Ok(frames)
    }

    /// Masked L1 loss of a padded batch: `targets` is `B x T' x F` in
    /// normalized units, `lengths` the real frame count of each row.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_loss<R: Rng>(
        &self,
        g: &mut Graph<T>,
        phonemes: &[&[usize]],
        labels: Option<&[usize]>,
        targets: &Array3<T>,
        lengths: &[usize],
        tf_rate: f64,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let (batch, t_max, bins) = targets.dim();
        if phonemes.len() != batch || lengths.len() != batch {
            return Err(ModelError::LengthMismatch(format!(
                "{} sequences, {} lengths, {batch} target rows",
                phonemes.len(),
                lengths.len()
            )));
        }
        let enc = self.encode_graph(g, phonemes)?;
        let init = self.init_decoder_graph(g, enc.nu, labels)?;
        let frames = self.decode_graph(g, init, t_max, Some(targets), tf_rate, rng)?;
        let pred = g.stack(&frames)?;
        // rows ordered (step, example) to match the stacked predictions
        let mut flat = Array2::zeros((t_max * batch, bins));
        let mut mask = Vec::with_capacity(t_max * batch);
        for t in 0..t_max {
            for b in 0..batch {
                flat.row_mut(t * batch + b)
                    .assign(&targets.slice(s![b, t, ..]));
                mask.push(t < lengths[b]);
            }
        }
        let target = g.input(flat);
        Ok(g.masked_l1(pred, target, &mask)?)
    }

    pub fn encode(&self, l: &PhonemeSequence) -> Result<EncoderState<T>, ModelError> {
        let mut g = Graph::new();
        let enc = self.encode_graph(&mut g, &[l.ids()])?;
        let row = |v: Var| g.value(v).row(0).to_owned();
        Ok(EncoderState {
            nu_f: row(enc.nu_f),
            nu_b: row(enc.nu_b),
            nu: row(enc.nu),
        })
    }

    pub fn init_decoder(
        &self,
        enc: &EncoderState<T>,
        label: Option<&EventLabel>,
    ) -> Result<DecoderState<T>, ModelError> {
        if let Some(l) = label {
            if self.config.conditioned && l.n_classes() != self.config.n_labels {
                return Err(ModelError::UnknownLabel(format!(
                    "label over {} classes for a {}-class model",
                    l.n_classes(),
                    self.config.n_labels
                )));
            }
        }
        let mut g = Graph::new();
        let nu = g.input(enc.nu.clone().insert_axis(Axis(0)));
        let labels = label.map(|l| [l.index()]);
        let st = self.init_decoder_graph(&mut g, nu, labels.as_ref().map(|l| &l[..]))?;
        let row = |v: Var| g.value(v).row(0).to_owned();
        Ok(DecoderState {
            h1: row(st.h1),
            c1: row(st.c1),
            h2: row(st.h2),
            c2: row(st.c2),
        })
    }

    /// Single-sequence decode; `targets` is `t_out x F` when given.
    pub fn decode<R: Rng>(
        &self,
        state: &DecoderState<T>,
        t_out: usize,
        targets: Option<&Array2<T>>,
        tf_rate: f64,
        rng: &mut R,
    ) -> Result<Array2<T>, ModelError> {
        let mut g = Graph::new();
        let mut input = |a: &Array1<T>| g.input(a.clone().insert_axis(Axis(0)));
        let init = DecoderVars {
            h1: input(&state.h1),
            c1: input(&state.c1),
            h2: input(&state.h2),
            c2: input(&state.c2),
        };
        let targets = targets.map(|t| t.clone().insert_axis(Axis(0)));
        let frames = self.decode_graph(&mut g, init, t_out, targets.as_ref(), tf_rate, rng)?;
        let stacked = g.stack(&frames)?;
        Ok(g.value(stacked).clone())
    }

    /// Free-running prediction in normalized units, `t_out x F`.
    pub fn predict(
        &self,
        l: &PhonemeSequence,
        label: Option<&EventLabel>,
        t_out: usize,
    ) -> Result<Array2<T>, ModelError> {
        let enc = self.encode(l)?;
        let state = self.init_decoder(&enc, label)?;
        // tf_rate 0 never draws, so any rng will do
        self.decode(&state, t_out, None, 0.0, &mut rand::rngs::mock::StepRng::new(0, 0))
    }

    /// Log-amplitude spectrogram in natural units (de-normalized and raised
    /// to the amplitude floor).
    pub fn predict_spectrogram(
        &self,
        l: &PhonemeSequence,
        label: Option<&EventLabel>,
        t_out: usize,
    ) -> Result<Spectrogram, ModelError> {
        let normalized = self.predict(l, label, t_out)?.mapv(|v| v.as_f64() as f32);
        let frames = self.norm.denormalize(&normalized);
        let win = 2 * (self.config.n_bins - 1);
        Ok(Spectrogram::from_unclamped(
            frames,
            win,
            dsp::HOP.min(win),
            dsp::SAMPLE_RATE,
        )?)
    }

    /// Phonemes (and label) to waveform: encode, initialize, free-running
    /// decode, de-normalize, Griffin-Lim.
    pub fn synthesize(
        &self,
        l: &PhonemeSequence,
        label: Option<&EventLabel>,
        t_out: usize,
        gl_iters: usize,
        seed: Option<u64>,
    ) -> Result<Synthesis, ModelError> {
        let spectrogram = self.predict_spectrogram(l, label, t_out)?;
        let stft = Stft::new(spectrogram.win_len(), spectrogram.hop());
        let waveform = GriffinLim::new(gl_iters, seed).reconstruct(&stft, &spectrogram)?;
        Ok(Synthesis {
            spectrogram,
            waveform,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub spectrogram: Spectrogram,
    pub waveform: Waveform,
}

/// A model together with the vocabulary it was trained on: the phoneme
/// inventory and the ordered event-class names.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Seq2Seq<f32>,
    pub inventory: PhonemeInventory,
    pub labels: Vec<String>,
}

impl TrainedModel {
    pub fn conditioned(&self) -> bool {
        self.model.config().conditioned
    }

    /// Resolves an optional label name against the model, enforcing that a
    /// label is given exactly when the model is conditioned.
    pub fn resolve_label(&self, name: Option<&str>) -> Result<Option<EventLabel>, ModelError> {
        match (self.conditioned(), name) {
            (true, None) => Err(ModelError::MissingLabel),
            (false, Some(_)) => Err(ModelError::UnexpectedLabel),
            (false, None) => Ok(None),
            (true, Some(name)) => {
                let idx = self
                    .labels
                    .iter()
                    .position(|l| l == name)
                    .ok_or_else(|| ModelError::UnknownLabel(name.to_string()))?;
                Ok(Some(EventLabel::new(idx, self.labels.len())?))
            }
        }
    }

    pub fn synthesize_text(
        &self,
        phonemes: &str,
        label: Option<&str>,
        t_out: usize,
        gl_iters: usize,
        seed: Option<u64>,
    ) -> Result<Synthesis, ModelError> {
        let seq = self.inventory.tokenize(phonemes)?;
        let label = self.resolve_label(label)?;
        self.model
            .synthesize(&seq, label.as_ref(), t_out, gl_iters, seed)
    }
}
