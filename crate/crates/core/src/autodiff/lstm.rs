use ndarray::{s, Array1, Array2};
use rand::Rng;

use super::{AutodiffError, Graph, ParamId, ParamStore, Real, Var};

/// Plain LSTM weights. Gate blocks are stacked in the order input, forget,
/// cell candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams<T> {
    /// `4H x D`
    pub w_x: Array2<T>,
    /// `4H x H`
    pub w_h: Array2<T>,
    /// `1 x 4H`
    pub b: Array2<T>,
}

impl<T: Real> LstmCellParams<T> {
    pub fn hidden(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_x.ncols()
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// One LSTM step outside any graph:
/// `c' = f*c + i*g`, `h' = o*tanh(c')`.
pub fn lstm_step<T: Real>(
    p: &LstmCellParams<T>,
    x: &Array1<T>,
    h: &Array1<T>,
    c: &Array1<T>,
) -> Result<(Array1<T>, Array1<T>), AutodiffError> {
    let hd = p.hidden();
    if p.w_h.nrows() != 4 * hd
        || p.w_x.nrows() != 4 * hd
        || p.b.dim() != (1, 4 * hd)
        || x.len() != p.input()
        || h.len() != hd
        || c.len() != hd
    {
        return Err(AutodiffError::ShapeMismatch(format!(
            "lstm_step: w_x {:?}, w_h {:?}, b {:?}, x {}, h {}, c {}",
            p.w_x.dim(),
            p.w_h.dim(),
            p.b.dim(),
            x.len(),
            h.len(),
            c.len()
        )));
    }
    let z = p.w_x.dot(x) + p.w_h.dot(h) + p.b.row(0);
    let i = z.slice(s![0..hd]).mapv(sigmoid);
    let f = z.slice(s![hd..2 * hd]).mapv(sigmoid);
    let g = z.slice(s![2 * hd..3 * hd]).mapv(|v| v.tanh());
    let o = z.slice(s![3 * hd..4 * hd]).mapv(sigmoid);
    let c_next = &f * c + &i * &g;
    let h_next = &o * &c_next.mapv(|v| v.tanh());
    Ok((h_next, c_next))
}

/// LSTM cell whose weights live in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    /// Registers `{prefix}.w_x`, `{prefix}.w_h` and `{prefix}.b`. Weights are
    /// uniform in `±1/sqrt(hidden)`, widened to `±1/sqrt(max(hidden, input))`
    /// for `w_x` so wide inputs such as 1025-bin frames do not saturate the
    /// gates. The bias is zero except the forget block, which starts at 1.
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let x_bound = 1.0 / (hidden.max(input) as f64).sqrt();
        let w_x = store.add_uniform(format!("{prefix}.w_x"), (4 * hidden, input), x_bound, rng);
        let w_h = store.add_uniform(format!("{prefix}.w_h"), (4 * hidden, hidden), bound, rng);
        let mut bias = Array2::zeros((1, 4 * hidden));
        bias.slice_mut(s![.., hidden..2 * hidden]).fill(T::one());
        let b = store.add(format!("{prefix}.b"), bias);
        Self {
            w_x,
            w_h,
            b,
            input,
            hidden,
        }
    }

    pub fn from_store<T: Real>(store: &ParamStore<T>, prefix: &str) -> Result<Self, AutodiffError> {
        let find = |suffix: &str| {
            let name = format!("{prefix}.{suffix}");
            store.find(&name).ok_or(AutodiffError::UnknownParam(name))
        };
        let (w_x, w_h, b) = (find("w_x")?, find("w_h")?, find("b")?);
        let hidden = store.value(w_h).ncols();
        let input = store.value(w_x).ncols();
        Ok(Self {
            w_x,
            w_h,
            b,
            input,
            hidden,
        })
    }

    pub fn params<T: Real>(&self, store: &ParamStore<T>) -> LstmCellParams<T> {
        LstmCellParams {
            w_x: store.value(self.w_x).clone(),
            w_h: store.value(self.w_h).clone(),
            b: store.value(self.b).clone(),
        }
    }

    /// Batched step on the tape; `x` is `B x D`, `h` and `c` are `B x H`.
    pub fn step<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var), AutodiffError> {
        let hd = self.hidden;
        let w_x = g.param(store, self.w_x);
        let w_h = g.param(store, self.w_h);
        let b = g.param(store, self.b);
        let zx = g.matmul_t(x, w_x)?;
        let zh = g.matmul_t(h, w_h)?;
        let z = g.add(zx, zh)?;
        let z = g.add_bias(z, b)?;
        let i = g.cols(z, 0, hd)?;
        let f = g.cols(z, hd, hd)?;
        let cand = g.cols(z, 2 * hd, hd)?;
        let o = g.cols(z, 3 * hd, hd)?;
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let cand = g.tanh(cand);
        let o = g.sigmoid(o);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_next = g.add(keep, write)?;
        let squashed = g.tanh(c_next);
        let h_next = g.mul(o, squashed)?;
        Ok((h_next, c_next))
    }
}
