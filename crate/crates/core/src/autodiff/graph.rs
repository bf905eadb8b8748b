use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis};

use super::{AutodiffError, ParamId, ParamStore, Real};

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    /// `a . w^T`
    MatMulT(Var, Var),
    /// `a + bias` with a `1 x n` bias broadcast over rows
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Cols(Var, usize),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Gather(Var, Vec<usize>),
    RowScale(Var, Vec<T>),
    Scale(Var, T),
    Sum(Var),
    MaskedL1 {
        pred: Var,
        target: Var,
        mask: Vec<bool>,
    },
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    value: Array2<T>,
    needs_grad: bool,
}

/// Computation tape. Nodes are appended in evaluation order, so the tape is
/// already topologically sorted.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: Vec<Option<Var>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(what: &str, a: (usize, usize), b: (usize, usize)) -> AutodiffError {
    AutodiffError::ShapeMismatch(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, op: Op<T>, value: Array2<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant; no gradient flows into it.
    pub fn input(&mut self, value: Array2<T>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.input(Array2::zeros((rows, cols)))
    }

    /// Brings a parameter onto the tape. Repeated calls for the same id
    /// return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if self.params.len() <= id.0 {
            self.params.resize(id.0 + 1, None);
        }
        if let Some(v) = self.params[id.0] {
            return v;
        }
        let v = self.push(Op::Param(id), store.value(id).clone(), true);
        self.params[id.0] = Some(v);
        v
    }

    pub fn matmul_t(&mut self, a: Var, w: Var) -> Result<Var, AutodiffError> {
        let (sa, sw) = (self.shape(a), self.shape(w));
        if sa.1 != sw.1 {
            return Err(mismatch("matmul_t", sa, sw));
        }
        let value = self.value(a).dot(&self.value(w).t());
        let ng = self.needs(a) || self.needs(w);
        Ok(self.push(Op::MatMulT(a, w), value, ng))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb.0 != 1 || sa.1 != sb.1 {
            return Err(mismatch("add_bias", sa, sb));
        }
        let value = self.value(a) + self.value(bias);
        let ng = self.needs(a) || self.needs(bias);
        Ok(self.push(Op::AddBias(a, bias), value, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch("add", sa, sb));
        }
        let value = self.value(a) + self.value(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), value, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch("mul", sa, sb));
        }
        let value = self.value(a) * self.value(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), value, ng))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        let ng = self.needs(a);
        self.push(Op::Sigmoid(a), value, ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.tanh());
        let ng = self.needs(a);
        self.push(Op::Tanh(a), value, ng)
    }

    /// Columns `start..start + len`.
    pub fn cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let sa = self.shape(a);
        if start + len > sa.1 || len == 0 {
            return Err(AutodiffError::ShapeMismatch(format!(
                "cols {start}..{} of {}x{}",
                start + len,
                sa.0,
                sa.1
            )));
        }
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        let ng = self.needs(a);
        Ok(self.push(Op::Cols(a, start), value, ng))
    }

    /// Side-by-side concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let rows = parts
            .first()
            .map(|&p| self.shape(p).0)
            .ok_or_else(|| AutodiffError::ShapeMismatch("concat of nothing".into()))?;
        if let Some(&p) = parts.iter().find(|&&p| self.shape(p).0 != rows) {
            return Err(mismatch("concat", (rows, 0), self.shape(p)));
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("rows checked");
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Op::Concat(parts.to_vec()), value, ng))
    }

    /// Vertical stacking; used to gather per-step frames into one matrix.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let cols = parts
            .first()
            .map(|&p| self.shape(p).1)
            .ok_or_else(|| AutodiffError::ShapeMismatch("stack of nothing".into()))?;
        if let Some(&p) = parts.iter().find(|&&p| self.shape(p).1 != cols) {
            return Err(mismatch("stack", (0, cols), self.shape(p)));
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("cols checked");
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Op::Stack(parts.to_vec()), value, ng))
    }

    /// Rows of `table` selected by `ids` (embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var, AutodiffError> {
        let rows = self.shape(table).0;
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(AutodiffError::ShapeMismatch(format!(
                "row {bad} out of range for {rows}-row table"
            )));
        }
        let value = self.value(table).select(Axis(0), ids);
        let ng = self.needs(table);
        Ok(self.push(Op::Gather(table, ids.to_vec()), value, ng))
    }

    /// Multiplies row `i` by the constant `scales[i]`.
    pub fn row_scale(&mut self, a: Var, scales: &[T]) -> Result<Var, AutodiffError> {
        let sa = self.shape(a);
        if scales.len() != sa.0 {
            return Err(mismatch("row_scale", sa, (scales.len(), 1)));
        }
        let mut value = self.value(a).clone();
        for (mut row, &k) in value.rows_mut().into_iter().zip(scales) {
            row.mapv_inplace(|x| x * k);
        }
        let ng = self.needs(a);
        Ok(self.push(Op::RowScale(a, scales.to_vec()), value, ng))
    }

    /// Per-row selection `mask[i] ? a[i] : b[i]`, built from differentiable
    /// primitives.
    pub fn select_rows(&mut self, mask: &[bool], a: Var, b: Var) -> Result<Var, AutodiffError> {
        let on: Vec<T> = mask.iter().map(|&m| if m { T::one() } else { T::zero() }).collect();
        let off: Vec<T> = mask.iter().map(|&m| if m { T::zero() } else { T::one() }).collect();
        let a = self.row_scale(a, &on)?;
        let b = self.row_scale(b, &off)?;
        self.add(a, b)
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let value = self.value(a).mapv(|x| x * k);
        let ng = self.needs(a);
        self.push(Op::Scale(a, k), value, ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        let ng = self.needs(a);
        self.push(Op::Sum(a), value, ng)
    }

    /// Mean absolute error over the rows where `mask` is true and all
    /// columns. `target` is treated as a constant.
    pub fn masked_l1(&mut self, pred: Var, target: Var, mask: &[bool]) -> Result<Var, AutodiffError> {
        let loss = l1_loss(self.value(pred), self.value(target), mask)?;
        let ng = self.needs(pred);
        Ok(self.push(
            Op::MaskedL1 {
                pred,
                target,
                mask: mask.to_vec(),
            },
            Array2::from_elem((1, 1), loss),
            ng,
        ))
    }

    /// Reverse pass from a scalar node. Parameter gradients are added to the
    /// store's accumulators, so calling twice without
    /// [`ParamStore::zero_grad`] doubles them.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<(), AutodiffError> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(AutodiffError::NonScalarLoss(r, c));
        }
        let mut grads: Vec<Option<Array2<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    *store.grad_mut(*id) += &g;
                }
                Op::MatMulT(a, w) => {
                    if self.needs(*a) {
                        let wv = self.value(*w);
                        let slot = slot(&mut grads, *a, self.shape(*a));
                        general_mat_mul(T::one(), &g, wv, T::one(), slot);
                    }
                    if self.needs(*w) {
                        let av = self.value(*a);
                        let slot = slot(&mut grads, *w, self.shape(*w));
                        general_mat_mul(T::one(), &g.t(), av, T::one(), slot);
                    }
                }
                Op::AddBias(a, b) => {
                    if self.needs(*b) {
                        let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        *slot(&mut grads, *b, self.shape(*b)) += &db;
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) && self.needs(*b) {
                        *slot(&mut grads, *a, self.shape(*a)) += &g;
                        accumulate(&mut grads, *b, g);
                    } else if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    } else if self.needs(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        let d = &g * self.value(*b);
                        accumulate(&mut grads, *a, d);
                    }
                    if self.needs(*b) {
                        let d = &g * self.value(*a);
                        accumulate(&mut grads, *b, d);
                    }
                }
                Op::Sigmoid(a) => {
                    let mut d = g;
                    d.zip_mut_with(&node.value, |d, &y| *d *= y * (T::one() - y));
                    accumulate(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let mut d = g;
                    d.zip_mut_with(&node.value, |d, &y| *d *= T::one() - y * y);
                    accumulate(&mut grads, *a, d);
                }
                Op::Cols(a, start) => {
                    if self.needs(*a) {
                        let len = g.ncols();
                        let slot = slot(&mut grads, *a, self.shape(*a));
                        let mut view = slot.slice_mut(s![.., *start..*start + len]);
                        view += &g;
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        if self.needs(p) {
                            let piece = g.slice(s![.., offset..offset + w]).to_owned();
                            accumulate(&mut grads, p, piece);
                        }
                        offset += w;
                    }
                }
                Op::Stack(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let h = self.shape(p).0;
                        if self.needs(p) {
                            let piece = g.slice(s![offset..offset + h, ..]).to_owned();
                            accumulate(&mut grads, p, piece);
                        }
                        offset += h;
                    }
                }
                Op::Gather(table, ids) => {
                    let slot = slot(&mut grads, *table, self.shape(*table));
                    for (row, &id) in g.rows().into_iter().zip(ids) {
                        let mut dst = slot.row_mut(id);
                        dst += &row;
                    }
                }
                Op::RowScale(a, scales) => {
                    let mut d = g;
                    for (mut row, &k) in d.rows_mut().into_iter().zip(scales) {
                        row.mapv_inplace(|x| x * k);
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::Scale(a, k) => {
                    let k = *k;
                    accumulate(&mut grads, *a, g.mapv(|x| x * k));
                }
                Op::Sum(a) => {
                    let k = g[[0, 0]];
                    accumulate(&mut grads, *a, Array2::from_elem(self.shape(*a), k));
                }
                Op::MaskedL1 { pred, target, mask } => {
                    let count = mask.iter().filter(|&&m| m).count();
                    let (rows, cols) = self.shape(*pred);
                    let k = g[[0, 0]] / T::from_f64((count * cols) as f64);
                    let p = self.value(*pred);
                    let t = self.value(*target);
                    let mut d = Array2::zeros((rows, cols));
                    for (r, &m) in mask.iter().enumerate() {
                        if !m {
                            continue;
                        }
                        for c in 0..cols {
                            let diff = p[[r, c]] - t[[r, c]];
                            d[[r, c]] = if diff > T::zero() {
                                k
                            } else if diff < T::zero() {
                                -k
                            } else {
                                T::zero()
                            };
                        }
                    }
                    accumulate(&mut grads, *pred, d);
                }
            }
        }
        Ok(())
    }
}

fn slot<T: Real>(
    grads: &mut [Option<Array2<T>>],
    v: Var,
    shape: (usize, usize),
) -> &mut Array2<T> {
    grads[v.0].get_or_insert_with(|| Array2::zeros(shape))
}

fn accumulate<T: Real>(grads: &mut [Option<Array2<T>>], v: Var, d: Array2<T>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &d,
        empty => *empty = Some(d),
    }
}

/// Mean of `|pred - target|` over masked rows and all columns.
pub fn l1_loss<T: Real>(
    pred: &Array2<T>,
    target: &Array2<T>,
    mask: &[bool],
) -> Result<T, AutodiffError> {
    if pred.dim() != target.dim() {
        return Err(mismatch("l1_loss", pred.dim(), target.dim()));
    }
    if mask.len() != pred.nrows() {
        return Err(mismatch("l1_loss mask", pred.dim(), (mask.len(), 1)));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(AutodiffError::EmptyMask);
    }
    let mut total = 0.0f64;
    for ((p, t), &m) in pred.rows().into_iter().zip(target.rows()).zip(mask) {
        if m {
            total += p
                .iter()
                .zip(t.iter())
                .map(|(&a, &b)| (a - b).abs().as_f64())
                .sum::<f64>();
        }
    }
    Ok(T::from_f64(total / (count * pred.ncols()) as f64))
}
