//! Tape-based reverse-mode differentiation.
//!
//! Operations are evaluated eagerly when they are recorded, so values are
//! available immediately. Nodes are appended in evaluation order, which makes
//! a reverse sweep over the tape a valid topological order for backward.

use crate::error::{NeuralError, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

type CustomBackward = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

enum Op {
    Constant,
    Param(ParamId),
    Row {
        table: ParamId,
        index: usize,
    },
    MatVec(Var, Var),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBias(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Slice {
        input: Var,
        start: usize,
    },
    AppendOnes(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Sum(Var),
    Gather {
        input: Var,
        indices: Vec<usize>,
    },
    BceWithLogits {
        logits: Var,
        labels: Vec<f64>,
    },
    Custom {
        inputs: Vec<Var>,
        backward: CustomBackward,
    },
}

struct Node {
    op: Op,
    // `None` for parameter leaves, whose value lives in the store.
    value: Option<Tensor>,
}

/// Gradients produced by one backward sweep.
#[derive(Debug, Default)]
pub struct Gradients {
    dense: Vec<(ParamId, Tensor)>,
    rows: Vec<(ParamId, usize, Vec<f64>)>,
}

impl Gradients {
    pub fn dense(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.dense.iter().map(|(id, t)| (*id, t))
    }

    pub fn sparse_rows(&self) -> impl Iterator<Item = &(ParamId, usize, Vec<f64>)> {
        self.rows.iter()
    }

    /// Materializes the full gradient of one parameter (zeros if untouched).
    pub fn for_param(&self, id: ParamId, store: &ParamStore) -> Tensor {
        let mut out = Tensor::zeros_like(store.value(id));
        for (pid, t) in &self.dense {
            if *pid == id {
                out.add_assign(t);
            }
        }
        for (pid, row, g) in &self.rows {
            if *pid == id {
                for (a, b) in out.row_mut(*row).iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        out
    }
}

/// A recorded computation over the parameters of one [`ParamStore`].
pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    consumed: bool,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NeuralError {
    NeuralError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        debug_assert!(value.all_finite(), "non-finite value recorded");
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// One row of an embedding table, as a vector.
    pub fn row(&mut self, table: ParamId, index: usize) -> Result<Var> {
        let t = self.store.value(table);
        if t.rank() != 2 || index >= t.rows() {
            return Err(NeuralError::InvalidTensor(format!(
                "row {index} out of range for table of shape {:?}",
                t.shape()
            )));
        }
        let value = Tensor::vector(t.row(index).to_vec());
        Ok(self.push(Op::Row { table, index }, value))
    }

    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (mt, vt) = (self.value(m), self.value(v));
        if mt.rank() != 2 || vt.rank() != 1 || mt.cols() != vt.len() {
            return Err(mismatch("matvec", mt, vt));
        }
        let x = vt.data();
        let out = (0..mt.rows())
            .map(|r| dot(mt.row(r), x))
            .collect::<Vec<_>>();
        Ok(self.push(Op::MatVec(m, v), Tensor::vector(out)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.rank() != 2 || bt.rank() != 2 || at.cols() != bt.rows() {
            return Err(mismatch("matmul", at, bt));
        }
        let (m, k, n) = (at.rows(), at.cols(), bt.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = at.row(i);
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &av) in arow.iter().enumerate().take(k) {
                if av == 0.0 {
                    continue;
                }
                for (o, &bv) in orow.iter_mut().zip(bt.row(p)) {
                    *o += av * bv;
                }
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.rank() != 2 || bt.rank() != 2 || at.cols() != bt.cols() {
            return Err(mismatch("matmul_nt", at, bt));
        }
        let (m, n) = (at.rows(), bt.rows());
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(dot(at.row(i), bt.row(j)));
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(Op::MatMulNT(a, b), value))
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.shape() != bt.shape() {
            return Err(mismatch(name, at, bt));
        }
        let data = at
            .data()
            .iter()
            .zip(bt.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(at.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// Adds vector `b` to every row of matrix `x`.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xt, bt) = (self.value(x), self.value(b));
        if xt.rank() != 2 || bt.rank() != 1 || xt.cols() != bt.len() {
            return Err(mismatch("add_row_bias", xt, bt));
        }
        let mut out = xt.clone();
        for r in 0..out.rows() {
            for (o, &bv) in out.row_mut(r).iter_mut().zip(bt.data()) {
                *o += bv;
            }
        }
        Ok(self.push(Op::AddRowBias(x, b), out))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|x| x * c).collect();
        let v = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(Op::Scale(a, c), v)
    }

    /// Concatenates vectors (scalars count as length-1 vectors).
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() > 1 {
                return Err(NeuralError::InvalidTensor(format!(
                    "concat expects vectors, got shape {:?}",
                    t.shape()
                )));
            }
            data.extend_from_slice(t.data());
        }
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::vector(data)))
    }

    /// Stacks equally sized vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        let first = self.value(rows[0]).clone();
        let cols = first.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let t = self.value(r);
            if t.rank() != 1 || t.len() != cols {
                return Err(mismatch("stack", &first, t));
            }
            data.extend_from_slice(t.data());
        }
        let value = Tensor::matrix(rows.len(), cols, data)?;
        Ok(self.push(Op::Stack(rows.to_vec()), value))
    }

    pub fn slice(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(input);
        if t.rank() != 1 || start + len > t.len() {
            return Err(NeuralError::InvalidTensor(format!(
                "slice {start}..{} out of range for shape {:?}",
                start + len,
                t.shape()
            )));
        }
        let v = Tensor::vector(t.data()[start..start + len].to_vec());
        Ok(self.push(Op::Slice { input, start }, v))
    }

    /// Appends a constant column of ones to a matrix.
    pub fn append_ones(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(NeuralError::InvalidTensor(format!(
                "append_ones expects a matrix, got shape {:?}",
                t.shape()
            )));
        }
        let (r, c) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(r * (c + 1));
        for i in 0..r {
            data.extend_from_slice(t.row(i));
            data.push(1.0);
        }
        let v = Tensor::matrix(r, c + 1, data)?;
        Ok(self.push(Op::AppendOnes(x), v))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| f(x)).collect();
        Tensor::new(t.shape().to_vec(), data).expect("same shape")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.map(a, crate::sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.map(a, f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    /// Picks entries by flat (row-major) index into a vector.
    pub fn gather(&mut self, input: Var, indices: Vec<usize>) -> Result<Var> {
        let t = self.value(input);
        if let Some(&bad) = indices.iter().find(|&&i| i >= t.len()) {
            return Err(NeuralError::InvalidTensor(format!(
                "gather index {bad} out of range for shape {:?}",
                t.shape()
            )));
        }
        let v = Tensor::vector(indices.iter().map(|&i| t.data()[i]).collect());
        Ok(self.push(Op::Gather { input, indices }, v))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `labels`,
    /// evaluated from the logits so it stays finite.
    pub fn bce_with_logits(&mut self, logits: Var, labels: Vec<f64>) -> Result<Var> {
        let t = self.value(logits);
        if t.rank() != 1 || t.len() != labels.len() {
            return Err(NeuralError::ShapeMismatch {
                op: "bce_with_logits",
                left: t.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        if labels.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        let total: f64 = t
            .data()
            .iter()
            .zip(&labels)
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum();
        let v = Tensor::scalar(total / labels.len() as f64);
        Ok(self.push(Op::BceWithLogits { logits, labels }, v))
    }

    /// Records an operation whose value and input gradients are computed by
    /// the caller. `backward` receives the output gradient and must return one
    /// gradient per input, shaped like that input.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        value: Tensor,
        backward: impl Fn(&Tensor) -> Vec<Tensor> + 'static,
    ) -> Var {
        self.push(
            Op::Custom {
                inputs: inputs.to_vec(),
                backward: Box::new(backward),
            },
            value,
        )
    }

    /// Differentiates a scalar `loss` with respect to every parameter it
    /// depends on. A graph can be differentiated only once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(NeuralError::BackwardTwice);
        }
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(NeuralError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut seed = Tensor::zeros_like(lt);
        seed.fill(1.0);
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(seed);

        let mut dense: Vec<Option<Tensor>> = vec![None; self.store.len()];
        let mut rows = Vec::new();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Constant => {}
                Op::Param(id) => {
                    if self.store.get(*id).trainable {
                        match &mut dense[id.0] {
                            Some(acc) => acc.add_assign(&g),
                            slot => *slot = Some(g),
                        }
                    }
                }
                Op::Row { table, index } => {
                    if self.store.get(*table).trainable {
                        rows.push((*table, *index, g.into_data()));
                    }
                }
                Op::MatVec(m, v) => {
                    let (mt, vt) = (self.value(*m), self.value(*v));
                    let (r, c) = (mt.rows(), mt.cols());
                    let mut gm = vec![0.0; r * c];
                    let mut gv = vec![0.0; c];
                    for (row, &gr) in g.data().iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        let mrow = mt.row(row);
                        let out = &mut gm[row * c..(row + 1) * c];
                        for k in 0..c {
                            out[k] = gr * vt.data()[k];
                            gv[k] += gr * mrow[k];
                        }
                    }
                    let (m, v) = (*m, *v);
                    accumulate(&mut grads, m, Tensor::matrix(r, c, gm)?);
                    accumulate(&mut grads, v, Tensor::vector(gv));
                }
                Op::MatMul(a, b) => {
                    let (at, bt) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (at.rows(), at.cols(), bt.cols());
                    // dA = G · Bᵀ, dB = Aᵀ · G
                    let mut ga = vec![0.0; m * k];
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &g.data()[i * n..(i + 1) * n];
                        for p in 0..k {
                            ga[i * k + p] = dot(grow, bt.row(p));
                            let av = at.get2(i, p);
                            if av != 0.0 {
                                for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *o += av * gv;
                                }
                            }
                        }
                    }
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, Tensor::matrix(m, k, ga)?);
                    accumulate(&mut grads, b, Tensor::matrix(k, n, gb)?);
                }
                Op::MatMulNT(a, b) => {
                    let (at, bt) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (at.rows(), at.cols(), bt.rows());
                    // dA = G · B, dB = Gᵀ · A
                    let mut ga = vec![0.0; m * k];
                    let mut gb = vec![0.0; n * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gv = g.data()[i * n + j];
                            if gv == 0.0 {
                                continue;
                            }
                            let (arow, brow) = (at.row(i), bt.row(j));
                            for p in 0..k {
                                ga[i * k + p] += gv * brow[p];
                                gb[j * k + p] += gv * arow[p];
                            }
                        }
                    }
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, Tensor::matrix(m, k, ga)?);
                    accumulate(&mut grads, b, Tensor::matrix(n, k, gb)?);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    let neg = negate(&g);
                    accumulate(&mut grads, a, g);
                    accumulate(&mut grads, b, neg);
                }
                Op::Mul(a, b) => {
                    let ga = hadamard(&g, self.value(*b));
                    let gb = hadamard(&g, self.value(*a));
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::AddRowBias(x, b) => {
                    let cols = g.cols();
                    let mut gb = vec![0.0; cols];
                    for r in 0..g.rows() {
                        for (o, &v) in gb.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    let (x, b) = (*x, *b);
                    accumulate(&mut grads, x, g);
                    accumulate(&mut grads, b, Tensor::vector(gb));
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    let data = g.data().iter().map(|v| v * c).collect();
                    let a = *a;
                    accumulate(&mut grads, a, Tensor::new(g.shape().to_vec(), data)?);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.value(p).shape().to_vec();
                        let len: usize = shape.iter().product();
                        let piece = g.data()[offset..offset + len].to_vec();
                        offset += len;
                        accumulate(&mut grads, p, Tensor::new(shape, piece)?);
                    }
                }
                Op::Stack(rows_in) => {
                    for (r, &p) in rows_in.iter().enumerate() {
                        accumulate(&mut grads, p, Tensor::vector(g.row(r).to_vec()));
                    }
                }
                Op::Slice { input, start } => {
                    let mut full = Tensor::zeros_like(self.value(*input));
                    full.data_mut()[*start..*start + g.len()].copy_from_slice(g.data());
                    let input = *input;
                    accumulate(&mut grads, input, full);
                }
                Op::AppendOnes(x) => {
                    let (r, c) = (g.rows(), g.cols() - 1);
                    let mut data = Vec::with_capacity(r * c);
                    for i in 0..r {
                        data.extend_from_slice(&g.row(i)[..c]);
                    }
                    let x = *x;
                    accumulate(&mut grads, x, Tensor::matrix(r, c, data)?);
                }
                Op::Sigmoid(a) => {
                    let out = self.nodes[i].value.as_ref().expect("value");
                    let d = out
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&s, &gv)| gv * s * (1.0 - s))
                        .collect();
                    let a = *a;
                    accumulate(&mut grads, a, Tensor::new(g.shape().to_vec(), d)?);
                }
                Op::Tanh(a) => {
                    let out = self.nodes[i].value.as_ref().expect("value");
                    let d = out
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&t, &gv)| gv * (1.0 - t * t))
                        .collect();
                    let a = *a;
                    accumulate(&mut grads, a, Tensor::new(g.shape().to_vec(), d)?);
                }
                Op::Relu(a) => {
                    let input = self.value(*a);
                    let d = input
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, &gv)| if x > 0.0 { gv } else { 0.0 })
                        .collect();
                    let a = *a;
                    accumulate(&mut grads, a, Tensor::new(g.shape().to_vec(), d)?);
                }
                Op::Sum(a) => {
                    let mut full = Tensor::zeros_like(self.value(*a));
                    full.fill(g.item());
                    let a = *a;
                    accumulate(&mut grads, a, full);
                }
                Op::Gather { input, indices } => {
                    let mut full = Tensor::zeros_like(self.value(*input));
                    for (&idx, &gv) in indices.iter().zip(g.data()) {
                        full.data_mut()[idx] += gv;
                    }
                    let input = *input;
                    accumulate(&mut grads, input, full);
                }
                Op::BceWithLogits { logits, labels } => {
                    let x = self.value(*logits);
                    let scale = g.item() / labels.len() as f64;
                    let d = x
                        .data()
                        .iter()
                        .zip(labels)
                        .map(|(&xv, &y)| scale * (crate::sigmoid(xv) - y))
                        .collect();
                    let logits = *logits;
                    accumulate(&mut grads, logits, Tensor::vector(d));
                }
                Op::Custom { inputs, backward } => {
                    let input_grads = backward(&g);
                    debug_assert_eq!(input_grads.len(), inputs.len());
                    for (&inp, ig) in inputs.iter().zip(input_grads) {
                        accumulate(&mut grads, inp, ig);
                    }
                }
            }
        }

        let dense = dense
            .into_iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (ParamId(i), t)))
            .collect();
        Ok(Gradients { dense, rows })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn negate(t: &Tensor) -> Tensor {
    let data = t.data().iter().map(|v| -v).collect();
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}
