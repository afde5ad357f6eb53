use rand::Rng;

use crate::error::{NeuralError, Result};
use crate::graph::{Graph, Var};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::SeedRng;

/// Inverted dropout. A `None` generator means evaluation mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout must be in [0, 1)");
        Self { p }
    }

    pub fn apply(&self, g: &mut Graph<'_>, x: Var, rng: Option<&mut SeedRng>) -> Result<Var> {
        let Some(rng) = rng else { return Ok(x) };
        if self.p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.p;
        let shape = g.value(x).shape().to_vec();
        let len = g.value(x).len();
        let mask = (0..len)
            .map(|_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mask = g.constant(Tensor::new(shape, mask)?);
        g.mul(x, mask)
    }
}

/// Affine map `W x + b` with `W` of shape `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut SeedRng,
    ) -> Self {
        Self {
            weight: store.add_glorot(format!("{name}.weight"), output, input, rng),
            bias: store.add_zeros(format!("{name}.bias"), &[output]),
        }
    }

    pub fn input_dim(&self, store: &ParamStore) -> usize {
        store.value(self.weight).cols()
    }

    pub fn output_dim(&self, store: &ParamStore) -> usize {
        store.value(self.weight).rows()
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let wx = g.matvec(w, x)?;
        g.add(wx, b)
    }

    /// Applies the map to every row of `x` (`[n, in]` → `[n, out]`).
    pub fn forward_rows(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let xw = g.matmul_nt(x, w)?;
        g.add_row_bias(xw, b)
    }
}

/// One hidden layer: `dropout(relu(W x + b))`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub linear: Linear,
    pub dropout: Dropout,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        dropout: f64,
        rng: &mut SeedRng,
    ) -> Self {
        Self {
            linear: Linear::new(store, name, input, output, rng),
            dropout: Dropout::new(dropout),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, rng: Option<&mut SeedRng>) -> Result<Var> {
        let h = self.linear.forward(g, x)?;
        let h = g.relu(h);
        self.dropout.apply(g, h, rng)
    }

    pub fn forward_rows(
        &self,
        g: &mut Graph<'_>,
        x: Var,
        rng: Option<&mut SeedRng>,
    ) -> Result<Var> {
        let h = self.linear.forward_rows(g, x)?;
        let h = g.relu(h);
        self.dropout.apply(g, h, rng)
    }
}

/// Unidirectional LSTM; gates are packed as input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut SeedRng,
    ) -> Self {
        Self {
            w_ih: store.add_glorot(format!("{name}.w_ih"), 4 * hidden, input, rng),
            w_hh: store.add_glorot(format!("{name}.w_hh"), 4 * hidden, hidden, rng),
            bias: store.add_zeros(format!("{name}.bias"), &[4 * hidden]),
            hidden,
        }
    }

    /// Runs over `inputs` in order and returns the hidden state after each step.
    pub fn run(&self, g: &mut Graph<'_>, inputs: &[Var]) -> Result<Vec<Var>> {
        if inputs.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        let h_dim = self.hidden;
        let w_ih = g.param(self.w_ih);
        let w_hh = g.param(self.w_hh);
        let bias = g.param(self.bias);
        let mut h = g.constant(Tensor::zeros(&[h_dim]));
        let mut c = g.constant(Tensor::zeros(&[h_dim]));
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let gx = g.matvec(w_ih, x)?;
            let gh = g.matvec(w_hh, h)?;
            let pre = g.add(gx, gh)?;
            let pre = g.add(pre, bias)?;
            let i = g.slice(pre, 0, h_dim)?;
            let i = g.sigmoid(i);
            let f = g.slice(pre, h_dim, h_dim)?;
            let f = g.sigmoid(f);
            let cand = g.slice(pre, 2 * h_dim, h_dim)?;
            let cand = g.tanh(cand);
            let o = g.slice(pre, 3 * h_dim, h_dim)?;
            let o = g.sigmoid(o);
            let keep = g.mul(f, c)?;
            let write = g.mul(i, cand)?;
            c = g.add(keep, write)?;
            let tc = g.tanh(c);
            h = g.mul(o, tc)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Per-position states of the top layer of a [`BiLstm`].
#[derive(Clone, Debug)]
pub struct BiLstmStates {
    /// `forward[t]`: state after reading positions `0..=t`.
    pub forward: Vec<Var>,
    /// `backward[t]`: state after reading positions `t..` right to left.
    pub backward: Vec<Var>,
}

/// Stacked bidirectional LSTM; each layer above the first reads the
/// concatenated forward and backward states of the layer below.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub layers: Vec<(Lstm, Lstm)>,
    pub dropout: Dropout,
}

impl BiLstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
        rng: &mut SeedRng,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let d_in = if l == 0 { input } else { 2 * hidden };
                (
                    Lstm::new(store, &format!("{name}.l{l}.fwd"), d_in, hidden, rng),
                    Lstm::new(store, &format!("{name}.l{l}.bwd"), d_in, hidden, rng),
                )
            })
            .collect();
        Self {
            layers,
            dropout: Dropout::new(dropout),
        }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].0.hidden
    }

    /// Dropout masks are drawn layer by layer, forward states before backward.
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        inputs: &[Var],
        mut rng: Option<&mut SeedRng>,
    ) -> Result<BiLstmStates> {
        if inputs.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        let mut current = inputs.to_vec();
        let mut states = None;
        for (l, (fwd, bwd)) in self.layers.iter().enumerate() {
            let mut f = fwd.run(g, &current)?;
            let reversed: Vec<Var> = current.iter().rev().copied().collect();
            let mut b = bwd.run(g, &reversed)?;
            b.reverse();
            for v in f.iter_mut().chain(b.iter_mut()) {
                *v = self.dropout.apply(g, *v, rng.as_deref_mut())?;
            }
            if l + 1 < self.layers.len() {
                current = f
                    .iter()
                    .zip(&b)
                    .map(|(&x, &y)| g.concat(&[x, y]))
                    .collect::<Result<_>>()?;
            }
            states = Some(BiLstmStates {
                forward: f,
                backward: b,
            });
        }
        Ok(states.expect("at least one layer"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn relu_mlp_with_identity_weights() {
        let mut store = ParamStore::new();
        let mut rng = seeded_rng(0);
        let mlp = Mlp::new(&mut store, "m", 2, 2, 0.0, &mut rng);
        *store.value_mut(mlp.linear.weight) = Tensor::eye(2);
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::vector(vec![1.0, -1.0]));
        let y = mlp.forward(&mut g, x, None).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 0.0]);
    }

    #[test]
    fn dropout_eval_is_identity_and_train_is_seeded() {
        let store = ParamStore::new();
        let d = Dropout::new(0.33);
        let run = |seed: Option<u64>| {
            let mut g = Graph::new(&store);
            let x = g.constant(Tensor::vector(vec![1.0; 64]));
            let mut rng = seed.map(seeded_rng);
            let y = d.apply(&mut g, x, rng.as_mut()).unwrap();
            g.value(y).clone()
        };
        assert_eq!(run(None).data(), &[1.0; 64]);
        let a = run(Some(5));
        assert_eq!(a, run(Some(5)));
        let scale = 1.0 / 0.67;
        assert!(a
            .data()
            .iter()
            .all(|&v| v == 0.0 || (v - scale).abs() < 1e-12));
        assert!(a.data().contains(&0.0));
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let mut store = ParamStore::new();
        let mut rng = seeded_rng(1);
        let bilstm = BiLstm::new(&mut store, "enc", 3, 4, 2, 0.0, &mut rng);
        for p in store.iter_mut() {
            p.value.fill(0.0);
        }
        let mut g = Graph::new(&store);
        let xs: Vec<Var> = (0..3)
            .map(|i| g.constant(Tensor::vector(vec![i as f64, 1.0, -2.0])))
            .collect();
        let states = bilstm.forward(&mut g, &xs, None).unwrap();
        for v in states.forward.iter().chain(&states.backward) {
            assert!(g.value(*v).data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // hidden 1, input 1: pre-activations are w_ih * x + b per gate
        let mut store = ParamStore::new();
        let mut rng = seeded_rng(0);
        let lstm = Lstm::new(&mut store, "l", 1, 1, &mut rng);
        *store.value_mut(lstm.w_ih) = Tensor::matrix(4, 1, vec![0.5, -1.0, 2.0, 1.5]).unwrap();
        *store.value_mut(lstm.w_hh) = Tensor::matrix(4, 1, vec![9.0; 4]).unwrap();
        *store.value_mut(lstm.bias) = Tensor::vector(vec![0.1, 0.2, -0.3, 0.0]);
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::vector(vec![2.0]));
        let h = lstm.run(&mut g, &[x]).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.5 * 2.0 + 0.1);
        let cand = (2.0f64 * 2.0 - 0.3).tanh();
        let o = sig(1.5 * 2.0);
        // previous cell is zero, so the forget gate does not contribute
        let expected = o * (i * cand).tanh();
        assert!((g.value(h[0]).item() - expected).abs() < 1e-15);
    }

    #[test]
    fn reversed_input_swaps_directions() {
        let mut store = ParamStore::new();
        let mut rng = seeded_rng(9);
        let bilstm = BiLstm::new(&mut store, "enc", 2, 3, 1, 0.0, &mut rng);
        let (fwd, bwd) = bilstm.layers[0].clone();
        for (src, dst) in [
            (fwd.w_ih, bwd.w_ih),
            (fwd.w_hh, bwd.w_hh),
            (fwd.bias, bwd.bias),
        ] {
            let v = store.value(src).clone();
            *store.value_mut(dst) = v;
        }
        let inputs: Vec<Vec<f64>> = vec![
            vec![0.3, -1.0],
            vec![1.2, 0.4],
            vec![-0.7, 0.9],
            vec![0.0, 2.0],
        ];
        let run = |seq: &[Vec<f64>]| {
            let mut g = Graph::new(&store);
            let xs: Vec<Var> = seq
                .iter()
                .map(|v| g.constant(Tensor::vector(v.clone())))
                .collect();
            let s = bilstm.forward(&mut g, &xs, None).unwrap();
            let f: Vec<Tensor> = s.forward.iter().map(|v| g.value(*v).clone()).collect();
            let b: Vec<Tensor> = s.backward.iter().map(|v| g.value(*v).clone()).collect();
            (f, b)
        };
        let (f, b) = run(&inputs);
        let reversed: Vec<Vec<f64>> = inputs.iter().rev().cloned().collect();
        let (f_rev, b_rev) = run(&reversed);
        let n = inputs.len();
        for t in 0..n {
            assert_eq!(f[t], b_rev[n - 1 - t]);
            assert_eq!(b[t], f_rev[n - 1 - t]);
        }
    }

    #[test]
    fn empty_sequence_rejected() {
        let mut store = ParamStore::new();
        let mut rng = seeded_rng(0);
        let bilstm = BiLstm::new(&mut store, "enc", 2, 2, 1, 0.0, &mut rng);
        let mut g = Graph::new(&store);
        assert!(matches!(
            bilstm.forward(&mut g, &[], None),
            Err(NeuralError::EmptySequence)
        ));
    }
}
