//! Numeric substrate for the span segmenter.
//!
//! Everything here works on 64-bit floats. A [`Graph`] records operations on
//! [`Tensor`]s as they are evaluated and can then be differentiated once in
//! reverse mode; the resulting [`Gradients`] are folded back into a
//! [`ParamStore`] and consumed by the [`AdamW`] optimizer.

mod checkpoint;
mod error;
mod graph;
mod layers;
mod optim;
mod param;
mod tensor;

pub use checkpoint::{read_blob, read_manifest, write_blob, write_manifest, ManifestEntry};
pub use error::{NeuralError, Result};
pub use graph::{Gradients, Graph, Var};
pub use layers::{BiLstm, BiLstmStates, Dropout, Linear, Lstm, Mlp};
pub use optim::{AdamW, AdamWConfig};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

/// The seedable generator used for initialization, shuffling and dropout.
pub type SeedRng = rand_chacha::ChaCha8Rng;

/// Creates the crate's generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeedRng {
    use rand::SeedableRng;
    SeedRng::seed_from_u64(seed)
}

/// Logistic function that stays finite for any finite input.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sum(exp(xs)))` computed around the maximum.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
