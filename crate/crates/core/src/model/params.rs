//! Named parameter containers, generic over the payload so the same shape
//! describes concrete tensors (`ModelParams`) and their tape bindings
//! (`BoundParams`). Canonical traversal order is fixed here; the optimizer,
//! checkpoints, and gradient extraction all rely on it.

use super::{ModelConfig, ModelError};
use crate::numerics::{Tape, Tensor, ValueId};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

/// Two-layer perceptron weights: hidden layer of the output's width.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub w1: T,
    pub b1: T,
    pub w2: T,
    pub b2: T,
}

/// Per-gate LSTM weights (input, recurrent, bias for each of f, i, o, c).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights<T> {
    pub w_f: T,
    pub u_f: T,
    pub b_f: T,
    pub w_i: T,
    pub u_i: T,
    pub b_i: T,
    pub w_o: T,
    pub u_o: T,
    pub b_o: T,
    pub w_c: T,
    pub u_c: T,
    pub b_c: T,
}

/// Every learned tensor of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    /// Displacement embedding ahead of the vehicle LSTM.
    pub vv_embed: Mlp<T>,
    /// Vehicle temporal edge.
    pub vv_lstm: LstmWeights<T>,
    /// Offset embedding ahead of the per-lane LSTM (shared across lanes).
    pub ss_embed: Mlp<T>,
    /// Lane-vehicle temporal edge (shared across lanes).
    pub ss_lstm: LstmWeights<T>,
    /// Current-offset encoder.
    pub cur_mlp: Mlp<T>,
    /// Forward lane-shape encoder.
    pub fut_mlp: Mlp<T>,
    /// Attention score head (no final rectifier).
    pub score_mlp: Mlp<T>,
    /// Overall-state LSTM over the aggregated encoding and vehicle state.
    pub overall_lstm: LstmWeights<T>,
    /// Gaussian output head (no final rectifier).
    pub head_mlp: Mlp<T>,
}

pub type ModelParams = Params<Tensor>;
pub type BoundParams = Params<ValueId>;

/// Tensors per parameter set: 6 MLPs of 4 plus 3 LSTMs of 12.
pub const TENSOR_COUNT: usize = 6 * 4 + 3 * 12;

impl<T> Mlp<T> {
    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Mlp<U> {
        Mlp {
            w1: f(&self.w1),
            b1: f(&self.b1),
            w2: f(&self.w2),
            b2: f(&self.b2),
        }
    }

    fn push_named<'a>(&'a self, group: &str, out: &mut Vec<(String, &'a T)>) {
        out.push((format!("{group}.w1"), &self.w1));
        out.push((format!("{group}.b1"), &self.b1));
        out.push((format!("{group}.w2"), &self.w2));
        out.push((format!("{group}.b2"), &self.b2));
    }

    fn push_named_mut<'a>(&'a mut self, group: &str, out: &mut Vec<(String, &'a mut T)>) {
        out.push((format!("{group}.w1"), &mut self.w1));
        out.push((format!("{group}.b1"), &mut self.b1));
        out.push((format!("{group}.w2"), &mut self.w2));
        out.push((format!("{group}.b2"), &mut self.b2));
    }

    fn from_iter(items: &mut impl Iterator<Item = T>) -> Mlp<T> {
        Mlp {
            w1: items.next().expect("mlp w1"),
            b1: items.next().expect("mlp b1"),
            w2: items.next().expect("mlp w2"),
            b2: items.next().expect("mlp b2"),
        }
    }
}

impl<T> LstmWeights<T> {
    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> LstmWeights<U> {
        LstmWeights {
            w_f: f(&self.w_f),
            u_f: f(&self.u_f),
            b_f: f(&self.b_f),
            w_i: f(&self.w_i),
            u_i: f(&self.u_i),
            b_i: f(&self.b_i),
            w_o: f(&self.w_o),
            u_o: f(&self.u_o),
            b_o: f(&self.b_o),
            w_c: f(&self.w_c),
            u_c: f(&self.u_c),
            b_c: f(&self.b_c),
        }
    }

    fn push_named<'a>(&'a self, group: &str, out: &mut Vec<(String, &'a T)>) {
        for (name, t) in self.named_fields() {
            out.push((format!("{group}.{name}"), t));
        }
    }

    fn named_fields(&self) -> [(&'static str, &T); 12] {
        [
            ("w_f", &self.w_f),
            ("u_f", &self.u_f),
            ("b_f", &self.b_f),
            ("w_i", &self.w_i),
            ("u_i", &self.u_i),
            ("b_i", &self.b_i),
            ("w_o", &self.w_o),
            ("u_o", &self.u_o),
            ("b_o", &self.b_o),
            ("w_c", &self.w_c),
            ("u_c", &self.u_c),
            ("b_c", &self.b_c),
        ]
    }

    fn push_named_mut<'a>(&'a mut self, group: &str, out: &mut Vec<(String, &'a mut T)>) {
        out.push((format!("{group}.w_f"), &mut self.w_f));
        out.push((format!("{group}.u_f"), &mut self.u_f));
        out.push((format!("{group}.b_f"), &mut self.b_f));
        out.push((format!("{group}.w_i"), &mut self.w_i));
        out.push((format!("{group}.u_i"), &mut self.u_i));
        out.push((format!("{group}.b_i"), &mut self.b_i));
        out.push((format!("{group}.w_o"), &mut self.w_o));
        out.push((format!("{group}.u_o"), &mut self.u_o));
        out.push((format!("{group}.b_o"), &mut self.b_o));
        out.push((format!("{group}.w_c"), &mut self.w_c));
        out.push((format!("{group}.u_c"), &mut self.u_c));
        out.push((format!("{group}.b_c"), &mut self.b_c));
    }

    fn from_iter(items: &mut impl Iterator<Item = T>) -> LstmWeights<T> {
        let mut next = || items.next().expect("lstm tensor");
        LstmWeights {
            w_f: next(),
            u_f: next(),
            b_f: next(),
            w_i: next(),
            u_i: next(),
            b_i: next(),
            w_o: next(),
            u_o: next(),
            b_o: next(),
            w_c: next(),
            u_c: next(),
            b_c: next(),
        }
    }
}

impl<T> Params<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Params<U> {
        Params {
            vv_embed: self.vv_embed.map(&mut f),
            vv_lstm: self.vv_lstm.map(&mut f),
            ss_embed: self.ss_embed.map(&mut f),
            ss_lstm: self.ss_lstm.map(&mut f),
            cur_mlp: self.cur_mlp.map(&mut f),
            fut_mlp: self.fut_mlp.map(&mut f),
            score_mlp: self.score_mlp.map(&mut f),
            overall_lstm: self.overall_lstm.map(&mut f),
            head_mlp: self.head_mlp.map(&mut f),
        }
    }

    /// (name, tensor) pairs in the canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::with_capacity(TENSOR_COUNT);
        self.vv_embed.push_named("vv_embed", &mut out);
        self.vv_lstm.push_named("vv_lstm", &mut out);
        self.ss_embed.push_named("ss_embed", &mut out);
        self.ss_lstm.push_named("ss_lstm", &mut out);
        self.cur_mlp.push_named("cur_mlp", &mut out);
        self.fut_mlp.push_named("fut_mlp", &mut out);
        self.score_mlp.push_named("score_mlp", &mut out);
        self.overall_lstm.push_named("overall_lstm", &mut out);
        self.head_mlp.push_named("head_mlp", &mut out);
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut T)> {
        let mut out = Vec::with_capacity(TENSOR_COUNT);
        self.vv_embed.push_named_mut("vv_embed", &mut out);
        self.vv_lstm.push_named_mut("vv_lstm", &mut out);
        self.ss_embed.push_named_mut("ss_embed", &mut out);
        self.ss_lstm.push_named_mut("ss_lstm", &mut out);
        self.cur_mlp.push_named_mut("cur_mlp", &mut out);
        self.fut_mlp.push_named_mut("fut_mlp", &mut out);
        self.score_mlp.push_named_mut("score_mlp", &mut out);
        self.overall_lstm.push_named_mut("overall_lstm", &mut out);
        self.head_mlp.push_named_mut("head_mlp", &mut out);
        out
    }

    /// Rebuilds the structure from values in canonical order.
    pub fn from_flat(items: Vec<T>) -> Params<T> {
        assert_eq!(items.len(), TENSOR_COUNT, "expected {TENSOR_COUNT} tensors");
        let mut it = items.into_iter();
        let p = Params {
            vv_embed: Mlp::from_iter(&mut it),
            vv_lstm: LstmWeights::from_iter(&mut it),
            ss_embed: Mlp::from_iter(&mut it),
            ss_lstm: LstmWeights::from_iter(&mut it),
            cur_mlp: Mlp::from_iter(&mut it),
            fut_mlp: Mlp::from_iter(&mut it),
            score_mlp: Mlp::from_iter(&mut it),
            overall_lstm: LstmWeights::from_iter(&mut it),
            head_mlp: Mlp::from_iter(&mut it),
        };
        assert!(it.next().is_none());
        p
    }
}

fn xavier(rng: &mut StdRng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::matrix(rows, cols, data).expect("xavier shape")
}

fn mlp_init(rng: &mut StdRng, input: usize, output: usize) -> Mlp<Tensor> {
    Mlp {
        w1: xavier(rng, output, input),
        b1: Tensor::zeros(&[output]),
        w2: xavier(rng, output, output),
        b2: Tensor::zeros(&[output]),
    }
}

fn lstm_init(rng: &mut StdRng, input: usize, hidden: usize) -> LstmWeights<Tensor> {
    let mut gate = |forget: bool| {
        (
            xavier(rng, hidden, input),
            xavier(rng, hidden, hidden),
            if forget {
                Tensor::vector(vec![1.0; hidden])
            } else {
                Tensor::zeros(&[hidden])
            },
        )
    };
    let (w_f, u_f, b_f) = gate(true);
    let (w_i, u_i, b_i) = gate(false);
    let (w_o, u_o, b_o) = gate(false);
    let (w_c, u_c, b_c) = gate(false);
    LstmWeights {
        w_f,
        u_f,
        b_f,
        w_i,
        u_i,
        b_i,
        w_o,
        u_o,
        b_o,
        w_c,
        u_c,
        b_c,
    }
}

impl ModelParams {
    /// Seeded initialization: Xavier-uniform weights, zero biases, and a +1
    /// forget-gate bias on every LSTM.
    pub fn init(config: &ModelConfig, seed: u64) -> ModelParams {
        let mut rng = StdRng::seed_from_u64(seed);
        let c = config;
        Params {
            vv_embed: mlp_init(&mut rng, 2, c.embed_dim),
            vv_lstm: lstm_init(&mut rng, c.embed_dim, c.lstm_hidden),
            ss_embed: mlp_init(&mut rng, 2, c.embed_dim),
            ss_lstm: lstm_init(&mut rng, c.embed_dim, c.lane_enc_dim),
            cur_mlp: mlp_init(&mut rng, 2, c.lane_enc_dim),
            fut_mlp: mlp_init(&mut rng, 2 * c.lane_shape.k, c.lane_enc_dim),
            score_mlp: mlp_init(&mut rng, 2 * c.lane_enc_dim, 1),
            overall_lstm: lstm_init(&mut rng, c.overall_input(), c.overall_hidden),
            head_mlp: mlp_init(&mut rng, c.overall_hidden, 5),
        }
    }

    /// All-zero parameters of the configured shapes.
    pub fn zeros(config: &ModelConfig) -> ModelParams {
        let mut init = ModelParams::init(config, 0);
        for (_, t) in init.named_mut() {
            t.data_mut().fill(0.0);
        }
        init
    }

    /// Registers every tensor as a tape leaf, preserving structure.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        self.map(|t| tape.leaf(t.clone()))
    }

    /// Total scalar parameter count.
    pub fn count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Checks every tensor against the shapes the config implies.
    pub fn validate_shapes(&self, config: &ModelConfig) -> Result<(), ModelError> {
        let want = ModelParams::zeros(config);
        for ((name, t), (_, w)) in self.named().iter().zip(want.named().iter()) {
            if t.shape() != w.shape() {
                return Err(ModelError::BadConfig(format!(
                    "tensor {name} has shape {:?}, config implies {:?}",
                    t.shape(),
                    w.shape()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Aggregator;

    #[test]
    fn canonical_order_roundtrips() {
        let cfg = ModelConfig::tiny(Aggregator::Attention);
        let p = ModelParams::init(&cfg, 3);
        let flat: Vec<Tensor> = p.named().into_iter().map(|(_, t)| t.clone()).collect();
        let rebuilt = ModelParams::from_flat(flat);
        assert_eq!(p, rebuilt);
        assert_eq!(p.named().len(), TENSOR_COUNT);
    }

    #[test]
    fn init_is_seed_deterministic_and_shaped() {
        let cfg = ModelConfig::standard(Aggregator::Attention, 30);
        let a = ModelParams::init(&cfg, 42);
        let b = ModelParams::init(&cfg, 42);
        assert_eq!(a, b);
        let c = ModelParams::init(&cfg, 43);
        assert_ne!(a, c);
        a.validate_shapes(&cfg).unwrap();
        // Forget bias is +1, other biases zero.
        assert!(a.vv_lstm.b_f.data().iter().all(|&v| v == 1.0));
        assert!(a.vv_lstm.b_i.data().iter().all(|&v| v == 0.0));
        // Parameter count is a pure function of config.
        assert_eq!(a.count(), b.count());
    }

    #[test]
    fn shape_validation_catches_mismatch() {
        let cfg = ModelConfig::tiny(Aggregator::Attention);
        let p = ModelParams::init(&cfg, 0);
        let other = ModelConfig::standard(Aggregator::Attention, 30);
        assert!(p.validate_shapes(&other).is_err());
    }
}
