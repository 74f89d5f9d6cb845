//! Lane-attention trajectory prediction.
//!
//! A vehicle's future motion is predicted from its displacement history and
//! its evolving relation to the surrounding lane center-lines. The history is
//! unfolded into a spatio-temporal graph: per-lane LSTMs track the
//! vehicle-lane relation over time, an aggregator (softmax attention,
//! nearest-lane pooling, a frozen single lane, or none) fuses the variable
//! lane set into a fixed-size encoding, and an overall LSTM drives a
//! bivariate-Gaussian head whose mean is fed back autoregressively.
//!
//! Modules:
//! - [`numerics`]: dense tensors with reverse-mode differentiation
//! - [`geometry`]: lane polylines, projection and arc-length resampling
//! - [`graph`]: track samples unfolded into per-step relational features
//! - [`model`]: the network, its parameters, rollout, checkpoints
//! - [`training`]: Gaussian NLL, Adam, plateau LR schedule, the epoch loop
//! - [`scenarios`]: synthetic scenario generator and dataset files
//! - [`harness`]: ADE/FDE metrics, baselines, comparison reports, SVG plots

pub mod geometry;
pub mod graph;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod scenarios;
pub mod training;

pub use geometry::{LanePolyline, Projection, Vec2};
pub use graph::{StepFeatures, TrackSample};
pub use model::{Aggregator, Checkpoint, GaussianOut, ModelConfig, ModelParams, RolloutOutput};
pub use numerics::{Activation, Gradients, Tape, Tensor, ValueId};
pub use scenarios::{Dataset, ScenarioKind, ScenarioSpec};
pub use training::{TrainConfig, fit};
