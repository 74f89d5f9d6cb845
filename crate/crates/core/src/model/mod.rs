//! The lane-attention network: temporal evolution of vehicle and lane-vehicle
//! relations, spatial aggregation over the variable lane set, an overall
//! recurrent state, a bivariate-Gaussian head, and the autoregressive rollout.

mod checkpoint;
mod forward;
mod params;
mod rollout;

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use forward::{
    aggregate_attention, aggregate_pooling, aggregate_single_lane, encode_lane, encode_vehicle,
    gaussian_head, lane_features_on_tape, lane_total_encoding, lstm_cell, mlp, update_overall,
    GaussianIds, LaneEncoding, StepState, RHO_SCALE, SIGMA_FLOOR,
};
pub use params::{BoundParams, LstmWeights, Mlp, ModelParams, Params, TENSOR_COUNT};
pub use rollout::{rollout, rollout_on_tape, RolloutOutput, TapeRollout};

use crate::geometry::GeometryError;
use crate::graph::{GraphError, LaneShapeSpec};
use crate::numerics::NumericsError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("aggregation over an empty lane set")]
    EmptyLaneSet,
    #[error("frozen lane index {index} out of range for {n} lanes")]
    FrozenIndexOutOfRange { index: usize, n: usize },
    #[error("invalid model config: {0}")]
    BadConfig(String),
}

/// Spatial aggregation strategy over the per-lane encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    /// Softmax-weighted sum with learned scores.
    Attention,
    /// The encoding of the lane currently nearest the vehicle.
    Pooling,
    /// The lane nearest the vehicle at the start of prediction, frozen.
    SingleLane,
    /// No lane input at all; the overall state sees zeros in place of the
    /// aggregated encoding, reducing the model to a plain-LSTM baseline.
    None,
}

impl Aggregator {
    /// Model label used in reports and comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Aggregator::Attention => "lane-attention",
            Aggregator::Pooling => "lane-pooling",
            Aggregator::SingleLane => "single-lane",
            Aggregator::None => "lstm",
        }
    }
}

impl std::str::FromStr for Aggregator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "attention" => Ok(Aggregator::Attention),
            "pooling" => Ok(Aggregator::Pooling),
            "single-lane" | "single_lane" => Ok(Aggregator::SingleLane),
            "none" => Ok(Aggregator::None),
            other => Err(format!(
                "unknown aggregator '{other}' (expected attention|pooling|single-lane|none)"
            )),
        }
    }
}

/// Network dimensions and rollout horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Width of the displacement/offset embeddings.
    pub embed_dim: usize,
    /// Hidden width of the vehicle LSTM.
    pub lstm_hidden: usize,
    /// Width of each per-lane encoding (lane state, current offset, shape).
    pub lane_enc_dim: usize,
    /// Hidden width of the overall LSTM.
    pub overall_hidden: usize,
    /// Lane resampling for the shape vector.
    pub lane_shape: LaneShapeSpec,
    pub aggregator: Aggregator,
    /// Number of predicted steps (10 or 30 for the 1 s and 3 s horizons).
    pub t_pred_steps: usize,
}

impl ModelConfig {
    /// The published dimensions: embeddings 32, recurrent states 64, three
    /// 64-wide lane encodings concatenated to 192, overall state 256.
    pub fn standard(aggregator: Aggregator, t_pred_steps: usize) -> ModelConfig {
        ModelConfig {
            embed_dim: 32,
            lstm_hidden: 64,
            lane_enc_dim: 64,
            overall_hidden: 256,
            lane_shape: LaneShapeSpec::default(),
            aggregator,
            t_pred_steps,
        }
    }

    /// Small dimensions for gradient checks and fast tests.
    pub fn tiny(aggregator: Aggregator) -> ModelConfig {
        ModelConfig {
            embed_dim: 4,
            lstm_hidden: 8,
            lane_enc_dim: 8,
            overall_hidden: 16,
            lane_shape: LaneShapeSpec { k: 3, spacing_m: 2.0 },
            aggregator,
            t_pred_steps: 2,
        }
    }

    /// Width of the aggregated lane encoding (three lane encodings).
    pub fn agg_dim(&self) -> usize {
        3 * self.lane_enc_dim
    }

    /// Input width of the overall LSTM.
    pub fn overall_input(&self) -> usize {
        self.agg_dim() + self.lstm_hidden
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embed_dim == 0
            || self.lstm_hidden == 0
            || self.lane_enc_dim == 0
            || self.overall_hidden == 0
        {
            return Err(ModelError::BadConfig("zero-width layer".to_string()));
        }
        if self.lane_shape.k == 0 || self.lane_shape.spacing_m <= 0.0 {
            return Err(ModelError::BadConfig(format!(
                "lane shape needs k >= 1 and positive spacing, got k={} spacing={}",
                self.lane_shape.k, self.lane_shape.spacing_m
            )));
        }
        if self.t_pred_steps == 0 {
            return Err(ModelError::BadConfig("t_pred_steps must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// One predicted step's bivariate Gaussian over the delta displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianOut {
    /// Mean displacement in meters.
    pub mu: crate::geometry::Vec2,
    /// Per-axis standard deviations, floored at 1e-3 m.
    pub sigma: crate::geometry::Vec2,
    /// Correlation, squashed into (-0.99, 0.99).
    pub rho: f64,
}

impl GaussianOut {
    /// Determinant of the covariance matrix; positive by construction.
    pub fn cov_det(&self) -> f64 {
        let sx2 = self.sigma.x * self.sigma.x;
        let sy2 = self.sigma.y * self.sigma.y;
        sx2 * sy2 * (1.0 - self.rho * self.rho)
    }
}
