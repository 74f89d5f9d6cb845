//! Warm-up over the observed history followed by autoregressive prediction:
//! each future step reads the Gaussian head, feeds the mean back as the next
//! displacement, recomputes lane features at the predicted position, and
//! advances every recurrence. The whole loop lives on one tape, so the
//! training loss differentiates through the feedback path as well.

use super::forward::{
    aggregate_attention, aggregate_pooling, aggregate_single_lane, encode_lane, encode_vehicle,
    gaussian_head, lane_features_on_tape, lane_total_encoding, update_overall, GaussianIds,
    LaneEncoding, StepState,
};
use super::params::{BoundParams, ModelParams};
use super::{Aggregator, GaussianOut, ModelConfig, ModelError};
use crate::geometry::{self, LanePolyline, Vec2};
use crate::graph::{self, GraphError, TrackSample};
use crate::numerics::{Tape, Tensor, ValueId};

const LN_2PI: f64 = 1.8378770664093453;

/// Result of one rollout in the sample's absolute frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutput {
    /// Predicted absolute positions, one per predicted step.
    pub trajectory: Vec<Vec2>,
    /// Per-step output distributions over the delta displacement.
    pub gaussians: Vec<GaussianOut>,
    /// Per prediction step: (lane id, weight), id-sorted. Probability vector
    /// under attention, one-hot under pooling/single-lane, empty without
    /// lane aggregation.
    pub attention: Vec<Vec<(u64, f64)>>,
    /// Same, for the observed warm-up steps.
    pub warmup_attention: Vec<Vec<(u64, f64)>>,
    /// Vehicle hidden state after warm-up. The vehicle branch never sees lane
    /// input, so this is identical across aggregators; kept as a diagnostic.
    pub warmup_h_vv: Vec<f64>,
}

/// A rollout still attached to its tape, for training.
pub struct TapeRollout {
    pub output: RolloutOutput,
    pub gaussian_ids: Vec<GaussianIds>,
    /// Summed negative log-likelihood over the predicted steps, present when
    /// ground truth was supplied.
    pub nll: Option<ValueId>,
}

struct LaneStepInput {
    offset_id: ValueId,
    shape_id: ValueId,
    offset: Vec2,
}

struct StepInputs {
    delta: ValueId,
    lanes: Vec<LaneStepInput>,
}

/// One-step negative log-likelihood of the bivariate Gaussian at the
/// evaluation delta, built on the tape.
fn nll_term(
    tape: &mut Tape,
    g: &GaussianIds,
    delta_eval: ValueId,
) -> Result<ValueId, ModelError> {
    let d = tape.sub(delta_eval, g.mu)?;
    let s2 = tape.mul(g.sigma, g.sigma)?;
    let dd = tape.mul(d, d)?;
    let q = tape.div(dd, s2)?;
    let q_sum = tape.sum(q);
    let dx = tape.slice(d, 0, 1)?;
    let dy = tape.slice(d, 1, 1)?;
    let sx = tape.slice(g.sigma, 0, 1)?;
    let sy = tape.slice(g.sigma, 1, 1)?;
    let dxy = tape.mul(dx, dy)?;
    let sxy = tape.mul(sx, sy)?;
    let cross = tape.div(dxy, sxy)?;
    let two_rho = tape.affine(g.rho, 2.0, 0.0);
    let cross_term = tape.mul(two_rho, cross)?;
    let z = tape.sub(q_sum, cross_term)?;
    let rho2 = tape.mul(g.rho, g.rho)?;
    let one_m_r2 = tape.affine(rho2, -1.0, 1.0);
    let log_one_m_r2 = tape.log(one_m_r2)?;
    let half_log = tape.affine(log_one_m_r2, 0.5, 0.0);
    let log_sigma = tape.log(g.sigma)?;
    let log_det = tape.sum(log_sigma);
    let denom = tape.affine(one_m_r2, 2.0, 0.0);
    let expo = tape.div(z, denom)?;
    let t1 = tape.add(log_det, half_log)?;
    let t2 = tape.add(t1, expo)?;
    Ok(tape.affine(t2, 1.0, LN_2PI))
}

fn advance_step(
    tape: &mut Tape,
    params: &BoundParams,
    cfg: &ModelConfig,
    state: &mut StepState,
    inputs: &StepInputs,
    lane_ids: &[u64],
    frozen_index: usize,
) -> Result<Vec<(u64, f64)>, ModelError> {
    let (h_vv, c_vv) = encode_vehicle(tape, params, inputs.delta, state.h_vv, state.c_vv)?;
    state.h_vv = h_vv;
    state.c_vv = c_vv;

    let (a, weights) = if cfg.aggregator == Aggregator::None {
        (tape.leaf(Tensor::zeros(&[cfg.agg_dim()])), Vec::new())
    } else {
        let mut encodings = Vec::with_capacity(inputs.lanes.len());
        for (i, lane) in inputs.lanes.iter().enumerate() {
            let (h, c) = encode_lane(tape, params, lane.offset_id, state.lane_h[i], state.lane_c[i])?;
            state.lane_h[i] = h;
            state.lane_c[i] = c;
            let (e_tot, e_cur) =
                lane_total_encoding(tape, params, h, lane.offset_id, lane.shape_id)?;
            encodings.push(LaneEncoding {
                lane_id: lane_ids[i],
                e_tot,
                e_cur,
                h_ss: h,
                offset: lane.offset,
            });
        }
        match cfg.aggregator {
            Aggregator::Attention => {
                let (a, w) = aggregate_attention(tape, params, &encodings)?;
                let row = tape
                    .value(w)
                    .data()
                    .iter()
                    .zip(lane_ids)
                    .map(|(&wv, &id)| (id, wv))
                    .collect();
                (a, row)
            }
            Aggregator::Pooling => {
                let (a, idx) = aggregate_pooling(&encodings)?;
                (a, one_hot_row(lane_ids, idx))
            }
            Aggregator::SingleLane => {
                let a = aggregate_single_lane(&encodings, frozen_index)?;
                (a, one_hot_row(lane_ids, frozen_index))
            }
            Aggregator::None => unreachable!(),
        }
    };

    let (h, c) = update_overall(tape, params, a, state.h_vv, state.h_overall, state.c_overall)?;
    state.h_overall = h;
    state.c_overall = c;
    Ok(weights)
}

fn one_hot_row(lane_ids: &[u64], idx: usize) -> Vec<(u64, f64)> {
    lane_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, if i == idx { 1.0 } else { 0.0 }))
        .collect()
}

/// Runs warm-up and prediction on the given tape. `loss_future` supplies the
/// absolute ground-truth future; when present, the summed NLL comes back as a
/// tape value. `teacher_forcing` feeds ground-truth positions instead of
/// predictions during decoding (requires `loss_future`).
pub fn rollout_on_tape(
    tape: &mut Tape,
    params: &BoundParams,
    cfg: &ModelConfig,
    sample: &TrackSample,
    loss_future: Option<&[Vec2]>,
    teacher_forcing: bool,
) -> Result<TapeRollout, ModelError> {
    cfg.validate()?;
    if sample.obs.is_empty() {
        return Err(ModelError::Graph(GraphError::TooFewObservations(0)));
    }
    if teacher_forcing && loss_future.is_none() {
        return Err(ModelError::BadConfig(
            "teacher forcing requires ground-truth future".to_string(),
        ));
    }
    if let Some(fut) = loss_future {
        if fut.len() != cfg.t_pred_steps {
            return Err(ModelError::BadConfig(format!(
                "ground-truth future has {} steps, config predicts {}",
                fut.len(),
                cfg.t_pred_steps
            )));
        }
    }
    let needs_lanes = cfg.aggregator != Aggregator::None;
    if needs_lanes && sample.lanes.is_empty() {
        return Err(ModelError::EmptyLaneSet);
    }

    // Work in the frame whose origin is the last observed position.
    let origin = sample.current_pos();
    let shift = Vec2::ZERO - origin;
    let mut lanes: Vec<LanePolyline> = sample.lanes.iter().map(|l| l.translated(shift)).collect();
    lanes.sort_by_key(|l| l.id());
    let lane_ids: Vec<u64> = lanes.iter().map(|l| l.id()).collect();
    let obs: Vec<Vec2> = sample.obs.iter().map(|o| o.pos + shift).collect();
    let future: Option<Vec<Vec2>> = loss_future.map(|f| f.iter().map(|&p| p + shift).collect());

    let frozen_index = if cfg.aggregator == Aggregator::SingleLane {
        geometry::nearest_lane(Vec2::ZERO, &lanes)?
    } else {
        0
    };

    let mut state = StepState::zeros(tape, cfg, lanes.len());
    let mut warmup_attention = Vec::new();

    // Warm-up: observed steps after the first; a one-step history contributes
    // a single step with zero displacement.
    let warmup: Vec<(Vec2, Vec2)> = if obs.len() == 1 {
        vec![(obs[0], obs[0])]
    } else {
        (1..obs.len()).map(|i| (obs[i], obs[i - 1])).collect()
    };
    for (pos, prev) in warmup {
        let delta = tape.leaf_vector(vec![pos.x - prev.x, pos.y - prev.y]);
        let lane_inputs = if needs_lanes {
            let feats = graph::step_features_at(pos, prev, &lanes, cfg.lane_shape)?;
            feats
                .lanes
                .into_iter()
                .map(|lf| LaneStepInput {
                    offset_id: tape.leaf_vector(vec![lf.offset.x, lf.offset.y]),
                    shape_id: tape.leaf_vector(lf.shape),
                    offset: lf.offset,
                })
                .collect()
        } else {
            Vec::new()
        };
        let inputs = StepInputs { delta, lanes: lane_inputs };
        let row = advance_step(tape, params, cfg, &mut state, &inputs, &lane_ids, frozen_index)?;
        warmup_attention.push(row);
    }
    let warmup_h_vv = tape.value(state.h_vv).data().to_vec();

    // Prediction: head first, then feature recomputation at the new position
    // and one advance of every recurrence.
    let mut trajectory = Vec::with_capacity(cfg.t_pred_steps);
    let mut gaussians = Vec::with_capacity(cfg.t_pred_steps);
    let mut gaussian_ids = Vec::with_capacity(cfg.t_pred_steps);
    let mut attention = Vec::with_capacity(cfg.t_pred_steps);
    let mut nll_sum: Option<ValueId> = None;
    let mut prev_pos_id = tape.leaf_vector(vec![0.0, 0.0]);

    for t in 0..cfg.t_pred_steps {
        let g = gaussian_head(tape, params, state.h_overall)?;
        gaussians.push(g.concrete(tape));

        if let Some(fut) = &future {
            let gt = tape.leaf_vector(vec![fut[t].x, fut[t].y]);
            let delta_eval = tape.sub(gt, prev_pos_id)?;
            let term = nll_term(tape, &g, delta_eval)?;
            nll_sum = Some(match nll_sum {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }

        let pos_id = if teacher_forcing {
            let fut = future.as_ref().expect("checked above");
            tape.leaf_vector(vec![fut[t].x, fut[t].y])
        } else {
            tape.add(prev_pos_id, g.mu)?
        };
        gaussian_ids.push(g);
        let pos_val = tape.value(pos_id).data();
        let pos = Vec2::new(pos_val[0], pos_val[1]);
        trajectory.push(pos + origin);

        let delta = tape.sub(pos_id, prev_pos_id)?;
        let lane_inputs = if needs_lanes {
            let mut v = Vec::with_capacity(lanes.len());
            for lane in &lanes {
                let (offset_id, shape_id, proj) =
                    lane_features_on_tape(tape, lane, pos_id, pos, cfg.lane_shape)?;
                v.push(LaneStepInput {
                    offset_id,
                    shape_id,
                    offset: proj.point - pos,
                });
            }
            v
        } else {
            Vec::new()
        };
        let inputs = StepInputs { delta, lanes: lane_inputs };
        let row = advance_step(tape, params, cfg, &mut state, &inputs, &lane_ids, frozen_index)?;
        attention.push(row);
        prev_pos_id = pos_id;
    }

    Ok(TapeRollout {
        output: RolloutOutput {
            trajectory,
            gaussians,
            attention,
            warmup_attention,
            warmup_h_vv,
        },
        gaussian_ids,
        nll: nll_sum,
    })
}

/// Inference rollout on a fresh tape.
pub fn rollout(
    params: &ModelParams,
    cfg: &ModelConfig,
    sample: &TrackSample,
) -> Result<RolloutOutput, ModelError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    rollout_on_tape(&mut tape, &bound, cfg, sample, None, false).map(|r| r.output)
}
