//! Single-step building blocks: the LSTM cell, the two-layer MLP, the
//! vehicle/lane encoders, the three aggregators, the overall update, and the
//! Gaussian head. Everything runs on a tape so gradients flow end to end,
//! including through lane features recomputed at predicted positions.

use super::params::{BoundParams, LstmWeights, Mlp};
use super::{GaussianOut, ModelError};
use crate::geometry::{self, LanePolyline, Projection, Vec2};
use crate::graph::LaneShapeSpec;
use crate::numerics::{Tape, Tensor, ValueId};

/// Recurrent state handles for one rollout, all living on one tape.
pub struct StepState {
    pub h_vv: ValueId,
    pub c_vv: ValueId,
    /// Per-lane states, aligned with the canonical (id-sorted) lane order.
    pub lane_h: Vec<ValueId>,
    pub lane_c: Vec<ValueId>,
    pub h_overall: ValueId,
    pub c_overall: ValueId,
}

impl StepState {
    /// Zero-initialized state for `n_lanes` lanes. The lane set is frozen per
    /// sample here; live perception that surfaces a new lane mid-sequence
    /// would extend `lane_h`/`lane_c` with zero vectors the same way.
    pub fn zeros(tape: &mut Tape, cfg: &super::ModelConfig, n_lanes: usize) -> StepState {
        let mut zero = |d: usize| tape.leaf(Tensor::zeros(&[d]));
        StepState {
            h_vv: zero(cfg.lstm_hidden),
            c_vv: zero(cfg.lstm_hidden),
            lane_h: (0..n_lanes).map(|_| zero(cfg.lane_enc_dim)).collect(),
            lane_c: (0..n_lanes).map(|_| zero(cfg.lane_enc_dim)).collect(),
            h_overall: zero(cfg.overall_hidden),
            c_overall: zero(cfg.overall_hidden),
        }
    }
}

/// Everything the aggregators need about one lane at one step.
pub struct LaneEncoding {
    pub lane_id: u64,
    pub e_tot: ValueId,
    pub e_cur: ValueId,
    pub h_ss: ValueId,
    /// Concrete projection offset at this step, used by the pooling argmin.
    pub offset: Vec2,
}

/// Handles to one step's Gaussian output on the tape.
pub struct GaussianIds {
    pub mu: ValueId,
    pub sigma: ValueId,
    pub rho: ValueId,
}

/// Standard LSTM cell: sigmoid gates, tanh candidate,
/// `c' = f*c + i*tanh(Wc x + Uc h + bc)`, `h' = o*tanh(c')`.
pub fn lstm_cell(
    tape: &mut Tape,
    w: &LstmWeights<ValueId>,
    x: ValueId,
    h: ValueId,
    c: ValueId,
) -> Result<(ValueId, ValueId), ModelError> {
    let mut gate = |wx: ValueId, uh: ValueId, b: ValueId| -> Result<ValueId, ModelError> {
        let a = tape.matmul(wx, x)?;
        let r = tape.matmul(uh, h)?;
        let s = tape.add(a, r)?;
        Ok(tape.add(s, b)?)
    };
    let f_pre = gate(w.w_f, w.u_f, w.b_f)?;
    let i_pre = gate(w.w_i, w.u_i, w.b_i)?;
    let o_pre = gate(w.w_o, w.u_o, w.b_o)?;
    let c_pre = gate(w.w_c, w.u_c, w.b_c)?;
    let f = tape.sigmoid(f_pre);
    let i = tape.sigmoid(i_pre);
    let o = tape.sigmoid(o_pre);
    let cand = tape.tanh(c_pre);
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, cand)?;
    let c_new = tape.add(keep, write)?;
    let c_act = tape.tanh(c_new);
    let h_new = tape.mul(o, c_act)?;
    Ok((h_new, c_new))
}

/// Two-layer perceptron: hidden ReLU layer of the output's width, then a
/// linear layer, rectified unless `head` (score and Gaussian outputs omit the
/// final rectifier so they can go negative).
pub fn mlp(
    tape: &mut Tape,
    w: &Mlp<ValueId>,
    x: ValueId,
    head: bool,
) -> Result<ValueId, ModelError> {
    let a1 = tape.matmul(w.w1, x)?;
    let a1 = tape.add(a1, w.b1)?;
    let h = tape.relu(a1);
    let a2 = tape.matmul(w.w2, h)?;
    let a2 = tape.add(a2, w.b2)?;
    Ok(if head { a2 } else { tape.relu(a2) })
}

/// Advances the vehicle temporal edge with one displacement.
pub fn encode_vehicle(
    tape: &mut Tape,
    params: &BoundParams,
    delta: ValueId,
    h: ValueId,
    c: ValueId,
) -> Result<(ValueId, ValueId), ModelError> {
    let e = mlp(tape, &params.vv_embed, delta, false)?;
    lstm_cell(tape, &params.vv_lstm, e, h, c)
}

/// Advances one lane-vehicle temporal edge with the current offset. Weights
/// are shared across lanes.
pub fn encode_lane(
    tape: &mut Tape,
    params: &BoundParams,
    offset: ValueId,
    h: ValueId,
    c: ValueId,
) -> Result<(ValueId, ValueId), ModelError> {
    let e = mlp(tape, &params.ss_embed, offset, false)?;
    lstm_cell(tape, &params.ss_lstm, e, h, c)
}

/// Concatenated per-lane encoding `(h_ss, e_cur, e_fut)`; also returns
/// `e_cur`, which the attention score reuses.
pub fn lane_total_encoding(
    tape: &mut Tape,
    params: &BoundParams,
    h_ss: ValueId,
    offset: ValueId,
    shape: ValueId,
) -> Result<(ValueId, ValueId), ModelError> {
    let e_cur = mlp(tape, &params.cur_mlp, offset, false)?;
    let e_fut = mlp(tape, &params.fut_mlp, shape, false)?;
    let e_tot = tape.concat(&[h_ss, e_cur, e_fut])?;
    Ok((e_tot, e_cur))
}

/// Softmax attention: a learned scalar score per lane from
/// `(e_cur, h_ss)`, normalized weights, and the weighted sum of `e_tot`.
pub fn aggregate_attention(
    tape: &mut Tape,
    params: &BoundParams,
    lanes: &[LaneEncoding],
) -> Result<(ValueId, ValueId), ModelError> {
    if lanes.is_empty() {
        return Err(ModelError::EmptyLaneSet);
    }
    let mut scores = Vec::with_capacity(lanes.len());
    for lane in lanes {
        let score_in = tape.concat(&[lane.e_cur, lane.h_ss])?;
        scores.push(mlp(tape, &params.score_mlp, score_in, true)?);
    }
    let score_vec = tape.concat(&scores)?;
    let weights = tape.softmax(score_vec)?;
    let mut acc: Option<ValueId> = None;
    for (i, lane) in lanes.iter().enumerate() {
        let w_i = tape.slice(weights, i, 1)?;
        let term = tape.scale_by_scalar(lane.e_tot, w_i)?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    Ok((acc.expect("non-empty lanes"), weights))
}

/// Nearest-lane pooling: the encoding of the lane with the smallest squared
/// offset at this step; ties break toward the lowest lane id. Returns the
/// selected index alongside the encoding.
pub fn aggregate_pooling(lanes: &[LaneEncoding]) -> Result<(ValueId, usize), ModelError> {
    if lanes.is_empty() {
        return Err(ModelError::EmptyLaneSet);
    }
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (i, lane) in lanes.iter().enumerate() {
        let d2 = lane.offset.norm_sq();
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    Ok((lanes[best].e_tot, best))
}

/// Single-lane baseline: always the lane frozen at the start of prediction.
pub fn aggregate_single_lane(
    lanes: &[LaneEncoding],
    frozen_index: usize,
) -> Result<ValueId, ModelError> {
    lanes
        .get(frozen_index)
        .map(|l| l.e_tot)
        .ok_or(ModelError::FrozenIndexOutOfRange {
            index: frozen_index,
            n: lanes.len(),
        })
}

/// Advances the overall state with `(a, h_vv)`.
pub fn update_overall(
    tape: &mut Tape,
    params: &BoundParams,
    a: ValueId,
    h_vv: ValueId,
    h: ValueId,
    c: ValueId,
) -> Result<(ValueId, ValueId), ModelError> {
    let e_v = tape.concat(&[a, h_vv])?;
    lstm_cell(tape, &params.overall_lstm, e_v, h, c)
}

/// Floor applied to the predicted standard deviations.
pub const SIGMA_FLOOR: f64 = 1e-3;
/// Correlation squash factor.
pub const RHO_SCALE: f64 = 0.99;

/// Maps the overall state to a valid bivariate Gaussian: the raw head output
/// `[m_x, m_y, s_x, s_y, r]` becomes `mu = (m_x, m_y)`,
/// `sigma = max(exp(s), 1e-3)`, `rho = 0.99 * tanh(r)`.
pub fn gaussian_head(
    tape: &mut Tape,
    params: &BoundParams,
    h_overall: ValueId,
) -> Result<GaussianIds, ModelError> {
    let raw = mlp(tape, &params.head_mlp, h_overall, true)?;
    let mu = tape.slice(raw, 0, 2)?;
    let s_raw = tape.slice(raw, 2, 2)?;
    let s_exp = tape.exp(s_raw);
    let sigma = tape.clamp_min(s_exp, SIGMA_FLOOR);
    let r_raw = tape.slice(raw, 4, 1)?;
    let r_tanh = tape.tanh(r_raw);
    let rho = tape.affine(r_tanh, RHO_SCALE, 0.0);
    Ok(GaussianIds { mu, sigma, rho })
}

impl GaussianIds {
    /// Concrete values of this step's distribution.
    pub fn concrete(&self, tape: &Tape) -> GaussianOut {
        let mu = tape.value(self.mu).data();
        let sigma = tape.value(self.sigma).data();
        GaussianOut {
            mu: Vec2::new(mu[0], mu[1]),
            sigma: Vec2::new(sigma[0], sigma[1]),
            rho: tape.value(self.rho).data()[0],
        }
    }
}

// ── Differentiable lane features ─────────────────────────────────────
//
// At predicted positions the projection offset and the shape vector depend on
// the position, which depends on upstream parameters. Projection and
// resampling are piecewise affine in the query point, so we compute the exact
// local affine map at the concrete position and record it on the tape. The
// backward pass through it is then the true vector-Jacobian product, and
// finite differences over the whole rollout agree with the analytic route.

/// Offset and shape features for one lane at tape position `pos_id` (with
/// concrete value `pos`), plus the underlying projection.
pub fn lane_features_on_tape(
    tape: &mut Tape,
    lane: &LanePolyline,
    pos_id: ValueId,
    pos: Vec2,
    shape: LaneShapeSpec,
) -> Result<(ValueId, ValueId, Projection), ModelError> {
    let proj = geometry::project(lane, pos);

    // Is the projection interior to its segment? At a clamped endpoint the
    // projected point is locally constant in the query.
    let pts = lane.points();
    let a = pts[proj.segment_index];
    let seg = pts[proj.segment_index + 1] - a;
    let seg_len2 = seg.norm_sq();
    let t_raw = (pos - a).dot(seg) / seg_len2;
    let interior = t_raw > 0.0 && t_raw < 1.0;

    // d(arc)/d(pos): the segment direction when interior, zero when clamped.
    let dir = seg.scale(1.0 / seg_len2.sqrt());
    let arc_grad = if interior { dir } else { Vec2::ZERO };

    // offset(q) = proj(q) - q. Interior: (d dT - I)(q - a); clamped: const - q.
    let off_jac = if interior {
        [
            dir.x * dir.x - 1.0,
            dir.x * dir.y,
            dir.y * dir.x,
            dir.y * dir.y - 1.0,
        ]
    } else {
        [-1.0, 0.0, 0.0, -1.0]
    };
    let offset = proj.point - pos;
    let off_const = [
        offset.x - (off_jac[0] * pos.x + off_jac[1] * pos.y),
        offset.y - (off_jac[2] * pos.x + off_jac[3] * pos.y),
    ];
    let jac = tape.leaf(Tensor::matrix(2, 2, off_jac.to_vec()).expect("2x2"));
    let lin = tape.matmul(jac, pos_id)?;
    let cst = tape.leaf_vector(off_const.to_vec());
    let offset_id = tape.add(lin, cst)?;

    // shape rows: r_k(q) - q with dr_k/dq = dir_k (x) arc_grad.
    let k = shape.k;
    let mut shape_jac = vec![0.0; 2 * k * 2];
    let mut shape_const = vec![0.0; 2 * k];
    for i in 1..=k {
        let arc = proj.arc_len + shape.spacing_m * i as f64;
        let (seg_i, seg_off) = lane.segment_at_arc(arc);
        let dir_i = lane.segment_dir(seg_i);
        let r = pts[seg_i] + dir_i.scale(seg_off);
        let row = 2 * (i - 1);
        let j = [
            dir_i.x * arc_grad.x - 1.0,
            dir_i.x * arc_grad.y,
            dir_i.y * arc_grad.x,
            dir_i.y * arc_grad.y - 1.0,
        ];
        shape_jac[row * 2] = j[0];
        shape_jac[row * 2 + 1] = j[1];
        shape_jac[(row + 1) * 2] = j[2];
        shape_jac[(row + 1) * 2 + 1] = j[3];
        shape_const[row] = (r.x - pos.x) - (j[0] * pos.x + j[1] * pos.y);
        shape_const[row + 1] = (r.y - pos.y) - (j[2] * pos.x + j[3] * pos.y);
    }
    let jac = tape.leaf(Tensor::matrix(2 * k, 2, shape_jac).expect("shape jac"));
    let lin = tape.matmul(jac, pos_id)?;
    let cst = tape.leaf_vector(shape_const);
    let shape_id = tape.add(lin, cst)?;

    Ok((offset_id, shape_id, proj))
}
