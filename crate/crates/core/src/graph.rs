//! Unfolds a track and its lane set into per-time-step relational features:
//! the vehicle's displacement plus, for every lane, the projection offset and
//! a fixed-size forward shape vector. Lane identity is stable across steps so
//! the per-lane recurrent states stay well-defined.

use crate::geometry::{self, GeometryError, LanePolyline, Vec2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sensor sampling period in seconds.
pub const DT: f64 = 0.1;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GraphError {
    #[error("need at least 2 observed steps to form a displacement, got {0}")]
    TooFewObservations(usize),
    #[error("sample has no lanes")]
    NoLanes,
    #[error("observation timestamps must increase by {DT} s (step {index}: {got})")]
    BadTimestamps { index: usize, got: f64 },
    #[error("future length must be 10 or 30 steps, got {0}")]
    BadFutureLength(usize),
    #[error("duplicate lane id {0}")]
    DuplicateLaneId(u64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One timestamped observed position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPos {
    pub t: f64,
    pub pos: Vec2,
}

/// One training or evaluation instance: observed positions, ground-truth
/// future, and the surrounding lane set with stable ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSample {
    pub obs: Vec<TimedPos>,
    pub future: Vec<Vec2>,
    pub lanes: Vec<LanePolyline>,
    /// Scenario label, e.g. the generator kind.
    pub meta: String,
}

impl TrackSample {
    /// Checks timestamp spacing, future length, and lane id uniqueness.
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.obs.len() < 2 {
            return Err(GraphError::TooFewObservations(self.obs.len()));
        }
        if self.lanes.is_empty() {
            return Err(GraphError::NoLanes);
        }
        for i in 1..self.obs.len() {
            let dt = self.obs[i].t - self.obs[i - 1].t;
            if (dt - DT).abs() > 1e-9 {
                return Err(GraphError::BadTimestamps {
                    index: i,
                    got: self.obs[i].t,
                });
            }
        }
        if self.future.len() != 10 && self.future.len() != 30 {
            return Err(GraphError::BadFutureLength(self.future.len()));
        }
        let mut ids: Vec<u64> = self.lanes.iter().map(|l| l.id()).collect();
        ids.sort_unstable();
        for w in ids.windows(2) {
            if w[0] == w[1] {
                return Err(GraphError::DuplicateLaneId(w[0]));
            }
        }
        Ok(())
    }

    /// Last observed position: the origin of the model's working frame.
    pub fn current_pos(&self) -> Vec2 {
        self.obs.last().expect("sample has observations").pos
    }

    /// The whole sample rigidly translated by `d`.
    pub fn translated(&self, d: Vec2) -> TrackSample {
        TrackSample {
            obs: self
                .obs
                .iter()
                .map(|o| TimedPos { t: o.t, pos: o.pos + d })
                .collect(),
            future: self.future.iter().map(|&p| p + d).collect(),
            lanes: self.lanes.iter().map(|l| l.translated(d)).collect(),
            meta: self.meta.clone(),
        }
    }
}

/// Per-lane slice of one step's features.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneStepFeature {
    pub lane_id: u64,
    /// Projection point minus vehicle position.
    pub offset: Vec2,
    /// `2k` coordinates of resampled lane points ahead of the projection,
    /// relative to the vehicle position.
    pub shape: Vec<f64>,
}

/// Relational features of one time step: the displacement from the previous
/// step and per-lane entries sorted by lane id.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFeatures {
    pub delta: Vec2,
    pub lanes: Vec<LaneStepFeature>,
}

/// Lane-shape sampling parameters: how many points ahead of the projection
/// and at what spacing the lane is resampled for the shape vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneShapeSpec {
    pub k: usize,
    pub spacing_m: f64,
}

impl Default for LaneShapeSpec {
    fn default() -> Self {
        // 10 points at 2 m covers 20 m of lookahead, about 3 s at urban speeds.
        LaneShapeSpec { k: 10, spacing_m: 2.0 }
    }
}

/// Features for one step at `pos` with previous position `prev`. Lanes must
/// be non-empty; entries come back sorted by lane id.
pub fn step_features_at(
    pos: Vec2,
    prev: Vec2,
    lanes: &[LanePolyline],
    shape: LaneShapeSpec,
) -> Result<StepFeatures, GraphError> {
    if lanes.is_empty() {
        return Err(GraphError::NoLanes);
    }
    let mut entries: Vec<LaneStepFeature> = lanes
        .iter()
        .map(|lane| {
            let proj = geometry::project(lane, pos);
            let pts = geometry::resample_ahead(lane, proj.arc_len, shape.k, shape.spacing_m);
            let mut shape_vec = Vec::with_capacity(2 * shape.k);
            for p in pts {
                shape_vec.push(p.x - pos.x);
                shape_vec.push(p.y - pos.y);
            }
            LaneStepFeature {
                lane_id: lane.id(),
                offset: proj.point - pos,
                shape: shape_vec,
            }
        })
        .collect();
    entries.sort_by_key(|e| e.lane_id);
    Ok(StepFeatures {
        delta: pos - prev,
        lanes: entries,
    })
}

/// Features for every observed step after the first, in the frame whose
/// origin is the last observed position.
pub fn build_features(
    sample: &TrackSample,
    shape: LaneShapeSpec,
) -> Result<Vec<StepFeatures>, GraphError> {
    if sample.obs.len() < 2 {
        return Err(GraphError::TooFewObservations(sample.obs.len()));
    }
    if sample.lanes.is_empty() {
        return Err(GraphError::NoLanes);
    }
    let origin = sample.current_pos();
    let shift = Vec2::ZERO - origin;
    let lanes: Vec<LanePolyline> = sample.lanes.iter().map(|l| l.translated(shift)).collect();
    (1..sample.obs.len())
        .map(|i| {
            step_features_at(
                sample.obs[i].pos + shift,
                sample.obs[i - 1].pos + shift,
                &lanes,
                shape,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lane_y0(id: u64) -> LanePolyline {
        LanePolyline::new(id, vec![Vec2::new(-50.0, 0.0), Vec2::new(80.0, 0.0)]).unwrap()
    }

    fn sample_moving_x(n_obs: usize) -> TrackSample {
        let obs: Vec<TimedPos> = (0..n_obs)
            .map(|i| TimedPos {
                t: -((n_obs - 1 - i) as f64) * DT,
                pos: Vec2::new(i as f64, 0.0),
            })
            .collect();
        let last = obs.last().unwrap().pos;
        TrackSample {
            obs,
            future: (1..=10).map(|i| last + Vec2::new(i as f64, 0.0)).collect(),
            lanes: vec![lane_y0(0)],
            meta: "test".into(),
        }
    }

    #[test]
    fn stationary_vehicle_constant_features() {
        let obs: Vec<TimedPos> = (0..5)
            .map(|i| TimedPos {
                t: i as f64 * DT,
                pos: Vec2::new(3.0, 2.0),
            })
            .collect();
        let sample = TrackSample {
            obs,
            future: vec![Vec2::new(3.0, 2.0); 10],
            lanes: vec![lane_y0(0)],
            meta: "test".into(),
        };
        let feats = build_features(&sample, LaneShapeSpec::default()).unwrap();
        assert_eq!(feats.len(), 4);
        for f in &feats {
            assert_eq!(f.delta, Vec2::ZERO);
            assert_eq!(f.lanes[0].offset, Vec2::new(0.0, -2.0));
        }
    }

    #[test]
    fn unit_speed_on_lane_gives_unit_deltas_zero_offsets() {
        let sample = sample_moving_x(6);
        let feats = build_features(&sample, LaneShapeSpec::default()).unwrap();
        assert_eq!(feats.len(), 5);
        for f in &feats {
            assert!((f.delta.x - 1.0).abs() < 1e-12);
            assert!(f.delta.y.abs() < 1e-12);
            assert!(f.lanes[0].offset.norm() < 1e-12);
        }
    }

    #[test]
    fn offsets_match_projection_recomputed_per_step() {
        // Curved lane: a gentle arc; vehicle drives straight through it.
        let pts: Vec<Vec2> = (0..60)
            .map(|i| {
                let a = i as f64 * 0.02;
                Vec2::new(30.0 * a.sin(), 30.0 * (1.0 - a.cos()))
            })
            .collect();
        let lane = LanePolyline::new(7, pts).unwrap();
        let obs: Vec<TimedPos> = (0..8)
            .map(|i| TimedPos {
                t: i as f64 * DT,
                pos: Vec2::new(i as f64 * 0.9, 0.3),
            })
            .collect();
        let sample = TrackSample {
            obs: obs.clone(),
            future: vec![Vec2::ZERO; 10],
            lanes: vec![lane.clone()],
            meta: "curve".into(),
        };
        let spec = LaneShapeSpec::default();
        let feats = build_features(&sample, spec).unwrap();
        let origin = sample.current_pos();
        for (i, f) in feats.iter().enumerate() {
            let pos = obs[i + 1].pos;
            // Independent recomputation in the absolute frame.
            let proj = geometry::project(&lane, pos);
            let want = proj.point - pos;
            assert!((f.lanes[0].offset - want).norm() < 1e-9);
            // And the projection distance equals the offset magnitude.
            assert!((f.lanes[0].offset.norm() - proj.dist).abs() < 1e-9);
            let _ = origin;
        }
    }

    #[test]
    fn step_features_trivial_cases() {
        let lanes = vec![lane_y0(0)];
        let f = step_features_at(Vec2::new(2.0, 0.0), Vec2::new(2.0, 0.0), &lanes, LaneShapeSpec::default())
            .unwrap();
        assert_eq!(f.delta, Vec2::ZERO);
        assert!(f.lanes[0].offset.norm() < 1e-12, "on-lane position has zero offset");
        assert!(matches!(
            step_features_at(Vec2::ZERO, Vec2::ZERO, &[], LaneShapeSpec::default()),
            Err(GraphError::NoLanes)
        ));
    }

    #[test]
    fn rollout_path_features_equal_batch_features() {
        let sample = sample_moving_x(7);
        let spec = LaneShapeSpec::default();
        let batch = build_features(&sample, spec).unwrap();
        let origin = sample.current_pos();
        let shift = Vec2::ZERO - origin;
        let lanes: Vec<LanePolyline> = sample.lanes.iter().map(|l| l.translated(shift)).collect();
        for i in 1..sample.obs.len() {
            let f = step_features_at(
                sample.obs[i].pos + shift,
                sample.obs[i - 1].pos + shift,
                &lanes,
                spec,
            )
            .unwrap();
            assert_eq!(f, batch[i - 1]);
        }
    }

    #[test]
    fn too_few_observations_is_an_error() {
        let mut sample = sample_moving_x(3);
        sample.obs.truncate(1);
        assert!(matches!(
            build_features(&sample, LaneShapeSpec::default()),
            Err(GraphError::TooFewObservations(1))
        ));
    }

    #[test]
    fn build_features_translation_equivariant() {
        let sample = sample_moving_x(6);
        let spec = LaneShapeSpec::default();
        let base = build_features(&sample, spec).unwrap();
        let moved = build_features(&sample.translated(Vec2::new(137.2, -59.1)), spec).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            assert!((a.delta - b.delta).norm() < 1e-9);
            for (la, lb) in a.lanes.iter().zip(&b.lanes) {
                assert_eq!(la.lane_id, lb.lane_id);
                assert!((la.offset - lb.offset).norm() < 1e-9);
                for (sa, sb) in la.shape.iter().zip(&lb.shape) {
                    assert!((sa - sb).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn lane_entries_sorted_by_id_and_count_stable() {
        let lanes = vec![lane_y0(5), lane_y0(1), lane_y0(3)];
        let f = step_features_at(Vec2::new(1.0, 1.0), Vec2::ZERO, &lanes, LaneShapeSpec::default())
            .unwrap();
        let ids: Vec<u64> = f.lanes.iter().map(|l| l.lane_id).collect();
        assert_eq!(ids, vec![1, 3, 5]);
    }

    #[test]
    fn validate_catches_bad_samples() {
        let mut s = sample_moving_x(5);
        s.validate().unwrap();
        s.future.truncate(7);
        assert!(matches!(s.validate(), Err(GraphError::BadFutureLength(7))));

        let mut s2 = sample_moving_x(5);
        s2.obs[2].t += 0.05;
        assert!(matches!(s2.validate(), Err(GraphError::BadTimestamps { .. })));

        let mut s3 = sample_moving_x(5);
        s3.lanes.push(lane_y0(0));
        assert!(matches!(s3.validate(), Err(GraphError::DuplicateLaneId(0))));
    }
}
