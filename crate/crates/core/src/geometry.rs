//! Lane center-line geometry: polylines with arc length, closest-point
//! projection, and fixed-spacing resampling ahead of a point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Consecutive polyline points closer than this are considered duplicates.
pub const MIN_SEGMENT_LEN: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate segment {index} (length {length:.3e} m)")]
    DegenerateSegment { index: usize, length: f64 },
    #[error("empty lane list")]
    NoLanes,
}

/// 2-D position or displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn scale(self, c: f64) -> Vec2 {
        Vec2::new(c * self.x, c * self.y)
    }

    /// Left-hand unit normal.
    pub fn left_normal(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

/// Ordered lane center-line points with cumulative arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct LanePolyline {
    id: u64,
    points: Vec<Vec2>,
    cum_len: Vec<f64>,
}

/// Closest point on a polyline to a query position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Projected point on the polyline.
    pub point: Vec2,
    /// Arc length along the polyline at the projected point.
    pub arc_len: f64,
    /// Euclidean distance from the query to the projected point.
    pub dist: f64,
    /// Index of the segment containing the projected point.
    pub segment_index: usize,
}

impl LanePolyline {
    /// Validates the point list and precomputes cumulative arc length.
    pub fn new(id: u64, points: Vec<Vec2>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::TooFewPoints(points.len()));
        }
        let mut cum_len = Vec::with_capacity(points.len());
        cum_len.push(0.0);
        for i in 1..points.len() {
            let seg = (points[i] - points[i - 1]).norm();
            if seg <= MIN_SEGMENT_LEN {
                return Err(GeometryError::DegenerateSegment {
                    index: i - 1,
                    length: seg,
                });
            }
            cum_len.push(cum_len[i - 1] + seg);
        }
        Ok(LanePolyline { id, points, cum_len })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn cum_len(&self) -> &[f64] {
        &self.cum_len
    }

    pub fn total_len(&self) -> f64 {
        *self.cum_len.last().unwrap()
    }

    /// The polyline rigidly translated by `d`.
    pub fn translated(&self, d: Vec2) -> LanePolyline {
        LanePolyline {
            id: self.id,
            points: self.points.iter().map(|&p| p + d).collect(),
            cum_len: self.cum_len.clone(),
        }
    }

    /// Unit direction of segment `i`.
    pub fn segment_dir(&self, i: usize) -> Vec2 {
        (self.points[i + 1] - self.points[i]).normalized()
    }

    /// Point at a given arc length. Arc lengths outside [0, total] extrapolate
    /// linearly along the first/last segment direction.
    pub fn point_at_arc(&self, arc: f64) -> Vec2 {
        let (seg, offset) = self.segment_at_arc(arc);
        self.points[seg] + self.segment_dir(seg).scale(offset)
    }

    /// Segment index and offset from its start point for a given arc length.
    /// Out-of-range arcs map to the first/last segment with an offset that
    /// extrapolates past its ends.
    pub fn segment_at_arc(&self, arc: f64) -> (usize, f64) {
        let last_seg = self.points.len() - 2;
        if arc <= 0.0 {
            return (0, arc);
        }
        if arc >= self.total_len() {
            return (last_seg, arc - self.cum_len[last_seg]);
        }
        // partition_point: first index with cum_len > arc, so arc lies on
        // the segment starting at idx-1.
        let idx = self.cum_len.partition_point(|&c| c <= arc);
        let seg = (idx - 1).min(last_seg);
        (seg, arc - self.cum_len[seg])
    }
}

/// Closest point on `lane` to `q`: per-segment orthogonal projection clamped
/// to the segment endpoints, minimized over all segments.
pub fn project(lane: &LanePolyline, q: Vec2) -> Projection {
    let pts = lane.points();
    let mut best = Projection {
        point: pts[0],
        arc_len: 0.0,
        dist: (q - pts[0]).norm(),
        segment_index: 0,
    };
    for i in 0..pts.len() - 1 {
        let a = pts[i];
        let seg = pts[i + 1] - a;
        let len = seg.norm();
        let t = ((q - a).dot(seg) / (len * len)).clamp(0.0, 1.0);
        let p = a + seg.scale(t);
        let dist = (q - p).norm();
        if dist < best.dist {
            best = Projection {
                point: p,
                arc_len: lane.cum_len()[i] + t * len,
                dist,
                segment_index: i,
            };
        }
    }
    best
}

/// `k` points ahead of `from_arc` at fixed spacing, linearly interpolated on
/// the polyline and extrapolated along the final segment past the end.
pub fn resample_ahead(lane: &LanePolyline, from_arc: f64, k: usize, spacing: f64) -> Vec<Vec2> {
    assert!(k >= 1, "resample_ahead needs k >= 1");
    assert!(spacing > 0.0, "resample_ahead needs positive spacing");
    (1..=k)
        .map(|i| lane.point_at_arc(from_arc + spacing * i as f64))
        .collect()
}

/// Index of the lane whose projection is closest to `q` (squared distance);
/// ties break toward the lowest index.
pub fn nearest_lane(q: Vec2, lanes: &[LanePolyline]) -> Result<usize, GeometryError> {
    if lanes.is_empty() {
        return Err(GeometryError::NoLanes);
    }
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (i, lane) in lanes.iter().enumerate() {
        let d = project(lane, q).dist;
        if d * d < best_d2 {
            best_d2 = d * d;
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{RngExt, SeedableRng};

    fn straight_x(id: u64, len: f64) -> LanePolyline {
        LanePolyline::new(id, vec![Vec2::new(0.0, 0.0), Vec2::new(len, 0.0)]).unwrap()
    }

    /// Dense-sampling oracle: walk every segment at tiny steps, including
    /// both endpoints, and take the minimum distance. Independent of the
    /// analytic projection.
    fn projection_dist_oracle(lane: &LanePolyline, q: Vec2, step: f64) -> f64 {
        let pts = lane.points();
        let mut best = f64::INFINITY;
        for i in 0..pts.len() - 1 {
            let a = pts[i];
            let dir = pts[i + 1] - a;
            let len = dir.norm();
            let n = (len / step).ceil() as usize;
            for j in 0..=n {
                let t = (j as f64 * step).min(len) / len;
                let d = (q - (a + dir.scale(t))).norm();
                if d < best {
                    best = d;
                }
            }
        }
        best
    }

    pub(crate) fn random_polyline(rng: &mut StdRng, n_points: usize) -> LanePolyline {
        let mut points = vec![Vec2::new(
            rng.random_range(-20.0..20.0),
            rng.random_range(-20.0..20.0),
        )];
        let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        for _ in 1..n_points {
            heading += rng.random_range(-0.5..0.5);
            let step = rng.random_range(0.5..4.0);
            let last = *points.last().unwrap();
            points.push(last + Vec2::new(heading.cos(), heading.sin()).scale(step));
        }
        LanePolyline::new(0, points).unwrap()
    }

    #[test]
    fn project_axis_aligned() {
        let lane = straight_x(0, 10.0);
        let p = project(&lane, Vec2::new(3.0, 4.0));
        assert!((p.point.x - 3.0).abs() < 1e-12);
        assert!(p.point.y.abs() < 1e-12);
        assert!((p.dist - 4.0).abs() < 1e-12);
        assert!((p.arc_len - 3.0).abs() < 1e-12);
    }

    #[test]
    fn project_clamps_to_endpoint() {
        let lane = straight_x(0, 10.0);
        let p = project(&lane, Vec2::new(12.0, 1.0));
        assert_eq!(p.point, Vec2::new(10.0, 0.0));
        assert!((p.dist - 5.0_f64.sqrt()).abs() < 1e-12);
        assert!((p.arc_len - 10.0).abs() < 1e-12);
    }

    #[test]
    fn project_matches_dense_sampling_oracle() {
        let mut rng = StdRng::seed_from_u64(2024);
        for _ in 0..25 {
            let lane = random_polyline(&mut rng, 20);
            let base = lane.point_at_arc(rng.random_range(0.0..lane.total_len()));
            let off = rng.random_range(0.05..8.0);
            let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let q = base + Vec2::new(ang.cos(), ang.sin()).scale(off);
            let analytic = project(&lane, q).dist;
            let oracle = projection_dist_oracle(&lane, q, 1e-4);
            assert!(
                (analytic - oracle).abs() < 1e-6,
                "analytic {analytic} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn resample_straight_lane() {
        let lane = straight_x(0, 10.0);
        let pts = resample_ahead(&lane, 0.0, 3, 2.0);
        assert_eq!(pts.len(), 3);
        for (i, p) in pts.iter().enumerate() {
            assert!((p.x - 2.0 * (i + 1) as f64).abs() < 1e-12);
            assert!(p.y.abs() < 1e-12);
        }
    }

    #[test]
    fn resample_extrapolates_past_end() {
        let lane = straight_x(0, 5.0);
        let pts = resample_ahead(&lane, 4.0, 2, 2.0);
        assert!((pts[0].x - 6.0).abs() < 1e-12, "arc 6 extrapolated");
        assert!((pts[1].x - 8.0).abs() < 1e-12, "arc 8 extrapolated");
    }

    #[test]
    fn resample_quarter_circle_stays_on_circle() {
        // Radius-10 quarter circle sampled with 100 points.
        let r = 10.0;
        let n = 100;
        let points: Vec<Vec2> = (0..n)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 * i as f64 / (n - 1) as f64;
                Vec2::new(r * a.cos(), r * a.sin())
            })
            .collect();
        let lane = LanePolyline::new(0, points).unwrap();
        for p in resample_ahead(&lane, 1.0, 6, 2.0) {
            let err = (p.norm() - r).abs();
            assert!(err < 0.05, "point off circle by {err}");
        }
    }

    #[test]
    fn nearest_lane_basics() {
        let l0 = straight_x(0, 10.0);
        let l1 = LanePolyline::new(1, vec![Vec2::new(0.0, 4.0), Vec2::new(10.0, 4.0)]).unwrap();
        let lanes = vec![l0, l1];
        assert_eq!(nearest_lane(Vec2::new(5.0, 1.0), &lanes).unwrap(), 0);
        assert_eq!(nearest_lane(Vec2::new(5.0, 2.0), &lanes).unwrap(), 0, "tie -> lowest index");
        assert_eq!(nearest_lane(Vec2::new(5.0, 1.0), &lanes[..1]).unwrap(), 0);
        assert!(matches!(nearest_lane(Vec2::ZERO, &[]), Err(GeometryError::NoLanes)));
    }

    #[test]
    fn polyline_validation() {
        assert!(matches!(
            LanePolyline::new(0, vec![Vec2::ZERO]),
            Err(GeometryError::TooFewPoints(1))
        ));
        assert!(matches!(
            LanePolyline::new(0, vec![Vec2::ZERO, Vec2::ZERO, Vec2::new(1.0, 0.0)]),
            Err(GeometryError::DegenerateSegment { index: 0, .. })
        ));
        let lane = straight_x(0, 3.0);
        assert_eq!(lane.cum_len(), &[0.0, 3.0]);
    }

    proptest! {
        #[test]
        fn projection_dist_bounded_by_vertex_distances(seed in 0u64..300, qx in -30.0..30.0f64, qy in -30.0..30.0f64) {
            let mut rng = StdRng::seed_from_u64(seed);
            let lane = random_polyline(&mut rng, 12);
            let q = Vec2::new(qx, qy);
            let p = project(&lane, q);
            for v in lane.points() {
                prop_assert!(p.dist <= (q - *v).norm() + 1e-12);
            }
        }

        #[test]
        fn resample_then_project_recovers_arc(seed in 0u64..200) {
            let mut rng = StdRng::seed_from_u64(seed);
            let lane = random_polyline(&mut rng, 15);
            let from = rng.random_range(0.0..lane.total_len() * 0.3);
            let spacing = 1.5;
            let pts = resample_ahead(&lane, from, 4, spacing);
            for (i, p) in pts.iter().enumerate() {
                let want = from + spacing * (i + 1) as f64;
                if want < lane.total_len() {
                    let got = project(&lane, *p).arc_len;
                    prop_assert!((got - want).abs() < 1e-6, "arc {got} vs {want}");
                }
            }
        }

        #[test]
        fn nearest_lane_translation_invariant(seed in 0u64..200, dx in -100.0..100.0f64, dy in -100.0..100.0f64) {
            let mut rng = StdRng::seed_from_u64(seed);
            let lanes: Vec<LanePolyline> = (0..3).map(|_| random_polyline(&mut rng, 8)).collect();
            let q = Vec2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
            let base = nearest_lane(q, &lanes).unwrap();
            // Skip near-ties, where rounding after translation could
            // legitimately flip the winner.
            let mut dists: Vec<f64> = lanes.iter().map(|l| project(l, q).dist).collect();
            dists.sort_by(f64::total_cmp);
            prop_assume!(dists[1] - dists[0] > 1e-6);
            let d = Vec2::new(dx, dy);
            let moved: Vec<LanePolyline> = lanes.iter().map(|l| l.translated(d)).collect();
            prop_assert_eq!(base, nearest_lane(q + d, &moved).unwrap());
        }
    }
}
