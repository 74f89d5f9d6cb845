//! Synthetic driving scenarios: lane layouts per behavior class, a
//! waypoint-following point mass driven along one route at constant speed,
//! i.i.d. Gaussian observation noise on the history only, and a line-delimited
//! dataset format with exact decimal round-trips.

use crate::geometry::{GeometryError, LanePolyline, Vec2};
use crate::graph::{TimedPos, TrackSample, DT};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

pub const LANE_WIDTH: f64 = 3.5;
/// Seed offset between dataset splits; keeps their sample seeds disjoint, the
/// stand-in for partitioning real recordings by date.
pub const SPLIT_SEED_BLOCK: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid scenario spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Behavior classes mirrored from the target mix: mostly along-road driving
/// (straight, curve, merge) plus turns at bifurcations and lane changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Straight,
    Curve,
    BifurcationLeft,
    BifurcationRight,
    Merge,
    LaneChange,
}

pub const ALL_KINDS: [ScenarioKind; 6] = [
    ScenarioKind::Straight,
    ScenarioKind::Curve,
    ScenarioKind::BifurcationLeft,
    ScenarioKind::BifurcationRight,
    ScenarioKind::Merge,
    ScenarioKind::LaneChange,
];

impl ScenarioKind {
    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::Straight => "straight",
            ScenarioKind::Curve => "curve",
            ScenarioKind::BifurcationLeft => "bifurcation_left",
            ScenarioKind::BifurcationRight => "bifurcation_right",
            ScenarioKind::Merge => "merge",
            ScenarioKind::LaneChange => "lane_change",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_KINDS
            .iter()
            .find(|k| k.label() == s)
            .copied()
            .ok_or_else(|| format!("unknown scenario kind '{s}'"))
    }
}

/// One scenario to generate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Constant speed in m/s, expected within [3, 20].
    pub speed: f64,
    /// Standard deviation of the observation noise in meters.
    pub noise_std: f64,
    pub lane_width: f64,
    pub seed: u64,
    /// Ground-truth horizon: 10 or 30 steps.
    pub future_steps: usize,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, speed: f64, noise_std: f64, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            kind,
            speed,
            noise_std,
            lane_width: LANE_WIDTH,
            seed,
            future_steps: 30,
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if !(0.5..=40.0).contains(&self.speed) {
            return Err(ScenarioError::BadSpec(format!(
                "speed {} m/s out of range",
                self.speed
            )));
        }
        if self.noise_std < 0.0 {
            return Err(ScenarioError::BadSpec("negative noise_std".to_string()));
        }
        if self.future_steps != 10 && self.future_steps != 30 {
            return Err(ScenarioError::BadSpec(format!(
                "future_steps must be 10 or 30, got {}",
                self.future_steps
            )));
        }
        Ok(())
    }
}

/// Kind proportions for dataset generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mix(Vec<(ScenarioKind, f64)>);

impl Default for Mix {
    /// Along-road driving (straight, curve, merge) at 82%, turns at 6% per
    /// side, lane changes at 6%.
    fn default() -> Self {
        Mix(vec![
            (ScenarioKind::Straight, 0.40),
            (ScenarioKind::Curve, 0.30),
            (ScenarioKind::Merge, 0.12),
            (ScenarioKind::BifurcationLeft, 0.06),
            (ScenarioKind::BifurcationRight, 0.06),
            (ScenarioKind::LaneChange, 0.06),
        ])
    }
}

impl Mix {
    pub fn new(weights: Vec<(ScenarioKind, f64)>) -> Result<Mix, ScenarioError> {
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        if total <= 0.0 || weights.iter().any(|(_, w)| *w < 0.0) {
            return Err(ScenarioError::BadSpec(
                "mix weights must be nonnegative with a positive sum".to_string(),
            ));
        }
        Ok(Mix(weights))
    }

    /// Exact integer apportionment of `n` samples by largest remainder.
    pub fn apportion(&self, n: usize) -> Vec<(ScenarioKind, usize)> {
        let total: f64 = self.0.iter().map(|(_, w)| w).sum();
        let quotas: Vec<f64> = self.0.iter().map(|(_, w)| n as f64 * w / total).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for i in 0..n - assigned {
            counts[order[i % order.len()]] += 1;
        }
        self.0
            .iter()
            .map(|(k, _)| *k)
            .zip(counts)
            .collect()
    }
}

/// A split's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<TrackSample>,
    pub split: String,
}

// ── Generation ───────────────────────────────────────────────────────

/// Arc-length margin from the lane start to the first observation.
const START_MARGIN: f64 = 3.0;
/// Extra lane length beyond the driven distance, covering the resampled
/// lookahead plus drift of predicted positions.
const END_MARGIN: f64 = 35.0;

struct Layout {
    lanes: Vec<LanePolyline>,
    /// The driven center-line.
    route: LanePolyline,
    /// Lateral offset profile for lane changes: (target offset direction,
    /// onset time relative to current, duration).
    lateral: Option<(Vec2, f64, f64)>,
}

fn rotate(p: Vec2, cos_t: f64, sin_t: f64) -> Vec2 {
    Vec2::new(p.x * cos_t - p.y * sin_t, p.x * sin_t + p.y * cos_t)
}

/// Points of a circular arc starting at `start` with heading `dir0`, turning
/// toward `side` (+1 left, -1 right) with the given radius, for `arc_len`
/// meters, then a straight tail. Roughly 1 m point spacing on the arc.
fn arc_points(start: Vec2, dir0: Vec2, side: f64, radius: f64, arc_len: f64, tail: f64) -> Vec<Vec2> {
    let center = start + dir0.left_normal().scale(side * radius);
    let n = (arc_len.ceil() as usize).max(2);
    let mut pts = Vec::with_capacity(n + 2);
    for j in 1..=n {
        let s = arc_len * j as f64 / n as f64;
        let ang = side * s / radius;
        let radial = start - center;
        let p = center + rotate(radial, ang.cos(), ang.sin());
        pts.push(p);
    }
    if tail > 0.0 {
        let end_ang = side * arc_len / radius;
        let end_dir = rotate(dir0, end_ang.cos(), end_ang.sin());
        let last = *pts.last().unwrap();
        pts.push(last + end_dir.scale(tail));
    }
    pts
}

fn straight_layout(rng: &mut StdRng, spec: &ScenarioSpec, lane_len: f64) -> Layout {
    let n_lanes = rng.random_range(1..=3usize);
    let own = rng.random_range(0..n_lanes);
    let lanes: Vec<LanePolyline> = (0..n_lanes)
        .map(|i| {
            let y = (i as f64 - own as f64) * spec.lane_width;
            LanePolyline::new(
                i as u64,
                vec![Vec2::new(0.0, y), Vec2::new(lane_len, y)],
            )
            .expect("straight lane")
        })
        .collect();
    let route = lanes[own].clone();
    Layout {
        lanes,
        route,
        lateral: None,
    }
}

fn curve_layout(rng: &mut StdRng, spec: &ScenarioSpec, lane_len: f64, arc_cur: f64) -> Layout {
    let radius = rng.random_range(15.0..60.0);
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let lead = rng.random_range(2.0..arc_cur.max(3.0));
    let max_sweep = radius * 1.9; // cap the arc near 110 degrees
    let arc_len = (lane_len - lead).min(max_sweep);
    let tail = (lane_len - lead - arc_len).max(0.0);
    let mk = |id: u64, r: f64, y0: f64| {
        let start = Vec2::new(lead, y0);
        let mut pts = vec![Vec2::new(0.0, y0), start];
        // Inner/outer lanes sweep the same angle as the driven one.
        let sweep = arc_len / radius;
        pts.extend(arc_points(start, Vec2::new(1.0, 0.0), side, r, r * sweep, tail));
        LanePolyline::new(id, pts).expect("curve lane")
    };
    let two_lanes = rng.random_bool(0.5);
    let own_r = radius;
    let mut lanes = vec![mk(0, own_r, 0.0)];
    if two_lanes {
        // Concentric neighbor offset one lane width outward from the center.
        let other_r = radius + spec.lane_width;
        let y0 = -side * spec.lane_width;
        lanes.push(mk(1, other_r, y0));
    }
    let route = lanes[0].clone();
    Layout {
        lanes,
        route,
        lateral: None,
    }
}

fn bifurcation_layout(
    rng: &mut StdRng,
    spec: &ScenarioSpec,
    lane_len: f64,
    arc_cur: f64,
) -> Layout {
    let left = spec.kind == ScenarioKind::BifurcationLeft;
    let side = if left { 1.0 } else { -1.0 };
    // Mostly committed turns: the fork usually sits behind the prediction
    // start so the maneuver has begun by the time the history ends.
    let t_fork = rng.random_range(-0.8..0.2);
    let s_fork = (arc_cur + t_fork * spec.speed).max(START_MARGIN + 1.0);
    let radius = rng.random_range(10.0..30.0);
    let stem = vec![Vec2::new(0.0, 0.0), Vec2::new(s_fork, 0.0)];
    // Straight branch: the stem continued to full length.
    let mut straight_pts = stem.clone();
    straight_pts.push(Vec2::new(lane_len, 0.0));
    let straight = LanePolyline::new(0, straight_pts).expect("straight branch");
    // Turning branch: an arc off the fork, capped near 75 degrees, then a tail.
    let remaining = lane_len - s_fork;
    let arc_len = remaining.min(radius * 1.3);
    let tail = (remaining - arc_len).max(0.0);
    let mut turn_pts = stem;
    turn_pts.extend(arc_points(
        Vec2::new(s_fork, 0.0),
        Vec2::new(1.0, 0.0),
        side,
        radius,
        arc_len,
        tail,
    ));
    let turn = LanePolyline::new(1, turn_pts).expect("turning branch");
    Layout {
        lanes: vec![straight, turn.clone()],
        route: turn,
        lateral: None,
    }
}

fn merge_layout(rng: &mut StdRng, spec: &ScenarioSpec, lane_len: f64, arc_cur: f64) -> Layout {
    let t_merge = rng.random_range(0.3..1.5);
    let taper = (spec.speed * 0.9).clamp(4.0, 15.0);
    // Keep the approach ahead of the lane start even at low speeds.
    let s_merge_route = (arc_cur + t_merge * spec.speed).max(taper + 4.0);
    let off = if rng.random_bool(0.5) { spec.lane_width } else { -spec.lane_width };
    let on_taper = rng.random_bool(0.5);
    let hyp = (taper * taper + off * off).sqrt();
    // Place the merge point so the ROUTE reaches it at s_merge_route.
    let x_m = if on_taper {
        s_merge_route + taper - hyp
    } else {
        s_merge_route
    };
    let tail_end = Vec2::new(lane_len.max(x_m + END_MARGIN), 0.0);
    let merge_pt = Vec2::new(x_m, 0.0);
    let through = LanePolyline::new(
        0,
        vec![Vec2::new(0.0, 0.0), merge_pt, tail_end],
    )
    .expect("through lane");
    let merging = LanePolyline::new(
        1,
        vec![
            Vec2::new(0.0, off),
            Vec2::new(x_m - taper, off),
            merge_pt,
            tail_end,
        ],
    )
    .expect("merging lane");
    let route = if on_taper { merging.clone() } else { through.clone() };
    Layout {
        lanes: vec![through, merging],
        route,
        lateral: None,
    }
}

fn lane_change_layout(rng: &mut StdRng, spec: &ScenarioSpec, lane_len: f64) -> Layout {
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let target_y = side * spec.lane_width;
    let source =
        LanePolyline::new(0, vec![Vec2::new(0.0, 0.0), Vec2::new(lane_len, 0.0)]).expect("source");
    let target = LanePolyline::new(
        1,
        vec![Vec2::new(0.0, target_y), Vec2::new(lane_len, target_y)],
    )
    .expect("target");
    let onset = rng.random_range(-1.0..-0.25);
    let duration = rng.random_range(1.5..2.5);
    Layout {
        lanes: vec![source.clone(), target],
        route: source,
        lateral: Some((Vec2::new(0.0, target_y), onset, duration)),
    }
}

fn smoothstep(w: f64) -> f64 {
    let w = w.clamp(0.0, 1.0);
    w * w * (3.0 - 2.0 * w)
}

/// Builds the lanes for the spec's kind, drives a point mass along the route
/// at constant speed, and adds observation noise to the history only.
pub fn generate(spec: &ScenarioSpec) -> Result<TrackSample, ScenarioError> {
    spec.validate()?;
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let n_obs = rng.random_range(2..=20usize);
    let total_time = (n_obs - 1 + spec.future_steps) as f64 * DT;
    let lane_len = START_MARGIN + spec.speed * total_time + END_MARGIN;
    let arc_cur = START_MARGIN + spec.speed * (n_obs - 1) as f64 * DT;

    let layout = match spec.kind {
        ScenarioKind::Straight => straight_layout(&mut rng, spec, lane_len),
        ScenarioKind::Curve => curve_layout(&mut rng, spec, lane_len, arc_cur),
        ScenarioKind::BifurcationLeft | ScenarioKind::BifurcationRight => {
            bifurcation_layout(&mut rng, spec, lane_len, arc_cur)
        }
        ScenarioKind::Merge => merge_layout(&mut rng, spec, lane_len, arc_cur),
        ScenarioKind::LaneChange => lane_change_layout(&mut rng, spec, lane_len),
    };

    // Random rigid placement of the whole scene.
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (cos_t, sin_t) = (theta.cos(), theta.sin());
    let shift = Vec2::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
    let place = |p: Vec2| rotate(p, cos_t, sin_t) + shift;

    let n_total = n_obs + spec.future_steps;
    let mut positions = Vec::with_capacity(n_total);
    for k in 0..n_total {
        let u = k as f64 * DT;
        let arc = START_MARGIN + spec.speed * u;
        let mut p = layout.route.point_at_arc(arc);
        if let Some((target, onset, duration)) = layout.lateral {
            let t_rel = u - (n_obs - 1) as f64 * DT;
            p = p + target.scale(smoothstep((t_rel - onset) / duration));
        }
        positions.push(place(p));
    }

    let lanes: Vec<LanePolyline> = layout
        .lanes
        .iter()
        .map(|l| {
            LanePolyline::new(l.id(), l.points().iter().map(|&p| place(p)).collect())
                .expect("placed lane")
        })
        .collect();

    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| ScenarioError::BadSpec(format!("noise: {e}")))?;
    let obs: Vec<TimedPos> = positions[..n_obs]
        .iter()
        .enumerate()
        .map(|(k, &p)| TimedPos {
            t: -((n_obs - 1 - k) as f64) * DT,
            pos: p + Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng)),
        })
        .collect();
    let future: Vec<Vec2> = positions[n_obs..].to_vec();

    let sample = TrackSample {
        obs,
        future,
        lanes,
        meta: spec.kind.label().to_string(),
    };
    sample
        .validate()
        .map_err(|e| ScenarioError::BadSpec(format!("generated sample invalid: {e}")))?;
    Ok(sample)
}

/// Deterministic train/val/test generation from disjoint seed blocks.
/// Kind counts follow the mix exactly (largest-remainder apportionment).
pub fn generate_dataset(
    counts: [usize; 3],
    mix: &Mix,
    noise_std: f64,
    base_seed: u64,
    future_steps: usize,
) -> Result<[Dataset; 3], ScenarioError> {
    let names = ["train", "val", "test"];
    let mut out = Vec::with_capacity(3);
    for (split_idx, (&n, name)) in counts.iter().zip(names).enumerate() {
        let split_seed = base_seed + split_idx as u64 * SPLIT_SEED_BLOCK;
        let mut kinds = Vec::with_capacity(n);
        for (kind, count) in mix.apportion(n) {
            kinds.extend(std::iter::repeat_n(kind, count));
        }
        // Spread kinds across the seed range, deterministically.
        let mut order_rng = StdRng::seed_from_u64(split_seed ^ 0x9e3779b97f4a7c15);
        rand::seq::SliceRandom::shuffle(kinds.as_mut_slice(), &mut order_rng);
        let mut samples = Vec::with_capacity(n);
        for (i, kind) in kinds.into_iter().enumerate() {
            let seed = split_seed + i as u64;
            let mut speed_rng = StdRng::seed_from_u64(seed ^ 0xda3e39cb94b95bdb);
            let spec = ScenarioSpec {
                kind,
                speed: speed_rng.random_range(3.0..20.0),
                noise_std,
                lane_width: LANE_WIDTH,
                seed,
                future_steps,
            };
            samples.push(generate(&spec)?);
        }
        out.push(Dataset {
            samples,
            split: name.to_string(),
        });
    }
    Ok(out.try_into().expect("three splits"))
}

// ── Dataset files ────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct LaneRecord {
    id: u64,
    points: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    id: u64,
    kind: String,
    dt: f64,
    obs: Vec<(f64, f64, f64)>,
    future: Vec<(f64, f64)>,
    lanes: Vec<LaneRecord>,
}

/// One sample per line; ids are line indices. Values round-trip exactly.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), ScenarioError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (i, s) in dataset.samples.iter().enumerate() {
        let rec = SampleRecord {
            id: i as u64,
            kind: s.meta.clone(),
            dt: DT,
            obs: s.obs.iter().map(|o| (o.t, o.pos.x, o.pos.y)).collect(),
            future: s.future.iter().map(|p| (p.x, p.y)).collect(),
            lanes: s
                .lanes
                .iter()
                .map(|l| LaneRecord {
                    id: l.id(),
                    points: l.points().iter().map(|p| (p.x, p.y)).collect(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut f, &rec)
            .map_err(|e| ScenarioError::Parse { line: i + 1, msg: e.to_string() })?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`]. Parse failures name the line
/// and, where serde can tell, the offending field.
pub fn read_dataset(path: &Path) -> Result<Dataset, ScenarioError> {
    let split = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut samples = Vec::new();
    for (idx, line) in file.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| ScenarioError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let expected_id = samples.len() as u64;
        if rec.id != expected_id {
            return Err(ScenarioError::Parse {
                line: line_no,
                msg: format!("field 'id': expected {expected_id}, got {}", rec.id),
            });
        }
        let mut lanes = Vec::with_capacity(rec.lanes.len());
        for l in rec.lanes {
            let pts = l.points.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
            lanes.push(LanePolyline::new(l.id, pts).map_err(|e| ScenarioError::Parse {
                line: line_no,
                msg: format!("field 'lanes': {e}"),
            })?);
        }
        let sample = TrackSample {
            obs: rec
                .obs
                .iter()
                .map(|&(t, x, y)| TimedPos { t, pos: Vec2::new(x, y) })
                .collect(),
            future: rec.future.iter().map(|&(x, y)| Vec2::new(x, y)).collect(),
            lanes,
            meta: rec.kind,
        };
        sample.validate().map_err(|e| ScenarioError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        samples.push(sample);
    }
    Ok(Dataset { samples, split })
}
