//! Evaluation: displacement-error metrics, the constant-velocity baseline,
//! side-by-side model comparison over a test set with per-kind breakdowns,
//! and attention-trace export with SVG plots.

mod attention;

pub use attention::{export_attention, render_attention_svg, AttentionTrace};

use crate::geometry::Vec2;
use crate::graph::TrackSample;
use crate::model::{rollout, Checkpoint, ModelError};
use crate::scenarios::Dataset;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("trajectories differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("need at least 2 observations for a velocity estimate, got {0}")]
    TooFewObservations(usize),
    #[error("models disagree on the prediction horizon: {0}")]
    HorizonMismatch(String),
    #[error("report io: {0}")]
    Io(#[from] std::io::Error),
    #[error("report encoding: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Mean Euclidean distance over all predicted steps.
pub fn ade(pred: &[Vec2], truth: &[Vec2]) -> Result<f64, HarnessError> {
    if pred.len() != truth.len() {
        return Err(HarnessError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(HarnessError::EmptyTrajectory);
    }
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (*p - *t).norm()).sum();
    Ok(sum / pred.len() as f64)
}

/// Euclidean distance at the final predicted step only.
pub fn fde(pred: &[Vec2], truth: &[Vec2]) -> Result<f64, HarnessError> {
    if pred.len() != truth.len() {
        return Err(HarnessError::LengthMismatch(pred.len(), truth.len()));
    }
    match (pred.last(), truth.last()) {
        (Some(p), Some(t)) => Ok((*p - *t).norm()),
        _ => Err(HarnessError::EmptyTrajectory),
    }
}

/// Repeats the last observed displacement for every future step.
pub fn constant_velocity_baseline(
    sample: &TrackSample,
    steps: usize,
) -> Result<Vec<Vec2>, HarnessError> {
    let n = sample.obs.len();
    if n < 2 {
        return Err(HarnessError::TooFewObservations(n));
    }
    let delta = sample.obs[n - 1].pos - sample.obs[n - 2].pos;
    let mut pos = sample.obs[n - 1].pos;
    Ok((0..steps)
        .map(|_| {
            pos = pos + delta;
            pos
        })
        .collect())
}

/// A model under comparison.
pub struct ModelEntry {
    pub label: String,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub ade: f64,
    pub fde: f64,
    pub n: usize,
}

/// One (model, horizon) row of the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    /// Horizon in 0.1 s steps (10 = 1 s, 30 = 3 s).
    pub horizon_steps: usize,
    pub ade: f64,
    pub fde: f64,
    pub n: usize,
    pub by_kind: BTreeMap<String, KindStats>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

/// Errors were averaged per sample first, then across samples; this header
/// travels with every report file.
pub const REPORT_HEADER: &str =
    "# ade/fde in meters, averaged per-sample then across samples; horizon_steps are 0.1 s each";

impl EvalReport {
    pub fn row(&self, model: &str, horizon_steps: usize) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.horizon_steps == horizon_steps)
    }

    /// Line-delimited machine-readable form.
    pub fn to_jsonl(&self) -> Result<String, HarnessError> {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<EvalReport, HarnessError> {
        let mut rows = Vec::new();
        for line in text.lines() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            rows.push(serde_json::from_str(line)?);
        }
        Ok(EvalReport { rows })
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl()?.as_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<EvalReport, HarnessError> {
        EvalReport::from_jsonl(&std::fs::read_to_string(path)?)
    }

    /// Aligned text table, horizons x metrics against models.
    pub fn to_table(&self) -> String {
        let mut models: Vec<String> = Vec::new();
        for r in &self.rows {
            if !models.contains(&r.model) {
                models.push(r.model.clone());
            }
        }
        let mut horizons: Vec<usize> = self.rows.iter().map(|r| r.horizon_steps).collect();
        horizons.sort_unstable();
        horizons.dedup();

        let width = models.iter().map(|m| m.len()).max().unwrap_or(8).max(8) + 2;
        let mut out = String::new();
        out.push_str(&format!("{:<10}{:<8}", "horizon", "metric"));
        for m in &models {
            out.push_str(&format!("{m:>width$}"));
        }
        out.push('\n');
        for &h in &horizons {
            for metric in ["ADE", "FDE"] {
                out.push_str(&format!("{:<10}{:<8}", format!("{:.1} s", h as f64 * 0.1), metric));
                for m in &models {
                    match self.row(m, h) {
                        Some(r) => {
                            let v = if metric == "ADE" { r.ade } else { r.fde };
                            out.push_str(&format!("{v:>width$.4}"));
                        }
                        None => out.push_str(&format!("{:>width$}", "-")),
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

fn accumulate(
    rows: &mut Vec<EvalRow>,
    label: &str,
    horizon: usize,
    per_sample: &[(String, f64, f64)],
) {
    let n = per_sample.len();
    let ade_mean = per_sample.iter().map(|(_, a, _)| a).sum::<f64>() / n as f64;
    let fde_mean = per_sample.iter().map(|(_, _, f)| f).sum::<f64>() / n as f64;
    let mut by_kind: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for (kind, a, f) in per_sample {
        let e = by_kind.entry(kind.clone()).or_insert((0.0, 0.0, 0));
        e.0 += a;
        e.1 += f;
        e.2 += 1;
    }
    rows.push(EvalRow {
        model: label.to_string(),
        horizon_steps: horizon,
        ade: ade_mean,
        fde: fde_mean,
        n,
        by_kind: by_kind
            .into_iter()
            .map(|(k, (a, f, c))| {
                (
                    k,
                    KindStats {
                        ade: a / c as f64,
                        fde: f / c as f64,
                        n: c,
                    },
                )
            })
            .collect(),
    });
}

/// Evaluates every entry (plus the constant-velocity baseline when asked) on
/// the test set at 1 s and 3 s horizons, as far as the shared prediction
/// horizon and the ground truth allow.
pub fn compare(
    entries: &[ModelEntry],
    test: &Dataset,
    include_cv: bool,
) -> Result<EvalReport, HarnessError> {
    let t_preds: Vec<usize> = entries
        .iter()
        .map(|e| e.checkpoint.config.t_pred_steps)
        .collect();
    if let Some(&first) = t_preds.first() {
        if t_preds.iter().any(|&t| t != first) {
            return Err(HarnessError::HorizonMismatch(format!("{t_preds:?}")));
        }
    }
    let future_len = test
        .samples
        .iter()
        .map(|s| s.future.len())
        .min()
        .unwrap_or(0);
    let model_t_pred = t_preds.first().copied().unwrap_or(future_len);
    let horizons: Vec<usize> = [10usize, 30]
        .into_iter()
        .filter(|&h| h <= future_len && h <= model_t_pred)
        .collect();

    let mut report = EvalReport::default();
    if include_cv {
        let per_sample: Vec<Vec<(String, f64, f64)>> = horizons
            .iter()
            .map(|&h| {
                test.samples
                    .par_iter()
                    .map(|s| {
                        let pred = constant_velocity_baseline(s, h)?;
                        Ok((
                            s.meta.clone(),
                            ade(&pred, &s.future[..h])?,
                            fde(&pred, &s.future[..h])?,
                        ))
                    })
                    .collect::<Result<Vec<_>, HarnessError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (&h, stats) in horizons.iter().zip(&per_sample) {
            accumulate(&mut report.rows, "constant-velocity", h, stats);
        }
    }

    for entry in entries {
        // One rollout per sample; both horizons read prefixes of it.
        let outs: Vec<(String, Vec<Vec2>)> = test
            .samples
            .par_iter()
            .map(|s| {
                let out = rollout(&entry.checkpoint.params, &entry.checkpoint.config, s)?;
                Ok((s.meta.clone(), out.trajectory))
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        for &h in &horizons {
            let stats: Vec<(String, f64, f64)> = outs
                .iter()
                .zip(&test.samples)
                .map(|((kind, traj), s)| {
                    Ok((
                        kind.clone(),
                        ade(&traj[..h], &s.future[..h])?,
                        fde(&traj[..h], &s.future[..h])?,
                    ))
                })
                .collect::<Result<Vec<_>, HarnessError>>()?;
            accumulate(&mut report.rows, &entry.label, h, &stats);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{TimedPos, DT};
    use crate::model::{Aggregator, ModelConfig, ModelParams};
    use crate::scenarios::{generate, ScenarioKind, ScenarioSpec};

    #[test]
    fn ade_fde_basics() {
        let truth: Vec<Vec2> = (0..10).map(|i| Vec2::new(i as f64, 0.0)).collect();
        assert_eq!(ade(&truth, &truth).unwrap(), 0.0);
        assert_eq!(fde(&truth, &truth).unwrap(), 0.0);

        let shifted: Vec<Vec2> = truth.iter().map(|p| *p + Vec2::new(3.0, 4.0)).collect();
        assert!((ade(&shifted, &truth).unwrap() - 5.0).abs() < 1e-12);
        assert!((fde(&shifted, &truth).unwrap() - 5.0).abs() < 1e-12);

        // Only the last point off by (0, 2).
        let mut last_off = truth.clone();
        last_off[9] = last_off[9] + Vec2::new(0.0, 2.0);
        assert!((fde(&last_off, &truth).unwrap() - 2.0).abs() < 1e-12);
        assert!((ade(&last_off, &truth).unwrap() - 0.2).abs() < 1e-12);

        assert!(matches!(
            ade(&truth[..3], &truth),
            Err(HarnessError::LengthMismatch(3, 10))
        ));
        assert!(matches!(ade(&[], &[]), Err(HarnessError::EmptyTrajectory)));
    }

    #[test]
    fn ade_fde_translation_invariant() {
        let truth: Vec<Vec2> = (0..7).map(|i| Vec2::new(i as f64, (i * i) as f64 * 0.1)).collect();
        let pred: Vec<Vec2> = truth.iter().map(|p| *p + Vec2::new(0.3, -0.2)).collect();
        let d = Vec2::new(88.0, -41.5);
        let truth2: Vec<Vec2> = truth.iter().map(|p| *p + d).collect();
        let pred2: Vec<Vec2> = pred.iter().map(|p| *p + d).collect();
        assert!((ade(&pred, &truth).unwrap() - ade(&pred2, &truth2).unwrap()).abs() < 1e-12);
        assert!((fde(&pred, &truth).unwrap() - fde(&pred2, &truth2).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn cv_baseline_behaviors() {
        // Stationary vehicle: prediction repeats the last point.
        let lane = crate::geometry::LanePolyline::new(
            0,
            vec![Vec2::new(-10.0, 0.0), Vec2::new(50.0, 0.0)],
        )
        .unwrap();
        let obs: Vec<TimedPos> = (0..4)
            .map(|i| TimedPos { t: i as f64 * DT, pos: Vec2::new(2.0, 1.0) })
            .collect();
        let sample = TrackSample {
            obs,
            future: vec![Vec2::new(2.0, 1.0); 10],
            lanes: vec![lane],
            meta: "straight".into(),
        };
        let pred = constant_velocity_baseline(&sample, 10).unwrap();
        assert!(pred.iter().all(|p| (*p - Vec2::new(2.0, 1.0)).norm() < 1e-12));
        assert!((ade(&pred, &sample.future).unwrap()).abs() < 1e-12);

        let mut one_obs = sample.clone();
        one_obs.obs.truncate(1);
        assert!(matches!(
            constant_velocity_baseline(&one_obs, 10),
            Err(HarnessError::TooFewObservations(1))
        ));
    }

    #[test]
    fn cv_exact_on_straight_and_curve_error_grows_with_horizon() {
        let s = generate(&ScenarioSpec::new(ScenarioKind::Straight, 12.0, 0.0, 5)).unwrap();
        let pred = constant_velocity_baseline(&s, 30).unwrap();
        assert!(ade(&pred, &s.future).unwrap() < 1e-9, "exact kinematics");

        let c = generate(&ScenarioSpec::new(ScenarioKind::Curve, 12.0, 0.0, 5)).unwrap();
        let pred = constant_velocity_baseline(&c, 30).unwrap();
        let fde_1s = fde(&pred[..10], &c.future[..10]).unwrap();
        let fde_3s = fde(&pred, &c.future).unwrap();
        assert!(
            fde_3s > fde_1s,
            "chord drifts off the arc: {fde_3s} vs {fde_1s}"
        );
    }

    fn tiny_entry(label: &str, agg: Aggregator, seed: u64) -> ModelEntry {
        let mut cfg = ModelConfig::tiny(agg);
        cfg.t_pred_steps = 30;
        ModelEntry {
            label: label.to_string(),
            checkpoint: Checkpoint::new(cfg, ModelParams::init(&cfg, seed)),
        }
    }

    fn small_test_set() -> Dataset {
        let samples: Vec<TrackSample> = (0..6)
            .map(|i| {
                let kind = if i % 2 == 0 { ScenarioKind::Straight } else { ScenarioKind::Curve };
                generate(&ScenarioSpec::new(kind, 8.0, 0.02, 100 + i as u64)).unwrap()
            })
            .collect();
        Dataset { samples, split: "test".into() }
    }

    #[test]
    fn compare_report_shape_and_determinism() {
        let test = small_test_set();
        let entries = vec![
            tiny_entry("lane-attention", Aggregator::Attention, 1),
            tiny_entry("lane-attention-again", Aggregator::Attention, 1),
        ];
        let report = compare(&entries, &test, true).unwrap();
        // models x horizons rows: (cv + 2 entries) x 2 horizons.
        assert_eq!(report.rows.len(), 6);
        // The same checkpoint listed twice gives identical rows.
        let a = report.row("lane-attention", 30).unwrap();
        let b = report.row("lane-attention-again", 30).unwrap();
        assert_eq!(a.ade, b.ade);
        assert_eq!(a.fde, b.fde);
        // Determinism: byte-identical serialized reports.
        let again = compare(&entries, &test, true).unwrap();
        assert_eq!(report.to_jsonl().unwrap(), again.to_jsonl().unwrap());
        // Round-trip.
        let back = EvalReport::from_jsonl(&report.to_jsonl().unwrap()).unwrap();
        assert_eq!(report, back);
        // Table mentions every model and both horizons.
        let table = report.to_table();
        assert!(table.contains("lane-attention") && table.contains("constant-velocity"));
        assert!(table.contains("1.0 s") && table.contains("3.0 s"));
    }

    #[test]
    fn compare_rejects_horizon_mismatch() {
        let test = small_test_set();
        let mut short = tiny_entry("short", Aggregator::Pooling, 2);
        short.checkpoint.config.t_pred_steps = 10;
        let entries = vec![short, tiny_entry("long", Aggregator::Pooling, 2)];
        assert!(matches!(
            compare(&entries, &test, false),
            Err(HarnessError::HorizonMismatch(_))
        ));
    }

    #[test]
    fn vehicle_branch_is_aggregator_independent() {
        let test = small_test_set();
        let sample = &test.samples[0];
        // Same seed: the vehicle-branch tensors are drawn first in canonical
        // order, so both models share them exactly.
        let mut cfg_a = ModelConfig::tiny(Aggregator::Attention);
        cfg_a.t_pred_steps = 30;
        let cfg_n = ModelConfig { aggregator: Aggregator::None, ..cfg_a };
        let pa = ModelParams::init(&cfg_a, 33);
        let pn = ModelParams::init(&cfg_n, 33);
        assert_eq!(pa.vv_embed, pn.vv_embed);
        assert_eq!(pa.vv_lstm, pn.vv_lstm);
        let oa = rollout(&pa, &cfg_a, sample).unwrap();
        let on = rollout(&pn, &cfg_n, sample).unwrap();
        assert_eq!(oa.warmup_h_vv, on.warmup_h_vv);
    }
}
