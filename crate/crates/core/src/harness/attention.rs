//! Attention-trace export: per-sample weight-over-time records plus a
//! dependency-free SVG with the top-down scene and the stacked weight curves.

use super::HarnessError;
use crate::graph::TrackSample;
use crate::model::{rollout, Checkpoint};
use crate::scenarios::Dataset;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Learned lane weights for one sample over warm-up and prediction, together
/// with the trajectories needed to plot them in context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub sample_id: u64,
    pub kind: String,
    /// Aggregator that produced the weights; one-hot traces from pooling or
    /// single-lane checkpoints are legitimate but worth flagging.
    pub aggregator: String,
    pub observed: Vec<(f64, f64)>,
    pub predicted: Vec<(f64, f64)>,
    pub ground_truth: Vec<(f64, f64)>,
    /// Per warm-up step: (lane id, weight), id-sorted.
    pub warmup_weights: Vec<Vec<(u64, f64)>>,
    /// Per prediction step: (lane id, weight), id-sorted.
    pub weights: Vec<Vec<(u64, f64)>>,
}

impl AttentionTrace {
    /// Weight series of one lane across warm-up then prediction.
    pub fn lane_series(&self, lane_id: u64) -> Vec<f64> {
        self.warmup_weights
            .iter()
            .chain(&self.weights)
            .map(|row| {
                row.iter()
                    .find(|(id, _)| *id == lane_id)
                    .map(|(_, w)| *w)
                    .unwrap_or(0.0)
            })
            .collect()
    }

    pub fn lane_ids(&self) -> Vec<u64> {
        self.weights
            .first()
            .or(self.warmup_weights.first())
            .map(|row| row.iter().map(|(id, _)| *id).collect())
            .unwrap_or_default()
    }
}

/// Runs the checkpoint over every sample (up to `limit`) and writes
/// `attn_<id>.json` and `attn_<id>.svg` into `out_dir`.
pub fn export_attention(
    checkpoint: &Checkpoint,
    data: &Dataset,
    out_dir: &Path,
    limit: Option<usize>,
) -> Result<Vec<AttentionTrace>, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let n = limit.unwrap_or(data.samples.len()).min(data.samples.len());
    let mut traces = Vec::with_capacity(n);
    for (i, sample) in data.samples.iter().take(n).enumerate() {
        let out = rollout(&checkpoint.params, &checkpoint.config, sample)?;
        let trace = AttentionTrace {
            sample_id: i as u64,
            kind: sample.meta.clone(),
            aggregator: checkpoint.config.aggregator.label().to_string(),
            observed: sample.obs.iter().map(|o| (o.pos.x, o.pos.y)).collect(),
            predicted: out.trajectory.iter().map(|p| (p.x, p.y)).collect(),
            ground_truth: sample.future.iter().map(|p| (p.x, p.y)).collect(),
            warmup_weights: out.warmup_attention,
            weights: out.attention,
        };
        let mut json = serde_json::to_vec(&trace)?;
        json.push(b'\n');
        std::fs::write(out_dir.join(format!("attn_{i}.json")), json)?;
        std::fs::write(
            out_dir.join(format!("attn_{i}.svg")),
            render_attention_svg(sample, &trace),
        )?;
        traces.push(trace);
    }
    Ok(traces)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn poly_points(pts: impl Iterator<Item = (f64, f64)>) -> String {
    let mut s = String::new();
    for (x, y) in pts {
        let _ = write!(s, "{x:.2},{y:.2} ");
    }
    s.trim_end().to_string()
}

/// Two stacked panels: (a) lanes with observed, ground-truth, and predicted
/// trajectories; (b) per-lane attention weight as a function of time, with a
/// marker at the prediction start and a legend naming every lane id.
pub fn render_attention_svg(sample: &TrackSample, trace: &AttentionTrace) -> String {
    let width = 860.0;
    let map_h = 360.0;
    let plot_h = 280.0;
    let height = map_h + plot_h + 120.0;

    // Scene bounds across lanes and trajectories.
    let mut min = (f64::INFINITY, f64::INFINITY);
    let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut grow = |x: f64, y: f64| {
        min.0 = min.0.min(x);
        min.1 = min.1.min(y);
        max.0 = max.0.max(x);
        max.1 = max.1.max(y);
    };
    for lane in &sample.lanes {
        for p in lane.points() {
            grow(p.x, p.y);
        }
    }
    for &(x, y) in trace
        .observed
        .iter()
        .chain(&trace.predicted)
        .chain(&trace.ground_truth)
    {
        grow(x, y);
    }
    let pad = 0.05 * ((max.0 - min.0).max(max.1 - min.1)).max(1.0);
    min = (min.0 - pad, min.1 - pad);
    max = (max.0 + pad, max.1 + pad);
    let scale = ((width - 40.0) / (max.0 - min.0)).min((map_h - 40.0) / (max.1 - min.1));
    let to_map = move |x: f64, y: f64| -> (f64, f64) {
        (20.0 + (x - min.0) * scale, 20.0 + (max.1 - y) * scale)
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"##
    );
    let _ = writeln!(svg, r##"<rect width="{width}" height="{height}" fill="white"/>"##);
    let _ = writeln!(
        svg,
        r##"<text x="20" y="14" font-size="13" fill="#333">sample {} ({}) aggregator={}</text>"##,
        trace.sample_id, trace.kind, trace.aggregator
    );

    // Panel (a): top-down scene.
    let _ = writeln!(svg, r##"<g stroke-linejoin="round" fill="none">"##);
    for lane in &sample.lanes {
        let pts = poly_points(lane.points().iter().map(|p| to_map(p.x, p.y)));
        let _ = writeln!(
            svg,
            r##"<polyline points="{pts}" stroke="#bbbbbb" stroke-width="3"/>"##
        );
    }
    let obs = poly_points(trace.observed.iter().map(|&(x, y)| to_map(x, y)));
    let _ = writeln!(svg, r##"<polyline points="{obs}" stroke="#222222" stroke-width="2"/>"##);
    let gt = poly_points(trace.ground_truth.iter().map(|&(x, y)| to_map(x, y)));
    let _ = writeln!(
        svg,
        r##"<polyline points="{gt}" stroke="#2a9d2a" stroke-width="2" stroke-dasharray="6 3"/>"##
    );
    let pred = poly_points(trace.predicted.iter().map(|&(x, y)| to_map(x, y)));
    let _ = writeln!(svg, r##"<polyline points="{pred}" stroke="#d43a3a" stroke-width="2"/>"##);
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r##"<text x="20" y="{}" font-size="12" fill="#333">observed (black), ground truth (green dashed), predicted (red)</text>"##,
        map_h + 14.0
    );

    // Panel (b): weights over time.
    let total_steps = trace.warmup_weights.len() + trace.weights.len();
    let plot_top = map_h + 40.0;
    let plot_left = 50.0;
    let plot_w = width - plot_left - 160.0;
    let x_of = move |step: usize| plot_left + plot_w * step as f64 / total_steps.max(1) as f64;
    let y_of = move |w: f64| plot_top + plot_h - w * plot_h;
    let _ = writeln!(
        svg,
        r##"<rect x="{plot_left}" y="{plot_top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#888888"/>"##
    );
    let x0 = x_of(trace.warmup_weights.len());
    let _ = writeln!(
        svg,
        r##"<line x1="{x0:.2}" y1="{plot_top}" x2="{x0:.2}" y2="{}" stroke="#888888" stroke-dasharray="4 3"/>"##,
        plot_top + plot_h
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-size="11" fill="#555">prediction start</text>"##,
        x0 + 4.0,
        plot_top + 14.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-size="11" fill="#555">1.0</text>"##,
        plot_left - 26.0,
        plot_top + 6.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-size="11" fill="#555">0.0</text>"##,
        plot_left - 26.0,
        plot_top + plot_h + 4.0
    );

    let lane_ids = trace.lane_ids();
    for (i, &lane_id) in lane_ids.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let series = trace.lane_series(lane_id);
        let pts = poly_points(series.iter().enumerate().map(|(s, &w)| (x_of(s), y_of(w))));
        let _ = writeln!(
            svg,
            r##"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>"##
        );
        // Legend entry.
        let ly = plot_top + 18.0 * i as f64;
        let lx = plot_left + plot_w + 16.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"##,
            lx + 18.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-size="12" fill="#333">lane {lane_id}</text>"##,
            lx + 24.0,
            ly + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{plot_left}" y="{:.2}" font-size="12" fill="#333">attention weight vs. time step</text>"##,
        plot_top + plot_h + 24.0
    );
    svg.push_str("</svg>\n");
    svg
}
