// Pooling vs single-lane ordering probe across seeds.
use laneattn_core::harness::{compare, ModelEntry};
use laneattn_core::model::{Aggregator, ModelConfig};
use laneattn_core::scenarios::{generate_dataset, Mix};
use laneattn_core::training::{fit, TrainConfig};
use std::time::Instant;

fn main() {
    let seed: u64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let epochs: usize = std::env::args().nth(2).unwrap().parse().unwrap();
    let [train, val, test] = generate_dataset([1260, 420, 525], &Mix::default(), 0.05, 20240805, 30).unwrap();
    let mut entries = Vec::new();
    for agg in [Aggregator::Pooling, Aggregator::SingleLane] {
        let t0 = Instant::now();
        let mcfg = ModelConfig::standard(agg, 30);
        let tcfg = TrainConfig { max_epochs: epochs, seed, ..TrainConfig::default() };
        let r = fit(&train.samples, &val.samples, &mcfg, &tcfg).unwrap();
        println!("{} seed {seed}: best val {:.3} at ep {} ({:.0?})", agg.label(), r.best_val_nll, r.best_epoch, t0.elapsed());
        entries.push(ModelEntry { label: agg.label().to_string(), checkpoint: r.checkpoint });
    }
    let report = compare(&entries, &test, false).unwrap();
    let p = report.row("lane-pooling", 30).unwrap().ade;
    let s = report.row("single-lane", 30).unwrap().ade;
    println!("seed {seed} E{epochs}: pooling {p:.4} vs single {s:.4} -> {}", if p <= s { "OK" } else { "FLIP" });
}
