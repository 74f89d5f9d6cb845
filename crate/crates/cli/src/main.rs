//! Command-line pipeline: generate synthetic datasets, train models with any
//! aggregator, evaluate them side by side, predict single samples, and export
//! attention traces with SVG plots.

use clap::{Args, Parser, Subcommand};
use laneattn_core::harness::{self, ModelEntry};
use laneattn_core::model::{Aggregator, Checkpoint, ModelConfig};
use laneattn_core::scenarios::{self, Dataset, Mix, ScenarioKind};
use laneattn_core::training::{self, TrainConfig};
use serde::Deserialize;
use std::error::Error;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "laneattn",
    about = "Lane-attention trajectory prediction on synthetic driving scenarios",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/val/test dataset files
    Gen(GenArgs),
    /// Train a model and write a checkpoint plus its training log
    Train(TrainArgs),
    /// Evaluate checkpoints (plus the constant-velocity baseline) on a test set
    Eval(EvalArgs),
    /// Predict one sample and print the trajectory as JSON
    Predict(PredictArgs),
    /// Export per-sample attention traces and SVG plots
    Attn(AttnArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Samples per split as train,val,test
    #[arg(long, default_value = "600,200,250")]
    counts: String,
    /// Scenario mix as kind=weight pairs, e.g. straight=0.4,curve=0.3
    #[arg(long)]
    mix: Option<String>,
    /// Observation noise standard deviation in meters
    #[arg(long, default_value_t = 0.05)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ground-truth horizon in steps (10 or 30)
    #[arg(long, default_value_t = 30)]
    future_steps: usize,
    /// Output directory for train.jsonl, val.jsonl, test.jsonl
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Optional JSON config: {"train": {...}, "model": {...}}
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding train.jsonl and val.jsonl
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint.json and train_log.txt
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "attention")]
    aggregator: Aggregator,
    /// Prediction horizon in seconds (1 or 3)
    #[arg(long, default_value_t = 3)]
    horizon: u8,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum training epochs (overrides the config file)
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint files to compare
    #[arg(long, num_args = 1.., required = true)]
    checkpoints: Vec<PathBuf>,
    /// Test dataset file
    #[arg(long)]
    data: PathBuf,
    /// Machine-readable report destination (line-delimited records)
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Line index of the sample inside the dataset file
    #[arg(long)]
    sample_id: usize,
}

#[derive(Args)]
struct AttnArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Export at most this many samples
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    train: Option<TrainConfig>,
    model: Option<ModelConfig>,
}

fn parse_counts(text: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("bad --counts '{text}': {e}"))?;
    if parts.len() != 3 {
        return Err(format!("--counts needs three values, got {}", parts.len()));
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn parse_mix(text: &str) -> Result<Mix, String> {
    let mut weights = Vec::new();
    for pair in text.split(',') {
        let (kind, w) = pair
            .split_once('=')
            .ok_or_else(|| format!("bad --mix entry '{pair}', expected kind=weight"))?;
        let kind: ScenarioKind = kind.trim().parse()?;
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|e| format!("bad weight in '{pair}': {e}"))?;
        weights.push((kind, w));
    }
    Mix::new(weights).map_err(|e| e.to_string())
}

fn cmd_gen(args: GenArgs) -> Result<(), Box<dyn Error>> {
    let counts = parse_counts(&args.counts)?;
    let mix = match &args.mix {
        Some(text) => parse_mix(text)?,
        None => Mix::default(),
    };
    let splits =
        scenarios::generate_dataset(counts, &mix, args.noise_std, args.seed, args.future_steps)?;
    std::fs::create_dir_all(&args.out)?;
    for ds in &splits {
        let path = args.out.join(format!("{}.jsonl", ds.split));
        scenarios::write_dataset(&path, ds)?;
        println!("wrote {} samples to {}", ds.samples.len(), path.display());
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset, Box<dyn Error>> {
    Ok(scenarios::read_dataset(path)?)
}

fn cmd_train(args: TrainArgs) -> Result<(), Box<dyn Error>> {
    if args.horizon != 1 && args.horizon != 3 {
        return Err(format!("--horizon must be 1 or 3, got {}", args.horizon).into());
    }
    let file_cfg: FileConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => FileConfig::default(),
    };
    let t_pred_steps = args.horizon as usize * 10;
    let mut mcfg = file_cfg
        .model
        .unwrap_or_else(|| ModelConfig::standard(args.aggregator, t_pred_steps));
    mcfg.aggregator = args.aggregator;
    mcfg.t_pred_steps = t_pred_steps;
    let mut tcfg = file_cfg.train.unwrap_or_default();
    if let Some(seed) = args.seed {
        tcfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        tcfg.max_epochs = epochs;
    }

    let train = load_dataset(&args.data.join("train.jsonl"))?;
    let val = load_dataset(&args.data.join("val.jsonl"))?;
    let result = training::fit(&train.samples, &val.samples, &mcfg, &tcfg)?;
    std::fs::create_dir_all(&args.out)?;
    let ckpt_path = args.out.join("checkpoint.json");
    result.checkpoint.save(&ckpt_path)?;
    training::write_training_log(&args.out.join("train_log.txt"), &result.log)?;
    println!(
        "trained {} for {} epochs; best val nll {:.4} at epoch {}; checkpoint at {}",
        mcfg.aggregator.label(),
        result.log.len(),
        result.best_val_nll,
        result.best_epoch,
        ckpt_path.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Box<dyn Error>> {
    let test = load_dataset(&args.data)?;
    let mut entries = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for path in &args.checkpoints {
        let ckpt = Checkpoint::load(path)?;
        let base = ckpt.config.aggregator.label().to_string();
        let n = seen.entry(base.clone()).or_insert(0usize);
        *n += 1;
        let label = if *n == 1 { base } else { format!("{base}#{n}") };
        entries.push(ModelEntry {
            label,
            checkpoint: ckpt,
        });
    }
    let report = harness::compare(&entries, &test, true)?;
    report.write(&args.report)?;
    print!("{}", report.to_table());
    println!("report written to {}", args.report.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), Box<dyn Error>> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let data = load_dataset(&args.data)?;
    let sample = data.samples.get(args.sample_id).ok_or_else(|| {
        format!(
            "sample id {} out of range ({} samples)",
            args.sample_id,
            data.samples.len()
        )
    })?;
    let out = laneattn_core::model::rollout(&ckpt.params, &ckpt.config, sample)?;
    let doc = serde_json::json!({
        "sample_id": args.sample_id,
        "kind": sample.meta,
        "trajectory": out.trajectory.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
        "gaussians": out.gaussians,
        "attention": out.attention,
    });
    println!("{doc}");
    Ok(())
}

fn cmd_attn(args: AttnArgs) -> Result<(), Box<dyn Error>> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    if ckpt.config.aggregator != Aggregator::Attention {
        eprintln!(
            "note: checkpoint aggregator is {}; traces will be one-hot",
            ckpt.config.aggregator.label()
        );
    }
    let data = load_dataset(&args.data)?;
    let traces = harness::export_attention(&ckpt, &data, &args.out_dir, args.limit)?;
    println!(
        "exported {} traces to {}",
        traces.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Attn(args) => cmd_attn(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
