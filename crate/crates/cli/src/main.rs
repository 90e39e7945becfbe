//! `batchplan`: synthesize manifests, dump batch plans, report padding
//! statistics, and check masked losses.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 internal invariant violation.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use batchplan::manifest::{seconds_to_samples, synth_manifest, DistributionSpec, ManifestFormat};
use batchplan::masked_loss::{self, LossKind, PaddedBatch, Reduction, DEFAULT_EPSILON};
use batchplan::runner::{run_simulation, write_report, ReportFormat, SimulationSpec};
use batchplan::{plan_epochs, plan_hash, write_plan_dump, BucketLimitMode, Error, Result, Strategy};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "batchplan", version, about = "Batching strategy simulator for variable-length sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic sequence-length manifest.
    Synth(SynthArgs),
    /// Plan epochs for one configuration and dump them as JSONL.
    Plan(PlanArgs),
    /// Run a strategy x batch-size grid over several seeds and report statistics.
    Stats(StatsArgs),
    /// Evaluate masked SNR / SI-SNR losses on a JSON batch fixture.
    LossCheck(LossCheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Total duration to draw, in seconds.
    #[arg(long, default_value = "36000")]
    duration: String,
    /// Mean of log(length in samples); defaults to a 16 s mean.
    #[arg(long, allow_hyphen_values = true)]
    location: Option<f64>,
    /// Standard deviation of log(length).
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    min_seconds: Option<String>,
    #[arg(long)]
    max_seconds: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16_000)]
    sample_rate: u32,
    /// Output format; inferred from --out when omitted, else csv.
    #[arg(long)]
    manifest_format: Option<ManifestFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Options shared by `plan` and `stats`.
#[derive(Debug, Args)]
pub struct BatchArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Manifest (CSV or JSONL). Without it a 10 h synthetic manifest is used.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub manifest_format: Option<ManifestFormat>,
    /// Seed of the default synthetic manifest.
    #[arg(long)]
    pub synth_seed: Option<u64>,
    #[arg(long, num_args = 1..)]
    pub strategy: Vec<Strategy>,
    /// Fixed batch size(s), in sequences.
    #[arg(long, num_args = 1..)]
    pub fixed: Vec<usize>,
    /// Dynamic batch budget(s), in seconds of padded audio.
    #[arg(long, num_args = 1..)]
    pub dynamic: Vec<String>,
    #[arg(long)]
    pub buckets: Option<usize>,
    #[arg(long)]
    pub bucket_limits: Option<BucketLimitMode>,
    #[arg(long, num_args = 1..)]
    pub seed: Vec<u64>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub sample_rate: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    batch: BatchArgs,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    batch: BatchArgs,
    #[arg(long)]
    format: Option<ReportFormat>,
}

#[derive(Debug, Args)]
struct LossCheckArgs {
    /// JSON object with `targets`, `estimates` (N x T_max) and `valid_lengths`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, value_parser = parse_reduction, default_value = "mean")]
    reduction: Reduction,
}

fn parse_reduction(s: &str) -> std::result::Result<Reduction, String> {
    match s {
        "mean" => Ok(Reduction::Mean),
        "pooled" => Ok(Reduction::Pooled),
        other => Err(format!("unknown reduction `{other}` (mean|pooled)")),
    }
}

fn open_out(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn synth(args: SynthArgs) -> Result<()> {
    let sr = args.sample_rate;
    let secs = |s: &str| seconds_to_samples(s, sr).map_err(Error::Config);
    let mut spec = DistributionSpec::speech_mixtures(sr);
    if let Some(v) = args.location {
        spec.location = v;
    }
    if let Some(v) = args.scale {
        spec.scale = v;
    }
    if let Some(v) = &args.min_seconds {
        spec.min_length = secs(v)?;
    }
    if let Some(v) = &args.max_seconds {
        spec.max_length = secs(v)?;
    }
    let manifest = synth_manifest(&spec, secs(&args.duration)?, args.seed)?.with_sample_rate(sr)?;
    let format = args
        .manifest_format
        .or_else(|| args.out.as_deref().and_then(ManifestFormat::from_path))
        .unwrap_or(ManifestFormat::Csv);
    manifest.write(open_out(args.out.as_ref())?, format)?;
    log::info!("wrote {} sequences, {} samples", manifest.len(), manifest.total_length());
    Ok(())
}

fn plan(args: PlanArgs) -> Result<()> {
    let resolved = config::resolve(&args.batch, None)?;
    if resolved.cells.len() != 1 {
        return Err(Error::Config("plan takes exactly one strategy and one batch size".into()));
    }
    if resolved.seeds.len() != 1 && !args.batch.seed.is_empty() {
        return Err(Error::Config("plan takes a single --seed".into()));
    }
    let manifest = resolved.manifest.load(resolved.sample_rate)?;
    let config = resolved.cells[0].config(resolved.seeds[0], resolved.epochs);
    let plans = plan_epochs(&manifest, &config)?;
    for p in &plans {
        p.verify_coverage(&manifest)?;
    }
    write_plan_dump(open_out(resolved.out.as_ref())?, &plans)?;
    let hash = format!("plan_hash {:016x}", plan_hash(&plans));
    if resolved.out.is_some() {
        println!("{hash}");
    } else {
        eprintln!("{hash}");
    }
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    let resolved = config::resolve(&args.batch, args.format)?;
    let spec = SimulationSpec {
        manifest: resolved.manifest,
        sample_rate: resolved.sample_rate,
        cells: resolved.cells,
        seeds: resolved.seeds,
        epochs: resolved.epochs,
    };
    let output = run_simulation(&spec)?;
    // Completed cells are written even when others failed.
    write_report(open_out(resolved.out.as_ref())?, &output.manifest, &output.cells, resolved.format)?;
    for e in &output.errors {
        eprintln!("error: {e}");
    }
    match output.errors.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Fixture {
    targets: Vec<Vec<f64>>,
    estimates: Vec<Vec<f64>>,
    valid_lengths: Vec<usize>,
}

fn loss_check(args: LossCheckArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input)?;
    let fx: Fixture = serde_json::from_str(&text)?;
    let batch = PaddedBatch::new(fx.targets, fx.estimates, fx.valid_lengths)?;
    let eps = args.epsilon;
    let snr = masked_loss::masked_loss(&batch, LossKind::Snr, eps, args.reduction);
    let sisnr = masked_loss::masked_loss(&batch, LossKind::SiSnr, eps, args.reduction);
    for row in masked_loss::degenerate_rows(&batch) {
        eprintln!("warning: row {row} has an all-zero valid target");
    }

    // Overwrite every padded entry of both matrices and recompute.
    let mut perturbed = batch.clone();
    let mut masked = 0usize;
    for row in 0..batch.rows() {
        for col in batch.valid_lengths()[row]..batch.t_max() {
            perturbed.estimates_mut()[row][col] += 1e3 * (1 + row + col) as f64;
            perturbed.targets_mut()[row][col] -= 1e3;
            masked += 1;
        }
    }
    let snr_p = masked_loss::masked_loss(&perturbed, LossKind::Snr, eps, args.reduction);
    let sisnr_p = masked_loss::masked_loss(&perturbed, LossKind::SiSnr, eps, args.reduction);
    let invariant = snr.to_bits() == snr_p.to_bits() && sisnr.to_bits() == sisnr_p.to_bits();

    println!("rows {}", batch.rows());
    println!("t_max {}", batch.t_max());
    println!("snr_loss {snr}");
    println!("sisnr_loss {sisnr}");
    println!(
        "mask_invariance {} ({masked} padded entries perturbed)",
        if invariant { "pass" } else { "fail" }
    );
    if invariant {
        Ok(())
    } else {
        Err(Error::Invariant("padded entries changed the loss".into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Plan(a) => plan(a),
        Command::Stats(a) => stats(a),
        Command::LossCheck(a) => loss_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
