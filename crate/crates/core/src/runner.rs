//! Multi-seed simulations over a grid of batching configurations, plan dumps,
//! and report writers.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::manifest::{self, DistributionSpec, Manifest, ManifestFormat};
use crate::par;
use crate::planner::{plan_epochs, BatchingConfig, BucketLimitMode, EpochPlan, SizeMode, Strategy};
use crate::stats::{aggregate, epoch_stats, Metric, Report, RunStats};

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifestSource {
    Path { path: PathBuf, format: Option<ManifestFormat> },
    Synth { spec: DistributionSpec, total_duration: u64, seed: u64 },
}

impl ManifestSource {
    pub fn load(&self, sample_rate: u32) -> Result<Manifest> {
        match self {
            ManifestSource::Path { path, format } => manifest::load_manifest_file(path, *format, sample_rate),
            ManifestSource::Synth { spec, total_duration, seed } => {
                manifest::synth_manifest(spec, *total_duration, *seed)?.with_sample_rate(sample_rate)
            }
        }
    }
}

/// One configuration of the grid; seeds and epochs are shared by all cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub strategy: Strategy,
    pub size_mode: SizeMode,
    pub num_buckets: usize,
    pub bucket_limit_mode: BucketLimitMode,
}

impl GridCell {
    pub fn new(strategy: Strategy, size_mode: SizeMode) -> Self {
        Self {
            strategy,
            size_mode,
            num_buckets: crate::planner::DEFAULT_NUM_BUCKETS,
            bucket_limit_mode: BucketLimitMode::Uniform,
        }
    }

    pub fn config(&self, seed: u64, epochs: u64) -> BatchingConfig {
        BatchingConfig {
            strategy: self.strategy,
            size_mode: self.size_mode,
            num_buckets: self.num_buckets,
            bucket_limit_mode: self.bucket_limit_mode,
            seed,
            epochs,
        }
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.strategy {
            Strategy::Bucket => write!(f, "bucket({},{})", self.num_buckets, self.bucket_limit_mode)?,
            s => write!(f, "{s}")?,
        }
        match self.size_mode {
            SizeMode::Fixed(k) => write!(f, "/fixed-{k}"),
            SizeMode::Dynamic(b) => write!(f, "/dynamic-{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub manifest: ManifestSource,
    pub sample_rate: u32,
    pub cells: Vec<GridCell>,
    pub seeds: Vec<u64>,
    pub epochs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: GridCell,
    pub report: Report,
}

/// Completed cells plus the errors of failed ones, both in grid order.
#[derive(Debug)]
pub struct SimulationOutput {
    pub manifest: Manifest,
    pub cells: Vec<CellReport>,
    pub errors: Vec<Error>,
}

pub fn run_simulation(spec: &SimulationSpec) -> Result<SimulationOutput> {
    if spec.cells.is_empty() {
        return Err(Error::config("simulation grid is empty"));
    }
    if spec.seeds.is_empty() {
        return Err(Error::config("no seeds given"));
    }
    let manifest = spec.manifest.load(spec.sample_rate)?;
    let (cells, errors) = run_grid(&manifest, &spec.cells, &spec.seeds, spec.epochs);
    Ok(SimulationOutput { manifest, cells, errors })
}

/// Runs every (cell, seed) pair, in parallel with the `parallel` feature.
/// Each run owns its state; results are merged back in grid order.
pub fn run_grid(manifest: &Manifest, cells: &[GridCell], seeds: &[u64], epochs: u64) -> (Vec<CellReport>, Vec<Error>) {
    let jobs: Vec<(usize, u64)> =
        cells.iter().enumerate().flat_map(|(i, _)| seeds.iter().map(move |&s| (i, s))).collect();
    let mut results = par::map_ordered(&jobs, |&(i, seed)| run_one(manifest, &cells[i].config(seed, epochs)))
        .into_iter();

    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for cell in cells {
        let chunk: Vec<Result<RunStats>> = results.by_ref().take(seeds.len()).collect();
        let runs: Result<Vec<RunStats>> = chunk.into_iter().collect();
        match runs.and_then(|r| aggregate(&r)) {
            Ok(report) => reports.push(CellReport { cell: cell.clone(), report }),
            Err(e) => errors.push(e.context(&cell.to_string())),
        }
    }
    (reports, errors)
}

/// Plans one seeded run, checks coverage, and computes per-epoch stats.
pub fn run_one(manifest: &Manifest, config: &BatchingConfig) -> Result<RunStats> {
    let plans = plan_epochs(manifest, config)?;
    for p in &plans {
        p.verify_coverage(manifest)?;
    }
    Ok(RunStats { seed: config.seed, epochs: epoch_stats(&plans, manifest.total_length())? })
}

#[derive(Serialize)]
struct DumpLine<'a> {
    epoch: u64,
    batch: usize,
    segments: Vec<(&'a str, u64, u64)>,
    padded_length: u64,
}

/// Writes one JSON line per batch:
/// `{"epoch":..,"batch":..,"segments":[[id,offset,length],..],"padded_length":..}`.
pub fn write_plan_dump<W: Write>(mut out: W, plans: &[EpochPlan]) -> Result<()> {
    for plan in plans {
        for (i, batch) in plan.batches.iter().enumerate() {
            let line = DumpLine {
                epoch: plan.epoch_index,
                batch: i,
                segments: batch.segments().iter().map(|s| (&*s.sequence_id, s.offset, s.length)).collect(),
                padded_length: batch.padded_length(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// First 8 bytes (big-endian) of the SHA-256 of the plan dump.
pub fn plan_hash(plans: &[EpochPlan]) -> u64 {
    let mut w = HashWriter(Sha256::new());
    write_plan_dump(&mut w, plans).expect("hashing writer cannot fail");
    let digest = w.0.finalize();
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::config(format!("unknown report format `{other}`"))),
        }
    }
}

fn is_sample_valued(m: Metric) -> bool {
    matches!(
        m,
        Metric::TotalPadding | Metric::PaddedVolume | Metric::PeakFootprint | Metric::FootprintMean | Metric::FootprintStd
    )
}

/// CSV with one row per cell and metric, or a nested JSON document.
pub fn write_report<W: Write>(mut out: W, manifest: &Manifest, cells: &[CellReport], format: ReportFormat) -> Result<()> {
    let sr = manifest.sample_rate() as f64;
    match format {
        ReportFormat::Csv => {
            writeln!(out, "strategy,size_mode,size,num_buckets,bucket_limits,metric,mean,sem,n,mean_seconds")?;
            for c in cells {
                let (mode, size) = match c.cell.size_mode {
                    SizeMode::Fixed(k) => ("fixed", k as u64),
                    SizeMode::Dynamic(b) => ("dynamic", b),
                };
                let (buckets, limits) = match c.cell.strategy {
                    Strategy::Bucket => (c.cell.num_buckets.to_string(), c.cell.bucket_limit_mode.to_string()),
                    _ => (String::new(), String::new()),
                };
                for (metric, s) in &c.report.across_seeds {
                    let secs = if is_sample_valued(*metric) { (s.mean / sr).to_string() } else { String::new() };
                    writeln!(
                        out,
                        "{},{mode},{size},{buckets},{limits},{},{},{},{},{secs}",
                        c.cell.strategy,
                        metric.name(),
                        s.mean,
                        s.sem,
                        s.n
                    )?;
                }
            }
        }
        ReportFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                sample_rate: u32,
                sequences: usize,
                total_length: u64,
                cells: &'a [CellReport],
            }
            let doc = Doc {
                sample_rate: manifest.sample_rate(),
                sequences: manifest.len(),
                total_length: manifest.total_length(),
                cells,
            };
            serde_json::to_writer_pretty(&mut out, &doc)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}
