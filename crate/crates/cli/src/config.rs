//! Merging the JSON config file with command-line flags (flags win).

use std::path::{Path, PathBuf};

use batchplan::manifest::{seconds_to_samples, DistributionSpec, ManifestFormat, DEFAULT_SAMPLE_RATE};
use batchplan::planner::DEFAULT_NUM_BUCKETS;
use batchplan::runner::{GridCell, ManifestSource, ReportFormat, DEFAULT_SEEDS};
use batchplan::{BucketLimitMode, Error, Result, SizeMode, Strategy};
use serde::Deserialize;
use serde_json::Value;

use crate::BatchArgs;

/// Default synthetic dataset: 10 hours.
pub const DEFAULT_SYNTH_SECONDS: u64 = 10 * 3600;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Config file contents; every key is optional and mirrors a flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub manifest: Option<PathBuf>,
    pub manifest_format: Option<ManifestFormat>,
    pub synth_seed: Option<u64>,
    pub strategy: Option<OneOrMany<Strategy>>,
    pub fixed: Option<OneOrMany<usize>>,
    pub dynamic: Option<OneOrMany<serde_json::Number>>,
    pub buckets: Option<usize>,
    pub bucket_limits: Option<BucketLimitMode>,
    pub seed: Option<OneOrMany<u64>>,
    pub epochs: Option<u64>,
    pub sample_rate: Option<u32>,
    pub format: Option<ReportFormat>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        serde_json::from_value(value).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }
}

/// Fully resolved batching options.
#[derive(Debug)]
pub struct Resolved {
    pub manifest: ManifestSource,
    pub sample_rate: u32,
    pub cells: Vec<GridCell>,
    pub seeds: Vec<u64>,
    pub epochs: u64,
    pub format: ReportFormat,
    pub out: Option<PathBuf>,
}

fn pick<T>(flag: Vec<T>, file: Option<OneOrMany<T>>) -> Vec<T> {
    if !flag.is_empty() {
        flag
    } else {
        file.map(OneOrMany::into_vec).unwrap_or_default()
    }
}

pub fn resolve(args: &BatchArgs, format_flag: Option<ReportFormat>) -> Result<Resolved> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let sample_rate = args.sample_rate.or(file.sample_rate).unwrap_or(DEFAULT_SAMPLE_RATE);
    if sample_rate == 0 {
        return Err(Error::Config("sample rate must be positive".into()));
    }

    let manifest = match args.manifest.clone().or(file.manifest) {
        Some(path) => ManifestSource::Path { path, format: args.manifest_format.or(file.manifest_format) },
        None => ManifestSource::Synth {
            spec: DistributionSpec::speech_mixtures(sample_rate),
            total_duration: DEFAULT_SYNTH_SECONDS * sample_rate as u64,
            seed: args.synth_seed.or(file.synth_seed).unwrap_or(0),
        },
    };

    let strategies = pick(args.strategy.clone(), file.strategy);
    if strategies.is_empty() {
        return Err(Error::Config("no strategy given (use --strategy)".into()));
    }
    let fixed = pick(args.fixed.clone(), file.fixed);
    let dynamic_flags: Vec<String> = args.dynamic.clone();
    let dynamic: Vec<String> = if !dynamic_flags.is_empty() {
        dynamic_flags
    } else {
        file.dynamic.map(OneOrMany::into_vec).unwrap_or_default().iter().map(|n| n.to_string()).collect()
    };
    let mut sizes: Vec<SizeMode> = Vec::new();
    for k in fixed {
        if k == 0 {
            return Err(Error::Config("--fixed must be at least 1".into()));
        }
        sizes.push(SizeMode::Fixed(k));
    }
    for secs in dynamic {
        let samples = seconds_to_samples(&secs, sample_rate).map_err(|m| Error::Config(format!("--dynamic: {m}")))?;
        sizes.push(SizeMode::Dynamic(samples));
    }
    if sizes.is_empty() {
        return Err(Error::Config("no batch size given (use --fixed K or --dynamic SECONDS)".into()));
    }

    let num_buckets = args.buckets.or(file.buckets).unwrap_or(DEFAULT_NUM_BUCKETS);
    let bucket_limit_mode = args.bucket_limits.or(file.bucket_limits).unwrap_or_default();
    let mut cells = Vec::new();
    for &strategy in &strategies {
        for &size_mode in &sizes {
            cells.push(GridCell { strategy, size_mode, num_buckets, bucket_limit_mode });
        }
    }

    let mut seeds = pick(args.seed.clone(), file.seed);
    if seeds.is_empty() {
        seeds = DEFAULT_SEEDS.to_vec();
    }
    let epochs = args.epochs.or(file.epochs).unwrap_or(1);
    if epochs == 0 {
        return Err(Error::Config("--epochs must be at least 1".into()));
    }

    Ok(Resolved {
        manifest,
        sample_rate,
        cells,
        seeds,
        epochs,
        format: format_flag.or(file.format).unwrap_or(ReportFormat::Csv),
        out: args.out.clone().or(file.out),
    })
}
