//! Padding and footprint statistics.
//!
//! The zero-padding ratio (ZPR) of an epoch is the number of padded zeros over
//! the original dataset length. A batch's footprint is `count * padded_length`,
//! a proxy for its peak memory; the sum of footprints is the padded volume,
//! a proxy for compute time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::planner::{Batch, EpochPlan};

/// Zeros padded onto the segments of `batch`.
pub fn padding_of_batch(batch: &Batch) -> u64 {
    batch.lengths().map(|l| batch.padded_length() - l).sum()
}

pub fn batch_footprint(batch: &Batch) -> u64 {
    batch.len() as u64 * batch.padded_length()
}

/// ZPR of one epoch. `original_total` must equal the plan's total segment length.
pub fn zpr(plan: &EpochPlan, original_total: u64) -> Result<f64> {
    check_total(plan, original_total)?;
    let padding: u64 = plan.batches.iter().map(padding_of_batch).sum();
    Ok(padding as f64 / original_total as f64)
}

fn check_total(plan: &EpochPlan, original_total: u64) -> Result<()> {
    let covered = plan.covered_length();
    if covered != original_total || original_total == 0 {
        return Err(Error::invariant(format!(
            "epoch {} covers {covered} samples but the dataset has {original_total}",
            plan.epoch_index
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch_index: u64,
    pub zpr: f64,
    pub total_padding: u64,
    pub original_total: u64,
    pub padded_volume: u64,
    pub batch_count: u64,
    pub peak_footprint: u64,
    pub footprint_mean: f64,
    /// Population standard deviation of batch footprints.
    pub footprint_std: f64,
}

impl EpochStats {
    pub fn compute(plan: &EpochPlan, original_total: u64) -> Result<Self> {
        check_total(plan, original_total)?;
        let footprints: Vec<u64> = plan.batches.iter().map(batch_footprint).collect();
        let total_padding: u64 = plan.batches.iter().map(padding_of_batch).sum();
        let padded_volume: u64 = footprints.iter().sum();
        if padded_volume != original_total + total_padding {
            return Err(Error::invariant("padded volume differs from data plus padding"));
        }
        let n = footprints.len() as f64;
        let footprint_mean = padded_volume as f64 / n;
        let footprint_std =
            (footprints.iter().map(|&f| (f as f64 - footprint_mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Self {
            epoch_index: plan.epoch_index,
            zpr: total_padding as f64 / original_total as f64,
            total_padding,
            original_total,
            padded_volume,
            batch_count: footprints.len() as u64,
            peak_footprint: footprints.iter().copied().max().unwrap_or(0),
            footprint_mean,
            footprint_std,
        })
    }

    /// Coefficient of variation of batch footprints.
    pub fn footprint_cv(&self) -> f64 {
        if self.footprint_mean == 0.0 {
            0.0
        } else {
            self.footprint_std / self.footprint_mean
        }
    }

    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Zpr => self.zpr,
            Metric::TotalPadding => self.total_padding as f64,
            Metric::PaddedVolume => self.padded_volume as f64,
            Metric::BatchCount => self.batch_count as f64,
            Metric::PeakFootprint => self.peak_footprint as f64,
            Metric::FootprintMean => self.footprint_mean,
            Metric::FootprintStd => self.footprint_std,
            Metric::FootprintCv => self.footprint_cv(),
        }
    }
}

/// Stats for every plan, computed in parallel with the `parallel` feature.
pub fn epoch_stats(plans: &[EpochPlan], original_total: u64) -> Result<Vec<EpochStats>> {
    par::map_ordered(plans, |p| EpochStats::compute(p, original_total)).into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Zpr,
    TotalPadding,
    PaddedVolume,
    BatchCount,
    PeakFootprint,
    FootprintMean,
    FootprintStd,
    FootprintCv,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Zpr,
        Metric::TotalPadding,
        Metric::PaddedVolume,
        Metric::BatchCount,
        Metric::PeakFootprint,
        Metric::FootprintMean,
        Metric::FootprintStd,
        Metric::FootprintCv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Zpr => "zpr",
            Metric::TotalPadding => "total_padding",
            Metric::PaddedVolume => "padded_volume",
            Metric::BatchCount => "batch_count",
            Metric::PeakFootprint => "peak_footprint",
            Metric::FootprintMean => "footprint_mean",
            Metric::FootprintStd => "footprint_std",
            Metric::FootprintCv => "footprint_cv",
        }
    }
}

/// Mean and standard error of the mean over `n` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sem: f64,
    pub n: usize,
}

impl Summary {
    /// Uses the sample standard deviation; a single value has zero error.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, sem: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sem = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Self { mean, sem, n }
    }
}

pub type MetricSummaries = BTreeMap<Metric, Summary>;

fn summarize<'a>(rows: impl Iterator<Item = &'a EpochStats> + Clone) -> MetricSummaries {
    Metric::ALL
        .iter()
        .map(|&m| (m, Summary::of(&rows.clone().map(|s| s.metric(m)).collect::<Vec<_>>())))
        .collect()
}

/// All epochs of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
    pub across_epochs: MetricSummaries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunReport>,
    /// Summary over the per-run epoch means.
    pub across_seeds: MetricSummaries,
}

impl Report {
    pub fn mean(&self, metric: Metric) -> f64 {
        self.across_seeds[&metric].mean
    }
}

pub fn aggregate(runs: &[RunStats]) -> Result<Report> {
    if runs.is_empty() || runs.iter().any(|r| r.epochs.is_empty()) {
        return Err(Error::invariant("aggregation needs at least one run with at least one epoch"));
    }
    let run_reports: Vec<RunReport> = runs
        .iter()
        .map(|r| RunReport { seed: r.seed, epochs: r.epochs.clone(), across_epochs: summarize(r.epochs.iter()) })
        .collect();
    let across_seeds = Metric::ALL
        .iter()
        .map(|&m| {
            let means: Vec<f64> = run_reports.iter().map(|r| r.across_epochs[&m].mean).collect();
            (m, Summary::of(&means))
        })
        .collect();
    Ok(Report { runs: run_reports, across_seeds })
}
