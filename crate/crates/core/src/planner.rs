//! Epoch planning for the random, sorted, and bucket strategies.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::packer;
use crate::par;
use crate::rng::{self, Purpose};

/// A contiguous slice `[offset, offset + length)` of one source sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Segment {
    pub sequence_id: Arc<str>,
    pub offset: u64,
    pub length: u64,
}

impl Segment {
    pub fn new(sequence_id: impl Into<Arc<str>>, offset: u64, length: u64) -> Self {
        Self { sequence_id: sequence_id.into(), offset, length }
    }

    /// Ordering used by sorted batching: length, then id, then offset.
    fn sort_key(&self) -> (u64, &str, u64) {
        (self.length, &self.sequence_id, self.offset)
    }
}

/// Segments stacked into one padded tensor of `count x padded_length` samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    segments: Vec<Segment>,
    padded_length: u64,
}

impl Batch {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invariant("a batch must hold at least one segment"));
        }
        Ok(Self::from_nonempty(segments))
    }

    pub(crate) fn from_nonempty(segments: Vec<Segment>) -> Self {
        debug_assert!(!segments.is_empty());
        let padded_length = segments.iter().map(|s| s.length).max().unwrap_or(0);
        Self { segments, padded_length }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn padded_length(&self) -> u64 {
        self.padded_length
    }

    /// Lengths in batch order.
    pub fn lengths(&self) -> impl Iterator<Item = u64> + '_ {
        self.segments.iter().map(|s| s.length)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochPlan {
    pub epoch_index: u64,
    pub batches: Vec<Batch>,
}

impl EpochPlan {
    pub fn segment_count(&self) -> usize {
        self.batches.iter().map(Batch::len).sum()
    }

    pub fn covered_length(&self) -> u64 {
        self.batches.iter().flat_map(Batch::lengths).sum()
    }

    /// Checks that the segments tile every sequence of `manifest` exactly once.
    pub fn verify_coverage(&self, manifest: &Manifest) -> Result<()> {
        let mut pieces: HashMap<&str, Vec<(u64, u64)>> = HashMap::with_capacity(manifest.len());
        for seg in self.batches.iter().flat_map(|b| b.segments()) {
            if seg.length == 0 {
                return Err(Error::invariant(format!("empty segment of `{}`", seg.sequence_id)));
            }
            pieces.entry(&seg.sequence_id).or_default().push((seg.offset, seg.length));
        }
        for rec in manifest.records() {
            let mut spans = pieces
                .remove(rec.id.as_ref())
                .ok_or_else(|| Error::invariant(format!("sequence `{}` is not covered", rec.id)))?;
            spans.sort_unstable();
            let mut cursor = 0;
            for (offset, length) in spans {
                if offset != cursor {
                    return Err(Error::invariant(format!(
                        "sequence `{}`: expected a segment at {cursor}, found one at {offset}",
                        rec.id
                    )));
                }
                cursor += length;
            }
            if cursor != rec.length {
                return Err(Error::invariant(format!(
                    "sequence `{}`: segments cover {cursor} of {} samples",
                    rec.id, rec.length
                )));
            }
        }
        if let Some(id) = pieces.keys().next() {
            return Err(Error::invariant(format!("segment of unknown sequence `{id}`")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Sorted,
    Bucket,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Random => "random",
            Strategy::Sorted => "sorted",
            Strategy::Bucket => "bucket",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "sorted" => Ok(Strategy::Sorted),
            "bucket" => Ok(Strategy::Bucket),
            other => Err(Error::config(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Batch size: a count of sequences, or a budget on `count x padded_length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum SizeMode {
    Fixed(usize),
    Dynamic(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BucketLimitMode {
    #[default]
    Uniform,
    Quantile,
}

impl fmt::Display for BucketLimitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BucketLimitMode::Uniform => "uniform",
            BucketLimitMode::Quantile => "quantile",
        })
    }
}

impl std::str::FromStr for BucketLimitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(BucketLimitMode::Uniform),
            "quantile" => Ok(BucketLimitMode::Quantile),
            other => Err(Error::config(format!("unknown bucket limit mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BatchingConfig {
    pub strategy: Strategy,
    pub size_mode: SizeMode,
    pub num_buckets: usize,
    pub bucket_limit_mode: BucketLimitMode,
    pub seed: u64,
    pub epochs: u64,
}

pub const DEFAULT_NUM_BUCKETS: usize = 10;

impl BatchingConfig {
    pub fn new(strategy: Strategy, size_mode: SizeMode) -> Self {
        Self {
            strategy,
            size_mode,
            num_buckets: DEFAULT_NUM_BUCKETS,
            bucket_limit_mode: BucketLimitMode::Uniform,
            seed: 0,
            epochs: 1,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn epochs(mut self, epochs: u64) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn buckets(mut self, num_buckets: usize, mode: BucketLimitMode) -> Self {
        self.num_buckets = num_buckets;
        self.bucket_limit_mode = mode;
        self
    }

    fn validate(&self, segment_count: usize) -> Result<()> {
        match self.size_mode {
            SizeMode::Fixed(0) => return Err(Error::config("fixed batch size must be at least 1")),
            SizeMode::Dynamic(0) => return Err(Error::config("dynamic budget must be at least 1 sample")),
            _ => {}
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.strategy == Strategy::Bucket {
            if self.num_buckets == 0 {
                return Err(Error::config("number of buckets must be at least 1"));
            }
            if self.num_buckets > segment_count {
                return Err(Error::config(format!(
                    "{} buckets requested for {segment_count} segments",
                    self.num_buckets
                )));
            }
        }
        Ok(())
    }
}

/// A bucket boundary, kept as the exact fraction `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BucketBoundary {
    num: u128,
    den: u64,
}

impl BucketBoundary {
    pub fn new(num: u128, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        let g = gcd(num, den as u128);
        let g = if g == 0 { 1 } else { g };
        Self { num: num / g, den: (den as u128 / g) as u64 }
    }

    pub fn integer(value: u64) -> Self {
        Self { num: value as u128, den: 1 }
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// True when `length >= self`.
    pub fn is_at_or_below(&self, length: u64) -> bool {
        length as u128 * self.den as u128 >= self.num
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Ord for BucketBoundary {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num * other.den as u128).cmp(&(other.num * self.den as u128))
    }
}

impl PartialOrd for BucketBoundary {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BucketBoundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Boundaries between `num_buckets` length buckets.
///
/// Uniform limits split `[min, max]` into equal widths. Quantile limits put
/// `ceil(j * n / num_buckets)` of the sorted lengths below boundary `j`; the
/// boundary value is the first length of the next bucket, so that with
/// half-open intervals (see [`assign_bucket`]) distinct lengths land in
/// equally sized buckets.
pub fn compute_bucket_limits(
    lengths: &[u64],
    num_buckets: usize,
    mode: BucketLimitMode,
) -> Result<Vec<BucketBoundary>> {
    if lengths.is_empty() {
        return Err(Error::data("cannot compute bucket limits of an empty length list"));
    }
    if num_buckets == 0 {
        return Err(Error::config("number of buckets must be at least 1"));
    }
    match mode {
        BucketLimitMode::Uniform => {
            let min = *lengths.iter().min().unwrap() as u128;
            let max = *lengths.iter().max().unwrap() as u128;
            let b = num_buckets as u128;
            Ok((1..b)
                .map(|j| BucketBoundary::new(min * b + j * (max - min), num_buckets as u64))
                .collect())
        }
        BucketLimitMode::Quantile => {
            let n = lengths.len();
            if num_buckets > n {
                return Err(Error::config(format!("{num_buckets} quantile buckets for {n} lengths")));
            }
            let mut sorted = lengths.to_vec();
            sorted.sort_unstable();
            Ok((1..num_buckets)
                .map(|j| BucketBoundary::integer(sorted[(j * n).div_ceil(num_buckets)]))
                .collect())
        }
    }
}

/// Index of the half-open interval `[b_{i-1}, b_i)` holding `length`; the last
/// bucket is closed above. `boundaries` must be ascending.
pub fn assign_bucket(length: u64, boundaries: &[BucketBoundary]) -> usize {
    boundaries.partition_point(|b| b.is_at_or_below(length))
}

/// Plans `config.epochs` epochs over `manifest`.
///
/// In dynamic mode, sequences longer than the budget are first split into
/// budget-length segments. Each epoch draws from its own RNG streams, so
/// epochs are planned independently (and in parallel with the `parallel`
/// feature).
pub fn plan_epochs(manifest: &Manifest, config: &BatchingConfig) -> Result<Vec<EpochPlan>> {
    let segments = initial_segments(manifest, config.size_mode);
    config.validate(segments.len())?;
    let epochs: Vec<u64> = (0..config.epochs).collect();

    let strategy = match config.strategy {
        Strategy::Bucket if config.num_buckets == 1 => Strategy::Random,
        s => s,
    };
    match strategy {
        Strategy::Random => par::map_ordered(&epochs, |&e| random_epoch(&segments, config, e))
            .into_iter()
            .collect(),
        Strategy::Sorted => {
            let mut sorted = segments;
            sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
            let batches = pack(&sorted, config.size_mode)?;
            Ok(par::map_ordered(&epochs, |&e| EpochPlan {
                epoch_index: e,
                batches: shuffled_batches(batches.clone(), config.seed, e),
            }))
        }
        Strategy::Bucket => {
            let lengths: Vec<u64> = segments.iter().map(|s| s.length).collect();
            let limits = compute_bucket_limits(&lengths, config.num_buckets, config.bucket_limit_mode)?;
            let mut buckets: Vec<Vec<Segment>> = vec![Vec::new(); config.num_buckets];
            for seg in segments {
                buckets[assign_bucket(seg.length, &limits)].push(seg);
            }
            buckets.retain(|b| !b.is_empty());
            par::map_ordered(&epochs, |&e| bucket_epoch(&buckets, config, e))
                .into_iter()
                .collect()
        }
    }
}

fn initial_segments(manifest: &Manifest, size_mode: SizeMode) -> Vec<Segment> {
    match size_mode {
        SizeMode::Dynamic(budget) if budget >= 1 && budget < manifest.max_length() => {
            packer::split_sequences(manifest, budget)
        }
        _ => manifest
            .records()
            .iter()
            .map(|r| Segment::new(r.id.clone(), 0, r.length))
            .collect(),
    }
}

fn pack(segments: &[Segment], size_mode: SizeMode) -> Result<Vec<Batch>> {
    match size_mode {
        SizeMode::Fixed(k) => Ok(packer::pack_fixed(segments, k)),
        SizeMode::Dynamic(budget) => packer::pack_dynamic(segments, budget),
    }
}

fn shuffled_batches(mut batches: Vec<Batch>, seed: u64, epoch: u64) -> Vec<Batch> {
    batches.shuffle(&mut rng::stream(seed, Purpose::BatchShuffle, epoch));
    batches
}

fn random_epoch(segments: &[Segment], config: &BatchingConfig, epoch: u64) -> Result<EpochPlan> {
    let mut order = segments.to_vec();
    order.shuffle(&mut rng::stream(config.seed, Purpose::SegmentShuffle, epoch));
    let batches = pack(&order, config.size_mode)?;
    Ok(EpochPlan { epoch_index: epoch, batches: shuffled_batches(batches, config.seed, epoch) })
}

fn bucket_epoch(buckets: &[Vec<Segment>], config: &BatchingConfig, epoch: u64) -> Result<EpochPlan> {
    let mut rng = rng::stream(config.seed, Purpose::BucketShuffle, epoch);
    let mut batches = Vec::new();
    for bucket in buckets {
        let mut order = bucket.clone();
        order.shuffle(&mut rng);
        batches.extend(pack(&order, config.size_mode)?);
    }
    Ok(EpochPlan { epoch_index: epoch, batches: shuffled_batches(batches, config.seed, epoch) })
}
