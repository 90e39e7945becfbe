//! Sequence-length manifests: loading, writing, and synthesis.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// One training sequence. `length` is in samples.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: Arc<str>,
    pub length: u64,
}

impl SequenceRecord {
    pub fn new(id: impl Into<Arc<str>>, length: u64) -> Self {
        Self { id: id.into(), length }
    }
}

/// An ordered, non-empty list of sequences with unique ids.
///
/// Record order matters: the random strategy shuffles starting from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    records: Vec<SequenceRecord>,
    sample_rate: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifestFormat {
    Csv,
    Jsonl,
}

impl ManifestFormat {
    /// Guess from a file extension (`.csv`, `.jsonl`/`.ndjson`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "jsonl" | "ndjson" => Some(Self::Jsonl),
            _ => None,
        }
    }
}

impl std::str::FromStr for ManifestFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(Error::config(format!("unknown manifest format `{other}`"))),
        }
    }
}

impl Manifest {
    pub fn new(records: Vec<SequenceRecord>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if records.is_empty() {
            return Err(Error::data("manifest is empty"));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.length == 0 {
                return Err(Error::data(format!("sequence `{}` has non-positive length", r.id)));
            }
            if !seen.insert(r.id.clone()) {
                return Err(Error::data(format!("duplicate id `{}`", r.id)));
            }
        }
        Ok(Self { records, sample_rate })
    }

    /// Builds a manifest from bare lengths with ids `0`, `1`, ... (handy in tests).
    pub fn from_lengths(lengths: &[u64]) -> Result<Self> {
        let records = lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| SequenceRecord::new(i.to_string(), l))
            .collect();
        Self::new(records, DEFAULT_SAMPLE_RATE)
    }

    pub fn with_sample_rate(mut self, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        self.sample_rate = sample_rate;
        Ok(self)
    }

    pub fn records(&self) -> &[SequenceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn lengths(&self) -> impl Iterator<Item = u64> + '_ {
        self.records.iter().map(|r| r.length)
    }

    pub fn max_length(&self) -> u64 {
        self.lengths().max().unwrap_or(0)
    }

    pub fn min_length(&self) -> u64 {
        self.lengths().min().unwrap_or(0)
    }

    /// Sum of all lengths in samples, exact.
    pub fn total_length(&self) -> u64 {
        total_length(self)
    }

    /// Writes lengths in samples. Loading the output reproduces ids and lengths.
    pub fn write<W: Write>(&self, mut out: W, format: ManifestFormat) -> Result<()> {
        match format {
            ManifestFormat::Csv => {
                let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
                w.write_record(["id", "length"]).map_err(csv_err)?;
                for r in &self.records {
                    w.write_record([&*r.id, &r.length.to_string()]).map_err(csv_err)?;
                }
                w.flush()?;
            }
            ManifestFormat::Jsonl => {
                #[derive(Serialize)]
                struct Row<'a> {
                    id: &'a str,
                    length_samples: u64,
                }
                for r in &self.records {
                    serde_json::to_writer(&mut out, &Row { id: &r.id, length_samples: r.length })?;
                    out.write_all(b"\n")?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub fn total_length(manifest: &Manifest) -> u64 {
    manifest.records.iter().map(|r| r.length).sum()
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::at(line, e.to_string())
    }
}

/// Parses a manifest. Rows carry an id and a length in samples or seconds;
/// seconds are converted with `floor(seconds * sample_rate)`.
pub fn load_manifest<R: Read>(source: R, format: ManifestFormat, sample_rate: u32) -> Result<Manifest> {
    if sample_rate == 0 {
        return Err(Error::config("sample rate must be positive"));
    }
    let rows = match format {
        ManifestFormat::Csv => read_csv(source, sample_rate)?,
        ManifestFormat::Jsonl => read_jsonl(source, sample_rate)?,
    };
    let mut seen = HashSet::with_capacity(rows.len());
    for (line, rec) in &rows {
        if !seen.insert(rec.id.clone()) {
            return Err(Error::at(*line, format!("duplicate id `{}`", rec.id)));
        }
    }
    Manifest::new(rows.into_iter().map(|(_, r)| r).collect(), sample_rate)
}

pub fn load_manifest_file(path: &Path, format: Option<ManifestFormat>, sample_rate: u32) -> Result<Manifest> {
    let format = format
        .or_else(|| ManifestFormat::from_path(path))
        .ok_or_else(|| Error::config(format!("cannot infer manifest format of {}", path.display())))?;
    let file = std::fs::File::open(path)?;
    load_manifest(BufReader::new(file), format, sample_rate)
}

fn read_csv<R: Read>(source: R, sample_rate: u32) -> Result<Vec<(u64, SequenceRecord)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.len() != 2 || &headers[0] != "id" || &headers[1] != "length" {
        return Err(Error::at(1, "expected header `id,length`"));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec.get(0).unwrap_or_default();
        let raw = rec.get(1).unwrap_or_default();
        if id.is_empty() {
            return Err(Error::at(line, "empty id"));
        }
        let length = match raw.strip_suffix('s') {
            Some(secs) => seconds_to_samples(secs, sample_rate),
            None => parse_samples(raw),
        }
        .map_err(|msg| Error::at(line, msg))?;
        rows.push((line, SequenceRecord::new(id, length)));
    }
    Ok(rows)
}

fn read_jsonl<R: Read>(source: R, sample_rate: u32) -> Result<Vec<(u64, SequenceRecord)>> {
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| Error::at(line_no, format!("malformed JSON: {e}")))?;
        let obj = value.as_object().ok_or_else(|| Error::at(line_no, "expected a JSON object"))?;
        let id = match obj.get("id") {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(Error::at(line_no, "missing or empty `id`")),
        };
        let length = match (obj.get("length_samples"), obj.get("length_seconds")) {
            (Some(_), Some(_)) => Err("both `length_samples` and `length_seconds` given".to_string()),
            (Some(Value::Number(n)), None) => parse_samples(&n.to_string()),
            (None, Some(Value::Number(n))) => seconds_to_samples(&n.to_string(), sample_rate),
            (None, None) => Err("missing `length_samples` or `length_seconds`".to_string()),
            _ => Err("length must be a number".to_string()),
        }
        .map_err(|msg| Error::at(line_no, msg))?;
        rows.push((line_no, SequenceRecord::new(id, length)));
    }
    Ok(rows)
}

fn parse_samples(raw: &str) -> std::result::Result<u64, String> {
    if let Some(rest) = raw.strip_prefix('-') {
        if rest.chars().all(|c| c.is_ascii_digit()) && !rest.is_empty() {
            return Err(format!("non-positive length `{raw}`"));
        }
    }
    let n: u64 = raw.parse().map_err(|_| format!("malformed length `{raw}`"))?;
    if n == 0 {
        return Err(format!("non-positive length `{raw}`"));
    }
    Ok(n)
}

/// `floor(seconds * sample_rate)` on the exact decimal value of `raw`.
pub fn seconds_to_samples(raw: &str, sample_rate: u32) -> std::result::Result<u64, String> {
    let malformed = || format!("malformed duration `{raw}`");
    let (negative, body) = match raw.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, raw.strip_prefix('+').unwrap_or(raw)),
    };
    let (mantissa_str, exp) = match body.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = body[pos + 1..].parse().map_err(|_| malformed())?;
            (&body[..pos], e)
        }
        None => (body, 0),
    };
    let (int_part, frac_part) = mantissa_str.split_once('.').unwrap_or((mantissa_str, ""));
    if (int_part.is_empty() && frac_part.is_empty())
        || !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit())
    {
        return Err(malformed());
    }
    let digits: String = int_part.chars().chain(frac_part.chars()).collect();
    let digits = digits.trim_start_matches('0');
    if digits.len() > 30 {
        return Err(malformed());
    }
    let mantissa: u128 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| malformed())? };
    if mantissa == 0 || negative {
        return Err(format!("non-positive length `{raw}`"));
    }
    let scaled = mantissa.checked_mul(sample_rate as u128).ok_or_else(malformed)?;
    let exp10 = exp as i64 - frac_part.len() as i64;
    let samples = if exp10 >= 0 {
        10u128
            .checked_pow(exp10 as u32)
            .and_then(|p| scaled.checked_mul(p))
            .ok_or_else(|| format!("duration `{raw}` too large"))?
    } else {
        match 10u128.checked_pow((-exp10) as u32) {
            Some(p) => scaled / p,
            None => 0,
        }
    };
    let samples = u64::try_from(samples).map_err(|_| format!("duration `{raw}` too large"))?;
    if samples == 0 {
        return Err(format!("duration `{raw}` is shorter than one sample"));
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    LogNormal,
}

/// Length distribution for synthetic manifests: `exp(N(location, scale))`
/// samples, floored, then clipped to `[min_length, max_length]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub family: Family,
    pub location: f64,
    pub scale: f64,
    pub min_length: u64,
    pub max_length: u64,
}

impl DistributionSpec {
    pub fn lognormal(location: f64, scale: f64, min_length: u64, max_length: u64) -> Result<Self> {
        let spec = Self { family: Family::LogNormal, location, scale, min_length, max_length };
        spec.validate()?;
        Ok(spec)
    }

    /// Unimodal, right-skewed lengths with a mean of 16 s, clipped to 4..30 s.
    ///
    /// The spread is tuned so that random batching of 8 sequences pads about
    /// a quarter of the data.
    pub fn speech_mixtures(sample_rate: u32) -> Self {
        let sr = sample_rate as f64;
        let scale: f64 = 0.16;
        Self {
            family: Family::LogNormal,
            location: (16.0 * sr).ln() - scale * scale / 2.0,
            scale,
            min_length: 4 * sample_rate as u64,
            max_length: 30 * sample_rate as u64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_length < 1 {
            return Err(Error::config("min_length must be at least 1"));
        }
        if self.min_length > self.max_length {
            return Err(Error::config("min_length exceeds max_length"));
        }
        if !self.location.is_finite() || !self.scale.is_finite() || self.scale < 0.0 {
            return Err(Error::config("location must be finite and scale finite and non-negative"));
        }
        Ok(())
    }
}

/// Draws lengths until their sum first reaches `total_duration` samples.
/// Ids are zero-padded decimal indices.
pub fn synth_manifest(spec: &DistributionSpec, total_duration: u64, seed: u64) -> Result<Manifest> {
    spec.validate()?;
    if total_duration < spec.max_length {
        return Err(Error::config("total duration must be at least max_length"));
    }
    let dist = LogNormal::new(spec.location, spec.scale)
        .map_err(|e| Error::config(format!("bad lognormal parameters: {e}")))?;
    let mut rng = rng::stream(seed, Purpose::Synthesis, 0);
    let width = total_duration.div_ceil(spec.min_length).to_string().len();

    let mut records = Vec::new();
    let mut total = 0u64;
    while total < total_duration {
        let x: f64 = dist.sample(&mut rng);
        // `as` saturates on overflow and maps NaN to 0; clamp handles both.
        let length = (x.floor() as u64).clamp(spec.min_length, spec.max_length);
        records.push(SequenceRecord::new(format!("{:0width$}", records.len()), length));
        total += length;
    }
    Manifest::new(records, DEFAULT_SAMPLE_RATE)
}
