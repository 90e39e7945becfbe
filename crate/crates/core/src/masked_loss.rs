//! Masked SNR and SI-SNR losses over zero-padded batches.
//!
//! Only positions `[0, valid_lengths[i])` of row `i` are ever read, so the
//! contents of padded positions cannot change the loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// `N x T_max` targets and estimates with one valid length per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaddedBatch {
    targets: Vec<Vec<f64>>,
    estimates: Vec<Vec<f64>>,
    valid_lengths: Vec<usize>,
}

impl PaddedBatch {
    pub fn new(targets: Vec<Vec<f64>>, estimates: Vec<Vec<f64>>, valid_lengths: Vec<usize>) -> Result<Self> {
        let rows = targets.len();
        if rows == 0 {
            return Err(Error::data("padded batch has no rows"));
        }
        if estimates.len() != rows || valid_lengths.len() != rows {
            return Err(Error::data("targets, estimates and valid_lengths must have the same row count"));
        }
        let t_max = targets[0].len();
        if targets.iter().chain(&estimates).any(|r| r.len() != t_max) {
            return Err(Error::data("all rows must have the same padded length"));
        }
        if let Some(i) = valid_lengths.iter().position(|&l| l > t_max) {
            return Err(Error::data(format!("row {i}: valid length {} exceeds {t_max}", valid_lengths[i])));
        }
        Ok(Self { targets, estimates, valid_lengths })
    }

    /// Zero-pads unpadded rows to a common length.
    pub fn from_unpadded(rows: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        if let Some(i) = rows.iter().position(|(t, e)| t.len() != e.len()) {
            return Err(Error::data(format!("row {i}: target and estimate lengths differ")));
        }
        let t_max = rows.iter().map(|(t, _)| t.len()).max().unwrap_or(0);
        let pad = |v: &Vec<f64>| {
            let mut v = v.clone();
            v.resize(t_max, 0.0);
            v
        };
        Self::new(
            rows.iter().map(|(t, _)| pad(t)).collect(),
            rows.iter().map(|(_, e)| pad(e)).collect(),
            rows.iter().map(|(t, _)| t.len()).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    pub fn t_max(&self) -> usize {
        self.targets[0].len()
    }

    pub fn valid_lengths(&self) -> &[usize] {
        &self.valid_lengths
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn estimates(&self) -> &[Vec<f64>] {
        &self.estimates
    }

    pub fn estimates_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.estimates
    }

    pub fn targets_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.targets
    }

    /// Valid region of row `i` as (target, estimate).
    pub fn valid_row(&self, i: usize) -> (&[f64], &[f64]) {
        let n = self.valid_lengths[i];
        (&self.targets[i][..n], &self.estimates[i][..n])
    }

    pub fn is_masked(&self, row: usize, col: usize) -> bool {
        col >= self.valid_lengths[row]
    }
}

pub fn build_mask(valid_lengths: &[usize], t_max: usize) -> Vec<Vec<bool>> {
    valid_lengths.iter().map(|&n| (0..t_max).map(|c| c < n).collect()).collect()
}

/// How per-row terms combine into one loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Unweighted mean of per-sequence dB values.
    #[default]
    Mean,
    /// One ratio over the signal and error energies pooled across rows.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Snr,
    SiSnr,
}

/// Signal and error energy of one row.
struct Energies {
    signal: f64,
    error: f64,
}

fn db(signal: f64, error: f64, eps: f64) -> f64 {
    10.0 * ((signal + eps) / (error + eps)).log10()
}

fn snr_energies(target: &[f64], estimate: &[f64]) -> Energies {
    let mut signal = 0.0;
    let mut error = 0.0;
    for (s, e) in target.iter().zip(estimate) {
        signal += s * s;
        error += (s - e) * (s - e);
    }
    Energies { signal, error }
}

fn sisnr_energies(target: &[f64], estimate: &[f64], eps: f64) -> Energies {
    let n = target.len() as f64;
    let t_mean = target.iter().sum::<f64>() / n;
    let e_mean = estimate.iter().sum::<f64>() / n;
    let t: Vec<f64> = target.iter().map(|x| x - t_mean).collect();
    let e: Vec<f64> = estimate.iter().map(|x| x - e_mean).collect();
    let dot: f64 = t.iter().zip(&e).map(|(a, b)| a * b).sum();
    let t_energy: f64 = t.iter().map(|a| a * a).sum();
    let alpha = dot / (t_energy + eps);
    let mut signal = 0.0;
    let mut error = 0.0;
    for (a, b) in t.iter().zip(&e) {
        let proj = alpha * a;
        signal += proj * proj;
        error += (b - proj) * (b - proj);
    }
    Energies { signal, error }
}

fn reduce(per_row: Vec<Energies>, eps: f64, reduction: Reduction) -> f64 {
    match reduction {
        Reduction::Mean => {
            let n = per_row.len() as f64;
            -per_row.iter().map(|r| db(r.signal, r.error, eps)).sum::<f64>() / n
        }
        Reduction::Pooled => {
            let signal = per_row.iter().map(|r| r.signal).sum();
            let error = per_row.iter().map(|r| r.error).sum();
            -db(signal, error, eps)
        }
    }
}

/// Negated SNR in dB over valid positions, averaged over rows.
pub fn masked_snr_loss(batch: &PaddedBatch, eps: f64) -> f64 {
    masked_loss(batch, LossKind::Snr, eps, Reduction::Mean)
}

/// Negated SI-SNR in dB over valid positions, averaged over rows.
///
/// Rows whose valid target is all zeros are still defined through `eps` but
/// are logged as a warning.
pub fn masked_sisnr_loss(batch: &PaddedBatch, eps: f64) -> f64 {
    masked_loss(batch, LossKind::SiSnr, eps, Reduction::Mean)
}

pub fn masked_loss(batch: &PaddedBatch, kind: LossKind, eps: f64, reduction: Reduction) -> f64 {
    let per_row = (0..batch.rows())
        .map(|i| {
            let (target, estimate) = batch.valid_row(i);
            match kind {
                LossKind::Snr => snr_energies(target, estimate),
                LossKind::SiSnr => {
                    if target.iter().all(|&x| x == 0.0) {
                        log::warn!("row {i}: valid target is all zeros; SI-SNR is defined only through epsilon");
                    }
                    sisnr_energies(target, estimate, eps)
                }
            }
        })
        .collect();
    reduce(per_row, eps, reduction)
}

/// Rows whose valid target region is identically zero.
pub fn degenerate_rows(batch: &PaddedBatch) -> Vec<usize> {
    (0..batch.rows()).filter(|&i| batch.valid_row(i).0.iter().all(|&x| x == 0.0)).collect()
}

/// `loss(perturbed) - loss(original)` after adding `delta` to one estimate entry.
///
/// Exactly zero when `(row, col)` is a padded position.
pub fn finite_difference_mask_check(
    batch: &PaddedBatch,
    (row, col): (usize, usize),
    delta: f64,
    kind: LossKind,
    eps: f64,
) -> Result<f64> {
    if row >= batch.rows() || col >= batch.t_max() {
        return Err(Error::data(format!("position ({row}, {col}) outside {}x{}", batch.rows(), batch.t_max())));
    }
    let mut perturbed = batch.clone();
    perturbed.estimates[row][col] += delta;
    let base = masked_loss(batch, kind, eps, Reduction::Mean);
    Ok(masked_loss(&perturbed, kind, eps, Reduction::Mean) - base)
}
