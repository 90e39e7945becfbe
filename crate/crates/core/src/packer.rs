//! Splitting over-budget sequences and packing segment streams into batches.

use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::planner::{Batch, Segment};

/// Cuts every sequence into `budget`-length segments plus a shorter remainder.
///
/// Output order is by source sequence, then offset.
pub fn split_sequences(manifest: &Manifest, budget: u64) -> Vec<Segment> {
    assert!(budget >= 1, "budget must be at least one sample");
    let mut out = Vec::new();
    for rec in manifest.records() {
        let mut offset = 0;
        while offset < rec.length {
            let length = budget.min(rec.length - offset);
            out.push(Segment::new(rec.id.clone(), offset, length));
            offset += length;
        }
    }
    out
}

/// Consecutive runs of `k` segments; the last batch may be short.
pub fn pack_fixed(segments: &[Segment], k: usize) -> Vec<Batch> {
    assert!(k >= 1, "fixed batch size must be at least 1");
    segments.chunks(k).map(|c| Batch::from_nonempty(c.to_vec())).collect()
}

/// Greedy packing in stream order under `count * padded_length <= budget`.
///
/// A segment joins the open batch if the batch still fits the budget with it,
/// otherwise the batch is closed and the segment opens the next one. There is
/// no lookahead.
pub fn pack_dynamic(segments: &[Segment], budget: u64) -> Result<Vec<Batch>> {
    let mut batches = Vec::new();
    let mut open: Vec<Segment> = Vec::new();
    let mut open_max = 0u64;
    for seg in segments {
        if seg.length > budget {
            return Err(Error::invariant(format!(
                "segment of `{}` at {} has length {} over the budget {budget}; split it first",
                seg.sequence_id, seg.offset, seg.length
            )));
        }
        let max = open_max.max(seg.length);
        if !open.is_empty() && (open.len() as u64 + 1) * max > budget {
            batches.push(Batch::from_nonempty(std::mem::take(&mut open)));
            open_max = 0;
        }
        open_max = open_max.max(seg.length);
        open.push(seg.clone());
    }
    if !open.is_empty() {
        batches.push(Batch::from_nonempty(open));
    }
    Ok(batches)
}
