//! Brute-force reference computations, written independently of the library.

use std::collections::BTreeMap;

use serde::Deserialize;

/// One dumped batch; segments are `[sequence_id, offset, length]`.
#[derive(Deserialize)]
struct DumpLine {
    epoch: u64,
    segments: Vec<(String, u64, u64)>,
    padded_length: u64,
}

/// Per-epoch (padding, covered samples) recounted from a JSONL plan dump.
///
/// Padding is recomputed from the segment lengths; the dumped
/// `padded_length` is only checked against that recount.
pub fn recount_dump(dump: &str) -> Result<BTreeMap<u64, (u64, u64)>, String> {
    let mut out: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for (i, line) in dump.lines().enumerate() {
        let line_no = i + 1;
        let row: DumpLine = serde_json::from_str(line).map_err(|e| format!("line {line_no}: {e}"))?;
        let max = row.segments.iter().map(|s| s.2).max().ok_or(format!("line {line_no}: empty batch"))?;
        if row.padded_length != max {
            return Err(format!("line {line_no}: padded_length {} but longest segment {max}", row.padded_length));
        }
        let entry = out.entry(row.epoch).or_default();
        for (_, _, l) in row.segments {
            entry.0 += max - l;
            entry.1 += l;
        }
    }
    Ok(out)
}

/// All non-decreasing sequences of `n` values from `1..=max`.
pub fn multisets(n: usize, max: u64) -> Vec<Vec<u64>> {
    fn go(n: usize, lo: u64, max: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for v in lo..=max {
            cur.push(v);
            go(n, v, max, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(n, 1, max, &mut Vec::new(), &mut out);
    out
}

/// Minimum total padding over every partition of `lengths` into groups of
/// exactly `k`, by exhaustive enumeration. `k` must divide the length count.
pub fn min_padding_over_partitions(lengths: &[u64], k: usize) -> u64 {
    assert_eq!(lengths.len() % k, 0);
    fn go(rest: &[u64], k: usize) -> u64 {
        if rest.is_empty() {
            return 0;
        }
        // The first element is in some group; choose its k-1 partners.
        let first = rest[0];
        let others = &rest[1..];
        let mut best = u64::MAX;
        let mut pick = Vec::with_capacity(k - 1);
        choose(others, k - 1, 0, &mut pick, &mut |chosen: &[usize]| {
            let mut group = vec![first];
            group.extend(chosen.iter().map(|&i| others[i]));
            let max = *group.iter().max().unwrap();
            let pad: u64 = group.iter().map(|l| max - l).sum();
            let remaining: Vec<u64> =
                others.iter().enumerate().filter(|(i, _)| !chosen.contains(i)).map(|(_, &l)| l).collect();
            best = best.min(pad + go(&remaining, k));
        });
        best
    }
    fn choose(items: &[u64], r: usize, start: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if pick.len() == r {
            f(pick);
            return;
        }
        for i in start..items.len() {
            pick.push(i);
            choose(items, r, i + 1, pick, f);
            pick.pop();
        }
    }
    go(lengths, k)
}
