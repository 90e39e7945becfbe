use std::collections::BTreeSet;

use batchplan::manifest::{load_manifest, synth_manifest, DistributionSpec, Manifest, ManifestFormat};
use batchplan::masked_loss::{masked_sisnr_loss, masked_snr_loss, PaddedBatch, DEFAULT_EPSILON};
use batchplan::stats::{EpochStats, Metric};
use batchplan::{
    assign_bucket, compute_bucket_limits, pack_dynamic, pack_fixed, plan_epochs, plan_hash, split_sequences,
    BatchingConfig, BucketLimitMode, EpochPlan, SizeMode, Strategy as Batching,
};
use proptest::prelude::*;

fn lengths_strategy(max_n: usize, max_len: u64) -> impl proptest::strategy::Strategy<Value = Vec<u64>> {
    prop::collection::vec(1..=max_len, 1..=max_n)
}

fn size_mode() -> impl proptest::strategy::Strategy<Value = SizeMode> {
    prop_oneof![(1usize..6).prop_map(SizeMode::Fixed), (1u64..40).prop_map(SizeMode::Dynamic)]
}

fn strategy() -> impl proptest::strategy::Strategy<Value = Batching> {
    prop_oneof![Just(Batching::Random), Just(Batching::Sorted), Just(Batching::Bucket)]
}

fn compositions(plan: &EpochPlan) -> BTreeSet<Vec<(String, u64)>> {
    plan.batches
        .iter()
        .map(|b| {
            let mut v: Vec<_> = b.segments().iter().map(|s| (s.sequence_id.to_string(), s.offset)).collect();
            v.sort();
            v
        })
        .collect()
}

proptest! {
    #[test]
    fn every_plan_covers_the_dataset_once(
        lengths in lengths_strategy(24, 30),
        strategy in strategy(),
        size in size_mode(),
        buckets in 1usize..5,
        quantile in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let m = Manifest::from_lengths(&lengths).unwrap();
        let mode = if quantile { BucketLimitMode::Quantile } else { BucketLimitMode::Uniform };
        let cfg = BatchingConfig::new(strategy, size).buckets(buckets.min(lengths.len()), mode).seed(seed).epochs(3);
        let plans = plan_epochs(&m, &cfg).unwrap();
        prop_assert_eq!(plans.len(), 3);
        for p in &plans {
            p.verify_coverage(&m).unwrap();
            let stats = EpochStats::compute(p, m.total_length()).unwrap();
            prop_assert_eq!(stats.padded_volume, stats.original_total + stats.total_padding);
            for b in &p.batches {
                prop_assert_eq!(b.padded_length(), b.lengths().max().unwrap());
                if let SizeMode::Dynamic(budget) = size {
                    prop_assert!(b.len() as u64 * b.padded_length() <= budget);
                }
                if let SizeMode::Fixed(k) = size {
                    prop_assert!(b.len() <= k);
                }
            }
        }
    }

    #[test]
    fn planning_is_deterministic(
        lengths in lengths_strategy(20, 50),
        strategy in strategy(),
        size in size_mode(),
        seed in any::<u64>(),
    ) {
        let m = Manifest::from_lengths(&lengths).unwrap();
        let cfg = BatchingConfig::new(strategy, size).buckets(2.min(lengths.len()), BucketLimitMode::Uniform).seed(seed).epochs(2);
        let a = plan_epochs(&m, &cfg).unwrap();
        let b = plan_epochs(&m, &cfg).unwrap();
        prop_assert_eq!(plan_hash(&a), plan_hash(&b));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sorted_compositions_are_stable(lengths in lengths_strategy(20, 50), size in size_mode(), seed in any::<u64>()) {
        let m = Manifest::from_lengths(&lengths).unwrap();
        let plans = plan_epochs(&m, &BatchingConfig::new(Batching::Sorted, size).seed(seed).epochs(3)).unwrap();
        prop_assert_eq!(compositions(&plans[0]), compositions(&plans[1]));
        prop_assert_eq!(compositions(&plans[0]), compositions(&plans[2]));
    }

    #[test]
    fn bucket_batches_stay_in_one_bucket(
        lengths in lengths_strategy(30, 60),
        size in size_mode(),
        buckets in 1usize..6,
        quantile in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let m = Manifest::from_lengths(&lengths).unwrap();
        let mode = if quantile { BucketLimitMode::Quantile } else { BucketLimitMode::Uniform };
        let buckets = buckets.min(lengths.len());
        let cfg = BatchingConfig::new(Batching::Bucket, size).buckets(buckets, mode).seed(seed);
        let plan = &plan_epochs(&m, &cfg).unwrap()[0];
        // Buckets are formed over the (possibly split) segment lengths.
        let segment_lengths: Vec<u64> = plan.batches.iter().flat_map(|b| b.lengths()).collect();
        let limits = compute_bucket_limits(&segment_lengths, buckets, mode).unwrap();
        for b in &plan.batches {
            let ids: BTreeSet<usize> = b.lengths().map(|l| assign_bucket(l, &limits)).collect();
            prop_assert_eq!(ids.len(), 1);
        }
    }

    #[test]
    fn splitting_conserves_samples(lengths in lengths_strategy(20, 100), budget in 1u64..40) {
        let m = Manifest::from_lengths(&lengths).unwrap();
        let segs = split_sequences(&m, budget);
        prop_assert_eq!(segs.iter().map(|s| s.length).sum::<u64>(), m.total_length());
        for rec in m.records() {
            let own: Vec<_> = segs.iter().filter(|s| s.sequence_id == rec.id).collect();
            prop_assert_eq!(own.len() as u64, rec.length.div_ceil(budget));
            let mut cursor = 0;
            for s in own {
                prop_assert_eq!(s.offset, cursor);
                prop_assert!(s.length <= budget && s.length >= 1);
                cursor += s.length;
            }
            prop_assert_eq!(cursor, rec.length);
        }
    }

    #[test]
    fn fixed_packing_batch_count(lengths in lengths_strategy(40, 100), k in 1usize..9) {
        let m = Manifest::from_lengths(&lengths).unwrap();
        let segs = split_sequences(&m, u64::MAX);
        prop_assert_eq!(pack_fixed(&segs, k).len(), lengths.len().div_ceil(k));
    }

    #[test]
    fn dynamic_packing_budget_law(lengths in lengths_strategy(40, 100), budget in 1u64..150) {
        let m = Manifest::from_lengths(&lengths).unwrap();
        let segs = split_sequences(&m, budget);
        for b in pack_dynamic(&segs, budget).unwrap() {
            prop_assert!(b.len() as u64 * b.padded_length() <= budget);
        }
    }

    #[test]
    fn manifest_round_trip(lengths in lengths_strategy(30, 1_000_000), jsonl in any::<bool>()) {
        let m = Manifest::from_lengths(&lengths).unwrap();
        let format = if jsonl { ManifestFormat::Jsonl } else { ManifestFormat::Csv };
        let mut buf = Vec::new();
        m.write(&mut buf, format).unwrap();
        let back = load_manifest(buf.as_slice(), format, m.sample_rate()).unwrap();
        prop_assert_eq!(back.total_length(), m.total_length());
        prop_assert_eq!(back, m);
    }

    #[test]
    fn synth_lengths_respect_clipping(
        location in 2.0f64..12.0,
        scale in 0.0f64..2.0,
        min in 1u64..500,
        span in 0u64..5_000,
        seed in any::<u64>(),
    ) {
        let spec = DistributionSpec::lognormal(location, scale, min, min + span).unwrap();
        let m = synth_manifest(&spec, (min + span) * 20, seed).unwrap();
        prop_assert!(m.lengths().all(|l| l >= min && l <= min + span));
    }

    #[test]
    fn masked_entries_never_matter(
        rows in prop::collection::vec((2usize..12, 0usize..6), 1..5),
        values in prop::collection::vec(-3.0f64..3.0, 200),
        noise in prop::collection::vec(-1e6f64..1e6, 200),
    ) {
        let t_max = rows.iter().map(|(v, p)| v + p).max().unwrap();
        let mut i = 0;
        let mut next = |pool: &[f64]| { i += 1; pool[i % pool.len()] };
        let targets: Vec<Vec<f64>> = rows.iter().map(|_| (0..t_max).map(|_| next(&values)).collect()).collect();
        let estimates: Vec<Vec<f64>> = rows.iter().map(|_| (0..t_max).map(|_| next(&values)).collect()).collect();
        let valid: Vec<usize> = rows.iter().map(|(v, _)| *v).collect();
        let base = PaddedBatch::new(targets, estimates, valid.clone()).unwrap();
        let mut noisy = base.clone();
        for (r, &v) in valid.iter().enumerate() {
            for c in v..t_max {
                noisy.estimates_mut()[r][c] = next(&noise);
                noisy.targets_mut()[r][c] = next(&noise);
            }
        }
        prop_assert_eq!(masked_snr_loss(&base, DEFAULT_EPSILON).to_bits(), masked_snr_loss(&noisy, DEFAULT_EPSILON).to_bits());
        prop_assert_eq!(masked_sisnr_loss(&base, DEFAULT_EPSILON).to_bits(), masked_sisnr_loss(&noisy, DEFAULT_EPSILON).to_bits());
    }
}

#[test]
fn quantile_buckets_reproduce_sorted_compositions() {
    // distinct lengths, n divisible by K, n/K quantile buckets
    for (n, k) in [(6usize, 2usize), (8, 4), (12, 3), (20, 5)] {
        let lengths: Vec<u64> = (0..n as u64).map(|i| 1 + (i * 7919) % 1009).collect();
        let m = Manifest::from_lengths(&lengths).unwrap();
        let sorted = plan_epochs(&m, &BatchingConfig::new(Batching::Sorted, SizeMode::Fixed(k))).unwrap();
        let bucket = plan_epochs(
            &m,
            &BatchingConfig::new(Batching::Bucket, SizeMode::Fixed(k)).buckets(n / k, BucketLimitMode::Quantile),
        )
        .unwrap();
        assert_eq!(compositions(&sorted[0]), compositions(&bucket[0]), "n={n} k={k}");
    }
}

#[test]
fn random_padding_exceeds_sorted_on_speech_like_lengths() {
    let m = synth_manifest(&DistributionSpec::speech_mixtures(16_000), 3600 * 16_000, 3).unwrap();
    let zpr = |strategy, seed| {
        let plan = &plan_epochs(&m, &BatchingConfig::new(strategy, SizeMode::Fixed(4)).seed(seed)).unwrap()[0];
        EpochStats::compute(plan, m.total_length()).unwrap().metric(Metric::Zpr)
    };
    let random_mean: f64 = (0..5).map(|s| zpr(Batching::Random, s)).sum::<f64>() / 5.0;
    let bucket_mean: f64 = (0..5).map(|s| zpr(Batching::Bucket, s)).sum::<f64>() / 5.0;
    let sorted = zpr(Batching::Sorted, 0);
    assert!(sorted <= random_mean);
    assert!(sorted < bucket_mean && bucket_mean < random_mean);
}
