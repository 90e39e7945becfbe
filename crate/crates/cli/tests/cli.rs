use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn batchplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_batchplan")).args(args).output().expect("run batchplan")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn db(signal: f64, error: f64) -> f64 {
    let eps = 1e-8;
    10.0 * ((signal + eps) / (error + eps)).log10()
}

#[test]
fn loss_check_reports_losses_and_mask_invariance() {
    let out = batchplan(&["loss-check", "--input", &fixture("loss_batch.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let value = |key: &str| -> String {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no {key} in {text}"));
        line[key.len()..].trim().to_string()
    };
    assert_eq!(value("rows"), "2");
    assert_eq!(value("t_max"), "4");
    // Row 0 only sees [3, 4] vs [3, 0]; the large padded values are ignored.
    let expected = -(db(25.0, 16.0) + db(6.25, 0.07)) / 2.0;
    let snr: f64 = value("snr_loss").parse().unwrap();
    assert!((snr - expected).abs() < 1e-9, "snr_loss {snr} vs {expected}");
    assert!(value("mask_invariance").starts_with("pass (2 padded entries"), "{text}");
}

#[test]
fn synth_then_plan_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("lengths.csv");
    let dump = dir.path().join("plan.jsonl");

    let out = batchplan(&["synth", "--duration", "600", "--seed", "3", "--out", path(&manifest)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<u64> = fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|&l| (4 * 16_000..=30 * 16_000).contains(&l)));

    let plan = |seed: &str| {
        let out = batchplan(&[
            "plan", "--manifest", path(&manifest), "--strategy", "sorted", "--fixed", "4", "--seed", seed,
            "--epochs", "2", "--out", path(&dump),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (stdout(&out), fs::read_to_string(&dump).unwrap())
    };
    let (hash_a, dump_a) = plan("7");
    let (hash_b, dump_b) = plan("7");
    assert!(hash_a.starts_with("plan_hash "));
    assert_eq!(hash_a, hash_b);
    assert_eq!(dump_a, dump_b);

    let mut covered = [0u64; 2];
    for line in dump_a.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let epoch = v["epoch"].as_u64().unwrap() as usize;
        for s in v["segments"].as_array().unwrap() {
            covered[epoch] += s[2].as_u64().unwrap();
        }
    }
    let total: u64 = rows.iter().sum();
    assert_eq!(covered, [total, total]);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.jsonl");
    fs::write(&manifest, "{\"id\":\"a\",\"length_samples\":5}\n{\"id\":\"b\",\"length_samples\":9}\n{\"id\":\"c\",\"length_samples\":2}\n")
        .unwrap();
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        format!(
            r#"{{"manifest": {:?}, "strategy": "random", "fixed": 8, "seed": [0, 1], "format": "json"}}"#,
            path(&manifest)
        ),
    )
    .unwrap();

    let out = batchplan(&["stats", "--config", path(&config), "--fixed", "2", "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "strategy,size_mode,size,num_buckets,bucket_limits,metric,mean,sem,n,mean_seconds");
    let zpr = lines.find(|l| l.contains(",zpr,")).expect("zpr row");
    assert!(zpr.starts_with("random,fixed,2,,,zpr,"), "{zpr}");
    assert!(zpr.ends_with(",2,"), "two seeds from the config file: {zpr}");
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"strategy": "sorted", "fixed": 4, "batch_size": 4}"#).unwrap();
    assert_eq!(batchplan(&["stats", "--config", path(&config)]).status.code(), Some(2));
    assert_eq!(batchplan(&["stats", "--strategy", "sorted", "--fixed", "0"]).status.code(), Some(2));
    assert_eq!(batchplan(&["stats", "--strategy", "sorted"]).status.code(), Some(2));
    assert_eq!(batchplan(&["plan", "--strategy", "sorted", "random", "--fixed", "4"]).status.code(), Some(2));
    assert_eq!(batchplan(&["stats", "--strategy", "bucket", "--buckets", "0", "--fixed", "4"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,length\na,10\nb,0\n").unwrap();
    let out = batchplan(&["stats", "--manifest", path(&bad), "--strategy", "sorted", "--fixed", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));

    let missing = dir.path().join("missing.csv");
    let out = batchplan(&["stats", "--manifest", path(&missing), "--strategy", "sorted", "--fixed", "2"]);
    assert_eq!(out.status.code(), Some(3));

    let ragged = dir.path().join("ragged.json");
    fs::write(&ragged, r#"{"targets": [[1.0, 2.0]], "estimates": [[1.0]], "valid_lengths": [2]}"#).unwrap();
    assert_ne!(batchplan(&["loss-check", "--input", path(&ragged)]).status.code(), Some(0));
}
