use std::path::Path;
use std::process::Command;

fn qcoll(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qcoll")).args(args).output().expect("binary runs")
}

fn tmp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("qcoll-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn test_command_is_byte_deterministic() {
    let (a, b) = (tmp("a"), tmp("b"));
    for dir in [&a, &b] {
        let out = qcoll(&["test", "--seed", "11", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(read(&a, "test_verdicts.jsonl"), read(&b, "test_verdicts.jsonl"));
    assert_eq!(read(&a, "test_summary.csv"), read(&b, "test_summary.csv"));
    let c = tmp("c");
    qcoll(&["test", "--seed", "12", "--out", c.to_str().unwrap()]);
    assert_ne!(read(&a, "test_verdicts.jsonl"), read(&c, "test_verdicts.jsonl"));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tmp("cfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.json");
    std::fs::write(&cfg, r#"{"seed": 3, "estimate": {"instances": [{"family": "basis_states", "d": 2, "n": 2}], "mus": [2.0]}}"#).unwrap();
    let out = qcoll(&["estimate", "--config", cfg.to_str().unwrap(), "--seed", "4", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(&dir, "config.json").contains("\"seed\":4"));
    let csv = read(&dir, "estimate.csv");
    let row: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    assert!((row[6].parse::<f64>().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn bad_config_is_rejected() {
    let dir = tmp("bad");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, r#"{"sweep": {"replicates": 0}}"#).unwrap();
    let out = qcoll(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_filter_and_mutation() {
    let dir = tmp("verify");
    let d = dir.to_str().unwrap();
    let clean = qcoll(&["verify", "--filter", "symmetry", "--out", d]);
    assert_eq!(clean.status.code(), Some(0));
    let text = String::from_utf8_lossy(&clean.stdout);
    assert!(text.contains("nested_commutation") && !text.contains("unbiasedness"));

    assert_eq!(qcoll(&["verify", "--filter", "estimator", "--out", d]).status.code(), Some(0));
    let mutated = qcoll(&["verify", "--filter", "estimator", "--mutate", "--out", d]);
    assert_eq!(mutated.status.code(), Some(1));
    assert!(read(&dir, "verify.jsonl").lines().next().unwrap().contains("\"passed\":false"));
}
