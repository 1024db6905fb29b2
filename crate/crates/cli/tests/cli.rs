use std::path::Path;
use std::process::Command;

use uwbbounds_cli::{parse_config, run_sweep, write_csv, RunOptions};
use uwbbounds_core::BoundKind;

const SMALL: &str = r#""codeword_len": 8, "taps": 2, "samples_theta": 200, "samples_pd": 200, "samples_upper": 2000"#;

fn small(extra: &str) -> String {
    if extra.is_empty() {
        format!("{{{SMALL}}}")
    } else {
        format!("{{{SMALL}, {extra}}}")
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uwbbounds"))
}

fn run_in(dir: &Path, config: &str, args: &[&str]) -> std::process::Output {
    let path = dir.join("cfg.json");
    std::fs::write(&path, config).unwrap();
    bin()
        .arg("run")
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out.csv"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn effective_config_round_trips() {
    let texts = [
        "{}".to_string(),
        small(r#""sweep": {"eta2": [0.1, 0.3], "d": [2, 50]}, "bounds": "lower", "h1_mode": "averaged""#),
        r#"{"num_nodes": 3, "duty_cycles": [0.5, 0.2, 0.4], "interferer_distances_m": [3, 7], "seed": 99}"#.to_string(),
        small(r#""lower_method": "exact", "sweep": {"l": [3, 8]}"#),
    ];
    for text in &texts {
        let spec = parse_config(text, None).unwrap();
        let again = parse_config(&spec.to_json(), None).unwrap();
        assert_eq!(spec, again, "{text}");
        assert_eq!(spec.to_json(), again.to_json());
    }
}

#[test]
fn exit_codes_distinguish_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = bin()
        .args(["validate", "--config"])
        .arg(dir.path().join("nope.json"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(3));

    let cases = [
        ("{\"taps\": 3,", 4, ""),
        (r#"{"duty_cycles": [0.5, 1.5]}"#, 5, "duty_cycles"),
        (r#"{"colour": 1}"#, 5, "colour"),
        (r#"{"sweep": {"d": [1, 2], "d": [3]}}"#, 6, "d"),
        (r#"{"sweep": {"l": []}}"#, 6, "l"),
        (r#"{"lower_method": "exact", "h1_mode": "averaged"}"#, 6, "lower_method"),
        (r#"{"lower_method": "sampled"}"#, 5, "lower_method"),
    ];
    for (text, code, key) in cases {
        let path = dir.path().join("c.json");
        std::fs::write(&path, text).unwrap();
        let out = bin().arg("validate").arg("--config").arg(&path).output().unwrap();
        assert_eq!(out.status.code(), Some(code), "{text}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains(key), "{text}: {stderr}");
    }
}

#[test]
fn validate_prints_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, "{}").unwrap();
    let out = bin().args(["validate", "--preset", "desk", "--config"]).arg(&path).output().unwrap();
    assert!(out.status.success());
    let spec = parse_config(&String::from_utf8(out.stdout).unwrap(), None).unwrap();
    assert_eq!(spec.base.codeword_len, 40);
    assert_eq!(spec.base.taps, 3);
}

#[test]
fn single_point_both_bounds_gives_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &small(""), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "l_m,d_m,eta1,eta2,bound,rate_bits_per_symbol,ci_halfwidth,samples,seed,wall_s");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains(",lower,"));
    assert!(lines[2].contains(",upper,"));
    assert!(dir.path().join("out.csv.config.json").exists());
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(r#""sweep": {"d": [2, 20], "eta2": [0.2, 0.5]}"#);
    assert!(run_in(dir.path(), &cfg, &["--seed", "7"]).status.success());
    let first = std::fs::read(dir.path().join("out.csv")).unwrap();
    assert!(run_in(dir.path(), &cfg, &["--seed", "7"]).status.success());
    assert_eq!(first, std::fs::read(dir.path().join("out.csv")).unwrap());
    assert!(run_in(dir.path(), &cfg, &["--seed", "8"]).status.success());
    assert_ne!(first, std::fs::read(dir.path().join("out.csv")).unwrap());
}

#[test]
fn upper_rows_ignore_interferer_parameters() {
    let spec = parse_config(&small(r#""sweep": {"l": [3, 8], "d": [1, 100], "eta2": [0.1, 0.5]}"#), None).unwrap();
    let rows = run_sweep(&spec, RunOptions::default()).unwrap();
    let upper: Vec<_> = rows.iter().filter(|r| r.bound == BoundKind::Upper).collect();
    assert_eq!(upper.len(), 2);
    assert_eq!(rows.len(), 8 + 2);
    for u in &upper {
        assert!(u.d_m.is_none() && u.eta2.is_none());
        let moved = parse_config(
            &small(&format!(r#""link_distance_m": {}, "interferer_distances_m": [13], "duty_cycles": [0.5, 0.9], "bounds": "upper""#, u.l_m)),
            None,
        )
        .unwrap();
        let alone = run_sweep(&moved, RunOptions::default()).unwrap();
        assert_eq!(alone.len(), 1);
        // Upper streams are keyed by (l, eta1) group; the first group is 0 in both runs.
        if u.l_m == 3.0 {
            assert_eq!(alone[0].rate_bits_per_symbol, u.rate_bits_per_symbol);
        }
    }
}

#[test]
fn figure_requires_reference_distance() {
    let dir = tempfile::tempdir().unwrap();
    let fig = dir.path().join("fig.csv");
    let out = run_in(
        dir.path(),
        &small(r#""sweep": {"d": [1, 2]}, "bounds": "lower""#),
        &["--figure", fig.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(6));

    let out = run_in(
        dir.path(),
        &small(r#""sweep": {"d": [1, 100]}, "bounds": "lower""#),
        &["--figure", fig.to_str().unwrap()],
    );
    assert!(out.status.success());
    let table = std::fs::read_to_string(&fig).unwrap();
    let last = table.lines().last().unwrap();
    assert!(last.contains(",100.0,") && last.ends_with(",1.0"), "{last}");
}

#[test]
fn csv_matches_library_output() {
    let spec = parse_config(&small(r#""sweep": {"eta2": [0.1, 0.3]}"#), None).unwrap();
    let rows = run_sweep(&spec, RunOptions::default()).unwrap();
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &small(r#""sweep": {"eta2": [0.1, 0.3]}"#), &[]).status.success());
    assert_eq!(buf, std::fs::read(dir.path().join("out.csv")).unwrap());
}

#[test]
fn exact_lower_rows_have_no_interval() {
    let spec = parse_config(&small(r#""lower_method": "exact", "bounds": "lower", "sweep": {"d": [2, 20]}"#), None).unwrap();
    let rows = run_sweep(&spec, RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.ci_halfwidth == 0.0 && r.samples == 0));
    assert!(rows[0].rate_bits_per_symbol <= rows[1].rate_bits_per_symbol);
}
