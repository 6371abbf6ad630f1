use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ntn_doppler(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ntn-doppler"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("campaign.json");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn check_fills_in_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"trials": 7}"#);
    let out = ntn_doppler(&["check", "--config", &config]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["trials"], 7);
    assert_eq!(printed["ofdm"]["dft_size"], 256);
    assert_eq!(printed["bursts_per_estimate"], 128);
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for body in [r#"{"trials": 0}"#, r#"{"no_such_field": 1}"#, "not json"] {
        let config = write_config(dir.path(), body);
        let out = ntn_doppler(&["check", "--config", &config]);
        assert_eq!(out.status.code(), Some(1), "config {body}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
    let missing = dir.path().join("missing.json").display().to_string();
    assert_eq!(
        ntn_doppler(&["check", "--config", &missing]).status.code(),
        Some(1)
    );
}

#[test]
fn unwritable_output_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"trials": 1, "bursts_per_estimate": 1}"#);
    let out = ntn_doppler(&[
        "sweep",
        "--axis",
        "snr",
        "--config",
        &config,
        "--out",
        "/nonexistent-dir/out.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"trials": 3, "bursts_per_estimate": 2, "snr_sweep_db": [0, 10]}"#,
    );
    let mut csvs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let csv = dir.path().join(name);
        let out = ntn_doppler(&[
            "sweep",
            "--axis",
            "snr",
            "--config",
            &config,
            "--seed",
            "42",
            "--out",
            &csv.display().to_string(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let table = String::from_utf8(out.stdout).unwrap();
        assert_eq!(table.lines().count(), 3, "{table}");
        csvs.push(fs::read_to_string(csv).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);

    let (quantiles, summary) = csvs[0].split_once("\n\n").unwrap();
    // Twenty quantile levels for each of the two cells, plus the header.
    assert_eq!(quantiles.lines().count(), 1 + 2 * 20);
    let rows: Vec<_> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0,288000000,3,"));
    assert!(rows[1].starts_with("10,288000000,3,"));
}

#[test]
fn run_covers_the_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("grid.csv");
    let config = write_config(
        dir.path(),
        &format!(
            r#"{{"trials": 1, "bursts_per_estimate": 1, "snr_sweep_db": [5],
                "separations_hz": [288e6, 576e6, 864e6], "output_path": "{}"}}"#,
            csv.display()
        ),
    );
    let out = ntn_doppler(&["run", "--config", &config]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(csv).unwrap();
    let summary = text.split_once("\n\n").unwrap().1;
    assert_eq!(summary.lines().count(), 1 + 3);
}

#[test]
fn shipped_config_matches_the_defaults() {
    let shipped = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json");
    let dir = tempfile::tempdir().unwrap();
    let empty = write_config(dir.path(), "{}");
    let a = ntn_doppler(&["check", "--config", shipped]);
    let b = ntn_doppler(&["check", "--config", &empty]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}
