use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_breakfront"))
}

fn run(dir: &Path, out: &str, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, out: &str, args: &[&str]) -> String {
    let o = run(dir, out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn csv_rows(path: PathBuf) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

/// Temp dir holding the reference distribution at `ref/reference_dgp.json`.
fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), "ref", &["reference"]);
    dir
}

const DIST: &str = "ref/reference_dgp.json";

#[test]
fn late_point_identified_at_origin() {
    let dir = workspace();
    ok(
        dir.path(),
        "b",
        &[
            "bounds", "--dist", DIST, "--target", "late", "--c", "0", "--pi", "0",
        ],
    );
    let rows = csv_rows(dir.path().join("b/bounds.csv"));
    assert_eq!(rows.len(), 1);
    let lo: f64 = rows[0][2].parse().unwrap();
    let hi: f64 = rows[0][3].parse().unwrap();
    assert!((lo - 0.5).abs() < 1e-12 && (hi - 0.5).abs() < 1e-12);
}

#[test]
fn late_lower_bound_crosses_zero_just_below_one_tenth() {
    let dir = workspace();
    ok(
        dir.path(),
        "b",
        &[
            "bounds",
            "--dist",
            DIST,
            "--target",
            "late",
            "--c",
            "grid(0,0.3,100)",
            "--pi",
            "0.1",
        ],
    );
    let rows = csv_rows(dir.path().join("b/bounds.csv"));
    assert_eq!(rows.len(), 100);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[2].parse().unwrap()))
        .collect();
    let first_negative = pts.iter().find(|(_, lo)| *lo < 0.0).unwrap().0;
    let last_positive = pts.iter().rev().find(|(_, lo)| *lo > 0.0).unwrap().0;
    assert!(last_positive < first_negative);
    assert!((0.09..=0.1).contains(&last_positive), "{last_positive}");
    assert!((0.09..=0.11).contains(&first_negative), "{first_negative}");
}

#[test]
fn missing_column_is_a_usage_error() {
    let dir = workspace();
    ok(dir.path(), "s", &["sample", "--N", "200", "--seed", "1"]);
    let o = run(
        dir.path(),
        "b",
        &[
            "bounds",
            "--input",
            "s/data.csv",
            "--y",
            "earnings",
            "--target",
            "itt",
            "--c",
            "0",
            "--pi",
            "0",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("earnings"));
}

#[test]
fn malformed_input_is_a_data_error() {
    let dir = workspace();
    std::fs::write(dir.path().join("bad.csv"), "y,d,z\n1,0,2\n").unwrap();
    let o = run(
        dir.path(),
        "b",
        &[
            "bounds", "--input", "bad.csv", "--target", "itt", "--c", "0", "--pi", "0",
        ],
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn frontier_reference_values() {
    let dir = workspace();
    let out = ok(
        dir.path(),
        "f0",
        &["frontier", "--dist", DIST, "--target", "late", "--mu", "0"],
    );
    assert!(out.contains("BF(0) = 0.25"), "{out}");
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("f0/frontier.json")).unwrap(),
    )
    .unwrap();
    let root = json["summary"]["root"].as_f64().unwrap();
    assert!((root - 0.15).abs() < 1e-6);
    assert_eq!(json["curve"]["grid"].as_array().unwrap().len(), 100);

    ok(
        dir.path(),
        "f1",
        &[
            "frontier", "--dist", DIST, "--target", "late", "--mu", "0.25",
        ],
    );
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("f1/frontier.json")).unwrap(),
    )
    .unwrap();
    assert!((json["summary"]["bf_at_zero"].as_f64().unwrap() - 0.10).abs() < 1e-10);
    assert!((json["summary"]["root"].as_f64().unwrap() - 0.0632).abs() < 1e-3);
}

#[test]
fn grid_beyond_regime_cap_exits_numeric() {
    let dir = workspace();
    let o = run(
        dir.path(),
        "f",
        &[
            "frontier",
            "--dist",
            DIST,
            "--target",
            "itt",
            "--mu",
            "0",
            "--grid",
            "grid(0,0.5,11)",
        ],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("0.4"));
    ok(
        dir.path(),
        "f2",
        &[
            "frontier",
            "--dist",
            DIST,
            "--target",
            "itt",
            "--mu",
            "0",
            "--grid",
            "grid(0,0.5,11)",
            "--any-regime",
        ],
    );
}

#[test]
fn band_lies_below_estimate() {
    let dir = workspace();
    ok(dir.path(), "s", &["sample", "--N", "1000", "--seed", "11"]);
    ok(
        dir.path(),
        "f",
        &[
            "frontier",
            "--input",
            "s/data.csv",
            "--covariates",
            "x",
            "--target",
            "late",
            "--mu",
            "0",
            "--band",
            "--B",
            "100",
            "--seed",
            "5",
        ],
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("f/frontier.json")).unwrap())
            .unwrap();
    assert!(json["summary"]["z_hat"].as_f64().unwrap() >= 0.0);
    for row in csv_rows(dir.path().join("f/frontier.csv")) {
        let bf: f64 = row[2].parse().unwrap();
        let lo: f64 = row[3].parse().unwrap();
        assert!(lo <= bf + 1e-15 && (0.0..=1.0).contains(&lo));
    }
}

#[test]
fn calibrate_recovers_constructed_imbalance() {
    let dir = TempDir::new().unwrap();
    // x2 shifts P(Z = 1) by 0.05 around 0.5 within each x1 stratum
    let mut csv = String::from("y,d,z,x1,x2\n");
    for x1 in 0..2 {
        for (x2, ones) in [(0, 55), (1, 45)] {
            for i in 0..100 {
                let z = u8::from(i < ones);
                csv.push_str(&format!("{},{},{z},{x1},{x2}\n", i % 2, (i / 2) % 2));
            }
        }
    }
    std::fs::write(dir.path().join("cal.csv"), csv).unwrap();
    ok(
        dir.path(),
        "c",
        &[
            "calibrate",
            "--input",
            "cal.csv",
            "--covariates",
            "x1,x2",
            "--pivot",
            "x2,x1",
        ],
    );
    let rows = csv_rows(dir.path().join("c/calibration.csv"));
    assert_eq!(rows[0][0], "x2");
    assert!((rows[0][1].parse::<f64>().unwrap() - 0.05).abs() < 1e-12);
    assert!(rows[1][1].parse::<f64>().unwrap().abs() < 1e-12);

    let o = run(
        dir.path(),
        "c2",
        &[
            "calibrate",
            "--input",
            "cal.csv",
            "--covariates",
            "x1,x2",
            "--pivot",
            "x3",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn calibrate_single_valued_column_names_it() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("one.csv"),
        "y,d,z,region\n1,1,1,a\n0,0,0,a\n1,0,1,a\n",
    )
    .unwrap();
    let o = run(
        dir.path(),
        "c",
        &[
            "calibrate",
            "--input",
            "one.csv",
            "--covariates",
            "region",
            "--pivot",
            "region",
        ],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("region"));
}

#[test]
fn oracle_verdicts() {
    let dir = workspace();
    // the reference cell cannot come from any latent model at (0, 0)
    ok(
        dir.path(),
        "o0",
        &["oracle", "--dist", DIST, "--target", "late"],
    );
    let rows = csv_rows(dir.path().join("o0/oracle.csv"));
    assert!(rows.iter().all(|r| r[8] == "infeasible"));

    ok(
        dir.path(),
        "o1",
        &[
            "oracle", "--dist", DIST, "--target", "late", "--c", "0.1", "--pi", "0",
        ],
    );
    let rows = csv_rows(dir.path().join("o1/oracle.csv"));
    assert!(rows.iter().all(|r| r[8] == "contained"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o1/oracle.json")).unwrap())
            .unwrap();
    assert!(json[0]["witness"].as_array().is_some_and(|w| w.len() == 16));

    ok(
        dir.path(),
        "o2",
        &[
            "oracle", "--dist", DIST, "--target", "late", "--c", "0", "--pi", "0.05",
        ],
    );
    let rows = csv_rows(dir.path().join("o2/oracle.csv"));
    assert!(rows
        .iter()
        .all(|r| r[8] != "violation" && r[8] != "infeasible"));
}

#[test]
fn small_conformance_sweep_passes() {
    let dir = TempDir::new().unwrap();
    let out = ok(
        dir.path(),
        "c",
        &["oracle", "--conformance", "20", "--seed", "9"],
    );
    assert!(out.contains("violations = 0"), "{out}");
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("c/conformance.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["summary"]["cases"], 20);
}

#[test]
fn simulate_is_seeded() {
    let dir = TempDir::new().unwrap();
    let args = [
        "simulate",
        "--N",
        "300",
        "--reps",
        "3",
        "--B",
        "20",
        "--grid",
        "grid(0,0.15,8)",
        "--seed",
        "4",
    ];
    ok(dir.path(), "a", &args);
    ok(dir.path(), "b", &args);
    let a = std::fs::read(dir.path().join("a/mc_report.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/mc_report.json")).unwrap();
    assert_eq!(a, b);
}

fn outputs_of(manifest: &Path) -> Vec<(String, String)> {
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    json["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| {
            (
                o["path"].as_str().unwrap().to_string(),
                o["sha256"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

fn assert_replays(dir: &Path, first: &str, args: &[&str]) {
    let o = bin()
        .current_dir(dir)
        .args(["--out-dir", first, "--jobs", "1"])
        .args(args)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = format!("{first}/manifest.json");
    let second = format!("{first}-replay");
    let o = bin()
        .current_dir(dir)
        .args(["--out-dir", &second, "--jobs", "3", "replay", &manifest])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = outputs_of(&dir.join(&manifest));
    let b = outputs_of(&dir.join(&second).join("manifest.json"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    for (name, _) in &a {
        assert_eq!(
            std::fs::read(dir.join(first).join(name)).unwrap(),
            std::fs::read(dir.join(&second).join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn replay_is_bitwise_and_independent_of_jobs() {
    let dir = workspace();
    let p = dir.path();
    ok(p, "s", &["sample", "--N", "800", "--seed", "2"]);
    assert_replays(
        p,
        "r-bounds",
        &[
            "bounds",
            "--dist",
            DIST,
            "--target",
            "ate",
            "--c",
            "grid(0,0.2,5)",
            "--pi",
            "grid(0,0.1,3)",
        ],
    );
    assert_replays(
        p,
        "r-band",
        &[
            "frontier",
            "--input",
            "s/data.csv",
            "--covariates",
            "x",
            "--target",
            "late",
            "--mu",
            "0",
            "--band",
            "--B",
            "60",
            "--seed",
            "1",
        ],
    );
    assert_replays(
        p,
        "r-sim",
        &[
            "simulate",
            "--N",
            "400",
            "--reps",
            "4",
            "--B",
            "15",
            "--grid",
            "grid(0,0.15,6)",
            "--seed",
            "3",
        ],
    );
    assert_replays(
        p,
        "r-oracle",
        &["oracle", "--conformance", "6", "--seed", "2"],
    );
    assert_replays(
        p,
        "r-cal",
        &[
            "calibrate",
            "--input",
            "s/data.csv",
            "--covariates",
            "x",
            "--pivot",
            "x",
        ],
    );
    assert_replays(p, "r-sample", &["sample", "--N", "50", "--seed", "8"]);
}

#[test]
fn replay_refuses_changed_inputs() {
    let dir = workspace();
    let p = dir.path();
    ok(p, "s", &["sample", "--N", "300", "--seed", "2"]);
    ok(
        p,
        "f",
        &[
            "bounds",
            "--input",
            "s/data.csv",
            "--target",
            "itt",
            "--c",
            "0",
            "--pi",
            "0",
        ],
    );
    ok(p, "s", &["sample", "--N", "300", "--seed", "3"]);
    let o = run(p, "g", &["replay", "f/manifest.json"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn every_command_writes_a_manifest() {
    let dir = workspace();
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("ref/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["command"], "reference");
    assert!(json["wall_time_secs"].as_f64().is_some());
    assert!(json["version"].as_str().is_some());
}
