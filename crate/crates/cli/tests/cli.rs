use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn privhvac(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privhvac"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = privhvac(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: &str = r#"{"world": {"kind": "synthetic", "occupants": 2, "zones": 2},
 "sweep": {"eval_steps": 90, "runs": 2, "count": 3}}"#;

#[test]
fn learn_reproduces_hand_counted_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let traces = fixture("tiny_traces.csv");
    ok(
        dir.path(),
        &[
            "learn",
            "--traces",
            traces.to_str().unwrap(),
            "--zones",
            "outside,z1,z2",
            "--out",
            "m.json",
        ],
    );
    let m = json(&dir.path().join("m.json"));
    let expected = [
        [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [1.0, 0.0, 0.0]],
        [
            [0.0, 1.0, 0.0],
            [0.25, 0.75, 0.0],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        ],
    ];
    assert_eq!(m["occupants"], serde_json::json!(["alice", "bob"]));
    for (c, want) in expected.iter().enumerate() {
        for (i, row) in want.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                let got = m["chains"][c][i][j].as_f64().unwrap();
                assert!(
                    (got - p).abs() < 1e-15,
                    "chain {c} [{i}][{j}] = {got}, want {p}"
                );
            }
        }
    }
}

#[test]
fn design_with_huge_delta_is_independent() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), SMALL).unwrap();
    ok(
        dir.path(),
        &["design", "--config", "c.json", "--delta", "1e6"],
    );
    let report = json(&dir.path().join("out/design_report.json"));
    let zones = report.as_array().unwrap();
    assert_eq!(zones.len(), 2);
    for z in zones {
        assert!(z["feasible"].as_bool().unwrap());
        assert!(z["mi_bits"].as_f64().unwrap() <= 1e-3);
    }
    let rows = fs::read_to_string(dir.path().join("out/distortion_zone1.csv")).unwrap();
    assert!(rows.starts_with("y,p_0,p_1,p_2\n"));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = privhvac(dir.path(), &["frobnicate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_required_flag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = privhvac(dir.path(), &["synth", "--occupants", "3"]);
    assert!(!out.status.success());
}

#[test]
fn failures_are_one_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), "{\n  \"params\": {\"C\": -1}\n}").unwrap();
    for args in [
        &["design", "--config", "c.json"][..],
        &["design", "--config", "absent.json"][..],
    ] {
        let out = privhvac(dir.path(), args);
        assert_eq!(out.status.code(), Some(1));
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("error: "), "{err}");
    }
}

#[test]
fn results_go_to_files_not_stdout() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), SMALL).unwrap();
    let out = privhvac(dir.path(), &["simulate", "--config", "c.json"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.json"), SMALL).unwrap();
    for out in ["a", "b"] {
        ok(
            d,
            &[
                "--seed", "5", "simulate", "--config", "c.json", "--out", out,
            ],
        );
        ok(
            d,
            &[
                "--seed", "5", "tradeoff", "--config", "c.json", "--out", out,
            ],
        );
        ok(
            d,
            &["--seed", "5", "compare", "--config", "c.json", "--out", out],
        );
        let reported = format!("{out}/reported.csv");
        ok(
            d,
            &[
                "--seed",
                "5",
                "attack",
                "--config",
                "c.json",
                "--out",
                out,
                "--reported",
                &reported,
            ],
        );
    }
    let a = files(&d.join("a"));
    assert!(a.iter().any(|(n, _)| n == "tradeoff.csv"));
    assert!(a.iter().any(|(n, _)| n == "schemes.csv"));
    assert_eq!(a, files(&d.join("b")));

    ok(
        d,
        &[
            "--seed", "6", "simulate", "--config", "c.json", "--out", "c",
        ],
    );
    assert_ne!(
        fs::read(d.join("a/occupancy.csv")).unwrap(),
        fs::read(d.join("c/occupancy.csv")).unwrap()
    );
}

#[test]
fn attack_scores_against_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let traces = fixture("tiny_traces.csv");
    let t = traces.to_str().unwrap();
    ok(
        d,
        &[
            "learn",
            "--traces",
            t,
            "--zones",
            "outside,z1,z2",
            "--smoothing",
            "0.1",
            "--out",
            "m.json",
        ],
    );
    fs::write(
        d.join("c.json"),
        r#"{"world": {"kind": "model", "path": "m.json"}}"#,
    )
    .unwrap();
    fs::write(
        d.join("occ.csv"),
        "step,zone_0,zone_1,zone_2\n0,1,1,0\n1,1,1,0\n2,0,2,0\n3,1,1,0\n4,0,1,1\n5,1,1,0\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "attack",
            "--config",
            "c.json",
            "--reported",
            "occ.csv",
            "--truth",
            t,
        ],
    );
    let acc = json(&d.join("out/attack.json"))["accuracy"]
        .as_f64()
        .unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(d.join("out/predicted_traces.csv").is_file());
}

#[test]
fn synth_scales_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let traces = fixture("tiny_traces.csv");
    ok(
        d,
        &[
            "learn",
            "--traces",
            traces.to_str().unwrap(),
            "--out",
            "m.json",
        ],
    );
    ok(
        d,
        &[
            "synth",
            "--model",
            "m.json",
            "--occupants",
            "7",
            "--out",
            "big.json",
        ],
    );
    let m = json(&d.join("big.json"));
    assert_eq!(m["occupants"].as_array().unwrap().len(), 7);
}
