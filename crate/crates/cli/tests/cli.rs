use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cfik(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfik"))
        .current_dir(dir)
        .env("CFIK_THREADS", "1")
        .args(args)
        .output()
        .expect("cfik runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = cfik(dir, args);
    assert!(
        out.status.success(),
        "cfik {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const TINY: &str = "schema_version = 1\n[train]\nsteps = 20\nbatch_size = 16\nn_bps = 8\nlog_every = 10\n[train.net]\ntrunk = [16]\nhead = [8]\n";

/// Worlds, a tiny config and a network trained for flat_arm5.
fn trained(dir: &Path) {
    fs::write(dir.join("tiny.toml"), TINY).unwrap();
    ok(dir, &["gen-worlds", "--n", "2", "--seed", "3", "--out", "w"]);
    ok(dir, &["train", "--robot", "flat_arm5", "--worlds", "w", "--config", "tiny.toml", "--out", "n"]);
}

#[test]
fn one_world_and_one_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen-worlds", "--n", "1", "--seed", "0", "--out", "a"]);
    let mut files: Vec<String> = fs::read_dir(tmp.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["manifest.json", "world_000000.vox"]);
    let m = manifest(&tmp.path().join("a"));
    assert_eq!(m["subcommand"], "gen-worlds");
    assert_eq!(m["world_set"]["seeds"], serde_json::json!([0]));
}

#[test]
fn rerunning_gen_worlds_gives_identical_digests() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen-worlds", "--n", "3", "--seed", "9", "--out", "a"]);
    ok(tmp.path(), &["gen-worlds", "--n", "3", "--seed", "9", "--out", "b"]);
    let (a, b) = (manifest(&tmp.path().join("a")), manifest(&tmp.path().join("b")));
    assert_eq!(a["outputs"], b["outputs"]);
    assert_eq!(a["world_set"]["digests"], b["world_set"]["digests"]);
    ok(tmp.path(), &["replay", "a/manifest.json", "--out", "c"]);
    assert_eq!(a["outputs"], manifest(&tmp.path().join("c"))["outputs"]);
}

#[test]
fn output_directory_is_not_reused() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen-worlds", "--out", "a"]);
    assert!(!cfik(tmp.path(), &["gen-worlds", "--out", "a"]).status.success());
}

#[test]
fn solve_refuses_a_network_for_another_robot() {
    let tmp = tempfile::tempdir().unwrap();
    trained(tmp.path());
    let out = cfik(
        tmp.path(),
        &["solve", "--robot", "flat_arm3", "--world", "w/world_000003.vox", "--net", "n/net.bin", "--target", "0.3,0.2,0.0"],
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("mismatch"), "{err}");
}

#[test]
fn solve_prints_the_result() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen-worlds", "--n", "1", "--seed", "3", "--out", "w"]);
    let out = ok(
        tmp.path(),
        &["solve", "--robot", "flat_arm5", "--world", "w/world_000003.vox", "--target", "0.5,0.3,0.6", "--mode", "random50"],
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["q", "feasible", "pos_error", "rot_error", "iterations", "wall_ms"] {
        assert!(v.get(key).is_some(), "missing {key}: {v}");
    }
    assert_eq!(v["q"].as_array().unwrap().len(), 5);
    if v["feasible"].as_bool().unwrap() {
        assert!(v["pos_error"].as_f64().unwrap() <= 1e-4);
    }
}

#[test]
fn bench_reports_one_row_per_mode() {
    let tmp = tempfile::tempdir().unwrap();
    trained(tmp.path());
    ok(
        tmp.path(),
        &[
            "bench", "--robot", "flat_arm5", "--worlds", "w", "--net", "n/net.bin", "--modes", "random1,net1", "--n-per-world", "10",
            "--out", "b",
        ],
    );
    let csv = fs::read_to_string(tmp.path().join("b/report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "{csv}");
    assert!(rows[0].starts_with("random1,") && rows[1].starts_with("net1,"));
    let report: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("b/report.json")).unwrap()).unwrap();
    assert_eq!(report["modes"].as_array().unwrap().len(), 2);
}

#[test]
fn bench_needs_the_networks_its_modes_name() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen-worlds", "--n", "1", "--out", "w"]);
    let out = cfik(tmp.path(), &["bench", "--robot", "flat_arm5", "--worlds", "w", "--modes", "net1", "--out", "b"]);
    assert!(!out.status.success());
}

#[test]
fn training_replays_bit_identically() {
    let tmp = tempfile::tempdir().unwrap();
    trained(tmp.path());
    ok(tmp.path(), &["replay", "n/manifest.json", "--out", "n2"]);
    assert_eq!(fs::read(tmp.path().join("n/net.bin")).unwrap(), fs::read(tmp.path().join("n2/net.bin")).unwrap());
    let m = manifest(&tmp.path().join("n"));
    assert_eq!(m["config"]["train"]["steps"], 20);
    assert!(m["inputs"].as_array().unwrap().iter().any(|i| i["path"] == "tiny.toml"));
}

#[test]
fn robot_files_work_like_presets() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("arm.toml"), cfik::presets::flat_arm3().to_toml_string()).unwrap();
    ok(tmp.path(), &["gen-worlds", "--n", "1", "--out", "w"]);
    let solve = |robot: &str| {
        let out = ok(
            tmp.path(),
            &["solve", "--robot", robot, "--world", "w/world_000000.vox", "--target", "0.4,0.2,0.3", "--seed", "4"],
        );
        let mut v: Value = serde_json::from_slice(&out.stdout).unwrap();
        v.as_object_mut().unwrap().remove("wall_ms");
        v
    };
    assert_eq!(solve("arm.toml"), solve("flat_arm3"));
}

#[test]
fn maps_write_images_and_arrays() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("maps.toml"),
        "schema_version = 1\n[maps]\nresolution = 16\nn_orientation_bins = 8\nsampling = { random = { n = 20000, seed = 0 } }\n",
    )
    .unwrap();
    ok(tmp.path(), &["gen-worlds", "--n", "1", "--out", "w"]);
    ok(
        tmp.path(),
        &["maps", "--robot", "flat_arm3", "--world", "w/world_000000.vox", "--config", "maps.toml", "--out", "m"],
    );
    let pgm = fs::read(tmp.path().join("m/feasible.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5"));
    let csv = fs::read_to_string(tmp.path().join("m/map.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 16 * 16);
    assert!(!cfik(
        tmp.path(),
        &["maps", "--robot", "spatial_arm7", "--world", "w/world_000000.vox", "--out", "m3"]
    )
    .status
    .success());
}
