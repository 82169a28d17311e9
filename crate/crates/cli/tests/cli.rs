use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use fml_core::cube::build_adic_system;
use fml_core::fatthin::survivor_mass;
use fml_core::measure::{MeasureTree, N0Policy};
use fml_core::report::parse_fat_thin_csv;
use fml_core::SpaceModel;

fn fml(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fml")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn build_measure_fat_thin_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = fml(d, &["build", "--space", "2d", "--bases", "odd:2n+1", "--depth", "4", "--lazy", "--out", "sys.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o =
        fml(d, &["measure", "--system", "sys.json", "--rho", "1.0", "--n0", "auto", "--depth", "4", "--out", "m.json"]);
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert!(m["conservation"]["max_relative_error"].as_f64().unwrap() < 1e-12);

    let o = fml(
        d,
        &["fat-thin", "--system", "sys.json", "--rho", "0", "--depth", "4", "--csv", "levels.csv", "--out", "ft.json"],
    );
    assert_eq!(code(&o), 0);
    let rows = parse_fat_thin_csv(&std::fs::read_to_string(d.join("levels.csv")).unwrap()).unwrap();
    let s = build_adic_system(SpaceModel::new(2).unwrap(), "odd:2n+1".parse().unwrap(), 4, true).unwrap();
    let t = MeasureTree::new(Arc::new(s), 0.0, N0Policy::Auto, 4, 1e-8).unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows {
        assert_eq!(r.survivor_mass, survivor_mass(&t, r.n).unwrap());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&fml(d, &["frobnicate"])), 1);
    assert_eq!(code(&fml(d, &["measure", "--space", "1d", "--bases", "7", "--depth", "2"])), 1);
    assert_eq!(code(&fml(d, &["validate", "--space", "1d", "--bases", "4", "--depth", "2"])), 1);
    assert_eq!(code(&fml(d, &["--help"])), 0);
    let o = fml(
        d,
        &[
            "measure",
            "--space",
            "1d",
            "--bases",
            "7",
            "--depth",
            "3",
            "--rho",
            "1",
            "--epsilon",
            "1e-30",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(code(&o), 2);
    let w: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("m.witness.json")).unwrap()).unwrap();
    assert_eq!(w["invariant"], "mass-conservation");
}

#[test]
fn validation_passes_and_pushforward_validates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&fml(
            d,
            &["validate", "--space", "1d", "--bases", "3", "--depth", "4", "--T", "2,4,8", "--out", "v.json"]
        )),
        0
    );
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("v.json")).unwrap()).unwrap();
    assert_eq!(v["fitted"]["c3"][2][1], 1.0);
    assert_eq!(
        code(&fml(
            d,
            &["pushforward", "--space", "1d", "--bases", "3", "--depth", "4", "--beta", "0.5", "--out", "p.json"]
        )),
        0
    );
    assert_eq!(code(&fml(d, &["validate", "--system", "p.json", "--T", "2,4"])), 0);
}

#[test]
fn outputs_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "--save-config",
        "cfg.json",
        "scan-doubling",
        "--space",
        "1d",
        "--bases",
        "7",
        "--depth",
        "6",
        "--lazy",
        "--rho",
        "-0.5",
        "--samples",
        "64",
        "--seed",
        "11",
        "--source",
        "survivors:3",
        "--csv",
        "a.csv",
        "--out",
        "a.json",
    ];
    assert_eq!(code(&fml(d, &args)), 0);
    let csv1 = std::fs::read(d.join("a.csv")).unwrap();
    let json1 = std::fs::read(d.join("a.json")).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fml"))
        .current_dir(d)
        .env("FML_THREADS", "1")
        .args(["run", "--config", "cfg.json"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(d.join("a.csv")).unwrap(), csv1);
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), json1);
    let header = String::from_utf8(csv1).unwrap();
    assert!(header.starts_with("x,r,nu_r,nu_2r,ratio\n"));
}

#[test]
fn distortion_and_restricted_scan() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&fml(d, &["distort", "--bases", "odd:2n+1", "--depth", "4", "--lazy", "--out", "d.json"])), 0);
    let o = fml(
        d,
        &["restrict-scan", "--system", "d.json", "--rho", "0", "--samples", "4", "--factor", "6", "--csv", "r.csv"],
    );
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(d.join("r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let o = fml(d, &["plumpness", "--system", "d.json", "--relocated", "--probe", "0,0,1", "--out", "p.json"]);
    assert_eq!(code(&o), 0);
    let p: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("p.json")).unwrap()).unwrap();
    assert!(p["probes"][0]["b"].as_f64().unwrap() >= 1.0 / 6.0 - 1e-12);
}
