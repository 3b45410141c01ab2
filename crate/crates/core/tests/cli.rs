use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hemisplat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hemisplat"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> serde_json::Value {
    let out = hemisplat(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("verbs print JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_scene(dir: &Path) {
    ok(&["gen-toy", "--out", p(dir), "--points", "2000", "--tests", "2", "--size", "32", "--seed", "3"]);
}

#[test]
fn every_verb_runs_end_to_end() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene);

    let info = ok(&["ingest", "--scene", p(&scene)]);
    assert_eq!(info["references"], 4);
    assert_eq!(info["tests"], 2);

    let poses = t.path().join("poses.json");
    let s = ok(&["sample-views", "--scene", p(&scene), "--levels", "5", "--tau", "0.8", "--out", p(&poses)]);
    assert_eq!(s["poses"], 50);
    let records: serde_json::Value = serde_json::from_slice(&fs::read(&poses).unwrap()).unwrap();
    assert_eq!(records[0]["level"], 1);
    assert!(records[49]["theta"].is_number() && records[49]["phi"].is_number());

    let raw = t.path().join("raw");
    ok(&["render-pointcloud", "--ply", p(&scene.join("cloud.ply")), "--poses", p(&poses), "--out", p(&raw)]);
    assert!(raw.join("view_0049.png").is_file() && raw.join("view_0049_mask.png").is_file());

    let enhanced = t.path().join("enhanced");
    let e = ok(&["enhance", "--input", p(&raw), "--out", p(&enhanced), "--template", "cp {input} {output}"]);
    assert_eq!(e["images"], 50);

    let model = t.path().join("model.hsgs");
    let tr = ok(&[
        "train", "--scene", p(&scene), "--synthetic", p(&enhanced), "--iters", "20", "--seed", "7", "--out", p(&model),
    ]);
    assert_eq!(tr["synthetic_views"], 50);
    assert_eq!(&fs::read(&model).unwrap()[..4], b"HSGS");

    let renders = t.path().join("renders");
    ok(&["render", "--model", p(&model), "--poses", p(&scene.join("test_poses.json")), "--out", p(&renders)]);
    let report = t.path().join("report.json");
    let m = ok(&["evaluate", "--rendered", p(&renders), "--truth", p(&scene.join("test")), "--out", p(&report)]);
    assert!(m["psnr"].as_f64().unwrap() > 0.0);
    let r: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["views"].as_array().unwrap().len(), 2);
    assert_eq!(r["perceptual_impl"], "proxy");
}

#[test]
fn trajectory_sampling_from_a_pose_file() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene);
    let out = t.path().join("traj.json");
    let s = ok(&[
        "sample-views", "--refs", p(&scene.join("ref_poses.json")), "--strategy", "trajectory", "--count", "12", "--out", p(&out),
    ]);
    assert_eq!(s["poses"], 12);
}

#[test]
fn run_and_ablate_with_a_config_file() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene);
    let cfg = t.path().join("cfg.json");
    fs::write(&cfg, r#"{"train": {"iterations": 2}, "init_points": 300}"#).unwrap();
    let r = ok(&["--config", p(&cfg), "run", "--scene", p(&scene), "--out", p(&t.path().join("run"))]);
    assert_eq!(r["synthetic_views"], 50);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(t.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["train"]["iterations"], 2);

    let a = ok(&["--config", p(&cfg), "--deterministic", "ablate", "--scene", p(&scene), "--out", p(&t.path().join("abl"))]);
    assert_eq!(a["rows"].as_array().unwrap().len(), 4);
    assert_eq!(a["strategies"].as_array().unwrap().len(), 2);
}

#[test]
fn validation_errors_exit_with_two() {
    let t = tempfile::tempdir().unwrap();
    let out = hemisplat(&["ingest", "--scene", p(&t.path().join("nope"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing file"));

    let cfg = t.path().join("bad.json");
    fs::write(&cfg, r#"{"enhance": "upscale {input}"}"#).unwrap();
    let out = hemisplat(&["--config", p(&cfg), "ingest", "--scene", "."]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(&cfg, r#"{"iterations": 3}"#).unwrap();
    let out = hemisplat(&["--config", p(&cfg), "ingest", "--scene", "."]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(hemisplat(&["no-such-verb"]).status.code(), Some(2));
    assert_eq!(hemisplat(&["sample-views", "--out", "x.json"]).status.code(), Some(2));
}

#[test]
fn stage_failures_exit_with_three() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene);
    let cfg = t.path().join("cfg.json");
    fs::write(&cfg, r#"{"train": {"iterations": 0}, "enhance": "exit 1 # {input} {output}"}"#).unwrap();
    let out = hemisplat(&["--config", p(&cfg), "run", "--scene", p(&scene), "--out", p(&t.path().join("run"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("enhance"));
}
