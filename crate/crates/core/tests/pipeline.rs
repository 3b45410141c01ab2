use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hemisplat::camera::read_pose_file;
use hemisplat::metrics::MetricReport;
use hemisplat::pipeline::*;
use hemisplat::Error;

fn small_spec(seed: u64) -> ToySceneSpec {
    ToySceneSpec {
        seed,
        points: 2000,
        tests: 2,
        width: 48,
        height: 48,
        focal: 40.0,
        ..Default::default()
    }
}

fn quick_config(iterations: usize) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.train.iterations = iterations;
    c.init_points = Some(400);
    c
}

fn scene(dir: &Path, seed: u64) -> PathBuf {
    let root = dir.join("scene");
    generate_toy_scene(&small_spec(seed), &root).unwrap();
    root
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn toy_scene_ingests_with_four_references() {
    let t = tempfile::tempdir().unwrap();
    let root = scene(t.path(), 1);
    let b = ingest_scene(&root).unwrap();
    assert_eq!(b.references.len(), 4);
    assert_eq!(b.tests.as_ref().unwrap().len(), 2);
    assert_eq!(b.references.names[0], "view_000.png");
}

#[test]
fn toy_scene_is_bit_identical_per_seed() {
    let t = tempfile::tempdir().unwrap();
    generate_toy_scene(&small_spec(7), t.path().join("a")).unwrap();
    generate_toy_scene(&small_spec(7), t.path().join("b")).unwrap();
    generate_toy_scene(&small_spec(8), t.path().join("c")).unwrap();
    let (a, b, c) = (tree(&t.path().join("a")), tree(&t.path().join("b")), tree(&t.path().join("c")));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn default_toy_truth_is_nearly_fully_covered() {
    let t = tempfile::tempdir().unwrap();
    let spec = ToySceneSpec {
        seed: 3,
        ..Default::default()
    };
    let out = generate_toy_scene(&spec, t.path()).unwrap();
    for c in out.reference_coverage.iter().chain(&out.test_coverage) {
        assert!(*c >= 0.95, "coverage {c}");
    }
    let refs = read_pose_file(t.path().join(REF_POSES_FILE)).unwrap();
    let az: Vec<f64> = refs
        .iter()
        .map(|p| p.position().y.atan2(p.position().x).to_degrees().rem_euclid(360.0))
        .collect();
    for (a, want) in az.iter().zip([0.0, 90.0, 180.0, 270.0]) {
        assert!((a - want).abs() < 1e-9 || (a - want - 360.0).abs() < 1e-9, "{az:?}");
    }
}

#[test]
fn missing_cloud_is_reported_by_name() {
    let t = tempfile::tempdir().unwrap();
    let root = scene(t.path(), 1);
    fs::remove_file(root.join(CLOUD_FILE)).unwrap();
    match ingest_scene(&root) {
        Err(Error::MissingFile(p)) => assert!(p.ends_with(CLOUD_FILE)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn image_and_pose_counts_must_agree() {
    let t = tempfile::tempdir().unwrap();
    let root = scene(t.path(), 1);
    fs::remove_file(root.join(REF_DIR).join(view_file_name(3))).unwrap();
    let err = ingest_scene(&root).unwrap_err();
    assert!(matches!(err, Error::ShapeMismatch(_)), "{err}");
    assert!(err.is_validation());
}

#[test]
fn image_size_must_match_its_pose() {
    let t = tempfile::tempdir().unwrap();
    let root = scene(t.path(), 1);
    hemisplat::image::ImageRgb::new(10, 10)
        .save_png(root.join(REF_DIR).join(view_file_name(0)))
        .unwrap();
    assert!(matches!(ingest_scene(&root), Err(Error::DimensionMismatch(_))));
}

#[test]
fn default_sampler_puts_fifty_synthetic_views_on_disk() {
    let t = tempfile::tempdir().unwrap();
    let root = scene(t.path(), 2);
    let s = run_pipeline(&root, &quick_config(0), &t.path().join("out"), &RunOptions::default()).unwrap();
    let dir = s.synthetic_dir.unwrap();
    assert_eq!(list_views(&dir).unwrap().len(), 50);
    assert_eq!(read_pose_file(dir.join(POSES_FILE)).unwrap().len(), 50);
    assert_eq!(s.train.synthetic_views, 50);
}

#[test]
fn zero_iterations_scores_the_initial_model() {
    let t = tempfile::tempdir().unwrap();
    let root = scene(t.path(), 2);
    let out = t.path().join("out");
    let s = run_pipeline(&root, &quick_config(0), &out, &RunOptions::default()).unwrap();
    assert!(s.held_out);
    assert_eq!(s.train.initial_objective, s.train.final_objective);
    assert!(s.train.losses.is_empty());
    assert_eq!(MetricReport::read(out.join(REPORT_FILE)).unwrap(), s.report);
    assert_eq!(s.report.views.len(), 2);
    assert_eq!(s.report.perceptual_impl, "proxy");
    // The run's report is what the stand-alone evaluation of its renders gives.
    let again = evaluate_dirs(&out.join(RENDER_DIR), &root.join(TEST_DIR)).unwrap();
    assert_eq!(again, s.report);
}

#[test]
fn repeated_runs_are_byte_identical_and_reuse_every_stage() {
    let t = tempfile::tempdir().unwrap();
    let root = scene(t.path(), 3);
    let cfg = quick_config(15);
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    let sa = run_pipeline(&root, &cfg, &a, &RunOptions::default()).unwrap();
    run_pipeline(&root, &cfg, &b, &RunOptions::default()).unwrap();
    for f in [REPORT_FILE, MANIFEST_FILE, MODEL_FILE, TRAIN_LOG_FILE] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(sa.stages.iter().all(|(_, hit)| !hit));

    let before = tree(&a);
    let again = run_pipeline(&root, &cfg, &a, &RunOptions::default()).unwrap();
    assert!(again.stages.iter().all(|(_, hit)| *hit), "{:?}", again.stages);
    assert_eq!(tree(&a), before);
}

#[test]
fn changing_training_reuses_the_synthetic_stages() {
    let t = tempfile::tempdir().unwrap();
    let root = scene(t.path(), 3);
    let out = t.path().join("out");
    run_pipeline(&root, &quick_config(0), &out, &RunOptions::default()).unwrap();
    let s = run_pipeline(&root, &quick_config(2), &out, &RunOptions::default()).unwrap();
    let hits: BTreeMap<_, _> = s.stages.into_iter().collect();
    assert!(hits["sample"] && hits["render-pointcloud"] && hits["enhance"]);
    assert!(!hits["train"] && !hits["render"]);
}

fn leaves(v: &serde_json::Value, path: String, out: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                leaves(x, format!("{path}/{k}"), out);
            }
        }
        serde_json::Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                leaves(x, format!("{path}/{i}"), out);
            }
        }
        _ => out.push(path),
    }
}

fn mutate(v: &serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Null => Value::from(0.5),
        Value::Bool(b) => Value::Bool(!b),
        Value::Number(n) if n.is_u64() => Value::from(n.as_u64().unwrap() + 1),
        Value::Number(n) => Value::from(n.as_f64().unwrap() * 0.5 + 0.125),
        Value::String(s) => Value::String(format!("{s}x")),
        other => other.clone(),
    }
}

#[test]
fn manifest_records_every_config_value() {
    let t = tempfile::tempdir().unwrap();
    let root = scene(t.path(), 4);
    let out = t.path().join("out");
    let cfg = quick_config(0);
    run_pipeline(&root, &cfg, &out, &RunOptions::default()).unwrap();
    let written: serde_json::Value = serde_json::from_slice(&fs::read(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    let digest = SceneDigest::of(&root).unwrap();
    let stages = written["stages"].as_object().unwrap().clone();
    assert_eq!(written, manifest(&cfg, &digest, &stages, true));

    let base = serde_json::to_value(&cfg).unwrap();
    let mut paths = Vec::new();
    leaves(&base, String::new(), &mut paths);
    assert!(paths.len() > 25, "{paths:?}");
    for p in &paths {
        let mut changed = base.clone();
        let slot = changed.pointer_mut(p).unwrap();
        *slot = mutate(slot);
        // Only mutations that still parse are configurations at all.
        let Ok(c2) = serde_json::from_value::<PipelineConfig>(changed) else {
            continue;
        };
        assert_ne!(c2, cfg, "{p}");
        assert_ne!(manifest(&c2, &digest, &stages, true), written, "{p}");
    }
    let text = fs::read_to_string(out.join(MANIFEST_FILE)).unwrap();
    assert!(!text.contains(t.path().to_str().unwrap()), "manifest must not hold paths");
}

#[test]
fn copy_enhancer_trains_like_the_identity() {
    let t = tempfile::tempdir().unwrap();
    let root = scene(t.path(), 5);
    let plain = quick_config(0);
    let hooked = PipelineConfig {
        enhance: Some("cp {input} {output}".into()),
        ..plain.clone()
    };
    let a = run_pipeline(&root, &plain, &t.path().join("a"), &RunOptions::default()).unwrap();
    let b = run_pipeline(&root, &hooked, &t.path().join("b"), &RunOptions::default()).unwrap();
    let da = a.synthetic_dir.unwrap();
    let db = b.synthetic_dir.unwrap();
    for f in list_views(&da).unwrap() {
        let name = f.file_name().unwrap();
        assert_eq!(fs::read(&f).unwrap(), fs::read(db.join(name)).unwrap());
    }
    assert_eq!(a.report, b.report);
}

#[test]
fn failing_enhancer_names_its_stage() {
    let t = tempfile::tempdir().unwrap();
    let root = scene(t.path(), 5);
    let cfg = PipelineConfig {
        enhance: Some("echo no gpu >&2; false {input} {output}".into()),
        ..quick_config(0)
    };
    let err = run_pipeline(&root, &cfg, &t.path().join("out"), &RunOptions::default()).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("enhance"), "{text}");
    assert!(!err.is_validation());
    let source = std::error::Error::source(&err).unwrap().to_string();
    assert!(source.contains("no gpu"), "{source}");
}

#[test]
fn trajectory_strategy_matches_the_hemisphere_count() {
    let t = tempfile::tempdir().unwrap();
    let root = scene(t.path(), 6);
    let cfg = PipelineConfig {
        strategy: Strategy::Trajectory,
        ..quick_config(0)
    };
    let s = run_pipeline(&root, &cfg, &t.path().join("out"), &RunOptions::default()).unwrap();
    assert_eq!(s.train.synthetic_views, 50);
}

#[test]
fn ablation_report_has_the_table_shape() {
    let t = tempfile::tempdir().unwrap();
    let root = scene(t.path(), 6);
    let out = t.path().join("abl");
    let r = run_ablation(&root, &quick_config(3), &out).unwrap();
    let ids: Vec<&str> = r.rows.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c", "d"]);
    assert_eq!(r.row("a").unwrap().synthetic_views, 0);
    for s in [Strategy::Hemisphere, Strategy::Trajectory] {
        assert_eq!(r.strategy(s).unwrap().synthetic_views, 50);
    }
    assert_eq!(r.row("d").unwrap().metrics, r.row("c").unwrap().metrics);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(out.join(ABLATION_FILE)).unwrap()).unwrap();
    for row in json["rows"].as_array().unwrap() {
        let m = row["metrics"].as_object().unwrap();
        let mut keys: Vec<&str> = m.keys().map(|k| k.as_str()).collect();
        keys.sort();
        assert_eq!(keys, ["perceptual", "psnr", "ssim"]);
    }

    // Row (a) does not depend on any synthetic-view setting.
    let mut other = quick_config(3);
    other.sampler.tau = 0.5;
    other.sampler.levels = 3;
    other.render.splat_radius = 2;
    other.enhance = Some("cp {input} {output}".into());
    let r2 = run_ablation(&root, &other, &t.path().join("abl2")).unwrap();
    assert_eq!(r2.row("a"), r.row("a"));
    assert_ne!(r2.row("b").unwrap().synthetic_views, 50);
}
