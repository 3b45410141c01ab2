use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{PipelineConfig, Strategy};
use super::scene::{ingest_scene, list_views, SceneBundle, ViewSet, REF_DIR, REF_POSES_FILE, TEST_DIR, TEST_POSES_FILE};
use super::views::{enhance_images, load_synthetic_views, render_pointcloud_views, POSES_FILE};
use crate::camera::{estimate_scene_center, read_pose_file, CameraPose};
use crate::error::{Error, Result};
use crate::image::ImageRgb;
use crate::metrics::{evaluate, GradientPyramid, MetricReport, RgbLoss};
use crate::pointcloud::load_ply;
use crate::sampler::{level_counts, sample_poses, trajectory_sample, SampledPoseSet};
use crate::splat::{
    init_from_pointcloud, load_checkpoint, rasterize, save_checkpoint, train, GaussianCloud, RasterConfig, TrainView,
};

pub const MODEL_FILE: &str = "model.hsgs";
pub const TRAIN_LOG_FILE: &str = "train.json";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RENDER_DIR: &str = "renders";
pub const CACHE_DIR: &str = "cache";
const MANIFEST_FORMAT: u32 = 1;

/// Content-addressed store of stage outputs. Each entry is a directory named
/// after the stage and a digest of everything the stage reads.
#[derive(Clone, Debug)]
pub struct StageCache {
    root: PathBuf,
}

impl StageCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        StageCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// The entry for `key`, built by `build` into a scratch directory and
    /// moved into place only on success. Returns whether it was already present.
    pub fn entry(&self, stage: &str, key: &str, build: impl FnOnce(&Path) -> Result<()>) -> Result<(PathBuf, bool)> {
        let dir = self.root.join(format!("{stage}-{}", &key[..24]));
        if dir.is_dir() {
            return Ok((dir, true));
        }
        let tmp = self.root.join(format!(".{stage}-{}.partial", &key[..24]));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        if let Err(e) = build(&tmp) {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        fs::rename(&tmp, &dir).map_err(|e| Error::io(&dir, e))?;
        Ok((dir, false))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_of(value: &serde_json::Value) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("json serializes"))
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn files_digest(files: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    for f in files {
        h.update(file_digest(f)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

/// Digests of a scene's input files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneDigest {
    pub cloud: String,
    pub reference_poses: String,
    pub reference_images: String,
    pub test_poses: Option<String>,
    pub test_images: Option<String>,
}

impl SceneDigest {
    pub fn of(root: &Path) -> Result<Self> {
        let tests = root.join(TEST_POSES_FILE);
        let (test_poses, test_images) = if tests.is_file() {
            (Some(file_digest(&tests)?), Some(files_digest(&list_views(&root.join(TEST_DIR))?)?))
        } else {
            (None, None)
        };
        Ok(SceneDigest {
            cloud: file_digest(&root.join(super::scene::CLOUD_FILE))?,
            reference_poses: file_digest(&root.join(REF_POSES_FILE))?,
            reference_images: files_digest(&list_views(&root.join(REF_DIR))?)?,
            test_poses,
            test_images,
        })
    }
}

/// Synthetic camera placement for `config`.
pub fn synthetic_poses(config: &PipelineConfig, refs: &[CameraPose]) -> Result<SampledPoseSet> {
    let hemi = config.sampler.hemisphere();
    match config.strategy {
        Strategy::Hemisphere => sample_poses(&hemi, refs),
        Strategy::Trajectory => {
            let n = match config.trajectory_views {
                Some(n) => n,
                None => level_counts(&hemi)?.iter().sum(),
            };
            let center = match hemi.center {
                Some(c) => c,
                None => estimate_scene_center(refs)?,
            };
            trajectory_sample(refs, n, center)
        }
    }
}

/// Summary of a training run, written next to the checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub reference_views: usize,
    pub synthetic_views: usize,
    pub initial_gaussians: usize,
    pub final_gaussians: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Distance weight of each synthetic view.
    pub lambdas: Vec<f64>,
    /// Loss of the view drawn at each iteration; 0 for skipped views.
    pub losses: Vec<f64>,
}

impl TrainSummary {
    pub fn all_finite(&self) -> bool {
        self.losses.iter().all(|l| l.is_finite()) && self.initial_objective.is_finite() && self.final_objective.is_finite()
    }
}

/// Initializes from the scene's cloud and trains on its references plus,
/// when given, the synthetic views in `synthetic`.
pub fn train_model(
    bundle: &SceneBundle,
    synthetic: Option<&Path>,
    config: &PipelineConfig,
) -> Result<(GaussianCloud, TrainSummary)> {
    let pc = load_ply(&bundle.cloud_path)?;
    let init = init_from_pointcloud(&pc, config.init_points, config.train.seed, config.sh_degree)?;
    let initial_gaussians = init.len();
    let refs = bundle
        .references
        .images
        .iter()
        .zip(&bundle.references.poses)
        .map(|(img, pose)| TrainView::new(img.clone(), *pose, None))
        .collect::<Result<Vec<_>>>()?;
    let synths = match synthetic {
        Some(dir) => load_synthetic_views(dir)?
            .into_iter()
            .map(|v| TrainView::new(v.image, v.pose, v.mask))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let loss = RgbLoss::new(config.loss);
    let out = train(init, &refs, &synths, &loss, &config.train)?;
    let summary = TrainSummary {
        reference_views: refs.len(),
        synthetic_views: synths.len(),
        initial_gaussians,
        final_gaussians: out.cloud.len(),
        initial_objective: out.initial_objective,
        final_objective: out.final_objective,
        lambdas: out.lambdas,
        losses: out.losses,
    };
    Ok((out.cloud, summary))
}

/// Renders `cloud` at each pose into `out/<name>` as 8-bit PNG.
pub fn render_views(cloud: &GaussianCloud, poses: &[CameraPose], names: &[String], raster: &RasterConfig, out: &Path) -> Result<()> {
    if poses.len() != names.len() {
        return Err(Error::ShapeMismatch(format!("{} poses for {} names", poses.len(), names.len())));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (pose, name) in poses.iter().zip(names) {
        rasterize(cloud, pose, raster)?.rgb.save_png(out.join(name))?;
    }
    Ok(())
}

/// Scores the PNGs in `rendered` against same-named files in `truth`.
pub fn evaluate_dirs(rendered: &Path, truth: &Path) -> Result<MetricReport> {
    let files = list_views(truth)?;
    let mut ids = Vec::with_capacity(files.len());
    let mut a = Vec::with_capacity(files.len());
    let mut b = Vec::with_capacity(files.len());
    for f in &files {
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let r = rendered.join(&name);
        if !r.is_file() {
            return Err(Error::MissingFile(r));
        }
        a.push(ImageRgb::load_png(&r)?);
        b.push(ImageRgb::load_png(f)?);
        ids.push(name);
    }
    for (x, y) in a.iter().zip(&b) {
        x.same_dims(y)?;
    }
    evaluate(&ids, &a, &b, &GradientPyramid::default())
}

fn copy_file(from: &Path, to: &Path) -> Result<()> {
    fs::copy(from, to).map(|_| ()).map_err(|e| Error::io(from, e))
}

fn copy_dir(from: &Path, to: &Path) -> Result<()> {
    fs::create_dir_all(to).map_err(|e| Error::io(to, e))?;
    let mut entries: Vec<PathBuf> = fs::read_dir(from)
        .map_err(|e| Error::io(from, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    for f in entries {
        copy_file(&f, &to.join(f.file_name().expect("file")))?;
    }
    Ok(())
}

/// Where intermediate stages are kept.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Defaults to `<out>/cache`.
    pub cache: Option<PathBuf>,
}

/// What a run produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub report: MetricReport,
    pub train: TrainSummary,
    /// Directory of the synthetic views used for training, if any.
    pub synthetic_dir: Option<PathBuf>,
    /// Whether the report scores held-out views (`false`: the references).
    pub held_out: bool,
    /// Stage names paired with whether their output came from the cache.
    pub stages: Vec<(String, bool)>,
}

struct Stage<'a> {
    cache: &'a StageCache,
    keys: serde_json::Map<String, serde_json::Value>,
    hits: Vec<(String, bool)>,
}

impl Stage<'_> {
    fn run(&mut self, name: &'static str, key: serde_json::Value, build: impl FnOnce(&Path) -> Result<()>) -> Result<(PathBuf, String)> {
        let key = digest_of(&json!({ "stage": name, "key": key }));
        let (dir, hit) = self.cache.entry(name, &key, build).map_err(|e| e.in_stage(name))?;
        log::info!("stage {name}: {}", if hit { "cached" } else { "done" });
        self.keys.insert(name.to_string(), key.clone().into());
        self.hits.push((name.to_string(), hit));
        Ok((dir, key))
    }
}

/// Sample, render, enhance, train, render the test views and evaluate.
///
/// Writes `model.hsgs`, `train.json`, `renders/`, `report.json` and
/// `manifest.json` into `out`. Every stage output is cached by the digest
/// of its inputs, so repeated runs only redo what changed.
pub fn run_pipeline(scene_dir: &Path, config: &PipelineConfig, out: &Path, options: &RunOptions) -> Result<RunSummary> {
    config.validate()?;
    let bundle = ingest_scene(scene_dir).map_err(|e| e.in_stage("ingest"))?;
    let digest = SceneDigest::of(scene_dir).map_err(|e| e.in_stage("ingest"))?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let cache = StageCache::new(options.cache.clone().unwrap_or_else(|| out.join(CACHE_DIR)));
    let mut st = Stage {
        cache: &cache,
        keys: serde_json::Map::new(),
        hits: Vec::new(),
    };

    let synthetic_dir = if config.use_synthetic {
        let refs = &bundle.references.poses;
        let (sample_dir, sample_key) = st.run(
            "sample",
            json!({
                "poses": digest.reference_poses,
                "strategy": config.strategy,
                "sampler": config.sampler,
                "trajectory_views": config.trajectory_views,
            }),
            |dir| synthetic_poses(config, refs)?.write(dir.join(POSES_FILE)),
        )?;
        let (render_dir, render_key) = st.run(
            "render-pointcloud",
            json!({ "sample": sample_key, "cloud": digest.cloud, "render": config.render }),
            |dir| {
                let poses_file = sample_dir.join(POSES_FILE);
                let poses = read_pose_file(&poses_file)?;
                let cloud = load_ply(&bundle.cloud_path)?;
                let coverage = render_pointcloud_views(&cloud, &poses, &config.render, dir)?;
                log::info!("{} synthetic views, mean coverage {coverage:.3}", poses.len());
                copy_file(&poses_file, &dir.join(POSES_FILE))
            },
        )?;
        let (enhanced, _) = st.run(
            "enhance",
            json!({ "render": render_key, "template": config.enhance }),
            |dir| enhance_images(&render_dir, dir, config.enhance.as_deref()).map(|_| ()),
        )?;
        Some(enhanced)
    } else {
        None
    };

    let train_key = json!({
        "scene": [digest.cloud, digest.reference_poses, digest.reference_images],
        "synthetic": st.keys.get("enhance").cloned(),
        "init_points": config.init_points,
        "sh_degree": config.sh_degree,
        "train": config.train,
        "loss": config.loss,
    });
    let (train_dir, train_key) = st.run("train", train_key, |dir| {
        let (cloud, summary) = train_model(&bundle, synthetic_dir.as_deref(), config)?;
        save_checkpoint(&cloud, dir.join(MODEL_FILE))?;
        write_json(&dir.join(TRAIN_LOG_FILE), &summary)
    })?;

    let (eval_views, eval_truth_dir, held_out) = match &bundle.tests {
        Some(t) => (t.clone(), scene_dir.join(TEST_DIR), true),
        None => {
            log::warn!("scene has no test views; scoring the references");
            (bundle.references.clone(), scene_dir.join(REF_DIR), false)
        }
    };
    let (render_dir, _) = st.run(
        "render",
        json!({
            "model": train_key,
            "views": if held_out { [digest.test_poses.clone(), digest.test_images.clone()] } else { [Some(digest.reference_poses.clone()), None] },
        }),
        |dir| {
            let cloud = load_checkpoint(train_dir.join(MODEL_FILE))?;
            let ViewSet { names, poses, .. } = &eval_views;
            render_views(&cloud, poses, names, &config.train.raster(), dir)
        },
    )?;
    let report = evaluate_dirs(&render_dir, &eval_truth_dir).map_err(|e| e.in_stage("evaluate"))?;

    copy_file(&train_dir.join(MODEL_FILE), &out.join(MODEL_FILE))?;
    copy_file(&train_dir.join(TRAIN_LOG_FILE), &out.join(TRAIN_LOG_FILE))?;
    copy_dir(&render_dir, &out.join(RENDER_DIR))?;
    report.write(out.join(REPORT_FILE))?;
    write_json(&out.join(MANIFEST_FILE), &manifest(config, &digest, &st.keys, held_out))?;

    let train: TrainSummary = read_json(&train_dir.join(TRAIN_LOG_FILE))?;
    Ok(RunSummary {
        report,
        train,
        synthetic_dir,
        held_out,
        stages: st.hits,
    })
}

/// The reproducibility record of a run: every configuration value, the
/// digests of its inputs and the cache key of each stage. Holds no paths or
/// times, so identical runs produce identical bytes.
pub fn manifest(
    config: &PipelineConfig,
    inputs: &SceneDigest,
    stages: &serde_json::Map<String, serde_json::Value>,
    held_out: bool,
) -> serde_json::Value {
    json!({
        "format": MANIFEST_FORMAT,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "inputs": inputs,
        "stages": stages,
        "evaluated": if held_out { "test" } else { "reference" },
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

