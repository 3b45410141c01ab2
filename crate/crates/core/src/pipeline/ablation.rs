use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, Strategy};
use super::run::{run_pipeline, write_json, RunOptions, RunSummary, CACHE_DIR};
use crate::error::Result;
use crate::metrics::{LambdaMode, MeanMetrics};

pub const ABLATION_FILE: &str = "ablation_report.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub id: String,
    pub description: String,
    pub synthetic_views: usize,
    pub metrics: MeanMetrics,
    pub initial_objective: f64,
    pub final_objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: Strategy,
    pub synthetic_views: usize,
    pub metrics: MeanMetrics,
    pub initial_objective: f64,
    pub final_objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// Component rows `a` to `d`, each adding one ingredient to the last.
    pub rows: Vec<AblationRow>,
    /// The full configuration under each placement strategy at equal view count.
    pub strategies: Vec<StrategyRow>,
    pub held_out: bool,
    pub perceptual_impl: String,
}

impl AblationReport {
    pub fn row(&self, id: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn strategy(&self, s: Strategy) -> Option<&StrategyRow> {
        self.strategies.iter().find(|r| r.strategy == s)
    }
}

/// The four component configurations derived from `base`:
/// (a) references only, (b) plus synthetic views with a plain loss,
/// (c) plus the perceptual term and distance weighting, (d) plus enhancement.
pub fn ablation_configs(base: &PipelineConfig) -> Vec<(&'static str, &'static str, PipelineConfig)> {
    let mut plain = base.clone();
    plain.strategy = Strategy::Hemisphere;
    plain.enhance = None;
    plain.loss.lambda_p_ref = 0.0;
    plain.loss.lambda_p_syn = 0.0;
    plain.train.lambda_mode = LambdaMode::Uniform;

    let a = PipelineConfig {
        use_synthetic: false,
        ..plain.clone()
    };
    let b = PipelineConfig {
        use_synthetic: true,
        ..plain.clone()
    };
    let mut c = b.clone();
    c.loss = base.loss;
    c.train.lambda_mode = base.train.lambda_mode;
    let d = PipelineConfig {
        enhance: base.enhance.clone(),
        ..c.clone()
    };
    vec![
        ("a", "reference views only", a),
        ("b", "+ synthetic views", b),
        ("c", "+ perceptual loss and distance weighting", c),
        ("d", "+ enhancement", d),
    ]
}

fn row(id: &str, description: &str, s: &RunSummary) -> AblationRow {
    AblationRow {
        id: id.into(),
        description: description.into(),
        synthetic_views: s.train.synthetic_views,
        metrics: s.report.mean,
        initial_objective: s.train.initial_objective,
        final_objective: s.train.final_objective,
    }
}

/// Runs every configuration of the component and strategy ablations on one
/// scene, sharing a stage cache, and writes `ablation_report.json` to `out`.
pub fn run_ablation(scene_dir: &Path, base: &PipelineConfig, out: &Path) -> Result<AblationReport> {
    base.validate()?;
    let options = RunOptions {
        cache: Some(out.join(CACHE_DIR)),
    };
    let mut rows = Vec::new();
    let mut full = None;
    let mut held_out = true;
    let mut perceptual_impl = String::new();
    for (id, description, cfg) in ablation_configs(base) {
        log::info!("ablation row {id}: {description}");
        let s = run_pipeline(scene_dir, &cfg, &out.join(format!("row_{id}")), &options)?;
        held_out = s.held_out;
        perceptual_impl = s.report.perceptual_impl.clone();
        rows.push(row(id, description, &s));
        if id == "d" {
            full = Some((cfg, s));
        }
    }
    let (full_cfg, full_run) = full.expect("row d is always present");
    let mut strategies = vec![StrategyRow {
        strategy: Strategy::Hemisphere,
        synthetic_views: full_run.train.synthetic_views,
        metrics: full_run.report.mean,
        initial_objective: full_run.train.initial_objective,
        final_objective: full_run.train.final_objective,
    }];
    let traj_cfg = PipelineConfig {
        strategy: Strategy::Trajectory,
        trajectory_views: Some(full_run.train.synthetic_views),
        ..full_cfg
    };
    log::info!("ablation strategy: trajectory");
    let t = run_pipeline(scene_dir, &traj_cfg, &out.join("strategy_trajectory"), &options)?;
    strategies.push(StrategyRow {
        strategy: Strategy::Trajectory,
        synthetic_views: t.train.synthetic_views,
        metrics: t.report.mean,
        initial_objective: t.train.initial_objective,
        final_objective: t.train.final_objective,
    });
    let report = AblationReport {
        rows,
        strategies,
        held_out,
        perceptual_impl,
    };
    write_json(&out.join(ABLATION_FILE), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_add_one_ingredient_each() {
        let base = PipelineConfig {
            enhance: Some("cp {input} {output}".into()),
            ..Default::default()
        };
        let rows = ablation_configs(&base);
        let ids: Vec<&str> = rows.iter().map(|r| r.0).collect();
        assert_eq!(ids, ["a", "b", "c", "d"]);
        let (a, b, c, d) = (&rows[0].2, &rows[1].2, &rows[2].2, &rows[3].2);
        assert!(!a.use_synthetic && b.use_synthetic);
        assert_eq!(b.loss.lambda_p_syn, 0.0);
        assert_eq!(b.train.lambda_mode, LambdaMode::Uniform);
        assert_eq!(c.loss, base.loss);
        assert_eq!(c.train.lambda_mode, LambdaMode::Formula);
        assert_eq!(c.enhance, None);
        assert_eq!(d.enhance, base.enhance);
        assert_eq!(PipelineConfig { enhance: None, ..d.clone() }, *c);
    }
}
