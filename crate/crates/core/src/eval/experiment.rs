//! End-to-end experiment driver: split, initialize, solve, score.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::{
    run_bootstrap_al, run_supervised, AlParams, GenerationMode, Oracle, UniquenessIndex,
};
use crate::classifier::{EnsembleModel, TrainConfig};
use crate::dist::{AnalysisConfig, DistTest};
use crate::er::{load_dataset, split_by_source_pair, ERProblem, ProblemId};
use crate::error::{Error, Result};
use crate::graph::ClusterId;
use crate::repository::{init_repository, RepoConfig, SolveReport};
use crate::Value;

use super::{compute_metrics, Metrics};

/// Serving strategy for unsolved problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Base,
    Cov,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Strategy::Base),
            "cov" => Ok(Strategy::Cov),
            other => Err(Error::InvalidValue {
                reason: format!("unknown strategy {other:?}"),
            }),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Base => "base",
            Strategy::Cov => "cov",
        })
    }
}

fn default_ratio_init() -> f64 {
    0.5
}
fn default_b_tot() -> usize {
    1000
}
fn default_b_min() -> usize {
    50
}
fn default_batch() -> usize {
    10
}
fn default_k() -> usize {
    100
}
fn default_t_cov() -> f64 {
    0.25
}
fn default_seed() -> u64 {
    42
}
fn default_resolution() -> f64 {
    1.0
}
fn default_wd_grid() -> usize {
    101
}
fn default_psi_bins() -> usize {
    100
}
fn default_psi_eps() -> f64 {
    1e-6
}

/// Experiment parameters; unset JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_ratio_init")]
    pub ratio_init: f64,
    #[serde(default)]
    pub test: DistTest,
    #[serde(default = "default_b_tot")]
    pub b_tot: usize,
    #[serde(default = "default_b_min")]
    pub b_min: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_t_cov")]
    pub t_cov: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub generation: GenerationMode,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default = "default_wd_grid")]
    pub wd_grid: usize,
    #[serde(default = "default_psi_bins")]
    pub psi_bins: usize,
    #[serde(default = "default_psi_eps")]
    pub psi_eps: f64,
    #[serde(default)]
    pub min_edge_sim: Value,
}

impl ExperimentConfig {
    pub fn with_dataset(dataset: impl Into<PathBuf>) -> Self {
        serde_json::from_value(serde_json::json!({
            "dataset": dataset.into(),
        }))
        .expect("defaults fill in")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile {
                path: path.to_path_buf(),
            });
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn repo_config(&self) -> RepoConfig {
        RepoConfig {
            analysis: AnalysisConfig {
                test: self.test,
                wd_grid: self.wd_grid,
                psi_bins: self.psi_bins,
                psi_eps: self.psi_eps,
            },
            min_edge_sim: self.min_edge_sim,
            resolution: self.resolution,
            b_tot: self.b_tot,
            b_min: self.b_min,
            batch: self.batch,
            k: self.k,
            t_cov: self.t_cov,
            seed: self.seed,
            generation: self.generation,
            ..RepoConfig::default()
        }
    }
}

/// Per-problem outcome row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemReport {
    pub problem_id: ProblemId,
    pub n_vectors: usize,
    pub chosen_cluster: ClusterId,
    pub sim_p: Value,
    pub retrain_triggered: bool,
    pub fresh_model: bool,
    pub coverage: Option<f64>,
    pub extra_labels: usize,
    pub metrics: Metrics,
}

/// Full experiment result. `wall_ms` is the only non-deterministic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub dataset_name: String,
    pub n_problems: usize,
    pub n_initial: usize,
    pub n_unsolved: usize,
    pub clusters: usize,
    pub init_labels_spent: usize,
    pub per_problem: Vec<ProblemReport>,
    pub macro_f1: f64,
    pub micro: Metrics,
    pub extra_labels_total: usize,
    pub total_labels_spent: usize,
    pub wall_ms: u64,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// JSON with the wall-clock field zeroed, for byte comparisons.
    pub fn canonical_json(&self) -> String {
        let mut clone = self.clone();
        clone.wall_ms = 0;
        clone.to_json()
    }
}

fn score_solve(report: &SolveReport, oracle: &Oracle, n_vectors: usize) -> Result<ProblemReport> {
    Ok(ProblemReport {
        problem_id: report.problem_id.clone(),
        n_vectors,
        chosen_cluster: report.chosen_cluster,
        sim_p: report.sim_p,
        retrain_triggered: report.retrain_triggered,
        fresh_model: report.fresh_model,
        coverage: report.coverage,
        extra_labels: report.extra_labels_spent,
        metrics: compute_metrics(&report.predictions, oracle)?,
    })
}

/// Run the whole protocol: load, split, initialize the repository, solve
/// every unsolved problem with the configured strategy, and aggregate
/// macro- and micro-F1.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    let (manifest, problems) = load_dataset(&cfg.dataset)?;
    let oracle_rel = manifest
        .oracle_path
        .clone()
        .ok_or_else(|| Error::InvalidValue {
            reason: format!("dataset {} declares no oracle", manifest.name),
        })?;
    let base = cfg.dataset.parent().unwrap_or_else(|| Path::new("."));
    let oracle = Oracle::from_csv(&manifest.resolve(base, &oracle_rel))?;

    let n_problems = problems.len();
    let (initial, unsolved) = split_by_source_pair(problems, cfg.ratio_init, cfg.seed)?;
    let (n_initial, n_unsolved) = (initial.len(), unsolved.len());

    let mut repo = init_repository(initial, cfg.repo_config(), &oracle)?;
    let init_labels_spent = repo.labels_spent();
    let clusters = repo.clustering().len();

    let per_problem: Vec<ProblemReport> = match cfg.strategy {
        Strategy::Base => unsolved
            .par_iter()
            .map(|p| score_solve(&repo.sel_base(p)?, &oracle, p.len()))
            .collect::<Result<Vec<_>>>()?,
        Strategy::Cov => {
            let mut rows = Vec::with_capacity(unsolved.len());
            for p in &unsolved {
                let n = p.len();
                let report = repo.sel_cov(p.clone(), &oracle)?;
                rows.push(score_solve(&report, &oracle, n)?);
            }
            rows
        }
    };

    let macro_f1 = if per_problem.is_empty() {
        0.0
    } else {
        per_problem.iter().map(|r| r.metrics.f1).sum::<f64>() / per_problem.len() as f64
    };
    let micro = Metrics::from_counts(
        per_problem.iter().map(|r| r.metrics.tp).sum(),
        per_problem.iter().map(|r| r.metrics.fp).sum(),
        per_problem.iter().map(|r| r.metrics.false_neg).sum(),
    );
    let extra_labels_total = per_problem.iter().map(|r| r.extra_labels).sum();

    Ok(ExperimentReport {
        config: cfg.clone(),
        dataset_name: manifest.name,
        n_problems,
        n_initial,
        n_unsolved,
        clusters,
        init_labels_spent,
        per_problem,
        macro_f1,
        micro,
        extra_labels_total,
        total_labels_spent: init_labels_spent + extra_labels_total,
        wall_ms: started.elapsed().as_millis() as u64,
    })
}

/// Train one pooled model over all initial problems with the same AL
/// procedure and budget — the single-model comparator the per-cluster
/// repository is measured against.
pub fn unified_baseline(
    initial: &[ERProblem],
    oracle: &Oracle,
    budget: usize,
    batch: usize,
    k: usize,
    seed: u64,
    tree: &TrainConfig,
) -> Result<EnsembleModel<Value>> {
    let mut sorted: Vec<&ERProblem> = initial.iter().collect();
    sorted.sort_by_key(|p| p.id());
    let pool: Vec<_> = sorted
        .iter()
        .flat_map(|p| p.vectors().iter().cloned())
        .collect();
    let problems = std::collections::BTreeMap::new();
    let uniqueness =
        UniquenessIndex::build(Vec::<(ClusterId, &[ProblemId])>::new(), &problems, false);
    let outcome = if budget >= pool.len() {
        run_supervised(&pool, oracle, k, seed, tree)?
    } else {
        run_bootstrap_al(
            &pool,
            &uniqueness,
            oracle,
            &AlParams {
                budget,
                batch,
                k,
                seed,
                tree: *tree,
            },
        )?
    };
    Ok(outcome.model)
}

/// Human-readable per-problem table plus the aggregate line.
pub fn render_report_table(report: &ExperimentReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "dataset {} | {} problems ({} initial / {} unsolved) | {} clusters | strategy {}\n",
        report.dataset_name,
        report.n_problems,
        report.n_initial,
        report.n_unsolved,
        report.clusters,
        report.config.strategy,
    ));
    out.push_str(&format!(
        "{:<24} {:>8} {:>8} {:>7} {:>9} {:>9} {:>7} {:>7}\n",
        "problem", "vectors", "cluster", "sim_p", "f1", "retrain", "fresh", "labels"
    ));
    for row in &report.per_problem {
        out.push_str(&format!(
            "{:<24} {:>8} {:>8} {:>7.4} {:>9.4} {:>9} {:>7} {:>7}\n",
            row.problem_id.0,
            row.n_vectors,
            row.chosen_cluster.0,
            row.sim_p,
            row.metrics.f1,
            row.retrain_triggered,
            row.fresh_model,
            row.extra_labels,
        ));
    }
    out.push_str(&format!(
        "macro-F1 {:.4} | micro-F1 {:.4} | init labels {} | extra labels {} | total {} | {} ms\n",
        report.macro_f1,
        report.micro.f1,
        report.init_labels_spent,
        report.extra_labels_total,
        report.total_labels_spent,
        report.wall_ms,
    ));
    out
}
