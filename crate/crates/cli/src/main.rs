//! `er-repo`: build, query, and update a repository of entity-resolution
//! classification models.
//!
//! Exit codes: 0 success, 1 domain error (machine-parseable JSON on stderr),
//! 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use er_repo::active::{GenerationMode, Oracle};
use er_repo::dist::DistTest;
use er_repo::er::{
    load_dataset, read_problem_csv, write_manifest, write_problem_csv, DatasetManifest, ERProblem,
    ProblemEntry, SourcePair,
};
use er_repo::error::{Error, Result};
use er_repo::eval::{
    generate_synthetic, render_report_table, run_experiment, ExperimentConfig, RegimeSpec,
    Strategy, SynthSpec,
};
use er_repo::repository::{
    init_repository, load_repository, save_repository, RepoConfig, SolveReport,
};

fn parse_test(s: &str) -> std::result::Result<DistTest, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_generation(s: &str) -> std::result::Result<GenerationMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Parser)]
#[command(
    name = "er-repo",
    version = er_repo::VERSION,
    about = "Model repository for multi-source entity resolution"
)]
struct Cli {
    /// Worker threads (0 = all logical cores). Use 1 for bit-reproducible
    /// single-threaded runs.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset manifest and print corpus statistics.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        /// Emit the statistics as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic multi-source corpus with regime structure.
    Synth {
        /// Output directory (manifest.json, problems/, oracle.csv).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        regimes: usize,
        #[arg(long, default_value_t = 4)]
        sources_per_regime: usize,
        /// Feature vectors per problem.
        #[arg(long, default_value_t = 500)]
        vectors: usize,
        #[arg(long, default_value_t = 4)]
        arity: usize,
        #[arg(long, default_value_t = 0.2)]
        match_ratio: f64,
        /// Required cross-regime KS separation.
        #[arg(long, default_value_t = 0.2)]
        separation: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "synthetic")]
        name: String,
    },
    /// Build a model repository from a dataset.
    Init {
        #[arg(long)]
        manifest: PathBuf,
        /// Repository archive directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Distribution test: ks, wd, or psi.
        #[arg(long, default_value = "ks", value_parser = parse_test)]
        test: DistTest,
        #[arg(long, default_value_t = 101)]
        wd_grid: usize,
        #[arg(long, default_value_t = 100)]
        psi_bins: usize,
        #[arg(long, default_value_t = 1e-6)]
        psi_eps: f64,
        /// Leiden resolution.
        #[arg(long, default_value_t = 1.0)]
        resolution: f64,
        /// Drop graph edges below this similarity.
        #[arg(long, default_value_t = 0.0)]
        min_edge_sim: f64,
        #[arg(long, default_value_t = 1000)]
        b_tot: usize,
        #[arg(long, default_value_t = 50)]
        b_min: usize,
        #[arg(long, default_value_t = 10)]
        batch: usize,
        /// Committee size for the bootstrap uncertainty measure.
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Training-data generation: bootstrap (active learning) or
        /// supervised (label everything).
        #[arg(long, default_value = "bootstrap", value_parser = parse_generation)]
        al: GenerationMode,
        /// Coverage threshold used by later `solve --strategy cov` calls.
        #[arg(long, default_value_t = 0.25)]
        t_cov: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Features considered per tree split (default: all).
        #[arg(long)]
        feature_subsample: Option<usize>,
        /// Use the literal uniqueness orientation instead of IDF.
        #[arg(long)]
        uniqueness_literal: bool,
    },
    /// Classify one problem file against a repository.
    Solve {
        #[arg(long)]
        repo: PathBuf,
        /// Problem CSV in the canonical feature-vector layout.
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value = "base", value_parser = parse_strategy)]
        strategy: Strategy,
        /// Coverage threshold override for this call.
        #[arg(long)]
        t_cov: Option<f64>,
        /// Ground-truth CSV; required for `cov` (retraining may query it).
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Write the full solve report JSON here.
        #[arg(long)]
        out_report: Option<PathBuf>,
        /// Write per-pair predictions CSV here.
        #[arg(long)]
        out_predictions: Option<PathBuf>,
    },
    /// Run an end-to-end experiment from a JSON config.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_report: Option<PathBuf>,
    },
    /// Summarize a repository archive.
    Inspect {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // ignore the error when a pool already exists (e.g. under tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
            });
            eprintln!("{payload}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { manifest, json } => ingest(&manifest, json),
        Command::Synth {
            out,
            regimes,
            sources_per_regime,
            vectors,
            arity,
            match_ratio,
            separation,
            seed,
            name,
        } => synth(
            &out,
            regimes,
            sources_per_regime,
            vectors,
            arity,
            match_ratio,
            separation,
            seed,
            &name,
        ),
        Command::Init {
            manifest,
            out,
            test,
            wd_grid,
            psi_bins,
            psi_eps,
            resolution,
            min_edge_sim,
            b_tot,
            b_min,
            batch,
            k,
            al,
            t_cov,
            seed,
            feature_subsample,
            uniqueness_literal,
        } => {
            let mut config = RepoConfig {
                b_tot,
                b_min,
                batch,
                k,
                t_cov,
                seed,
                resolution,
                min_edge_sim,
                generation: al,
                uniqueness_literal,
                ..RepoConfig::default()
            };
            config.analysis.test = test;
            config.analysis.wd_grid = wd_grid;
            config.analysis.psi_bins = psi_bins;
            config.analysis.psi_eps = psi_eps;
            config.tree.feature_subsample = feature_subsample;
            init(&manifest, &out, config)
        }
        Command::Solve {
            repo,
            problem,
            strategy,
            t_cov,
            oracle,
            out_report,
            out_predictions,
        } => solve(
            &repo,
            &problem,
            strategy,
            t_cov,
            oracle.as_deref(),
            out_report.as_deref(),
            out_predictions.as_deref(),
        ),
        Command::Eval { config, out_report } => eval(&config, out_report.as_deref()),
        Command::Inspect { repo, json } => inspect(&repo, json),
    }
}

fn ingest(manifest_path: &Path, json: bool) -> Result<()> {
    let (manifest, problems) = load_dataset(manifest_path)?;
    let arity = er_repo::er::validate_arity(&problems)?;
    let total_vectors: usize = problems.iter().map(|p| p.len()).sum();
    let oracle_stats = match &manifest.oracle_path {
        Some(rel) => {
            let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
            let oracle = Oracle::from_csv(&manifest.resolve(base, rel))?;
            Some((oracle.len(), oracle.match_count()))
        }
        None => None,
    };
    if json {
        let payload = serde_json::json!({
            "name": manifest.name,
            "problems": problems.len(),
            "vectors": total_vectors,
            "arity": arity,
            "oracle_pairs": oracle_stats.map(|(n, _)| n),
            "oracle_matches": oracle_stats.map(|(_, m)| m),
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&payload).expect("stats serialize")
        );
    } else {
        println!(
            "dataset {}: {} problems, {} vectors, arity {}",
            manifest.name,
            problems.len(),
            total_vectors,
            arity
        );
        match oracle_stats {
            Some((pairs, matches)) => println!("oracle: {pairs} labeled pairs, {matches} matches"),
            None => println!("oracle: none"),
        }
    }
    Ok(())
}

/// Regime parameters for `--regimes N`: the canonical two-regime layout when
/// it applies, otherwise a ladder of shifted bands over [0, 1].
fn regime_ladder(regimes: usize, arity: usize) -> Vec<RegimeSpec> {
    if regimes == 2 && arity == 4 {
        return SynthSpec::two_regime_default(0).regimes;
    }
    (0..regimes)
        .map(|r| {
            let band = (r + 1) as f64 / regimes as f64;
            let match_center = 0.5 + 0.45 * band;
            let non_center = 0.05 + 0.45 * band;
            let offset = |f: usize| 0.01 * ((f * 7 % 5) as f64 - 2.0);
            RegimeSpec {
                match_mean: (0..arity)
                    .map(|f| (match_center + offset(f)).clamp(0.02, 0.98))
                    .collect(),
                match_std: vec![0.05; arity],
                non_match_mean: (0..arity)
                    .map(|f| (non_center + offset(f)).clamp(0.02, 0.98))
                    .collect(),
                non_match_std: vec![0.06; arity],
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn synth(
    out: &Path,
    regimes: usize,
    sources_per_regime: usize,
    vectors: usize,
    arity: usize,
    match_ratio: f64,
    separation: f64,
    seed: u64,
    name: &str,
) -> Result<()> {
    let spec = SynthSpec {
        regimes: regime_ladder(regimes, arity),
        sources_per_regime,
        vectors_per_problem: vectors,
        match_ratio,
        feature_names: (1..=arity).map(|i| format!("f{i}")).collect(),
        separation,
        seed,
    };
    let corpus = generate_synthetic(&spec)?;

    let problems_dir = out.join("problems");
    std::fs::create_dir_all(&problems_dir)
        .map_err(|e| Error::io(format!("creating {}", problems_dir.display()), e))?;
    let mut entries = Vec::new();
    for problem in &corpus.problems {
        let file = format!("problems/{}.csv", problem.id().file_stem());
        write_problem_csv(problem, &out.join(&file))?;
        entries.push(ProblemEntry {
            source_a: problem.pair().a.clone(),
            source_b: problem.pair().b.clone(),
            path: file,
        });
    }
    corpus.oracle.to_csv(&out.join("oracle.csv"))?;
    let manifest = DatasetManifest {
        name: name.to_string(),
        feature_names: spec.feature_names.clone(),
        problems: entries,
        oracle_path: Some("oracle.csv".to_string()),
    };
    write_manifest(&manifest, &out.join("manifest.json"))?;
    println!(
        "wrote {} problems ({} vectors each) and {} oracle pairs to {}",
        corpus.problems.len(),
        vectors,
        corpus.oracle.len(),
        out.display()
    );
    Ok(())
}

fn init(manifest_path: &Path, out: &Path, config: RepoConfig) -> Result<()> {
    let (manifest, problems) = load_dataset(manifest_path)?;
    let oracle_rel = manifest
        .oracle_path
        .clone()
        .ok_or_else(|| Error::InvalidValue {
            reason: format!("dataset {} declares no oracle", manifest.name),
        })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let oracle = Oracle::from_csv(&manifest.resolve(base, &oracle_rel))?;
    let repo = init_repository(problems, config, &oracle)?;
    save_repository(&repo, out, false)?;
    println!(
        "repository at {}: {} clusters, {} models, {} labels spent",
        out.display(),
        repo.clustering().len(),
        repo.models().len(),
        repo.labels_spent()
    );
    Ok(())
}

/// Read a problem CSV whose source pair is taken from its first data row.
fn load_problem(path: &Path, feature_names: &[String]) -> Result<ERProblem> {
    if !path.is_file() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let first = reader
        .records()
        .next()
        .transpose()
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            message: "problem file has no data rows".to_string(),
        })?;
    if first.len() < 4 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: "expected id columns before features".to_string(),
        });
    }
    let pair = SourcePair::new(&first[0], &first[2]);
    read_problem_csv(path, feature_names, &pair)
}

fn write_predictions_csv(report: &SolveReport, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    writer
        .write_record([
            "left_source",
            "left_id",
            "right_source",
            "right_id",
            "is_match",
            "match_fraction",
        ])
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    for p in &report.predictions {
        writer
            .write_record([
                p.left.source_id.as_str(),
                p.left.record_id.as_str(),
                p.right.source_id.as_str(),
                p.right.record_id.as_str(),
                if p.is_match { "1" } else { "0" },
                &p.fraction.to_string(),
            ])
            .map_err(|e| Error::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn solve(
    repo_path: &Path,
    problem_path: &Path,
    strategy: Strategy,
    t_cov: Option<f64>,
    oracle_path: Option<&Path>,
    out_report: Option<&Path>,
    out_predictions: Option<&Path>,
) -> Result<()> {
    if !repo_path.join("manifest.json").is_file() {
        return Err(Error::MissingFile {
            path: repo_path.join("manifest.json"),
        });
    }
    let mut repo = load_repository(repo_path)?;
    if let Some(t) = t_cov {
        repo.config.t_cov = t;
    }
    let problem = load_problem(problem_path, &repo.feature_names.clone())?;

    let report = match strategy {
        Strategy::Base => repo.sel_base(&problem)?,
        Strategy::Cov => {
            let oracle_path = oracle_path.ok_or_else(|| Error::InvalidValue {
                reason: "--oracle is required for strategy cov".to_string(),
            })?;
            let oracle = Oracle::from_csv(oracle_path)?;
            let report = repo.sel_cov(problem, &oracle)?;
            // cov mutates the repository; persist the new state
            save_repository(&repo, repo_path, true)?;
            report
        }
    };

    if let Some(path) = out_report {
        std::fs::write(
            path,
            serde_json::to_string_pretty(&report).expect("report") + "\n",
        )
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    if let Some(path) = out_predictions {
        write_predictions_csv(&report, path)?;
    }
    let matches = report.predictions.iter().filter(|p| p.is_match).count();
    let summary = serde_json::json!({
        "problem_id": report.problem_id,
        "strategy": report.strategy,
        "chosen_cluster": report.chosen_cluster,
        "sim_p": report.sim_p,
        "retrain_triggered": report.retrain_triggered,
        "fresh_model": report.fresh_model,
        "coverage": report.coverage,
        "extra_labels_spent": report.extra_labels_spent,
        "pairs": report.predictions.len(),
        "matches": matches,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary")
    );
    Ok(())
}

fn eval(config_path: &Path, out_report: Option<&Path>) -> Result<()> {
    let config = ExperimentConfig::from_file(config_path)?;
    let report = run_experiment(&config)?;
    if let Some(path) = out_report {
        std::fs::write(path, report.to_json())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    print!("{}", render_report_table(&report));
    Ok(())
}

fn inspect(repo_path: &Path, json: bool) -> Result<()> {
    if !repo_path.join("manifest.json").is_file() {
        return Err(Error::MissingFile {
            path: repo_path.join("manifest.json"),
        });
    }
    let repo = load_repository(repo_path)?;
    if json {
        let models: Vec<_> = repo
            .models()
            .values()
            .map(|m| {
                serde_json::json!({
                    "cluster_id": m.cluster_id,
                    "members": m.members.len(),
                    "retained": m.retained.len(),
                    "budget": m.budget,
                    "spent": m.spent,
                    "retrained": m.retrained_unix.is_some(),
                })
            })
            .collect();
        let payload = serde_json::json!({
            "version": repo.version,
            "created_unix": repo.created_unix,
            "problems": repo.problems().len(),
            "clusters": repo.clustering().len(),
            "quality": repo.clustering().quality,
            "models": models,
            "t": repo.t_set().len(),
            "u": repo.u_set().len(),
            "history": repo.history().len(),
            "audit_events": repo.audit().len(),
            "labels_spent": repo.labels_spent(),
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&payload).expect("summary")
        );
    } else {
        println!(
            "repository v{} | {} problems | {} clusters (modularity {:.4}) | T={} U={}",
            repo.version,
            repo.problems().len(),
            repo.clustering().len(),
            repo.clustering().quality,
            repo.t_set().len(),
            repo.u_set().len(),
        );
        for m in repo.models().values() {
            println!(
                "model {}: {} members, {} retained vectors, budget {}, spent {}{}",
                m.cluster_id,
                m.members.len(),
                m.retained.len(),
                m.budget,
                m.spent,
                if m.retrained_unix.is_some() {
                    ", retrained"
                } else {
                    ""
                }
            );
        }
        println!(
            "labels spent {} | history {} | audit {} events",
            repo.labels_spent(),
            repo.history().len(),
            repo.audit().len()
        );
    }
    Ok(())
}
