//! The model repository: initialization from solved problems, the two
//! serving strategies, and coverage-triggered retraining.
//!
//! `sel_base` routes a new problem to the cluster whose retained training
//! vectors are distribution-closest and applies that model, read-only.
//! `sel_cov` instead integrates the problem into the graph, reclusters, and
//! maintains two problem sets: `T` (vectors already informed some training
//! set) and `U` (integrated, never trained on). When the fraction of a
//! cluster's vectors owned by `U` problems exceeds `t_cov`, the inherited
//! model is retrained on the uncovered part and the problems move to `T`.

mod archive;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::{
    allocate_budget, run_bootstrap_al, run_supervised, AlOutcome, AlParams, GenerationMode, Oracle,
    UniquenessIndex,
};
use crate::classifier::{train_ensemble, EnsembleModel, LabeledSet, TrainConfig};
use crate::dist::{profile_similarity, AnalysisConfig, ProblemProfile};
use crate::er::{ERProblem, FeatureVector, ProblemId, RecordRef, SourcePair};
use crate::error::{Error, Result};
use crate::graph::{
    build_graph, insert_problem, leiden_cluster, ClusterId, Clustering, ProblemGraph,
};
use crate::rng;
use crate::Value;

pub use archive::{archives_identical, load_repository, save_repository};

/// Everything the repository needs to rebuild and serve models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoConfig {
    pub analysis: AnalysisConfig,
    pub min_edge_sim: Value,
    pub resolution: f64,
    pub leiden_iters: usize,
    pub b_tot: usize,
    pub b_min: usize,
    pub batch: usize,
    pub k: usize,
    pub t_cov: f64,
    pub seed: u64,
    pub generation: GenerationMode,
    pub tree: TrainConfig,
    /// Use the as-printed uniqueness orientation instead of IDF.
    pub uniqueness_literal: bool,
}

impl Default for RepoConfig {
    fn default() -> Self {
        RepoConfig {
            analysis: AnalysisConfig::default(),
            min_edge_sim: 0.0,
            resolution: 1.0,
            leiden_iters: 32,
            b_tot: 1000,
            b_min: 50,
            batch: 10,
            k: 100,
            t_cov: 0.25,
            seed: 42,
            generation: GenerationMode::Bootstrap,
            tree: TrainConfig::default(),
            uniqueness_literal: false,
        }
    }
}

/// One classified record pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub left: RecordRef,
    pub right: RecordRef,
    pub is_match: bool,
    pub fraction: Value,
}

/// What happened while solving one new problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub problem_id: ProblemId,
    pub strategy: String,
    pub chosen_cluster: ClusterId,
    pub sim_p: Value,
    pub retrain_triggered: bool,
    /// A brand-new model was trained for an uncovered cluster.
    pub fresh_model: bool,
    pub coverage: Option<f64>,
    pub extra_labels_spent: usize,
    pub predictions: Vec<Prediction>,
}

/// One cluster's model plus its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub cluster_id: ClusterId,
    /// Cluster members at (re)training time.
    pub members: Vec<ProblemId>,
    pub model: EnsembleModel<Value>,
    /// Labeled vectors the model was trained on (`P_C`), in acquisition
    /// order. Used to route new problems.
    pub retained: Vec<FeatureVector>,
    pub trained_on: BTreeSet<ProblemId>,
    pub budget: usize,
    pub spent: usize,
    pub created_unix: u64,
    pub retrained_unix: Option<u64>,
}

/// Superseded model kept for rollback after a retrain.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalModel {
    pub cluster_id: ClusterId,
    pub seq: u64,
    pub model: EnsembleModel<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub at_unix: u64,
    pub kind: String,
    pub detail: String,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Persistent collection of cluster models over an extendable problem graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Repository {
    pub version: String,
    pub created_unix: u64,
    pub config: RepoConfig,
    pub feature_names: Vec<String>,
    problems: BTreeMap<ProblemId, ERProblem>,
    graph: ProblemGraph,
    clustering: Clustering,
    models: BTreeMap<ClusterId, ClusterModel>,
    t_set: BTreeSet<ProblemId>,
    u_set: BTreeSet<ProblemId>,
    history: Vec<HistoricalModel>,
    audit: Vec<AuditEvent>,
    next_cluster_id: u32,
    recluster_epoch: u64,
}

impl Repository {
    pub fn graph(&self) -> &ProblemGraph {
        &self.graph
    }

    pub fn clustering(&self) -> &Clustering {
        &self.clustering
    }

    pub fn models(&self) -> &BTreeMap<ClusterId, ClusterModel> {
        &self.models
    }

    pub fn problems(&self) -> &BTreeMap<ProblemId, ERProblem> {
        &self.problems
    }

    pub fn t_set(&self) -> &BTreeSet<ProblemId> {
        &self.t_set
    }

    pub fn u_set(&self) -> &BTreeSet<ProblemId> {
        &self.u_set
    }

    pub fn audit(&self) -> &[AuditEvent] {
        &self.audit
    }

    pub fn history(&self) -> &[HistoricalModel] {
        &self.history
    }

    /// Total labels acquired across all models (initial training plus
    /// retraining).
    pub fn labels_spent(&self) -> usize {
        self.models.values().map(|m| m.spent).sum()
    }

    fn log(&mut self, kind: &str, detail: String) {
        self.audit.push(AuditEvent {
            seq: self.audit.len() as u64,
            at_unix: now_unix(),
            kind: kind.to_string(),
            detail,
        });
    }

    fn problem_refs(&self) -> BTreeMap<ProblemId, &ERProblem> {
        self.problems.iter().map(|(k, v)| (k.clone(), v)).collect()
    }

    fn pool_of(&self, members: &[ProblemId]) -> Vec<FeatureVector> {
        let mut sorted = members.to_vec();
        sorted.sort();
        sorted
            .iter()
            .flat_map(|id| self.problems[id].vectors().iter().cloned())
            .collect()
    }

    fn uniqueness_index(&self) -> UniquenessIndex {
        let problems = self.problem_refs();
        UniquenessIndex::build(
            self.clustering
                .clusters
                .iter()
                .map(|(c, m)| (*c, m.as_slice())),
            &problems,
            self.config.uniqueness_literal,
        )
    }

    fn train_pool(
        &self,
        pool: &[FeatureVector],
        uniqueness: &UniquenessIndex,
        budget: usize,
        batch: usize,
        oracle: &Oracle,
        seed: u64,
    ) -> Result<AlOutcome> {
        match self.config.generation {
            GenerationMode::Supervised => {
                run_supervised(pool, oracle, self.config.k, seed, &self.config.tree)
            }
            GenerationMode::Bootstrap => {
                // keep the seed phase feasible when a retrain budget is small
                let batch = batch.min((budget / 3).max(1));
                run_bootstrap_al(
                    pool,
                    uniqueness,
                    oracle,
                    &AlParams {
                        budget,
                        batch,
                        k: self.config.k,
                        seed,
                        tree: self.config.tree,
                    },
                )
            }
        }
    }
}

/// Problem id owning a feature vector.
fn owner_of(w: &FeatureVector) -> ProblemId {
    SourcePair::new(w.left.source_id.clone(), w.right.source_id.clone()).id()
}

/// Labeling budget for a coverage-triggered retrain:
/// `b_tot * cov * n_prev / b_tot`, which reduces to `cov * n_prev` where
/// `n_prev` counts the previous model's training vectors owned by covered
/// problems. Floored at one label so a triggered retrain can always act.
pub fn retrain_budget(b_tot: usize, coverage: f64, n_prev: usize) -> usize {
    let b = (b_tot as f64 * coverage * n_prev as f64 / b_tot as f64).round() as usize;
    b.max(1)
}

/// Build the repository from the initial problem set: graph, clusters,
/// budgets, and one model per (possibly merged) cluster.
pub fn init_repository(
    initial: Vec<ERProblem>,
    config: RepoConfig,
    oracle: &Oracle,
) -> Result<Repository> {
    if initial.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    config.analysis.validate()?;
    let feature_names = initial[0].feature_names().to_vec();
    crate::er::validate_arity(&initial)?;

    let mut repo = Repository {
        version: crate::VERSION.to_string(),
        created_unix: now_unix(),
        config,
        feature_names,
        problems: initial.iter().map(|p| (p.id(), p.clone())).collect(),
        graph: ProblemGraph::new(0.0),
        clustering: Clustering {
            assignment: BTreeMap::new(),
            clusters: BTreeMap::new(),
            quality: 0.0,
        },
        models: BTreeMap::new(),
        t_set: BTreeSet::new(),
        u_set: BTreeSet::new(),
        history: Vec::new(),
        audit: Vec::new(),
        next_cluster_id: 0,
        recluster_epoch: 0,
    };
    if repo.problems.len() != initial.len() {
        return Err(Error::DuplicateProblem {
            id: "initial problem set contains repeated source pairs".into(),
        });
    }
    repo.log("init", format!("problems={}", initial.len()));

    repo.graph = build_graph(&initial, &repo.config.analysis, repo.config.min_edge_sim)?;
    repo.log(
        "graph_built",
        format!(
            "nodes={} edges={}",
            repo.graph.node_count(),
            repo.graph.edge_count()
        ),
    );

    repo.clustering = leiden_cluster(
        &repo.graph,
        repo.config.resolution,
        rng::split_seed(repo.config.seed, "leiden", 0),
        repo.config.leiden_iters,
    );
    repo.log(
        "clustered",
        format!(
            "clusters={} quality={:.6}",
            repo.clustering.len(),
            repo.clustering.quality
        ),
    );

    // effective training clusters: merged singletons fold into their host
    let sizes: BTreeMap<ClusterId, usize> = repo
        .clustering
        .clusters
        .iter()
        .map(|(c, members)| {
            (
                *c,
                members
                    .iter()
                    .map(|m| repo.problems[m].len())
                    .sum::<usize>(),
            )
        })
        .collect();
    let mut effective: BTreeMap<ClusterId, (Vec<ProblemId>, usize)> = BTreeMap::new();
    match repo.config.generation {
        GenerationMode::Supervised => {
            for (c, members) in &repo.clustering.clusters {
                effective.insert(*c, (members.clone(), usize::MAX));
            }
        }
        GenerationMode::Bootstrap => {
            let plan = allocate_budget(
                &repo.clustering.clusters,
                &sizes,
                &repo.graph,
                repo.config.b_tot,
                repo.config.b_min,
            )?;
            for (c, budget) in &plan.per_cluster {
                effective.insert(*c, (repo.clustering.members(*c).to_vec(), *budget));
            }
            for (singleton, host) in &plan.merged_singletons {
                let members = repo.clustering.members(*singleton).to_vec();
                effective
                    .get_mut(host)
                    .expect("merge host allocated")
                    .0
                    .extend(members);
            }
            repo.log(
                "budget_allocated",
                format!(
                    "clusters={} allocated={} merged={}",
                    plan.per_cluster.len(),
                    plan.total_allocated(),
                    plan.merged_singletons.len()
                ),
            );
        }
    }

    // uniqueness over the effective training clusters
    let problems_ref: BTreeMap<ProblemId, &ERProblem> =
        repo.problems.iter().map(|(k, v)| (k.clone(), v)).collect();
    let uniqueness = UniquenessIndex::build(
        effective.iter().map(|(c, (m, _))| (*c, m.as_slice())),
        &problems_ref,
        repo.config.uniqueness_literal,
    );

    let jobs: Vec<(ClusterId, Vec<ProblemId>, usize)> = effective
        .into_iter()
        .map(|(c, (members, budget))| (c, members, budget))
        .collect();
    let outcomes: Vec<(ClusterId, Vec<ProblemId>, usize, AlOutcome)> = jobs
        .into_par_iter()
        .map(|(c, members, budget)| {
            let pool = repo.pool_of(&members);
            let seed = rng::split_seed(repo.config.seed, "al-cluster", c.0 as u64);
            let outcome = match repo.config.generation {
                GenerationMode::Supervised => {
                    run_supervised(&pool, oracle, repo.config.k, seed, &repo.config.tree)?
                }
                GenerationMode::Bootstrap => run_bootstrap_al(
                    &pool,
                    &uniqueness,
                    oracle,
                    &AlParams {
                        budget,
                        batch: repo.config.batch,
                        k: repo.config.k,
                        seed,
                        tree: repo.config.tree,
                    },
                )?,
            };
            Ok((c, members, budget, outcome))
        })
        .collect::<Result<Vec<_>>>()?;

    let created = now_unix();
    for (c, members, budget, outcome) in outcomes {
        let contributors: BTreeSet<ProblemId> = outcome.retained.iter().map(owner_of).collect();
        repo.log(
            "model_trained",
            format!(
                "cluster={c} members={} budget={} spent={} contributors={}",
                members.len(),
                if budget == usize::MAX {
                    "all".to_string()
                } else {
                    budget.to_string()
                },
                outcome.spent,
                contributors.len()
            ),
        );
        repo.t_set.extend(contributors.iter().cloned());
        repo.models.insert(
            c,
            ClusterModel {
                cluster_id: c,
                members,
                model: outcome.model,
                retained: outcome.retained,
                trained_on: contributors,
                budget: if budget == usize::MAX {
                    outcome.spent
                } else {
                    budget
                },
                spent: outcome.spent,
                created_unix: created,
                retrained_unix: None,
            },
        );
    }
    repo.next_cluster_id = repo.models.keys().map(|c| c.0 + 1).max().unwrap_or(0);

    // problems that never contributed a training vector stay uncovered
    for id in repo.problems.keys() {
        if !repo.t_set.contains(id) {
            repo.u_set.insert(id.clone());
        }
    }
    repo.log(
        "init_complete",
        format!("t={} u={}", repo.t_set.len(), repo.u_set.len()),
    );
    Ok(repo)
}

impl Repository {
    fn check_arity(&self, p_new: &ERProblem) -> Result<()> {
        if p_new.arity() != self.feature_names.len() {
            return Err(Error::ArityMismatch {
                context: format!("problem {}", p_new.id()),
                expected: self.feature_names.len(),
                got: p_new.arity(),
            });
        }
        Ok(())
    }

    /// Similarity of a problem profile to each model's retained vectors,
    /// in cluster-id order.
    fn model_similarities(
        &self,
        profile: &ProblemProfile<Value>,
    ) -> Result<Vec<(ClusterId, Value)>> {
        self.models
            .iter()
            .map(|(c, m)| {
                let pc = ProblemProfile::from_vectors(&m.retained)?;
                Ok((
                    *c,
                    profile_similarity(profile, &pc, &self.config.analysis)?.sim_p,
                ))
            })
            .collect()
    }

    fn classify_with(
        &self,
        model: &EnsembleModel<Value>,
        p_new: &ERProblem,
    ) -> Result<Vec<Prediction>> {
        p_new
            .vectors()
            .par_iter()
            .map(|w| {
                let (is_match, fraction) = model.classify(w)?;
                Ok(Prediction {
                    left: w.left.clone(),
                    right: w.right.clone(),
                    is_match,
                    fraction,
                })
            })
            .collect()
    }

    /// Route `p_new` to the most similar cluster's model and classify it.
    /// Repository state is untouched.
    pub fn sel_base(&self, p_new: &ERProblem) -> Result<SolveReport> {
        if self.models.is_empty() {
            return Err(Error::EmptyRepository);
        }
        self.check_arity(p_new)?;
        let profile = ProblemProfile::from_problem(p_new)?;
        let sims = self.model_similarities(&profile)?;
        let (chosen, sim_p) = sims
            .iter()
            .copied()
            .max_by(|(ca, sa), (cb, sb)| sa.partial_cmp(sb).unwrap().then_with(|| cb.cmp(ca)))
            .expect("at least one model");
        let predictions = self.classify_with(&self.models[&chosen].model, p_new)?;
        Ok(SolveReport {
            problem_id: p_new.id(),
            strategy: "base".into(),
            chosen_cluster: chosen,
            sim_p,
            retrain_triggered: false,
            fresh_model: false,
            coverage: None,
            extra_labels_spent: 0,
            predictions,
        })
    }

    /// Integrate `p_new` into the graph, recluster, and serve it with the
    /// inherited or (when coverage demands) retrained model.
    pub fn sel_cov(&mut self, p_new: ERProblem, oracle: &Oracle) -> Result<SolveReport> {
        if self.models.is_empty() {
            return Err(Error::EmptyRepository);
        }
        self.check_arity(&p_new)?;
        let pid = p_new.id();
        if self.graph.contains(&pid) {
            return Err(Error::DuplicateProblem { id: pid.0 });
        }

        self.graph = insert_problem(&self.graph, &p_new, &self.config.analysis)?;
        self.problems.insert(pid.clone(), p_new.clone());
        self.u_set.insert(pid.clone());
        self.log("problem_inserted", format!("problem={pid}"));

        self.recluster_epoch += 1;
        self.clustering = leiden_cluster(
            &self.graph,
            self.config.resolution,
            rng::split_seed(self.config.seed, "recluster", self.recluster_epoch),
            self.config.leiden_iters,
        );
        self.log(
            "reclustered",
            format!(
                "epoch={} clusters={} quality={:.6}",
                self.recluster_epoch,
                self.clustering.len(),
                self.clustering.quality
            ),
        );

        let c_new = self
            .clustering
            .cluster_of(&pid)
            .expect("inserted problem clustered");
        let members = self.clustering.members(c_new).to_vec();
        let all_uncovered = members.iter().all(|m| self.u_set.contains(m));

        let report = if all_uncovered {
            self.train_fresh_model(&pid, c_new, &members, oracle)?
        } else {
            self.reuse_or_retrain(&pid, c_new, &members, oracle)?
        };
        Ok(report)
    }

    /// Case (a): the new problem landed in a cluster made entirely of
    /// never-trained problems; train a fresh model for it.
    fn train_fresh_model(
        &mut self,
        pid: &ProblemId,
        c_new: ClusterId,
        members: &[ProblemId],
        oracle: &Oracle,
    ) -> Result<SolveReport> {
        // the printed budget rule degenerates to zero here (no previously
        // trained vectors), so fall back to cov * mean |P_C| with cov = 1
        let mean_pc = self
            .models
            .values()
            .map(|m| m.retained.len())
            .sum::<usize>() as f64
            / self.models.len() as f64;
        let budget = (mean_pc.round() as usize).max(self.config.b_min);

        let pool = self.pool_of(members);
        let uniqueness = self.uniqueness_index();
        let seed = rng::split_seed(self.config.seed, "cov-fresh", self.recluster_epoch);
        let outcome =
            self.train_pool(&pool, &uniqueness, budget, self.config.batch, oracle, seed)?;

        let model_id = ClusterId(self.next_cluster_id);
        self.next_cluster_id += 1;
        let spent = outcome.spent;
        self.models.insert(
            model_id,
            ClusterModel {
                cluster_id: model_id,
                members: members.to_vec(),
                model: outcome.model,
                retained: outcome.retained,
                trained_on: members.iter().cloned().collect(),
                budget,
                spent,
                created_unix: now_unix(),
                retrained_unix: None,
            },
        );
        for m in members {
            self.u_set.remove(m);
            self.t_set.insert(m.clone());
        }
        self.log(
            "fresh_model",
            format!(
                "model={model_id} cluster={c_new} members={} spent={spent}",
                members.len()
            ),
        );

        let model = &self.models[&model_id];
        let predictions = self.classify_with(&model.model, &self.problems[pid])?;
        let profile = ProblemProfile::from_problem(&self.problems[pid])?;
        let pc = ProblemProfile::from_vectors(&model.retained)?;
        let sim_p = profile_similarity(&profile, &pc, &self.config.analysis)?.sim_p;
        Ok(SolveReport {
            problem_id: pid.clone(),
            strategy: "cov".into(),
            chosen_cluster: model_id,
            sim_p,
            retrain_triggered: true,
            fresh_model: true,
            coverage: Some(1.0),
            extra_labels_spent: spent,
            predictions,
        })
    }

    /// Cases (b) and (c): reuse the maximum-overlap previous model, first
    /// retraining it if uncovered vectors exceed the coverage threshold.
    fn reuse_or_retrain(
        &mut self,
        pid: &ProblemId,
        c_new: ClusterId,
        members: &[ProblemId],
        oracle: &Oracle,
    ) -> Result<SolveReport> {
        let member_set: BTreeSet<&ProblemId> = members.iter().collect();
        let prev_id = self
            .models
            .values()
            .map(|m| {
                let overlap = m.members.iter().filter(|x| member_set.contains(x)).count();
                (
                    overlap,
                    m.members.len(),
                    std::cmp::Reverse(m.cluster_id),
                    m.cluster_id,
                )
            })
            .max()
            .map(|(_, _, _, id)| id)
            .expect("at least one model");

        let uncovered: Vec<ProblemId> = members
            .iter()
            .filter(|m| self.u_set.contains(*m))
            .cloned()
            .collect();
        let total_vectors: usize = members.iter().map(|m| self.problems[m].len()).sum();
        let uncovered_vectors: usize = uncovered.iter().map(|m| self.problems[m].len()).sum();
        let coverage = uncovered_vectors as f64 / total_vectors as f64;

        let mut retrained = false;
        let mut spent = 0usize;
        if coverage > self.config.t_cov {
            let n_prev = {
                let prev = &self.models[&prev_id];
                prev.retained
                    .iter()
                    .filter(|w| self.t_set.contains(&owner_of(w)))
                    .count()
            };
            let budget = retrain_budget(self.config.b_tot, coverage, n_prev);

            let pool = self.pool_of(&uncovered);
            let uniqueness = self.uniqueness_index();
            let seed = rng::split_seed(self.config.seed, "cov-retrain", self.recluster_epoch);
            let outcome =
                self.train_pool(&pool, &uniqueness, budget, self.config.batch, oracle, seed)?;
            spent = outcome.spent;

            let prev = self.models.get_mut(&prev_id).expect("model exists");
            self.history.push(HistoricalModel {
                cluster_id: prev_id,
                seq: self.recluster_epoch,
                model: prev.model.clone(),
            });
            prev.retained.extend(outcome.retained);
            let merged = LabeledSet::new(prev.retained.clone(), p_arity(&prev.retained))?;
            prev.model = train_ensemble(
                &merged,
                self.config.k,
                rng::split_seed(self.config.seed, "cov-merge", self.recluster_epoch),
                &self.config.tree,
            )?;
            prev.members = members.to_vec();
            prev.trained_on.extend(uncovered.iter().cloned());
            prev.spent += spent;
            prev.retrained_unix = Some(now_unix());
            for m in &uncovered {
                self.u_set.remove(m);
                self.t_set.insert(m.clone());
            }
            retrained = true;
            self.log(
                "retrained",
                format!(
                    "model={prev_id} cluster={c_new} coverage={coverage:.4} budget={budget} spent={spent}"
                ),
            );
        } else {
            self.log(
                "reused",
                format!("model={prev_id} cluster={c_new} coverage={coverage:.4}"),
            );
        }

        let model = &self.models[&prev_id];
        let predictions = self.classify_with(&model.model, &self.problems[pid])?;
        let profile = ProblemProfile::from_problem(&self.problems[pid])?;
        let pc = ProblemProfile::from_vectors(&model.retained)?;
        let sim_p = profile_similarity(&profile, &pc, &self.config.analysis)?.sim_p;
        Ok(SolveReport {
            problem_id: pid.clone(),
            strategy: "cov".into(),
            chosen_cluster: prev_id,
            sim_p,
            retrain_triggered: retrained,
            fresh_model: false,
            coverage: Some(coverage),
            extra_labels_spent: spent,
            predictions,
        })
    }
}

fn p_arity(vectors: &[FeatureVector]) -> usize {
    vectors.first().map(|w| w.arity()).unwrap_or(0)
}
