//! On-disk archive: a directory of inspectable, diff-able files.
//!
//! ```text
//! manifest.json       version stamp, config, T/U sets, model metadata
//! graph.tsv           edge list `id_a<TAB>id_b<TAB>weight`
//! clusters.json       current partition and its modularity
//! problems/<id>.csv   every integrated problem, canonical CSV
//! models/<id>.model   ensemble text format
//! models/history/     superseded models kept after retraining
//! pc/<id>.csv         each model's retained labeled vectors
//! audit.log           one JSON event per line
//! ```
//!
//! Saving is a pure function of repository state, so save -> load -> save
//! produces byte-identical archives.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::EnsembleModel;
use crate::dist::ProblemProfile;
use crate::er::{
    read_problem_csv, write_problem_csv, ERProblem, FeatureVector, ProblemId, RecordRef, SourcePair,
};
use crate::error::{Error, Result};
use crate::graph::{ClusterId, Clustering, ProblemGraph};
use crate::Value;

use super::{AuditEvent, ClusterModel, HistoricalModel, RepoConfig, Repository};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveProblem {
    id: String,
    source_a: String,
    source_b: String,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveModel {
    cluster_id: u32,
    members: Vec<String>,
    trained_on: Vec<String>,
    budget: usize,
    spent: usize,
    created_unix: u64,
    retrained_unix: Option<u64>,
    model_file: String,
    pc_file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveHistory {
    cluster_id: u32,
    seq: u64,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveManifest {
    format_version: u32,
    tool_version: String,
    created_unix: u64,
    config: RepoConfig,
    feature_names: Vec<String>,
    problems: Vec<ArchiveProblem>,
    t: Vec<String>,
    u: Vec<String>,
    models: Vec<ArchiveModel>,
    history: Vec<ArchiveHistory>,
    next_cluster_id: u32,
    recluster_epoch: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterEntry {
    id: u32,
    members: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClustersFile {
    quality: f64,
    clusters: Vec<ClusterEntry>,
}

fn corrupt(section: impl Into<String>) -> Error {
    Error::CorruptManifest {
        section: section.into(),
    }
}

fn write(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read(path: &Path, section: &str) -> Result<String> {
    if !path.is_file() {
        return Err(corrupt(format!("{section} missing")));
    }
    std::fs::read_to_string(path).map_err(|e| corrupt(format!("{section}: {e}")))
}

/// Deterministic problem-file naming: sanitized id, suffixed on collision.
fn problem_file_names(ids: &[&ProblemId]) -> BTreeMap<ProblemId, String> {
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut names = BTreeMap::new();
    for id in ids {
        let stem = id.file_stem();
        let mut name = format!("{stem}.csv");
        let mut suffix = 2usize;
        while !used.insert(name.clone()) {
            name = format!("{stem}__{suffix}.csv");
            suffix += 1;
        }
        names.insert((*id).clone(), name);
    }
    names
}

/// Write a labeled vector set (a model's `P_C`) preserving order.
fn write_labeled_csv(
    vectors: &[FeatureVector],
    feature_names: &[String],
    path: &Path,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut header = vec![
        "left_source".to_string(),
        "left_id".to_string(),
        "right_source".to_string(),
        "right_id".to_string(),
    ];
    header.extend(feature_names.iter().cloned());
    header.push("label".to_string());
    writer.write_record(&header).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    for v in vectors {
        let mut row = vec![
            v.left.source_id.clone(),
            v.left.record_id.clone(),
            v.right.source_id.clone(),
            v.right.record_id.clone(),
        ];
        row.extend(v.values.iter().map(|x| x.to_string()));
        row.push(if v.label == Some(true) { "1" } else { "0" }.to_string());
        writer.write_record(&row).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_labeled_csv(path: &Path, arity: usize, section: &str) -> Result<Vec<FeatureVector>> {
    let text = read(path, section)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let mut vectors = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| corrupt(format!("{section} row {}: {e}", i + 1)))?;
        if record.len() != 5 + arity {
            return Err(corrupt(format!(
                "{section} row {}: expected {} columns, got {}",
                i + 1,
                5 + arity,
                record.len()
            )));
        }
        let left = RecordRef::new(&record[0], &record[1])
            .map_err(|e| corrupt(format!("{section} row {}: {e}", i + 1)))?;
        let right = RecordRef::new(&record[2], &record[3])
            .map_err(|e| corrupt(format!("{section} row {}: {e}", i + 1)))?;
        let mut values = Vec::with_capacity(arity);
        for field in record.iter().skip(4).take(arity) {
            values.push(field.parse::<Value>().map_err(|e| {
                corrupt(format!("{section} row {}: bad value {field:?}: {e}", i + 1))
            })?);
        }
        let label = match &record[4 + arity] {
            "1" => true,
            "0" => false,
            other => {
                return Err(corrupt(format!(
                    "{section} row {}: bad label {other:?}",
                    i + 1
                )))
            }
        };
        vectors.push(FeatureVector {
            left,
            right,
            values,
            label: Some(label),
        });
    }
    Ok(vectors)
}

/// Write the full repository state to `dir`.
///
/// With `overwrite`, an existing archive at `dir` (recognized by its
/// `manifest.json`) is replaced; refusing to clobber arbitrary directories.
pub fn save_repository(repo: &Repository, dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let is_archive = dir.join("manifest.json").is_file();
        let is_empty = dir
            .read_dir()
            .map(|mut d| d.next().is_none())
            .unwrap_or(false);
        if !overwrite && !is_empty {
            return Err(Error::InvalidValue {
                reason: format!(
                    "{} already exists; pass overwrite to replace it",
                    dir.display()
                ),
            });
        }
        if !is_archive && !is_empty {
            return Err(Error::InvalidValue {
                reason: format!(
                    "{} exists and is not a repository archive; refusing to overwrite",
                    dir.display()
                ),
            });
        }
        if !is_empty {
            std::fs::remove_dir_all(dir)
                .map_err(|e| Error::io(format!("clearing {}", dir.display()), e))?;
        }
    }
    for sub in ["problems", "models", "models/history", "pc"] {
        std::fs::create_dir_all(dir.join(sub))
            .map_err(|e| Error::io(format!("creating {}", dir.join(sub).display()), e))?;
    }

    let ids: Vec<&ProblemId> = repo.problems.keys().collect();
    let file_names = problem_file_names(&ids);
    for (id, problem) in &repo.problems {
        write_problem_csv(problem, &dir.join("problems").join(&file_names[id]))?;
    }

    write(&dir.join("graph.tsv"), &repo.graph.export_edge_list())?;

    let clusters_file = ClustersFile {
        quality: repo.clustering.quality,
        clusters: repo
            .clustering
            .clusters
            .iter()
            .map(|(c, members)| ClusterEntry {
                id: c.0,
                members: members.iter().map(|m| m.0.clone()).collect(),
            })
            .collect(),
    };
    write(
        &dir.join("clusters.json"),
        &(serde_json::to_string_pretty(&clusters_file).expect("clusters serialize") + "\n"),
    )?;

    let mut models = Vec::new();
    for (c, m) in &repo.models {
        let model_file = format!("models/{}.model", c.0);
        let pc_file = format!("pc/{}.csv", c.0);
        write(&dir.join(&model_file), &m.model.to_text())?;
        write_labeled_csv(&m.retained, &repo.feature_names, &dir.join(&pc_file))?;
        models.push(ArchiveModel {
            cluster_id: c.0,
            members: m.members.iter().map(|x| x.0.clone()).collect(),
            trained_on: m.trained_on.iter().map(|x| x.0.clone()).collect(),
            budget: m.budget,
            spent: m.spent,
            created_unix: m.created_unix,
            retrained_unix: m.retrained_unix,
            model_file,
            pc_file,
        });
    }

    let mut history = Vec::new();
    for h in &repo.history {
        let file = format!("models/history/{}_{}.model", h.cluster_id.0, h.seq);
        write(&dir.join(&file), &h.model.to_text())?;
        history.push(ArchiveHistory {
            cluster_id: h.cluster_id.0,
            seq: h.seq,
            file,
        });
    }

    let manifest = ArchiveManifest {
        format_version: FORMAT_VERSION,
        tool_version: repo.version.clone(),
        created_unix: repo.created_unix,
        config: repo.config.clone(),
        feature_names: repo.feature_names.clone(),
        problems: repo
            .problems
            .keys()
            .map(|id| {
                let pair = repo.problems[id].pair();
                ArchiveProblem {
                    id: id.0.clone(),
                    source_a: pair.a.clone(),
                    source_b: pair.b.clone(),
                    file: format!("problems/{}", file_names[id]),
                }
            })
            .collect(),
        t: repo.t_set.iter().map(|x| x.0.clone()).collect(),
        u: repo.u_set.iter().map(|x| x.0.clone()).collect(),
        models,
        history,
        next_cluster_id: repo.next_cluster_id,
        recluster_epoch: repo.recluster_epoch,
    };
    write(
        &dir.join("manifest.json"),
        &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
    )?;

    let mut audit = String::new();
    for event in &repo.audit {
        audit.push_str(&serde_json::to_string(event).expect("audit serializes"));
        audit.push('\n');
    }
    write(&dir.join("audit.log"), &audit)
}

/// Load a repository archive, validating structure and version.
pub fn load_repository(dir: &Path) -> Result<Repository> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.is_file() {
        return Err(Error::MissingFile {
            path: manifest_path,
        });
    }
    let manifest: ArchiveManifest = serde_json::from_str(&read(&manifest_path, "manifest.json")?)
        .map_err(|e| corrupt(format!("manifest.json: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: format!("format {}", manifest.format_version),
            expected: format!("format {FORMAT_VERSION}"),
        });
    }
    if manifest.tool_version != crate::VERSION {
        return Err(Error::VersionMismatch {
            found: manifest.tool_version,
            expected: crate::VERSION.to_string(),
        });
    }
    manifest
        .config
        .analysis
        .validate()
        .map_err(|e| corrupt(format!("manifest.json config: {e}")))?;

    let arity = manifest.feature_names.len();
    let mut problems: BTreeMap<ProblemId, ERProblem> = BTreeMap::new();
    for entry in &manifest.problems {
        let pair = SourcePair::new(entry.source_a.clone(), entry.source_b.clone());
        if pair.id().0 != entry.id {
            return Err(corrupt(format!(
                "manifest.json problem {} does not match sources ({}, {})",
                entry.id, entry.source_a, entry.source_b
            )));
        }
        let problem = read_problem_csv(&dir.join(&entry.file), &manifest.feature_names, &pair)
            .map_err(|e| corrupt(format!("{}: {e}", entry.file)))?;
        problems.insert(problem.id(), problem);
    }
    if problems.len() != manifest.problems.len() {
        return Err(corrupt("manifest.json lists duplicate problems"));
    }

    let mut nodes: BTreeMap<ProblemId, ProblemProfile<Value>> = BTreeMap::new();
    for (id, problem) in &problems {
        nodes.insert(id.clone(), ProblemProfile::from_problem(problem)?);
    }
    let graph = ProblemGraph::parse_edge_list(
        &read(&dir.join("graph.tsv"), "graph.tsv")?,
        nodes,
        manifest.config.min_edge_sim,
    )?;

    let clusters_file: ClustersFile =
        serde_json::from_str(&read(&dir.join("clusters.json"), "clusters.json")?)
            .map_err(|e| corrupt(format!("clusters.json: {e}")))?;
    let mut assignment = BTreeMap::new();
    let mut clusters = BTreeMap::new();
    for entry in clusters_file.clusters {
        let cid = ClusterId(entry.id);
        let members: Vec<ProblemId> = entry.members.into_iter().map(ProblemId).collect();
        for m in &members {
            if !problems.contains_key(m) {
                return Err(corrupt(format!(
                    "clusters.json references unknown problem {m}"
                )));
            }
            if assignment.insert(m.clone(), cid).is_some() {
                return Err(corrupt(format!("clusters.json assigns {m} twice")));
            }
        }
        clusters.insert(cid, members);
    }
    for id in problems.keys() {
        if !assignment.contains_key(id) {
            return Err(corrupt(format!("clusters.json misses problem {id}")));
        }
    }
    let clustering = Clustering {
        assignment,
        clusters,
        quality: clusters_file.quality,
    };

    let mut models = BTreeMap::new();
    for m in &manifest.models {
        let cid = ClusterId(m.cluster_id);
        let model = EnsembleModel::from_text(
            &read(&dir.join(&m.model_file), &m.model_file)?,
            &m.model_file,
        )?;
        let retained = read_labeled_csv(&dir.join(&m.pc_file), arity, &m.pc_file)?;
        if retained.is_empty() {
            return Err(corrupt(format!("{} holds no vectors", m.pc_file)));
        }
        models.insert(
            cid,
            ClusterModel {
                cluster_id: cid,
                members: m.members.iter().cloned().map(ProblemId).collect(),
                model,
                retained,
                trained_on: m.trained_on.iter().cloned().map(ProblemId).collect(),
                budget: m.budget,
                spent: m.spent,
                created_unix: m.created_unix,
                retrained_unix: m.retrained_unix,
            },
        );
    }

    let mut history = Vec::new();
    for h in &manifest.history {
        history.push(HistoricalModel {
            cluster_id: ClusterId(h.cluster_id),
            seq: h.seq,
            model: EnsembleModel::from_text(&read(&dir.join(&h.file), &h.file)?, &h.file)?,
        });
    }

    let t_set: BTreeSet<ProblemId> = manifest.t.iter().cloned().map(ProblemId).collect();
    let u_set: BTreeSet<ProblemId> = manifest.u.iter().cloned().map(ProblemId).collect();
    if !t_set.is_disjoint(&u_set) {
        return Err(corrupt("manifest.json: T and U overlap"));
    }

    let mut audit = Vec::new();
    for (i, line) in read(&dir.join("audit.log"), "audit.log")?
        .lines()
        .enumerate()
    {
        if line.is_empty() {
            continue;
        }
        let event: AuditEvent = serde_json::from_str(line)
            .map_err(|e| corrupt(format!("audit.log line {}: {e}", i + 1)))?;
        audit.push(event);
    }

    Ok(Repository {
        version: manifest.tool_version,
        created_unix: manifest.created_unix,
        config: manifest.config,
        feature_names: manifest.feature_names,
        problems,
        graph,
        clustering,
        models,
        t_set,
        u_set,
        history,
        audit,
        next_cluster_id: manifest.next_cluster_id,
        recluster_epoch: manifest.recluster_epoch,
    })
}

/// Compare two archive directories byte-for-byte.
pub fn archives_identical(a: &Path, b: &Path) -> Result<bool> {
    fn walk(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in std::fs::read_dir(dir)
            .map_err(|e| Error::io(format!("reading {}", dir.display()), e))?
        {
            let entry = entry.map_err(|e| Error::io("reading archive entry".to_string(), e))?;
            let path = entry.path();
            if path.is_dir() {
                walk(&path, base, out)?;
            } else {
                out.push(path.strip_prefix(base).expect("under base").to_path_buf());
            }
        }
        Ok(())
    }
    let mut files_a = Vec::new();
    let mut files_b = Vec::new();
    walk(a, a, &mut files_a)?;
    walk(b, b, &mut files_b)?;
    files_a.sort();
    files_b.sort();
    if files_a != files_b {
        return Ok(false);
    }
    for rel in files_a {
        let ca = std::fs::read(a.join(&rel))
            .map_err(|e| Error::io(format!("reading {}", rel.display()), e))?;
        let cb = std::fs::read(b.join(&rel))
            .map_err(|e| Error::io(format!("reading {}", rel.display()), e))?;
        if ca != cb {
            return Ok(false);
        }
    }
    Ok(true)
}
