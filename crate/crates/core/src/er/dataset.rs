//! Dataset manifests and the feature-vector CSV format.
//!
//! A dataset is a JSON manifest naming one CSV file per ER problem plus an
//! optional ground-truth file. Feature CSVs are label-free:
//!
//! ```text
//! left_source,left_id,right_source,right_id,f_1,...,f_t
//! ```
//!
//! Ground truth lives in a separate CSV with columns
//! `left_source,left_id,right_source,right_id,label`. Values use UTF-8,
//! comma separators, and `.` decimals. Rows may name the source pair in
//! either orientation; they are normalized to the lexicographic pair order
//! on load.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Value;

use super::types::{ERProblem, FeatureVector, RecordRef, SourcePair};

/// One problem entry of a dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemEntry {
    pub source_a: String,
    pub source_b: String,
    pub path: String,
}

/// Dataset manifest: feature names shared by all problems, the problem file
/// list, and the optional oracle path. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub feature_names: Vec<String>,
    pub problems: Vec<ProblemEntry>,
    #[serde(default)]
    pub oracle_path: Option<String>,
}

impl DatasetManifest {
    /// Resolve a manifest-relative path.
    pub fn resolve(&self, base: &Path, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.is_file() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, text + "\n")
        .map_err(|e| Error::io(format!("writing manifest {}", path.display()), e))
}

/// Load a dataset: every problem file is parsed, validated (value range,
/// arity, duplicate pairs), normalized to pair order, and returned sorted by
/// source pair. Files load in parallel.
pub fn load_dataset(manifest_path: &Path) -> Result<(DatasetManifest, Vec<ERProblem>)> {
    let manifest = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut problems: Vec<ERProblem> = manifest
        .problems
        .par_iter()
        .map(|entry| {
            let path = manifest.resolve(base, &entry.path);
            let pair = SourcePair::new(entry.source_a.clone(), entry.source_b.clone());
            read_problem_csv(&path, &manifest.feature_names, &pair)
        })
        .collect::<Result<Vec<_>>>()?;
    problems.sort_by_key(|p| p.id());
    for w in problems.windows(2) {
        if w[0].id() == w[1].id() {
            return Err(Error::DuplicateProblem { id: w[0].id().0 });
        }
    }
    Ok((manifest, problems))
}

/// Parse one problem file. Rows must name `declared` (in either orientation);
/// arity must match `feature_names`.
pub fn read_problem_csv(
    path: &Path,
    feature_names: &[String],
    declared: &SourcePair,
) -> Result<ERProblem> {
    if !path.is_file() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let arity = feature_names.len();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;

    {
        let headers = reader.headers().map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let expected_header = 4 + arity;
        if headers.len() != expected_header {
            return Err(Error::ArityMismatch {
                context: format!("header of {}", path.display()),
                expected: arity,
                got: headers.len().saturating_sub(4),
            });
        }
    }

    let mut vectors = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1; // 1-based data row, header excluded
        let record = record.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: format!("row {row}: {e}"),
        })?;
        if record.len() != 4 + arity {
            return Err(Error::ArityMismatch {
                context: format!("row {row} of {}", path.display()),
                expected: arity,
                got: record.len().saturating_sub(4),
            });
        }
        let left = RecordRef::new(&record[0], &record[1])?;
        let right = RecordRef::new(&record[2], &record[3])?;
        let row_pair = SourcePair::new(left.source_id.clone(), right.source_id.clone());
        if row_pair != *declared {
            return Err(Error::SourcePairMismatch {
                path: path.display().to_string(),
                row,
                expected: declared.to_string(),
                got: format!("({}, {})", left.source_id, right.source_id),
            });
        }
        let mut values = Vec::with_capacity(arity);
        for (j, field) in record.iter().skip(4).enumerate() {
            let v: Value = field.trim().parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                message: format!("row {row}: not a number: {field:?}"),
            })?;
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::ValueOutOfRange {
                    row,
                    column: feature_names[j].clone(),
                    value: v,
                });
            }
            values.push(v);
        }
        // Normalize orientation: left belongs to the lexicographically
        // smaller source; within self-pairs, the smaller record id.
        let (left, right) = if left.source_id > right.source_id
            || (left.source_id == right.source_id && left.record_id > right.record_id)
        {
            (right, left)
        } else {
            (left, right)
        };
        vectors.push(FeatureVector {
            left,
            right,
            values,
            label: None,
        });
    }
    ERProblem::new(declared.clone(), feature_names.to_vec(), vectors)
}

/// Write a problem back to the canonical CSV layout. Floats print in the
/// shortest form that round-trips bit-exactly.
pub fn write_problem_csv(problem: &ERProblem, path: &Path) -> Result<()> {
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
    header.extend(problem.feature_names().iter().cloned());
    writer.write_record(&header).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    for v in problem.vectors() {
        let mut row = vec![
            v.left.source_id.clone(),
            v.left.record_id.clone(),
            v.right.source_id.clone(),
            v.right.record_id.clone(),
        ];
        row.extend(v.values.iter().map(|x| x.to_string()));
        writer.write_record(&row).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, content: &str) {
        std::fs::write(path, content).unwrap();
    }

    fn manifest_with(dir: &Path, files: &[(&str, &str, &str)]) -> PathBuf {
        let manifest = DatasetManifest {
            name: "test".into(),
            feature_names: vec!["f1".into(), "f2".into(), "f3".into()],
            problems: files
                .iter()
                .map(|(a, b, p)| ProblemEntry {
                    source_a: a.to_string(),
                    source_b: b.to_string(),
                    path: p.to_string(),
                })
                .collect(),
            oracle_path: None,
        };
        let path = dir.join("manifest.json");
        write_manifest(&manifest, &path).unwrap();
        path
    }

    #[test]
    fn loads_single_row_problem() {
        let dir = tempfile::tempdir().unwrap();
        write(
            &dir.path().join("p.csv"),
            "left_source,left_id,right_source,right_id,f1,f2,f3\ns1,r1,s2,r9,0.5,1.0,0.0\n",
        );
        let manifest = manifest_with(dir.path(), &[("s1", "s2", "p.csv")]);
        let (_, problems) = load_dataset(&manifest).unwrap();
        assert_eq!(problems.len(), 1);
        assert_eq!(problems[0].id().0, "s1|s2");
        assert_eq!(problems[0].vectors().len(), 1);
        assert_eq!(problems[0].vectors()[0].values, vec![0.5, 1.0, 0.0]);
    }

    #[test]
    fn rejects_out_of_range_value_with_location() {
        let dir = tempfile::tempdir().unwrap();
        write(
            &dir.path().join("p.csv"),
            "left_source,left_id,right_source,right_id,f1,f2,f3\ns1,r1,s2,r9,0.5,1.2,0.0\n",
        );
        let manifest = manifest_with(dir.path(), &[("s1", "s2", "p.csv")]);
        match load_dataset(&manifest) {
            Err(Error::ValueOutOfRange { row, column, value }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "f2");
                assert_eq!(value, 1.2);
            }
            other => panic!("expected ValueOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn rejects_arity_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write(
            &dir.path().join("p.csv"),
            "left_source,left_id,right_source,right_id,f1,f2,f3\ns1,r1,s2,r9,0.5,1.0\n",
        );
        let manifest = manifest_with(dir.path(), &[("s1", "s2", "p.csv")]);
        assert!(matches!(
            load_dataset(&manifest),
            Err(Error::ArityMismatch { .. })
        ));
    }

    #[test]
    fn rejects_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = manifest_with(dir.path(), &[("s1", "s2", "absent.csv")]);
        assert!(matches!(
            load_dataset(&manifest),
            Err(Error::MissingFile { .. })
        ));
    }

    #[test]
    fn normalizes_row_orientation() {
        let dir = tempfile::tempdir().unwrap();
        write(
            &dir.path().join("p.csv"),
            "left_source,left_id,right_source,right_id,f1,f2,f3\ns2,r9,s1,r1,0.5,0.6,0.7\n",
        );
        let manifest = manifest_with(dir.path(), &[("s1", "s2", "p.csv")]);
        let (_, problems) = load_dataset(&manifest).unwrap();
        let v = &problems[0].vectors()[0];
        assert_eq!(v.left.source_id, "s1");
        assert_eq!(v.right.source_id, "s2");
    }

    #[test]
    fn rejects_foreign_source_pair() {
        let dir = tempfile::tempdir().unwrap();
        write(
            &dir.path().join("p.csv"),
            "left_source,left_id,right_source,right_id,f1,f2,f3\ns1,r1,s3,r9,0.5,0.6,0.7\n",
        );
        let manifest = manifest_with(dir.path(), &[("s1", "s2", "p.csv")]);
        assert!(matches!(
            load_dataset(&manifest),
            Err(Error::SourcePairMismatch { .. })
        ));
    }

    #[test]
    fn round_trip_preserves_vectors() {
        let dir = tempfile::tempdir().unwrap();
        write(
            &dir.path().join("p.csv"),
            "left_source,left_id,right_source,right_id,f1,f2,f3\n\
             s1,r1,s2,x2,0.123456789012345,1.0,0.0\n\
             s1,r2,s2,x1,0.9999999999,0.3,0.25\n",
        );
        let manifest = manifest_with(dir.path(), &[("s1", "s2", "p.csv")]);
        let (m, problems) = load_dataset(&manifest).unwrap();
        let out = dir.path().join("out.csv");
        write_problem_csv(&problems[0], &out).unwrap();
        let reloaded = read_problem_csv(&out, &m.feature_names, problems[0].pair()).unwrap();
        assert_eq!(problems[0], reloaded);
    }
}
