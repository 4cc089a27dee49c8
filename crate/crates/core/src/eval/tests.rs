use super::*;
use crate::er::RecordRef;
use crate::repository::Prediction;

fn pred(l: &str, r: &str, is_match: bool) -> Prediction {
    Prediction {
        left: RecordRef::new("s1", l).unwrap(),
        right: RecordRef::new("s2", r).unwrap(),
        is_match,
        fraction: if is_match { 1.0 } else { 0.0 },
    }
}

fn truth(pairs: &[(&str, &str, bool)]) -> Oracle {
    Oracle::from_pairs(pairs.iter().map(|(l, r, label)| {
        (
            (
                RecordRef::new("s1", *l).unwrap(),
                RecordRef::new("s2", *r).unwrap(),
            ),
            *label,
        )
    }))
}

#[test]
fn all_correct_is_perfect() {
    let oracle = truth(&[("a", "b", true), ("c", "d", false)]);
    let metrics = compute_metrics(&[pred("a", "b", true), pred("c", "d", false)], &oracle).unwrap();
    assert_eq!(metrics.precision, 1.0);
    assert_eq!(metrics.recall, 1.0);
    assert_eq!(metrics.f1, 1.0);
}

#[test]
fn hand_counted_example() {
    // tp=8, fp=2, fn=2 -> P = R = F1 = 0.8
    let mut pairs = Vec::new();
    let mut preds = Vec::new();
    for i in 0..8 {
        pairs.push((format!("t{i}"), true));
        preds.push((format!("t{i}"), true));
    }
    for i in 0..2 {
        pairs.push((format!("f{i}"), false));
        preds.push((format!("f{i}"), true)); // false positives
    }
    for i in 0..2 {
        pairs.push((format!("m{i}"), true));
        preds.push((format!("m{i}"), false)); // false negatives
    }
    let oracle = truth(
        &pairs
            .iter()
            .map(|(l, label)| (l.as_str(), "x", *label))
            .collect::<Vec<_>>(),
    );
    let predictions: Vec<Prediction> = preds
        .iter()
        .map(|(l, is_match)| pred(l, "x", *is_match))
        .collect();
    let metrics = compute_metrics(&predictions, &oracle).unwrap();
    assert_eq!((metrics.tp, metrics.fp, metrics.false_neg), (8, 2, 2));
    assert!((metrics.precision - 0.8).abs() < 1e-15);
    assert!((metrics.recall - 0.8).abs() < 1e-15);
    assert!((metrics.f1 - 0.8).abs() < 1e-15);
}

#[test]
fn zero_predicted_matches_scores_zero() {
    let oracle = truth(&[("a", "b", true), ("c", "d", true)]);
    let metrics =
        compute_metrics(&[pred("a", "b", false), pred("c", "d", false)], &oracle).unwrap();
    assert_eq!(metrics.precision, 0.0);
    assert_eq!(metrics.f1, 0.0);
    assert_eq!(metrics.false_neg, 2);
}

#[test]
fn unknown_pair_is_oracle_miss() {
    let oracle = truth(&[("a", "b", true)]);
    assert!(matches!(
        compute_metrics(&[pred("zz", "b", true)], &oracle),
        Err(crate::Error::OracleMiss { .. })
    ));
}

#[test]
fn metrics_consistency_against_oracle_matches() {
    // tp + fn equals the oracle match count restricted to evaluated pairs
    let oracle = truth(&[("a", "b", true), ("c", "d", true), ("e", "f", false)]);
    let predictions = vec![
        pred("a", "b", true),
        pred("c", "d", false),
        pred("e", "f", false),
    ];
    let metrics = compute_metrics(&predictions, &oracle).unwrap();
    assert_eq!(metrics.tp + metrics.false_neg, 2);
}

// ---- adjusted Rand index -----------------------------------------------------

#[test]
fn ari_identical_partitions() {
    assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
    assert_eq!(adjusted_rand_index(&[0, 1, 2], &[2, 0, 1]), 1.0);
}

#[test]
fn ari_detects_disagreement() {
    let a = [0, 0, 1, 1];
    let b = [0, 1, 0, 1];
    assert!(adjusted_rand_index(&a, &b) < 0.5);
    let near = [0, 0, 1, 1, 1, 0];
    let refp = [0, 0, 1, 1, 1, 1];
    let v = adjusted_rand_index(&near, &refp);
    assert!(v > 0.0 && v < 1.0);
}

// ---- synthetic generator -------------------------------------------------------

#[test]
fn two_regime_corpus_shape() {
    let mut spec = SynthSpec::two_regime_default(42);
    spec.vectors_per_problem = 60;
    spec.separation = 0.6; // small samples carry more KS noise
    let corpus = generate_synthetic(&spec).unwrap();
    // 4 choose 2 = 6 problems per regime, 2 regimes
    assert_eq!(corpus.problems.len(), 12);
    assert!(corpus.problems.iter().all(|p| p.len() == 60));
    let regime0 = corpus.regime_of.values().filter(|r| **r == 0).count();
    assert_eq!(regime0, 6);
    // the oracle covers every generated pair
    for p in &corpus.problems {
        for w in p.vectors() {
            assert!(corpus.oracle.lookup(&w.left, &w.right).is_some());
        }
    }
    // match ratio honored
    let matches = corpus.problems[0]
        .vectors()
        .iter()
        .filter(|w| corpus.oracle.label_of(w).unwrap())
        .count();
    assert_eq!(matches, 12); // 0.2 * 60
}

#[test]
fn one_regime_two_sources_is_one_problem() {
    let mut spec = SynthSpec::two_regime_default(1);
    spec.regimes.truncate(1);
    spec.sources_per_regime = 2;
    spec.vectors_per_problem = 40;
    spec.separation = 0.6;
    let corpus = generate_synthetic(&spec).unwrap();
    assert_eq!(corpus.problems.len(), 1);
}

#[test]
fn generation_is_deterministic() {
    let mut spec = SynthSpec::two_regime_default(7);
    spec.vectors_per_problem = 50;
    spec.separation = 0.6;
    let a = generate_synthetic(&spec).unwrap();
    let b = generate_synthetic(&spec).unwrap();
    assert_eq!(a.problems, b.problems);
    assert_eq!(a.oracle, b.oracle);
    let mut other = spec.clone();
    other.seed = 8;
    let c = generate_synthetic(&other).unwrap();
    assert_ne!(a.problems, c.problems);
}

#[test]
fn invalid_specs_rejected() {
    let mut spec = SynthSpec::two_regime_default(1);
    spec.match_ratio = 0.0;
    assert!(matches!(
        generate_synthetic(&spec),
        Err(crate::Error::InvalidSpec { .. })
    ));
    let mut spec = SynthSpec::two_regime_default(1);
    spec.regimes[0].match_mean[0] = 1.5;
    assert!(generate_synthetic(&spec).is_err());
    let mut spec = SynthSpec::two_regime_default(1);
    spec.sources_per_regime = 1;
    assert!(generate_synthetic(&spec).is_err());
}

#[test]
fn separation_check_fires_on_identical_regimes() {
    let mut spec = SynthSpec::two_regime_default(3);
    spec.vectors_per_problem = 80;
    spec.separation = 0.6;
    // make regime 1 a copy of regime 0: cross-regime KS collapses
    spec.regimes[1] = spec.regimes[0].clone();
    match generate_synthetic(&spec) {
        Err(crate::Error::InvalidSpec { reason }) => {
            assert!(reason.contains("cross-regime"), "{reason}");
        }
        other => panic!("expected separation failure, got {other:?}"),
    }
}

// ---- experiment driver ----------------------------------------------------------

#[test]
fn base_experiment_spends_no_extra_labels() {
    use crate::er::{write_manifest, write_problem_csv, DatasetManifest, ProblemEntry};

    let dir = tempfile::tempdir().unwrap();
    let mut spec = SynthSpec::two_regime_default(5);
    spec.vectors_per_problem = 60;
    spec.separation = 0.6;
    let corpus = generate_synthetic(&spec).unwrap();
    std::fs::create_dir_all(dir.path().join("problems")).unwrap();
    let mut entries = Vec::new();
    for p in &corpus.problems {
        let file = format!("problems/{}.csv", p.id().file_stem());
        write_problem_csv(p, &dir.path().join(&file)).unwrap();
        entries.push(ProblemEntry {
            source_a: p.pair().a.clone(),
            source_b: p.pair().b.clone(),
            path: file,
        });
    }
    corpus
        .oracle
        .to_csv(&dir.path().join("oracle.csv"))
        .unwrap();
    let manifest = DatasetManifest {
        name: "exp-test".into(),
        feature_names: spec.feature_names.clone(),
        problems: entries,
        oracle_path: Some("oracle.csv".into()),
    };
    let manifest_path = dir.path().join("manifest.json");
    write_manifest(&manifest, &manifest_path).unwrap();

    let mut config = ExperimentConfig::with_dataset(&manifest_path);
    config.b_tot = 200;
    config.k = 20;
    let report = run_experiment(&config).unwrap();
    assert_eq!(report.n_problems, 12);
    assert_eq!(report.n_initial + report.n_unsolved, 12);
    assert!(report.per_problem.iter().all(|r| r.extra_labels == 0));
    assert_eq!(report.extra_labels_total, 0);
    assert!(report.init_labels_spent <= 200);
    assert_eq!(
        report.total_labels_spent,
        report.init_labels_spent + report.extra_labels_total
    );
    assert!(report.micro.f1 >= 0.9, "micro f1 {}", report.micro.f1);
    assert!(report.macro_f1 >= 0.9, "macro f1 {}", report.macro_f1);
    let table = render_report_table(&report);
    assert!(table.contains("macro-F1"));
    assert!(table.contains("exp-test"));
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    use crate::er::{write_manifest, write_problem_csv, DatasetManifest, ProblemEntry};

    let dir = tempfile::tempdir().unwrap();
    let mut spec = SynthSpec::two_regime_default(9);
    spec.vectors_per_problem = 60;
    spec.separation = 0.6;
    let corpus = generate_synthetic(&spec).unwrap();
    std::fs::create_dir_all(dir.path().join("problems")).unwrap();
    let mut entries = Vec::new();
    for p in &corpus.problems {
        let file = format!("problems/{}.csv", p.id().file_stem());
        write_problem_csv(p, &dir.path().join(&file)).unwrap();
        entries.push(ProblemEntry {
            source_a: p.pair().a.clone(),
            source_b: p.pair().b.clone(),
            path: file,
        });
    }
    corpus.oracle.to_csv(&dir.path().join("oracle.csv")).unwrap();
    let manifest_path = dir.path().join("manifest.json");
    write_manifest(
        &DatasetManifest {
            name: "threads".into(),
            feature_names: spec.feature_names.clone(),
            problems: entries,
            oracle_path: Some("oracle.csv".into()),
        },
        &manifest_path,
    )
    .unwrap();

    let mut config = ExperimentConfig::with_dataset(&manifest_path);
    config.b_tot = 200;
    config.k = 20;

    let mut outputs = Vec::new();
    for threads in [1usize, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let report = pool.install(|| run_experiment(&config)).unwrap();
        outputs.push(report.canonical_json());
    }
    assert_eq!(outputs[0], outputs[1], "thread count changed the report");
}
