use super::*;
use crate::er::RecordRef;
use crate::eval::compute_metrics;
use crate::repository::Prediction;

fn labeled(values: Vec<Value>, label: bool, i: usize) -> FeatureVector {
    FeatureVector::new(
        RecordRef::new("a", format!("l{i}")).unwrap(),
        RecordRef::new("b", format!("r{i}")).unwrap(),
        values,
    )
    .unwrap()
    .with_label(label)
}

/// 1-feature set, matches at f >= 0.8.
fn separable_1d(n_per_class: usize) -> LabeledSet {
    let mut vectors = Vec::new();
    for i in 0..n_per_class {
        let lo = 0.1 + 0.5 * (i as Value / n_per_class as Value);
        let hi = 0.8 + 0.19 * (i as Value / n_per_class as Value);
        vectors.push(labeled(vec![lo], false, i));
        vectors.push(labeled(vec![hi], true, n_per_class + i));
    }
    LabeledSet::new(vectors, 1).unwrap()
}

#[test]
fn separable_data_gets_one_split_near_boundary() {
    let data = separable_1d(10);
    let tree = train_tree(&data, &TrainConfig::default(), 7).unwrap();
    let splits: Vec<_> = tree
        .nodes()
        .iter()
        .filter_map(|n| match n {
            Node::Split { threshold, .. } => Some(*threshold),
            Node::Leaf { .. } => None,
        })
        .collect();
    assert_eq!(splits.len(), 1);
    assert!(
        splits[0] > 0.55 && splits[0] < 0.8,
        "threshold {}",
        splits[0]
    );
    let correct = data
        .vectors()
        .iter()
        .filter(|v| tree.predict(&v.values) == v.label.unwrap())
        .count();
    assert_eq!(correct, data.len());
}

#[test]
fn pure_class_is_a_single_leaf() {
    let vectors = (0..5).map(|i| labeled(vec![0.2, 0.9], true, i)).collect();
    let data = LabeledSet::new(vectors, 2).unwrap();
    let tree = train_tree(&data, &TrainConfig::default(), 0).unwrap();
    assert_eq!(tree.nodes().len(), 1);
    assert_eq!(tree.predict_prob(&[0.5, 0.5]), 1.0);
}

#[test]
fn contradictory_duplicates_yield_half_leaf() {
    let data = LabeledSet::new(
        vec![labeled(vec![0.5], true, 0), labeled(vec![0.5], false, 1)],
        1,
    )
    .unwrap();
    let tree = train_tree(&data, &TrainConfig::default(), 0).unwrap();
    assert_eq!(tree.nodes().len(), 1);
    assert_eq!(tree.predict_prob(&[0.5]), 0.5);
    // ties at exactly 0.5 classify as match
    assert!(tree.predict(&[0.5]));
}

#[test]
fn empty_training_set_rejected() {
    let data = LabeledSet::new(vec![], 1).unwrap();
    assert!(matches!(
        train_tree(&data, &TrainConfig::default(), 0),
        Err(Error::EmptyTrainingSet)
    ));
    assert!(matches!(
        train_ensemble(&data, 3, 0, &TrainConfig::default()),
        Err(Error::EmptyTrainingSet)
    ));
}

#[test]
fn single_class_ensemble_rejected() {
    let vectors = (0..5).map(|i| labeled(vec![0.9], true, i)).collect();
    let data = LabeledSet::new(vectors, 1).unwrap();
    assert!(matches!(
        train_ensemble(&data, 3, 0, &TrainConfig::default()),
        Err(Error::SingleClassTrainingSet)
    ));
}

#[test]
fn ensemble_is_deterministic_under_seed() {
    let data = separable_1d(15);
    let a = train_ensemble(&data, 20, 42, &TrainConfig::default()).unwrap();
    let b = train_ensemble(&data, 20, 42, &TrainConfig::default()).unwrap();
    assert_eq!(a, b);
    let c = train_ensemble(&data, 20, 43, &TrainConfig::default()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn k1_matches_its_single_tree() {
    let data = separable_1d(15);
    let ensemble = train_ensemble(&data, 1, 9, &TrainConfig::default()).unwrap();
    for v in data.vectors() {
        let tree_vote = ensemble.trees()[0].predict(&v.values);
        let fraction = ensemble.predict_match_fraction(v).unwrap();
        assert_eq!(fraction, if tree_vote { 1.0 } else { 0.0 });
    }
}

#[test]
fn vote_fractions_count_trees() {
    let match_leaf = TreeModel::from_nodes(vec![Node::Leaf { p_match: 1.0 }], 0);
    let non_leaf = TreeModel::from_nodes(vec![Node::Leaf { p_match: 0.0 }], 0);
    let mut trees = vec![match_leaf; 50];
    trees.extend(vec![non_leaf; 50]);
    let ensemble = EnsembleModel::from_trees(trees, 0, 1, TrainConfig::default()).unwrap();
    let w = labeled(vec![0.5], true, 0);
    assert_eq!(ensemble.predict_match_fraction(&w).unwrap(), 0.5);
    // 0.5 fraction classifies as match
    assert!(ensemble.classify(&w).unwrap().0);

    let all_match = EnsembleModel::from_trees(
        vec![TreeModel::from_nodes(vec![Node::Leaf { p_match: 1.0 }], 0); 7],
        0,
        1,
        TrainConfig::default(),
    )
    .unwrap();
    assert_eq!(all_match.predict_match_fraction(&w).unwrap(), 1.0);
}

#[test]
fn prediction_validates_input() {
    let data = separable_1d(10);
    let ensemble = train_ensemble(&data, 5, 1, &TrainConfig::default()).unwrap();
    let wrong_arity = labeled(vec![0.5, 0.6], true, 0);
    assert!(matches!(
        ensemble.predict_match_fraction(&wrong_arity),
        Err(Error::ArityMismatch { .. })
    ));
    let mut nan = labeled(vec![0.5], true, 0);
    nan.values[0] = Value::NAN;
    assert!(matches!(
        ensemble.predict_match_fraction(&nan),
        Err(Error::InvalidValue { .. })
    ));
}

#[test]
fn separable_two_feature_f1_high() {
    // >= 50 per class, 2 features, disjoint class regions
    let mut vectors = Vec::new();
    for i in 0..60 {
        let t = i as Value / 60.0;
        vectors.push(labeled(vec![0.75 + 0.2 * t, 0.8 + 0.15 * t], true, i));
        vectors.push(labeled(
            vec![0.05 + 0.4 * t, 0.1 + 0.35 * t],
            false,
            100 + i,
        ));
    }
    let data = LabeledSet::new(vectors, 2).unwrap();
    let ensemble = train_ensemble(&data, 100, 5, &TrainConfig::default()).unwrap();

    let mut predictions = Vec::new();
    let mut truth = Vec::new();
    for i in 0..40 {
        let t = i as Value / 40.0;
        let m = labeled(vec![0.78 + 0.18 * t, 0.82 + 0.1 * t], true, 1000 + i);
        let n = labeled(vec![0.1 + 0.3 * t, 0.15 + 0.3 * t], false, 2000 + i);
        for w in [m, n] {
            let (is_match, fraction) = ensemble.classify(&w).unwrap();
            truth.push((w.pair_key(), w.label.unwrap()));
            predictions.push(Prediction {
                left: w.left.clone(),
                right: w.right.clone(),
                is_match,
                fraction,
            });
        }
    }
    let oracle = crate::active::Oracle::from_pairs(truth);
    let metrics = compute_metrics(&predictions, &oracle).unwrap();
    assert!(metrics.f1 >= 0.99, "f1 = {}", metrics.f1);
}

#[test]
fn text_format_round_trips_bit_exactly() {
    let data = separable_1d(20);
    let ensemble = train_ensemble(&data, 10, 1234, &TrainConfig::default()).unwrap();
    let text = ensemble.to_text();
    let parsed = EnsembleModel::from_text(&text, "test model").unwrap();
    assert_eq!(ensemble, parsed);
    assert_eq!(parsed.to_text(), text);
}

#[test]
fn truncated_model_text_rejected() {
    let data = separable_1d(5);
    let ensemble = train_ensemble(&data, 3, 0, &TrainConfig::default()).unwrap();
    let text = ensemble.to_text();
    let truncated: String = text.lines().take(8).collect::<Vec<_>>().join("\n");
    assert!(matches!(
        EnsembleModel::from_text(&truncated, "m"),
        Err(Error::CorruptManifest { .. })
    ));
}

#[test]
fn feature_subsample_is_deterministic() {
    let mut vectors = Vec::new();
    for i in 0..30 {
        let t = i as Value / 30.0;
        vectors.push(labeled(
            vec![0.8 + 0.1 * t, 0.7 + 0.2 * t, 0.9 - 0.1 * t],
            true,
            i,
        ));
        vectors.push(labeled(
            vec![0.2 - 0.1 * t, 0.3 + 0.1 * t, 0.1 + 0.2 * t],
            false,
            50 + i,
        ));
    }
    let data = LabeledSet::new(vectors, 3).unwrap();
    let cfg = TrainConfig {
        feature_subsample: Some(2),
        ..TrainConfig::default()
    };
    let a = train_ensemble(&data, 10, 3, &cfg).unwrap();
    let b = train_ensemble(&data, 10, 3, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tree_kernel_is_generic_over_f32() {
    let lo = TreeModel::<f32>::from_nodes(
        vec![
            Node::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            Node::Leaf { p_match: 0.0 },
            Node::Leaf { p_match: 1.0 },
        ],
        0,
    );
    assert!(!lo.predict(&[0.3f32]));
    assert!(lo.predict(&[0.8f32]));
    let ensemble =
        EnsembleModel::from_trees(vec![lo.clone(), lo], 0, 1, TrainConfig::default()).unwrap();
    assert_eq!(ensemble.match_fraction_of(&[0.9f32]), 1.0f32);
    assert_eq!(ensemble.match_votes(&[0.1f32]), 0);
}
