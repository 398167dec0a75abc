#![allow(clippy::needless_range_loop)]

use super::*;
use crate::data::{generate_synthetic, SyntheticConfig};
use crate::tensor::Tape;

fn small_fixture() -> Dataset {
    generate_synthetic(&SyntheticConfig {
        num_nodes: 30,
        num_classes: 3,
        edges_per_class: 8,
        edge_size: 3,
        noise: 0.5,
        seed: 1,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

fn fast_cfg(ds: &Dataset) -> ModelConfig {
    ModelConfig {
        gamma: 0.3,
        num_layers: 1,
        num_heads: 2,
        d_h: 8,
        d_k: 4,
        d_q: 4,
        dropout_p: 0.2,
        num_classes: ds.num_classes,
        feature_dim: ds.feature_dim(),
        epochs: 30,
        seed: 0,
        ..ModelConfig::default()
    }
}

// ----- folds -----

#[test]
fn balanced_two_class_folds_have_one_test_node_per_class() {
    let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
    let folds = make_folds(&labels, 10, 7).unwrap();
    assert_eq!(folds.len(), 10);
    for fold in &folds {
        let per_class: Vec<usize> = (0..2)
            .map(|c| {
                (0..20)
                    .filter(|&i| fold.test_mask[i] && labels[i] == c)
                    .count()
            })
            .collect();
        assert_eq!(per_class, vec![1, 1]);
    }
}

#[test]
fn folds_partition_all_nodes() {
    let labels: Vec<usize> = (0..47).map(|i| i % 3).collect();
    let folds = make_folds(&labels, 10, 3).unwrap();
    let mut covered = vec![0usize; 47];
    for fold in &folds {
        for i in 0..47 {
            assert_ne!(
                fold.train_mask[i], fold.test_mask[i],
                "masks must be complementary"
            );
            if fold.test_mask[i] {
                covered[i] += 1;
            }
        }
    }
    assert!(
        covered.iter().all(|&c| c == 1),
        "each node in exactly one test set"
    );
}

#[test]
fn folds_are_seed_deterministic() {
    let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let a = make_folds(&labels, 10, 11).unwrap();
    let b = make_folds(&labels, 10, 11).unwrap();
    for (fa, fb) in a.iter().zip(&b) {
        assert_eq!(fa.test_mask, fb.test_mask);
    }
    let c = make_folds(&labels, 10, 12).unwrap();
    assert!(a
        .iter()
        .zip(&c)
        .any(|(fa, fc)| fa.test_mask != fc.test_mask));
}

#[test]
fn single_class_labels_are_rejected() {
    let labels = vec![0usize; 12];
    assert!(matches!(
        make_folds(&labels, 10, 0),
        Err(TrainError::TooFewClasses(1))
    ));
}

#[test]
fn label_rate_split_takes_roughly_the_rate() {
    let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
    let split = label_rate_split(&labels, 0.1, 5);
    let train = split.train_mask.iter().filter(|&&b| b).count();
    assert_eq!(train, 10); // 5 per class
    for c in 0..2 {
        let per_class = (0..100)
            .filter(|&i| split.train_mask[i] && labels[i] == c)
            .count();
        assert_eq!(per_class, 5);
    }
}

// ----- accuracy -----

#[test]
fn perfect_logits_score_one() {
    let logits = Tensor::from_rows(&[
        vec![10.0, 0.0, 0.0],
        vec![0.0, 10.0, 0.0],
        vec![0.0, 0.0, 10.0],
    ]);
    let acc = accuracy_of_logits(&logits, &[0, 1, 2], &[true, true, true]).unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn ties_break_to_lowest_class() {
    let logits = Tensor::from_rows(&[vec![1.0, 1.0, 1.0]]);
    assert_eq!(accuracy_of_logits(&logits, &[0], &[true]).unwrap(), 1.0);
    assert_eq!(accuracy_of_logits(&logits, &[1], &[true]).unwrap(), 0.0);
}

#[test]
fn empty_mask_is_rejected() {
    let logits = Tensor::zeros(2, 2);
    assert!(matches!(
        accuracy_of_logits(&logits, &[0, 1], &[false, false]),
        Err(TrainError::EmptyMask)
    ));
}

#[test]
fn single_class_data_scores_one_untrained() {
    // With C = 1 every argmax is class 0.
    let ds = small_fixture();
    let cfg = ModelConfig {
        num_classes: 1,
        feature_dim: ds.feature_dim(),
        ..fast_cfg(&ds)
    };
    let model = Model::init(&cfg).unwrap();
    let x = Tensor::from_dense(&ds.features);
    let lap = Tensor::from_dense(ds.hypergraph.laplacian().matrix());
    let labels = vec![0usize; ds.num_nodes()];
    let mask = vec![true; ds.num_nodes()];
    let acc = evaluate(&model, &x, &lap, &labels, &mask).unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn random_models_guess_at_chance_level() {
    // Untrained models on balanced 7-class data should average ~1/7
    // accuracy over many seeds.
    let c = 7;
    let n = 140;
    let edges: Vec<Vec<usize>> = (0..n).map(|i| vec![i, (i + 1) % n]).collect();
    let hg = crate::hypergraph::Hypergraph::from_edge_list(edges, n, None).unwrap();
    let lap = Tensor::from_dense(hg.laplacian().matrix());
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let mask = vec![true; n];
    let cfg = ModelConfig {
        gamma: 0.5,
        num_layers: 1,
        num_heads: 2,
        d_h: 8,
        d_k: 4,
        d_q: 4,
        num_classes: c,
        feature_dim: 5,
        ..ModelConfig::default()
    };
    let mut total = 0.0;
    let seeds = 24;
    for seed in 0..seeds {
        let mut rng = Rng64::new(1000 + seed);
        let x = Tensor::uniform(n, 5, -1.0, 1.0, &mut rng);
        let model = Model::init_with_seed(&cfg, seed).unwrap();
        total += evaluate(&model, &x, &lap, &labels, &mask).unwrap();
    }
    let mean = total / seeds as Real;
    let chance = 1.0 / c as Real;
    assert!(
        (mean - chance).abs() < 0.05,
        "mean accuracy {mean} vs chance {chance}"
    );
}

// ----- training -----

#[test]
fn zero_learning_rate_freezes_parameters_and_loss() {
    let ds = small_fixture();
    let cfg = ModelConfig {
        lr: 0.0,
        weight_decay: 0.0,
        dropout_p: 0.0,
        epochs: 5,
        ..fast_cfg(&ds)
    };
    let lap = ds.hypergraph.laplacian();
    let folds = make_folds(&ds.labels, 10, 0).unwrap();
    let before = Model::init_with_seed(&cfg, 3).unwrap();
    let outcome = train_one_fold(&ds, lap.matrix(), &folds[0], &cfg, 3).unwrap();
    for (name, t) in outcome.model.params.iter() {
        assert_eq!(t.data(), before.params.get(name).data(), "{name} moved");
    }
    let first = outcome.losses[0];
    assert!(outcome.losses.iter().all(|&l| l == first));
}

#[test]
fn loss_decreases_on_the_synthetic_fixture() {
    let ds = small_fixture();
    let cfg = ModelConfig {
        epochs: 60,
        dropout_p: 0.0,
        ..fast_cfg(&ds)
    };
    let lap = ds.hypergraph.laplacian();
    let folds = make_folds(&ds.labels, 10, 0).unwrap();
    let outcome = train_one_fold(&ds, lap.matrix(), &folds[0], &cfg, 0).unwrap();
    assert!(
        outcome.losses[49] < outcome.losses[0],
        "epoch 50 loss {} not below epoch 1 loss {}",
        outcome.losses[49],
        outcome.losses[0]
    );
}

#[test]
fn training_is_bit_deterministic_for_a_seed() {
    let ds = small_fixture();
    let cfg = ModelConfig {
        epochs: 10,
        ..fast_cfg(&ds)
    };
    let lap = ds.hypergraph.laplacian();
    let folds = make_folds(&ds.labels, 10, 0).unwrap();
    let a = train_one_fold(&ds, lap.matrix(), &folds[0], &cfg, 5).unwrap();
    let b = train_one_fold(&ds, lap.matrix(), &folds[0], &cfg, 5).unwrap();
    assert_eq!(a.losses, b.losses);
    for (name, t) in a.model.params.iter() {
        assert_eq!(t.data(), b.model.params.get(name).data());
    }
}

#[test]
fn test_labels_never_reach_the_loss() {
    // Flipping a test node's label must leave the training loss unchanged,
    // and test rows must receive zero logit gradient.
    let ds = small_fixture();
    let cfg = ModelConfig {
        dropout_p: 0.0,
        ..fast_cfg(&ds)
    };
    let folds = make_folds(&ds.labels, 10, 0).unwrap();
    let split = &folds[0];
    let test_node = split.test_mask.iter().position(|&t| t).unwrap();

    let lap = ds.hypergraph.laplacian();
    let x = Tensor::from_dense(&ds.features);
    let lap_t = Tensor::from_dense(lap.matrix());
    let model = Model::init_with_seed(&cfg, 1).unwrap();

    let loss_with = |labels: &[usize]| -> Real {
        let logits = model.forward_eval(&x, &lap_t).unwrap();
        logits
            .softmax_cross_entropy(labels, &split.train_mask)
            .unwrap()
            .scalar()
    };
    let mut flipped = ds.labels.clone();
    flipped[test_node] = (flipped[test_node] + 1) % ds.num_classes;
    assert_eq!(loss_with(&ds.labels), loss_with(&flipped));

    // Gradient side: a watched logits tensor gets zero rows on test nodes.
    let mut params = crate::tensor::Params::new();
    let logits0 = model.forward_eval(&x, &lap_t).unwrap();
    params.insert(
        "logits",
        Tensor::from_vec(logits0.rows(), logits0.cols(), logits0.data().to_vec()),
    );
    let tape = Tape::new();
    let watched = params.get("logits").watch(&tape);
    watched
        .softmax_cross_entropy(&ds.labels, &split.train_mask)
        .unwrap()
        .backward()
        .unwrap();
    let grad = params.get("logits").grad().unwrap();
    for i in 0..ds.num_nodes() {
        if split.test_mask[i] {
            for j in 0..ds.num_classes {
                assert_eq!(grad[i * ds.num_classes + j], 0.0);
            }
        }
    }
}

// ----- cross-validation and sweeps -----

#[test]
fn cross_validate_reports_ten_folds_and_sane_aggregates() {
    let ds = small_fixture();
    let cfg = ModelConfig {
        epochs: 15,
        ..fast_cfg(&ds)
    };
    let report = cross_validate(&ds, &cfg).unwrap();
    assert_eq!(report.fold_accuracies.len(), 10);
    assert!(report.aborted_folds.is_empty());
    let min = report.fold_accuracies.iter().cloned().fold(1.0, Real::min);
    let max = report.fold_accuracies.iter().cloned().fold(0.0, Real::max);
    assert!(report.mean_accuracy >= min && report.mean_accuracy <= max);
    assert!(report.std_accuracy >= 0.0);
    assert!(report
        .fold_accuracies
        .iter()
        .all(|a| (0.0..=1.0).contains(a)));

    let csv = report.to_csv();
    assert!(csv.starts_with("fold,accuracy\n"));
    assert_eq!(csv.lines().count(), 1 + 10 + 2);
    assert!(csv.contains("\nmean,"));
    assert!(csv
        .trim_end()
        .ends_with(&format!("std,{}", report.std_accuracy)));

    // JSON must parse and echo the config.
    let parsed: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(parsed["config"]["epochs"], 15);
}

#[test]
fn cross_validate_is_deterministic() {
    let ds = small_fixture();
    let cfg = ModelConfig {
        epochs: 8,
        ..fast_cfg(&ds)
    };
    let a = cross_validate(&ds, &cfg).unwrap();
    let b = cross_validate(&ds, &cfg).unwrap();
    assert_eq!(a.fold_accuracies, b.fold_accuracies);
    assert_eq!(a.fold_losses, b.fold_losses);
}

#[test]
fn sweep_produces_one_sorted_row_per_value() {
    let ds = small_fixture();
    let cfg = ModelConfig {
        epochs: 5,
        ..fast_cfg(&ds)
    };
    let table = sweep(&ds, &cfg, "gamma", &[0.4, 0.0, 1.0]).unwrap();
    assert_eq!(table.rows.len(), 3);
    let values: Vec<Real> = table.rows.iter().map(|r| r.value).collect();
    assert_eq!(values, vec![0.0, 0.4, 1.0]);
    let csv = table.to_csv();
    assert!(csv.starts_with("value,mean,std\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn sweep_rejects_unknown_parameters_and_bad_values() {
    let ds = small_fixture();
    let cfg = fast_cfg(&ds);
    assert!(matches!(
        sweep(&ds, &cfg, "width", &[1.0]),
        Err(TrainError::UnknownParameter(_))
    ));
    assert!(matches!(
        sweep(&ds, &cfg, "layers", &[0.5]),
        Err(TrainError::InvalidSweepValue { .. })
    ));
    assert!(matches!(
        sweep(&ds, &cfg, "gamma", &[1.5]),
        Err(TrainError::InvalidSweepValue { .. })
    ));
}

#[test]
fn residual_sweep_toggles_the_flag() {
    let cfg = ModelConfig::default();
    let off = apply_sweep_value(&cfg, "residual", 0.0).unwrap();
    assert!(!off.use_residual);
    let on = apply_sweep_value(&cfg, "residual", 1.0).unwrap();
    assert!(on.use_residual);
}
