//! Semi-supervised node-classification training: stratified k-fold splits,
//! full-batch training with Adam, evaluation, cross-validation, and
//! hyperparameter sweeps.
//!
//! Folds run in parallel; each fold owns an independent model, optimizer
//! state, and random stream (seed = base seed + fold index), and results
//! are reduced in fold order, so a report is a pure function of
//! (dataset, config, seed).

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::Dataset;
use crate::model::{Model, ModelConfig, ModelError};
use crate::rng::Rng64;
use crate::tensor::{AdamState, DenseMatrix, Tape, Tensor};
use crate::Real;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("mask selects no nodes")]
    EmptyMask,
    #[error("non-finite loss {value} in fold {fold} at epoch {epoch}")]
    NonFiniteLoss {
        fold: usize,
        epoch: usize,
        value: Real,
    },
    #[error("unknown sweep parameter '{0}' (expected gamma, heads, layers, residual, or d_k)")]
    UnknownParameter(String),
    #[error("invalid value {value} for sweep parameter '{param}'")]
    InvalidSweepValue { param: String, value: Real },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One train/test split over the nodes.
#[derive(Debug, Clone)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

/// Stratified k-fold splits: each class is shuffled and chunked into k
/// near-equal bins; fold i's test set is bin i of every class. Classes
/// smaller than k simply leave some bins empty.
pub fn make_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<FoldSplit>, TrainError> {
    assert!(k >= 2, "need at least 2 folds");
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let distinct = {
        let mut seen = vec![false; num_classes];
        for &l in labels {
            seen[l] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(TrainError::TooFewClasses(distinct));
    }
    let n = labels.len();
    let mut rng = Rng64::new(seed);
    let mut fold_of = vec![0usize; n];
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut members);
        let (base, extra) = (members.len() / k, members.len() % k);
        let mut cursor = 0;
        for bin in 0..k {
            let size = base + usize::from(bin < extra);
            for &node in &members[cursor..cursor + size] {
                fold_of[node] = bin;
            }
            cursor += size;
        }
    }
    Ok((0..k)
        .map(|fold_index| {
            let test_mask: Vec<bool> = fold_of.iter().map(|&f| f == fold_index).collect();
            let train_mask: Vec<bool> = test_mask.iter().map(|&t| !t).collect();
            FoldSplit {
                fold_index,
                train_mask,
                test_mask,
            }
        })
        .collect())
}

/// Single stratified split that reveals roughly `rate` of each class's
/// labels for training (at least one node per class); the rest is the test
/// set. For label-rate sensitivity runs.
pub fn label_rate_split(labels: &[usize], rate: Real, seed: u64) -> FoldSplit {
    assert!((0.0..1.0).contains(&rate) && rate > 0.0, "rate in (0, 1)");
    let n = labels.len();
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = Rng64::new(seed);
    let mut train_mask = vec![false; n];
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        rng.shuffle(&mut members);
        let take = ((members.len() as Real * rate).round() as usize).max(1);
        for &node in members.iter().take(take.min(members.len())) {
            train_mask[node] = true;
        }
    }
    let test_mask: Vec<bool> = train_mask.iter().map(|&t| !t).collect();
    FoldSplit {
        fold_index: 0,
        train_mask,
        test_mask,
    }
}

/// Trained model plus its per-epoch loss trace.
pub struct FoldOutcome {
    pub model: Model,
    pub losses: Vec<Real>,
}

/// Full-batch training on one split: every epoch runs the model on all
/// nodes, takes the cross-entropy over train-mask nodes only, and applies
/// one Adam step. A non-finite loss aborts the fold.
pub fn train_one_fold(
    dataset: &Dataset,
    laplacian: &DenseMatrix,
    split: &FoldSplit,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<FoldOutcome, TrainError> {
    let x = Tensor::from_dense(&dataset.features);
    let lap = Tensor::from_dense(laplacian);
    let mut model = Model::init_with_seed(cfg, seed)?;
    let mut adam = AdamState::new(cfg.lr, cfg.weight_decay);
    let mut dropout_rng = Rng64::new(seed).fork(0xd20);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let tape = Tape::new();
        let logits = model.forward_train(&x, &lap, &tape, &mut dropout_rng)?;
        let loss = logits
            .softmax_cross_entropy(&dataset.labels, &split.train_mask)
            .map_err(ModelError::from)?;
        let value = loss.scalar();
        if !value.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                fold: split.fold_index,
                epoch,
                value,
            });
        }
        losses.push(value);
        loss.backward().map_err(ModelError::from)?;
        adam.step(&mut model.params).map_err(ModelError::from)?;
    }
    Ok(FoldOutcome { model, losses })
}

/// Fraction of mask-selected nodes whose argmax prediction matches the
/// label. Ties break to the lowest class index.
pub fn accuracy_of_logits(
    logits: &Tensor,
    labels: &[usize],
    mask: &[bool],
) -> Result<Real, TrainError> {
    let selected = mask.iter().filter(|&&b| b).count();
    if selected == 0 {
        return Err(TrainError::EmptyMask);
    }
    let correct = (0..logits.rows())
        .filter(|&i| mask[i] && crate::model::argmax(logits.row(i)) == labels[i])
        .count();
    Ok(correct as Real / selected as Real)
}

/// Eval-mode accuracy of a trained model on the masked nodes.
pub fn evaluate(
    model: &Model,
    features: &Tensor,
    laplacian: &Tensor,
    labels: &[usize],
    mask: &[bool],
) -> Result<Real, TrainError> {
    let logits = model.forward_eval(features, laplacian)?;
    accuracy_of_logits(&logits, labels, mask)
}

#[derive(Debug, Clone, Serialize)]
pub struct AbortedFold {
    pub fold: usize,
    pub epoch: usize,
    pub message: String,
}

/// Cross-validation outcome: per-fold accuracies, their mean and sample
/// standard deviation, loss traces, and any aborted folds.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub dataset: String,
    pub config: ModelConfig,
    pub fold_accuracies: Vec<Real>,
    pub mean_accuracy: Real,
    pub std_accuracy: Real,
    pub fold_losses: Vec<Vec<Real>>,
    pub aborted_folds: Vec<AbortedFold>,
    pub warnings: Vec<String>,
    pub wall_seconds: f64,
}

impl TrainReport {
    /// `fold,accuracy` rows followed by `mean` and `std` summary rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,accuracy\n");
        for (i, acc) in self.fold_accuracies.iter().enumerate() {
            out.push_str(&format!("{i},{acc}\n"));
        }
        out.push_str(&format!("mean,{}\n", self.mean_accuracy));
        out.push_str(&format!("std,{}\n", self.std_accuracy));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn mean_and_sample_std(values: &[Real]) -> (Real, Real) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as Real;
    let mean = values.iter().sum::<Real>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run stratified k-fold cross-validation (k = 10). Folds execute in
/// parallel with per-fold seeds `cfg.seed + fold_index`; a fold whose loss
/// goes non-finite is flagged and excluded from the aggregate instead of
/// failing the run.
pub fn cross_validate(dataset: &Dataset, cfg: &ModelConfig) -> Result<TrainReport, TrainError> {
    cross_validate_k(dataset, cfg, 10)
}

pub fn cross_validate_k(
    dataset: &Dataset,
    cfg: &ModelConfig,
    k: usize,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    let started = Instant::now();
    let mut warnings = dataset.stratification_warnings(k);
    let lap = dataset.hypergraph.laplacian();
    if lap.has_isolated_nodes() {
        warnings.push(format!(
            "{} isolated node(s); their Laplacian rows are zero",
            lap.isolated_nodes().len()
        ));
    }
    let folds = make_folds(&dataset.labels, k, cfg.seed)?;
    let results: Vec<Result<(Real, Vec<Real>), TrainError>> = folds
        .par_iter()
        .map(|split| {
            let seed = cfg.seed + split.fold_index as u64;
            let outcome = train_one_fold(dataset, lap.matrix(), split, cfg, seed)?;
            let x = Tensor::from_dense(&dataset.features);
            let lap_t = Tensor::from_dense(lap.matrix());
            let acc = evaluate(
                &outcome.model,
                &x,
                &lap_t,
                &dataset.labels,
                &split.test_mask,
            )?;
            Ok((acc, outcome.losses))
        })
        .collect();

    let mut fold_accuracies = Vec::new();
    let mut fold_losses = Vec::new();
    let mut aborted_folds = Vec::new();
    for (fold, result) in results.into_iter().enumerate() {
        match result {
            Ok((acc, losses)) => {
                fold_accuracies.push(acc);
                fold_losses.push(losses);
            }
            Err(TrainError::NonFiniteLoss { epoch, value, .. }) => {
                aborted_folds.push(AbortedFold {
                    fold,
                    epoch,
                    message: format!("non-finite loss {value}"),
                });
            }
            Err(other) => return Err(other),
        }
    }
    let (mean_accuracy, std_accuracy) = mean_and_sample_std(&fold_accuracies);
    Ok(TrainReport {
        dataset: dataset.name.clone(),
        config: cfg.clone(),
        fold_accuracies,
        mean_accuracy,
        std_accuracy,
        fold_losses,
        aborted_folds,
        warnings,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: Real,
    pub mean: Real,
    pub std: Real,
}

/// Sweep result, ordered by value.
#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub param: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,mean,std\n");
        for row in &self.rows {
            out.push_str(&format!("{},{},{}\n", row.value, row.mean, row.std));
        }
        out
    }
}

/// Apply one sweep value to a config copy.
fn apply_sweep_value(
    base: &ModelConfig,
    param: &str,
    value: Real,
) -> Result<ModelConfig, TrainError> {
    let mut cfg = base.clone();
    let as_count = |value: Real| -> Result<usize, TrainError> {
        if value >= 1.0 && value.fract() == 0.0 {
            Ok(value as usize)
        } else {
            Err(TrainError::InvalidSweepValue {
                param: param.to_string(),
                value,
            })
        }
    };
    match param {
        "gamma" => {
            if !(0.0..=1.0).contains(&value) {
                return Err(TrainError::InvalidSweepValue {
                    param: param.to_string(),
                    value,
                });
            }
            cfg.gamma = value;
        }
        "heads" => cfg.num_heads = as_count(value)?,
        "layers" => cfg.num_layers = as_count(value)?,
        "d_k" => cfg.d_k = as_count(value)?,
        "residual" => {
            cfg.use_residual = if value == 0.0 {
                false
            } else if value == 1.0 {
                true
            } else {
                return Err(TrainError::InvalidSweepValue {
                    param: param.to_string(),
                    value,
                });
            };
        }
        other => return Err(TrainError::UnknownParameter(other.to_string())),
    }
    Ok(cfg)
}

/// One cross-validation per value; rows come back sorted by value.
pub fn sweep(
    dataset: &Dataset,
    base_cfg: &ModelConfig,
    param: &str,
    values: &[Real],
) -> Result<SweepTable, TrainError> {
    let mut sorted = values.to_vec();
    sorted.sort_by(Real::total_cmp);
    let mut rows = Vec::with_capacity(sorted.len());
    for &value in &sorted {
        let cfg = apply_sweep_value(base_cfg, param, value)?;
        let report = cross_validate(dataset, &cfg)?;
        rows.push(SweepRow {
            value,
            mean: report.mean_accuracy,
            std: report.std_accuracy,
        });
    }
    Ok(SweepTable {
        param: param.to_string(),
        rows,
    })
}

#[cfg(test)]
mod tests;
