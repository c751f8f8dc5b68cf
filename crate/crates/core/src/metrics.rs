//! Classification metrics, repeated k-fold cross-validation and sweeps.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_vector_svm, LinearSvmModel};
use crate::data::{add_noise_all, kfold_split, LabeledSample, PipelineDecisions};
use crate::error::{Error, Result};
use crate::trainer::{train, TrainConfig, TrainedModel};
use crate::{Label, QMatrix};

fn check_lengths(pred: &[Label], truth: &[Label]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Dimension("no predictions".into()));
    }
    Ok(())
}

/// Fraction of matching labels.
pub fn accuracy(pred: &[Label], truth: &[Label]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// F1 score for the `positive` class; `0` when precision and recall are both zero.
pub fn f1_score(pred: &[Label], truth: &[Label], positive: Label) -> Result<f64> {
    check_lengths(pred, truth)?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fneg) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// A fitted binary classifier.
pub trait Classifier {
    fn decision_value(&self, x: &QMatrix) -> Result<f64>;

    fn predict(&self, x: &QMatrix) -> Result<Label> {
        self.decision_value(x).map(crate::trainer::sign_label)
    }
}

/// Something that fits a [`Classifier`] from labeled samples.
pub trait Learner {
    type Model: Classifier;

    fn fit(&self, samples: &[QMatrix], y: &[Label]) -> Result<Self::Model>;

    /// Training configuration echoed into reports, if any.
    fn config(&self) -> Option<TrainConfig> {
        None
    }

    /// Whether fit times should be recorded.
    fn record_time(&self) -> bool {
        true
    }
}

impl Classifier for TrainedModel {
    fn decision_value(&self, x: &QMatrix) -> Result<f64> {
        TrainedModel::decision_value(self, x)
    }
}

impl Classifier for LinearSvmModel {
    fn decision_value(&self, x: &QMatrix) -> Result<f64> {
        LinearSvmModel::decision_value(self, x)
    }
}

impl Learner for TrainConfig {
    type Model = TrainedModel;

    fn fit(&self, samples: &[QMatrix], y: &[Label]) -> Result<TrainedModel> {
        train(samples, y, self)
    }

    fn config(&self) -> Option<TrainConfig> {
        Some(self.clone())
    }

    fn record_time(&self) -> bool {
        self.record_time
    }
}

/// Vectorized linear SVM learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorSvm {
    pub c: f64,
    pub solver_tol: f64,
    pub record_time: bool,
}

impl Learner for VectorSvm {
    type Model = LinearSvmModel;

    fn fit(&self, samples: &[QMatrix], y: &[Label]) -> Result<LinearSvmModel> {
        baseline_vector_svm(samples, y, self.c, self.solver_tol)
    }

    fn record_time(&self) -> bool {
        self.record_time
    }
}

/// Cross-validation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub repeats: usize,
    /// Repeat `r` splits with seed `seed + r`.
    pub seed: u64,
    pub positive: Label,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 5,
            repeats: 10,
            seed: 0,
            positive: 1,
        }
    }
}

/// Scores of one held-out fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub train_seconds: f64,
}

/// Settings echoed alongside every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub train: Option<TrainConfig>,
    pub cv: CvOptions,
    pub noise_ratio: f64,
    pub decisions: PipelineDecisions,
}

/// Aggregate cross-validation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub per_fold: Vec<FoldResult>,
    pub config_echo: ConfigEcho,
}

impl EvalReport {
    fn from_folds(per_fold: Vec<FoldResult>, config_echo: ConfigEcho) -> Self {
        let acc: Vec<f64> = per_fold.iter().map(|f| f.accuracy).collect();
        let f1: Vec<f64> = per_fold.iter().map(|f| f.f1).collect();
        let (accuracy_mean, accuracy_std) = mean_std(&acc);
        let (f1_mean, f1_std) = mean_std(&f1);
        EvalReport {
            accuracy_mean,
            accuracy_std,
            f1_mean,
            f1_std,
            per_fold,
            config_echo,
        }
    }
}

/// Fold assignments for each repeat.
pub fn cv_splits(labels: &[Label], opts: &CvOptions) -> Result<Vec<Vec<Vec<usize>>>> {
    if opts.repeats == 0 {
        return Err(Error::Parameter("repeats must be at least 1".into()));
    }
    (0..opts.repeats)
        .map(|r| kfold_split(labels.len(), opts.folds, opts.seed.wrapping_add(r as u64), Some(labels)))
        .collect()
}

fn evaluate_fold<L: Learner>(
    learner: &L,
    samples: &[LabeledSample],
    test: &[usize],
    positive: Label,
) -> Result<(f64, f64, f64)> {
    let mut in_test = vec![false; samples.len()];
    for &i in test {
        in_test[i] = true;
    }
    let (mut train_x, mut train_y) = (Vec::new(), Vec::new());
    for (s, _) in samples.iter().zip(&in_test).filter(|(_, &t)| !t) {
        train_x.push(s.x.clone());
        train_y.push(s.y);
    }
    if train_x.len() + test.len() != samples.len() {
        return Err(Error::Validation("train and test folds overlap".into()));
    }
    let start = Instant::now();
    let model = learner.fit(&train_x, &train_y)?;
    let seconds = if learner.record_time() {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    let truth: Vec<Label> = test.iter().map(|&i| samples[i].y).collect();
    let pred = test
        .iter()
        .map(|&i| model.predict(&samples[i].x))
        .collect::<Result<Vec<_>>>()?;
    Ok((accuracy(&pred, &truth)?, f1_score(&pred, &truth, positive)?, seconds))
}

fn run_cv<L: Learner>(
    learner: &L,
    samples: &[LabeledSample],
    splits: &[Vec<Vec<usize>>],
    opts: &CvOptions,
    noise_ratio: f64,
) -> Result<EvalReport> {
    let mut per_fold = Vec::new();
    for (repeat, folds) in splits.iter().enumerate() {
        for (fold, test) in folds.iter().enumerate() {
            let (accuracy, f1, train_seconds) = evaluate_fold(learner, samples, test, opts.positive)
                .map_err(|e| Error::Fold {
                    repeat,
                    fold,
                    source: Box::new(e),
                })?;
            per_fold.push(FoldResult {
                repeat,
                fold,
                accuracy,
                f1,
                train_seconds,
            });
        }
    }
    let echo = ConfigEcho {
        train: learner.config(),
        cv: *opts,
        noise_ratio,
        decisions: PipelineDecisions::default(),
    };
    Ok(EvalReport::from_folds(per_fold, echo))
}

/// Repeated stratified k-fold cross-validation of `learner`.
pub fn cross_validate<L: Learner>(learner: &L, samples: &[LabeledSample], opts: &CvOptions) -> Result<EvalReport> {
    let labels: Vec<Label> = samples.iter().map(|s| s.y).collect();
    let splits = cv_splits(&labels, opts)?;
    run_cv(learner, samples, &splits, opts, 0.0)
}

/// One cell of a `C x lambda` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub c: f64,
    pub lambda: f64,
    pub report: EvalReport,
}

/// Cross-validates every `(C, lambda)` pair on identical folds.
pub fn param_sweep(
    samples: &[LabeledSample],
    base: &TrainConfig,
    c_grid: &[f64],
    lambda_grid: &[f64],
    opts: &CvOptions,
) -> Result<Vec<SweepCell>> {
    if c_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::Parameter("parameter grids must be non-empty".into()));
    }
    let labels: Vec<Label> = samples.iter().map(|s| s.y).collect();
    let splits = cv_splits(&labels, opts)?;
    let mut cells = Vec::with_capacity(c_grid.len() * lambda_grid.len());
    for &c in c_grid {
        for &lambda in lambda_grid {
            let cfg = TrainConfig {
                c,
                lambda,
                ..base.clone()
            };
            cfg.validate()?;
            let report = run_cv(&cfg, samples, &splits, opts, 0.0)?;
            cells.push(SweepCell { c, lambda, report });
        }
    }
    Ok(cells)
}

/// Result at one noise ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub ratio: f64,
    pub report: EvalReport,
}

/// Cross-validates on noisy copies of `samples` for each ratio, keeping the
/// input order. Folds are the same for every ratio; ratio `i` draws noise
/// from seed `noise_seed + i`.
pub fn noise_sweep<L: Learner>(
    learner: &L,
    samples: &[LabeledSample],
    ratios: &[f64],
    noise_seed: u64,
    opts: &CvOptions,
) -> Result<Vec<NoisePoint>> {
    let labels: Vec<Label> = samples.iter().map(|s| s.y).collect();
    let splits = cv_splits(&labels, opts)?;
    ratios
        .iter()
        .enumerate()
        .map(|(i, &ratio)| {
            let noisy = add_noise_all(samples, ratio, noise_seed.wrapping_add(i as u64))?;
            let report = run_cv(learner, &noisy, &splits, opts, ratio)?;
            Ok(NoisePoint { ratio, report })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_and_f1_by_hand() {
        let truth = [1, 1, -1, -1, 1];
        let pred = [1, -1, -1, 1, 1];
        assert_eq!(accuracy(&pred, &truth).unwrap(), 0.6);
        // tp 2, fp 1, fn 1: precision = recall = 2/3
        assert!((f1_score(&pred, &truth, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // negative class: tp 1, fp 1, fn 1
        assert!((f1_score(&pred, &truth, -1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn f1_without_positives_is_zero() {
        assert_eq!(f1_score(&[-1, -1], &[-1, -1], 1).unwrap(), 0.0);
        assert_eq!(f1_score(&[-1, -1], &[1, 1], 1).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(accuracy(&[1], &[1, 1]), Err(Error::Dimension(_))));
        assert!(matches!(f1_score(&[], &[], 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
