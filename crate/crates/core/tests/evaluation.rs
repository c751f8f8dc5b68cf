use lsqmm::data::{synth_lowrank, LabeledSample, SynthSpec};
use lsqmm::metrics::{accuracy, cross_validate, cv_splits, f1_score, noise_sweep, param_sweep, Classifier, CvOptions, Learner};
use lsqmm::trainer::TrainConfig;
use lsqmm::{Error, Label, QMatrix};
use proptest::prelude::*;

/// Predicts one fixed label.
struct Constant(Label);

impl Classifier for Constant {
    fn decision_value(&self, _: &QMatrix) -> lsqmm::Result<f64> {
        Ok(self.0 as f64)
    }
}

struct Majority;

impl Learner for Majority {
    type Model = Constant;

    fn fit(&self, _: &[QMatrix], y: &[Label]) -> lsqmm::Result<Constant> {
        let pos = y.iter().filter(|&&l| l == 1).count();
        Ok(Constant(if 2 * pos >= y.len() { 1 } else { -1 }))
    }
}

struct Failing;

impl Learner for Failing {
    type Model = Constant;

    fn fit(&self, _: &[QMatrix], _: &[Label]) -> lsqmm::Result<Constant> {
        Err(Error::Numeric("boom".into()))
    }
}

fn samples(per_class: usize, sigma: f64) -> Vec<LabeledSample> {
    synth_lowrank(&SynthSpec {
        per_class,
        rows: 6,
        cols: 6,
        rank: 2,
        sigma,
        seed: 4,
    })
    .unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig {
        c: 10.0,
        record_time: false,
        ..TrainConfig::default()
    }
}

fn opts(repeats: usize, seed: u64) -> CvOptions {
    CvOptions {
        folds: 5,
        repeats,
        seed,
        positive: 1,
    }
}

#[test]
fn constant_learner_scores_the_majority_fraction() {
    // 5 positives out of 15, with every fold holding 1 positive and 2 negatives
    let mut s = samples(10, 0.1);
    let mut drop = 0;
    s.retain(|x| {
        drop += (x.y == 1) as usize;
        x.y == -1 || drop <= 5
    });
    assert_eq!(s.len(), 15);
    let r = cross_validate(&Majority, &s, &opts(3, 0)).unwrap();
    assert!((r.accuracy_mean - 10.0 / 15.0).abs() < 1e-12);
    assert_eq!(r.f1_mean, 0.0);
    assert_eq!(r.per_fold.len(), 15);
}

#[test]
fn repeats_are_seeded_individually() {
    let s = samples(10, 0.4);
    let two = cross_validate(&quick(), &s, &opts(2, 10)).unwrap();
    assert_eq!(two, cross_validate(&quick(), &s, &opts(2, 10)).unwrap());
    let shifted = cross_validate(&quick(), &s, &opts(1, 11)).unwrap();
    for (a, b) in two.per_fold[5..].iter().zip(&shifted.per_fold) {
        assert_eq!((a.accuracy, a.f1), (b.accuracy, b.f1));
        assert_eq!(a.fold, b.fold);
    }
}

#[test]
fn separable_set_cross_validates_perfectly() {
    let r = cross_validate(&quick(), &samples(10, 0.0), &opts(2, 3)).unwrap();
    assert_eq!(r.accuracy_mean, 1.0);
    assert_eq!(r.accuracy_std, 0.0);
    assert_eq!(r.f1_mean, 1.0);
}

#[test]
fn splits_never_reuse_training_samples() {
    let s = samples(12, 0.1);
    let y: Vec<Label> = s.iter().map(|x| x.y).collect();
    for folds in cv_splits(&y, &opts(4, 8)).unwrap() {
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..s.len()).collect::<Vec<_>>());
    }
}

#[test]
fn fold_errors_carry_their_position() {
    let err = cross_validate(&Failing, &samples(5, 0.1), &opts(1, 0)).unwrap_err();
    assert!(matches!(err, Error::Fold { repeat: 0, fold: 0, .. }));
    assert!(matches!(err.root(), Error::Numeric(_)));
}

#[test]
fn single_cell_sweep_equals_cross_validation() {
    let s = samples(8, 0.3);
    let base = quick();
    let cells = param_sweep(&s, &base, &[base.c], &[base.lambda, base.lambda], &opts(1, 2)).unwrap();
    assert_eq!(cells.len(), 2);
    let cv = cross_validate(&base, &s, &opts(1, 2)).unwrap();
    assert_eq!(cells[0].report, cv);
    assert_eq!(cells[1].report, cv);
    assert!(param_sweep(&s, &base, &[], &[1.0], &opts(1, 2)).is_err());
}

#[test]
fn grid_cells_share_folds() {
    let s = samples(8, 0.3);
    let cells = param_sweep(&s, &quick(), &[1.0, 10.0], &[1e-3, 1.0], &opts(1, 2)).unwrap();
    assert_eq!(cells.len(), 4);
    let (c, l): (Vec<f64>, Vec<f64>) = cells.iter().map(|x| (x.c, x.lambda)).unzip();
    assert_eq!(c, vec![1.0, 1.0, 10.0, 10.0]);
    assert_eq!(l, vec![1e-3, 1.0, 1e-3, 1.0]);
    for cell in &cells {
        let cfg = TrainConfig {
            c: cell.c,
            lambda: cell.lambda,
            ..quick()
        };
        assert_eq!(cell.report, cross_validate(&cfg, &s, &opts(1, 2)).unwrap());
    }
}

#[test]
fn noise_sweep_preserves_order_and_clean_point() {
    let s = samples(8, 0.1);
    let pts = noise_sweep(&quick(), &s, &[0.0, 0.5, 1.0], 3, &opts(1, 6)).unwrap();
    assert_eq!(pts.iter().map(|p| p.ratio).collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
    let clean = cross_validate(&quick(), &s, &opts(1, 6)).unwrap();
    assert_eq!(pts[0].report.per_fold, clean.per_fold);
    assert_eq!(pts[2].report.config_echo.noise_ratio, 1.0);
    assert!(noise_sweep(&quick(), &s, &[-1.0], 3, &opts(1, 6)).is_err());
}

proptest! {
    #[test]
    fn metrics_are_permutation_invariant(
        pairs in prop::collection::vec((prop::bool::ANY, prop::bool::ANY), 1..40),
        seed in any::<u64>(),
    ) {
        let lab = |b: bool| if b { 1 } else { -1 };
        let pred: Vec<Label> = pairs.iter().map(|p| lab(p.0)).collect();
        let truth: Vec<Label> = pairs.iter().map(|p| lab(p.1)).collect();
        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        let n = idx.len();
        for i in (1..n).rev() {
            let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 33) as usize % (i + 1);
            idx.swap(i, j);
        }
        let pp: Vec<Label> = idx.iter().map(|&i| pred[i]).collect();
        let tp: Vec<Label> = idx.iter().map(|&i| truth[i]).collect();
        prop_assert_eq!(accuracy(&pred, &truth).unwrap(), accuracy(&pp, &tp).unwrap());
        prop_assert!((f1_score(&pred, &truth, 1).unwrap() - f1_score(&pp, &tp, 1).unwrap()).abs() < 1e-15);
    }
}
