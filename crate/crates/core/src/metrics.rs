//! Evaluation metrics: task loss and the total effect of a predictor.
//!
//! The total effect always compares predictions at the observed point and at
//! the ground-truth counterfactual stored in the record, regardless of which
//! mechanism the method used internally; hidden fields are evaluation-only.

use crate::error::{Error, Result};
use crate::scm::{Dataset, Record, Task};
use serde::{Deserialize, Serialize};

/// Pointwise loss selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
    ZeroOne,
}

impl LossKind {
    /// Default reporting loss per task.
    pub fn default_for(task: Task) -> LossKind {
        match task {
            Task::Regression => LossKind::Mse,
            Task::Classification => LossKind::CrossEntropy,
        }
    }
}

/// Single-sample loss. Cross-entropy clamps predictions to
/// `[1e-12, 1 - 1e-12]`; zero-one thresholds at 1/2.
pub fn point_loss(loss: LossKind, pred: f64, y: f64) -> f64 {
    match loss {
        LossKind::Mse => (pred - y) * (pred - y),
        LossKind::CrossEntropy => {
            let p = pred.clamp(1e-12, 1.0 - 1e-12);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        }
        LossKind::ZeroOne => {
            let label = f64::from(pred >= 0.5);
            f64::from(label != y)
        }
    }
}

/// Pairwise (cascade) summation: deterministic and more accurate than a
/// sequential fold on long metric sums.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean loss of `predict` over the test set.
pub fn error(
    predict: impl Fn(&Record) -> Result<f64>,
    test: &Dataset,
    loss: LossKind,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let losses: Vec<f64> = test
        .records
        .iter()
        .map(|r| Ok(point_loss(loss, predict(r)?, r.y)))
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&losses) / losses.len() as f64)
}

/// Total effect decomposed by group, plus the largest single pairwise gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalEffect {
    pub te: f64,
    pub te0: f64,
    pub te1: f64,
    pub max_gap: f64,
}

/// Mean absolute gap between predictions at each record and at its hidden
/// ground-truth counterfactual; `te0`/`te1` restrict to groups 0 and 1, and
/// `te` is their frequency-weighted combination.
pub fn total_effect(
    predict: impl Fn(&Record) -> Result<f64>,
    test: &Dataset,
) -> Result<TotalEffect> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut gaps = [Vec::new(), Vec::new()];
    let mut max_gap = 0.0_f64;
    for r in &test.records {
        let factual = predict(r)?;
        let view = r.counterfactual_view()?;
        let counter = predict(&view)?;
        let gap = (factual - counter).abs();
        max_gap = max_gap.max(gap);
        gaps[usize::from(r.a)].push(gap);
    }
    let n = test.len() as f64;
    let group_mean = |g: &[f64]| if g.is_empty() { 0.0 } else { pairwise_sum(g) / g.len() as f64 };
    let (te0, te1) = (group_mean(&gaps[0]), group_mean(&gaps[1]));
    let (p0, p1) = (gaps[0].len() as f64 / n, gaps[1].len() as f64 / n);
    Ok(TotalEffect { te: p0 * te0 + p1 * te1, te0, te1, max_gap })
}

/// One evaluated cell: task error and total effect on a shared test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean task loss (squared error, or cross-entropy for classification).
    pub error: f64,
    /// Zero-one error, reported alongside for classification tasks.
    pub error_zero_one: Option<f64>,
    pub te: f64,
    pub te0: f64,
    pub te1: f64,
    pub n_test: usize,
    pub task: Task,
}

/// Evaluates one prediction function on a test set with hidden ground truth.
pub fn evaluate(
    predict: impl Fn(&Record) -> Result<f64>,
    test: &Dataset,
    task: Task,
) -> Result<EvalReport> {
    let err = error(&predict, test, LossKind::default_for(task))?;
    let error_zero_one = match task {
        Task::Classification => Some(error(&predict, test, LossKind::ZeroOne)?),
        Task::Regression => None,
    };
    let te = total_effect(&predict, test)?;
    Ok(EvalReport {
        error: err,
        error_zero_one,
        te: te.te,
        te0: te.te0,
        te1: te.te1,
        n_test: test.len(),
        task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::AuxInputs;
    use crate::predictors::Predictor;
    use crate::scm::{AnalyticMode, ScmSpec};

    #[test]
    fn perfect_predictor_has_zero_mse() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(100, 1).unwrap();
        let e = error(|r| Ok(r.y), &data, LossKind::Mse).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn fair_coin_cross_entropy_is_ln_two() {
        let spec = ScmSpec::linear_cls();
        let data = spec.sample(1000, 2).unwrap();
        let e = error(|_| Ok(0.5), &data, LossKind::CrossEntropy).unwrap();
        assert!((e - std::f64::consts::LN_2).abs() < 1e-12, "{e}");
    }

    #[test]
    fn cross_entropy_clamps_extreme_predictions() {
        let data = Dataset {
            x_dim: 1,
            records: vec![Record { x: vec![0.0], a: 0, y: 1.0, u: None, x_cf: None }],
        };
        let e = error(|_| Ok(0.0), &data, LossKind::CrossEntropy).unwrap();
        assert!((e - (-(1e-12_f64.ln()))).abs() < 1e-6);
    }

    #[test]
    fn zero_one_thresholds_at_half() {
        let data = Dataset {
            x_dim: 1,
            records: vec![
                Record { x: vec![0.0], a: 0, y: 1.0, u: None, x_cf: None },
                Record { x: vec![0.0], a: 0, y: 0.0, u: None, x_cf: None },
            ],
        };
        let e = error(|_| Ok(0.7), &data, LossKind::ZeroOne).unwrap();
        assert_eq!(e, 0.5);
    }

    #[test]
    fn empty_test_set_is_rejected() {
        let data = Dataset { x_dim: 1, records: vec![] };
        assert!(error(|r| Ok(r.y), &data, LossKind::Mse).is_err());
        assert!(total_effect(|r| Ok(r.y), &data).is_err());
    }

    #[test]
    fn analytic_erm_error_matches_residual_variance() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(100_000, 3).unwrap();
        let phi = Predictor::analytic(&spec, AnalyticMode::ClosedForm).unwrap();
        let e = error(
            |r| phi.predict(&r.x, r.a, &AuxInputs::none()),
            &data,
            LossKind::Mse,
        )
        .unwrap();
        // Var(Y | X, A) = w_y^2 = 1.
        assert!((e - 1.0).abs() < 0.03, "{e}");
    }

    #[test]
    fn constant_predictor_has_zero_total_effect() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(1000, 4).unwrap();
        let te = total_effect(|_| Ok(2.0), &data).unwrap();
        assert_eq!((te.te, te.te0, te.te1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn group_indicator_predictor_has_unit_total_effect() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(1000, 5).unwrap();
        let te = total_effect(|r| Ok(f64::from(r.a)), &data).unwrap();
        assert_eq!((te.te, te.te0, te.te1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn analytic_erm_total_effect_is_one() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(50_000, 6).unwrap();
        let phi = Predictor::analytic(&spec, AnalyticMode::ClosedForm).unwrap();
        let te = total_effect(|r| phi.predict(&r.x, r.a, &AuxInputs::none()), &data).unwrap();
        assert!((te.te - 1.0).abs() < 1e-12, "{}", te.te);
    }

    #[test]
    fn total_effect_decomposition_is_exact() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(9999, 7).unwrap();
        let phi = Predictor::analytic(&spec, AnalyticMode::ClosedForm).unwrap();
        let te = total_effect(|r| phi.predict(&r.x, r.a, &AuxInputs::none()), &data).unwrap();
        let n0 = data.group_indices(0).len() as f64;
        let n1 = data.group_indices(1).len() as f64;
        let n = data.len() as f64;
        assert_eq!(te.te, (n0 / n) * te.te0 + (n1 / n) * te.te1);
        // And it agrees with the direct mean over all records.
        let mut gaps = Vec::new();
        for r in &data.records {
            let f = phi.predict(&r.x, r.a, &AuxInputs::none()).unwrap();
            let v = r.counterfactual_view().unwrap();
            let c = phi.predict(&v.x, v.a, &AuxInputs::none()).unwrap();
            gaps.push((f - c).abs());
        }
        let direct = pairwise_sum(&gaps) / n;
        assert!((te.te - direct).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_sequential_on_small_inputs() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let seq: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - seq).abs() < 1e-9);
    }

    #[test]
    fn evaluate_reports_both_losses_for_classification() {
        let spec = ScmSpec::linear_cls();
        let data = spec.sample(2000, 8).unwrap();
        let rep = evaluate(|_| Ok(0.5), &data, Task::Classification).unwrap();
        assert!(rep.error_zero_one.is_some());
        assert_eq!(rep.n_test, 2000);
        let reg = evaluate(|r| Ok(r.y), &spec.sample(100, 9).unwrap(), Task::Regression).unwrap();
        assert!(reg.error_zero_one.is_none());
    }
}
