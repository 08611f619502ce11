//! Numerical verification of the theory: closed-form and Monte Carlo excess
//! risk, error-bound checks for bounded mechanism noise, and a brute-force
//! per-pair oracle for the optimal fair prediction on a discretized model.

use crate::cgm::Cgm;
use crate::error::{Error, Result};
use crate::methods::pcf_predict;
use crate::metrics::{self, LossKind};
use crate::predictors::Predictor;
use crate::quad::GaussHermite;
use crate::rng;
use crate::scm::{AnalyticMode, DiscreteScm, Form, ScmSpec, Task};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Outcome of one theory check, serializable for machine consumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub check: String,
    pub predicted_excess: f64,
    pub empirical_excess: f64,
    /// `(empirical - predicted) / |predicted|`.
    pub relative_gap: f64,
    pub bound_l: f64,
    pub bound_eps: f64,
    pub observed_te_max: f64,
    pub passed: bool,
    pub details: String,
}

/// Golden-section search for the minimizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_section_min(
    f: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iter {
        if hi - lo <= tol {
            return Ok(0.5 * (lo + hi));
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    Err(Error::BracketExhausted)
}

const GOLDEN_TOL: f64 = 1e-10;
const GOLDEN_MAX_ITER: usize = 400;

/// Expected loss `E[l(phi, Y) | U = u_node, A = a]` on the discretized model.
fn node_expected_loss(d: &DiscreteScm, node: usize, a: u8, loss: LossKind, phi: f64) -> f64 {
    let m = d.node_y_mean(node, a);
    match loss {
        LossKind::Mse => {
            let var = match d.spec.task {
                Task::Regression => d.spec.w_y * d.spec.w_y,
                Task::Classification => m * (1.0 - m),
            };
            (phi - m) * (phi - m) + var
        }
        LossKind::CrossEntropy => {
            let p = phi.clamp(1e-12, 1.0 - 1e-12);
            -(m * p.ln() + (1.0 - m) * (1.0 - p).ln())
        }
        LossKind::ZeroOne => unreachable!("zero-one loss has no per-pair oracle"),
    }
}

fn oracle_bracket(d: &DiscreteScm, loss: LossKind) -> Result<(f64, f64)> {
    match loss {
        LossKind::Mse => Ok((-50.0, 50.0)),
        LossKind::CrossEntropy => {
            if d.spec.task != Task::Classification {
                return Err(Error::Unsupported(
                    "cross-entropy oracle requires a classification model".into(),
                ));
            }
            Ok((1e-6, 1.0 - 1e-6))
        }
        LossKind::ZeroOne => Err(Error::Unsupported("zero-one loss has no per-pair oracle".into())),
    }
}

/// Numeric minimizer of the prior-weighted per-pair objective at one node,
/// with an explicit weight `p1` on group 1 (weight `1 - p1` on group 0).
pub fn pair_minimizer(d: &DiscreteScm, node: usize, loss: LossKind, p1: f64) -> Result<f64> {
    let (lo, hi) = oracle_bracket(d, loss)?;
    golden_section_min(
        |phi| {
            p1 * node_expected_loss(d, node, 1, loss, phi)
                + (1.0 - p1) * node_expected_loss(d, node, 0, loss, phi)
        },
        lo,
        hi,
        GOLDEN_TOL,
        GOLDEN_MAX_ITER,
    )
}

/// Brute-force optimal fair prediction at every grid node: the per-pair
/// problem is solved numerically, not through any closed form.
pub fn fair_oracle_discrete(d: &DiscreteScm, loss: LossKind) -> Result<Vec<f64>> {
    (0..d.u_grid.len())
        .map(|node| pair_minimizer(d, node, loss, d.spec.p_a))
        .collect()
}

/// Numeric minimizer of the per-pair counterfactual-risk objective (factual
/// plus counterfactual term for each group, under the equal-prediction
/// constraint) at every grid node.
pub fn crm_oracle_discrete(d: &DiscreteScm, loss: LossKind) -> Result<Vec<f64>> {
    let (lo, hi) = oracle_bracket(d, loss)?;
    let p1 = d.spec.p_a;
    (0..d.u_grid.len())
        .map(|node| {
            golden_section_min(
                |phi| {
                    // Each group contributes its factual term and, with the
                    // same conditional label law, the term at the generated
                    // counterfactual input.
                    p1 * 2.0 * node_expected_loss(d, node, 1, loss, phi)
                        + (1.0 - p1) * 2.0 * node_expected_loss(d, node, 0, loss, phi)
                },
                lo,
                hi,
                GOLDEN_TOL,
                GOLDEN_MAX_ITER,
            )
        })
        .collect()
}

/// The closed-form mixture `p(A=1) E[Y|u,1] + p(A=0) E[Y|u,0]` at every node.
pub fn mixture_on_grid(d: &DiscreteScm) -> Vec<f64> {
    let p1 = d.spec.p_a;
    (0..d.u_grid.len())
        .map(|node| p1 * d.node_y_mean(node, 1) + (1.0 - p1) * d.node_y_mean(node, 0))
        .collect()
}

/// Monte Carlo estimate (value, standard error) of the regression excess
/// risk: `Var(A) * E_U[(E[Y|u,1] - E[Y|u,0])^2]`.
pub fn excess_risk_regression_with_se(spec: &ScmSpec, mc_n: usize, seed: u64) -> Result<(f64, f64)> {
    spec.validate()?;
    if spec.task != Task::Regression {
        return Err(Error::Unsupported("regression excess risk needs a regression model".into()));
    }
    let var_a = spec.p_a * (1.0 - spec.p_a);
    let mut r = rng::rng_from(seed);
    let d = spec.x_dim();
    let sq: Vec<f64> = (0..mc_n)
        .map(|_| {
            let u: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
            let diff = spec.y_mean(&u, 1) - spec.y_mean(&u, 0);
            diff * diff
        })
        .collect();
    let mean = metrics::pairwise_sum(&sq) / mc_n as f64;
    let var = metrics::pairwise_sum(&sq.iter().map(|v| (v - mean) * (v - mean)).collect::<Vec<_>>())
        / mc_n as f64;
    let se = (var / mc_n as f64).sqrt();
    Ok((var_a * mean, var_a * se))
}

/// Monte Carlo estimate of the regression excess risk.
pub fn excess_risk_regression(spec: &ScmSpec, mc_n: usize, seed: u64) -> Result<f64> {
    excess_risk_regression_with_se(spec, mc_n, seed).map(|(v, _)| v)
}

fn kl_bernoulli(p: f64, q: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    let q = q.clamp(1e-15, 1.0 - 1e-15);
    let mut kl = 0.0;
    if p > 0.0 {
        kl += p * (p / q).ln();
    }
    if p < 1.0 {
        kl += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    kl
}

/// Monte Carlo estimate (value, standard error) of the conditional mutual
/// information `I(A; Y | U)` for a classification model: the outer
/// expectation over `U` is sampled, the inner conditional means use
/// quadrature with `quad_nodes` nodes.
pub fn cond_mutual_info_with_se(
    spec: &ScmSpec,
    mc_n: usize,
    quad_nodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    spec.validate()?;
    if spec.task != Task::Classification {
        return Err(Error::Unsupported(
            "conditional mutual information needs a classification model".into(),
        ));
    }
    let gh = GaussHermite::new(quad_nodes)?;
    let p1 = spec.p_a;
    let mut r = rng::rng_from(seed);
    let d = spec.x_dim();
    let terms: Vec<f64> = (0..mc_n)
        .map(|_| {
            let u: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
            let q1 = spec.y_mean_with(&u, 1, &gh);
            let q0 = spec.y_mean_with(&u, 0, &gh);
            let q_bar = p1 * q1 + (1.0 - p1) * q0;
            p1 * kl_bernoulli(q1, q_bar) + (1.0 - p1) * kl_bernoulli(q0, q_bar)
        })
        .collect();
    let mean = metrics::pairwise_sum(&terms) / mc_n as f64;
    let var = metrics::pairwise_sum(
        &terms.iter().map(|v| (v - mean) * (v - mean)).collect::<Vec<_>>(),
    ) / mc_n as f64;
    Ok((mean, (var / mc_n as f64).sqrt()))
}

/// Monte Carlo estimate of `I(A; Y | U)`.
pub fn cond_mutual_info(spec: &ScmSpec, mc_n: usize, quad_nodes: usize, seed: u64) -> Result<f64> {
    cond_mutual_info_with_se(spec, mc_n, quad_nodes, seed).map(|(v, _)| v)
}

/// Runs the plug-in method with the analytic predictor and a ball-bounded
/// noisy mechanism, then checks the total-effect bound `L * eps0` (hard) and
/// the excess-risk bound against the mechanism-free run.
///
/// Only the linear regression form has an exact global Lipschitz constant;
/// other forms are rejected. `l_override` substitutes a caller-supplied
/// constant (negative-control hook for the verifier).
pub fn check_lipschitz_bound(
    spec: &ScmSpec,
    eps0: f64,
    n_test: usize,
    seed: u64,
    l_override: Option<f64>,
) -> Result<TheoryReport> {
    if eps0 < 0.0 {
        return Err(Error::InvalidParameter("eps0 must be >= 0".into()));
    }
    if spec.form != Form::Linear || spec.task != Task::Regression {
        return Err(Error::Unsupported(
            "the error-bound check runs on the linear regression form".into(),
        ));
    }
    let analytic = spec.analytic_bayes(AnalyticMode::ClosedForm)?;
    let exact_l = analytic.lipschitz_in_x()?;
    let l = l_override.unwrap_or(exact_l);
    let phi = Predictor::analytic(spec, AnalyticMode::ClosedForm)?;

    let test = spec.sample(n_test, rng::derive_seed(seed, "bound-test"))?;
    let oracle = Cgm::oracle(spec.clone())?;
    let bounded = Cgm::bounded_noisy(oracle.clone(), eps0, rng::derive_seed(seed, "bound-cgm"))?;

    let noisy_fn = |r: &crate::scm::Record| pcf_predict(&phi, &bounded, spec.p_a, &r.x, r.a);
    let oracle_fn = |r: &crate::scm::Record| pcf_predict(&phi, &oracle, spec.p_a, &r.x, r.a);

    let te = metrics::total_effect(noisy_fn, &test)?;
    let mse_noisy = metrics::error(noisy_fn, &test, LossKind::Mse)?;
    let mse_oracle = metrics::error(oracle_fn, &test, LossKind::Mse)?;
    let empirical_excess = mse_noisy - mse_oracle;

    // E_U |E[Y|u,1] - E[Y|u,0]| over the test draws of U.
    let abs_dm: Vec<f64> = test
        .records
        .iter()
        .map(|r| {
            let u = r.hidden_u()?;
            Ok((spec.y_mean(u, 1) - spec.y_mean(u, 0)).abs())
        })
        .collect::<Result<_>>()?;
    let e_abs_dm = metrics::pairwise_sum(&abs_dm) / abs_dm.len() as f64;

    let var_a = spec.p_a * (1.0 - spec.p_a);
    let predicted_excess = var_a * l * l * eps0 * eps0 + 2.0 * var_a * l * eps0 * e_abs_dm;

    let te_bound = l * eps0;
    let te_ok = if eps0 == 0.0 { te.max_gap <= 1e-9 } else { te.max_gap <= te_bound };
    let risk_ok = empirical_excess <= predicted_excess;
    Ok(TheoryReport {
        check: format!("lipschitz_bound(eps0={eps0})"),
        predicted_excess,
        empirical_excess,
        relative_gap: relative_gap(empirical_excess, predicted_excess),
        bound_l: l,
        bound_eps: eps0,
        observed_te_max: te.max_gap,
        passed: te_ok && risk_ok,
        details: format!(
            "mean TE = {:.3e}, max pair gap = {:.3e}, TE bound = {:.3e}, exact L = {exact_l}",
            te.te, te.max_gap, te_bound
        ),
    })
}

fn relative_gap(empirical: f64, predicted: f64) -> f64 {
    (empirical - predicted) / predicted.abs().max(1e-12)
}

/// Compares the empirical risk gap between the analytic plug-in mixture and
/// the analytic unconstrained predictor against the predicted regression
/// excess risk, pooling per-sample loss differences across seeds. Passes
/// within three combined Monte Carlo standard errors.
pub fn verify_excess_regression(
    spec: &ScmSpec,
    n_test: usize,
    seeds: &[u64],
    mc_n: usize,
    mc_seed: u64,
) -> Result<TheoryReport> {
    if spec.task != Task::Regression {
        return Err(Error::Unsupported("regression check needs a regression model".into()));
    }
    let (predicted, pred_se) = excess_risk_regression_with_se(spec, mc_n, mc_seed)?;
    let phi = Predictor::analytic(spec, AnalyticMode::ClosedForm)?;
    let (empirical, emp_se) =
        pooled_loss_gap(spec, &phi, n_test, seeds, LossKind::Mse)?;
    let tol = 3.0 * (pred_se * pred_se + emp_se * emp_se).sqrt();
    let passed = (empirical - predicted).abs() <= tol;
    Ok(TheoryReport {
        check: "excess_risk_regression".into(),
        predicted_excess: predicted,
        empirical_excess: empirical,
        relative_gap: relative_gap(empirical, predicted),
        bound_l: 0.0,
        bound_eps: 0.0,
        observed_te_max: 0.0,
        passed,
        details: format!(
            "predicted se = {pred_se:.3e}, empirical se = {emp_se:.3e}, tolerance = {tol:.3e}"
        ),
    })
}

/// Classification analog: the empirical cross-entropy gap between the
/// quadrature analytic plug-in mixture and the quadrature analytic
/// unconstrained predictor against `I(A; Y | U)`. Passes within 5% relative.
pub fn verify_excess_classification(
    spec: &ScmSpec,
    n_test: usize,
    seeds: &[u64],
    mc_n: usize,
    quad_nodes: usize,
    mc_seed: u64,
) -> Result<TheoryReport> {
    if spec.task != Task::Classification {
        return Err(Error::Unsupported(
            "classification check needs a classification model".into(),
        ));
    }
    let (predicted, pred_se) = cond_mutual_info_with_se(spec, mc_n, quad_nodes, mc_seed)?;
    let phi = Predictor::analytic(spec, AnalyticMode::Quadrature)?;
    let (empirical, emp_se) =
        pooled_loss_gap(spec, &phi, n_test, seeds, LossKind::CrossEntropy)?;
    let passed = (empirical - predicted).abs() <= 0.05 * predicted.abs();
    Ok(TheoryReport {
        check: "excess_risk_classification".into(),
        predicted_excess: predicted,
        empirical_excess: empirical,
        relative_gap: relative_gap(empirical, predicted),
        bound_l: 0.0,
        bound_eps: 0.0,
        observed_te_max: 0.0,
        passed,
        details: format!("predicted se = {pred_se:.3e}, empirical se = {emp_se:.3e}"),
    })
}

/// Pools per-sample loss differences (plug-in mixture minus unconstrained)
/// over fresh test sets, one per seed. Returns (mean, standard error).
fn pooled_loss_gap(
    spec: &ScmSpec,
    phi: &Predictor,
    n_test: usize,
    seeds: &[u64],
    loss: LossKind,
) -> Result<(f64, f64)> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed required".into()));
    }
    let oracle = Cgm::oracle(spec.clone())?;
    let mut diffs = Vec::with_capacity(n_test * seeds.len());
    for &seed in seeds {
        let test = spec.sample(n_test, rng::derive_seed(seed, "excess-test"))?;
        for r in &test.records {
            let fair = pcf_predict(phi, &oracle, spec.p_a, &r.x, r.a)?;
            let plain = phi.predict(&r.x, r.a, &crate::predictors::AuxInputs::none())?;
            diffs.push(metrics::point_loss(loss, fair, r.y) - metrics::point_loss(loss, plain, r.y));
        }
    }
    let n = diffs.len() as f64;
    let mean = metrics::pairwise_sum(&diffs) / n;
    let var = metrics::pairwise_sum(
        &diffs.iter().map(|v| (v - mean) * (v - mean)).collect::<Vec<_>>(),
    ) / n;
    Ok((mean, (var / n).sqrt()))
}
