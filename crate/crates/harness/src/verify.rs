//! Theory-verification suites, runnable from the CLI.
//!
//! Each suite produces [`TheoryReport`] values, written as JSON per check,
//! with one printed pass/fail line per report. The run fails (nonzero exit)
//! if any report fails, and the failed check names are listed in
//! `verify_summary.json`.

use crate::config::VerifyConfig;
use anyhow::{bail, Context, Result};
use cfsim_core::cgm::Cgm;
use cfsim_core::methods::pcf_predict;
use cfsim_core::metrics::{self, LossKind};
use cfsim_core::predictors::{AuxInputs, FeatureMap, Predictor, TrainConfig};
use cfsim_core::rng::derive_seed;
use cfsim_core::scm::{AnalyticMode, ScmSpec, Task};
use cfsim_core::theory::{self, TheoryReport};
use serde::Serialize;
use std::path::Path;

pub const ALL_CHECKS: [&str; 6] = [
    "perfect_cf",
    "excess_regression",
    "excess_classification",
    "lipschitz",
    "optimality_oracle",
    "te_equivalence",
];

/// Every report produced by one verification run.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutcome {
    pub passed: bool,
    pub failed_checks: Vec<String>,
    pub reports: Vec<TheoryReport>,
}

/// Runs the selected suites (all when the list is empty), writes per-check
/// JSON files plus `verify_summary.json` under `out_dir`, and prints one line
/// per report.
pub fn verify(cfg: &VerifyConfig, out_dir: &Path) -> Result<VerifyOutcome> {
    let checks: Vec<String> = if cfg.checks.is_empty() {
        ALL_CHECKS.iter().map(|s| s.to_string()).collect()
    } else {
        cfg.checks.clone()
    };
    for c in &checks {
        if !ALL_CHECKS.contains(&c.as_str()) {
            bail!("unknown check `{c}` (expected one of {ALL_CHECKS:?})");
        }
    }
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for check in &checks {
        let suite = match check.as_str() {
            "perfect_cf" => perfect_cf_suite(cfg)?,
            "excess_regression" => excess_regression_suite(cfg)?,
            "excess_classification" => excess_classification_suite(cfg)?,
            "lipschitz" => lipschitz_suite(cfg)?,
            "optimality_oracle" => optimality_oracle_suite(cfg)?,
            "te_equivalence" => te_equivalence_suite(cfg)?,
            _ => unreachable!(),
        };
        for rep in &suite {
            let tag = if rep.passed { "PASS" } else { "FAIL" };
            println!("[{tag}] {}: {}", rep.check, rep.details);
            if !rep.passed {
                failed.push(rep.check.clone());
            }
        }
        let path = out_dir.join(format!("{check}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&suite)?)
            .with_context(|| format!("writing {}", path.display()))?;
        reports.extend(suite);
    }
    let outcome = VerifyOutcome { passed: failed.is_empty(), failed_checks: failed, reports };
    std::fs::write(
        out_dir.join("verify_summary.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "passed": outcome.passed,
            "failed_checks": outcome.failed_checks,
        }))?,
    )?;
    Ok(outcome)
}

fn presets() -> Vec<(&'static str, ScmSpec)> {
    vec![
        ("linear_reg", ScmSpec::linear_reg()),
        ("cubic_reg", ScmSpec::cubic_reg()),
        ("linear_cls", ScmSpec::linear_cls()),
        ("cubic_cls", ScmSpec::cubic_cls()),
    ]
}

/// The plug-in mixture with the true mechanism has (numerically) zero total
/// effect for trained and analytic predictors alike, on every preset and
/// every seed.
pub fn perfect_cf_suite(cfg: &VerifyConfig) -> Result<Vec<TheoryReport>> {
    let mut reports = Vec::new();
    for (name, spec) in presets() {
        for predictor in ["knn", "mlp", "analytic"] {
            let mut worst: f64 = 0.0;
            let mut worst_te: f64 = 0.0;
            for &seed in &cfg.seeds {
                let train = spec.sample(cfg.n_train, derive_seed(seed, "cf-train"))?;
                let test = spec.sample(cfg.n_pairs, derive_seed(seed, "cf-test"))?;
                let g = Cgm::oracle(spec.clone())?;
                let train_cfg =
                    TrainConfig { seed: derive_seed(seed, "cf-fit"), ..TrainConfig::default() };
                let phi = match predictor {
                    "knn" => {
                        Predictor::fit_knn(&train, FeatureMap::Xa, &[], spec.task, &train_cfg)?
                    }
                    "mlp" => {
                        Predictor::fit_mlp(&train, FeatureMap::Xa, &[], spec.task, &train_cfg)?
                    }
                    _ => {
                        let mode = match spec.task {
                            Task::Regression => AnalyticMode::ClosedForm,
                            Task::Classification => AnalyticMode::Quadrature,
                        };
                        Predictor::analytic(&spec, mode)?
                    }
                };
                let p_a = train.empirical_p_a();
                let te = metrics::total_effect(
                    |r| pcf_predict(&phi, &g, p_a, &r.x, r.a),
                    &test,
                )?;
                worst = worst.max(te.max_gap);
                worst_te = worst_te.max(te.te);
            }
            let passed = worst_te <= 1e-9;
            reports.push(TheoryReport {
                check: format!("perfect_cf({name}, {predictor})"),
                predicted_excess: 0.0,
                empirical_excess: 0.0,
                relative_gap: 0.0,
                bound_l: 0.0,
                bound_eps: 0.0,
                observed_te_max: worst,
                passed,
                details: format!(
                    "worst TE over {} seeds = {worst_te:.3e}, worst pair gap = {worst:.3e}",
                    cfg.seeds.len()
                ),
            });
        }
    }
    Ok(reports)
}

pub fn excess_regression_suite(cfg: &VerifyConfig) -> Result<Vec<TheoryReport>> {
    let mut reports = Vec::new();
    for (name, spec) in [("linear_reg", ScmSpec::linear_reg()), ("cubic_reg", ScmSpec::cubic_reg())]
    {
        let mut rep = theory::verify_excess_regression(
            &spec,
            cfg.mc_n,
            &cfg.seeds,
            cfg.mc_n,
            derive_seed(7, name),
        )?;
        rep.check = format!("excess_regression({name})");
        reports.push(rep);
    }
    Ok(reports)
}

pub fn excess_classification_suite(cfg: &VerifyConfig) -> Result<Vec<TheoryReport>> {
    let spec = ScmSpec::linear_cls();
    let mut rep = theory::verify_excess_classification(
        &spec,
        cfg.mc_n,
        &cfg.seeds,
        cfg.mc_n,
        cfg.quad_nodes,
        derive_seed(7, "linear_cls"),
    )?;
    rep.check = "excess_classification(linear_cls)".into();
    Ok(vec![rep])
}

pub fn lipschitz_suite(cfg: &VerifyConfig) -> Result<Vec<TheoryReport>> {
    let spec = ScmSpec::linear_reg();
    let mut reports = Vec::new();
    for &eps0 in &cfg.eps0_grid {
        for &seed in &cfg.seeds {
            let mut rep = theory::check_lipschitz_bound(
                &spec,
                eps0,
                cfg.mc_n,
                seed,
                cfg.lipschitz_l_override,
            )?;
            rep.check = format!("lipschitz_bound(linear_reg, eps0={eps0}, seed={seed})");
            reports.push(rep);
        }
    }
    // Classification diagnostic: the logit of the closed-form predictor has
    // the same Lipschitz constant; reported, not asserted.
    let cls = ScmSpec::linear_cls();
    let logit_l: f64 = cls
        .w_x
        .iter()
        .zip(&cls.w_u_prime)
        .zip(&cls.w_u)
        .map(|((wx, wup), wu)| (wx + wup / wu).powi(2))
        .sum::<f64>()
        .sqrt();
    let phi = Predictor::analytic(&cls, AnalyticMode::ClosedForm)?;
    let eps0 = cfg.eps0_grid.iter().copied().fold(0.0_f64, f64::max);
    let test = cls.sample(cfg.mc_n.min(20_000), derive_seed(11, "cls-diag"))?;
    let oracle = Cgm::oracle(cls.clone())?;
    let bounded = Cgm::bounded_noisy(oracle, eps0, derive_seed(11, "cls-diag-cgm"))?;
    let p_a = cls.p_a;
    let te = metrics::total_effect(|r| pcf_predict(&phi, &bounded, p_a, &r.x, r.a), &test)?;
    reports.push(TheoryReport {
        check: format!("lipschitz_diagnostic(linear_cls, eps0={eps0})"),
        predicted_excess: 0.0,
        empirical_excess: 0.0,
        relative_gap: 0.0,
        bound_l: logit_l,
        bound_eps: eps0,
        observed_te_max: te.max_gap,
        passed: true,
        details: format!(
            "diagnostic only: observed TE = {:.4e}, probability-scale bound (logit L/4) eps = {:.4e}",
            te.te,
            logit_l / 4.0 * eps0
        ),
    });
    Ok(reports)
}

/// The mixture formula, the brute-force per-pair minimizer, and the
/// counterfactual-risk minimizer agree node-by-node on the discretized model.
pub fn optimality_oracle_suite(cfg: &VerifyConfig) -> Result<Vec<TheoryReport>> {
    let cases = [
        ("linear_reg", ScmSpec::linear_reg(), LossKind::Mse),
        ("linear_cls", ScmSpec::linear_cls(), LossKind::CrossEntropy),
    ];
    let mut reports = Vec::new();
    for (name, spec, loss) in cases {
        let d = spec.discretize(cfg.oracle_grid_size, cfg.oracle_grid_radius)?;
        let fair = theory::fair_oracle_discrete(&d, loss)?;
        let crm = theory::crm_oracle_discrete(&d, loss)?;
        let mixture = theory::mixture_on_grid(&d);

        // The analytic plug-in mixture evaluated at each node's feature point.
        let mode = match spec.task {
            Task::Regression => AnalyticMode::ClosedForm,
            Task::Classification => AnalyticMode::Quadrature,
        };
        let phi = Predictor::analytic(&spec, mode)?;
        let g = Cgm::oracle(spec.clone())?;
        let mut worst: f64 = 0.0;
        for (node, &u) in d.u_grid.iter().enumerate() {
            for a in [0u8, 1] {
                let x = spec.feature(&[u], a);
                let plugin = pcf_predict(&phi, &g, spec.p_a, &x, a)?;
                worst = worst.max((plugin - fair[node]).abs());
            }
            worst = worst.max((crm[node] - fair[node]).abs());
            worst = worst.max((mixture[node] - fair[node]).abs());
        }
        reports.push(TheoryReport {
            check: format!("optimality_oracle({name}, {loss:?})"),
            predicted_excess: 0.0,
            empirical_excess: 0.0,
            relative_gap: 0.0,
            bound_l: 0.0,
            bound_eps: 0.0,
            observed_te_max: 0.0,
            passed: worst < 1e-6,
            details: format!(
                "worst node deviation across plugin/counterfactual-risk/mixture = {worst:.3e} \
                 on {} nodes",
                d.u_grid.len()
            ),
        });
    }
    Ok(reports)
}

/// Zero total effect and zero maximum pairwise gap coincide: both hold for
/// the fair mixture, neither holds for the unconstrained predictor.
pub fn te_equivalence_suite(cfg: &VerifyConfig) -> Result<Vec<TheoryReport>> {
    let spec = ScmSpec::linear_reg();
    let test = spec.sample(cfg.n_pairs, derive_seed(13, "equiv"))?;
    let phi = Predictor::analytic(&spec, AnalyticMode::ClosedForm)?;
    let g = Cgm::oracle(spec.clone())?;

    let fair = metrics::total_effect(|r| pcf_predict(&phi, &g, spec.p_a, &r.x, r.a), &test)?;
    let unfair = metrics::total_effect(|r| phi.predict(&r.x, r.a, &AuxInputs::none()), &test)?;
    let fair_ok = fair.te <= 1e-9 && fair.max_gap <= 1e-9;
    let unfair_ok = unfair.te > 1e-9 && unfair.max_gap > 1e-9;
    Ok(vec![TheoryReport {
        check: "te_equivalence(linear_reg)".into(),
        predicted_excess: 0.0,
        empirical_excess: 0.0,
        relative_gap: 0.0,
        bound_l: 0.0,
        bound_eps: 0.0,
        observed_te_max: fair.max_gap,
        passed: fair_ok && unfair_ok,
        details: format!(
            "fair: te = {:.3e}, max gap = {:.3e}; unconstrained: te = {:.3}, max gap = {:.3}",
            fair.te, fair.max_gap, unfair.te, unfair.max_gap
        ),
    }])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> VerifyConfig {
        serde_json::from_str(
            r#"{
                "seeds": [1],
                "n_train": 500,
                "n_pairs": 500,
                "mc_n": 5000,
                "oracle_grid_size": 11
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn equivalence_and_oracle_suites_pass_quickly() {
        let cfg = quick_cfg();
        for rep in te_equivalence_suite(&cfg).unwrap() {
            assert!(rep.passed, "{rep:?}");
        }
        for rep in optimality_oracle_suite(&cfg).unwrap() {
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn lipschitz_negative_control_fails_through_verify() {
        let mut cfg = quick_cfg();
        cfg.eps0_grid = vec![0.1];
        cfg.lipschitz_l_override = Some(1.0);
        let reports = lipschitz_suite(&cfg).unwrap();
        assert!(reports.iter().any(|r| !r.passed));
    }

    #[test]
    fn unknown_check_is_rejected() {
        let mut cfg = quick_cfg();
        cfg.checks = vec!["no_such_check".into()];
        let dir = tempfile::tempdir().unwrap();
        assert!(verify(&cfg, dir.path()).is_err());
    }

    #[test]
    fn verify_writes_reports_and_summary() {
        let mut cfg = quick_cfg();
        cfg.checks = vec!["te_equivalence".into()];
        let dir = tempfile::tempdir().unwrap();
        let outcome = verify(&cfg, dir.path()).unwrap();
        assert!(outcome.passed);
        assert!(dir.path().join("te_equivalence.json").exists());
        assert!(dir.path().join("verify_summary.json").exists());
    }
}
