//! Counterfactual generating mechanisms and exogenous-variable estimators.
//!
//! A CGM maps an observed point `(x, a)` and a target group `a'` to an
//! estimated counterfactual feature vector. The oracle wraps the true
//! structural map; the noisy variants corrupt it with per-query deterministic
//! noise; the fitted variants use only observable `(x, a)` training data.

use crate::error::{Error, Result};
use crate::rng::{query_seed, rng_from};
use crate::scm::{Dataset, Record, ScmSpec};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Counterfactual generating mechanism `g(x, a, a') -> x'`.
///
/// Every kind maps identity interventions to the input unchanged: stochastic
/// kinds define their noise draw as zero when `a' == a`, so that identity
/// queries stay identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cgm {
    /// Ground-truth counterfactual map derived from the model.
    Oracle { spec: ScmSpec },
    /// Oracle plus i.i.d. Gaussian noise, mean `beta`, std `alpha`, per
    /// coordinate; the draw is a deterministic function of `(seed, x, a, a')`.
    NoisyOracle {
        spec: ScmSpec,
        beta: f64,
        alpha: f64,
        seed: u64,
    },
    /// Oracle plus a perturbation drawn uniformly from the Euclidean ball of
    /// radius `eps0`, so the estimation error is bounded by `eps0` always.
    BoundedNoisyOracle { spec: ScmSpec, eps0: f64, seed: u64 },
    /// Group mean-difference translation fitted from data.
    MeanShift { delta: Vec<f64> },
    /// Monotone quantile transport between the two group distributions
    /// (one-dimensional features only).
    RankPreserving { groups: [RankTable; 2] },
}

impl Cgm {
    /// Wraps the true counterfactual map of `spec`.
    pub fn oracle(spec: ScmSpec) -> Result<Cgm> {
        spec.validate()?;
        Ok(Cgm::Oracle { spec })
    }

    /// Gaussian-corrupted oracle. `base` must be the oracle kind.
    pub fn noisy(base: Cgm, beta: f64, alpha: f64, seed: u64) -> Result<Cgm> {
        if alpha < 0.0 {
            return Err(Error::InvalidParameter("alpha must be >= 0".into()));
        }
        match base {
            Cgm::Oracle { spec } => Ok(Cgm::NoisyOracle { spec, beta, alpha, seed }),
            _ => Err(Error::InvalidParameter("noisy CGM requires an oracle base".into())),
        }
    }

    /// Ball-bounded corrupted oracle. `base` must be the oracle kind.
    pub fn bounded_noisy(base: Cgm, eps0: f64, seed: u64) -> Result<Cgm> {
        if eps0 < 0.0 {
            return Err(Error::InvalidParameter("eps0 must be >= 0".into()));
        }
        match base {
            Cgm::Oracle { spec } => Ok(Cgm::BoundedNoisyOracle { spec, eps0, seed }),
            _ => Err(Error::InvalidParameter("bounded-noisy CGM requires an oracle base".into())),
        }
    }

    /// Fits the translation `delta = mean(x | a=1) - mean(x | a=0)` from
    /// observable fields only.
    pub fn fit_mean_shift(data: &Dataset) -> Result<Cgm> {
        let m1 = group_mean(data, 1)?;
        let m0 = group_mean(data, 0)?;
        let delta = m1.iter().zip(&m0).map(|(a, b)| a - b).collect();
        Ok(Cgm::MeanShift { delta })
    }

    /// Fits the empirical quantile transport between the two groups.
    pub fn fit_rank(data: &Dataset) -> Result<Cgm> {
        if data.x_dim != 1 {
            return Err(Error::Unsupported(
                "rank-preserving CGM requires one-dimensional features".into(),
            ));
        }
        let table = |a: u8| -> Result<RankTable> {
            let mut xs: Vec<f64> = data
                .records
                .iter()
                .filter(|r| r.a == a)
                .map(|r| r.x[0])
                .collect();
            if xs.is_empty() {
                return Err(Error::EmptyGroup(a));
            }
            xs.sort_by(|p, q| p.partial_cmp(q).expect("finite features"));
            Ok(RankTable { sorted: xs })
        };
        Ok(Cgm::RankPreserving { groups: [table(0)?, table(1)?] })
    }

    /// Evaluates `g(x, a, a')`. Pure: identical queries return identical
    /// output within and across runs.
    pub fn counterfactual(&self, x: &[f64], a: u8, a_prime: u8) -> Vec<f64> {
        if a_prime == a {
            return x.to_vec();
        }
        match self {
            Cgm::Oracle { spec } => spec.true_counterfactual(x, a, a_prime),
            Cgm::NoisyOracle { spec, beta, alpha, seed } => {
                let mut out = spec.true_counterfactual(x, a, a_prime);
                let noise = gaussian_noise(*seed, x, a, a_prime, *beta, *alpha, out.len());
                for (o, n) in out.iter_mut().zip(noise) {
                    *o += n;
                }
                out
            }
            Cgm::BoundedNoisyOracle { spec, eps0, seed } => {
                let mut out = spec.true_counterfactual(x, a, a_prime);
                let noise = ball_noise(*seed, x, a, a_prime, *eps0, out.len());
                for (o, n) in out.iter_mut().zip(noise) {
                    *o += n;
                }
                out
            }
            Cgm::MeanShift { delta } => {
                let shift = f64::from(a_prime) - f64::from(a);
                x.iter().zip(delta).map(|(xi, d)| xi + d * shift).collect()
            }
            Cgm::RankPreserving { groups } => {
                let p = groups[usize::from(a)].cdf(x[0]);
                vec![groups[usize::from(a_prime)].quantile(p)]
            }
        }
    }
}

/// Per-coordinate `N(beta, alpha)` noise keyed on the query point.
fn gaussian_noise(seed: u64, x: &[f64], a: u8, a_prime: u8, beta: f64, alpha: f64, d: usize) -> Vec<f64> {
    if alpha == 0.0 {
        return vec![beta; d];
    }
    let mut r = rng_from(query_seed(seed, x, a, a_prime));
    (0..d)
        .map(|_| beta + alpha * r.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Uniform draw from the Euclidean ball of radius `eps0`, keyed on the query.
fn ball_noise(seed: u64, x: &[f64], a: u8, a_prime: u8, eps0: f64, d: usize) -> Vec<f64> {
    if eps0 == 0.0 {
        return vec![0.0; d];
    }
    let mut r = rng_from(query_seed(seed, x, a, a_prime));
    loop {
        let z: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            let radius = eps0 * r.random::<f64>().powf(1.0 / d as f64);
            return z.into_iter().map(|v| v / norm * radius).collect();
        }
    }
}

fn group_mean(data: &Dataset, a: u8) -> Result<Vec<f64>> {
    let idx = data.group_indices(a);
    if idx.is_empty() {
        return Err(Error::EmptyGroup(a));
    }
    let mut sum = vec![0.0; data.x_dim];
    for &i in &idx {
        for (s, v) in sum.iter_mut().zip(&data.records[i].x) {
            *s += v;
        }
    }
    let n = idx.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Sorted group samples with interpolated empirical CDF and quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    sorted: Vec<f64>,
}

impl RankTable {
    fn position(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.sorted.len() as f64
    }

    /// Interpolated empirical CDF, clamped to the in-sample range.
    pub fn cdf(&self, x: f64) -> f64 {
        let s = &self.sorted;
        let m = s.len();
        if x <= s[0] {
            return self.position(0);
        }
        if x >= s[m - 1] {
            return self.position(m - 1);
        }
        let j = s.partition_point(|&v| v <= x) - 1;
        let (lo, hi) = (s[j], s[j + 1]);
        self.position(j) + (self.position(j + 1) - self.position(j)) * (x - lo) / (hi - lo)
    }

    /// Interpolated quantile function, clamped at the extremes.
    pub fn quantile(&self, p: f64) -> f64 {
        let s = &self.sorted;
        let m = s.len();
        if p <= self.position(0) {
            return s[0];
        }
        if p >= self.position(m - 1) {
            return s[m - 1];
        }
        let step = 1.0 / m as f64;
        let j = (((p - self.position(0)) / step).floor() as usize).min(m - 2);
        let (plo, phi) = (self.position(j), self.position(j + 1));
        s[j] + (s[j + 1] - s[j]) * (p - plo) / (phi - plo)
    }
}

/// Exogenous-variable estimator `u_hat(record)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UEstimator {
    /// Ground truth: returns the hidden exogenous values exactly.
    OracleU,
    /// Ground truth plus per-coordinate `N(beta, alpha)` noise, keyed on the
    /// observed `(x, a)` so factual and counterfactual views draw separately.
    NoisyU { beta: f64, alpha: f64, seed: u64 },
    /// Residual of the fitted group mean, with the U scale fixed to one
    /// (U is only identified up to scale).
    MeanShiftResidual { group_means: [Vec<f64>; 2] },
}

impl UEstimator {
    pub fn noisy(beta: f64, alpha: f64, seed: u64) -> Result<UEstimator> {
        if alpha < 0.0 {
            return Err(Error::InvalidParameter("alpha must be >= 0".into()));
        }
        Ok(UEstimator::NoisyU { beta, alpha, seed })
    }

    /// Fits per-group feature means from observable fields only.
    pub fn fit_mean_shift_residual(data: &Dataset) -> Result<UEstimator> {
        Ok(UEstimator::MeanShiftResidual {
            group_means: [group_mean(data, 0)?, group_mean(data, 1)?],
        })
    }

    pub fn estimate(&self, rec: &Record) -> Result<Vec<f64>> {
        match self {
            UEstimator::OracleU => Ok(rec.hidden_u()?.to_vec()),
            UEstimator::NoisyU { beta, alpha, seed } => {
                let u = rec.hidden_u()?;
                let noise = gaussian_noise(*seed, &rec.x, rec.a, rec.a, *beta, *alpha, u.len());
                Ok(u.iter().zip(noise).map(|(ui, n)| ui + n).collect())
            }
            UEstimator::MeanShiftResidual { group_means } => {
                let means = &group_means[usize::from(rec.a)];
                Ok(rec.x.iter().zip(means).map(|(xi, m)| xi - m).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    #[test]
    fn oracle_hand_values_and_involution() {
        let spec = ScmSpec::linear_reg();
        let g = Cgm::oracle(spec.clone()).unwrap();
        assert_eq!(g.counterfactual(&[2.0], 1, 1), vec![2.0]);
        assert_eq!(g.counterfactual(&[2.0], 1, 0), vec![1.0]);
        let data = spec.sample(10_000, 3).unwrap();
        for r in &data.records {
            let there = g.counterfactual(&r.x, r.a, 1 - r.a);
            let back = g.counterfactual(&there, 1 - r.a, r.a);
            assert!(close(back[0], r.x[0], 1e-12));
        }
    }

    #[test]
    fn noisy_zero_noise_is_oracle() {
        let spec = ScmSpec::linear_reg();
        let oracle = Cgm::oracle(spec.clone()).unwrap();
        let g = Cgm::noisy(oracle.clone(), 0.0, 0.0, 5).unwrap();
        for x in [-1.0, 0.0, 2.5] {
            assert_eq!(g.counterfactual(&[x], 0, 1), oracle.counterfactual(&[x], 0, 1));
        }
    }

    #[test]
    fn noisy_pure_shift() {
        let spec = ScmSpec::linear_reg();
        let oracle = Cgm::oracle(spec).unwrap();
        let g = Cgm::noisy(oracle.clone(), 0.3, 0.0, 5).unwrap();
        for x in [-1.0, 0.0, 2.5] {
            let want = oracle.counterfactual(&[x], 1, 0)[0] + 0.3;
            assert_eq!(g.counterfactual(&[x], 1, 0), vec![want]);
        }
    }

    #[test]
    fn noisy_std_matches_alpha() {
        let spec = ScmSpec::linear_reg();
        let oracle = Cgm::oracle(spec.clone()).unwrap();
        let alpha = 0.1;
        let g = Cgm::noisy(oracle.clone(), 0.0, alpha, 17).unwrap();
        let data = spec.sample(100_000, 2).unwrap();
        let diffs: Vec<f64> = data
            .records
            .iter()
            .map(|r| {
                g.counterfactual(&r.x, r.a, 1 - r.a)[0]
                    - oracle.counterfactual(&r.x, r.a, 1 - r.a)[0]
            })
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        assert!(close(var.sqrt(), alpha, 0.02 * alpha), "std = {}", var.sqrt());
    }

    #[test]
    fn noisy_rejects_negative_alpha_and_non_oracle_base() {
        let spec = ScmSpec::linear_reg();
        let oracle = Cgm::oracle(spec).unwrap();
        assert!(Cgm::noisy(oracle.clone(), 0.0, -0.1, 0).is_err());
        let shift = Cgm::MeanShift { delta: vec![1.0] };
        assert!(Cgm::noisy(shift, 0.0, 0.1, 0).is_err());
        assert!(Cgm::bounded_noisy(oracle, -1.0, 0).is_err());
    }

    #[test]
    fn bounded_noise_is_hard_bounded() {
        let spec = ScmSpec::linear_reg();
        let oracle = Cgm::oracle(spec.clone()).unwrap();
        let eps0 = 0.1;
        let g = Cgm::bounded_noisy(oracle.clone(), eps0, 23).unwrap();
        let data = spec.sample(100_000, 4).unwrap();
        let mut max_err = 0.0_f64;
        for r in &data.records {
            let noisy = g.counterfactual(&r.x, r.a, 1 - r.a);
            let exact = oracle.counterfactual(&r.x, r.a, 1 - r.a);
            let err: f64 = noisy
                .iter()
                .zip(&exact)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            assert!(err <= eps0);
            max_err = max_err.max(err);
        }
        // The draw actually explores the ball.
        assert!(max_err > 0.9 * eps0, "max err {max_err}");
        let exact = Cgm::bounded_noisy(oracle.clone(), 0.0, 23).unwrap();
        assert_eq!(exact.counterfactual(&[1.5], 0, 1), oracle.counterfactual(&[1.5], 0, 1));
    }

    #[test]
    fn identity_query_is_exact_for_all_kinds() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(2000, 9).unwrap();
        let oracle = Cgm::oracle(spec.clone()).unwrap();
        let kinds = vec![
            oracle.clone(),
            Cgm::noisy(oracle.clone(), 0.2, 0.3, 1).unwrap(),
            Cgm::bounded_noisy(oracle.clone(), 0.5, 1).unwrap(),
            Cgm::fit_mean_shift(&data).unwrap(),
            Cgm::fit_rank(&data).unwrap(),
        ];
        for g in &kinds {
            for r in data.records.iter().take(100) {
                assert_eq!(g.counterfactual(&r.x, r.a, r.a), r.x);
            }
        }
    }

    #[test]
    fn queries_are_deterministic() {
        let spec = ScmSpec::linear_reg();
        let oracle = Cgm::oracle(spec).unwrap();
        let g = Cgm::noisy(oracle, 0.1, 0.2, 77).unwrap();
        let first = g.counterfactual(&[0.7], 0, 1);
        for _ in 0..5 {
            assert_eq!(g.counterfactual(&[0.7], 0, 1), first);
        }
    }

    #[test]
    fn mean_shift_recovers_group_gap() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(100_000, 6).unwrap();
        let g = Cgm::fit_mean_shift(&data).unwrap();
        let Cgm::MeanShift { delta } = &g else { panic!() };
        assert!(close(delta[0], 1.0, 0.05), "delta {}", delta[0]);
        assert_eq!(g.counterfactual(&[0.3], 1, 1), vec![0.3]);
    }

    #[test]
    fn mean_shift_with_exact_population_means_equals_oracle() {
        let spec = ScmSpec::linear_reg();
        let oracle = Cgm::oracle(spec.clone()).unwrap();
        let g = Cgm::MeanShift { delta: spec.w_a.clone() };
        for x in [-2.0, 0.0, 1.3] {
            for (a, ap) in [(0u8, 1u8), (1, 0)] {
                assert_eq!(g.counterfactual(&[x], a, ap), oracle.counterfactual(&[x], a, ap));
            }
        }
    }

    #[test]
    fn mean_shift_requires_both_groups() {
        let spec = ScmSpec::linear_reg();
        let mut data = spec.sample(100, 1).unwrap();
        data.records.retain(|r| r.a == 0);
        assert!(Cgm::fit_mean_shift(&data).is_err());
        assert!(Cgm::fit_rank(&data).is_err());
    }

    #[test]
    fn rank_map_recovers_pure_shift_at_median() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(100_000, 8).unwrap();
        let g = Cgm::fit_rank(&data).unwrap();
        // Group 0 features are N(0,1); group 1 features are N(1,1).
        let mapped = g.counterfactual(&[0.0], 0, 1)[0];
        assert!(close(mapped, 1.0, 0.05), "mapped {mapped}");
        let back = g.counterfactual(&[1.0], 1, 0)[0];
        assert!(close(back, 0.0, 0.05), "back {back}");
    }

    #[test]
    fn rank_map_is_monotone() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(5000, 10).unwrap();
        let g = Cgm::fit_rank(&data).unwrap();
        let mut prev = f64::NEG_INFINITY;
        let mut x = -4.0;
        while x <= 5.0 {
            let v = g.counterfactual(&[x], 0, 1)[0];
            assert!(v >= prev, "not monotone at x={x}");
            prev = v;
            x += 0.01;
        }
    }

    #[test]
    fn rank_map_rejects_multivariate() {
        let mut spec = ScmSpec::linear_reg();
        spec.w_a = vec![1.0, 1.0];
        spec.w_u = vec![1.0, 1.0];
        spec.w_x = vec![1.0, 1.0];
        spec.w_u_prime = vec![1.0, 1.0];
        let data = spec.sample(100, 1).unwrap();
        assert!(Cgm::fit_rank(&data).is_err());
    }

    #[test]
    fn u_estimators() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(100_000, 12).unwrap();
        let rec = &data.records[0];
        let u = rec.u.as_ref().unwrap().clone();

        assert_eq!(UEstimator::OracleU.estimate(rec).unwrap(), u);
        let noiseless = UEstimator::noisy(0.0, 0.0, 3).unwrap();
        assert_eq!(noiseless.estimate(rec).unwrap(), u);

        let est = UEstimator::fit_mean_shift_residual(&data).unwrap();
        let mut sq = 0.0;
        for r in &data.records {
            let u_hat = est.estimate(r).unwrap()[0];
            let u_true = r.u.as_ref().unwrap()[0];
            sq += (u_hat - u_true) * (u_hat - u_true);
        }
        let rmse = (sq / data.len() as f64).sqrt();
        assert!(rmse < 0.05, "rmse {rmse}");
    }

    #[test]
    fn noisy_u_is_keyed_on_observed_view() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(10, 14).unwrap();
        let est = UEstimator::noisy(0.0, 0.5, 9).unwrap();
        let rec = &data.records[0];
        let view = rec.counterfactual_view().unwrap();
        // Same hidden u, different observed (x, a): independent draws.
        let u_fact = est.estimate(rec).unwrap();
        let u_cf = est.estimate(&view).unwrap();
        assert_ne!(u_fact, u_cf);
        assert_eq!(est.estimate(rec).unwrap(), u_fact);
    }

    #[test]
    fn cgm_serializes_to_json() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(500, 2).unwrap();
        for g in [
            Cgm::oracle(spec.clone()).unwrap(),
            Cgm::noisy(Cgm::oracle(spec.clone()).unwrap(), 0.1, 0.2, 3).unwrap(),
            Cgm::fit_mean_shift(&data).unwrap(),
            Cgm::fit_rank(&data).unwrap(),
        ] {
            let text = serde_json::to_string(&g).unwrap();
            let back: Cgm = serde_json::from_str(&text).unwrap();
            assert_eq!(g, back);
        }
    }
}
