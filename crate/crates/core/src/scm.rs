//! Structural causal models with an invertible feature equation.
//!
//! Every model here has the form `X = w_a * A + w_u ∘ U` (coordinatewise) with
//! `A ~ Bernoulli(p_a)`, `U ~ N(0, I)`, and a target generated from a linear
//! or cubic link plus Gaussian label noise. Because the feature equation is
//! affine and `w_u` is nonzero everywhere, `U` is recoverable from `(X, A)`
//! and the counterfactual of any point is a deterministic map.

use crate::error::{Error, Result};
use crate::quad::{GaussHermite, DEFAULT_GH_NODES};
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Shape of the X→Y link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Linear,
    Cubic,
}

/// Target generation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

/// Logistic function.
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Full parametric description of one structural causal model.
///
/// All weight vectors share the feature dimension; the canonical presets are
/// one-dimensional with scalar weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub form: Form,
    pub task: Task,
    /// Weight of A in each X coordinate.
    pub w_a: Vec<f64>,
    /// Weight of U in each X coordinate; must be nonzero everywhere.
    pub w_u: Vec<f64>,
    /// Weight of X (or X^3) in the Y link, per coordinate.
    pub w_x: Vec<f64>,
    /// Direct U→Y weight, per coordinate.
    pub w_u_prime: Vec<f64>,
    /// Noise weight on the Y disturbance.
    pub w_y: f64,
    /// Bernoulli parameter of A, in (0, 1).
    pub p_a: f64,
}

impl ScmSpec {
    /// Scalar-feature model.
    pub fn scalar(
        form: Form,
        task: Task,
        w_a: f64,
        w_u: f64,
        w_x: f64,
        w_u_prime: f64,
        w_y: f64,
        p_a: f64,
    ) -> Result<Self> {
        let spec = Self {
            form,
            task,
            w_a: vec![w_a],
            w_u: vec![w_u],
            w_x: vec![w_x],
            w_u_prime: vec![w_u_prime],
            w_y,
            p_a,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Linear regression preset with unit weights.
    pub fn linear_reg() -> Self {
        Self::scalar(Form::Linear, Task::Regression, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5).unwrap()
    }

    /// Cubic regression preset with unit weights.
    pub fn cubic_reg() -> Self {
        Self::scalar(Form::Cubic, Task::Regression, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5).unwrap()
    }

    /// Linear classification preset (`w_a = 2`, remaining weights 1).
    pub fn linear_cls() -> Self {
        Self::scalar(Form::Linear, Task::Classification, 2.0, 1.0, 1.0, 1.0, 1.0, 0.5).unwrap()
    }

    /// Cubic classification preset (`w_a = 2`, remaining weights 1).
    pub fn cubic_cls() -> Self {
        Self::scalar(Form::Cubic, Task::Classification, 2.0, 1.0, 1.0, 1.0, 1.0, 0.5).unwrap()
    }

    /// Looks up a preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "linear_reg" => Ok(Self::linear_reg()),
            "cubic_reg" => Ok(Self::cubic_reg()),
            "linear_cls" => Ok(Self::linear_cls()),
            "cubic_cls" => Ok(Self::cubic_cls()),
            other => Err(Error::InvalidParameter(format!(
                "unknown preset `{other}` (expected linear_reg, cubic_reg, linear_cls, cubic_cls)"
            ))),
        }
    }

    pub fn x_dim(&self) -> usize {
        self.w_a.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.w_a.len();
        if d == 0 {
            return Err(Error::InvalidSpec("x_dim must be >= 1".into()));
        }
        for (name, v) in [
            ("w_u", &self.w_u),
            ("w_x", &self.w_x),
            ("w_u_prime", &self.w_u_prime),
        ] {
            if v.len() != d {
                return Err(Error::InvalidSpec(format!(
                    "{name} has length {}, expected {d}",
                    v.len()
                )));
            }
        }
        if self.w_u.iter().any(|&w| w == 0.0 || !w.is_finite()) {
            return Err(Error::InvalidSpec("w_u must be nonzero in every coordinate".into()));
        }
        if !(self.p_a > 0.0 && self.p_a < 1.0) {
            return Err(Error::InvalidSpec(format!("p_a = {} not in (0, 1)", self.p_a)));
        }
        let all_finite = self
            .w_a
            .iter()
            .chain(&self.w_x)
            .chain(&self.w_u_prime)
            .all(|w| w.is_finite())
            && self.w_y.is_finite();
        if !all_finite {
            return Err(Error::InvalidSpec("weights must be finite".into()));
        }
        Ok(())
    }

    /// Feature equation `F_X(u, a)`.
    pub fn feature(&self, u: &[f64], a: u8) -> Vec<f64> {
        let af = f64::from(a);
        self.w_a
            .iter()
            .zip(&self.w_u)
            .zip(u)
            .map(|((wa, wu), ui)| wa * af + wu * ui)
            .collect()
    }

    /// Inverse of the feature equation given `a`.
    pub fn invert(&self, x: &[f64], a: u8) -> Vec<f64> {
        let af = f64::from(a);
        self.w_a
            .iter()
            .zip(&self.w_u)
            .zip(x)
            .map(|((wa, wu), xi)| (xi - wa * af) / wu)
            .collect()
    }

    /// Noise-free part of the Y equation at `(u, a)`.
    pub fn link(&self, u: &[f64], a: u8) -> f64 {
        let x = self.feature(u, a);
        let xs: f64 = self
            .w_x
            .iter()
            .zip(&x)
            .map(|(wx, xi)| match self.form {
                Form::Linear => wx * xi,
                Form::Cubic => wx * xi * xi * xi,
            })
            .sum();
        let us: f64 = self.w_u_prime.iter().zip(u).map(|(wu, ui)| wu * ui).sum();
        xs + us
    }

    /// Exact conditional mean `E[Y | U = u, A = a]`.
    ///
    /// Regression returns the link directly; classification marginalizes the
    /// label noise with Gauss–Hermite quadrature (64 nodes).
    pub fn y_mean(&self, u: &[f64], a: u8) -> f64 {
        self.y_mean_with(u, a, default_gh())
    }

    /// Same as [`y_mean`](Self::y_mean) with an explicit quadrature rule.
    pub fn y_mean_with(&self, u: &[f64], a: u8, gh: &GaussHermite) -> f64 {
        let m = self.link(u, a);
        match self.task {
            Task::Regression => m,
            Task::Classification => {
                let w_y = self.w_y;
                gh.gaussian_expectation(|e| sigmoid(m + w_y * e))
            }
        }
    }

    /// Ground-truth counterfactual map: `F_X(F_X^{-1}(x, a), a')`, which for
    /// the affine feature equation is `x + w_a * (a' - a)` coordinatewise.
    pub fn true_counterfactual(&self, x: &[f64], a: u8, a_prime: u8) -> Vec<f64> {
        let shift = f64::from(a_prime) - f64::from(a);
        self.w_a
            .iter()
            .zip(x)
            .map(|(wa, xi)| xi + wa * shift)
            .collect()
    }

    /// Analytic Bayes-optimal predictor for this model.
    pub fn analytic_bayes(&self, mode: AnalyticMode) -> Result<AnalyticPredictor> {
        if mode == AnalyticMode::Quadrature && self.task == Task::Regression {
            return Err(Error::Unsupported(
                "quadrature mode is redundant for regression (identical to the closed form)"
                    .into(),
            ));
        }
        self.validate()?;
        Ok(AnalyticPredictor { spec: self.clone(), mode })
    }

    /// Samples `n` records i.i.d.; deterministic given the seed.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidParameter("sample size must be >= 1".into()));
        }
        let d = self.x_dim();
        let mut r = rng::rng_from(seed);
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            let a = u8::from(r.random::<f64>() < self.p_a);
            let u: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
            let eps_y: f64 = r.sample(StandardNormal);
            let y_draw: f64 = r.random();
            records.push(self.structural_record(&u, a, eps_y, y_draw));
        }
        Ok(Dataset { x_dim: d, records })
    }

    /// Builds one record from explicit exogenous draws. `y_draw` is the
    /// uniform variate used for the Bernoulli label (ignored for regression).
    ///
    /// The hidden counterfactual is produced by the counterfactual map, so it
    /// is bit-identical to what an oracle mechanism returns for this record
    /// (and equals `feature(u, 1 - a)` up to round-off).
    pub fn structural_record(&self, u: &[f64], a: u8, eps_y: f64, y_draw: f64) -> Record {
        let x = self.feature(u, a);
        let x_cf = self.true_counterfactual(&x, a, 1 - a);
        let m = self.link(u, a);
        let y = match self.task {
            Task::Regression => m + self.w_y * eps_y,
            Task::Classification => f64::from(y_draw < sigmoid(m + self.w_y * eps_y)),
        };
        Record {
            x,
            a,
            y,
            u: Some(u.to_vec()),
            x_cf: Some(x_cf),
        }
    }

    /// Restricts `U` to an equispaced grid on `[-r, r]` with renormalized
    /// standard-normal weights.
    pub fn discretize(&self, grid_size: usize, support_radius: f64) -> Result<DiscreteScm> {
        self.validate()?;
        if grid_size < 3 {
            return Err(Error::InvalidParameter("grid_size must be >= 3".into()));
        }
        if support_radius <= 0.0 || support_radius.is_nan() {
            return Err(Error::InvalidParameter("support_radius must be > 0".into()));
        }
        let g = grid_size as i64;
        let u_grid: Vec<f64> = (0..g)
            .map(|i| ((2 * i - (g - 1)) as f64) * support_radius / ((g - 1) as f64))
            .collect();
        let raw: Vec<f64> = u_grid.iter().map(|&u| (-0.5 * u * u).exp()).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.into_iter().map(|w| w / total).collect();
        Ok(DiscreteScm {
            spec: self.clone(),
            u_grid,
            weights,
        })
    }
}

static GH64: OnceLock<GaussHermite> = OnceLock::new();

/// Shared default quadrature rule.
pub fn default_gh() -> &'static GaussHermite {
    GH64.get_or_init(|| GaussHermite::new(DEFAULT_GH_NODES).expect("default rule"))
}

/// One sampled row. `u` and `x_cf` are ground truth hidden from fitting; they
/// are consumed only by evaluation and oracle components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub x: Vec<f64>,
    pub a: u8,
    pub y: f64,
    pub u: Option<Vec<f64>>,
    pub x_cf: Option<Vec<f64>>,
}

impl Record {
    pub fn hidden_u(&self) -> Result<&[f64]> {
        self.u.as_deref().ok_or(Error::MissingHidden("u"))
    }

    pub fn hidden_x_cf(&self) -> Result<&[f64]> {
        self.x_cf.as_deref().ok_or(Error::MissingHidden("x_cf"))
    }

    /// The same individual viewed under the intervention `A = 1 - a`: features
    /// become the ground-truth counterfactual and the hidden counterfactual
    /// points back at the factual features. `y` is carried over unchanged and
    /// must not be treated as a counterfactual label.
    pub fn counterfactual_view(&self) -> Result<Record> {
        let x_cf = self.hidden_x_cf()?.to_vec();
        Ok(Record {
            x: x_cf,
            a: 1 - self.a,
            y: self.y,
            u: self.u.clone(),
            x_cf: Some(self.x.clone()),
        })
    }
}

/// Sampled rows with a fixed feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x_dim: usize,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Indices of records in group `a`.
    pub fn group_indices(&self, a: u8) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.a == a)
            .map(|(i, _)| i)
            .collect()
    }

    /// Empirical frequency of `A = 1`.
    pub fn empirical_p_a(&self) -> f64 {
        if self.records.is_empty() {
            return f64::NAN;
        }
        self.records.iter().filter(|r| r.a == 1).count() as f64 / self.records.len() as f64
    }

    /// Serializes to CSV with header `x0..x{d-1},a,y,u0..u{d-1},xcf0..xcf{d-1}`
    /// and 17-significant-digit floats for lossless round-tripping.
    pub fn to_csv(&self) -> String {
        let d = self.x_dim;
        let mut out = String::new();
        for i in 0..d {
            out.push_str(&format!("x{i},"));
        }
        out.push_str("a,y");
        for i in 0..d {
            out.push_str(&format!(",u{i}"));
        }
        for i in 0..d {
            out.push_str(&format!(",xcf{i}"));
        }
        out.push('\n');
        for r in &self.records {
            for v in &r.x {
                out.push_str(&format!("{},", fmt_f64(*v)));
            }
            out.push_str(&format!("{},{}", r.a, fmt_f64(r.y)));
            let u = r.u.as_deref().unwrap_or(&[]);
            let x_cf = r.x_cf.as_deref().unwrap_or(&[]);
            for i in 0..d {
                match u.get(i) {
                    Some(v) => out.push_str(&format!(",{}", fmt_f64(*v))),
                    None => out.push(','),
                }
            }
            for i in 0..d {
                match x_cf.get(i) {
                    Some(v) => out.push_str(&format!(",{}", fmt_f64(*v))),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Dataset> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Csv {
            line: 1,
            msg: "missing header".into(),
        })?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 5 || (cols.len() - 2) % 3 != 0 {
            return Err(Error::Csv {
                line: 1,
                msg: format!("unexpected column count {}", cols.len()),
            });
        }
        let d = (cols.len() - 2) / 3;
        let expected = {
            let mut h: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
            h.push("a".into());
            h.push("y".into());
            h.extend((0..d).map(|i| format!("u{i}")));
            h.extend((0..d).map(|i| format!("xcf{i}")));
            h
        };
        if cols != expected {
            return Err(Error::Csv {
                line: 1,
                msg: format!("unexpected header `{header}`"),
            });
        }
        let mut records = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::Csv {
                    line: idx + 1,
                    msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|e| Error::Csv {
                    line: idx + 1,
                    msg: format!("bad float `{s}`: {e}"),
                })
            };
            let x = fields[..d].iter().map(|s| parse(s)).collect::<Result<Vec<f64>>>()?;
            let a = match fields[d] {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Csv {
                        line: idx + 1,
                        msg: format!("bad group `{other}`"),
                    })
                }
            };
            let y = parse(fields[d + 1])?;
            let opt_block = |lo: usize| -> Result<Option<Vec<f64>>> {
                let block = &fields[lo..lo + d];
                if block.iter().all(|s| s.is_empty()) {
                    Ok(None)
                } else {
                    Ok(Some(block.iter().map(|s| parse(s)).collect::<Result<Vec<f64>>>()?))
                }
            };
            let u = opt_block(d + 2)?;
            let x_cf = opt_block(2 * d + 2)?;
            records.push(Record { x, a, y, u, x_cf });
        }
        Ok(Dataset { x_dim: d, records })
    }
}

/// 17 significant digits: enough to reconstruct any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Which analytic predictor to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticMode {
    /// Closed-form conditional-mean expression (for classification, the
    /// logistic of the link without marginalizing the label noise).
    ClosedForm,
    /// Classification only: full `E[Y | X, A]` by inverting to `U` and
    /// integrating the label noise by quadrature.
    Quadrature,
}

/// Bayes-optimal scoring function `phi*(x, a)` in closed or quadrature form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPredictor {
    pub spec: ScmSpec,
    pub mode: AnalyticMode,
}

impl AnalyticPredictor {
    pub fn predict(&self, x: &[f64], a: u8) -> f64 {
        match self.mode {
            AnalyticMode::ClosedForm => {
                let s = self.closed_form_score(x, a);
                match self.spec.task {
                    Task::Regression => s,
                    Task::Classification => sigmoid(s),
                }
            }
            AnalyticMode::Quadrature => {
                let u = self.spec.invert(x, a);
                self.spec.y_mean(&u, a)
            }
        }
    }

    /// `w_x · f(x) + (w_u'/w_u) · (x - w_a a)` summed over coordinates.
    fn closed_form_score(&self, x: &[f64], a: u8) -> f64 {
        let spec = &self.spec;
        let af = f64::from(a);
        let mut s = 0.0;
        for i in 0..spec.x_dim() {
            let xi = x[i];
            let fx = match spec.form {
                Form::Linear => xi,
                Form::Cubic => xi * xi * xi,
            };
            s += spec.w_x[i] * fx + spec.w_u_prime[i] / spec.w_u[i] * (xi - spec.w_a[i] * af);
        }
        s
    }

    /// Exact Lipschitz constant of the prediction in `x`, where one exists in
    /// closed form (linear regression link only).
    pub fn lipschitz_in_x(&self) -> Result<f64> {
        let spec = &self.spec;
        match (spec.form, spec.task) {
            (Form::Linear, Task::Regression) => {
                let sq: f64 = spec
                    .w_x
                    .iter()
                    .zip(&spec.w_u_prime)
                    .zip(&spec.w_u)
                    .map(|((wx, wup), wu)| (wx + wup / wu).powi(2))
                    .sum();
                Ok(sq.sqrt())
            }
            _ => Err(Error::Unsupported(
                "exact Lipschitz constant only available for the linear regression form".into(),
            )),
        }
    }
}

/// Finite-support version of a model: `U` restricted to a weighted grid.
/// Substrate for the brute-force fair-optimal oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteScm {
    pub spec: ScmSpec,
    /// Strictly ascending grid of scalar U values (shared across coordinates
    /// when the feature dimension exceeds one).
    pub u_grid: Vec<f64>,
    /// Probability weights, summing to 1.
    pub weights: Vec<f64>,
}

impl DiscreteScm {
    /// Conditional mean at a grid node.
    pub fn node_y_mean(&self, node: usize, a: u8) -> f64 {
        let u = vec![self.u_grid[node]; self.spec.x_dim()];
        self.spec.y_mean(&u, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(got: f64, want: f64, tol: f64) {
        assert!((got - want).abs() < tol, "got {got}, want {want} (tol {tol})");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ScmSpec::scalar(Form::Linear, Task::Regression, 1.0, 0.0, 1.0, 1.0, 1.0, 0.5)
            .is_err());
        assert!(ScmSpec::scalar(Form::Linear, Task::Regression, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0)
            .is_err());
        assert!(ScmSpec::scalar(Form::Linear, Task::Regression, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
            .is_err());
        let mut spec = ScmSpec::linear_reg();
        spec.w_u = vec![1.0, 2.0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn group_means_separate_by_w_a() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(100_000, 7).unwrap();
        let mean = |a: u8| {
            let idx = data.group_indices(a);
            idx.iter().map(|&i| data.records[i].x[0]).sum::<f64>() / idx.len() as f64
        };
        assert_close(mean(1) - mean(0), 1.0, 0.05);
    }

    #[test]
    fn zero_w_a_means_no_intervention_effect() {
        let spec =
            ScmSpec::scalar(Form::Linear, Task::Regression, 0.0, 1.0, 1.0, 1.0, 1.0, 0.5).unwrap();
        let data = spec.sample(500, 3).unwrap();
        for r in &data.records {
            assert_eq!(r.x, *r.x_cf.as_ref().unwrap());
        }
    }

    #[test]
    fn forced_exogenous_draw() {
        let spec = ScmSpec::linear_reg();
        let r = spec.structural_record(&[0.5], 1, 0.0, 0.0);
        assert_eq!(r.x[0], 1.5);
        assert_eq!(r.x_cf.as_ref().unwrap()[0], 0.5);
    }

    #[test]
    fn sampling_is_reproducible() {
        let spec = ScmSpec::cubic_cls();
        let d1 = spec.sample(1000, 99).unwrap();
        let d2 = spec.sample(1000, 99).unwrap();
        assert_eq!(d1, d2);
        let d3 = spec.sample(1000, 100).unwrap();
        assert_ne!(d1, d3);
    }

    #[test]
    fn structural_consistency_of_samples() {
        let spec = ScmSpec::linear_cls();
        let data = spec.sample(2000, 5).unwrap();
        for r in &data.records {
            let u = r.u.as_ref().unwrap();
            let af = f64::from(r.a);
            for i in 0..spec.x_dim() {
                assert_close(r.x[i] - spec.w_a[i] * af, spec.w_u[i] * u[i], 1e-12);
                assert_close(
                    r.x_cf.as_ref().unwrap()[i] - spec.w_a[i] * (1.0 - af),
                    spec.w_u[i] * u[i],
                    1e-12,
                );
            }
        }
    }

    #[test]
    fn y_mean_linear_regression() {
        let spec = ScmSpec::linear_reg();
        assert_eq!(spec.y_mean(&[0.0], 1), 1.0);
    }

    #[test]
    fn y_mean_classification_no_noise_at_zero_link() {
        let spec =
            ScmSpec::scalar(Form::Linear, Task::Classification, 1.0, 1.0, 1.0, 1.0, 0.0, 0.5)
                .unwrap();
        // u = 0, a = 0 makes the link zero.
        assert_close(spec.y_mean(&[0.0], 0), 0.5, 1e-12);
    }

    #[test]
    fn y_mean_classification_matches_monte_carlo() {
        let spec = ScmSpec::linear_cls();
        let u = [0.35];
        let a = 1;
        let m = spec.link(&u, a);
        let mut r = rng::rng_from(11);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let e: f64 = r.sample(StandardNormal);
            sum += sigmoid(m + spec.w_y * e);
        }
        assert_close(spec.y_mean(&u, a), sum / n as f64, 1e-3);
    }

    #[test]
    fn counterfactual_identity_and_hand_value() {
        let spec = ScmSpec::linear_reg();
        assert_eq!(spec.true_counterfactual(&[2.0], 1, 1), vec![2.0]);
        assert_eq!(spec.true_counterfactual(&[2.0], 1, 0), vec![1.0]);
    }

    #[test]
    fn counterfactual_involution() {
        let spec = ScmSpec::cubic_reg();
        let data = spec.sample(1000, 13).unwrap();
        for r in &data.records {
            let once = spec.true_counterfactual(&r.x, r.a, 1 - r.a);
            let back = spec.true_counterfactual(&once, 1 - r.a, r.a);
            assert_close(back[0], r.x[0], 1e-12);
        }
    }

    #[test]
    fn analytic_closed_form_hand_values() {
        let spec = ScmSpec::linear_reg();
        let phi = spec.analytic_bayes(AnalyticMode::ClosedForm).unwrap();
        assert_eq!(phi.predict(&[2.0], 1), 3.0);

        let no_direct =
            ScmSpec::scalar(Form::Linear, Task::Regression, 1.0, 1.0, 1.0, 0.0, 1.0, 0.5).unwrap();
        let phi = no_direct.analytic_bayes(AnalyticMode::ClosedForm).unwrap();
        for x in [-1.0, 0.3, 2.0] {
            assert_eq!(phi.predict(&[x], 0), phi.predict(&[x], 1));
            assert_eq!(phi.predict(&[x], 0), x);
        }
    }

    #[test]
    fn quadrature_mode_rejected_for_regression() {
        assert!(ScmSpec::linear_reg().analytic_bayes(AnalyticMode::Quadrature).is_err());
        assert!(ScmSpec::linear_cls().analytic_bayes(AnalyticMode::Quadrature).is_ok());
    }

    #[test]
    fn closed_form_agrees_with_y_mean_through_inverse_map() {
        let spec = ScmSpec::cubic_reg();
        let phi = spec.analytic_bayes(AnalyticMode::ClosedForm).unwrap();
        for &x in &[-2.0, -0.5, 0.0, 1.25, 3.0] {
            for a in [0u8, 1] {
                let u = spec.invert(&[x], a);
                assert_close(phi.predict(&[x], a), spec.y_mean(&u, a), 1e-12);
            }
        }
    }

    #[test]
    fn discretize_small_grid() {
        let spec = ScmSpec::linear_reg();
        let d = spec.discretize(3, 1.0).unwrap();
        assert_eq!(d.u_grid, vec![-1.0, 0.0, 1.0]);
        let sum: f64 = d.weights.iter().sum();
        assert_close(sum, 1.0, 1e-12);
        // Proportional to the standard normal density.
        let ratio = d.weights[0] / d.weights[1];
        assert_close(ratio, (-0.5f64).exp(), 1e-12);
        assert_eq!(d.weights[0], d.weights[2]);
    }

    #[test]
    fn discretize_weights_symmetric_and_grid_ascending() {
        let spec = ScmSpec::linear_cls();
        let d = spec.discretize(51, 4.0).unwrap();
        for w in d.u_grid.windows(2) {
            assert!(w[0] < w[1]);
        }
        for i in 0..51 {
            assert_eq!(d.weights[i], d.weights[50 - i]);
        }
        // Same conditional-mean formula on the grid as off it.
        for (i, &u) in d.u_grid.iter().enumerate() {
            assert_eq!(d.node_y_mean(i, 1), d.spec.y_mean(&[u], 1));
        }
    }

    #[test]
    fn csv_round_trip_preserves_bits() {
        let spec = ScmSpec::cubic_cls();
        let data = spec.sample(200, 21).unwrap();
        let text = data.to_csv();
        let back = Dataset::from_csv(&text).unwrap();
        assert_eq!(data, back);
    }

    #[test]
    fn csv_rejects_malformed_input() {
        assert!(Dataset::from_csv("").is_err());
        assert!(Dataset::from_csv("x0,a,y,u0,xcf0\n1.0,2,0.0,0.0,0.0\n").is_err());
        assert!(Dataset::from_csv("x0,a,b\n").is_err());
    }

    #[test]
    fn counterfactual_view_swaps_fields() {
        let spec = ScmSpec::linear_reg();
        let data = spec.sample(10, 1).unwrap();
        let r = &data.records[0];
        let v = r.counterfactual_view().unwrap();
        assert_eq!(v.a, 1 - r.a);
        assert_eq!(v.x, *r.x_cf.as_ref().unwrap());
        assert_eq!(*v.x_cf.as_ref().unwrap(), r.x);
        assert_eq!(v.u, r.u);
    }
}
