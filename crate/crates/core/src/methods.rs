//! Prediction strategies under comparison: plain risk minimization, the
//! exogenous-only and symmetrized-feature predictors, output adjustment, the
//! plug-in counterfactual mixture, and convex mixing with the unconstrained
//! baseline.

use crate::cgm::{Cgm, UEstimator};
use crate::error::{Error, Result};
use crate::predictors::{AuxInputs, FeatureMap, Predictor};
use crate::scm::Record;
use serde::{Deserialize, Serialize};

/// Strategy identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    /// Unconstrained predictor on `(x, a)`.
    Erm,
    /// Predict from the estimated exogenous variables only.
    Cfu,
    /// Predict from the symmetrized features and estimated exogenous variables.
    Cfr,
    /// Output adjustment averaging over both group inputs at both feature
    /// points.
    Ecocf,
    /// Plug-in counterfactual mixture over a trained predictor.
    Pcf,
    /// Plug-in mixture over the analytic predictor with the true group prior.
    PcfAna,
    /// Plug-in mixture over a predictor trained on counterfactually augmented
    /// data, using the same mechanism at train and inference time.
    PcfCrm,
}

impl MethodKind {
    pub fn needs_cgm(self) -> bool {
        matches!(
            self,
            MethodKind::Cfr | MethodKind::Ecocf | MethodKind::Pcf | MethodKind::PcfAna | MethodKind::PcfCrm
        )
    }

    pub fn needs_u_estimator(self) -> bool {
        matches!(self, MethodKind::Cfu | MethodKind::Cfr)
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Erm => "erm",
            MethodKind::Cfu => "cfu",
            MethodKind::Cfr => "cfr",
            MethodKind::Ecocf => "ecocf",
            MethodKind::Pcf => "pcf",
            MethodKind::PcfAna => "pcf_ana",
            MethodKind::PcfCrm => "pcf_crm",
        }
    }
}

/// Plug-in output mixture: `p(A=a) phi(x, a) + p(A=1-a) phi(g(x,a,1-a), 1-a)`.
/// `p_a` is the prior probability of `A = 1`.
pub fn pcf_predict(phi: &Predictor, g: &Cgm, p_a: f64, x: &[f64], a: u8) -> Result<f64> {
    require_xa(phi)?;
    let x_cf = g.counterfactual(x, a, 1 - a);
    let p_obs = prior_of(p_a, a);
    let factual = phi.predict(x, a, &AuxInputs::none())?;
    let counter = phi.predict(&x_cf, 1 - a, &AuxInputs::none())?;
    Ok(p_obs * factual + (1.0 - p_obs) * counter)
}

/// Output adjustment averaging `phi` over both group inputs at the observed
/// point and at the estimated counterfactual point:
/// `p(a)[p(a) phi(x,a) + (1-p(a)) phi(x,1-a)]
///  + (1-p(a))[(1-p(a)) phi(x',1-a) + p(a) phi(x',a)]` with `x' = g(x,a,1-a)`.
pub fn ecocf_predict(phi: &Predictor, g: &Cgm, p_a: f64, x: &[f64], a: u8) -> Result<f64> {
    require_xa(phi)?;
    let x_cf = g.counterfactual(x, a, 1 - a);
    let p = prior_of(p_a, a);
    let none = AuxInputs::none();
    let at = |xx: &[f64], aa: u8| phi.predict(xx, aa, &none);
    let first = p * at(x, a)? + (1.0 - p) * at(x, 1 - a)?;
    let second = (1.0 - p) * at(&x_cf, 1 - a)? + p * at(&x_cf, a)?;
    Ok(p * first + (1.0 - p) * second)
}

/// Exogenous-only prediction `phi(u_hat)`.
pub fn cfu_predict(phi_u: &Predictor, u_hat: &[f64]) -> Result<f64> {
    if phi_u.feature_map != FeatureMap::UOnly {
        return Err(Error::InvalidParameter("cfu requires a u-only predictor".into()));
    }
    let aux = AuxInputs { u_hat: Some(u_hat.to_vec()), x_cf_hat: None };
    phi_u.predict(&[], 0, &aux)
}

/// Symmetrized prediction `phi((x + x_cf_hat)/2, u_hat)`.
pub fn cfr_predict(phi_s: &Predictor, x: &[f64], x_cf_hat: &[f64], u_hat: &[f64]) -> Result<f64> {
    if phi_s.feature_map != FeatureMap::SymXU {
        return Err(Error::InvalidParameter("cfr requires a symmetrized predictor".into()));
    }
    let aux = AuxInputs {
        u_hat: Some(u_hat.to_vec()),
        x_cf_hat: Some(x_cf_hat.to_vec()),
    };
    // The group input is not consumed by the symmetrized map.
    phi_s.predict(x, 0, &aux)
}

/// Convex combination `lambda * fair + (1 - lambda) * erm`.
pub fn mix_with_erm(fair_pred: f64, erm_pred: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} outside [0, 1]")));
    }
    Ok(lambda * fair_pred + (1.0 - lambda) * erm_pred)
}

fn prior_of(p_a: f64, a: u8) -> f64 {
    if a == 1 {
        p_a
    } else {
        1.0 - p_a
    }
}

fn require_xa(phi: &Predictor) -> Result<()> {
    if phi.feature_map != FeatureMap::Xa {
        return Err(Error::InvalidParameter("this method requires an (x, a) predictor".into()));
    }
    Ok(())
}

/// A fully assembled prediction strategy: base predictor(s), mechanism,
/// exogenous estimator, group prior, and mixing weight (1 = pure method).
#[derive(Debug, Clone)]
pub struct FairMethod {
    pub kind: MethodKind,
    pub phi: Predictor,
    pub cgm: Option<Cgm>,
    pub u_est: Option<UEstimator>,
    pub p_a: f64,
    pub lambda: f64,
    /// Baseline predictor for `lambda < 1`; the plain predictor itself is the
    /// baseline for `Erm`.
    pub erm_phi: Option<Predictor>,
}

impl FairMethod {
    pub fn new(
        kind: MethodKind,
        phi: Predictor,
        cgm: Option<Cgm>,
        u_est: Option<UEstimator>,
        p_a: f64,
        lambda: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} outside [0, 1]")));
        }
        if !(p_a > 0.0 && p_a < 1.0) {
            return Err(Error::InvalidParameter(format!("p_a = {p_a} not in (0, 1)")));
        }
        if kind.needs_cgm() && cgm.is_none() {
            return Err(Error::InvalidParameter(format!("{} requires a mechanism", kind.name())));
        }
        if kind.needs_u_estimator() && u_est.is_none() {
            return Err(Error::InvalidParameter(format!("{} requires a u estimator", kind.name())));
        }
        Ok(Self { kind, phi, cgm, u_est, p_a, lambda, erm_phi: None })
    }

    pub fn with_erm_baseline(mut self, erm_phi: Predictor) -> Self {
        self.erm_phi = Some(erm_phi);
        self
    }

    /// The pure method's prediction for one record (no mixing applied).
    pub fn fair_prediction(&self, rec: &Record) -> Result<f64> {
        match self.kind {
            MethodKind::Erm => self.phi.predict(&rec.x, rec.a, &AuxInputs::none()),
            MethodKind::Cfu => {
                let u_hat = self.u_est.as_ref().unwrap().estimate(rec)?;
                cfu_predict(&self.phi, &u_hat)
            }
            MethodKind::Cfr => {
                let g = self.cgm.as_ref().unwrap();
                let x_cf_hat = g.counterfactual(&rec.x, rec.a, 1 - rec.a);
                let u_hat = self.u_est.as_ref().unwrap().estimate(rec)?;
                cfr_predict(&self.phi, &rec.x, &x_cf_hat, &u_hat)
            }
            MethodKind::Ecocf => {
                ecocf_predict(&self.phi, self.cgm.as_ref().unwrap(), self.p_a, &rec.x, rec.a)
            }
            MethodKind::Pcf | MethodKind::PcfAna | MethodKind::PcfCrm => {
                pcf_predict(&self.phi, self.cgm.as_ref().unwrap(), self.p_a, &rec.x, rec.a)
            }
        }
    }

    /// Final prediction including the convex combination with the baseline.
    pub fn predict(&self, rec: &Record) -> Result<f64> {
        let fair = self.fair_prediction(rec)?;
        if self.lambda == 1.0 {
            return Ok(fair);
        }
        let erm_phi = match (&self.erm_phi, self.kind) {
            (Some(p), _) => p,
            (None, MethodKind::Erm) => &self.phi,
            (None, _) => {
                return Err(Error::InvalidParameter(
                    "mixing requires a baseline predictor".into(),
                ))
            }
        };
        let erm = erm_phi.predict(&rec.x, rec.a, &AuxInputs::none())?;
        mix_with_erm(fair, erm, self.lambda)
    }
}
