//! GTDL and GTDL gamma-frailty model functions and log-likelihoods.
//!
//! The hazard of the GTDL model is `lambda * logistic(eta_alpha * t + eta_beta)`,
//! where both linear predictors come from separate covariate blocks. With a
//! negative time effect the distribution is defective (a positive fraction of
//! units never fails), so several functions carry an explicit cure fraction.
//! The frailty variant integrates a multiplicative Gamma(1/theta, 1/theta)
//! random effect out of the hazard.
//!
//! All functions here are pure; everything routes through the cumulative
//! hazard so the two model families stay numerically consistent as theta -> 0.

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::num::{log1pexp, logistic, stable_sum};

/// Fixed scale constant: beta0 and lambda are interchangeable, so lambda is
/// pinned to 1 whenever an intercept is estimated.
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Below this |eta_alpha| the removable singularity at alpha = 0 is evaluated
/// by its exponential-baseline limit.
pub const ALPHA_LINEAR_LIMIT: f64 = 1e-8;

/// Which model family a parameter vector or fit refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gtdl,
    GtdlFrailty,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Gtdl => write!(f, "gtdl"),
            ModelKind::GtdlFrailty => write!(f, "gtdl_frailty"),
        }
    }
}

/// Per-case linear predictors: `eta_beta = x'beta`, `eta_alpha = x*'alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPredictors {
    pub eta_beta: f64,
    pub eta_alpha: f64,
}

impl LinearPredictors {
    pub fn new(eta_alpha: f64, eta_beta: f64) -> Self {
        Self {
            eta_beta,
            eta_alpha,
        }
    }
}

/// Packed model parameters: alpha block (time effect), beta block, optional
/// frailty variance theta, and the fixed scale lambda.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub theta: Option<f64>,
    pub lambda: f64,
}

impl ParamVector {
    pub fn gtdl(alpha: Vec<f64>, beta: Vec<f64>) -> Self {
        Self {
            alpha,
            beta,
            theta: None,
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn frailty(alpha: Vec<f64>, beta: Vec<f64>, theta: f64) -> Self {
        Self {
            alpha,
            beta,
            theta: Some(theta),
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn kind(&self) -> ModelKind {
        if self.theta.is_some() {
            ModelKind::GtdlFrailty
        } else {
            ModelKind::Gtdl
        }
    }

    /// Number of free parameters (alpha + beta + theta when present).
    pub fn len(&self) -> usize {
        self.alpha.len() + self.beta.len() + usize::from(self.theta.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Natural-scale packing `(alpha..., beta..., theta?)`.
    pub fn packed(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.beta);
        if let Some(t) = self.theta {
            v.push(t);
        }
        v
    }

    /// Inverse of [`ParamVector::packed`] for a given shape.
    pub fn from_packed(
        kind: ModelKind,
        n_alpha: usize,
        n_beta: usize,
        packed: &[f64],
    ) -> Result<Self> {
        let expect = n_alpha + n_beta + usize::from(kind == ModelKind::GtdlFrailty);
        if packed.len() != expect {
            return Err(Error::Dimension(format!(
                "packed vector has length {}, expected {}",
                packed.len(),
                expect
            )));
        }
        let alpha = packed[..n_alpha].to_vec();
        let beta = packed[n_alpha..n_alpha + n_beta].to_vec();
        let theta = (kind == ModelKind::GtdlFrailty).then(|| packed[n_alpha + n_beta]);
        Ok(Self {
            alpha,
            beta,
            theta,
            lambda: DEFAULT_LAMBDA,
        })
    }

    /// Generic labels `alpha0.., beta0.., theta` in packed order.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.alpha.len() {
            out.push(format!("alpha{j}"));
        }
        for j in 0..self.beta.len() {
            out.push(format!("beta{j}"));
        }
        if self.theta.is_some() {
            out.push("theta".into());
        }
        out
    }
}

/// Dot product of a covariate row with a coefficient vector.
pub fn linear_predictor(x: &[f64], coef: &[f64]) -> Result<f64> {
    if x.len() != coef.len() {
        return Err(Error::Dimension(format!(
            "covariate row has length {}, coefficients {}",
            x.len(),
            coef.len()
        )));
    }
    Ok(dot(x, coef))
}

#[inline]
fn dot(x: &[f64], coef: &[f64]) -> f64 {
    x.iter().zip(coef).map(|(a, b)| a * b).sum()
}

/// Both linear predictors for case `i` of a dataset.
pub fn predictors_for_case(
    params: &ParamVector,
    data: &SurvivalDataset,
    i: usize,
) -> Result<LinearPredictors> {
    let eta_beta = linear_predictor(data.covariates_beta().row(i), &params.beta)?;
    let eta_alpha = linear_predictor(data.covariates_alpha().row(i), &params.alpha)?;
    Ok(LinearPredictors {
        eta_beta,
        eta_alpha,
    })
}

/// Baseline cumulative hazard `H0(t) = (lambda/alpha) * [log1pexp(alpha t + b) - log1pexp(b)]`,
/// with the exponential-baseline limit `lambda * t * logistic(b)` at alpha -> 0.
pub fn cumulative_hazard_gtdl(t: f64, lp: LinearPredictors, lambda: f64) -> f64 {
    let a = lp.eta_alpha;
    let b = lp.eta_beta;
    if a.abs() < ALPHA_LINEAR_LIMIT {
        // midpoint-corrected limit; second-order accurate in alpha*t
        lambda * t * logistic(b + 0.5 * a * t)
    } else {
        (lambda / a) * (log1pexp(a * t + b) - log1pexp(b))
    }
}

/// Finite limit of the cumulative hazard as t -> infinity; `None` in the
/// proper regime (eta_alpha >= 0), where it diverges.
pub fn cumulative_hazard_limit(lp: LinearPredictors, lambda: f64) -> Option<f64> {
    if lp.eta_alpha < 0.0 && lp.eta_alpha.abs() >= ALPHA_LINEAR_LIMIT {
        Some(-(lambda / lp.eta_alpha) * log1pexp(lp.eta_beta))
    } else {
        None
    }
}

/// GTDL hazard `lambda * logistic(eta_alpha t + eta_beta)`.
pub fn hazard_gtdl(t: f64, lp: LinearPredictors, lambda: f64) -> f64 {
    lambda * logistic(lp.eta_alpha * t + lp.eta_beta)
}

/// GTDL reliability (survivor) function.
pub fn reliability_gtdl(t: f64, lp: LinearPredictors, lambda: f64) -> f64 {
    (-cumulative_hazard_gtdl(t, lp, lambda)).exp()
}

/// GTDL density, hazard times reliability.
pub fn density_gtdl(t: f64, lp: LinearPredictors, lambda: f64) -> f64 {
    hazard_gtdl(t, lp, lambda) * reliability_gtdl(t, lp, lambda)
}

/// Ratio of GTDL hazards for two covariate profiles at time t; time-varying
/// whenever the profiles differ, which is what makes the model non-PH.
pub fn hazard_ratio_gtdl(
    t: f64,
    lp_i: LinearPredictors,
    lp_j: LinearPredictors,
    _lambda: f64,
) -> f64 {
    let zi = lp_i.eta_alpha * t + lp_i.eta_beta;
    let zj = lp_j.eta_alpha * t + lp_j.eta_beta;
    // log logistic(z) = z - log1pexp(z); lambda cancels
    ((zi - log1pexp(zi)) - (zj - log1pexp(zj))).exp()
}

/// GTDL cure fraction `(1 + e^{eta_beta})^{lambda/eta_alpha}`; defined only in
/// the defective regime `eta_alpha < 0`.
pub fn cure_fraction_gtdl(lp: LinearPredictors, lambda: f64) -> Result<f64> {
    match cumulative_hazard_limit(lp, lambda) {
        Some(h_inf) => Ok((-h_inf).exp()),
        None => Err(Error::ProperRegime {
            eta_alpha: lp.eta_alpha,
        }),
    }
}

fn check_theta(theta: f64) -> Result<f64> {
    if theta <= 0.0 || !theta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "theta must be positive and finite, got {theta}"
        )));
    }
    Ok(theta)
}

/// log of the frailty bracket `1 + theta * H0(t)`; errors if it is not positive.
fn log_bracket(t: f64, lp: LinearPredictors, lambda: f64, theta: f64) -> Result<f64> {
    let h0 = cumulative_hazard_gtdl(t, lp, lambda);
    let arg = theta * h0;
    if arg <= -1.0 || !arg.is_finite() {
        return Err(Error::Evaluation(format!(
            "frailty bracket 1 + theta*H0 = {} is not positive",
            1.0 + arg
        )));
    }
    Ok(arg.ln_1p())
}

/// Marginal reliability of the gamma-frailty model, `[1 + theta H0(t)]^{-1/theta}`.
pub fn reliability_frailty(t: f64, lp: LinearPredictors, lambda: f64, theta: f64) -> Result<f64> {
    let theta = check_theta(theta)?;
    Ok((-log_bracket(t, lp, lambda, theta)? / theta).exp())
}

/// Marginal hazard of the gamma-frailty model, `h0(t) / [1 + theta H0(t)]`.
pub fn hazard_frailty(t: f64, lp: LinearPredictors, lambda: f64, theta: f64) -> Result<f64> {
    let theta = check_theta(theta)?;
    Ok(hazard_gtdl(t, lp, lambda) * (-log_bracket(t, lp, lambda, theta)?).exp())
}

/// Marginal density of the gamma-frailty model, `h0(t) / [1 + theta H0(t)]^{1 + 1/theta}`.
///
/// Deliberately evaluated through the bracket power rather than as
/// hazard times reliability, so the algebraic identity f = h * R can be
/// cross-checked between two independent routes.
pub fn density_frailty(t: f64, lp: LinearPredictors, lambda: f64, theta: f64) -> Result<f64> {
    let theta = check_theta(theta)?;
    let lb = log_bracket(t, lp, lambda, theta)?;
    Ok(hazard_gtdl(t, lp, lambda) * (-(1.0 + 1.0 / theta) * lb).exp())
}

/// Cure fraction of the gamma-frailty model; defective regime only.
pub fn cure_fraction_frailty(lp: LinearPredictors, lambda: f64, theta: f64) -> Result<f64> {
    let theta = check_theta(theta)?;
    match cumulative_hazard_limit(lp, lambda) {
        Some(h_inf) => Ok((-(theta * h_inf).ln_1p() / theta).exp()),
        None => Err(Error::ProperRegime {
            eta_alpha: lp.eta_alpha,
        }),
    }
}

fn check_shapes(params: &ParamVector, data: &SurvivalDataset) -> Result<()> {
    if params.alpha.len() != data.covariates_alpha().ncols() {
        return Err(Error::Dimension(format!(
            "alpha has {} coefficients, covariates_alpha has {} columns",
            params.alpha.len(),
            data.covariates_alpha().ncols()
        )));
    }
    if params.beta.len() != data.covariates_beta().ncols() {
        return Err(Error::Dimension(format!(
            "beta has {} coefficients, covariates_beta has {} columns",
            params.beta.len(),
            data.covariates_beta().ncols()
        )));
    }
    Ok(())
}

fn finite_or_eval_error(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Evaluation(format!("{what} is not finite ({value})")))
    }
}

/// GTDL log-likelihood for right-censored data, alpha regression applied per case.
pub fn loglik_gtdl(params: &ParamVector, data: &SurvivalDataset) -> Result<f64> {
    check_shapes(params, data)?;
    let lambda = params.lambda;
    let log_lambda = lambda.ln();
    let mut contrib = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let lp = LinearPredictors {
            eta_alpha: dot(data.covariates_alpha().row(i), &params.alpha),
            eta_beta: dot(data.covariates_beta().row(i), &params.beta),
        };
        let t = data.times()[i];
        let z = lp.eta_alpha * t + lp.eta_beta;
        let mut c = -cumulative_hazard_gtdl(t, lp, lambda);
        if data.status()[i] {
            c += log_lambda + z - log1pexp(z);
        }
        contrib.push(c);
    }
    finite_or_eval_error(stable_sum(&mut contrib), "GTDL log-likelihood")
}

/// Gamma-frailty marginal log-likelihood,
/// `sum delta_i log h(t_i) + sum log R(t_i)` with the marginal h and R.
pub fn loglik_frailty(params: &ParamVector, data: &SurvivalDataset) -> Result<f64> {
    check_shapes(params, data)?;
    let theta =
        check_theta(params.theta.ok_or_else(|| {
            Error::InvalidArgument("frailty log-likelihood requires theta".into())
        })?)?;
    let lambda = params.lambda;
    let log_lambda = lambda.ln();
    let mut contrib = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let lp = LinearPredictors {
            eta_alpha: dot(data.covariates_alpha().row(i), &params.alpha),
            eta_beta: dot(data.covariates_beta().row(i), &params.beta),
        };
        let t = data.times()[i];
        let z = lp.eta_alpha * t + lp.eta_beta;
        let lb = log_bracket(t, lp, lambda, theta)?;
        let delta = f64::from(data.status()[i]);
        let mut c = -(delta + 1.0 / theta) * lb;
        if data.status()[i] {
            c += log_lambda + z - log1pexp(z);
        }
        contrib.push(c);
    }
    finite_or_eval_error(stable_sum(&mut contrib), "frailty log-likelihood")
}

/// Log-likelihood dispatch; the parameter vector must match the model kind.
pub fn loglik(kind: ModelKind, params: &ParamVector, data: &SurvivalDataset) -> Result<f64> {
    match kind {
        ModelKind::Gtdl => {
            if params.theta.is_some() {
                return Err(Error::InvalidArgument(
                    "GTDL parameters must not carry theta".into(),
                ));
            }
            loglik_gtdl(params, data)
        }
        ModelKind::GtdlFrailty => loglik_frailty(params, data),
    }
}

/// Fitted reliability at case `i`, dispatching on the model kind.
pub fn reliability_at(
    kind: ModelKind,
    params: &ParamVector,
    data: &SurvivalDataset,
    i: usize,
) -> Result<f64> {
    let lp = predictors_for_case(params, data, i)?;
    let t = data.times()[i];
    match kind {
        ModelKind::Gtdl => Ok(reliability_gtdl(t, lp, params.lambda)),
        ModelKind::GtdlFrailty => {
            let theta = params.theta.ok_or_else(|| {
                Error::InvalidArgument("frailty reliability requires theta".into())
            })?;
            reliability_frailty(t, lp, params.lambda, theta)
        }
    }
}
