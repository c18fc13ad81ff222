//! Random-intercept logistic model on `U = I(Y ≠ 0)`.

use super::{
    fit_random_intercept, fixed_effects_start, ComparatorFit, Design, FitConfig, ObsModel,
    QuadMode, QuadratureRule, RandomIntercept, Terms,
};
use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// Coefficients beyond this size are treated as separation.
const SEPARATION: f64 = 50.0;
/// `logit(1 - 1e-8)`: fitted probabilities beyond it are numerically 0 or 1.
const SATURATED_ETA: f64 = 18.42;

/// Parameters on their natural scale. `beta` starts with the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticParams {
    pub beta: Vec<f64>,
    pub sigma_s: f64,
}

impl LogisticParams {
    fn packed(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.sigma_s.ln());
        v
    }
}

pub(crate) struct Logistic;

impl ObsModel for Logistic {
    const NAME: &'static str = "logistic";
    const HAS_SCALE: bool = false;

    fn terms(&self, u: f64, eta: f64, _: f64) -> Terms {
        // ln(1 + e^η) without overflow
        let softplus = eta.max(0.0) + (-eta.abs()).exp().ln_1p();
        let p = 1.0 / (1.0 + (-eta).exp());
        Terms {
            l: u * eta - softplus,
            d1: u - p,
            d2: -p * (1.0 - p),
            ds: 0.0,
        }
    }
}

fn design(ds: &PanelDataset) -> Result<Design> {
    let d = Design::new(ds, |y| if y != 0.0 { 1.0 } else { 0.0 })?;
    let first = d.response[0];
    if d.response.iter().all(|&u| u == first) {
        return Err(Error::DegenerateData(format!(
            "every occurrence indicator is {first}; the logistic model is not identified"
        )));
    }
    Ok(d)
}

fn check(params: &LogisticParams, k: usize) -> Result<()> {
    if params.beta.len() != k {
        return Err(Error::Config(format!(
            "expected {k} coefficients, got {}",
            params.beta.len()
        )));
    }
    if !(params.sigma_s > 0.0 && params.sigma_s.is_finite()) {
        return Err(Error::Domain("sigma_s must be positive and finite".into()));
    }
    Ok(())
}

/// Marginal log-likelihood.
pub fn logistic_loglik(
    ds: &PanelDataset,
    params: &LogisticParams,
    rule: &QuadratureRule,
    mode: QuadMode,
) -> Result<f64> {
    let d = design(ds)?;
    check(params, d.k)?;
    let ri = RandomIntercept {
        design: &d,
        model: &Logistic,
        rule,
        mode,
    };
    let v = ri.loglik(&params.packed());
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation(format!("logistic log-likelihood is {v}")))
    }
}

/// Fit and test the covariate `cfg.interest`. Without `init`, coefficients
/// come from a fixed-effects logistic fit and `σ_s = 0.5`.
pub fn fit_logistic(
    ds: &PanelDataset,
    cfg: &FitConfig,
    init: Option<&LogisticParams>,
) -> Result<ComparatorFit> {
    let d = design(ds)?;
    let x0 = match init {
        Some(p) => {
            check(p, d.k)?;
            p.packed()
        }
        None => {
            let mut start = fixed_effects_start(&d, &Logistic, vec![0.0; d.k]);
            if start.iter().any(|v| !v.is_finite() || v.abs() > SEPARATION) {
                start = vec![0.0; d.k];
            }
            start.push(0.5f64.ln());
            start
        }
    };
    let mut fit = fit_random_intercept(&d, &Logistic, cfg, x0)?;
    let beta = &fit.estimates[..d.k];
    let saturated = (0..d.response.len()).any(|r| d.linear(r, beta).abs() > SATURATED_ETA);
    if saturated || beta.iter().any(|b| b.abs() > SEPARATION) {
        fit.converged = false;
        fit.message = Some("coefficients diverge; the data appear separated".into());
    }
    Ok(fit)
}
