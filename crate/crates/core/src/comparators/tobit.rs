//! Random-intercept Tobit model on `z = ln Y`, left-censored where `Y = 0`.

use super::{
    fit_random_intercept, fixed_effects_start, ComparatorFit, Design, FitConfig, ObsModel,
    QuadMode, QuadratureRule, RandomIntercept, Terms,
};
use crate::error::{Error, Result};
use crate::normal;
use crate::panel::PanelDataset;

/// Parameters on their natural scale. `beta` starts with the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct TobitParams {
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub sigma_s: f64,
}

impl TobitParams {
    fn packed(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.sigma.ln());
        v.push(self.sigma_s.ln());
        v
    }
}

pub(crate) struct Tobit;

impl ObsModel for Tobit {
    const NAME: &'static str = "tobit";
    const HAS_SCALE: bool = true;

    // censored rows carry NaN
    fn terms(&self, z: f64, mu: f64, sigma: f64) -> Terms {
        if z.is_nan() {
            let a = -mu / sigma;
            let lam = normal::mills_inverse(a);
            Terms {
                l: normal::ln_cdf(a),
                d1: -lam / sigma,
                d2: -lam * (a + lam) / (sigma * sigma),
                ds: -lam * a,
            }
        } else {
            let r = (z - mu) / sigma;
            Terms {
                l: normal::ln_pdf(r) - sigma.ln(),
                d1: r / sigma,
                d2: -1.0 / (sigma * sigma),
                ds: r * r - 1.0,
            }
        }
    }
}

fn design(ds: &PanelDataset) -> Result<Design> {
    let d = Design::new(ds, |y| if y > 0.0 { y.ln() } else { f64::NAN })?;
    if d.response.iter().all(|z| z.is_nan()) {
        return Err(Error::DegenerateData("every outcome is zero".into()));
    }
    Ok(d)
}

fn check(params: &TobitParams, k: usize) -> Result<()> {
    if params.beta.len() != k {
        return Err(Error::Config(format!(
            "expected {k} coefficients, got {}",
            params.beta.len()
        )));
    }
    if !(params.sigma > 0.0 && params.sigma_s > 0.0)
        || !params.sigma.is_finite()
        || !params.sigma_s.is_finite()
    {
        return Err(Error::Domain(
            "sigma and sigma_s must be positive and finite".into(),
        ));
    }
    Ok(())
}

/// Marginal log-likelihood.
pub fn tobit_loglik(
    ds: &PanelDataset,
    params: &TobitParams,
    rule: &QuadratureRule,
    mode: QuadMode,
) -> Result<f64> {
    let d = design(ds)?;
    check(params, d.k)?;
    let ri = RandomIntercept {
        design: &d,
        model: &Tobit,
        rule,
        mode,
    };
    let v = ri.loglik(&params.packed());
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation(format!("Tobit log-likelihood is {v}")))
    }
}

/// Fit and test the covariate `cfg.interest`. Without `init`, coefficients
/// come from a fixed-effects censored regression and `σ = σ_s = 0.5`.
pub fn fit_tobit(
    ds: &PanelDataset,
    cfg: &FitConfig,
    init: Option<&TobitParams>,
) -> Result<ComparatorFit> {
    let d = design(ds)?;
    let x0 = match init {
        Some(p) => {
            check(p, d.k)?;
            p.packed()
        }
        None => {
            let fe = fixed_effects_start(&d, &Tobit, vec![0.0; d.k + 1]);
            let mut start = fe[..d.k].to_vec();
            if start.iter().any(|v| !v.is_finite()) {
                start = vec![0.0; d.k];
            }
            start.push(0.5f64.ln());
            start.push(0.5f64.ln());
            start
        }
    };
    fit_random_intercept(&d, &Tobit, cfg, x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::Observation;

    fn one(y: f64, x: [f64; 2]) -> PanelDataset {
        PanelDataset::new(
            vec![Observation {
                subject_id: "a".into(),
                time: None,
                outcome: y,
                covariates: x.to_vec(),
            }],
            vec!["x1".into(), "x2".into()],
        )
        .unwrap()
    }

    #[test]
    fn density_at_mode() {
        let ds = one(1.0, [0.0, 0.5]);
        let rule = QuadratureRule::gauss_hermite(1).unwrap();
        let p = TobitParams {
            beta: vec![0.0, 0.0, 0.0],
            sigma: 1.0,
            sigma_s: 1e-6,
        };
        let v = tobit_loglik(&ds, &p, &rule, QuadMode::Plain).unwrap();
        assert!((v - (1.0 / (2.0 * std::f64::consts::PI).sqrt()).ln()).abs() < 1e-12);
    }

    #[test]
    fn censoring_at_zero() {
        let mut ds = one(0.0, [0.5, 0.0]);
        ds = PanelDataset::new(
            [
                ds.observations().to_vec(),
                one(2.0, [0.0, 0.5]).observations().to_vec(),
            ]
            .concat(),
            vec!["x1".into(), "x2".into()],
        )
        .unwrap();
        let t = Tobit.terms(f64::NAN, 0.0, 1.0);
        assert!((t.l - 0.5f64.ln()).abs() < 1e-15);
        let rule = QuadratureRule::gauss_hermite(1).unwrap();
        let p = TobitParams {
            beta: vec![0.0, 0.0, 0.0],
            sigma: 1.0,
            sigma_s: 1.0,
        };
        let v = tobit_loglik(&ds, &p, &rule, QuadMode::Plain).unwrap();
        let want = 0.5f64.ln() + normal::ln_pdf(2f64.ln());
        assert!((v - want).abs() < 1e-12);
    }

    #[test]
    fn censored_contribution_falls_with_mu() {
        let mut last = f64::INFINITY;
        for i in -8..=20 {
            let t = Tobit.terms(f64::NAN, i as f64 * 0.5, 0.8);
            assert!(t.l < last);
            last = t.l;
        }
    }

    #[test]
    fn all_zero_is_degenerate() {
        let ds = one(0.0, [0.0, 0.5]);
        let e = fit_tobit(&ds, &FitConfig::default(), None).unwrap_err();
        assert!(matches!(e, Error::DegenerateData(_)));
    }

    #[test]
    fn terms_match_finite_differences() {
        for &(z, mu, s) in &[(f64::NAN, 0.3, 0.7), (f64::NAN, -2.0, 1.3), (0.4, 1.1, 0.6)] {
            let t = Tobit.terms(z, mu, s);
            let e = 1e-6;
            let d1 = (Tobit.terms(z, mu + e, s).l - Tobit.terms(z, mu - e, s).l) / (2.0 * e);
            let d2 = (Tobit.terms(z, mu + e, s).d1 - Tobit.terms(z, mu - e, s).d1) / (2.0 * e);
            let ds = (Tobit.terms(z, mu, s * (e).exp()).l - Tobit.terms(z, mu, s * (-e).exp()).l)
                / (2.0 * e);
            assert!((t.d1 - d1).abs() < 1e-6);
            assert!((t.d2 - d2).abs() < 1e-6);
            assert!((t.ds - ds).abs() < 1e-6);
        }
    }
}
