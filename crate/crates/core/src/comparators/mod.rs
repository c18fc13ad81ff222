//! Parametric comparator tests: random-intercept Tobit on log outcomes and
//! random-intercept logistic regression on the occurrence indicator, each
//! with a Wald test for one coefficient.
//!
//! Both share one engine. The subject-level marginal likelihood integrates
//! a normal random intercept by Gauss–Hermite quadrature, by default with
//! nodes re-centered at each subject's posterior mode. Parameters are
//! `(β, log σ?, log σ_s)`; the fit is a bounded Newton ascent in which the
//! quadrature centers are refreshed at every iterate and held fixed within
//! it, so the gradient is analytic and the Hessian is a central difference
//! of that gradient.

pub mod logistic;
mod newton;
pub mod quadrature;
pub mod tobit;

use std::f64::consts::{PI, SQRT_2};
use std::ops::Range;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::normal;
use crate::panel::PanelDataset;
use crate::par;

use newton::{NewtonOptions, Smooth};
pub use quadrature::{QuadMode, QuadratureRule};

/// Lower bound on `log σ` and `log σ_s`.
const LOG_SCALE_FLOOR: f64 = -9.2;
const SUBJECT_BLOCK: usize = 16;

/// Settings shared by both comparator fits.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub nodes: usize,
    pub mode: QuadMode,
    /// Convergence threshold on the gradient sup-norm.
    pub tol: f64,
    pub max_iters: usize,
    /// Covariate tested by the Wald test (index among the covariates,
    /// intercept excluded).
    pub interest: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            nodes: 5,
            mode: QuadMode::Adaptive,
            tol: 1e-5,
            max_iters: 200,
            interest: 0,
        }
    }
}

/// Outcome of a comparator fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparatorFit {
    pub model: &'static str,
    /// Parameter names: `(intercept)`, covariates, then variance parameters.
    pub names: Vec<String>,
    /// Coefficients, then `σ` (Tobit) and `σ_s` on their natural scale.
    pub estimates: Vec<f64>,
    /// Standard errors from the inverse observed information; `NaN` where
    /// unavailable.
    pub se: Vec<f64>,
    pub interest: String,
    pub wald_z: Option<f64>,
    pub wald_p: Option<f64>,
    pub converged: bool,
    /// `σ_s` ended on its lower bound and was held fixed for the standard errors.
    pub boundary: bool,
    pub loglik: f64,
    pub iterations: usize,
    pub message: Option<String>,
}

impl ComparatorFit {
    /// Converged and rejecting at level `alpha`.
    pub fn rejects(&self, alpha: f64) -> bool {
        self.converged && self.wald_p.is_some_and(|p| p < alpha)
    }
}

/// Per-observation log-likelihood pieces at linear predictor `μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Terms {
    pub l: f64,
    /// `∂ℓ/∂μ`
    pub d1: f64,
    /// `∂²ℓ/∂μ²`
    pub d2: f64,
    /// `σ ∂ℓ/∂σ`
    pub ds: f64,
}

/// Conditional model of one observation given the random intercept.
pub(crate) trait ObsModel: Sync {
    const NAME: &'static str;
    const HAS_SCALE: bool;
    fn terms(&self, response: f64, mu: f64, sigma: f64) -> Terms;
}

/// Model matrix with intercept, rows grouped by subject.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub response: Vec<f64>,
    pub x: Vec<f64>,
    /// Columns including the intercept.
    pub k: usize,
    pub groups: Vec<Range<usize>>,
    pub names: Vec<String>,
}

impl Design {
    pub fn new<F: Fn(f64) -> f64>(ds: &PanelDataset, transform: F) -> Result<Self> {
        if ds.n_subjects() == 0 {
            return Err(Error::DegenerateData("empty dataset".into()));
        }
        let k = ds.p() + 1;
        let mut by_subject: Vec<Vec<usize>> = vec![Vec::new(); ds.n_subjects()];
        for (row, &s) in ds.subject_of().iter().enumerate() {
            by_subject[s].push(row);
        }
        let mut response = Vec::with_capacity(ds.n_obs());
        let mut x = Vec::with_capacity(ds.n_obs() * k);
        let mut groups = Vec::with_capacity(by_subject.len());
        for rows in by_subject {
            let start = response.len();
            for r in rows {
                let o = &ds.observations()[r];
                response.push(transform(o.outcome));
                x.push(1.0);
                x.extend_from_slice(&o.covariates);
            }
            groups.push(start..response.len());
        }
        let mut names = vec!["(intercept)".to_string()];
        names.extend(ds.covariate_names().iter().cloned());
        Ok(Design {
            response,
            x,
            k,
            groups,
            names,
        })
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.x[r * self.k..(r + 1) * self.k]
    }

    fn linear(&self, r: usize, beta: &[f64]) -> f64 {
        self.row(r).iter().zip(beta).map(|(a, b)| a * b).sum()
    }
}

/// Random-intercept marginal likelihood for one observation model.
pub(crate) struct RandomIntercept<'a, M> {
    pub design: &'a Design,
    pub model: &'a M,
    pub rule: &'a QuadratureRule,
    pub mode: QuadMode,
}

struct Unpacked<'p> {
    beta: &'p [f64],
    sigma: f64,
    sigma_s: f64,
}

impl<'a, M: ObsModel> RandomIntercept<'a, M> {
    pub fn n_params(&self) -> usize {
        self.design.k + usize::from(M::HAS_SCALE) + 1
    }

    fn unpack<'p>(&self, theta: &'p [f64]) -> Unpacked<'p> {
        let k = self.design.k;
        Unpacked {
            beta: &theta[..k],
            sigma: if M::HAS_SCALE { theta[k].exp() } else { 1.0 },
            sigma_s: theta[self.n_params() - 1].exp(),
        }
    }

    /// Posterior mode of the random intercept and the normal-approximation
    /// scale there.
    fn center(&self, rows: Range<usize>, mu: &[f64], sigma: f64, sigma_s: f64) -> (f64, f64) {
        let r = &self.design.response[rows];
        let prec = 1.0 / (sigma_s * sigma_s);
        let eval = |u: f64| {
            let (mut g, mut g1, mut g2) = (-0.5 * u * u * prec, -u * prec, -prec);
            for (y, m) in r.iter().zip(mu) {
                let t = self.model.terms(*y, m + u, sigma);
                g += t.l;
                g1 += t.d1;
                g2 += t.d2;
            }
            (g, g1, g2)
        };
        let mut u = 0.0;
        let (mut g, mut g1, mut g2) = eval(u);
        for _ in 0..100 {
            let mut step = -g1 / g2;
            let mut accepted = false;
            for _ in 0..40 {
                let cand = eval(u + step);
                if cand.0 >= g {
                    u += step;
                    (g, g1, g2) = cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted || step.abs() <= 1e-12 * (1.0 + u.abs()) {
                break;
            }
        }
        (u, 1.0 / (-g2).sqrt())
    }

    fn centers(&self, theta: &[f64]) -> Vec<(f64, f64)> {
        if self.mode == QuadMode::Plain {
            return Vec::new();
        }
        let p = self.unpack(theta);
        par::map_indexed(self.design.groups.len(), |i| {
            let rows = self.design.groups[i].clone();
            let mu: Vec<f64> = rows
                .clone()
                .map(|r| self.design.linear(r, p.beta))
                .collect();
            self.center(rows, &mu, p.sigma, p.sigma_s)
        })
    }

    /// Log marginal likelihood of subject `i` and, if requested, its
    /// gradient with the quadrature center held fixed.
    fn subject(
        &self,
        i: usize,
        theta: &[f64],
        centers: &[(f64, f64)],
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let d = self.design;
        let p = self.unpack(theta);
        let rows = d.groups[i].clone();
        let mu: Vec<f64> = rows.clone().map(|r| d.linear(r, p.beta)).collect();
        let np = self.n_params();
        let want = grad.is_some();
        let nodes = self.rule.len();
        let mut a = Vec::with_capacity(nodes);
        let mut node_grads = if want {
            vec![0.0; nodes * np]
        } else {
            Vec::new()
        };
        for (q, (&x, &w)) in self.rule.nodes.iter().zip(&self.rule.weights).enumerate() {
            let (u, base) = match self.mode {
                QuadMode::Adaptive => {
                    let (c, s) = centers[i];
                    let u = c + SQRT_2 * s * x;
                    let base = w.ln() + x * x + (SQRT_2 * s).ln() + normal::ln_pdf(u / p.sigma_s)
                        - p.sigma_s.ln();
                    (u, base)
                }
                QuadMode::Plain => (SQRT_2 * p.sigma_s * x, w.ln() - 0.5 * PI.ln()),
            };
            let mut ak = base;
            let g = if want {
                Some(&mut node_grads[q * np..(q + 1) * np])
            } else {
                None
            };
            match g {
                Some(g) => {
                    let mut d1_sum = 0.0;
                    for (j, r) in rows.clone().enumerate() {
                        let t = self.model.terms(d.response[r], mu[j] + u, p.sigma);
                        ak += t.l;
                        d1_sum += t.d1;
                        for (gc, xc) in g[..d.k].iter_mut().zip(d.row(r)) {
                            *gc += t.d1 * xc;
                        }
                        if M::HAS_SCALE {
                            g[d.k] += t.ds;
                        }
                    }
                    g[np - 1] = match self.mode {
                        QuadMode::Adaptive => (u / p.sigma_s).powi(2) - 1.0,
                        QuadMode::Plain => d1_sum * u,
                    };
                }
                None => {
                    for (j, r) in rows.clone().enumerate() {
                        ak += self.model.terms(d.response[r], mu[j] + u, p.sigma).l;
                    }
                }
            }
            a.push(ak);
        }
        let lse = quadrature::log_sum_exp(&a);
        if let Some(out) = grad {
            for (q, ak) in a.iter().enumerate() {
                let wq = (ak - lse).exp();
                for (o, g) in out.iter_mut().zip(&node_grads[q * np..(q + 1) * np]) {
                    *o += wq * g;
                }
            }
        }
        lse
    }

    fn total(&self, theta: &[f64], centers: &[(f64, f64)]) -> f64 {
        par::block_sum(self.design.groups.len(), SUBJECT_BLOCK, |r| {
            r.map(|i| self.subject(i, theta, centers, None)).sum()
        })
    }

    fn total_grad(&self, theta: &[f64], centers: &[(f64, f64)]) -> (f64, Vec<f64>) {
        let np = self.n_params();
        let acc = par::block_sum_vec(self.design.groups.len(), SUBJECT_BLOCK, np + 1, |r| {
            let mut out = vec![0.0; np + 1];
            for i in r {
                let v = self.subject(i, theta, centers, Some(&mut out[1..]));
                out[0] += v;
            }
            out
        });
        (acc[0], acc[1..].to_vec())
    }

    /// Marginal log-likelihood at `theta`.
    pub fn loglik(&self, theta: &[f64]) -> f64 {
        let centers = self.centers(theta);
        self.total(theta, &centers)
    }
}

impl<M: ObsModel> Smooth for RandomIntercept<'_, M> {
    type Aux = Vec<(f64, f64)>;

    fn prepare(&self, x: &[f64]) -> Self::Aux {
        self.centers(x)
    }

    fn value(&self, x: &[f64], aux: &Self::Aux) -> f64 {
        self.total(x, aux)
    }

    fn value_grad(&self, x: &[f64], aux: &Self::Aux) -> (f64, Vec<f64>) {
        self.total_grad(x, aux)
    }
}

/// The same model without the random intercept, for starting values.
pub(crate) struct FixedEffects<'a, M> {
    pub design: &'a Design,
    pub model: &'a M,
}

impl<M: ObsModel> Smooth for FixedEffects<'_, M> {
    type Aux = ();

    fn prepare(&self, _: &[f64]) {}

    fn value(&self, x: &[f64], _: &()) -> f64 {
        self.value_grad(x, &()).0
    }

    fn value_grad(&self, x: &[f64], _: &()) -> (f64, Vec<f64>) {
        let d = self.design;
        let sigma = if M::HAS_SCALE { x[d.k].exp() } else { 1.0 };
        let mut g = vec![0.0; x.len()];
        let mut v = 0.0;
        for r in 0..d.response.len() {
            let t = self
                .model
                .terms(d.response[r], d.linear(r, &x[..d.k]), sigma);
            v += t.l;
            for (gc, xc) in g[..d.k].iter_mut().zip(d.row(r)) {
                *gc += t.d1 * xc;
            }
            if M::HAS_SCALE {
                g[d.k] += t.ds;
            }
        }
        (v, g)
    }
}

pub(crate) fn fixed_effects_start<M: ObsModel>(
    design: &Design,
    model: &M,
    x0: Vec<f64>,
) -> Vec<f64> {
    let opts = NewtonOptions {
        tol: 1e-8,
        max_iters: 50,
        lower: (0..x0.len())
            .map(|i| {
                if i >= design.k {
                    LOG_SCALE_FLOOR
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect(),
        max_step: 2.0,
    };
    newton::maximize(&FixedEffects { design, model }, x0, &opts).x
}

/// Invert the observed information on the coordinates in `keep`.
fn covariance(hessian: &DMatrix<f64>, keep: &[usize]) -> Option<DMatrix<f64>> {
    let m = keep.len();
    let info = DMatrix::from_fn(m, m, |a, b| -hessian[(keep[a], keep[b])]);
    if info.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(info.cholesky()?.inverse())
}

/// Fit a random-intercept model and run the Wald test.
pub(crate) fn fit_random_intercept<M: ObsModel>(
    design: &Design,
    model: &M,
    cfg: &FitConfig,
    init: Vec<f64>,
) -> Result<ComparatorFit> {
    if cfg.interest + 1 >= design.k {
        return Err(Error::Config(format!(
            "covariate of interest {} out of range for {} covariates",
            cfg.interest,
            design.k - 1
        )));
    }
    let rule = QuadratureRule::gauss_hermite(cfg.nodes)?;
    let ri = RandomIntercept {
        design,
        model,
        rule: &rule,
        mode: cfg.mode,
    };
    let np = ri.n_params();
    if init.len() != np {
        return Err(Error::Config(format!(
            "expected {np} initial values, got {}",
            init.len()
        )));
    }
    let opts = NewtonOptions {
        tol: cfg.tol,
        max_iters: cfg.max_iters,
        lower: (0..np)
            .map(|i| {
                if i >= design.k {
                    LOG_SCALE_FLOOR
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect(),
        max_step: 2.0,
    };
    let out = newton::maximize(&ri, init, &opts);
    let mut message = None;
    let mut converged = out.converged;
    if !converged {
        message = Some(format!(
            "no convergence after {} iterations",
            out.iterations
        ));
    }

    // standard errors on the free coordinates; σ_s is held fixed when it
    // sits on its bound or its curvature is not identified
    let sigma_s_idx = np - 1;
    let mut keep: Vec<usize> = (0..np).filter(|&i| !out.at_bound[i]).collect();
    let mut boundary = out.at_bound[sigma_s_idx];
    let mut cov = covariance(&out.hessian, &keep);
    if cov.is_none() && keep.contains(&sigma_s_idx) {
        keep.retain(|&i| i != sigma_s_idx);
        cov = covariance(&out.hessian, &keep);
        boundary = cov.is_some();
    }
    let mut se = vec![f64::NAN; np];
    if let Some(cov) = &cov {
        for (a, &i) in keep.iter().enumerate() {
            let s = cov[(a, a)].sqrt();
            se[i] = if i >= design.k { s * out.x[i].exp() } else { s };
        }
    } else {
        converged = false;
        message.get_or_insert_with(|| "observed information is not positive definite".into());
    }

    let j = cfg.interest + 1;
    let wald_z = (se[j].is_finite() && se[j] > 0.0).then(|| out.x[j] / se[j]);
    let wald_p = wald_z.map(|z| normal::two_sided_p(z).max(f64::MIN_POSITIVE));
    if wald_p.is_none() {
        converged = false;
    }
    let estimates: Vec<f64> = out
        .x
        .iter()
        .enumerate()
        .map(|(i, v)| if i >= design.k { v.exp() } else { *v })
        .collect();
    let mut names = design.names.clone();
    if M::HAS_SCALE {
        names.push("sigma".into());
    }
    names.push("sigma_s".into());
    Ok(ComparatorFit {
        model: M::NAME,
        interest: design.names[j].clone(),
        names,
        estimates,
        se,
        wald_z,
        wald_p,
        converged,
        boundary,
        loglik: ri.loglik(&out.x),
        iterations: out.iterations,
        message,
    })
}
