//! Maximization over the unit sphere through hyperspherical angles.
//!
//! A `p`-vector on the sphere is parameterized by `p - 1` angles. The map
//! takes the usual spherical coordinates
//! `x_1 = cos θ_1, x_2 = sin θ_1 cos θ_2, …, x_p = sin θ_1 ⋯ sin θ_{p-1}`
//! and reverses the result, so that for `p = 2` it reads `β = (sin θ, cos θ)`.
//!
//! The optimizer is a damped Newton iteration in angle space: gradients come
//! from the ambient gradient through the Jacobian of the map (or from central
//! differences when no gradient is supplied), the Hessian from central
//! differences of the angle gradient. Steps that fail to increase the
//! objective are halved; an indefinite Hessian falls back to gradient ascent.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::par;

const MAX_HALVINGS: usize = 30;
const MAX_STEP: f64 = 1.0;
const HESS_STEP: f64 = 1e-5;
const GRAD_STEP: f64 = 1e-6;

/// Hyperspherical angles, `p - 1` of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Angles(pub Vec<f64>);

impl Angles {
    /// Each component wrapped into `(-π, π]`.
    pub fn canonical(&self) -> Angles {
        Angles(self.0.iter().map(|&t| wrap_angle(t)).collect())
    }

    pub fn to_unit(&self) -> Vec<f64> {
        polar_to_rect(&self.0)
    }
}

fn wrap_angle(t: f64) -> f64 {
    let mut w = t.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Map `p - 1` angles onto the unit sphere in `R^p`.
pub fn polar_to_rect(theta: &[f64]) -> Vec<f64> {
    let p = theta.len() + 1;
    let mut x = Vec::with_capacity(p);
    let mut sin_prod = 1.0;
    for &t in theta {
        x.push(sin_prod * t.cos());
        sin_prod *= t.sin();
    }
    x.push(sin_prod);
    x.reverse();
    x
}

/// Jacobian `∂β/∂θ` of [`polar_to_rect`], `p × (p - 1)`.
pub fn polar_jacobian(theta: &[f64]) -> DMatrix<f64> {
    let q = theta.len();
    let p = q + 1;
    let (s, c): (Vec<f64>, Vec<f64>) = theta.iter().map(|t| t.sin_cos()).unzip();
    let mut jac = DMatrix::zeros(p, q);
    // row k of the unreversed map: Π_{i<k} sin θ_i · (cos θ_k if k < q)
    for k in 0..p {
        for j in 0..q.min(k + 1) {
            let mut v = 1.0;
            for i in 0..k {
                v *= if i == j { c[i] } else { s[i] };
            }
            if k < q {
                v *= if j == k { -s[k] } else { c[k] };
            }
            jac[(p - 1 - k, j)] = v;
        }
    }
    jac
}

/// A smooth function on the unit sphere.
pub trait SphereObjective: Sync {
    /// Ambient dimension `p`.
    fn dim(&self) -> usize;

    fn value(&self, beta: &[f64]) -> f64;

    /// Value and ambient gradient, when available analytically.
    fn value_and_gradient(&self, _beta: &[f64]) -> Option<(f64, Vec<f64>)> {
        None
    }
}

/// Wraps a plain closure as a [`SphereObjective`] without gradient.
pub struct FnObjective<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> SphereObjective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, beta: &[f64]) -> f64 {
        (self.f)(beta)
    }
}

/// Multistart protocol settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MultistartConfig {
    pub n_starts: usize,
    /// Newton steps run from every start before choosing the best one.
    pub warmup_steps: usize,
    pub angle_low: f64,
    pub angle_high: f64,
    /// Iteration cap for the continued run from the chosen start.
    pub max_iters: usize,
    /// Convergence threshold on the angle-gradient norm.
    pub grad_tol: f64,
}

#[allow(clippy::approx_constant)]
impl Default for MultistartConfig {
    fn default() -> Self {
        MultistartConfig {
            n_starts: 6,
            warmup_steps: 3,
            angle_low: -3.142,
            angle_high: 3.142,
            max_iters: 100,
            grad_tol: 1e-6,
        }
    }
}

impl MultistartConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(Error::Config("n_starts must be at least 1".into()));
        }
        if !(self.angle_low < self.angle_high) {
            return Err(Error::Config("angle_low must be below angle_high".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("grad_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Result of a sphere maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    /// Final angles, canonicalized to `(-π, π]`.
    pub angles: Angles,
    pub beta: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

struct State {
    theta: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
    iterations: usize,
    converged: bool,
}

struct Newton<'a, O: ?Sized> {
    obj: &'a O,
    grad_tol: f64,
}

impl<O: SphereObjective + ?Sized> Newton<'_, O> {
    fn value(&self, theta: &[f64]) -> f64 {
        self.obj.value(&polar_to_rect(theta))
    }

    fn value_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let beta = polar_to_rect(theta);
        match self.obj.value_and_gradient(&beta) {
            Some((v, g)) => {
                let jac = polar_jacobian(theta);
                let gt = jac.transpose() * DVector::from_vec(g);
                (v, gt.iter().copied().collect())
            }
            None => {
                let v = self.obj.value(&beta);
                let g = (0..theta.len())
                    .map(|j| {
                        let mut tp = theta.to_vec();
                        let mut tm = theta.to_vec();
                        tp[j] += GRAD_STEP;
                        tm[j] -= GRAD_STEP;
                        (self.value(&tp) - self.value(&tm)) / (2.0 * GRAD_STEP)
                    })
                    .collect();
                (v, g)
            }
        }
    }

    fn hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        let q = theta.len();
        let mut h = DMatrix::zeros(q, q);
        for j in 0..q {
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[j] += HESS_STEP;
            tm[j] -= HESS_STEP;
            let gp = self.value_grad(&tp).1;
            let gm = self.value_grad(&tm).1;
            for i in 0..q {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * HESS_STEP);
            }
        }
        (&h + h.transpose()) * 0.5
    }

    fn start(&self, theta: Vec<f64>) -> Option<State> {
        let (value, grad) = self.value_grad(&theta);
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        let converged = norm(&grad) < self.grad_tol;
        Some(State {
            theta,
            value,
            grad,
            iterations: 0,
            converged,
        })
    }

    /// Try `theta + t·dir` for `t = 1, 1/2, …`; first strict improvement wins.
    fn line_search(&self, s: &State, dir: &[f64]) -> Option<(Vec<f64>, f64)> {
        let len = norm(dir);
        if !(len > 0.0) || !len.is_finite() {
            return None;
        }
        let mut t = if len > MAX_STEP { MAX_STEP / len } else { 1.0 };
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = s.theta.iter().zip(dir).map(|(a, d)| a + t * d).collect();
            let v = self.value(&trial);
            if v.is_finite() && v > s.value {
                return Some((trial, v));
            }
            t *= 0.5;
        }
        None
    }

    /// One Newton-type step; marks the state converged when no ascent
    /// direction makes progress.
    fn step(&self, s: &mut State) {
        if s.converged {
            return;
        }
        s.iterations += 1;
        let h = self.hessian(&s.theta);
        let g = DVector::from_column_slice(&s.grad);
        let newton_dir = if h.iter().all(|v| v.is_finite()) {
            (-&h).cholesky().map(|c| c.solve(&g))
        } else {
            None
        };
        let moved = newton_dir
            .and_then(|d| self.line_search(s, d.as_slice()))
            .or_else(|| self.line_search(s, &s.grad));
        match moved {
            Some((theta, _)) => {
                let (value, grad) = self.value_grad(&theta);
                s.theta = theta;
                s.value = value;
                s.converged = norm(&grad) < self.grad_tol;
                s.grad = grad;
            }
            None => s.converged = true,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Run the multistart protocol from the given starting angles.
pub fn maximize_from<O: SphereObjective + ?Sized>(
    obj: &O,
    cfg: &MultistartConfig,
    starts: &[Angles],
) -> Result<Maximum> {
    cfg.validate()?;
    let q = obj.dim().saturating_sub(1);
    if q == 0 {
        return Err(Error::Config("sphere dimension must be at least 2".into()));
    }
    if starts.is_empty() || starts.iter().any(|a| a.0.len() != q) {
        return Err(Error::Config(format!(
            "starting angles must have length {q}"
        )));
    }
    let newton = Newton {
        obj,
        grad_tol: cfg.grad_tol,
    };
    let warmed = par::map_indexed(starts.len(), |k| {
        let mut s = newton.start(starts[k].0.clone())?;
        for _ in 0..cfg.warmup_steps {
            newton.step(&mut s);
        }
        Some(s)
    });
    let n_failed = warmed.iter().filter(|s| s.is_none()).count();
    // first maximum wins ties
    let mut best: Option<State> = None;
    for s in warmed.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| s.value > b.value) {
            best = Some(s);
        }
    }
    let mut s = best.ok_or_else(|| {
        Error::OptimizationFailed(format!(
            "objective not finite at any of {n_failed} starting points"
        ))
    })?;
    let warm_iters = s.iterations;
    while !s.converged && s.iterations - warm_iters < cfg.max_iters {
        newton.step(&mut s);
    }
    let grad_norm = norm(&s.grad);
    let angles = Angles(s.theta).canonical();
    Ok(Maximum {
        beta: angles.to_unit(),
        angles,
        value: s.value,
        iterations: s.iterations,
        grad_norm,
        converged: s.converged,
    })
}

/// Draw `n_starts` starting points uniformly on the angle box.
pub fn draw_starts<R: Rng + ?Sized>(cfg: &MultistartConfig, q: usize, rng: &mut R) -> Vec<Angles> {
    (0..cfg.n_starts)
        .map(|_| {
            Angles(
                (0..q)
                    .map(|_| rng.random_range(cfg.angle_low..cfg.angle_high))
                    .collect(),
            )
        })
        .collect()
}

/// Maximize `obj` over the unit sphere from `n_starts` random starts: run
/// `warmup_steps` Newton-type steps from each, keep the start with the
/// largest objective, and iterate from there to convergence.
pub fn multistart_maximize<O: SphereObjective + ?Sized, R: Rng + ?Sized>(
    obj: &O,
    cfg: &MultistartConfig,
    rng: &mut R,
) -> Result<Maximum> {
    cfg.validate()?;
    let starts = draw_starts(cfg, obj.dim().saturating_sub(1), rng);
    maximize_from(obj, cfg, &starts)
}

/// Angular distance between two unit vectors.
pub fn angular_distance(a: &[f64], b: &[f64]) -> f64 {
    let c: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    c.clamp(-1.0, 1.0).acos()
}
