//! Bounded Newton ascent with finite-difference Hessians, used by the
//! comparator fits.

use nalgebra::{DMatrix, DVector};

/// Objective with an analytic gradient. `prepare` is called once per
/// iteration and may fix auxiliary state (quadrature centers) that the
/// value and gradient use for the rest of that iteration.
pub(crate) trait Smooth {
    type Aux;
    fn prepare(&self, x: &[f64]) -> Self::Aux;
    fn value(&self, x: &[f64], aux: &Self::Aux) -> f64;
    fn value_grad(&self, x: &[f64], aux: &Self::Aux) -> (f64, Vec<f64>);
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Per-coordinate lower bounds (`-inf` for none).
    pub lower: Vec<f64>,
    /// Largest step in sup-norm.
    pub max_step: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub x: Vec<f64>,
    /// Hessian at `x`.
    pub hessian: DMatrix<f64>,
    /// Coordinates held at their lower bound.
    pub at_bound: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
}

const HALVINGS: usize = 30;

pub(crate) fn fd_hessian<S: Smooth>(f: &S, x: &[f64], aux: &S::Aux) -> DMatrix<f64> {
    let k = x.len();
    let mut h = DMatrix::zeros(k, k);
    for j in 0..k {
        let step = 1e-5 * x[j].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += step;
        xm[j] -= step;
        let gp = f.value_grad(&xp, aux).1;
        let gm = f.value_grad(&xm, aux).1;
        for i in 0..k {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

fn sup(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |m, x| m.max(x.abs()))
}

/// Solve `(-H_ff) d = g_f` on the free coordinates; `None` unless `-H_ff`
/// is positive definite.
pub(crate) fn newton_direction(h: &DMatrix<f64>, g: &[f64], free: &[bool]) -> Option<Vec<f64>> {
    let idx: Vec<usize> = (0..g.len()).filter(|&i| free[i]).collect();
    if idx.is_empty() {
        return None;
    }
    let m = idx.len();
    let neg = DMatrix::from_fn(m, m, |a, b| -h[(idx[a], idx[b])]);
    if neg.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let rhs = DVector::from_iterator(m, idx.iter().map(|&i| g[i]));
    let sol = neg.cholesky()?.solve(&rhs);
    let mut d = vec![0.0; g.len()];
    for (a, &i) in idx.iter().enumerate() {
        d[i] = sol[a];
    }
    Some(d)
}

fn project(x: &mut [f64], lower: &[f64]) {
    for (v, lb) in x.iter_mut().zip(lower) {
        if *v < *lb {
            *v = *lb;
        }
    }
}

pub(crate) fn maximize<S: Smooth>(f: &S, x0: Vec<f64>, opts: &NewtonOptions) -> NewtonOutcome {
    let k = x0.len();
    let mut x = x0;
    project(&mut x, &opts.lower);
    let mut iterations = 0;
    loop {
        let aux = f.prepare(&x);
        let (value, grad) = f.value_grad(&x, &aux);
        let at_bound: Vec<bool> = (0..k)
            .map(|i| x[i] <= opts.lower[i] && grad[i] <= 0.0)
            .collect();
        let free: Vec<bool> = at_bound.iter().map(|b| !b).collect();
        let gnorm = sup((0..k).filter(|&i| free[i]).map(|i| grad[i]));
        let finite = value.is_finite() && grad.iter().all(|g| g.is_finite());
        if !finite || gnorm < opts.tol || iterations >= opts.max_iters {
            let converged = finite && gnorm < opts.tol;
            let hessian = fd_hessian(f, &x, &aux);
            return NewtonOutcome {
                x,
                hessian,
                at_bound,
                iterations,
                converged,
            };
        }
        iterations += 1;
        let hess = fd_hessian(f, &x, &aux);
        let masked_grad: Vec<f64> = (0..k)
            .map(|i| if free[i] { grad[i] } else { 0.0 })
            .collect();
        let try_dir = |dir: &[f64]| -> Option<Vec<f64>> {
            let len = sup(dir.iter().copied());
            if !(len > 0.0 && len.is_finite()) {
                return None;
            }
            let mut t = (opts.max_step / len).min(1.0);
            for _ in 0..=HALVINGS {
                let mut trial: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + t * d).collect();
                project(&mut trial, &opts.lower);
                let v = f.value(&trial, &aux);
                if v.is_finite() && v > value {
                    return Some(trial);
                }
                t *= 0.5;
            }
            None
        };
        let next = newton_direction(&hess, &grad, &free)
            .and_then(|d| try_dir(&d))
            .or_else(|| try_dir(&masked_grad));
        match next {
            Some(nx) => x = nx,
            None => {
                // no representable ascent; accept if nearly stationary
                let converged = gnorm < 100.0 * opts.tol;
                return NewtonOutcome {
                    x,
                    hessian: hess,
                    at_bound,
                    iterations,
                    converged,
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quad;

    impl Smooth for Quad {
        type Aux = ();
        fn prepare(&self, _: &[f64]) {}
        fn value(&self, x: &[f64], _: &()) -> f64 {
            -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 3.0).powi(2) - 0.5 * x[0] * x[1]
        }
        fn value_grad(&self, x: &[f64], a: &()) -> (f64, Vec<f64>) {
            let g = vec![
                -2.0 * (x[0] - 1.0) - 0.5 * x[1],
                -4.0 * (x[1] + 3.0) - 0.5 * x[0],
            ];
            (self.value(x, a), g)
        }
    }

    #[test]
    fn solves_concave_quadratic() {
        let opts = NewtonOptions {
            tol: 1e-10,
            max_iters: 50,
            lower: vec![f64::NEG_INFINITY; 2],
            max_step: 10.0,
        };
        let out = maximize(&Quad, vec![0.0, 0.0], &opts);
        assert!(out.converged);
        let g = Quad.value_grad(&out.x, &()).1;
        assert!(g.iter().all(|v| v.abs() < 1e-9));
        assert!((out.hessian[(0, 0)] + 2.0).abs() < 1e-6);
        assert!((out.hessian[(0, 1)] + 0.5).abs() < 1e-6);
    }

    #[test]
    fn respects_lower_bound() {
        let opts = NewtonOptions {
            tol: 1e-10,
            max_iters: 50,
            lower: vec![2.0, f64::NEG_INFINITY],
            max_step: 10.0,
        };
        let out = maximize(&Quad, vec![5.0, 0.0], &opts);
        assert!(out.converged);
        assert_eq!(out.x[0], 2.0);
        assert!(out.at_bound[0]);
    }
}
