//! Maximum-rank-correlation objectives over all ordered observation pairs.
//!
//! For a unit coefficient vector `β` the exact objective is
//!
//! ```text
//! S(β) = 1/(n(n-1)) Σ_a Σ_b ζ_s(a) ζ_s(b) I(y_a > y_b) I(x_aᵀβ > x_bᵀβ)
//! ```
//!
//! where `a, b` range over every observation of every subject (within-subject
//! pairs included) and `ζ` are subject-level perturbation weights. The
//! smoothed objective replaces the second indicator by `Φ((x_a - x_b)ᵀβ / h)`.
//! Tied outcomes never contribute.
//!
//! Two evaluation paths compute the same sum:
//!
//! * **Aggregated.** Observations sharing an identical covariate row form a
//!   pattern. The pair weights are folded into a `K × K` table over the `K`
//!   distinct patterns once per weight vector, after which each evaluation
//!   costs `O(K²)` instead of `O(N²)`. Designs built from binary and small
//!   integer covariates have very few patterns.
//! * **Direct.** The strict-outcome pair grid is walked in fixed blocks of
//!   outcome-sorted rows. Used when covariates are (nearly) all distinct.

use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::normal;
use crate::panel::PanelDataset;
use crate::par;

/// Tolerance on `‖β‖ = 1`.
pub const UNIT_TOL: f64 = 1e-8;

/// Largest pattern count for which the aggregated path is used.
const MAX_PATTERNS: usize = 2048;
const ROW_BLOCK: usize = 64;
const TERM_BLOCK: usize = 4096;

/// Read-only observation arrays shared by every objective evaluation.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    y: Vec<f64>,
    x: Vec<f64>,
    subj: Vec<usize>,
    n: usize,
    p: usize,
    // distinct covariate rows, K × p
    patterns: Vec<f64>,
    pattern_of: Vec<usize>,
    // observation indices sorted by outcome, and the tie groups within it
    order: Vec<usize>,
    tie_groups: Vec<Range<usize>>,
    // for each observation, the number of sorted positions with a strictly smaller outcome
    below: Vec<usize>,
}

impl ObjectiveContext {
    /// Build from flat arrays. `x` is row-major `N × p`; `subj` holds
    /// zero-based subject indices in `0..n`.
    pub fn new(y: Vec<f64>, x: Vec<f64>, p: usize, subj: Vec<usize>, n: usize) -> Result<Self> {
        let big_n = y.len();
        if p == 0 || x.len() != big_n * p || subj.len() != big_n {
            return Err(Error::Schema(format!(
                "inconsistent objective arrays: {} outcomes, {} covariate cells for p = {p}, {} subject labels",
                big_n,
                x.len(),
                subj.len()
            )));
        }
        if n < 2 {
            return Err(Error::DegenerateData(format!(
                "{n} subject(s); at least two are needed"
            )));
        }
        if let Some(&s) = subj.iter().find(|&&s| s >= n) {
            return Err(Error::Schema(format!("subject index {s} outside 0..{n}")));
        }
        if y.iter().chain(&x).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite outcome or covariate".into()));
        }

        let mut lookup: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut patterns = Vec::new();
        let mut pattern_of = Vec::with_capacity(big_n);
        for row in x.chunks_exact(p) {
            // +0.0 folds -0.0 onto 0.0
            let key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
            let next = lookup.len();
            let k = *lookup.entry(key).or_insert_with(|| {
                patterns.extend_from_slice(row);
                next
            });
            pattern_of.push(k);
        }

        let mut order: Vec<usize> = (0..big_n).collect();
        order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
        let mut tie_groups = Vec::new();
        let mut below = vec![0; big_n];
        let mut start = 0;
        while start < big_n {
            let mut end = start + 1;
            while end < big_n && y[order[end]] == y[order[start]] {
                end += 1;
            }
            for &a in &order[start..end] {
                below[a] = start;
            }
            tie_groups.push(start..end);
            start = end;
        }

        Ok(ObjectiveContext {
            y,
            x,
            subj,
            n,
            p,
            patterns,
            pattern_of,
            order,
            tie_groups,
            below,
        })
    }

    pub fn from_dataset(ds: &PanelDataset) -> Result<Self> {
        let x = ds
            .observations()
            .iter()
            .flat_map(|o| o.covariates.iter().copied())
            .collect();
        ObjectiveContext::new(
            ds.outcomes(),
            x,
            ds.p(),
            ds.subject_of().to_vec(),
            ds.n_subjects(),
        )
    }

    pub fn n_subjects(&self) -> usize {
        self.n
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    pub fn covariate_row(&self, a: usize) -> &[f64] {
        &self.x[a * self.p..(a + 1) * self.p]
    }

    pub fn subject_of(&self) -> &[usize] {
        &self.subj
    }

    /// Number of distinct covariate rows.
    pub fn n_patterns(&self) -> usize {
        self.patterns.len() / self.p
    }

    /// `1 / (n(n-1))`.
    pub fn normalizer(&self) -> f64 {
        1.0 / (self.n as f64 * (self.n as f64 - 1.0))
    }

    /// True when every outcome is equal, so that no pair contributes.
    pub fn all_tied(&self) -> bool {
        self.tie_groups.len() <= 1
    }

    /// Number of ordered pairs with strictly ordered outcomes.
    pub fn strict_pairs(&self) -> usize {
        self.below.iter().sum()
    }

    /// Fitted index `Xβ` for every observation.
    pub fn index_values(&self, beta: &[f64]) -> Vec<f64> {
        self.x.chunks_exact(self.p).map(|r| dot(r, beta)).collect()
    }

    /// Sample standard deviation (N - 1 denominator) of `Xβ`.
    pub fn index_sd(&self, beta: &[f64]) -> f64 {
        let t = self.index_values(beta);
        let m = t.len() as f64;
        if t.len() < 2 {
            return 0.0;
        }
        let mean = t.iter().sum::<f64>() / m;
        (t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.p {
            return Err(Error::Constraint(format!(
                "beta has length {}, expected {}",
                beta.len(),
                self.p
            )));
        }
        let norm = dot(beta, beta).sqrt();
        if !((norm - 1.0).abs() <= UNIT_TOL) {
            return Err(Error::Constraint(format!(
                "beta has norm {norm}, expected 1"
            )));
        }
        Ok(())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Positive subject-level weights `ζ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationWeights(Vec<f64>);

impl PerturbationWeights {
    pub fn new(zeta: Vec<f64>) -> Result<Self> {
        if zeta.iter().any(|z| !(z.is_finite() && *z > 0.0)) {
            return Err(Error::Domain(
                "perturbation weights must be finite and positive".into(),
            ));
        }
        Ok(PerturbationWeights(zeta))
    }

    /// Unweighted evaluation.
    pub fn ones(n: usize) -> Self {
        PerturbationWeights(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Which pair-enumeration path to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalStrategy {
    #[default]
    Auto,
    Aggregated,
    Direct,
}

#[derive(Debug, Clone)]
enum Pairs {
    Aggregated {
        // (u, v, W_uv) for distinct patterns with positive weight
        terms: Vec<(u32, u32, f64)>,
        // Σ_u W_uu: strict-outcome pairs sharing a covariate row
        same_row: f64,
    },
    Direct {
        // ζ of each observation's subject
        obs_weight: Vec<f64>,
    },
}

/// The pair structure of a context under one weight vector, ready for
/// repeated evaluation at different `β` and `h`.
#[derive(Debug, Clone)]
pub struct PairTable<'a> {
    ctx: &'a ObjectiveContext,
    pairs: Pairs,
}

impl<'a> PairTable<'a> {
    pub fn new(
        ctx: &'a ObjectiveContext,
        weights: &PerturbationWeights,
        strategy: EvalStrategy,
    ) -> Result<Self> {
        if weights.0.len() != ctx.n {
            return Err(Error::Domain(format!(
                "{} perturbation weights for {} subjects",
                weights.0.len(),
                ctx.n
            )));
        }
        let k = ctx.n_patterns();
        let aggregate = match strategy {
            EvalStrategy::Aggregated => true,
            EvalStrategy::Direct => false,
            EvalStrategy::Auto => k <= MAX_PATTERNS && 2 * k <= ctx.n_obs(),
        };
        let obs_weight: Vec<f64> = ctx.subj.iter().map(|&s| weights.0[s]).collect();
        let pairs = if aggregate {
            Self::aggregate(ctx, &obs_weight)
        } else {
            Pairs::Direct { obs_weight }
        };
        Ok(PairTable { ctx, pairs })
    }

    /// Sweep observations in outcome order, folding each one against the
    /// per-pattern weight mass strictly below it.
    fn aggregate(ctx: &ObjectiveContext, obs_weight: &[f64]) -> Pairs {
        let k = ctx.n_patterns();
        let mut table = vec![0.0; k * k];
        let mut mass_below = vec![0.0; k];
        for group in &ctx.tie_groups {
            for &a in &ctx.order[group.clone()] {
                let row = &mut table[ctx.pattern_of[a] * k..(ctx.pattern_of[a] + 1) * k];
                let wa = obs_weight[a];
                for (cell, m) in row.iter_mut().zip(&mass_below) {
                    *cell += wa * m;
                }
            }
            for &a in &ctx.order[group.clone()] {
                mass_below[ctx.pattern_of[a]] += obs_weight[a];
            }
        }
        let mut terms = Vec::new();
        let mut same_row = 0.0;
        for u in 0..k {
            for v in 0..k {
                let w = table[u * k + v];
                if u == v {
                    same_row += w;
                } else if w > 0.0 {
                    terms.push((u as u32, v as u32, w));
                }
            }
        }
        Pairs::Aggregated { terms, same_row }
    }

    pub fn is_aggregated(&self) -> bool {
        matches!(self.pairs, Pairs::Aggregated { .. })
    }

    pub fn context(&self) -> &ObjectiveContext {
        self.ctx
    }

    /// Exact step-function objective.
    pub fn exact(&self, beta: &[f64]) -> Result<f64> {
        self.ctx.check_beta(beta)?;
        Ok(self.exact_unchecked(beta))
    }

    fn exact_unchecked(&self, beta: &[f64]) -> f64 {
        let ctx = self.ctx;
        let sum = match &self.pairs {
            Pairs::Aggregated { terms, .. } => {
                let t: Vec<f64> = ctx
                    .patterns
                    .chunks_exact(ctx.p)
                    .map(|r| dot(r, beta))
                    .collect();
                par::block_sum(terms.len(), TERM_BLOCK, |r| {
                    terms[r]
                        .iter()
                        .filter(|(u, v, _)| t[*u as usize] > t[*v as usize])
                        .map(|(_, _, w)| w)
                        .sum()
                })
            }
            Pairs::Direct { obs_weight } => {
                let t = ctx.index_values(beta);
                ctx.direct_sum(|r| {
                    let mut s = 0.0;
                    for &a in &ctx.order[r] {
                        let mut inner = 0.0;
                        for &b in &ctx.order[..ctx.below[a]] {
                            if t[a] > t[b] {
                                inner += obs_weight[b];
                            }
                        }
                        s += obs_weight[a] * inner;
                    }
                    s
                })
            }
        };
        sum * ctx.normalizer()
    }

    /// Smoothed objective at bandwidth `h`.
    pub fn smoothed(&self, beta: &[f64], h: f64) -> Result<f64> {
        self.ctx.check_beta(beta)?;
        check_h(h)?;
        Ok(self.smoothed_unchecked(beta, h))
    }

    pub(crate) fn smoothed_unchecked(&self, beta: &[f64], h: f64) -> f64 {
        let ctx = self.ctx;
        let sum = match &self.pairs {
            Pairs::Aggregated { terms, same_row } => {
                let t: Vec<f64> = ctx
                    .patterns
                    .chunks_exact(ctx.p)
                    .map(|r| dot(r, beta) / h)
                    .collect();
                0.5 * same_row
                    + par::block_sum(terms.len(), TERM_BLOCK, |r| {
                        terms[r]
                            .iter()
                            .map(|&(u, v, w)| w * normal::cdf(t[u as usize] - t[v as usize]))
                            .sum()
                    })
            }
            Pairs::Direct { obs_weight } => {
                let t: Vec<f64> = ctx.index_values(beta).into_iter().map(|v| v / h).collect();
                ctx.direct_sum(|r| {
                    let mut s = 0.0;
                    for &a in &ctx.order[r] {
                        let mut inner = 0.0;
                        for &b in &ctx.order[..ctx.below[a]] {
                            inner += obs_weight[b] * normal::cdf(t[a] - t[b]);
                        }
                        s += obs_weight[a] * inner;
                    }
                    s
                })
            }
        };
        sum * ctx.normalizer()
    }

    /// Smoothed objective and its gradient in ambient `β` coordinates.
    pub fn smoothed_with_gradient(&self, beta: &[f64], h: f64) -> Result<(f64, Vec<f64>)> {
        self.ctx.check_beta(beta)?;
        check_h(h)?;
        Ok(self.smoothed_with_gradient_unchecked(beta, h))
    }

    pub(crate) fn smoothed_with_gradient_unchecked(&self, beta: &[f64], h: f64) -> (f64, Vec<f64>) {
        let ctx = self.ctx;
        let p = ctx.p;
        // part[0] accumulates the value, part[1..] the gradient
        let acc = match &self.pairs {
            Pairs::Aggregated { terms, same_row } => {
                let k = ctx.n_patterns();
                let t: Vec<f64> = ctx
                    .patterns
                    .chunks_exact(p)
                    .map(|r| dot(r, beta) / h)
                    .collect();
                // per-pattern coefficients, then project onto the pattern rows
                let parts = par::map_blocks(terms.len(), TERM_BLOCK, |r| {
                    let mut value = 0.0;
                    let mut coef = vec![0.0; k];
                    for &(u, v, w) in &terms[r] {
                        let d = t[u as usize] - t[v as usize];
                        value += w * normal::cdf(d);
                        let c = w * normal::pdf(d);
                        coef[u as usize] += c;
                        coef[v as usize] -= c;
                    }
                    (value, coef)
                });
                let mut value = 0.5 * same_row;
                let mut coef = vec![0.0; k];
                for (v, c) in parts {
                    value += v;
                    for (a, b) in coef.iter_mut().zip(c) {
                        *a += b;
                    }
                }
                let mut out = vec![0.0; p + 1];
                out[0] = value;
                for (row, c) in ctx.patterns.chunks_exact(p).zip(&coef) {
                    for j in 0..p {
                        out[1 + j] += c * row[j];
                    }
                }
                out
            }
            Pairs::Direct { obs_weight } => {
                let t: Vec<f64> = ctx.index_values(beta).into_iter().map(|v| v / h).collect();
                par::block_sum_vec(ctx.n_obs(), ROW_BLOCK, p + 1, |r| {
                    let mut out = vec![0.0; p + 1];
                    let mut diff_acc = vec![0.0; p];
                    for &a in &ctx.order[r] {
                        let xa = ctx.covariate_row(a);
                        let mut value = 0.0;
                        let mut mass = 0.0;
                        diff_acc.iter_mut().for_each(|v| *v = 0.0);
                        for &b in &ctx.order[..ctx.below[a]] {
                            let d = t[a] - t[b];
                            value += obs_weight[b] * normal::cdf(d);
                            let c = obs_weight[b] * normal::pdf(d);
                            mass += c;
                            let xb = ctx.covariate_row(b);
                            for j in 0..p {
                                diff_acc[j] -= c * xb[j];
                            }
                        }
                        out[0] += obs_weight[a] * value;
                        for j in 0..p {
                            out[1 + j] += obs_weight[a] * (mass * xa[j] + diff_acc[j]);
                        }
                    }
                    out
                })
            }
        };
        let norm = ctx.normalizer();
        let value = acc[0] * norm;
        let grad = acc[1..].iter().map(|g| g * norm / h).collect();
        (value, grad)
    }
}

impl ObjectiveContext {
    /// Fixed-block sum over outcome-sorted rows for the direct path.
    fn direct_sum<F>(&self, f: F) -> f64
    where
        F: Fn(Range<usize>) -> f64 + Sync + Send,
    {
        par::block_sum(self.n_obs(), ROW_BLOCK, f)
    }
}

fn check_h(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "bandwidth must be positive, got {h}"
        )))
    }
}

/// Exact objective at `beta`.
pub fn exact_objective(
    ctx: &ObjectiveContext,
    beta: &[f64],
    weights: &PerturbationWeights,
) -> Result<f64> {
    ctx.check_beta(beta)?;
    PairTable::new(ctx, weights, EvalStrategy::Auto)?.exact(beta)
}

/// Smoothed objective at `beta` with bandwidth `h`.
pub fn smoothed_objective(
    ctx: &ObjectiveContext,
    beta: &[f64],
    h: f64,
    weights: &PerturbationWeights,
) -> Result<f64> {
    ctx.check_beta(beta)?;
    check_h(h)?;
    PairTable::new(ctx, weights, EvalStrategy::Auto)?.smoothed(beta, h)
}

/// Gradient of the smoothed objective with respect to `β` (ambient
/// coordinates, before projecting onto the sphere).
pub fn smoothed_gradient(
    ctx: &ObjectiveContext,
    beta: &[f64],
    h: f64,
    weights: &PerturbationWeights,
) -> Result<Vec<f64>> {
    ctx.check_beta(beta)?;
    check_h(h)?;
    Ok(PairTable::new(ctx, weights, EvalStrategy::Auto)?
        .smoothed_with_gradient(beta, h)?
        .1)
}
