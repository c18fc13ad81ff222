//! The rank test: bandwidth and point estimate by iterated smoothed-MRC
//! maximization, then perturbation resampling for p-values and percentile
//! intervals.

use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::objective::{EvalStrategy, ObjectiveContext, PairTable, PerturbationWeights};
use crate::panel::PanelDataset;
use crate::par;
use crate::rng::{substream, tag};
use crate::sphere::{
    maximize_from, multistart_maximize, Angles, Maximum, MultistartConfig, SphereObjective,
};

/// Distribution of the subject-level resampling weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Perturbation {
    /// Exponential with mean and variance one.
    #[default]
    Exponential,
    /// All weights equal to one; resamples then re-fit the original data.
    Ones,
}

/// Settings for [`run_test`].
#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig {
    /// Number of perturbation resamples `B`.
    pub resamples: usize,
    /// Cap `Q` on bandwidth iterations.
    pub max_bandwidth_iters: usize,
    /// Relative change in the index SD that ends the bandwidth loop.
    pub sigma_tol: f64,
    pub seed: u64,
    pub multistart: MultistartConfig,
    /// Multiplier on the bandwidth rule `σ̃ / n^{1/3}`.
    pub h_mult: f64,
    /// Start each resample from the point estimate instead of fresh random starts.
    pub warm_start: bool,
    pub perturbation: Perturbation,
    pub strategy: EvalStrategy,
    /// Largest tolerated share of failed resamples.
    pub max_failed_share: f64,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            resamples: 200,
            max_bandwidth_iters: 10,
            sigma_tol: 1e-3,
            seed: 0,
            multistart: MultistartConfig::default(),
            h_mult: 1.0,
            warm_start: false,
            perturbation: Perturbation::Exponential,
            strategy: EvalStrategy::Auto,
            max_failed_share: 0.2,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resamples == 0 {
            return Err(Error::Config("B must be at least 1".into()));
        }
        if self.max_bandwidth_iters == 0 {
            return Err(Error::Config("Q must be at least 1".into()));
        }
        if !(self.sigma_tol > 0.0) {
            return Err(Error::Config("sigma_tol must be positive".into()));
        }
        if !(self.h_mult.is_finite() && self.h_mult > 0.0) {
            return Err(Error::Config("h multiplier must be positive".into()));
        }
        self.multistart.validate()
    }
}

/// Bandwidth after the last update of the bandwidth loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthState {
    /// Sample SD of the fitted index `Xβ̂`.
    pub sigma_tilde: f64,
    pub h: f64,
    /// Iterations run.
    pub q: usize,
}

/// Everything produced by one run of the test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub beta_hat: Vec<f64>,
    pub h_final: f64,
    pub bandwidth: BandwidthState,
    /// Successful resample estimates, one unit row each.
    pub beta_resamples: Vec<Vec<f64>>,
    pub p_one_sided: Vec<f64>,
    pub p_two_sided: Vec<f64>,
    pub ci95: Vec<(f64, f64)>,
    pub n_failed_resamples: usize,
    pub resamples: usize,
    pub seed: u64,
    pub n_subjects: usize,
    pub n_obs: usize,
}

impl TestResult {
    pub fn p(&self) -> usize {
        self.beta_hat.len()
    }

    /// `B_eff`, the number of resamples entering the p-values.
    pub fn effective_resamples(&self) -> usize {
        self.beta_resamples.len()
    }

    pub fn report(&self, covariates: &[String]) -> TestReport {
        TestReport {
            schema: 1,
            covariates: covariates.to_vec(),
            beta_hat: self.beta_hat.clone(),
            h: self.h_final,
            p_one_sided: self.p_one_sided.clone(),
            p_two_sided: self.p_two_sided.clone(),
            ci95: self.ci95.iter().map(|&(a, b)| [a, b]).collect(),
            b: self.resamples,
            b_eff: self.effective_resamples(),
            seed: self.seed,
            n: self.n_subjects,
            big_n: self.n_obs,
            p: self.p(),
        }
    }
}

/// JSON result document of the `test` command.
#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub schema: u32,
    pub covariates: Vec<String>,
    pub beta_hat: Vec<f64>,
    pub h: f64,
    pub p_one_sided: Vec<f64>,
    pub p_two_sided: Vec<f64>,
    pub ci95: Vec<[f64; 2]>,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "B_eff")]
    pub b_eff: usize,
    pub seed: u64,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub p: usize,
}

/// Smoothed objective at a fixed bandwidth, as seen by the sphere optimizer.
pub struct SmoothedObjective<'t, 'c> {
    pub table: &'t PairTable<'c>,
    pub h: f64,
}

impl SphereObjective for SmoothedObjective<'_, '_> {
    fn dim(&self) -> usize {
        self.table.context().p()
    }

    fn value(&self, beta: &[f64]) -> f64 {
        self.table.smoothed_unchecked(beta, self.h)
    }

    fn value_and_gradient(&self, beta: &[f64]) -> Option<(f64, Vec<f64>)> {
        Some(self.table.smoothed_with_gradient_unchecked(beta, self.h))
    }
}

fn bandwidth(ctx: &ObjectiveContext, sigma: f64, h_mult: f64) -> f64 {
    h_mult * sigma / (ctx.n_subjects() as f64).cbrt()
}

fn check_design(ctx: &ObjectiveContext) -> Result<()> {
    if ctx.p() < 2 {
        return Err(Error::UnsupportedDesign(
            "the rank test is only defined for p >= 2 covariates".into(),
        ));
    }
    if ctx.all_tied() {
        return Err(Error::DegenerateData("all outcomes are tied".into()));
    }
    Ok(())
}

/// Iterate smoothed maximization and the bandwidth rule `h = σ̃ / n^{1/3}`,
/// starting from `σ̃ = 1`, until `σ̃` changes by less than `sigma_tol`
/// (relative) or `Q` iterations have run.
pub fn fit_point_estimate(
    ctx: &ObjectiveContext,
    cfg: &TestConfig,
) -> Result<(Maximum, BandwidthState)> {
    cfg.validate()?;
    check_design(ctx)?;
    let table = PairTable::new(
        ctx,
        &PerturbationWeights::ones(ctx.n_subjects()),
        cfg.strategy,
    )?;
    let mut state = BandwidthState {
        sigma_tilde: 1.0,
        h: bandwidth(ctx, 1.0, cfg.h_mult),
        q: 0,
    };
    let mut best: Option<Maximum> = None;
    for q in 1..=cfg.max_bandwidth_iters {
        let obj = SmoothedObjective {
            table: &table,
            h: state.h,
        };
        let mut rng = substream(cfg.seed, tag::BANDWIDTH + q as u64);
        let m = match multistart_maximize(&obj, &cfg.multistart, &mut rng) {
            Ok(m) => m,
            Err(e) if best.is_none() => return Err(e),
            // keep the previous estimate
            Err(_) => break,
        };
        let sigma = ctx.index_sd(&m.beta);
        if !(sigma > 0.0) {
            return Err(Error::DegenerateData(
                "fitted index has zero spread; covariates carry no ranking information".into(),
            ));
        }
        let rel = (sigma - state.sigma_tilde).abs() / state.sigma_tilde;
        state = BandwidthState {
            sigma_tilde: sigma,
            h: bandwidth(ctx, sigma, cfg.h_mult),
            q,
        };
        best = Some(m);
        if rel < cfg.sigma_tol {
            break;
        }
    }
    Ok((best.expect("at least one bandwidth iteration"), state))
}

/// Subject weights for resample `b`, drawn from its own stream.
fn resample_weights(
    ctx: &ObjectiveContext,
    cfg: &TestConfig,
    rng: &mut crate::rng::StreamRng,
) -> PerturbationWeights {
    match cfg.perturbation {
        Perturbation::Exponential => {
            let z = (0..ctx.n_subjects())
                .map(|_| {
                    let e: f64 = Exp1.sample(rng);
                    // Exp1 can return exactly 0 with negligible probability
                    e.max(f64::MIN_POSITIVE)
                })
                .collect();
            PerturbationWeights::new(z).expect("positive exponential draws")
        }
        Perturbation::Ones => PerturbationWeights::ones(ctx.n_subjects()),
    }
}

/// One perturbed re-fit.
pub fn resample_once(
    ctx: &ObjectiveContext,
    h: f64,
    cfg: &TestConfig,
    b: usize,
    warm: Option<&Angles>,
) -> Result<Maximum> {
    let mut rng = substream(cfg.seed, tag::RESAMPLE + b as u64);
    let weights = resample_weights(ctx, cfg, &mut rng);
    let table = PairTable::new(ctx, &weights, cfg.strategy)?;
    let obj = SmoothedObjective { table: &table, h };
    match warm {
        Some(a) => maximize_from(&obj, &cfg.multistart, std::slice::from_ref(a)),
        None => multistart_maximize(&obj, &cfg.multistart, &mut rng),
    }
}

/// Re-maximize the smoothed objective under `B` independent draws of
/// subject weights at the fixed bandwidth `h`. Failed resamples come back
/// as `None`; the call fails if more than `max_failed_share` of them fail.
pub fn perturbation_resample(
    ctx: &ObjectiveContext,
    h: f64,
    cfg: &TestConfig,
    warm: Option<&Angles>,
) -> Result<Vec<Option<Vec<f64>>>> {
    cfg.validate()?;
    check_design(ctx)?;
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Domain(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    let rows: Vec<Option<Vec<f64>>> = par::map_indexed(cfg.resamples, |b| {
        resample_once(ctx, h, cfg, b, warm)
            .ok()
            .filter(|m| m.value.is_finite())
            .map(|m| m.beta)
    });
    let failed = rows.iter().filter(|r| r.is_none()).count();
    if failed as f64 > cfg.max_failed_share * cfg.resamples as f64 {
        return Err(Error::TestUnreliable {
            failed,
            total: cfg.resamples,
        });
    }
    Ok(rows)
}

/// Resampling p-values and percentile intervals per coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct PValues {
    pub one_sided: Vec<f64>,
    pub two_sided: Vec<f64>,
    pub ci95: Vec<(f64, f64)>,
}

/// `one_j = (1 + #{β_j > 0}) / (1 + B)`,
/// `two_j = 2 min((1 + #{β_j > 0}), (1 + #{β_j ≤ 0})) / (1 + B)` capped at 1,
/// and the 2.5% / 97.5% sample quantiles (linear interpolation between
/// order statistics).
pub fn p_values(resamples: &[Vec<f64>]) -> Result<PValues> {
    let b = resamples.len();
    let p = resamples.first().map(Vec::len).unwrap_or(0);
    if b == 0 || p == 0 {
        return Err(Error::Evaluation(
            "no resamples to compute p-values from".into(),
        ));
    }
    if resamples.iter().any(|r| r.len() != p) {
        return Err(Error::Evaluation("resample rows differ in length".into()));
    }
    let denom = 1.0 + b as f64;
    let mut out = PValues {
        one_sided: Vec::with_capacity(p),
        two_sided: Vec::with_capacity(p),
        ci95: Vec::with_capacity(p),
    };
    for j in 0..p {
        let mut col: Vec<f64> = resamples.iter().map(|r| r[j]).collect();
        let pos = col.iter().filter(|v| **v > 0.0).count() as f64;
        let nonpos = b as f64 - pos;
        let upper = (1.0 + pos) / denom;
        let lower = (1.0 + nonpos) / denom;
        out.one_sided.push(upper);
        out.two_sided.push((2.0 * upper.min(lower)).min(1.0));
        col.sort_by(f64::total_cmp);
        out.ci95
            .push((quantile_sorted(&col, 0.025), quantile_sorted(&col, 0.975)));
    }
    Ok(out)
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n - 1) q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Run the full test on an objective context.
pub fn run_test_on_context(ctx: &ObjectiveContext, cfg: &TestConfig) -> Result<TestResult> {
    let (fit, state) =
        fit_point_estimate(ctx, cfg).map_err(|e| e.in_stage("bandwidth and point estimate"))?;
    let warm = cfg.warm_start.then_some(&fit.angles);
    let rows = perturbation_resample(ctx, state.h, cfg, warm)
        .map_err(|e| e.in_stage("perturbation resampling"))?;
    let n_failed = rows.iter().filter(|r| r.is_none()).count();
    let rows: Vec<Vec<f64>> = rows.into_iter().flatten().collect();
    let pv = p_values(&rows).map_err(|e| e.in_stage("p-values"))?;
    Ok(TestResult {
        beta_hat: fit.beta,
        h_final: state.h,
        bandwidth: state,
        beta_resamples: rows,
        p_one_sided: pv.one_sided,
        p_two_sided: pv.two_sided,
        ci95: pv.ci95,
        n_failed_resamples: n_failed,
        resamples: cfg.resamples,
        seed: cfg.seed,
        n_subjects: ctx.n_subjects(),
        n_obs: ctx.n_obs(),
    })
}

/// Run the full test on a dataset.
pub fn run_test(dataset: &PanelDataset, cfg: &TestConfig) -> Result<TestResult> {
    let ctx = ObjectiveContext::from_dataset(dataset).map_err(|e| e.in_stage("setup"))?;
    run_test_on_context(&ctx, cfg)
}
