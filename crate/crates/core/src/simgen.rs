//! Synthetic semicontinuous panels from a two-part random-intercept process.
//!
//! Subject `i` gets `m_i = m_base + Poisson(m_lambda)` visits, a binary
//! group indicator `X1 ~ Bernoulli(0.5)` fixed over time and a visit index
//! `X2 = j`. Correlated random intercepts are drawn hierarchically,
//! `c_i ~ N(0, sd_c²)` and `d_i ~ N(c_i, sd_d_given_c²)`. Each visit draws
//! `U ~ Bernoulli(expit(β0 + β1 X1 + β2 X2 + c_i))` and
//! `V ~ N(γ0 + γ1 X1 + γ2 X2 + d_i, σ²)`; the outcome is zero when `U = 0`
//! or `V ≤ 0`, else `exp(V)` (scenario 1) or `exp(√V)` (scenario 2).

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::panel::{Observation, PanelDataset};
use crate::par;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Scenario {
    /// Log-normal positive part.
    One,
    /// Positive part `exp(√V)`; the log-normal assumption fails.
    Two,
}

impl Scenario {
    pub fn from_number(k: u32) -> Result<Self> {
        match k {
            1 => Ok(Scenario::One),
            2 => Ok(Scenario::Two),
            _ => Err(Error::Config(format!("scenario must be 1 or 2, got {k}"))),
        }
    }

    pub fn number(self) -> u32 {
        match self {
            Scenario::One => 1,
            Scenario::Two => 2,
        }
    }
}

/// Generator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub scenario: Scenario,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub sd_c: f64,
    pub sd_d_given_c: f64,
    pub sigma: f64,
    pub m_base: usize,
    pub m_lambda: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 100,
            scenario: Scenario::One,
            beta0: 0.25,
            beta1: 0.0,
            beta2: 0.15,
            gamma0: 2.5,
            gamma1: 0.0,
            gamma2: 0.15,
            sd_c: 0.25,
            sd_d_given_c: 0.05,
            sigma: 0.5,
            m_base: 5,
            m_lambda: 2.0,
        }
    }
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, n: usize, beta1: f64, gamma1: f64) -> Self {
        ScenarioConfig {
            n,
            scenario,
            beta1,
            gamma1,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        let finite = [
            self.beta0,
            self.beta1,
            self.beta2,
            self.gamma0,
            self.gamma1,
            self.gamma2,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("coefficients must be finite".into()));
        }
        if !(self.sd_c >= 0.0 && self.sd_d_given_c >= 0.0 && self.sigma > 0.0) {
            return Err(Error::Config(
                "standard deviations must be non-negative (sigma positive)".into(),
            ));
        }
        if !(self.m_lambda > 0.0) {
            return Err(Error::Config("m_lambda must be positive".into()));
        }
        Ok(())
    }

    /// `(ψ_cc, ψ_cd, ψ_dd)` implied by the hierarchical draw.
    pub fn random_effect_covariance(&self) -> (f64, f64, f64) {
        let vc = self.sd_c * self.sd_c;
        (vc, vc, vc + self.sd_d_given_c * self.sd_d_given_c)
    }
}

/// Latent draws for one visit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visit {
    pub occurred: bool,
    pub v: f64,
}

/// A generated dataset with the latent quantities behind it.
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub dataset: PanelDataset,
    /// `(c_i, d_i)` per subject.
    pub effects: Vec<(f64, f64)>,
    /// Per observation, in dataset order.
    pub visits: Vec<Visit>,
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Map a latent visit to the observed outcome.
pub fn outcome(scenario: Scenario, visit: Visit) -> f64 {
    if !visit.occurred || visit.v <= 0.0 {
        0.0
    } else {
        match scenario {
            Scenario::One => visit.v.exp(),
            Scenario::Two => visit.v.sqrt().exp(),
        }
    }
}

struct Subject {
    effects: (f64, f64),
    rows: Vec<(Observation, Visit)>,
}

fn subject(cfg: &ScenarioConfig, seed: u64, i: usize) -> Subject {
    let mut rng = substream(seed, i as u64);
    let extra = Poisson::new(cfg.m_lambda)
        .expect("validated lambda")
        .sample(&mut rng) as usize;
    let m = cfg.m_base + extra;
    let c = Normal::new(0.0, cfg.sd_c)
        .expect("validated sd")
        .sample(&mut rng);
    let d = Normal::new(c, cfg.sd_d_given_c)
        .expect("validated sd")
        .sample(&mut rng);
    let x1 = f64::from(u8::from(rng.random_bool(0.5)));
    let rows = (1..=m)
        .map(|j| {
            let x2 = j as f64;
            let eta = cfg.beta0 + cfg.beta1 * x1 + cfg.beta2 * x2 + c;
            let occurred = rng.random::<f64>() < expit(eta);
            let mean = cfg.gamma0 + cfg.gamma1 * x1 + cfg.gamma2 * x2 + d;
            let v = Normal::new(mean, cfg.sigma)
                .expect("validated sigma")
                .sample(&mut rng);
            let visit = Visit { occurred, v };
            let obs = Observation {
                subject_id: (i + 1).to_string(),
                time: Some(x2),
                outcome: outcome(cfg.scenario, visit),
                covariates: vec![x1, x2],
            };
            (obs, visit)
        })
        .collect();
    Subject {
        effects: (c, d),
        rows,
    }
}

/// Generate a dataset together with its latent draws.
pub fn simulate(cfg: &ScenarioConfig, seed: u64) -> Result<SimulatedPanel> {
    cfg.validate()?;
    let subjects = par::map_indexed(cfg.n, |i| subject(cfg, seed, i));
    let mut effects = Vec::with_capacity(cfg.n);
    let mut obs = Vec::new();
    let mut visits = Vec::new();
    for s in subjects {
        effects.push(s.effects);
        for (o, v) in s.rows {
            obs.push(o);
            visits.push(v);
        }
    }
    let dataset = PanelDataset::new(obs, vec!["x1".into(), "x2".into()])?;
    Ok(SimulatedPanel {
        dataset,
        effects,
        visits,
    })
}

/// Generate a dataset; covariates are `x1` (group) and `x2` (visit index).
pub fn simulate_dataset(cfg: &ScenarioConfig, seed: u64) -> Result<PanelDataset> {
    simulate(cfg, seed).map(|s| s.dataset)
}
