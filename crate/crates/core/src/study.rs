//! Monte Carlo driver: rejection rates over simulated replicates and the
//! week-resampling experiment on rainfall panels.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index;
use serde::Serialize;

use crate::comparators::{logistic::fit_logistic, tobit::fit_tobit, FitConfig};
use crate::error::{Error, Result};
use crate::llt::{run_test, TestConfig};
use crate::panel::PanelDataset;
use crate::par;
use crate::rng::{mix, substream};
use crate::simgen::{simulate_dataset, Scenario, ScenarioConfig};

/// A testing procedure for the first covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rank,
    Tobit,
    Logistic,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Rank, Method::Tobit, Method::Logistic];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rank => "rank",
            Method::Tobit => "tobit",
            Method::Logistic => "logistic",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rank" => Ok(Method::Rank),
            "tobit" => Ok(Method::Tobit),
            "logistic" => Ok(Method::Logistic),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (rank, tobit, logistic)"
            ))),
        }
    }
}

/// Parse a comma-separated method list, keeping first occurrences.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let m: Method = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no methods given".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub beta1: f64,
    pub gamma1: f64,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub seed: u64,
    /// Rank-test settings; its seed is replaced per replicate.
    pub test: TestConfig,
    pub fit: FitConfig,
}

impl StudyConfig {
    /// Defaults: 200 replicates, all methods, `α = 0.05`, `B = 101`, `Q = 5`.
    pub fn new(scenario: Scenario, n: usize, beta1: f64, gamma1: f64) -> Self {
        StudyConfig {
            scenario,
            n,
            beta1,
            gamma1,
            reps: 200,
            methods: Method::ALL.to_vec(),
            alpha: 0.05,
            seed: 0,
            test: TestConfig {
                resamples: 101,
                max_bandwidth_iters: 5,
                ..TestConfig::default()
            },
            fit: FitConfig::default(),
        }
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig::new(self.scenario, self.n, self.beta1, self.gamma1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        self.test.validate()
    }
}

/// What one method produced on one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepOutcome {
    pub p_value: Option<f64>,
    pub converged: bool,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub reps: usize,
    /// Replicates that converged and rejected.
    pub rejections: usize,
    pub failures: usize,
    pub rate: f64,
    pub failure_rate: f64,
    /// `√(r(1 − r)/reps)`
    pub mc_se: f64,
    #[serde(skip)]
    pub outcomes: Vec<RepOutcome>,
}

impl MethodSummary {
    fn tally(method: Method, outcomes: Vec<RepOutcome>) -> Self {
        let reps = outcomes.len();
        let rejections = outcomes.iter().filter(|o| o.rejected).count();
        let failures = outcomes.iter().filter(|o| !o.converged).count();
        let rate = rejections as f64 / reps as f64;
        MethodSummary {
            method,
            reps,
            rejections,
            failures,
            rate,
            failure_rate: failures as f64 / reps as f64,
            mc_se: (rate * (1.0 - rate) / reps as f64).sqrt(),
            outcomes,
        }
    }

    /// P-values of the converged replicates, in replicate order.
    pub fn p_values(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.p_value).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Setting {
    Simulation {
        scenario: u32,
        n: usize,
        beta1: f64,
        gamma1: f64,
    },
    Rainfall {
        weeks: usize,
        draws: usize,
        subjects: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub schema: u32,
    pub setting: Setting,
    pub alpha: f64,
    pub seed: u64,
    #[serde(rename = "B")]
    pub resamples: usize,
    pub methods: Vec<MethodSummary>,
}

impl StudyResult {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    /// One header line and one data row.
    pub fn to_tsv(&self) -> String {
        let mut head: Vec<String> = Vec::new();
        let mut row: Vec<String> = Vec::new();
        match &self.setting {
            Setting::Simulation {
                scenario,
                n,
                beta1,
                gamma1,
            } => {
                head.extend(["scenario", "n", "beta1", "gamma1"].map(String::from));
                row.extend([
                    scenario.to_string(),
                    n.to_string(),
                    beta1.to_string(),
                    gamma1.to_string(),
                ]);
            }
            Setting::Rainfall {
                weeks,
                draws,
                subjects,
            } => {
                head.extend(["weeks", "draws", "subjects"].map(String::from));
                row.extend([weeks.to_string(), draws.to_string(), subjects.to_string()]);
            }
        }
        for m in &self.methods {
            let name = m.method.name();
            head.extend([
                format!("{name}_rejections"),
                format!("{name}_rate"),
                format!("{name}_mc_se"),
                format!("{name}_fail_pct"),
            ]);
            row.extend([
                m.rejections.to_string(),
                format!("{:.4}", m.rate),
                format!("{:.4}", m.mc_se),
                format!("{:.1}", 100.0 * m.failure_rate),
            ]);
        }
        let mut out = String::new();
        let _ = writeln!(out, "{}", head.join("\t"));
        let _ = writeln!(out, "{}", row.join("\t"));
        out
    }
}

fn apply(
    ds: &PanelDataset,
    method: Method,
    test: &TestConfig,
    fit: &FitConfig,
    alpha: f64,
) -> RepOutcome {
    let p = match method {
        Method::Rank => run_test(ds, test).ok().map(|r| r.p_two_sided[0]),
        Method::Tobit => fit_tobit(ds, fit, None)
            .ok()
            .filter(|f| f.converged)
            .and_then(|f| f.wald_p),
        Method::Logistic => fit_logistic(ds, fit, None)
            .ok()
            .filter(|f| f.converged)
            .and_then(|f| f.wald_p),
    };
    RepOutcome {
        p_value: p,
        converged: p.is_some(),
        rejected: p.is_some_and(|p| p < alpha),
    }
}

fn analyse(ds: &PanelDataset, seed: u64, cfg: &StudyConfig) -> Vec<RepOutcome> {
    let test = TestConfig {
        seed: mix(seed, 1),
        ..cfg.test.clone()
    };
    cfg.methods
        .iter()
        .map(|&m| apply(ds, m, &test, &cfg.fit, cfg.alpha))
        .collect()
}

/// Seed of replicate `rep`.
pub fn replicate_seed(seed: u64, rep: usize) -> u64 {
    mix(seed, rep as u64)
}

/// Simulate replicate `rep` and apply every method; a failed simulation
/// counts as a failure for all methods.
pub fn run_replicate(cfg: &StudyConfig, rep: usize) -> Vec<RepOutcome> {
    let seed = replicate_seed(cfg.seed, rep);
    match simulate_dataset(&cfg.scenario_config(), seed) {
        Ok(ds) => analyse(&ds, seed, cfg),
        Err(_) => vec![
            RepOutcome {
                p_value: None,
                converged: false,
                rejected: false,
            };
            cfg.methods.len()
        ],
    }
}

fn summarize(methods: &[Method], per_rep: Vec<Vec<RepOutcome>>) -> Vec<MethodSummary> {
    methods
        .iter()
        .enumerate()
        .map(|(k, &m)| MethodSummary::tally(m, per_rep.iter().map(|r| r[k]).collect()))
        .collect()
}

/// Rejection rates over `cfg.reps` simulated datasets.
pub fn power_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    cfg.scenario_config().validate()?;
    let per_rep = par::map_indexed(cfg.reps, |r| run_replicate(cfg, r));
    Ok(StudyResult {
        schema: 1,
        setting: Setting::Simulation {
            scenario: cfg.scenario.number(),
            n: cfg.n,
            beta1: cfg.beta1,
            gamma1: cfg.gamma1,
        },
        alpha: cfg.alpha,
        seed: cfg.seed,
        resamples: cfg.test.resamples,
        methods: summarize(&cfg.methods, per_rep),
    })
}

/// Draw `weeks` subjects without replacement `draws` times and apply every
/// method to each draw. Only `methods`, `alpha`, `seed`, `test` and `fit`
/// of `cfg` are used.
pub fn rainfall_study(
    dataset: &PanelDataset,
    weeks: usize,
    draws: usize,
    cfg: &StudyConfig,
) -> Result<StudyResult> {
    cfg.validate()?;
    if weeks == 0 {
        return Err(Error::Config("weeks per draw must be at least 1".into()));
    }
    if draws == 0 {
        return Err(Error::Config("draws must be at least 1".into()));
    }
    let available = dataset.n_subjects();
    if weeks > available {
        return Err(Error::Config(format!(
            "{weeks} weeks per draw requested but only {available} city-weeks are available"
        )));
    }
    let per_draw = par::map_indexed(draws, |d| {
        let seed = replicate_seed(cfg.seed, d);
        let mut rng = substream(seed, 0);
        let mut pick = index::sample(&mut rng, available, weeks).into_vec();
        pick.sort_unstable();
        match dataset.select_subjects(&pick) {
            Ok(ds) => analyse(&ds, seed, cfg),
            Err(_) => vec![
                RepOutcome {
                    p_value: None,
                    converged: false,
                    rejected: false,
                };
                cfg.methods.len()
            ],
        }
    });
    Ok(StudyResult {
        schema: 1,
        setting: Setting::Rainfall {
            weeks,
            draws,
            subjects: available,
        },
        alpha: cfg.alpha,
        seed: cfg.seed,
        resamples: cfg.test.resamples,
        methods: summarize(&cfg.methods, per_draw),
    })
}
