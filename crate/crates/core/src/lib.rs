//! Smoothed maximum-rank-correlation test for longitudinal semicontinuous
//! outcomes, with a panel simulator, parametric comparators and a Monte
//! Carlo study harness.
//!
//! The test statistic is the rank-correlation maximizer `β̂` on the unit
//! sphere; its null distribution comes from perturbation resampling with
//! exponential subject weights.
//!
//! ```
//! use semirank::{simgen, llt};
//!
//! let cfg = simgen::ScenarioConfig::new(simgen::Scenario::One, 40, 0.0, 0.0);
//! let ds = simgen::simulate_dataset(&cfg, 7).unwrap();
//! let test = llt::TestConfig { resamples: 9, seed: 3, ..Default::default() };
//! let res = llt::run_test(&ds, &test).unwrap();
//! assert!(res.p_two_sided[0] > 0.0 && res.p_two_sided[0] <= 1.0);
//! ```

pub mod comparators;
pub mod error;
pub mod llt;
pub mod normal;
pub mod objective;
pub mod panel;
pub mod par;
pub mod rng;
pub mod simgen;
pub mod sphere;
pub mod study;

pub use error::{Error, Result};
pub use llt::{run_test, TestConfig, TestResult};
pub use objective::{exact_objective, smoothed_objective, ObjectiveContext, PerturbationWeights};
pub use panel::{Observation, PanelDataset};
