//! Verification suites behind the `check` subcommand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_unit_sphere, RewardModel};
use crate::oracle::solve_coefficients;
use crate::theory::{
    ci_coverage, lambert_residual, lambert_w_minus1, q_function, theorem1_monte_carlo,
    theorem1_threshold, FrozenState, QParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Lambert,
    Theorem1,
    CiCoverage,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Lambert, Suite::Theorem1, Suite::CiCoverage];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lambert => "lambert",
            Suite::Theorem1 => "theorem1",
            Suite::CiCoverage => "ci-coverage",
        }
    }

    /// Parses `lambert`, `theorem1`, `ci-coverage` or `all`.
    pub fn parse_selection(s: &str) -> Result<Vec<Suite>> {
        match s {
            "all" => Ok(Suite::ALL.to_vec()),
            "lambert" => Ok(vec![Suite::Lambert]),
            "theorem1" => Ok(vec![Suite::Theorem1]),
            "ci-coverage" => Ok(vec![Suite::CiCoverage]),
            other => Err(Error::Config(format!("unknown suite {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

pub fn run_checks(suites: &[Suite], seed: u64) -> CheckReport {
    let suites: Vec<SuiteReport> = suites
        .iter()
        .map(|&suite| {
            let checks = match suite {
                Suite::Lambert => lambert_suite(),
                Suite::Theorem1 => theorem1_suite(seed),
                Suite::CiCoverage => coverage_suite(seed),
            };
            SuiteReport {
                suite,
                passed: checks.iter().all(|c| c.passed),
                checks,
            }
        })
        .collect();
    CheckReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    }
}

/// `n` points with `|x|` log-spaced over `(1/e, 1e-300]`.
pub fn lambert_grid(n: usize) -> Vec<f64> {
    let hi = -1.0 - 1e-12;
    let lo = -300.0 * std::f64::consts::LN_10;
    (0..n)
        .map(|i| -((hi + (lo - hi) * i as f64 / (n - 1) as f64).exp()))
        .collect()
}

fn lambert_suite() -> Vec<CheckOutcome> {
    let mut out = Vec::new();

    let grid = lambert_grid(1000);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for &x in &grid {
        match lambert_w_minus1(x) {
            Ok(w) if w <= -1.0 => {
                let rel = lambert_residual(w, x) / x.abs().max(1e-300);
                worst = worst.max(rel);
                if rel > 1e-12 {
                    failures += 1;
                }
            }
            _ => failures += 1,
        }
    }
    out.push(CheckOutcome::new(
        "residual-log-grid",
        failures == 0,
        format!(
            "{} points, {failures} failures, worst relative residual {worst:e}",
            grid.len()
        ),
    ));

    let branch = lambert_w_minus1(-1.0 / std::f64::consts::E);
    out.push(CheckOutcome::new(
        "branch-point",
        branch.as_ref().is_ok_and(|w| (w + 1.0).abs() <= 1e-9),
        format!("{branch:?}"),
    ));

    let p = QParams {
        b: 1.0,
        c: 2.0,
        d: 1,
    };
    let q = q_function(10.0, &p);
    out.push(CheckOutcome::new(
        "q-reference-value",
        q.as_ref().is_ok_and(|v| (v - 6.4728).abs() < 1e-4),
        format!("q(10; B=1, C=2, d=1) = {q:?}"),
    ));
    out
}

/// `(M, d, eps)` grid used for the donor-count threshold.
pub const THEOREM1_GRID: [(usize, usize, f64); 12] = [
    (2, 2, 0.1),
    (2, 2, 0.01),
    (2, 5, 0.1),
    (2, 5, 0.01),
    (5, 2, 0.1),
    (5, 2, 0.01),
    (5, 5, 0.1),
    (5, 5, 0.01),
    (10, 2, 0.1),
    (10, 2, 0.01),
    (10, 5, 0.1),
    (10, 5, 0.01),
];

pub const THEOREM1_TRIALS: usize = 100_000;

fn theorem1_suite(seed: u64) -> Vec<CheckOutcome> {
    THEOREM1_GRID
        .iter()
        .enumerate()
        .map(|(i, &(m, d, eps))| {
            let name = format!("M={m},d={d},eps={eps}");
            let threshold = match theorem1_threshold(m, d, eps) {
                Ok(t) => t,
                Err(e) => return CheckOutcome::new(name, false, e.to_string()),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            match theorem1_monte_carlo(threshold, m, d, THEOREM1_TRIALS, &mut rng) {
                Ok(success) => {
                    let failure = 1.0 - success;
                    let sigma = (failure * (1.0 - failure) / THEOREM1_TRIALS as f64).sqrt();
                    CheckOutcome::new(
                        name,
                        failure <= eps + 3.0 * sigma,
                        format!("|A_+| = {threshold}, failure frequency {failure}"),
                    )
                }
                Err(e) => CheckOutcome::new(name, false, e.to_string()),
            }
        })
        .collect()
}

pub const COVERAGE_RESAMPLES: usize = 10_000;

/// Frozen statistics at `N_j`: random unit features in 5 dimensions, the
/// target holding a quarter of its arrivals on the arm and donors holding
/// varied pull counts.
pub fn frozen_state(n_j: u64, seed: u64) -> Result<FrozenState> {
    let d = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = sample_unit_sphere(d, &mut rng)?;
    let donors: Vec<_> = (0..d)
        .map(|_| sample_unit_sphere(d, &mut rng))
        .collect::<Result<_>>()?;
    let beta = sample_unit_sphere(d, &mut rng)?;
    let coeffs = solve_coefficients(&target, &donors)?;
    let donor_pulls: Vec<u64> = (0..d as u64)
        .map(|i| (n_j / 2 + i * n_j / 4).max(1))
        .collect();
    Ok(FrozenState {
        n_j,
        self_pulls: (n_j / 4).max(1),
        mu_target: target.dot(&beta)?,
        donor_mu: donors.iter().map(|x| x.dot(&beta)).collect::<Result<_>>()?,
        donor_pulls,
        coeffs,
    })
}

fn coverage_suite(seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for variance in [1.0, 0.1] {
        let model = RewardModel {
            noise_variance: variance,
        };
        for n_j in [10u64, 100] {
            let name = format!("N_j={n_j},variance={variance}");
            let result = frozen_state(n_j, seed ^ n_j).and_then(|state| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(n_j));
                ci_coverage(&state, &model, COVERAGE_RESAMPLES, &mut rng)
            });
            out.push(match result {
                Ok(est) => CheckOutcome::new(
                    name,
                    est.passes(),
                    format!(
                        "self {} cf {} allowance {}",
                        est.self_violation, est.cf_violation, est.allowance
                    ),
                ),
                Err(e) => CheckOutcome::new(name, false, e.to_string()),
            });
        }
    }
    out
}
