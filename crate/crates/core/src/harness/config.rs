//! Experiment configuration.
//!
//! The on-disk format is a flat list of `key = value` lines (TOML syntax, no
//! tables). Every key is optional; an empty file yields the desk-scale
//! experiment: 50 users, 10 arms, d = 5, 5000 events, 10 replications.

use serde::{Deserialize, Serialize};

use crate::arrivals::Horizon;
use crate::error::{Error, Result};
use crate::policy::DEFAULT_SELF_WIDTH_CONSTANT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalKind {
    Exponential,
    TruncatedGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_users: usize,
    pub n_arms: usize,
    pub dim: usize,
    pub noise_variance: f64,
    pub opt_in_fraction: f64,
    pub arrival_kind: ArrivalKind,
    /// Per-user mean inter-arrival time is drawn uniformly from this range
    /// (truncated Gaussian arrivals).
    pub arrival_mean_min: f64,
    pub arrival_mean_max: f64,
    pub arrival_stddev: f64,
    /// Per-user rate range (exponential arrivals).
    pub arrival_rate_min: f64,
    pub arrival_rate_max: f64,
    /// Number of arrivals; defaults to `10 * n_users * n_arms` when neither
    /// horizon key is set.
    pub horizon_events: Option<usize>,
    pub horizon_time: Option<f64>,
    pub replications: usize,
    pub base_seed: u64,
    pub self_width_constant: f64,
    pub unobserved_covariates: bool,
    pub unobserved_dim: usize,
    /// Run replications on the rayon pool.
    pub parallel: bool,
    /// Fraction of the horizon used as the split point of the plateau metric.
    pub plateau_split: f64,
    /// Leading fraction of the series excluded from the logarithmic fit.
    pub fit_burn_in: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_users: 50,
            n_arms: 10,
            dim: 5,
            noise_variance: 0.1,
            opt_in_fraction: 0.5,
            arrival_kind: ArrivalKind::TruncatedGaussian,
            arrival_mean_min: 0.5,
            arrival_mean_max: 1.5,
            arrival_stddev: 0.25,
            arrival_rate_min: 0.5,
            arrival_rate_max: 2.0,
            horizon_events: None,
            horizon_time: None,
            replications: 10,
            base_seed: 0,
            self_width_constant: DEFAULT_SELF_WIDTH_CONSTANT,
            unobserved_covariates: false,
            unobserved_dim: 2,
            parallel: true,
            plateau_split: 0.6,
            fit_burn_in: 0.2,
        }
    }
}

impl ExperimentConfig {
    /// Full-scale experiment: 200 users exploring 20 arms.
    pub fn full_scale() -> Self {
        ExperimentConfig {
            n_users: 200,
            n_arms: 20,
            ..Default::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn horizon(&self) -> Horizon {
        match (self.horizon_events, self.horizon_time) {
            (_, Some(t)) => Horizon::Time(t),
            (Some(k), None) => Horizon::Events(k),
            (None, None) => Horizon::Events(10 * self.n_users * self.n_arms),
        }
    }

    pub fn n_opted_in(&self) -> usize {
        (self.opt_in_fraction * self.n_users as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_users == 0 || self.n_arms == 0 || self.dim == 0 || self.replications == 0 {
            return fail("n_users, n_arms, dim and replications must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.opt_in_fraction) {
            return fail(format!(
                "opt_in_fraction {} outside [0, 1]",
                self.opt_in_fraction
            ));
        }
        if self.opt_in_fraction > 0.0 && self.n_users < self.dim + 1 {
            return fail(format!(
                "need at least d + 1 = {} users to form donor sets",
                self.dim + 1
            ));
        }
        if !self.noise_variance.is_finite() || self.noise_variance < 0.0 {
            return fail(format!(
                "noise_variance {} must be finite and non-negative",
                self.noise_variance
            ));
        }
        if self.horizon_events.is_some() && self.horizon_time.is_some() {
            return fail("set at most one of horizon_events and horizon_time".into());
        }
        if self.horizon_events == Some(0)
            || self
                .horizon_time
                .is_some_and(|t| !(t > 0.0 && t.is_finite()))
        {
            return fail("horizon must be positive".into());
        }
        let positive_range = |lo: f64, hi: f64| lo > 0.0 && hi >= lo && hi.is_finite();
        match self.arrival_kind {
            ArrivalKind::TruncatedGaussian => {
                if !positive_range(self.arrival_mean_min, self.arrival_mean_max)
                    || !(self.arrival_stddev > 0.0)
                {
                    return fail(
                        "truncated Gaussian arrivals need 0 < mean_min <= mean_max and stddev > 0"
                            .into(),
                    );
                }
            }
            ArrivalKind::Exponential => {
                if !positive_range(self.arrival_rate_min, self.arrival_rate_max) {
                    return fail("exponential arrivals need 0 < rate_min <= rate_max".into());
                }
            }
        }
        if !(self.self_width_constant > 0.0 && self.self_width_constant.is_finite()) {
            return fail("self_width_constant must be positive".into());
        }
        if self.unobserved_covariates && self.unobserved_dim == 0 {
            return fail(
                "unobserved_dim must be positive when unobserved covariates are enabled".into(),
            );
        }
        if !(self.plateau_split > 0.0 && self.plateau_split < 1.0) {
            return fail("plateau_split must lie in (0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.fit_burn_in) {
            return fail("fit_burn_in must lie in [0, 1)".into());
        }
        Ok(())
    }
}
