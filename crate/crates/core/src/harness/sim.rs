//! Replication loop and experiment aggregation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ArrivalKind, ExperimentConfig};
use super::metrics::{fit_log_curve, plateau_metric, GroupSeries, LogFit, RegretSeries};
use crate::arrivals::{generate_stream, ArrivalEvent, RenewalSpec};
use crate::error::{Error, Result};
use crate::model::{
    build_gap_table, draw_reward, sample_unit_sphere, ArmProfile, CovariateMap, GapTable,
    RewardModel, UserProfile,
};
use crate::oracle::FeatureOracle;
use crate::policy::{CfUcb, Mode, PullRecord};
use crate::theory::{Lemma6Checker, Lemma6Report};

const PROFILE_STREAM: u64 = 0;
const REWARD_STREAM: u64 = 1;
/// Arrival processes use one stream per user under a separate seed.
const ARRIVAL_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ground truth of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub users: Vec<UserProfile>,
    pub arms: Vec<ArmProfile>,
    pub renewal: Vec<RenewalSpec>,
    pub gaps: GapTable,
}

/// Draws users, arms and arrival parameters. Users `0..n_opted_in` opt in.
pub fn generate_instance(config: &ExperimentConfig, seed: u64) -> Result<Instance> {
    config.validate()?;
    let mut rng = stream_rng(seed, PROFILE_STREAM);
    let n_in = config.n_opted_in();
    let covariates = if config.unobserved_covariates {
        Some(CovariateMap::random(
            config.unobserved_dim,
            config.dim,
            &mut rng,
        )?)
    } else {
        None
    };
    let mut users = Vec::with_capacity(config.n_users);
    for id in 0..config.n_users {
        let x = sample_unit_sphere(config.dim, &mut rng)?;
        let y = covariates.as_ref().map(|map| map.apply(&x)).transpose()?;
        users.push(UserProfile {
            id,
            x,
            y,
            opted_in: id < n_in,
        });
    }
    let mut arms = Vec::with_capacity(config.n_arms);
    for id in 0..config.n_arms {
        let beta = sample_unit_sphere(config.dim, &mut rng)?;
        let lambda = if config.unobserved_covariates {
            Some(sample_unit_sphere(config.unobserved_dim, &mut rng)?)
        } else {
            None
        };
        arms.push(ArmProfile { id, beta, lambda });
    }
    let renewal = (0..config.n_users)
        .map(|_| match config.arrival_kind {
            ArrivalKind::TruncatedGaussian => RenewalSpec::TruncatedGaussian {
                mean: uniform(&mut rng, config.arrival_mean_min, config.arrival_mean_max),
                stddev: config.arrival_stddev,
            },
            ArrivalKind::Exponential => RenewalSpec::Exponential {
                rate: uniform(&mut rng, config.arrival_rate_min, config.arrival_rate_max),
            },
        })
        .collect();
    let gaps = build_gap_table(&users, &arms)?;
    Ok(Instance {
        users,
        arms,
        renewal,
        gaps,
    })
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone)]
pub struct ReplicationOutput {
    pub seed: u64,
    pub instance: Instance,
    pub events: Vec<ArrivalEvent>,
    pub series: GroupSeries,
    pub per_user_regret: Vec<f64>,
    /// Present when requested.
    pub log: Option<Vec<PullRecord>>,
    /// `None` when the instance has tied optimal arms and the checker does not apply.
    pub lemma6: Option<Lemma6Report>,
    pub oracle_fallbacks: u64,
    pub oracle_solves: u64,
}

/// Runs one replication: profiles, arrivals, decisions, regret accounting.
pub fn run_replication(
    config: &ExperimentConfig,
    seed: u64,
    keep_log: bool,
) -> Result<ReplicationOutput> {
    let instance = generate_instance(config, seed)?;
    let events = generate_stream(&instance.renewal, config.horizon(), seed ^ ARRIVAL_SEED_MIX)?;
    simulate(config, seed, instance, events, keep_log)
}

/// Runs the decision loop on a given instance and arrival stream.
pub fn simulate(
    config: &ExperimentConfig,
    seed: u64,
    instance: Instance,
    events: Vec<ArrivalEvent>,
    keep_log: bool,
) -> Result<ReplicationOutput> {
    let model = RewardModel::new(config.noise_variance)?;
    let modes: Vec<Mode> = instance
        .users
        .iter()
        .map(|u| {
            if u.opted_in {
                Mode::OptedIn
            } else {
                Mode::OptedOut
            }
        })
        .collect();
    let mut policy = CfUcb::new(
        modes,
        instance.arms.len(),
        config.dim,
        config.self_width_constant,
    )?;
    let mut oracle = FeatureOracle::new(instance.users.iter().map(|u| u.x.clone()).collect());
    let mut rewards_rng = stream_rng(seed, REWARD_STREAM);
    let mut checker = Lemma6Checker::new(&instance.gaps, config.dim).ok();

    let mut per_user = vec![0.0; instance.users.len()];
    let mut series = GroupSeries {
        opted_in: Vec::with_capacity(events.len()),
        opted_out: Vec::with_capacity(events.len()),
        all: Vec::with_capacity(events.len()),
    };
    let (mut reg_in, mut reg_out) = (0.0, 0.0);
    let mut log = keep_log.then(|| Vec::with_capacity(events.len()));

    for event in &events {
        let user = event.user;
        if user >= instance.users.len() {
            return Err(Error::Contract(format!("event for unknown user {user}")));
        }
        policy.arrive(user);
        let (arm, bundle) = policy.select_arm(user, &mut oracle)?;
        let reward = draw_reward(
            &instance.users[user],
            &instance.arms[arm],
            &model,
            &mut rewards_rng,
        )?;
        policy.update(user, arm, reward);

        let gap = instance.gaps.gap(user, arm);
        per_user[user] += gap;
        if instance.users[user].opted_in {
            reg_in += gap;
        } else {
            reg_out += gap;
        }
        series.opted_in.push(reg_in);
        series.opted_out.push(reg_out);
        series.all.push(reg_in + reg_out);

        let record = PullRecord::new(event, arm, reward, bundle, &instance.gaps);
        if let Some(c) = checker.as_mut() {
            c.observe(&record)?;
        }
        if let Some(l) = log.as_mut() {
            l.push(record);
        }
    }

    Ok(ReplicationOutput {
        seed,
        lemma6: checker.map(Lemma6Checker::finish),
        oracle_fallbacks: policy.fallbacks(),
        oracle_solves: oracle.solves(),
        instance,
        events,
        series,
        per_user_regret: per_user,
        log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupValues {
    pub opted_in: f64,
    pub opted_out: f64,
    pub all: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma6Summary {
    pub suboptimal_pulls: u64,
    pub checked: u64,
    pub violations: u64,
    pub skipped_hypothesis: u64,
    pub skipped_no_e_set: u64,
    pub skipped_empty_intersection: u64,
    /// Replications whose instance had tied optimal arms.
    pub not_applicable: u64,
}

/// Stable schema of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub replications: usize,
    pub events: usize,
    pub seeds: Vec<u64>,
    pub n_users: usize,
    pub n_arms: usize,
    pub n_opted_in: usize,
    /// Mean over replications of the final cumulative group regret.
    pub final_regret: GroupValues,
    /// `final_regret` divided by the group size.
    pub final_regret_per_user: GroupValues,
    pub fit_opted_in: Option<LogFit>,
    pub fit_opted_out: Option<LogFit>,
    pub fit_burn_in: f64,
    pub plateau_split: f64,
    pub plateau_opted_in: f64,
    pub plateau_opted_out: f64,
    pub oracle_fallbacks: u64,
    pub lemma6: Lemma6Summary,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub series: RegretSeries,
    pub summary: Summary,
    pub replications: Vec<ReplicationOutput>,
}

/// `R` replications seeded `base_seed + r`, averaged pointwise in replication order.
pub fn run_experiment(config: &ExperimentConfig, keep_logs: bool) -> Result<ExperimentResult> {
    config.validate()?;
    let seeds: Vec<u64> = (0..config.replications as u64)
        .map(|r| config.base_seed.wrapping_add(r))
        .collect();
    let outputs: Vec<ReplicationOutput> = if config.parallel {
        seeds
            .par_iter()
            .map(|&s| run_replication(config, s, keep_logs))
            .collect::<Result<_>>()?
    } else {
        seeds
            .iter()
            .map(|&s| run_replication(config, s, keep_logs))
            .collect::<Result<_>>()?
    };

    // Time horizons give replications different lengths; average over the common prefix.
    let len = outputs.iter().map(|o| o.series.len()).min().unwrap_or(0);
    let truncated: Vec<GroupSeries> = outputs
        .iter()
        .map(|o| GroupSeries {
            opted_in: o.series.opted_in[..len].to_vec(),
            opted_out: o.series.opted_out[..len].to_vec(),
            all: o.series.all[..len].to_vec(),
        })
        .collect();
    let series = RegretSeries::from_replications(truncated)?;
    let summary = summarize(config, &seeds, &series, &outputs)?;
    Ok(ExperimentResult {
        config: config.clone(),
        series,
        summary,
        replications: outputs,
    })
}

fn summarize(
    config: &ExperimentConfig,
    seeds: &[u64],
    series: &RegretSeries,
    outputs: &[ReplicationOutput],
) -> Result<Summary> {
    let last = |v: &Vec<f64>| v.last().copied().unwrap_or(0.0);
    let final_regret = GroupValues {
        opted_in: last(&series.mean.opted_in),
        opted_out: last(&series.mean.opted_out),
        all: last(&series.mean.all),
    };
    let n_in = config.n_opted_in();
    let n_out = config.n_users - n_in;
    let per = |v: f64, n: usize| if n == 0 { 0.0 } else { v / n as f64 };
    let mut lemma6 = Lemma6Summary {
        suboptimal_pulls: 0,
        checked: 0,
        violations: 0,
        skipped_hypothesis: 0,
        skipped_no_e_set: 0,
        skipped_empty_intersection: 0,
        not_applicable: 0,
    };
    for o in outputs {
        match &o.lemma6 {
            Some(r) => {
                lemma6.suboptimal_pulls += r.suboptimal_pulls;
                lemma6.checked += r.checked;
                lemma6.violations += r.violations.len() as u64;
                lemma6.skipped_hypothesis += r.skipped_hypothesis;
                lemma6.skipped_no_e_set += r.skipped_no_e_set;
                lemma6.skipped_empty_intersection += r.skipped_empty_intersection;
            }
            None => lemma6.not_applicable += 1,
        }
    }
    let plateau = |v: &Vec<f64>| {
        if v.is_empty() {
            Ok(0.0)
        } else {
            plateau_metric(v, config.plateau_split)
        }
    };
    Ok(Summary {
        replications: outputs.len(),
        events: series.mean.len(),
        seeds: seeds.to_vec(),
        n_users: config.n_users,
        n_arms: config.n_arms,
        n_opted_in: n_in,
        final_regret,
        final_regret_per_user: GroupValues {
            opted_in: per(final_regret.opted_in, n_in),
            opted_out: per(final_regret.opted_out, n_out),
            all: per(final_regret.all, config.n_users),
        },
        fit_opted_in: fit_log_curve(&series.mean.opted_in, config.fit_burn_in).ok(),
        fit_opted_out: fit_log_curve(&series.mean.opted_out, config.fit_burn_in).ok(),
        fit_burn_in: config.fit_burn_in,
        plateau_split: config.plateau_split,
        plateau_opted_in: plateau(&series.mean.opted_in)?,
        plateau_opted_out: plateau(&series.mean.opted_out)?,
        oracle_fallbacks: outputs.iter().map(|o| o.oracle_fallbacks).sum(),
        lemma6,
    })
}
