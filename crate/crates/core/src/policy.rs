//! Counterfactual-UCB decision rule.
//!
//! Opted-in users rank arms by `min(ucb_se, ucb_cf)`, the smaller of the
//! self-experience bound and the bound synthesized from donor users'
//! experience. Opted-out users run plain self-experience UCB. The chosen arm
//! maximizes the combined bound; ties go to the lowest arm id.

use serde::{Deserialize, Serialize};

use crate::arrivals::ArrivalEvent;
use crate::error::{Error, Result};
use crate::model::{ArmId, FeatureVector, GapTable, UserId};
use crate::oracle::{rank_ok, SynthCoefficients, SynthSet, SyntheticControlOracle};

pub const DEFAULT_SELF_WIDTH_CONSTANT: f64 = 4.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UserArmStats {
    pub pulls: u64,
    pub reward_sum: f64,
}

impl UserArmStats {
    pub fn mean(&self) -> Option<f64> {
        (self.pulls > 0).then(|| self.reward_sum / self.pulls as f64)
    }

    pub fn record(&mut self, reward: f64) {
        self.pulls += 1;
        self.reward_sum += reward;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OptedIn,
    OptedOut,
}

/// `sqrt(4 ln N_j / N_jm)`, infinite for an unpulled arm.
pub fn self_width(n_j: u64, n_jm: u64) -> Result<f64> {
    self_width_with(DEFAULT_SELF_WIDTH_CONSTANT, n_j, n_jm)
}

pub fn self_width_with(constant: f64, n_j: u64, n_jm: u64) -> Result<f64> {
    if n_j == 0 {
        return Err(Error::Contract(
            "self width requested before the user arrived".into(),
        ));
    }
    if n_jm == 0 {
        return Ok(f64::INFINITY);
    }
    Ok((constant * (n_j as f64).ln() / n_jm as f64).sqrt())
}

/// `sqrt((2 ln d + 4 ln N_j) c^2 / N_min)`, infinite when some donor never pulled the arm.
pub fn cf_width(n_j: u64, d: usize, c: f64, n_min: u64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidCoefficients(c));
    }
    if n_j == 0 || d == 0 {
        return Err(Error::Contract(
            "counterfactual width needs N_j >= 1 and d >= 1".into(),
        ));
    }
    if n_min == 0 {
        return Ok(f64::INFINITY);
    }
    let logs = 2.0 * (d as f64).ln() + 4.0 * (n_j as f64).ln();
    Ok((logs * c * c / n_min as f64).sqrt())
}

/// `sum_i a_i * mean_i` over the donor members.
pub fn counterfactual_estimate(
    coeffs: &SynthCoefficients,
    member_stats: &[UserArmStats],
) -> Result<f64> {
    if coeffs.a.len() != member_stats.len() {
        return Err(Error::Contract(
            "coefficients and donors differ in length".into(),
        ));
    }
    let mut total = 0.0;
    for (i, (a, s)) in coeffs.a.iter().zip(member_stats).enumerate() {
        total += a * s.mean().ok_or(Error::EstimateUnavailable(i))?;
    }
    Ok(total)
}

/// Per-user, per-arm statistics for all users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    rows: Vec<Vec<UserArmStats>>,
}

impl StatsTable {
    pub fn new(n_users: usize, n_arms: usize) -> Self {
        StatsTable {
            rows: vec![vec![UserArmStats::default(); n_arms]; n_users],
        }
    }

    pub fn get(&self, user: UserId, arm: ArmId) -> &UserArmStats {
        &self.rows[user][arm]
    }

    pub fn pulls(&self, user: UserId, arm: ArmId) -> u64 {
        self.rows[user][arm].pulls
    }

    pub fn user(&self, user: UserId) -> &[UserArmStats] {
        &self.rows[user]
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn n_arms(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn record(&mut self, user: UserId, arm: ArmId, reward: f64) {
        self.rows[user][arm].record(reward);
    }
}

/// Top-`d` donors for `target` on `arm`, by pull count then lower id.
///
/// Follows the definition literally: form `A_m(d+1, t)` (ties at the bottom
/// included), drop the target, keep the `d` heaviest pullers. Returns `None`
/// when fewer than `d` candidates remain or their features are rank deficient.
/// Members are returned sorted by user id.
pub fn build_e_set(
    arm: ArmId,
    stats: &StatsTable,
    opted_in: &[UserId],
    d: usize,
    target: UserId,
    features: &[FeatureVector],
) -> Option<SynthSet> {
    let count = |i: UserId| stats.pulls(i, arm);
    let mut candidates: Vec<UserId> = opted_in
        .iter()
        .copied()
        .filter(|&i| opted_in.iter().filter(|&&k| count(k) > count(i)).count() < d + 1)
        .filter(|&i| i != target)
        .collect();
    if candidates.len() < d {
        return None;
    }
    candidates.sort_by(|&a, &b| count(b).cmp(&count(a)).then(a.cmp(&b)));
    candidates.truncate(d);
    candidates.sort_unstable();
    let member_features: Vec<FeatureVector> =
        candidates.iter().map(|&i| features[i].clone()).collect();
    rank_ok(&member_features).then_some(SynthSet {
        target,
        members: candidates,
    })
}

/// Same selection as [`build_e_set`] without the rank test, in O(|A_+|).
fn top_donors(
    arm: ArmId,
    stats: &StatsTable,
    opted_in: &[UserId],
    d: usize,
    target: UserId,
) -> Option<Vec<UserId>> {
    let mut keyed: Vec<(std::cmp::Reverse<u64>, UserId)> = opted_in
        .iter()
        .filter(|&&i| i != target)
        .map(|&i| (std::cmp::Reverse(stats.pulls(i, arm)), i))
        .collect();
    if keyed.len() < d {
        return None;
    }
    if keyed.len() > d {
        keyed.select_nth_unstable(d - 1);
        keyed.truncate(d);
    }
    let mut members: Vec<UserId> = keyed.into_iter().map(|(_, i)| i).collect();
    members.sort_unstable();
    Some(members)
}

/// Bounds for one arm at one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmUcb {
    #[serde(with = "crate::serde_inf::option")]
    pub self_mean: Option<f64>,
    #[serde(with = "crate::serde_inf")]
    pub self_width: f64,
    #[serde(with = "crate::serde_inf")]
    pub self_ucb: f64,
    /// Absent for opted-out users.
    #[serde(with = "crate::serde_inf::option")]
    pub cf_ucb: Option<f64>,
    #[serde(with = "crate::serde_inf::option")]
    pub cf_estimate: Option<f64>,
    #[serde(with = "crate::serde_inf::option")]
    pub cf_width: Option<f64>,
    #[serde(with = "crate::serde_inf")]
    pub combined: f64,
    pub e_set: Option<Vec<UserId>>,
    /// `N_i(t)` of each donor, aligned with `e_set`.
    pub member_arrivals: Option<Vec<u64>>,
    pub c: Option<f64>,
    pub n_min: Option<u64>,
    /// The oracle could not supply coefficients for this arm.
    pub fallback: bool,
}

impl ArmUcb {
    fn self_only(mean: Option<f64>, width: f64) -> Self {
        let ucb = mean.map_or(f64::INFINITY, |m| m + width);
        ArmUcb {
            self_mean: mean,
            self_width: width,
            self_ucb: ucb,
            cf_ucb: None,
            cf_estimate: None,
            cf_width: None,
            combined: ucb,
            e_set: None,
            member_arrivals: None,
            c: None,
            n_min: None,
            fallback: false,
        }
    }

    pub fn self_lcb(&self) -> f64 {
        self.self_mean
            .map_or(f64::NEG_INFINITY, |m| m - self.self_width)
    }

    pub fn cf_lcb(&self) -> f64 {
        match (self.cf_estimate, self.cf_width) {
            (Some(e), Some(w)) => e - w,
            _ => f64::NEG_INFINITY,
        }
    }

    /// True mean lies inside the self-experience interval (trivially if unbounded).
    pub fn self_covers(&self, mu: f64) -> bool {
        self.self_lcb() <= mu && mu <= self.self_ucb
    }

    pub fn cf_covers(&self, mu: f64) -> bool {
        let upper = self.cf_ucb.unwrap_or(f64::INFINITY);
        self.cf_lcb() <= mu && mu <= upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcbBundle {
    pub mode: Mode,
    /// `N_j(t)` including the current arrival.
    pub n_j: u64,
    pub arms: Vec<ArmUcb>,
}

impl UcbBundle {
    /// Argmax of the combined bounds; `+inf` beats every finite value, ties go low.
    pub fn best_arm(&self) -> ArmId {
        let mut best = 0;
        for (m, a) in self.arms.iter().enumerate().skip(1) {
            if a.combined > self.arms[best].combined {
                best = m;
            }
        }
        best
    }
}

/// Full snapshot of one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullRecord {
    pub k: u64,
    pub time: f64,
    pub user: UserId,
    pub arm: ArmId,
    pub reward: f64,
    pub bundle: UcbBundle,
    pub was_suboptimal: bool,
    pub gap: f64,
}

impl PullRecord {
    pub fn new(
        event: &ArrivalEvent,
        arm: ArmId,
        reward: f64,
        bundle: UcbBundle,
        gaps: &GapTable,
    ) -> Self {
        PullRecord {
            k: event.global_index,
            time: event.time,
            user: event.user,
            arm,
            reward,
            bundle,
            was_suboptimal: !gaps.is_optimal(event.user, arm),
            gap: gaps.gap(event.user, arm),
        }
    }
}

/// Mutable learning state of one replication.
#[derive(Debug, Clone)]
pub struct CfUcb {
    d: usize,
    self_width_constant: f64,
    stats: StatsTable,
    arrivals: Vec<u64>,
    modes: Vec<Mode>,
    opted_in: Vec<UserId>,
    fallbacks: u64,
}

impl CfUcb {
    pub fn new(
        modes: Vec<Mode>,
        n_arms: usize,
        d: usize,
        self_width_constant: f64,
    ) -> Result<Self> {
        if n_arms == 0 || d == 0 {
            return Err(Error::Config("need at least one arm and d >= 1".into()));
        }
        if !(self_width_constant > 0.0) {
            return Err(Error::Config("self width constant must be positive".into()));
        }
        let opted_in = modes
            .iter()
            .enumerate()
            .filter(|(_, m)| **m == Mode::OptedIn)
            .map(|(i, _)| i)
            .collect();
        Ok(CfUcb {
            d,
            self_width_constant,
            stats: StatsTable::new(modes.len(), n_arms),
            arrivals: vec![0; modes.len()],
            modes,
            opted_in,
            fallbacks: 0,
        })
    }

    pub fn stats(&self) -> &StatsTable {
        &self.stats
    }

    pub fn arrivals(&self) -> &[u64] {
        &self.arrivals
    }

    pub fn mode(&self, user: UserId) -> Mode {
        self.modes[user]
    }

    pub fn opted_in(&self) -> &[UserId] {
        &self.opted_in
    }

    /// Number of (decision, arm) pairs where the oracle was unavailable.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    /// Registers the arrival of `user`; returns the updated `N_j`.
    pub fn arrive(&mut self, user: UserId) -> u64 {
        self.arrivals[user] += 1;
        self.arrivals[user]
    }

    /// Computes every arm's bounds for the arriving user and picks the arm.
    ///
    /// Must be called after [`CfUcb::arrive`] for this arrival.
    pub fn select_arm(
        &mut self,
        user: UserId,
        oracle: &mut dyn SyntheticControlOracle,
    ) -> Result<(ArmId, UcbBundle)> {
        let n_j = self.arrivals[user];
        let mode = self.modes[user];
        let mut arms = Vec::with_capacity(self.stats.n_arms());
        for m in 0..self.stats.n_arms() {
            let own = self.stats.get(user, m);
            let width = self_width_with(self.self_width_constant, n_j, own.pulls)?;
            let mut bounds = ArmUcb::self_only(own.mean(), width);
            if mode == Mode::OptedIn {
                self.attach_counterfactual(user, m, n_j, &mut bounds, oracle)?;
            }
            arms.push(bounds);
        }
        let bundle = UcbBundle { mode, n_j, arms };
        Ok((bundle.best_arm(), bundle))
    }

    fn attach_counterfactual(
        &mut self,
        user: UserId,
        arm: ArmId,
        n_j: u64,
        bounds: &mut ArmUcb,
        oracle: &mut dyn SyntheticControlOracle,
    ) -> Result<()> {
        bounds.cf_ucb = Some(f64::INFINITY);
        let coeffs =
            top_donors(arm, &self.stats, &self.opted_in, self.d, user).and_then(|members| {
                match oracle.coefficients(user, &members) {
                    Ok(c) if c.c > 0.0 => Some((members, c)),
                    _ => None,
                }
            });
        let Some((members, coeffs)) = coeffs else {
            bounds.fallback = true;
            self.fallbacks += 1;
            return Ok(());
        };
        let member_stats: Vec<UserArmStats> =
            members.iter().map(|&i| *self.stats.get(i, arm)).collect();
        let n_min = member_stats.iter().map(|s| s.pulls).min().unwrap_or(0);
        let width = cf_width(n_j, self.d, coeffs.c, n_min)?;
        let estimate = if n_min > 0 {
            Some(counterfactual_estimate(&coeffs, &member_stats)?)
        } else {
            None
        };
        let ucb = estimate.map_or(f64::INFINITY, |e| e + width);
        bounds.cf_estimate = estimate;
        bounds.cf_width = Some(width);
        bounds.cf_ucb = Some(ucb);
        bounds.combined = bounds.self_ucb.min(ucb);
        bounds.member_arrivals = Some(members.iter().map(|&i| self.arrivals[i]).collect());
        bounds.e_set = Some(members);
        bounds.c = Some(coeffs.c);
        bounds.n_min = Some(n_min);
        Ok(())
    }

    pub fn update(&mut self, user: UserId, arm: ArmId, reward: f64) {
        self.stats.record(user, arm, reward);
    }
}
