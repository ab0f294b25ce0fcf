//! Numerical counterparts of the analytical objects behind the regret bound:
//! the lower Lambert W branch, the growth function `q`, the donor-count
//! threshold, confidence-interval coverage, and the suboptimal-pull checker.

use std::f64::consts::E;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GapTable, RewardModel};
use crate::oracle::SynthCoefficients;
use crate::policy::{cf_width, self_width, PullRecord};

const INV_E: f64 = 1.0 / E;

/// Lower real branch `W_{-1}` of the inverse of `w -> w e^w`, on `[-1/e, 0)`.
///
/// Halley iteration stopped on a relative residual of `1e-12`.
pub fn lambert_w_minus1(x: f64) -> Result<f64> {
    if !(-INV_E..0.0).contains(&x) {
        // Allow the rounded -1/e itself, which sits a hair below the true value.
        if !(x < 0.0 && (x + INV_E).abs() <= 4.0 * f64::EPSILON * INV_E) {
            return Err(Error::Domain(x));
        }
    }
    let p2 = 2.0 * (E * x + 1.0);
    if p2 <= 1e-30 {
        return Ok(-1.0);
    }
    let tol = 1e-12 * x.abs().max(1e-300);
    let mut w = if x < -0.25 {
        // Series about the branch point.
        let p = -p2.sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-x).ln();
        l1 - (-l1).ln()
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        if f.abs() <= tol {
            return Ok(w.min(-1.0));
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let next = w - f / denom;
        // Stay on the lower branch.
        w = if next > -1.0 { 0.5 * (w - 1.0) } else { next };
    }
    let residual = (w * w.exp() - x).abs();
    if residual <= tol {
        Ok(w.min(-1.0))
    } else {
        Err(Error::NoConvergence(x))
    }
}

/// Residual of the defining equation at `w`.
pub fn lambert_residual(w: f64, x: f64) -> f64 {
    (w * w.exp() - x).abs()
}

/// Parameters of the growth function `q(x) = -B W_{-1}(-(1/B)(x/d)^{-C/B})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QParams {
    /// `sum_{n != m} 16 / Delta_{i,n}^2`
    pub b: f64,
    /// `16 c^2 / Delta_{j,m}^2`
    pub c: f64,
    pub d: usize,
}

impl QParams {
    pub fn new(b: f64, c: f64, d: usize) -> Result<Self> {
        if !(b > 0.0 && b.is_finite() && c > 0.0 && c.is_finite()) || d == 0 {
            return Err(Error::Config(format!(
                "invalid q parameters B={b}, C={c}, d={d}"
            )));
        }
        Ok(QParams { b, c, d })
    }

    /// Smallest `x` at which `q` is defined.
    pub fn min_x(&self) -> f64 {
        self.d as f64 * (self.b * INV_E).powf(-self.b / self.c)
    }
}

/// `-(B/A) W_{-1}(-(A/B)(x/d)^{-C/B})`, the upper root of `A y - B ln y = C ln(x/d)`.
pub fn lambert_bound(a: f64, b: f64, c: f64, d: f64, x: f64) -> Result<f64> {
    let arg = -(a / b) * (x / d).powf(-c / b);
    if arg < -INV_E {
        return Err(Error::XTooSmall { x, arg });
    }
    Ok(-(b / a) * lambert_w_minus1(arg)?)
}

pub fn q_function(x: f64, p: &QParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::XTooSmall { x, arg: f64::NAN });
    }
    lambert_bound(1.0, p.b, p.c, p.d as f64, x)
}

/// Evaluates `(A y - B ln y < C ln(x/d)) => y < -(B/A) W_{-1}(-(A/B)(x/d)^{-C/B})`.
pub fn lemma10_property(a: f64, b: f64, c: f64, d: f64, x: f64, y: f64) -> bool {
    let premise = a * y - b * y.ln() < c * (x / d).ln();
    if !premise {
        return true;
    }
    match lambert_bound(a, b, c, d, x) {
        Ok(bound) => y < bound,
        Err(_) => false,
    }
}

/// Smallest `|A_+|` with `|A_+| >= M d + max{M d, 4(M ln M + M ln(1/eps) + d)}`.
pub fn theorem1_threshold(n_arms: usize, d: usize, eps: f64) -> Result<usize> {
    if n_arms == 0 || d == 0 || !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Config(format!(
            "invalid threshold inputs M={n_arms}, d={d}, eps={eps}"
        )));
    }
    let m = n_arms as f64;
    let md = m * d as f64;
    let tail = 4.0 * (m * m.ln() + m * (1.0 / eps).ln() + d as f64);
    let value = md + md.max(tail);
    // Absorb rounding in the logarithms so exact integers are not bumped up.
    Ok((value - 1e-9).ceil().max(0.0) as usize)
}

/// Fraction of trials in which every arm is optimal for at least `d` of the
/// `a_plus` users, with optimal arms drawn uniformly and independently.
pub fn theorem1_monte_carlo<R: Rng + ?Sized>(
    a_plus: usize,
    n_arms: usize,
    d: usize,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if trials == 0 || n_arms == 0 {
        return Err(Error::Config(
            "need trials >= 1 and at least one arm".into(),
        ));
    }
    let mut counts = vec![0usize; n_arms];
    let mut hits = 0usize;
    for _ in 0..trials {
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..a_plus {
            counts[rng.random_range(0..n_arms)] += 1;
        }
        if counts.iter().all(|&c| c >= d) {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Empirical failure rates of the two confidence intervals at a frozen state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub n_j: u64,
    pub resamples: usize,
    pub self_violation: f64,
    pub cf_violation: f64,
    /// `N_j^{-2} + 3 sqrt(N_j^{-2} / resamples)`
    pub allowance: f64,
}

impl CoverageEstimate {
    pub fn passes(&self) -> bool {
        self.self_violation <= self.allowance && self.cf_violation <= self.allowance
    }
}

/// Frozen statistics: the target's own pull count and each donor's pull count
/// on the arm, together with oracle coefficients for the donors. True means
/// are fixed; every resample redraws all rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenState {
    pub n_j: u64,
    pub self_pulls: u64,
    pub mu_target: f64,
    pub donor_pulls: Vec<u64>,
    pub donor_mu: Vec<f64>,
    pub coeffs: SynthCoefficients,
}

pub fn ci_coverage<R: Rng + ?Sized>(
    state: &FrozenState,
    model: &RewardModel,
    resamples: usize,
    rng: &mut R,
) -> Result<CoverageEstimate> {
    let d = state.donor_pulls.len();
    if d == 0 || d != state.donor_mu.len() || d != state.coeffs.a.len() || resamples == 0 {
        return Err(Error::Config("inconsistent frozen state".into()));
    }
    let n_min = *state.donor_pulls.iter().min().expect("non-empty");
    let w_self = self_width(state.n_j, state.self_pulls)?;
    let w_cf = cf_width(state.n_j, d, state.coeffs.c, n_min)?;
    let sample_mean = |mu: f64, n: u64, rng: &mut R| -> f64 {
        (0..n)
            .map(|_| mu + crate::model::noise(model, rng))
            .sum::<f64>()
            / n as f64
    };
    let mut self_bad = 0usize;
    let mut cf_bad = 0usize;
    for _ in 0..resamples {
        let own = sample_mean(state.mu_target, state.self_pulls, rng);
        if (own - state.mu_target).abs() > w_self {
            self_bad += 1;
        }
        let mut est = 0.0;
        for i in 0..d {
            est += state.coeffs.a[i] * sample_mean(state.donor_mu[i], state.donor_pulls[i], rng);
        }
        if (est - state.mu_target).abs() > w_cf {
            cf_bad += 1;
        }
    }
    let p = (state.n_j as f64).powi(-2);
    Ok(CoverageEstimate {
        n_j: state.n_j,
        resamples,
        self_violation: self_bad as f64 / resamples as f64,
        cf_violation: cf_bad as f64 / resamples as f64,
        allowance: p + 3.0 * (p / resamples as f64).sqrt(),
    })
}

/// One failed instance of the suboptimal-pull necessary condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma6Violation {
    pub k: u64,
    pub user: usize,
    pub arm: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lemma6Report {
    pub suboptimal_pulls: u64,
    /// Suboptimal pulls where the inequality was evaluated.
    pub checked: u64,
    /// Some true mean of the pulling user fell outside one of its intervals.
    pub skipped_hypothesis: u64,
    /// No donor set was logged for the pulled arm (opted-out user or oracle fallback).
    pub skipped_no_e_set: u64,
    /// The logged donor set shares no user with the arm's optimal group.
    pub skipped_empty_intersection: u64,
    pub violations: Vec<Lemma6Violation>,
}

impl Lemma6Report {
    pub fn merge(&mut self, other: Lemma6Report) {
        self.suboptimal_pulls += other.suboptimal_pulls;
        self.checked += other.checked;
        self.skipped_hypothesis += other.skipped_hypothesis;
        self.skipped_no_e_set += other.skipped_no_e_set;
        self.skipped_empty_intersection += other.skipped_empty_intersection;
        self.violations.extend(other.violations);
    }
}

/// Streaming evaluator of
/// `min_{i in E ∩ A_m} {N_i - (sum_{n != m} 16/Δ_{i,n}^2) ln N_i} <= 8 c^2 (ln d + 2 ln N_j) / Δ_{j,m}^2`
/// over logged suboptimal pulls.
pub struct Lemma6Checker<'a> {
    gaps: &'a GapTable,
    d: usize,
    /// `sum_{n != m*_i} 16 / Δ_{i,n}^2` per user.
    b: Vec<f64>,
    report: Lemma6Report,
}

impl<'a> Lemma6Checker<'a> {
    pub fn new(gaps: &'a GapTable, d: usize) -> Result<Self> {
        let mut b = Vec::with_capacity(gaps.n_users());
        for i in 0..gaps.n_users() {
            let opt = gaps.optimal_arm[i];
            let mut total = 0.0;
            for (n, &g) in gaps.gaps[i].iter().enumerate() {
                if n == opt {
                    continue;
                }
                if !(g > 0.0) {
                    return Err(Error::CheckerConfig(format!(
                        "user {i} has a zero gap on non-optimal arm {n}"
                    )));
                }
                total += 16.0 / (g * g);
            }
            b.push(total);
        }
        Ok(Lemma6Checker {
            gaps,
            d,
            b,
            report: Lemma6Report::default(),
        })
    }

    pub fn observe(&mut self, rec: &PullRecord) -> Result<()> {
        if !rec.was_suboptimal {
            return Ok(());
        }
        self.report.suboptimal_pulls += 1;
        let j = rec.user;
        let m = rec.arm;
        let delta = self.gaps.gap(j, m);
        if !(delta > 0.0) {
            return Err(Error::CheckerConfig(format!(
                "zero gap for suboptimal pull of arm {m} by user {j}"
            )));
        }
        let covered = rec.bundle.arms.iter().enumerate().all(|(n, a)| {
            let mu = self.gaps.mu[j][n];
            a.self_covers(mu) && a.cf_covers(mu)
        });
        if !covered {
            self.report.skipped_hypothesis += 1;
            return Ok(());
        }
        let bounds = &rec.bundle.arms[m];
        let (Some(members), Some(arrivals), Some(c)) =
            (&bounds.e_set, &bounds.member_arrivals, bounds.c)
        else {
            self.report.skipped_no_e_set += 1;
            return Ok(());
        };
        let lhs = members
            .iter()
            .zip(arrivals)
            .filter(|(&i, _)| self.gaps.optimal_arm[i] == m)
            .map(|(&i, &n_i)| {
                if n_i == 0 {
                    // No arrivals yet: the only available bound on N_{i,m} is zero.
                    0.0
                } else {
                    n_i as f64 - self.b[i] * (n_i as f64).ln()
                }
            })
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.min(v)))
            });
        let Some(lhs) = lhs else {
            self.report.skipped_empty_intersection += 1;
            return Ok(());
        };
        let rhs = 8.0 * c * c * ((self.d as f64).ln() + 2.0 * (rec.bundle.n_j as f64).ln())
            / (delta * delta);
        self.report.checked += 1;
        if lhs > rhs {
            self.report.violations.push(Lemma6Violation {
                k: rec.k,
                user: j,
                arm: m,
                lhs,
                rhs,
            });
        }
        Ok(())
    }

    pub fn finish(self) -> Lemma6Report {
        self.report
    }
}

pub fn lemma6_check(records: &[PullRecord], gaps: &GapTable, d: usize) -> Result<Lemma6Report> {
    let mut checker = Lemma6Checker::new(gaps, d)?;
    for r in records {
        checker.observe(r)?;
    }
    Ok(checker.finish())
}
