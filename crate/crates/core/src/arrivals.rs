//! Per-user renewal arrival processes merged into one time-ordered stream.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArmId, UserId};

/// Inter-arrival distribution of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RenewalSpec {
    Exponential {
        rate: f64,
    },
    /// Gaussian conditioned on being positive.
    TruncatedGaussian {
        mean: f64,
        stddev: f64,
    },
}

impl RenewalSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RenewalSpec::Exponential { rate } => rate.is_finite() && rate > 0.0,
            RenewalSpec::TruncatedGaussian { mean, stddev } => {
                mean.is_finite() && mean > 0.0 && stddev.is_finite() && stddev > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid renewal spec {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalEvent {
    pub time: f64,
    pub user: UserId,
    /// This user's n-th arrival, starting at 1.
    pub index: u64,
    /// Position in the merged stream, starting at 1.
    pub global_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Events(usize),
    Time(f64),
}

/// Strictly positive inter-arrival sample.
pub fn sample_inter_arrival<R: Rng + ?Sized>(spec: &RenewalSpec, rng: &mut R) -> f64 {
    match *spec {
        RenewalSpec::Exponential { rate } => loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                return -u.ln() / rate;
            }
        },
        RenewalSpec::TruncatedGaussian { mean, stddev } => {
            let normal = Normal::new(mean, stddev).expect("validated spec");
            loop {
                let v = normal.sample(rng);
                if v > 0.0 {
                    return v;
                }
            }
        }
    }
}

/// Deterministic per-user generator: one ChaCha stream per user id.
pub fn user_rng(seed: u64, user: UserId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64);
    rng
}

/// Arrival times of a single user's renewal process.
pub struct RenewalProcess {
    spec: RenewalSpec,
    rng: ChaCha8Rng,
    clock: f64,
}

impl RenewalProcess {
    pub fn new(spec: RenewalSpec, seed: u64, user: UserId) -> Self {
        RenewalProcess {
            spec,
            rng: user_rng(seed, user),
            clock: 0.0,
        }
    }
}

impl Iterator for RenewalProcess {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let next = self.clock + sample_inter_arrival(&self.spec, &mut self.rng);
        // Guard against an inter-arrival so small it is absorbed by rounding.
        self.clock = if next > self.clock {
            next
        } else {
            f64::from_bits(self.clock.to_bits() + 1)
        };
        Some(self.clock)
    }
}

#[derive(PartialEq)]
struct Pending {
    time: f64,
    user: UserId,
    index: u64,
}

impl Eq for Pending {}

impl Ord for Pending {
    // Min-heap on (time, user).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.user.cmp(&self.user))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Superposes every user's renewal process up to the horizon.
///
/// Events are ordered by time with ties broken by ascending user id.
pub fn generate_stream(
    specs: &[RenewalSpec],
    horizon: Horizon,
    seed: u64,
) -> Result<Vec<ArrivalEvent>> {
    if specs.is_empty() {
        return Err(Error::Config(
            "arrival stream needs at least one user".into(),
        ));
    }
    for s in specs {
        s.validate()?;
    }
    match horizon {
        Horizon::Events(0) => return Err(Error::Config("event horizon must be positive".into())),
        Horizon::Time(t) if !(t > 0.0 && t.is_finite()) => {
            return Err(Error::Config(format!(
                "time horizon must be positive, got {t}"
            )))
        }
        _ => {}
    }

    let mut processes: Vec<RenewalProcess> = specs
        .iter()
        .enumerate()
        .map(|(user, spec)| RenewalProcess::new(*spec, seed, user))
        .collect();
    let mut heap: BinaryHeap<Pending> = processes
        .iter_mut()
        .enumerate()
        .map(|(user, p)| Pending {
            time: p.next().expect("renewal processes are infinite"),
            user,
            index: 1,
        })
        .collect();

    let mut events = Vec::new();
    while let Some(head) = heap.pop() {
        match horizon {
            Horizon::Events(k) if events.len() >= k => break,
            Horizon::Time(t) if head.time > t => break,
            _ => {}
        }
        events.push(ArrivalEvent {
            time: head.time,
            user: head.user,
            index: head.index,
            global_index: events.len() as u64 + 1,
        });
        let user = head.user;
        heap.push(Pending {
            time: processes[user]
                .next()
                .expect("renewal processes are infinite"),
            user,
            index: head.index + 1,
        });
    }
    Ok(events)
}

/// Arrival and pull counters `N_j` and `N_{j,m}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterTable {
    pub arrivals: Vec<u64>,
    pub pulls: Vec<Vec<u64>>,
}

impl CounterTable {
    pub fn new(n_users: usize, n_arms: usize) -> Self {
        CounterTable {
            arrivals: vec![0; n_users],
            pulls: vec![vec![0; n_arms]; n_users],
        }
    }

    pub fn record_arrival(&mut self, user: UserId) {
        self.arrivals[user] += 1;
    }

    pub fn record_pull(&mut self, user: UserId, arm: ArmId) {
        self.pulls[user][arm] += 1;
    }

    pub fn total_arrivals(&self) -> u64 {
        self.arrivals.iter().sum()
    }

    /// `N_j = sum_m N_{j,m}` for every user.
    pub fn is_consistent(&self) -> bool {
        self.arrivals
            .iter()
            .zip(&self.pulls)
            .all(|(n, row)| *n == row.iter().sum::<u64>())
    }
}

/// Counters after processing a prefix of the stream.
///
/// `chosen_arms[k]` is the arm pulled at event `k`; it may be shorter than
/// `events` when the last arrival has not been decided yet.
pub fn counters_at(
    n_users: usize,
    n_arms: usize,
    events: &[ArrivalEvent],
    chosen_arms: &[ArmId],
) -> Result<CounterTable> {
    if chosen_arms.len() > events.len() {
        return Err(Error::Contract("more decisions than arrivals".into()));
    }
    let mut table = CounterTable::new(n_users, n_arms);
    for (k, e) in events.iter().enumerate() {
        if e.user >= n_users {
            return Err(Error::Contract(format!("unknown user {}", e.user)));
        }
        table.record_arrival(e.user);
        if let Some(&arm) = chosen_arms.get(k) {
            if arm >= n_arms {
                return Err(Error::Contract(format!("unknown arm {arm}")));
            }
            table.record_pull(e.user, arm);
        }
    }
    Ok(table)
}

/// Serializes a stream as `time user_id index` lines. Times use the shortest
/// round-trip representation so that replay is bit-exact.
pub fn dump_stream(events: &[ArrivalEvent]) -> String {
    let mut out = String::with_capacity(events.len() * 24);
    for e in events {
        let _ = writeln!(out, "{:?} {} {}", e.time, e.user, e.index);
    }
    out
}

pub fn read_stream<R: BufRead>(reader: R) -> Result<Vec<ArrivalEvent>> {
    let mut events = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parse_err = |msg: &str| Error::Parse {
            line: n + 1,
            msg: msg.to_string(),
        };
        let mut fields = trimmed.split_whitespace();
        let time: f64 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err("bad time"))?;
        let user: UserId = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err("bad user id"))?;
        let index: u64 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err("bad index"))?;
        if fields.next().is_some() {
            return Err(parse_err("trailing fields"));
        }
        events.push(ArrivalEvent {
            time,
            user,
            index,
            global_index: events.len() as u64 + 1,
        });
    }
    Ok(events)
}
