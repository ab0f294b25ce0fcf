use cfucb::arrivals::{generate_stream, Horizon, RenewalSpec};
use cfucb::harness::{run_replication, ExperimentConfig};
use cfucb::model::{mean_reward, sample_unit_sphere, ArmProfile, FeatureVector, UserProfile};
use cfucb::oracle::FeatureOracle;
use cfucb::policy::{CfUcb, Mode, UcbBundle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Self-experience UCB written from scratch: `argmax mean + sqrt(4 ln N_j / N_jm)`,
/// unpulled arms first, lowest id on ties.
struct PlainUcb {
    pulls: Vec<Vec<u64>>,
    sums: Vec<Vec<f64>>,
    arrivals: Vec<u64>,
}

impl PlainUcb {
    fn new(users: usize, arms: usize) -> Self {
        PlainUcb {
            pulls: vec![vec![0; arms]; users],
            sums: vec![vec![0.0; arms]; users],
            arrivals: vec![0; users],
        }
    }

    fn choose(&mut self, j: usize) -> usize {
        self.arrivals[j] += 1;
        let n = self.arrivals[j] as f64;
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for m in 0..self.pulls[j].len() {
            let p = self.pulls[j][m];
            let v = if p == 0 {
                f64::INFINITY
            } else {
                self.sums[j][m] / p as f64 + (4.0 * n.ln() / p as f64).sqrt()
            };
            if v > best_val {
                best = m;
                best_val = v;
            }
        }
        best
    }

    fn update(&mut self, j: usize, m: usize, r: f64) {
        self.pulls[j][m] += 1;
        self.sums[j][m] += r;
    }
}

#[test]
fn all_opted_out_matches_standalone_ucb() {
    for (seed, variance) in [(1u64, 0.1), (2, 0.0), (3, 1.0)] {
        let cfg = ExperimentConfig {
            n_users: 15,
            n_arms: 5,
            dim: 3,
            noise_variance: variance,
            opt_in_fraction: 0.0,
            horizon_events: Some(2000),
            ..Default::default()
        };
        let out = run_replication(&cfg, seed, true).unwrap();
        assert_eq!(out.oracle_solves, 0);
        let mut ucb = PlainUcb::new(cfg.n_users, cfg.n_arms);
        for rec in out.log.as_ref().unwrap() {
            let m = ucb.choose(rec.user);
            assert_eq!(m, rec.arm, "event {}", rec.k);
            ucb.update(rec.user, m, rec.reward);
        }
    }
}

fn assert_dominance(bundle: &UcbBundle) {
    for a in &bundle.arms {
        assert!(a.combined <= a.self_ucb);
        match bundle.mode {
            Mode::OptedIn => {
                let cf = a
                    .cf_ucb
                    .expect("opted-in bundles carry a counterfactual bound");
                assert!(a.combined <= cf);
                assert_eq!(a.combined, a.self_ucb.min(cf));
            }
            Mode::OptedOut => {
                assert!(a.cf_ucb.is_none() && a.e_set.is_none());
                assert_eq!(a.combined, a.self_ucb);
            }
        }
    }
}

#[test]
fn combined_bound_never_exceeds_either_component() {
    let cfg = ExperimentConfig {
        n_users: 20,
        n_arms: 5,
        dim: 3,
        horizon_events: Some(3000),
        ..Default::default()
    };
    for seed in 0..3 {
        let out = run_replication(&cfg, seed, true).unwrap();
        for rec in out.log.unwrap() {
            assert_dominance(&rec.bundle);
            assert_eq!(rec.arm, rec.bundle.best_arm());
        }
    }
}

/// Drives the policy with noiseless rewards `x . beta + shift`, where each
/// feature vector carries a trailing constant coordinate so the oracle
/// reproduces the shift exactly.
fn noiseless_trace(
    users: &[UserProfile],
    arms: &[ArmProfile],
    order: &[usize],
    shift: f64,
    d: usize,
) -> Vec<(usize, UcbBundle)> {
    let modes = users
        .iter()
        .map(|u| {
            if u.opted_in {
                Mode::OptedIn
            } else {
                Mode::OptedOut
            }
        })
        .collect();
    let mut policy = CfUcb::new(modes, arms.len(), d, 4.0).unwrap();
    let mut oracle = FeatureOracle::new(users.iter().map(|u| u.x.clone()).collect());
    let mut out = Vec::new();
    for &j in order {
        policy.arrive(j);
        let (m, bundle) = policy.select_arm(j, &mut oracle).unwrap();
        let r = mean_reward(&users[j], &arms[m]).unwrap() + shift;
        policy.update(j, m, r);
        out.push((m, bundle));
    }
    out
}

fn augmented(v: FeatureVector, last: f64) -> FeatureVector {
    let mut e = v.as_slice().to_vec();
    e.push(last);
    FeatureVector::new(e)
}

#[test]
fn shifting_all_means_shifts_bounds_and_keeps_choices() {
    let dim = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let users: Vec<UserProfile> = (0..16)
        .map(|id| UserProfile {
            id,
            x: augmented(sample_unit_sphere(dim, &mut rng).unwrap(), 1.0),
            y: None,
            opted_in: id < 10,
        })
        .collect();
    let arms: Vec<ArmProfile> = (0..4)
        .map(|id| ArmProfile {
            id,
            beta: augmented(sample_unit_sphere(dim, &mut rng).unwrap(), 0.0),
            lambda: None,
        })
        .collect();
    let specs = vec![RenewalSpec::Exponential { rate: 1.0 }; users.len()];
    let order: Vec<usize> = generate_stream(&specs, Horizon::Events(2500), 9)
        .unwrap()
        .iter()
        .map(|e| e.user)
        .collect();
    let base = noiseless_trace(&users, &arms, &order, 0.0, dim + 1);
    let shift = 0.375;
    let moved = noiseless_trace(&users, &arms, &order, shift, dim + 1);
    for ((m0, b0), (m1, b1)) in base.iter().zip(&moved) {
        assert_eq!(m0, m1);
        for (a0, a1) in b0.arms.iter().zip(&b1.arms) {
            if a0.combined.is_finite() {
                assert!((a1.combined - a0.combined - shift).abs() < 1e-9);
            } else {
                assert_eq!(a0.combined, a1.combined);
            }
        }
    }
}
