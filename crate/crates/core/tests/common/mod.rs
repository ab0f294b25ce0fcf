#![allow(dead_code)]

use cfucb::arrivals::RenewalSpec;
use cfucb::harness::sim::Instance;
use cfucb::harness::ExperimentConfig;
use cfucb::model::{
    build_gap_table, mean_reward, sample_unit_sphere, ArmProfile, CovariateMap, FeatureVector,
    UserProfile,
};
use cfucb::oracle::{FeatureOracle, SyntheticControlOracle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Worst `|sum_i a_i mu_{i,m} - mu_{j,m}|` over `instances` random tuples of a
/// target, `d` donors and 10 arms.
pub fn worst_reconstruction(instances: usize, d: usize, hidden: Option<usize>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let map = hidden.map(|h| CovariateMap::random(h, d, &mut rng).unwrap());
        let users: Vec<UserProfile> = (0..=d)
            .map(|id| {
                let x = sample_unit_sphere(d, &mut rng).unwrap();
                let y = map.as_ref().map(|m| m.apply(&x).unwrap());
                UserProfile {
                    id,
                    x,
                    y,
                    opted_in: true,
                }
            })
            .collect();
        let arms: Vec<ArmProfile> = (0..10)
            .map(|id| ArmProfile {
                id,
                beta: sample_unit_sphere(d, &mut rng).unwrap(),
                lambda: hidden.map(|h| sample_unit_sphere(h, &mut rng).unwrap()),
            })
            .collect();
        let mut oracle = FeatureOracle::new(users.iter().map(|u| u.x.clone()).collect());
        let members: Vec<usize> = (1..=d).collect();
        let coeffs = oracle.coefficients(0, &members).unwrap();
        for arm in &arms {
            let target = mean_reward(&users[0], arm).unwrap();
            let synth: f64 = members
                .iter()
                .zip(&coeffs.a)
                .map(|(&i, a)| a * mean_reward(&users[i], arm).unwrap())
                .sum();
            worst = worst.max((synth - target).abs());
        }
    }
    worst
}

/// Two users in one dimension with opposite preferences: user 0 likes arm 0,
/// user 1 likes arm 1, and each is the other's donor with coefficient -1.
pub fn mirrored_instance(opted_in: bool) -> Instance {
    let users: Vec<UserProfile> = [1.0, -1.0]
        .iter()
        .enumerate()
        .map(|(id, &x)| UserProfile {
            id,
            x: FeatureVector::new(vec![x]),
            y: None,
            opted_in,
        })
        .collect();
    let arms: Vec<ArmProfile> = [0.8, -0.8]
        .iter()
        .enumerate()
        .map(|(id, &b)| ArmProfile {
            id,
            beta: FeatureVector::new(vec![b]),
            lambda: None,
        })
        .collect();
    let gaps = build_gap_table(&users, &arms).unwrap();
    Instance {
        users,
        arms,
        renewal: vec![RenewalSpec::Exponential { rate: 1.0 }; 2],
        gaps,
    }
}

pub fn noiseless_mirrored() -> ExperimentConfig {
    ExperimentConfig {
        n_users: 2,
        n_arms: 2,
        dim: 1,
        noise_variance: 0.0,
        opt_in_fraction: 1.0,
        replications: 1,
        ..Default::default()
    }
}
