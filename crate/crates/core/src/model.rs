//! Users, arms and the disjoint linear reward model.
//!
//! The mean reward of user `j` on arm `m` is `x_j · β_m + y_j · λ_m`, where the
//! second term is present only when unobserved covariates are enabled. The
//! representation map is the identity on the stored features.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type UserId = usize;
pub type ArmId = usize;

/// A real feature vector of fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(entries: Vec<f64>) -> Self {
        FeatureVector(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        FeatureVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &FeatureVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::ModelConfig(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn scaled(&self, factor: f64) -> FeatureVector {
        FeatureVector(self.0.iter().map(|v| v * factor).collect())
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        FeatureVector(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: UserId,
    /// Observable context.
    pub x: FeatureVector,
    /// Unobserved covariate, absent in the default experiment.
    pub y: Option<FeatureVector>,
    pub opted_in: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmProfile {
    pub id: ArmId,
    pub beta: FeatureVector,
    pub lambda: Option<FeatureVector>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    /// Variance of the additive Gaussian noise.
    pub noise_variance: f64,
}

impl RewardModel {
    pub fn new(noise_variance: f64) -> Result<Self> {
        if !noise_variance.is_finite() || noise_variance < 0.0 {
            return Err(Error::ModelConfig(format!(
                "noise variance must be finite and non-negative, got {noise_variance}"
            )));
        }
        Ok(RewardModel { noise_variance })
    }
}

/// Ground-truth means, optimal arms and gaps. Known only to the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    /// `mu[j][m]`
    pub mu: Vec<Vec<f64>>,
    pub optimal_arm: Vec<ArmId>,
    /// `gaps[j][m] = max_n mu[j][n] - mu[j][m]`
    pub gaps: Vec<Vec<f64>>,
}

impl GapTable {
    pub fn n_users(&self) -> usize {
        self.mu.len()
    }

    pub fn n_arms(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }

    pub fn gap(&self, user: UserId, arm: ArmId) -> f64 {
        self.gaps[user][arm]
    }

    pub fn is_optimal(&self, user: UserId, arm: ArmId) -> bool {
        self.optimal_arm[user] == arm
    }
}

/// Draws a point uniformly from the unit sphere in `dim` dimensions.
pub fn sample_unit_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<FeatureVector> {
    if dim == 0 {
        return Err(Error::InvalidDimension(dim));
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        // A zero draw has probability zero but cannot be normalized.
        if n > 1e-300 {
            return Ok(FeatureVector(v.into_iter().map(|a| a / n).collect()));
        }
    }
}

pub fn mean_reward(user: &UserProfile, arm: &ArmProfile) -> Result<f64> {
    let observable = user.x.dot(&arm.beta)?;
    let hidden = match (&user.y, &arm.lambda) {
        (Some(y), Some(lambda)) => y.dot(lambda)?,
        (Some(_), None) => {
            return Err(Error::ModelConfig(format!(
                "user {} has unobserved covariates but arm {} has no loading",
                user.id, arm.id
            )))
        }
        (None, _) => 0.0,
    };
    Ok(observable + hidden)
}

pub fn draw_reward<R: Rng + ?Sized>(
    user: &UserProfile,
    arm: &ArmProfile,
    model: &RewardModel,
    rng: &mut R,
) -> Result<f64> {
    let mu = mean_reward(user, arm)?;
    Ok(mu + noise(model, rng))
}

/// Zero-mean Gaussian noise with the model's variance. Variance zero consumes no randomness.
pub(crate) fn noise<R: Rng + ?Sized>(model: &RewardModel, rng: &mut R) -> f64 {
    if model.noise_variance == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, model.noise_variance.sqrt())
        .expect("variance validated at construction")
        .sample(rng)
}

pub fn build_gap_table(users: &[UserProfile], arms: &[ArmProfile]) -> Result<GapTable> {
    let mut mu = Vec::with_capacity(users.len());
    let mut optimal_arm = Vec::with_capacity(users.len());
    let mut gaps = Vec::with_capacity(users.len());
    for user in users {
        let row = arms
            .iter()
            .map(|arm| mean_reward(user, arm))
            .collect::<Result<Vec<f64>>>()?;
        let mut best = 0;
        for (m, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = m;
            }
        }
        let top = row.get(best).copied().unwrap_or(0.0);
        gaps.push(row.iter().map(|v| top - v).collect());
        optimal_arm.push(best);
        mu.push(row);
    }
    Ok(GapTable {
        mu,
        optimal_arm,
        gaps,
    })
}

/// Linear map generating unobserved covariates from observable ones: `y = L x`.
///
/// Any coefficients reconstructing `x_j` from donors therefore reconstruct `y_j`
/// as well, which keeps mean reconstruction exact for the feature-based oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMap {
    rows: Vec<Vec<f64>>,
}

impl CovariateMap {
    pub fn random<R: Rng + ?Sized>(hidden_dim: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if hidden_dim == 0 || dim == 0 {
            return Err(Error::InvalidDimension(hidden_dim.min(dim)));
        }
        let scale = 1.0 / (dim as f64).sqrt();
        let rows = (0..hidden_dim)
            .map(|_| {
                (0..dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        scale * z
                    })
                    .collect()
            })
            .collect();
        Ok(CovariateMap { rows })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        CovariateMap { rows }
    }

    pub fn apply(&self, x: &FeatureVector) -> Result<FeatureVector> {
        self.rows
            .iter()
            .map(|row| FeatureVector(row.clone()).dot(x))
            .collect::<Result<Vec<f64>>>()
            .map(FeatureVector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn user(x: Vec<f64>, y: Option<Vec<f64>>) -> UserProfile {
        UserProfile {
            id: 0,
            x: x.into(),
            y: y.map(Into::into),
            opted_in: true,
        }
    }

    fn arm(id: ArmId, beta: Vec<f64>, lambda: Option<Vec<f64>>) -> ArmProfile {
        ArmProfile {
            id,
            beta: beta.into(),
            lambda: lambda.map(Into::into),
        }
    }

    #[test]
    fn sphere_rejects_zero_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_unit_sphere(0, &mut rng),
            Err(Error::InvalidDimension(0))
        );
    }

    #[test]
    fn sphere_one_dim_is_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut plus = 0;
        for _ in 0..2000 {
            let v = sample_unit_sphere(1, &mut rng).unwrap();
            assert!(v.as_slice()[0] == 1.0 || v.as_slice()[0] == -1.0);
            if v.as_slice()[0] > 0.0 {
                plus += 1;
            }
        }
        // Binomial(2000, 1/2): 5 sigma is about 112.
        assert!((plus as i64 - 1000).abs() < 112, "plus = {plus}");
    }

    #[test]
    fn sphere_is_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in 1..12 {
            for _ in 0..200 {
                let v = sample_unit_sphere(dim, &mut rng).unwrap();
                assert_eq!(v.dim(), dim);
                assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sphere_mean_concentrates_at_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mut acc = [0.0; 5];
        for _ in 0..n {
            let v = sample_unit_sphere(5, &mut rng).unwrap();
            for (a, b) in acc.iter_mut().zip(v.as_slice()) {
                *a += b;
            }
        }
        let norm = acc
            .iter()
            .map(|a| (a / n as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(norm < 0.02, "mean norm {norm}");
    }

    #[test]
    fn mean_reward_examples() {
        let u = user(vec![1.0, 0.0, 0.0], None);
        let a = arm(0, vec![1.0, 0.0, 0.0], None);
        assert_eq!(mean_reward(&u, &a).unwrap(), 1.0);

        // x·β = 0.3, y·λ = 0.2
        let u = user(vec![0.3, 0.0], Some(vec![1.0]));
        let a = arm(0, vec![1.0, 0.0], Some(vec![0.2]));
        assert!((mean_reward(&u, &a).unwrap() - 0.5).abs() < 1e-15);

        let u = user(vec![0.6, 0.8], None);
        let a = arm(0, vec![0.8, -0.6], None);
        assert!(mean_reward(&u, &a).unwrap().abs() < 1e-15);
    }

    #[test]
    fn mean_reward_dimension_errors() {
        let u = user(vec![1.0, 0.0], None);
        let a = arm(0, vec![1.0, 0.0, 0.0], None);
        assert!(matches!(mean_reward(&u, &a), Err(Error::ModelConfig(_))));

        let u = user(vec![1.0], Some(vec![1.0]));
        let a = arm(0, vec![1.0], None);
        assert!(matches!(mean_reward(&u, &a), Err(Error::ModelConfig(_))));

        let u = user(vec![1.0], Some(vec![1.0, 2.0]));
        let a = arm(0, vec![1.0], Some(vec![1.0]));
        assert!(matches!(mean_reward(&u, &a), Err(Error::ModelConfig(_))));
    }

    #[test]
    fn zero_lambda_matches_absent_covariates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = sample_unit_sphere(4, &mut rng).unwrap();
            let beta = sample_unit_sphere(4, &mut rng).unwrap();
            let y = sample_unit_sphere(2, &mut rng).unwrap();
            let with = UserProfile {
                id: 0,
                x: x.clone(),
                y: Some(y),
                opted_in: true,
            };
            let without = UserProfile {
                y: None,
                ..with.clone()
            };
            let a_with = ArmProfile {
                id: 0,
                beta: beta.clone(),
                lambda: Some(FeatureVector::zeros(2)),
            };
            let a_without = ArmProfile {
                lambda: None,
                ..a_with.clone()
            };
            assert_eq!(
                mean_reward(&with, &a_with).unwrap(),
                mean_reward(&without, &a_without).unwrap()
            );
        }
    }

    #[test]
    fn mean_reward_is_linear_in_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let u = UserProfile {
                id: 0,
                x: sample_unit_sphere(5, &mut rng).unwrap(),
                y: None,
                opted_in: false,
            };
            let a = ArmProfile {
                id: 0,
                beta: sample_unit_sphere(5, &mut rng).unwrap(),
                lambda: None,
            };
            let doubled = ArmProfile {
                beta: a.beta.scaled(2.0),
                ..a.clone()
            };
            let base = mean_reward(&u, &a).unwrap();
            assert!((mean_reward(&u, &doubled).unwrap() - 2.0 * base).abs() < 1e-14);
        }
    }

    #[test]
    fn draw_reward_noiseless_and_deterministic() {
        let u = user(vec![0.6, 0.8], None);
        let a = arm(0, vec![0.5, 0.5], None);
        let silent = RewardModel::new(0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(
            draw_reward(&u, &a, &silent, &mut rng).unwrap(),
            mean_reward(&u, &a).unwrap()
        );

        let noisy = RewardModel::new(0.1).unwrap();
        let r1 = draw_reward(&u, &a, &noisy, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let r2 = draw_reward(&u, &a, &noisy, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(r1.to_bits(), r2.to_bits());
    }

    #[test]
    fn draw_reward_moments() {
        let u = user(vec![1.0, 0.0], None);
        let a = arm(0, vec![0.0, 1.0], None);
        let model = RewardModel::new(0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| draw_reward(&u, &a, &model, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 0.1).abs() < 0.01, "var {var}");
    }

    #[test]
    fn reward_model_rejects_bad_variance() {
        assert!(RewardModel::new(f64::NAN).is_err());
        assert!(RewardModel::new(f64::INFINITY).is_err());
        assert!(RewardModel::new(-1.0).is_err());
    }

    #[test]
    fn gap_table_single_arm() {
        let users: Vec<_> = (0..3)
            .map(|i| UserProfile {
                id: i,
                x: vec![i as f64, 1.0].into(),
                y: None,
                opted_in: true,
            })
            .collect();
        let arms = vec![arm(0, vec![0.3, -0.2], None)];
        let g = build_gap_table(&users, &arms).unwrap();
        assert_eq!(g.optimal_arm, vec![0, 0, 0]);
        assert!(g.gaps.iter().all(|row| row == &vec![0.0]));
    }

    #[test]
    fn gap_table_two_arms_and_ties() {
        let u = user(vec![1.0], None);
        let arms = vec![arm(0, vec![0.5], None), arm(1, vec![0.2], None)];
        let g = build_gap_table(std::slice::from_ref(&u), &arms).unwrap();
        assert_eq!(g.optimal_arm, vec![0]);
        assert_eq!(g.gaps[0][0], 0.0);
        assert!((g.gaps[0][1] - 0.3).abs() < 1e-15);

        let tied = vec![arm(0, vec![0.4], None), arm(1, vec![0.4], None)];
        let g = build_gap_table(&[u], &tied).unwrap();
        assert_eq!(g.optimal_arm, vec![0]);
    }

    #[test]
    fn gap_table_matches_exhaustive_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let users: Vec<_> = (0..3)
                .map(|i| UserProfile {
                    id: i,
                    x: sample_unit_sphere(3, &mut rng).unwrap(),
                    y: None,
                    opted_in: true,
                })
                .collect();
            let arms: Vec<_> = (0..3)
                .map(|m| ArmProfile {
                    id: m,
                    beta: sample_unit_sphere(3, &mut rng).unwrap(),
                    lambda: None,
                })
                .collect();
            let g = build_gap_table(&users, &arms).unwrap();
            for (j, u) in users.iter().enumerate() {
                let mus: Vec<f64> = arms
                    .iter()
                    .map(|a| {
                        u.x.as_slice()
                            .iter()
                            .zip(a.beta.as_slice())
                            .map(|(p, q)| p * q)
                            .sum()
                    })
                    .collect();
                // Exhaustive: the optimal arm dominates every other arm.
                let best = (0..3).find(|&m| (0..3).all(|n| mus[m] >= mus[n])).unwrap();
                assert_eq!(g.optimal_arm[j], best);
                for m in 0..3 {
                    assert!(g.gaps[j][m] >= 0.0);
                    assert!((g.gaps[j][m] - (mus[best] - mus[m])).abs() < 1e-15);
                }
                assert_eq!(g.gaps[j][best], 0.0);
            }
        }
    }

    #[test]
    fn covariate_map_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let map = CovariateMap::random(2, 4, &mut rng).unwrap();
        let a = sample_unit_sphere(4, &mut rng).unwrap();
        let b = sample_unit_sphere(4, &mut rng).unwrap();
        let sum: FeatureVector = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(p, q)| 2.0 * p - q)
            .collect::<Vec<_>>()
            .into();
        let ya = map.apply(&a).unwrap();
        let yb = map.apply(&b).unwrap();
        let ys = map.apply(&sum).unwrap();
        for i in 0..2 {
            let expect = 2.0 * ya.as_slice()[i] - yb.as_slice()[i];
            assert!((ys.as_slice()[i] - expect).abs() < 1e-14);
        }
    }
}
