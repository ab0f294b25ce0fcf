//! Feature-based synthetic control oracle.
//!
//! Coefficients expressing a target user's features as a linear combination of
//! donor features. Because mean rewards are linear in the features, the same
//! coefficients reconstruct the target's mean reward on every arm.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureVector, UserId};

/// Relative singular-value threshold used for the rank test.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Maximum accepted reconstruction residual.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Donor set `E_{j,m}(t)` for one target user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSet {
    pub target: UserId,
    pub members: Vec<UserId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCoefficients {
    /// Aligned with the donor members.
    pub a: Vec<f64>,
    /// `sum |a_i|`
    pub c: f64,
    pub residual: f64,
}

impl SynthCoefficients {
    pub fn new(a: Vec<f64>, residual: f64) -> Self {
        let c = l1(&a);
        SynthCoefficients { a, c, residual }
    }
}

fn l1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

pub fn c_norm(coeffs: &SynthCoefficients) -> f64 {
    l1(&coeffs.a)
}

/// Matrix whose columns are the given vectors.
fn column_matrix(vectors: &[&FeatureVector]) -> Result<DMatrix<f64>> {
    let dim = vectors.first().map_or(0, |v| v.dim());
    if vectors.iter().any(|v| v.dim() != dim) {
        return Err(Error::ModelConfig("feature dimensions differ".into()));
    }
    Ok(DMatrix::from_fn(dim, vectors.len(), |r, c| {
        vectors[c].as_slice()[r]
    }))
}

fn numerical_rank(singular: &DVector<f64>) -> usize {
    let largest = singular.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    singular
        .iter()
        .filter(|&&s| s > RANK_TOLERANCE * largest)
        .count()
}

/// True iff the vectors span their ambient space.
pub fn rank_ok(features: &[FeatureVector]) -> bool {
    let refs: Vec<&FeatureVector> = features.iter().collect();
    rank_ok_refs(&refs)
}

fn rank_ok_refs(features: &[&FeatureVector]) -> bool {
    let Some(first) = features.first() else {
        return false;
    };
    let dim = first.dim();
    if dim == 0 || features.len() < dim {
        return false;
    }
    match column_matrix(features) {
        Ok(m) => numerical_rank(&m.singular_values()) >= dim,
        Err(_) => false,
    }
}

/// Minimum-norm least-squares coefficients reconstructing `target` from `members`.
pub fn solve_coefficients(
    target: &FeatureVector,
    members: &[FeatureVector],
) -> Result<SynthCoefficients> {
    let refs: Vec<&FeatureVector> = members.iter().collect();
    solve_refs(target, &refs)
}

fn solve_refs(target: &FeatureVector, members: &[&FeatureVector]) -> Result<SynthCoefficients> {
    if members.is_empty() {
        return Err(Error::OracleUnavailable("empty donor set".into()));
    }
    if members.iter().any(|m| m.dim() != target.dim()) {
        return Err(Error::ModelConfig(
            "donor and target dimensions differ".into(),
        ));
    }
    let x = column_matrix(members)?;
    let svd = x.clone().svd(true, true);
    if numerical_rank(&svd.singular_values) < target.dim() {
        return Err(Error::OracleUnavailable(
            "donor features are rank deficient".into(),
        ));
    }
    let largest = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let b = DVector::from_column_slice(target.as_slice());
    let a = svd
        .solve(&b, RANK_TOLERANCE * largest)
        .map_err(|e| Error::OracleUnavailable(e.to_string()))?;
    let residual = (&x * &a - &b).norm();
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(Error::OracleUnavailable(format!(
            "residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(SynthCoefficients::new(
        a.iter().copied().collect(),
        residual,
    ))
}

/// Source of synthetic control coefficients.
///
/// The feature-based implementation below is exact; a history-based estimator
/// can be dropped in behind the same interface.
pub trait SyntheticControlOracle {
    fn coefficients(&mut self, target: UserId, members: &[UserId]) -> Result<SynthCoefficients>;
}

/// Exact oracle over static user features, memoized by `(target, members)`.
#[derive(Debug, Clone)]
pub struct FeatureOracle {
    features: Vec<FeatureVector>,
    cache: HashMap<(UserId, Vec<UserId>), Result<SynthCoefficients>>,
    solves: u64,
}

impl FeatureOracle {
    pub fn new(features: Vec<FeatureVector>) -> Self {
        FeatureOracle {
            features,
            cache: HashMap::new(),
            solves: 0,
        }
    }

    /// Number of solves that missed the cache.
    pub fn solves(&self) -> u64 {
        self.solves
    }

    pub fn cached(&self) -> usize {
        self.cache.len()
    }

    /// Solves without touching the cache.
    pub fn solve_fresh(&self, target: UserId, members: &[UserId]) -> Result<SynthCoefficients> {
        let t = self
            .features
            .get(target)
            .ok_or_else(|| Error::Contract(format!("unknown user {target}")))?;
        if members.contains(&target) {
            return Err(Error::Contract("target may not be its own donor".into()));
        }
        let refs = members
            .iter()
            .map(|&i| {
                self.features
                    .get(i)
                    .ok_or_else(|| Error::Contract(format!("unknown user {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        solve_refs(t, &refs)
    }
}

impl SyntheticControlOracle for FeatureOracle {
    fn coefficients(&mut self, target: UserId, members: &[UserId]) -> Result<SynthCoefficients> {
        let key = (target, members.to_vec());
        if let Some(hit) = self.cache.get(&key) {
            return hit.clone();
        }
        let solved = self.solve_fresh(target, members);
        self.solves += 1;
        self.cache.insert(key, solved.clone());
        solved
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mean_reward, sample_unit_sphere, ArmProfile, UserProfile};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn basis(d: usize) -> Vec<FeatureVector> {
        (0..d)
            .map(|i| {
                let mut v = vec![0.0; d];
                v[i] = 1.0;
                v.into()
            })
            .collect()
    }

    #[test]
    fn rank_examples() {
        assert!(rank_ok(&basis(5)));
        let v: FeatureVector = vec![0.3, 0.4, 0.5].into();
        assert!(!rank_ok(&[v.clone(), v.clone(), v]));
        assert!(!rank_ok(&[]));
        assert!(!rank_ok(&basis(3)[..2]));
    }

    #[test]
    fn random_sphere_vectors_have_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let failures = (0..1000)
            .filter(|_| {
                let vs: Vec<_> = (0..5)
                    .map(|_| sample_unit_sphere(5, &mut rng).unwrap())
                    .collect();
                !rank_ok(&vs)
            })
            .count();
        assert_eq!(failures, 0);
    }

    #[test]
    fn basis_expansion() {
        let target: FeatureVector = vec![0.2, -0.5, 0.3, 0.0, 0.7].into();
        let s = solve_coefficients(&target, &basis(5)).unwrap();
        for (a, t) in s.a.iter().zip(target.as_slice()) {
            assert!((a - t).abs() < 1e-14);
        }
        assert!((c_norm(&s) - 1.7).abs() < 1e-14);
        assert_eq!(s.c, c_norm(&s));
    }

    #[test]
    fn two_by_two_system() {
        let members: Vec<FeatureVector> = vec![vec![1.0, 1.0].into(), vec![1.0, -1.0].into()];
        let s = solve_coefficients(&vec![1.0, 0.0].into(), &members).unwrap();
        assert!((s.a[0] - 0.5).abs() < 1e-14);
        assert!((s.a[1] - 0.5).abs() < 1e-14);
        assert!(s.residual < 1e-14);
    }

    #[test]
    fn c_norm_examples() {
        assert_eq!(c_norm(&SynthCoefficients::new(vec![0.5, 0.5], 0.0)), 1.0);
        assert_eq!(
            c_norm(&SynthCoefficients::new(vec![1.0, -1.0, 1.0], 0.0)),
            3.0
        );
    }

    #[test]
    fn rank_deficient_is_unavailable() {
        let v: FeatureVector = vec![1.0, 2.0].into();
        let r = solve_coefficients(&vec![1.0, 0.0].into(), &[v.clone(), v.scaled(-3.0)]);
        assert!(matches!(r, Err(Error::OracleUnavailable(_))));
    }

    #[test]
    fn too_few_members_is_unavailable() {
        let r = solve_coefficients(&vec![0.0, 0.0, 1.0].into(), &basis(3)[..2]);
        assert!(matches!(r, Err(Error::OracleUnavailable(_))));
    }

    #[test]
    fn reconstruction_through_mean_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let arms: Vec<ArmProfile> = (0..10)
            .map(|m| ArmProfile {
                id: m,
                beta: sample_unit_sphere(5, &mut rng).unwrap(),
                lambda: None,
            })
            .collect();
        for _ in 0..200 {
            let users: Vec<UserProfile> = (0..6)
                .map(|i| UserProfile {
                    id: i,
                    x: sample_unit_sphere(5, &mut rng).unwrap(),
                    y: None,
                    opted_in: true,
                })
                .collect();
            let donors: Vec<FeatureVector> = users[1..].iter().map(|u| u.x.clone()).collect();
            let s = solve_coefficients(&users[0].x, &donors).unwrap();
            assert!(s.residual < 1e-10);
            for arm in &arms {
                let synth: f64 =
                    s.a.iter()
                        .zip(&users[1..])
                        .map(|(a, u)| a * mean_reward(u, arm).unwrap())
                        .sum();
                assert!((synth - mean_reward(&users[0], arm).unwrap()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cache_is_transparent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let features: Vec<_> = (0..8)
            .map(|_| sample_unit_sphere(3, &mut rng).unwrap())
            .collect();
        let mut oracle = FeatureOracle::new(features);
        let first = oracle.coefficients(0, &[4, 2, 7]).unwrap();
        let again = oracle.coefficients(0, &[4, 2, 7]).unwrap();
        let fresh = oracle.solve_fresh(0, &[4, 2, 7]).unwrap();
        assert_eq!(oracle.solves(), 1);
        for ((x, y), z) in first.a.iter().zip(&again.a).zip(&fresh.a) {
            assert_eq!(x.to_bits(), y.to_bits());
            assert_eq!(x.to_bits(), z.to_bits());
        }
        assert_eq!(first.c.to_bits(), fresh.c.to_bits());
        assert!(oracle.coefficients(0, &[0, 1, 2]).is_err());
    }
}
