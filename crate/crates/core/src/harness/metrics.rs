use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cumulative pseudo-regret of each user group, indexed by event `k = 1..=K`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupSeries {
    pub opted_in: Vec<f64>,
    pub opted_out: Vec<f64>,
    pub all: Vec<f64>,
}

impl GroupSeries {
    pub fn len(&self) -> usize {
        self.all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSeries {
    /// Pointwise mean over replications.
    pub mean: GroupSeries,
    pub replications: Vec<GroupSeries>,
}

impl RegretSeries {
    /// Pointwise average; replications must share a length.
    pub fn from_replications(replications: Vec<GroupSeries>) -> Result<Self> {
        let Some(first) = replications.first() else {
            return Err(Error::Contract("no replications to average".into()));
        };
        let len = first.len();
        if replications.iter().any(|r| r.len() != len) {
            return Err(Error::Contract("replications differ in length".into()));
        }
        let n = replications.len() as f64;
        let avg = |pick: fn(&GroupSeries) -> &Vec<f64>| -> Vec<f64> {
            (0..len)
                .map(|k| replications.iter().map(|r| pick(r)[k]).sum::<f64>() / n)
                .collect()
        };
        let mean = GroupSeries {
            opted_in: avg(|r| &r.opted_in),
            opted_out: avg(|r| &r.opted_out),
            all: avg(|r| &r.all),
        };
        Ok(RegretSeries { mean, replications })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `a + b ln k` to `series[k-1]`, ignoring the first
/// `burn_in_fraction` of the points.
pub fn fit_log_curve(series: &[f64], burn_in_fraction: f64) -> Result<LogFit> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(Error::Contract(format!(
            "burn-in fraction {burn_in_fraction} outside [0, 1)"
        )));
    }
    let start = (burn_in_fraction * series.len() as f64).floor() as usize;
    let points: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .skip(start)
        .map(|(i, &y)| (((i + 1) as f64).ln(), y))
        .collect();
    if points.len() < 10 {
        return Err(Error::Contract(format!(
            "need at least 10 points after burn-in, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    // A flat series leaves nothing to explain.
    if syy <= 1e-24 * (1.0 + my * my) * n {
        return Ok(LogFit {
            a: my,
            b: 0.0,
            r_squared: 0.0,
        });
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    Ok(LogFit {
        a,
        b,
        r_squared: 1.0 - ss_res / syy,
    })
}

/// `(final - value at fraction f) / max(final, 1)`; near zero for a plateaued curve.
pub fn plateau_metric(series: &[f64], split: f64) -> Result<f64> {
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::Contract(format!("split {split} outside (0, 1)")));
    }
    let Some(&last) = series.last() else {
        return Err(Error::Contract("empty series".into()));
    };
    let k = ((split * series.len() as f64).round() as usize).clamp(1, series.len());
    Ok((last - series[k - 1]) / last.max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn recovers_exact_log_curve() {
        let series: Vec<f64> = (1..=500).map(|k| 3.0 + 2.5 * (k as f64).ln()).collect();
        let fit = fit_log_curve(&series, 0.2).unwrap();
        assert!((fit.a - 3.0).abs() < 1e-9);
        assert!((fit.b - 2.5).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_series_is_flat() {
        let fit = fit_log_curve(&[4.0; 100], 0.0).unwrap();
        assert_eq!(fit.b, 0.0);
        assert_eq!(fit.r_squared, 0.0);
        assert_eq!(fit.a, 4.0);
        assert_eq!(plateau_metric(&[4.0; 100], 0.6).unwrap(), 0.0);
    }

    #[test]
    fn too_short_after_burn_in() {
        assert!(fit_log_curve(&[1.0; 12], 0.5).is_err());
        assert!(fit_log_curve(&[1.0; 12], 1.0).is_err());
    }

    /// Normal equations for y = a + b x solved through the 2x2 determinant.
    fn ols_oracle(xs: &[f64], ys: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
        let det = n * sxx - sx * sx;
        ((sxx * sy - sx * sxy) / det, (n * sxy - sx * sy) / det)
    }

    #[test]
    fn random_walk_matches_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut level = 0.0;
        let series: Vec<f64> = (0..2000)
            .map(|_| {
                level += rng.random::<f64>();
                level
            })
            .collect();
        let fit = fit_log_curve(&series, 0.25).unwrap();
        let start = 500;
        let xs: Vec<f64> = (start..2000).map(|i| ((i + 1) as f64).ln()).collect();
        let (a, b) = ols_oracle(&xs, &series[start..]);
        assert!((fit.a - a).abs() < 1e-6 * a.abs().max(1.0));
        assert!((fit.b - b).abs() < 1e-6 * b.abs().max(1.0));
    }

    #[test]
    fn plateau_examples() {
        let linear: Vec<f64> = (1..=1000).map(|k| k as f64).collect();
        assert!((plateau_metric(&linear, 0.6).unwrap() - 0.4).abs() < 1e-12);
        assert!(plateau_metric(&linear, 0.0).is_err());
        assert!(plateau_metric(&[], 0.5).is_err());
    }

    #[test]
    fn averaging() {
        let a = GroupSeries {
            opted_in: vec![1.0, 2.0],
            opted_out: vec![0.0, 0.0],
            all: vec![1.0, 2.0],
        };
        let b = GroupSeries {
            opted_in: vec![3.0, 4.0],
            opted_out: vec![2.0, 2.0],
            all: vec![5.0, 6.0],
        };
        let s = RegretSeries::from_replications(vec![a.clone(), b]).unwrap();
        assert_eq!(s.mean.opted_in, vec![2.0, 3.0]);
        assert_eq!(s.mean.all, vec![3.0, 4.0]);
        let single = RegretSeries::from_replications(vec![a.clone()]).unwrap();
        assert_eq!(single.mean, a);
    }

    proptest! {
        #[test]
        fn plateau_of_nondecreasing_series_is_in_unit_interval(
            steps in proptest::collection::vec(0.0f64..5.0, 2..300),
            split in 0.05f64..0.95,
        ) {
            let mut acc = 0.0;
            let series: Vec<f64> = steps.iter().map(|s| { acc += s; acc }).collect();
            let p = plateau_metric(&series, split).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
