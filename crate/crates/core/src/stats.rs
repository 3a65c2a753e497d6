//! Exact binomial bounds and goodness-of-fit tests.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};
use statrs::function::beta::beta_reg;

/// Two-sided Clopper–Pearson interval for `hits` successes in `trials` at
/// confidence `1 − alpha`.
pub fn clopper_pearson(hits: u64, trials: u64, alpha: f64) -> (f64, f64) {
    assert!(hits <= trials, "hits exceed trials");
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)");
    if trials == 0 {
        return (0.0, 1.0);
    }
    let k = hits as f64;
    let n = trials as f64;
    let lower = if hits == 0 {
        0.0
    } else {
        beta_quantile(k, n - k + 1.0, alpha / 2.0)
    };
    let upper = if hits == trials {
        1.0
    } else {
        beta_quantile(k + 1.0, n - k, 1.0 - alpha / 2.0)
    };
    (lower, upper)
}

/// Inverse of the regularised incomplete beta function by bisection.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-17 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    /// `(first count in bin, observed, expected)`; the last bin is open-ended.
    pub bins: Vec<(u64, u64, f64)>,
}

/// Pearson chi-square test of observed counts against `Poisson(rate)`.
///
/// Adjacent counts are pooled until every bin expects at least 5
/// observations; the rate is treated as known.
pub fn poisson_chi_square(counts: &[u64], rate: f64) -> ChiSquareReport {
    let n = counts.len() as f64;
    let law = Poisson::new(rate).expect("Poisson rate must be positive");
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut observed = vec![0u64; max as usize + 2];
    for &c in counts {
        observed[c as usize] += 1;
    }

    let mut bins: Vec<(u64, u64, f64)> = Vec::new();
    let mut start = 0u64;
    let mut obs = 0u64;
    let mut exp = 0.0;
    let mut k = 0u64;
    loop {
        let tail_expected = n * (1.0 - if k == 0 { 0.0 } else { law.cdf(k - 1) });
        if tail_expected < 5.0 || k > max {
            // Close with an open-ended bin holding everything from `start`.
            let tail_obs: u64 = observed[start as usize..].iter().sum();
            let tail_exp = n * (1.0 - if start == 0 { 0.0 } else { law.cdf(start - 1) });
            if tail_exp < 5.0 && !bins.is_empty() {
                let last = bins.last_mut().unwrap();
                last.1 += tail_obs;
                last.2 += tail_exp;
            } else {
                bins.push((start, tail_obs, tail_exp));
            }
            break;
        }
        obs += observed[k as usize];
        exp += n * law.pmf(k);
        k += 1;
        if exp >= 5.0 {
            bins.push((start, obs, exp));
            start = k;
            obs = 0;
            exp = 0.0;
        }
    }

    let statistic: f64 = bins.iter().map(|&(_, o, e)| (o as f64 - e).powi(2) / e).sum();
    let dof = bins.len().saturating_sub(1).max(1);
    let p_value = ChiSquared::new(dof as f64).map(|c| c.sf(statistic)).unwrap_or(f64::NAN);
    ChiSquareReport {
        statistic,
        degrees_of_freedom: dof,
        p_value,
        bins,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_measures::{RngStreamKey, Substream};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn known_values() {
        // 0 of n: upper = 1 − (α/2)^{1/n}
        let (lo, hi) = clopper_pearson(0, 10_000, 0.05);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(1e-4))).abs() < 1e-12);
        assert!(hi < 4e-4);
        // n of n: lower = (α/2)^{1/n}
        let (lo, hi) = clopper_pearson(20, 20, 0.05);
        assert!((lo - 0.025f64.powf(0.05)).abs() < 1e-12);
        assert_eq!(hi, 1.0);
        // textbook: 5/20 at 95% ≈ (0.0866, 0.4910)
        let (lo, hi) = clopper_pearson(5, 20, 0.05);
        assert!((lo - 0.0866).abs() < 1e-4 && (hi - 0.4910).abs() < 1e-4, "{lo} {hi}");
    }

    #[test]
    fn coverage_at_least_nominal() {
        let alpha = 0.05;
        let trials = 100;
        for (j, p) in [0.01, 0.1, 0.5].into_iter().enumerate() {
            let mut rng = RngStreamKey::new(31, j as u64, Substream::Thinning).rng();
            let mut covered = 0;
            for _ in 0..1000 {
                let hits = (0..trials).filter(|_| rng.random::<f64>() < p).count() as u64;
                let (lo, hi) = clopper_pearson(hits, trials, alpha);
                if lo <= p && p <= hi {
                    covered += 1;
                }
            }
            assert!(covered as f64 / 1000.0 >= 1.0 - alpha, "p={p} coverage {covered}");
        }
    }

    #[test]
    fn chi_square_accepts_poisson_rejects_shifted() {
        let mut rng = RngStreamKey::new(3, 0, Substream::JumpTimes).rng();
        let law = rand_distr::Poisson::new(2.0).unwrap();
        let counts: Vec<u64> = (0..10_000).map(|_| rng.sample(law) as u64).collect();
        let r = poisson_chi_square(&counts, 2.0);
        assert!(r.p_value > 0.001, "{r:?}");
        assert!(r.bins.iter().all(|b| b.2 >= 5.0));
        assert_eq!(r.bins.iter().map(|b| b.1).sum::<u64>(), 10_000);
        let bad = poisson_chi_square(&counts, 2.2);
        assert!(bad.p_value < 0.001);
    }

    proptest! {
        #[test]
        fn interval_is_ordered(trials in 1u64..500, frac in 0.0f64..=1.0, alpha in 0.001f64..0.5) {
            let hits = ((trials as f64) * frac).floor() as u64;
            let (lo, hi) = clopper_pearson(hits, trials, alpha);
            let p = hits as f64 / trials as f64;
            prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
        }
    }
}
