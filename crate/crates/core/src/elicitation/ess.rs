//! Effective sample size of an elicited prior: the beta heuristic and the
//! data-dependent comparison against same-family fits on real samples.

use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{Family, ParametricDistribution};
use crate::rng::{self, derive_seed};

use super::scoring::{clamp_to_support, ScoreError, ScoringMetric};

pub const MIN_DATA: usize = 12;
pub const DEFAULT_REPEATS: usize = 100;
/// Smallest sample from which a spread can be estimated.
pub const FLOOR: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EssError {
    #[error("ESS heuristic needs a beta distribution, got {0}")]
    NonBetaFamily(Family),
    #[error("need at least {MIN_DATA} observations, got {0}")]
    TooLittleData(usize),
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("scoring the prior failed: {0}")]
    Score(#[from] ScoreError),
}

/// Pseudo-observation count `alpha + beta` of a beta prior.
pub fn ess_heuristic(dist: &ParametricDistribution) -> Result<f64, EssError> {
    match *dist {
        ParametricDistribution::Beta { alpha, beta } => Ok(alpha + beta),
        _ => Err(EssError::NonBetaFamily(dist.family())),
    }
}

/// How scores over repeats are combined into one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Smallest n whose score, averaged over repeats, matches the prior.
    #[default]
    MeanScore,
    /// Average over repeats of each repeat's own smallest matching n.
    PerRepeat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssConfig {
    pub metric: ScoringMetric,
    pub repeats: usize,
    pub seed: u64,
    pub aggregation: Aggregation,
}

impl EssConfig {
    pub fn new(metric: ScoringMetric, seed: u64) -> Self {
        Self {
            metric,
            repeats: DEFAULT_REPEATS,
            seed,
            aggregation: Aggregation::MeanScore,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssResult {
    pub ess: f64,
    /// No grid size matched the prior; `ess` is the grid maximum.
    pub censored: bool,
    /// Fraction of repeats that were censored (per-repeat aggregation only).
    pub censored_fraction: f64,
    pub grid_max: usize,
    pub prior_score: f64,
    /// Frequentist score per n, averaged over repeats (failed fits count as
    /// infinitely bad).
    pub mean_scores: Vec<(usize, f64)>,
}

/// Same-family fit from a sample. `None` when the sample cannot support one.
pub fn fit_same_family(
    template: &ParametricDistribution,
    sample: &[f64],
) -> Option<ParametricDistribution> {
    let n = sample.len();
    if n < 2 {
        return None;
    }
    let xs: Vec<f64> = sample.iter().map(|&x| clamp_to_support(template, x)).collect();
    let moments = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
        (m, var)
    };
    let family = template.family();
    let params: Vec<f64> = match *template {
        ParametricDistribution::Normal { .. } => {
            let (m, v) = moments(&xs);
            alloc::vec![m, libm::sqrt(v)]
        }
        ParametricDistribution::StudentT { nu, .. } => {
            let (m, v) = moments(&xs);
            let sd = libm::sqrt(v);
            let sigma = if nu > 2.0 { sd * libm::sqrt((nu - 2.0) / nu) } else { sd };
            alloc::vec![nu, m, sigma]
        }
        ParametricDistribution::Beta { .. } => {
            let (m, v) = moments(&xs);
            let common = m * (1.0 - m) / v - 1.0;
            alloc::vec![m * common, (1.0 - m) * common]
        }
        ParametricDistribution::Gamma { .. } => {
            let (m, v) = moments(&xs);
            alloc::vec![m * m / v, m / v]
        }
        ParametricDistribution::Lognormal { .. } => {
            let logs: Vec<f64> = xs.iter().map(|&x| libm::log(x)).collect();
            let (m, v) = moments(&logs);
            alloc::vec![m, libm::sqrt(v)]
        }
        ParametricDistribution::Uniform { .. } => {
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            alloc::vec![lo, hi]
        }
    };
    ParametricDistribution::new(family, &params).ok()
}

/// Data split used by [`data_dependent_ess`]: (test half, pool).
pub fn ess_split(data: &[f64], seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut shuffled = data.to_vec();
    shuffled.shuffle(&mut rng::seeded(seed));
    let half = data.len() / 2;
    let pool = shuffled.split_off(half);
    (shuffled, pool)
}

/// Scores of fits at every grid size for one repeat.
fn repeat_scores(
    dist: &ParametricDistribution,
    pool: &[f64],
    test: &[f64],
    grid: &[usize],
    metric: ScoringMetric,
    seed: u64,
) -> Vec<f64> {
    let mut rng = rng::seeded(seed);
    grid.iter()
        .map(|&n| {
            let picks = index::sample(&mut rng, pool.len(), n);
            let sample: Vec<f64> = picks.iter().map(|i| pool[i]).collect();
            fit_same_family(dist, &sample)
                .and_then(|fit| metric.score(&fit, test).ok())
                .filter(|s| !s.is_nan())
                .unwrap_or(f64::INFINITY)
        })
        .collect()
}

/// Number of real observations a same-family fit needs to score at least as
/// well as `dist` on held-out data.
///
/// The data are split in half (seeded). For every `n` in `2..=pool/3` and
/// every repeat, `n` observations are drawn from the pool without
/// replacement, fitted, and scored on the test half. A value of 2 means even
/// the smallest fit beats the prior; a censored result reports the grid
/// maximum.
pub fn data_dependent_ess(
    dist: &ParametricDistribution,
    data: &[f64],
    config: &EssConfig,
) -> Result<EssResult, EssError> {
    if data.len() < MIN_DATA {
        return Err(EssError::TooLittleData(data.len()));
    }
    if config.repeats == 0 {
        return Err(EssError::NoRepeats);
    }
    let (test, pool) = ess_split(data, config.seed);
    let grid_max = pool.len() / 3;
    let grid: Vec<usize> = (FLOOR..=grid_max).collect();
    let prior_score = config.metric.score(dist, &test)?;

    let run = |r: usize| {
        repeat_scores(
            dist,
            &pool,
            &test,
            &grid,
            config.metric,
            derive_seed(config.seed, r as u64 + 1),
        )
    };
    #[cfg(feature = "std")]
    let scores: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..config.repeats).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "std"))]
    let scores: Vec<Vec<f64>> = (0..config.repeats).map(run).collect();

    let repeats = config.repeats as f64;
    let mean_scores: Vec<(usize, f64)> = grid
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, scores.iter().map(|s| s[i]).sum::<f64>() / repeats))
        .collect();

    let (ess, censored, censored_fraction) = match config.aggregation {
        Aggregation::MeanScore => match mean_scores.iter().find(|(_, s)| *s <= prior_score) {
            Some(&(n, _)) => (n as f64, false, 0.0),
            None => (grid_max as f64, true, 1.0),
        },
        Aggregation::PerRepeat => {
            let mut total = 0.0;
            let mut censored = 0usize;
            for s in &scores {
                match s.iter().position(|&v| v <= prior_score) {
                    Some(i) => total += grid[i] as f64,
                    None => {
                        total += grid_max as f64;
                        censored += 1;
                    }
                }
            }
            (
                total / repeats,
                censored == config.repeats,
                censored as f64 / repeats,
            )
        }
    };
    Ok(EssResult {
        ess,
        censored,
        censored_fraction,
        grid_max,
        prior_score,
        mean_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr_free::normal_sample;

    /// Box-Muller draws, kept local so the test has no extra dependency.
    mod rand_distr_free {
        use rand::Rng;
        pub fn normal_sample<R: Rng>(rng: &mut R, n: usize, mu: f64, sigma: f64) -> alloc::vec::Vec<f64> {
            (0..n)
                .map(|_| {
                    let u1: f64 = 1.0 - rng.random::<f64>();
                    let u2: f64 = rng.random();
                    mu + sigma * libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
                })
                .collect()
        }
    }

    #[test]
    fn heuristic() {
        assert_eq!(ess_heuristic(&ParametricDistribution::beta(2.0, 3.0).unwrap()), Ok(5.0));
        assert_eq!(ess_heuristic(&ParametricDistribution::beta(1.0, 1.0).unwrap()), Ok(2.0));
        assert_eq!(
            ess_heuristic(&ParametricDistribution::normal(0.0, 1.0).unwrap()),
            Err(EssError::NonBetaFamily(Family::Normal))
        );
    }

    #[test]
    fn fits_recover_parameters() {
        let mut rng = rng::seeded(1);
        let xs = normal_sample(&mut rng, 20_000, 3.0, 2.0);
        let fit = fit_same_family(&ParametricDistribution::normal(0.0, 1.0).unwrap(), &xs).unwrap();
        let p = fit.params();
        assert!((p[0] - 3.0).abs() < 0.05 && (p[1] - 2.0).abs() < 0.05);
        let g = ParametricDistribution::new(Family::Gamma, &[2.0, 0.5]).unwrap();
        let fit = fit_same_family(&g, &[1.0, 2.0, 3.0, 6.0]).unwrap();
        // mean 3, variance 14/3
        let p = fit.params();
        assert!((p[0] - 9.0 / (14.0 / 3.0)).abs() < 1e-12);
        assert!(fit_same_family(&g, &[1.0, 1.0]).is_none());
        assert!(fit_same_family(&g, &[1.0]).is_none());
    }

    #[test]
    fn misspecified_prior_hits_floor() {
        let mut rng = rng::seeded(7);
        let data = normal_sample(&mut rng, 200, 0.0, 1.0);
        let prior = ParametricDistribution::normal(100.0, 1.0).unwrap();
        for metric in [ScoringMetric::Crps, ScoringMetric::Mse] {
            let r = data_dependent_ess(&prior, &data, &EssConfig { repeats: 20, ..EssConfig::new(metric, 3) }).unwrap();
            assert_eq!(r.ess, 2.0);
            assert!(!r.censored);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let mut rng = rng::seeded(9);
        let data: Vec<f64> = (0..60).map(|_| rng.random_range(0.0..1.0)).collect();
        let prior = ParametricDistribution::beta(2.0, 2.0).unwrap();
        let cfg = EssConfig { repeats: 5, ..EssConfig::new(ScoringMetric::LogLoss, 4) };
        assert_eq!(data_dependent_ess(&prior, &data, &cfg), data_dependent_ess(&prior, &data, &cfg));
    }

    #[test]
    fn too_little_data() {
        let prior = ParametricDistribution::normal(0.0, 1.0).unwrap();
        let cfg = EssConfig::new(ScoringMetric::Crps, 0);
        assert_eq!(data_dependent_ess(&prior, &[0.0; 11], &cfg), Err(EssError::TooLittleData(11)));
    }

    proptest::proptest! {
        #[test]
        fn heuristic_increases_in_each_parameter(a in 0.01f64..1e3, b in 0.01f64..1e3, d in 0.01f64..10.0) {
            let base = ess_heuristic(&ParametricDistribution::beta(a, b).unwrap()).unwrap();
            proptest::prop_assert!(ess_heuristic(&ParametricDistribution::beta(a + d, b).unwrap()).unwrap() > base);
            proptest::prop_assert!(ess_heuristic(&ParametricDistribution::beta(a, b + d).unwrap()).unwrap() > base);
        }
    }

    #[test]
    fn perfect_prior_is_censored() {
        let mut rng = rng::seeded(11);
        let data = normal_sample(&mut rng, 400, 0.0, 1.0);
        let prior = ParametricDistribution::normal(0.0, 1.0).unwrap();
        let r = data_dependent_ess(&prior, &data, &EssConfig { repeats: 30, ..EssConfig::new(ScoringMetric::LogLoss, 5) }).unwrap();
        assert!(r.censored);
        assert_eq!(r.ess, r.grid_max as f64);
    }
}
