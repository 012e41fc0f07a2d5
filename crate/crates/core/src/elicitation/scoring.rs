//! Scores of a predictive distribution against observations: log loss,
//! CRPS and squared error of the mean.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{ParametricDistribution, Support};
use crate::quadrature::{integrate_around, integrate_finite};
use crate::special::{std_normal_cdf, std_normal_pdf};

/// Absolute quadrature tolerance for non-normal CRPS.
pub const CRPS_TOLERANCE: f64 = 1e-8;
/// Observations this close to the edge of a bounded or positive support are
/// moved inside it before a density is evaluated.
pub const EDGE_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ScoreError {
    #[error("no observations to score")]
    Empty,
    #[error("observation {0} lies outside the support")]
    OutsideSupport(f64),
    #[error("observation {0} is not finite")]
    NonFinite(f64),
    #[error("distribution has no finite mean")]
    InfiniteMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMetric {
    LogLoss,
    Crps,
    Mse,
}

impl ScoringMetric {
    pub const ALL: [ScoringMetric; 3] = [ScoringMetric::LogLoss, ScoringMetric::Crps, ScoringMetric::Mse];

    pub fn id(self) -> &'static str {
        match self {
            ScoringMetric::LogLoss => "log_loss",
            ScoringMetric::Crps => "crps",
            ScoringMetric::Mse => "mse",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.id() == id)
    }

    /// Mean score over `observations`; lower is better for all three.
    pub fn score(
        self,
        dist: &ParametricDistribution,
        observations: &[f64],
    ) -> Result<f64, ScoreError> {
        match self {
            ScoringMetric::LogLoss => log_loss(dist, observations),
            ScoringMetric::Crps => mean_crps(dist, observations),
            ScoringMetric::Mse => mse(dist, observations),
        }
    }
}

fn check_finite(observations: &[f64]) -> Result<(), ScoreError> {
    if observations.is_empty() {
        return Err(ScoreError::Empty);
    }
    match observations.iter().find(|x| !x.is_finite()) {
        Some(&x) => Err(ScoreError::NonFinite(x)),
        None => Ok(()),
    }
}

/// Moves boundary observations of unit and positive supports inside them.
pub fn clamp_to_support(dist: &ParametricDistribution, x: f64) -> f64 {
    match dist.family().support() {
        Support::Unit => x.clamp(EDGE_CLAMP, 1.0 - EDGE_CLAMP),
        Support::Positive => x.max(EDGE_CLAMP),
        Support::Real | Support::Bounded => x,
    }
}

/// Negative mean log density.
pub fn log_loss(dist: &ParametricDistribution, observations: &[f64]) -> Result<f64, ScoreError> {
    check_finite(observations)?;
    let mut sum = 0.0;
    for &x in observations {
        let lp = dist.ln_pdf(clamp_to_support(dist, x));
        if !lp.is_finite() {
            return Err(ScoreError::OutsideSupport(x));
        }
        sum -= lp;
    }
    Ok(sum / observations.len() as f64)
}

/// Mean squared error of the distribution mean.
pub fn mse(dist: &ParametricDistribution, observations: &[f64]) -> Result<f64, ScoreError> {
    check_finite(observations)?;
    let m = dist.mean().ok_or(ScoreError::InfiniteMean)?;
    let sum: f64 = observations.iter().map(|x| (m - x) * (m - x)).sum();
    Ok(sum / observations.len() as f64)
}

/// Closed-form normal CRPS.
pub fn crps_normal(mu: f64, sigma: f64, x: f64) -> f64 {
    let z = (x - mu) / sigma;
    sigma * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - 1.0 / libm::sqrt(PI))
}

/// CRPS of one observation: closed form for the normal family, quadrature
/// otherwise.
pub fn crps(dist: &ParametricDistribution, x: f64) -> Result<f64, ScoreError> {
    match *dist {
        ParametricDistribution::Normal { mu, sigma } => {
            check_finite(&[x])?;
            Ok(crps_normal(mu, sigma, x))
        }
        _ => crps_quadrature(dist, x),
    }
}

/// CRPS by integrating `(F(t) - 1{t >= x})^2` numerically, for any family.
pub fn crps_quadrature(dist: &ParametricDistribution, x: f64) -> Result<f64, ScoreError> {
    pooled_crps(dist, &[x])
}

/// Mean CRPS over observations.
pub fn mean_crps(dist: &ParametricDistribution, observations: &[f64]) -> Result<f64, ScoreError> {
    match *dist {
        ParametricDistribution::Normal { mu, sigma } => {
            check_finite(observations)?;
            let sum: f64 = observations.iter().map(|&x| crps_normal(mu, sigma, x)).sum();
            Ok(sum / observations.len() as f64)
        }
        _ => pooled_crps(dist, observations),
    }
}

/// Mean CRPS written as one integral against the empirical CDF `G` of the
/// observations: `∫ (F - G)^2 dt + ∫ G (1 - G) dt`. `G` is a step function,
/// so the first term is integrated piecewise between sorted observations and
/// the second is a finite sum.
fn pooled_crps(dist: &ParametricDistribution, observations: &[f64]) -> Result<f64, ScoreError> {
    check_finite(observations)?;
    let mean = dist.mean().ok_or(ScoreError::InfiniteMean)?;
    let scale = match dist.variance() {
        Some(v) if v > 0.0 && v.is_finite() => libm::sqrt(v),
        _ => match *dist {
            ParametricDistribution::StudentT { sigma, .. } => sigma,
            _ => 1.0,
        },
    };
    let mut xs: Vec<f64> = observations.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len();
    let mf = m as f64;
    let (lo, hi) = dist.support_bounds();
    let segments = m + 1;
    let tol = CRPS_TOLERANCE / segments as f64;

    let mut total = 0.0;
    // left tail: G = 0, F = 1 beyond the upper support bound
    if xs[0] > lo {
        let end = xs[0].min(hi);
        total += (xs[0] - end).max(0.0);
        total += integrate_around(
            |t| {
                let f = dist.cdf(t);
                f * f
            },
            lo,
            end,
            mean.clamp(lo, end),
            scale,
            tol,
        )
        .value;
    }
    for k in 1..m {
        let (a, b) = (xs[k - 1], xs[k]);
        if b <= a {
            continue;
        }
        let g = k as f64 / mf;
        // step heights of G contribute G (1 - G) per unit length
        total += g * (1.0 - g) * (b - a);
        let (a, b) = (a.max(lo), b.min(hi));
        let sq = |t: f64| {
            let d = dist.cdf(t) - g;
            d * d
        };
        total += if a < b { integrate_finite(sq, a, b, tol).value } else { 0.0 };
        // parts of the segment outside the support have F constant
        let outside_left = (xs[k].min(lo) - xs[k - 1]).max(0.0);
        let outside_right = (xs[k] - xs[k - 1].max(hi)).max(0.0);
        total += outside_left * g * g + outside_right * (1.0 - g) * (1.0 - g);
    }
    // right tail: G = 1, F = 0 below the lower support bound
    if xs[m - 1] < hi {
        let start = xs[m - 1].max(lo);
        total += (start - xs[m - 1]).max(0.0);
        total += integrate_around(
            |t| {
                let s = 1.0 - dist.cdf(t);
                s * s
            },
            start,
            hi,
            mean.clamp(start, hi),
            scale,
            tol,
        )
        .value;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::Family;

    fn d(f: Family, p: &[f64]) -> ParametricDistribution {
        ParametricDistribution::new(f, p).unwrap()
    }

    #[test]
    fn log_loss_closed_forms() {
        let n = ParametricDistribution::normal(0.0, 1.0).unwrap();
        assert!((log_loss(&n, &[0.0]).unwrap() - 0.918_938_533_204_672_7).abs() < 1e-12);
        let u = d(Family::Uniform, &[0.0, 1.0]);
        assert_eq!(log_loss(&u, &[0.1, 0.5, 0.99]).unwrap(), 0.0);
        let b = ParametricDistribution::beta(2.0, 2.0).unwrap();
        assert!((log_loss(&b, &[0.5]).unwrap() + libm::log(1.5)).abs() < 1e-12);
        assert!(matches!(log_loss(&u, &[2.0]), Err(ScoreError::OutsideSupport(_))));
    }

    #[test]
    fn beta_endpoints_are_clamped() {
        let b = ParametricDistribution::beta(2.0, 3.0).unwrap();
        let v = log_loss(&b, &[0.0, 1.0]).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn normal_crps_reference_value() {
        let n = ParametricDistribution::normal(0.0, 1.0).unwrap();
        assert!((crps(&n, 0.0).unwrap() - 0.233_695_0).abs() < 1e-7);
        let n2 = ParametricDistribution::normal(0.0, 2.0).unwrap();
        assert!((crps(&n2, 0.0).unwrap() - 2.0 * crps(&n, 0.0).unwrap()).abs() < 1e-14);
        let tiny = ParametricDistribution::normal(0.0, 1e-9).unwrap();
        assert!(crps(&tiny, 0.0).unwrap() < 1e-9);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for (mu, sigma, x) in [(0.0, 1.0, 0.0), (3.0, 0.5, 2.2), (-10.0, 7.0, 5.0), (100.0, 1.0, 0.0)] {
            let n = ParametricDistribution::normal(mu, sigma).unwrap();
            let q = crps_quadrature(&n, x).unwrap();
            assert!((q - crps_normal(mu, sigma, x)).abs() < 1e-6, "{mu} {sigma} {x}: {q}");
        }
    }

    #[test]
    fn pooled_equals_mean_of_single_points() {
        let xs = [0.3, 1.7, 2.2, 2.2, 5.0, 0.0];
        for dist in [
            d(Family::Gamma, &[2.0, 1.0]),
            d(Family::Lognormal, &[0.2, 0.7]),
            d(Family::StudentT, &[4.0, 1.0, 2.0]),
            d(Family::Uniform, &[1.0, 3.0]),
        ] {
            let pooled = mean_crps(&dist, &xs).unwrap();
            let single: f64 = xs.iter().map(|&x| crps_quadrature(&dist, x).unwrap()).sum::<f64>() / xs.len() as f64;
            assert!((pooled - single).abs() < 1e-7, "{dist}");
        }
    }

    #[test]
    fn uniform_crps_closed_form() {
        // CRPS(U(0,1), x) = x^2 - x + 1/3 for x in [0, 1]
        let u = d(Family::Uniform, &[0.0, 1.0]);
        for x in [0.0, 0.25, 0.5, 0.9] {
            let want = x * x - x + 1.0 / 3.0;
            assert!((crps(&u, x).unwrap() - want).abs() < 1e-8);
        }
        // outside the support the distance adds linearly
        assert!((crps(&u, 2.0).unwrap() - (1.0 + 1.0 / 3.0)).abs() < 1e-8);
    }

    #[test]
    fn infinite_mean_rejected() {
        let t = d(Family::StudentT, &[1.0, 0.0, 1.0]);
        assert_eq!(crps(&t, 0.0), Err(ScoreError::InfiniteMean));
        assert_eq!(mse(&t, &[0.0]), Err(ScoreError::InfiniteMean));
    }

    #[test]
    fn mse_uses_mean() {
        let b = ParametricDistribution::beta(1.0, 3.0).unwrap();
        // mean 1/4: errors 0 and 1/2
        assert!((mse(&b, &[0.25, 0.75]).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(ScoringMetric::from_id("crps"), Some(ScoringMetric::Crps));
    }

    #[test]
    fn closed_form_grid_of_100() {
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let mu = -5.0 + (i % 5) as f64 * 2.5;
            let sigma = 0.1 + (i / 5 % 4) as f64 * 1.3;
            let x = mu + sigma * (-3.0 + (i / 20) as f64 * 1.5);
            let n = ParametricDistribution::normal(mu, sigma).unwrap();
            worst = worst.max((crps_quadrature(&n, x).unwrap() - crps_normal(mu, sigma, x)).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    proptest::proptest! {
        #[test]
        fn crps_is_nonnegative(shape in 0.3f64..20.0, rate in 0.05f64..5.0, x in 0.0f64..30.0) {
            let g = d(Family::Gamma, &[shape, rate]);
            proptest::prop_assert!(crps(&g, x).unwrap() >= 0.0);
            let t = d(Family::StudentT, &[1.0 + shape, x, rate]);
            proptest::prop_assert!(crps(&t, 0.0).unwrap() >= 0.0);
        }
    }
}
