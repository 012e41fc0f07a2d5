//! Parametric families used for elicited priors.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{
    ln_beta, ln_gamma, regularized_beta, regularized_gamma_p, std_normal_cdf,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    StudentT,
    Beta,
    Gamma,
    Lognormal,
    Uniform,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Normal,
        Family::StudentT,
        Family::Beta,
        Family::Gamma,
        Family::Lognormal,
        Family::Uniform,
    ];

    /// Stan function name.
    pub fn stan_name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::StudentT => "student_t",
            Family::Beta => "beta",
            Family::Gamma => "gamma",
            Family::Lognormal => "lognormal",
            Family::Uniform => "uniform",
        }
    }

    pub fn from_stan_name(name: &str) -> Option<Self> {
        Family::ALL.into_iter().find(|f| f.stan_name() == name)
    }

    /// Stan call signature with parameter names, e.g. `y ~ beta(alpha, beta)`.
    pub fn signature(self) -> &'static str {
        match self {
            Family::Normal => "y ~ normal(mu, sigma)",
            Family::StudentT => "y ~ student_t(nu, mu, sigma)",
            Family::Beta => "y ~ beta(alpha, beta)",
            Family::Gamma => "y ~ gamma(shape, rate)",
            Family::Lognormal => "y ~ lognormal(mu, sigma)",
            Family::Uniform => "y ~ uniform(lower, upper)",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Family::StudentT => 3,
            _ => 2,
        }
    }

    pub fn support(self) -> Support {
        match self {
            Family::Normal | Family::StudentT => Support::Real,
            Family::Beta => Support::Unit,
            Family::Gamma | Family::Lognormal => Support::Positive,
            Family::Uniform => Support::Bounded,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.stan_name())
    }
}

/// Kind of set a family's density lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Real,
    Positive,
    Unit,
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("{family} takes {expected} parameters, got {found}")]
    Arity {
        family: Family,
        expected: usize,
        found: usize,
    },
    #[error("invalid {family} parameters: {reason}")]
    InvalidParameters { family: Family, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ParametricDistribution {
    Normal { mu: f64, sigma: f64 },
    StudentT { nu: f64, mu: f64, sigma: f64 },
    Beta { alpha: f64, beta: f64 },
    Gamma { shape: f64, rate: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Uniform { lo: f64, hi: f64 },
}

fn invalid(family: Family, reason: &str) -> DistributionError {
    DistributionError::InvalidParameters {
        family,
        reason: reason.into(),
    }
}

impl ParametricDistribution {
    /// Builds a validated distribution from Stan-ordered parameters.
    pub fn new(family: Family, params: &[f64]) -> Result<Self, DistributionError> {
        if params.len() != family.arity() {
            return Err(DistributionError::Arity {
                family,
                expected: family.arity(),
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid(family, "parameters must be finite"));
        }
        let positive = |v: f64, what: &str| {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(invalid(family, &alloc::format!("{what} must be positive")))
            }
        };
        let dist = match family {
            Family::Normal => Self::Normal {
                mu: params[0],
                sigma: positive(params[1], "sigma")?,
            },
            Family::StudentT => Self::StudentT {
                nu: positive(params[0], "nu")?,
                mu: params[1],
                sigma: positive(params[2], "sigma")?,
            },
            Family::Beta => Self::Beta {
                alpha: positive(params[0], "alpha")?,
                beta: positive(params[1], "beta")?,
            },
            Family::Gamma => Self::Gamma {
                shape: positive(params[0], "shape")?,
                rate: positive(params[1], "rate")?,
            },
            Family::Lognormal => Self::Lognormal {
                mu: params[0],
                sigma: positive(params[1], "sigma")?,
            },
            Family::Uniform => {
                if params[0] >= params[1] {
                    return Err(invalid(family, "lower bound must be below upper bound"));
                }
                Self::Uniform {
                    lo: params[0],
                    hi: params[1],
                }
            }
        };
        Ok(dist)
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self, DistributionError> {
        Self::new(Family::Normal, &[mu, sigma])
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self, DistributionError> {
        Self::new(Family::Beta, &[alpha, beta])
    }

    pub fn family(&self) -> Family {
        match self {
            Self::Normal { .. } => Family::Normal,
            Self::StudentT { .. } => Family::StudentT,
            Self::Beta { .. } => Family::Beta,
            Self::Gamma { .. } => Family::Gamma,
            Self::Lognormal { .. } => Family::Lognormal,
            Self::Uniform { .. } => Family::Uniform,
        }
    }

    /// Parameters in Stan order.
    pub fn params(&self) -> Vec<f64> {
        match *self {
            Self::Normal { mu, sigma } | Self::Lognormal { mu, sigma } => alloc::vec![mu, sigma],
            Self::StudentT { nu, mu, sigma } => alloc::vec![nu, mu, sigma],
            Self::Beta { alpha, beta } => alloc::vec![alpha, beta],
            Self::Gamma { shape, rate } => alloc::vec![shape, rate],
            Self::Uniform { lo, hi } => alloc::vec![lo, hi],
        }
    }

    /// Closed interval containing all probability mass.
    pub fn support_bounds(&self) -> (f64, f64) {
        match *self {
            Self::Normal { .. } | Self::StudentT { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Self::Beta { .. } => (0.0, 1.0),
            Self::Gamma { .. } | Self::Lognormal { .. } => (0.0, f64::INFINITY),
            Self::Uniform { lo, hi } => (lo, hi),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let ln_sqrt_2pi = 0.5 * libm::log(2.0 * PI);
        match *self {
            Self::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - libm::log(sigma) - ln_sqrt_2pi
            }
            Self::StudentT { nu, mu, sigma } => {
                let z = (x - mu) / sigma;
                ln_gamma(0.5 * (nu + 1.0))
                    - ln_gamma(0.5 * nu)
                    - 0.5 * libm::log(nu * PI)
                    - libm::log(sigma)
                    - 0.5 * (nu + 1.0) * libm::log1p(z * z / nu)
            }
            Self::Beta { alpha, beta } => {
                if !(0.0..=1.0).contains(&x) {
                    return f64::NEG_INFINITY;
                }
                power_term(alpha - 1.0, x) + power_term(beta - 1.0, 1.0 - x) - ln_beta(alpha, beta)
            }
            Self::Gamma { shape, rate } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * libm::log(rate) + power_term(shape - 1.0, x) - rate * x - ln_gamma(shape)
            }
            Self::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = (libm::log(x) - mu) / sigma;
                -libm::log(x) - libm::log(sigma) - ln_sqrt_2pi - 0.5 * z * z
            }
            Self::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    -libm::log(hi - lo)
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        libm::exp(self.ln_pdf(x))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mu, sigma } => std_normal_cdf((x - mu) / sigma),
            Self::StudentT { nu, mu, sigma } => {
                let z = (x - mu) / sigma;
                if z.is_infinite() {
                    return if z > 0.0 { 1.0 } else { 0.0 };
                }
                let tail = 0.5 * regularized_beta(0.5 * nu, 0.5, nu / (nu + z * z));
                if z > 0.0 {
                    1.0 - tail
                } else {
                    tail
                }
            }
            Self::Beta { alpha, beta } => regularized_beta(alpha, beta, x),
            Self::Gamma { shape, rate } => regularized_gamma_p(shape, rate * x),
            Self::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_cdf((libm::log(x) - mu) / sigma)
                }
            }
            Self::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
        }
    }

    /// Mean, when finite.
    pub fn mean(&self) -> Option<f64> {
        match *self {
            Self::Normal { mu, .. } => Some(mu),
            Self::StudentT { nu, mu, .. } => (nu > 1.0).then_some(mu),
            Self::Beta { alpha, beta } => Some(alpha / (alpha + beta)),
            Self::Gamma { shape, rate } => Some(shape / rate),
            Self::Lognormal { mu, sigma } => Some(libm::exp(mu + 0.5 * sigma * sigma)),
            Self::Uniform { lo, hi } => Some(0.5 * (lo + hi)),
        }
    }

    /// Variance, when finite.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            Self::Normal { sigma, .. } => Some(sigma * sigma),
            Self::StudentT { nu, sigma, .. } => (nu > 2.0).then(|| sigma * sigma * nu / (nu - 2.0)),
            Self::Beta { alpha, beta } => {
                let s = alpha + beta;
                Some(alpha * beta / (s * s * (s + 1.0)))
            }
            Self::Gamma { shape, rate } => Some(shape / (rate * rate)),
            Self::Lognormal { mu, sigma } => {
                let s2 = sigma * sigma;
                Some((libm::exp(s2) - 1.0) * libm::exp(2.0 * mu + s2))
            }
            Self::Uniform { lo, hi } => Some((hi - lo) * (hi - lo) / 12.0),
        }
    }

    /// Stan pseudocode, e.g. `y ~ normal(120, 10)`.
    pub fn to_stan(&self) -> String {
        let args: Vec<String> = self.params().iter().map(|p| alloc::format!("{p}")).collect();
        alloc::format!("y ~ {}({})", self.family().stan_name(), args.join(", "))
    }
}

impl fmt::Display for ParametricDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_stan())
    }
}

/// `exponent * ln(base)` with the 0 * ln 0 = 0 convention.
fn power_term(exponent: f64, base: f64) -> f64 {
    if exponent == 0.0 {
        0.0
    } else {
        exponent * libm::log(base)
    }
}
