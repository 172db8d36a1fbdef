//! Built-in distribution library.
//!
//! Each entry carries its ordered parameter specification (names and
//! domains), the support of its value, and a closed-form log-density with
//! partial derivatives with respect to the value and every parameter.

use std::f64::consts::{LN_2, PI};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Admissible values for a distribution parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamDomain {
    Real,
    Positive,
    UnitInterval,
    NonnegInt,
    /// One end of a `(lower, upper)` pair with `lower < upper`.
    OrderedPair,
}

impl ParamDomain {
    /// Whether a known constant is admissible for this domain.
    pub fn admits(self, v: f64) -> bool {
        match self {
            ParamDomain::Real | ParamDomain::OrderedPair => v.is_finite(),
            ParamDomain::Positive => v.is_finite() && v > 0.0,
            ParamDomain::UnitInterval => (0.0..=1.0).contains(&v),
            ParamDomain::NonnegInt => v.is_finite() && v >= 0.0 && v.fract() == 0.0,
        }
    }
}

/// Support of the distribution's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    RealLine,
    Positive,
    UnitInterval,
    NonnegInt,
    /// `[lower, upper]` given by the first two parameters.
    Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Normal,
    HalfNormal,
    HalfCauchy,
    Cauchy,
    Exponential,
    Uniform,
    Beta,
    Gamma,
    LogNormal,
    StudentT,
    Binomial,
    Poisson,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub domain: ParamDomain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    pub name: &'static str,
    pub family: Family,
    pub params: Vec<ParamSpec>,
    pub support: Support,
    pub continuous: bool,
}

impl DistributionSpec {
    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn log_density(&self, x: f64, params: &[f64]) -> Density {
        log_density(self.family, x, params)
    }
}

/// The library of distributions a program may reference, keyed by name.
#[derive(Debug, Clone)]
pub struct Registry {
    specs: IndexMap<&'static str, DistributionSpec>,
}

impl Registry {
    pub fn get(&self, name: &str) -> Option<&DistributionSpec> {
        self.specs.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.specs.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DistributionSpec> {
        self.specs.values()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

impl Default for Registry {
    fn default() -> Self {
        register_builtin_distributions()
    }
}

pub fn register_builtin_distributions() -> Registry {
    use Family::*;
    use ParamDomain as D;

    fn p(name: &'static str, domain: ParamDomain) -> ParamSpec {
        ParamSpec { name, domain }
    }
    let table: Vec<(&'static str, Family, Vec<ParamSpec>, Support, bool)> = vec![
        ("Normal", Normal, vec![p("mu", D::Real), p("sigma", D::Positive)], Support::RealLine, true),
        ("HalfNormal", HalfNormal, vec![p("sigma", D::Positive)], Support::Positive, true),
        ("HalfCauchy", HalfCauchy, vec![p("beta", D::Positive)], Support::Positive, true),
        ("Cauchy", Cauchy, vec![p("mu", D::Real), p("gamma", D::Positive)], Support::RealLine, true),
        ("Exponential", Exponential, vec![p("rate", D::Positive)], Support::Positive, true),
        ("Uniform", Uniform, vec![p("lower", D::OrderedPair), p("upper", D::OrderedPair)], Support::Interval, true),
        ("Beta", Beta, vec![p("alpha", D::Positive), p("beta", D::Positive)], Support::UnitInterval, true),
        ("Gamma", Gamma, vec![p("alpha", D::Positive), p("rate", D::Positive)], Support::Positive, true),
        ("LogNormal", LogNormal, vec![p("mu", D::Real), p("sigma", D::Positive)], Support::Positive, true),
        (
            "StudentT",
            StudentT,
            vec![p("nu", D::Positive), p("mu", D::Real), p("sigma", D::Positive)],
            Support::RealLine,
            true,
        ),
        ("Binomial", Binomial, vec![p("n", D::NonnegInt), p("p", D::UnitInterval)], Support::NonnegInt, false),
        ("Poisson", Poisson, vec![p("rate", D::Positive)], Support::NonnegInt, false),
        ("Bernoulli", Bernoulli, vec![p("p", D::UnitInterval)], Support::NonnegInt, false),
    ];
    let specs = table
        .into_iter()
        .map(|(name, family, params, support, continuous)| {
            (name, DistributionSpec { name, family, params, support, continuous })
        })
        .collect();
    Registry { specs }
}

/// Log-density and its partials. `dp[j]` is the partial for parameter `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density {
    pub logp: f64,
    pub dx: f64,
    pub dp: [f64; 3],
}

impl Density {
    const OUTSIDE: Density = Density { logp: f64::NEG_INFINITY, dx: 0.0, dp: [0.0; 3] };

    fn new(logp: f64, dx: f64, dp: [f64; 3]) -> Self {
        Density { logp, dx, dp }
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn is_count(k: f64) -> bool {
    k >= 0.0 && k.fract() == 0.0 && k.is_finite()
}

/// Whether `x` lies in the support given the evaluated parameters.
pub fn in_support(support: Support, x: f64, params: &[f64]) -> bool {
    match support {
        Support::RealLine => x.is_finite(),
        Support::Positive => x.is_finite() && x > 0.0,
        Support::UnitInterval => x > 0.0 && x < 1.0,
        Support::NonnegInt => is_count(x),
        Support::Interval => x > params[0] && x < params[1],
    }
}

pub fn log_density(family: Family, x: f64, p: &[f64]) -> Density {
    use Family::*;
    if !x.is_finite() || p.iter().any(|v| !v.is_finite()) {
        return Density::OUTSIDE;
    }
    match family {
        Normal => {
            let (mu, sigma) = (p[0], p[1]);
            if sigma <= 0.0 {
                return Density::OUTSIDE;
            }
            let z = (x - mu) / sigma;
            Density::new(-LN_SQRT_2PI - sigma.ln() - 0.5 * z * z, -z / sigma, [z / sigma, (z * z - 1.0) / sigma, 0.0])
        }
        HalfNormal => {
            let sigma = p[0];
            if sigma <= 0.0 || x < 0.0 {
                return Density::OUTSIDE;
            }
            let z = x / sigma;
            Density::new(LN_2 - LN_SQRT_2PI - sigma.ln() - 0.5 * z * z, -z / sigma, [(z * z - 1.0) / sigma, 0.0, 0.0])
        }
        HalfCauchy => {
            let beta = p[0];
            if beta <= 0.0 || x < 0.0 {
                return Density::OUTSIDE;
            }
            let d = beta * beta + x * x;
            Density::new(
                LN_2 - PI.ln() - beta.ln() - (x / beta).powi(2).ln_1p(),
                -2.0 * x / d,
                [-1.0 / beta + 2.0 * x * x / (beta * d), 0.0, 0.0],
            )
        }
        Cauchy => {
            let (mu, gamma) = (p[0], p[1]);
            if gamma <= 0.0 {
                return Density::OUTSIDE;
            }
            let r = x - mu;
            let d = gamma * gamma + r * r;
            let dx = -2.0 * r / d;
            Density::new(
                -PI.ln() - gamma.ln() - (r / gamma).powi(2).ln_1p(),
                dx,
                [-dx, -1.0 / gamma + 2.0 * r * r / (gamma * d), 0.0],
            )
        }
        Exponential => {
            let rate = p[0];
            if rate <= 0.0 || x < 0.0 {
                return Density::OUTSIDE;
            }
            Density::new(rate.ln() - rate * x, -rate, [1.0 / rate - x, 0.0, 0.0])
        }
        Uniform => {
            let (lo, hi) = (p[0], p[1]);
            if hi <= lo || x < lo || x > hi {
                return Density::OUTSIDE;
            }
            let w = hi - lo;
            Density::new(-w.ln(), 0.0, [1.0 / w, -1.0 / w, 0.0])
        }
        Beta => {
            let (a, b) = (p[0], p[1]);
            if a <= 0.0 || b <= 0.0 || x <= 0.0 || x >= 1.0 {
                return Density::OUTSIDE;
            }
            let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
            let dab = digamma(a + b);
            Density::new(
                (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta,
                (a - 1.0) / x - (b - 1.0) / (1.0 - x),
                [x.ln() - digamma(a) + dab, (-x).ln_1p() - digamma(b) + dab, 0.0],
            )
        }
        Gamma => {
            let (a, rate) = (p[0], p[1]);
            if a <= 0.0 || rate <= 0.0 || x <= 0.0 {
                return Density::OUTSIDE;
            }
            Density::new(
                a * rate.ln() - ln_gamma(a) + (a - 1.0) * x.ln() - rate * x,
                (a - 1.0) / x - rate,
                [rate.ln() - digamma(a) + x.ln(), a / rate - x, 0.0],
            )
        }
        LogNormal => {
            let (mu, sigma) = (p[0], p[1]);
            if sigma <= 0.0 || x <= 0.0 {
                return Density::OUTSIDE;
            }
            let lx = x.ln();
            let z = (lx - mu) / sigma;
            Density::new(
                -lx - LN_SQRT_2PI - sigma.ln() - 0.5 * z * z,
                -(1.0 + z / sigma) / x,
                [z / sigma, (z * z - 1.0) / sigma, 0.0],
            )
        }
        StudentT => {
            let (nu, mu, sigma) = (p[0], p[1], p[2]);
            if nu <= 0.0 || sigma <= 0.0 {
                return Density::OUTSIDE;
            }
            let r = x - mu;
            let z2 = (r / sigma).powi(2);
            let q = (z2 / nu).ln_1p();
            let half = 0.5 * (nu + 1.0);
            let logp = ln_gamma(half) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln() - sigma.ln() - half * q;
            let denom = nu * sigma * sigma + r * r;
            let dx = -(nu + 1.0) * r / denom;
            let dsigma = -1.0 / sigma + (nu + 1.0) * r * r / (sigma * denom);
            let dnu =
                0.5 * digamma(half) - 0.5 * digamma(0.5 * nu) - 0.5 / nu - 0.5 * q + half * z2 / (nu * nu + nu * z2);
            Density::new(logp, dx, [dnu, -dx, dsigma])
        }
        Binomial => {
            let (n, prob) = (p[0], p[1]);
            if !is_count(n) || !is_count(x) || x > n || !(0.0..=1.0).contains(&prob) {
                return Density::OUTSIDE;
            }
            let ln_choose = ln_gamma(n + 1.0) - ln_gamma(x + 1.0) - ln_gamma(n - x + 1.0);
            let logp = ln_choose + xlogy(x, prob) + xlogy(n - x, 1.0 - prob);
            if logp.is_nan() || logp == f64::NEG_INFINITY {
                return Density::OUTSIDE;
            }
            Density::new(logp, 0.0, [0.0, x / prob - (n - x) / (1.0 - prob), 0.0])
        }
        Poisson => {
            let rate = p[0];
            if rate <= 0.0 || !is_count(x) {
                return Density::OUTSIDE;
            }
            Density::new(x * rate.ln() - rate - ln_gamma(x + 1.0), 0.0, [x / rate - 1.0, 0.0, 0.0])
        }
        Bernoulli => {
            let prob = p[0];
            if !(x == 0.0 || x == 1.0) || !(0.0..=1.0).contains(&prob) {
                return Density::OUTSIDE;
            }
            let logp = xlogy(x, prob) + xlogy(1.0 - x, 1.0 - prob);
            if logp == f64::NEG_INFINITY {
                return Density::OUTSIDE;
            }
            Density::new(logp, 0.0, [x / prob - (1.0 - x) / (1.0 - prob), 0.0, 0.0])
        }
    }
}
