//! Deterministic and stochastic primitives shared by the whole crate.
//!
//! Everything here is a pure function of its arguments. The random rounding
//! operators take an explicit uniform draw instead of owning a generator, so
//! a caller that controls the draws controls the outcome.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2: f64 = std::f64::consts::LN_2;

/// Greatest integer not exceeding `c`.
pub fn floor_delta(c: f64) -> Result<i64> {
    if !c.is_finite() {
        return Err(Error::Domain(format!("floor of non-finite value {c}")));
    }
    Ok(c.floor() as i64)
}

/// Minimal variance `(⌊c⌋ + 1 - c)(c - ⌊c⌋)` of an integer variable with mean `c`.
///
/// Lies in `[0, 1/4]` and vanishes exactly at integers. Non-finite input
/// propagates as NaN.
#[inline]
pub fn r_fun(c: f64) -> f64 {
    let frac = c - c.floor();
    (1.0 - frac) * frac
}

#[inline]
pub(crate) fn round1_raw(x: f64, u: f64) -> f64 {
    let base = x.floor();
    if u < 1.0 + base - x {
        base
    } else {
        base + 1.0
    }
}

#[inline]
pub(crate) fn round2_raw(x: f64, u: f64) -> f64 {
    let root = x.sqrt().floor();
    let upper = (root + 1.0) * (root + 1.0);
    let b = (upper - x) / (upper - root * root);
    if u < b {
        root
    } else {
        root + 1.0
    }
}

fn check_uniform(u: f64) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::Domain(format!("uniform draw {u} outside [0, 1]")))
    }
}

/// First-order random rounding: `⌊x⌋` or `⌊x⌋ + 1` with mean exactly `x`.
pub fn round1(x: f64, u: f64) -> Result<i64> {
    check_uniform(u)?;
    if !x.is_finite() {
        return Err(Error::Domain(format!("cannot round non-finite value {x}")));
    }
    Ok(round1_raw(x, u) as i64)
}

/// Second-order random rounding: `⌊√x⌋` or `⌊√x⌋ + 1` with second moment exactly `x`.
pub fn round2(x: f64, u: f64) -> Result<i64> {
    check_uniform(u)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "second-order rounding needs a finite nonnegative argument, got {x}"
        )));
    }
    Ok(round2_raw(x, u) as i64)
}

fn default_sigma() -> f64 {
    1.0
}

/// Link `M(·)` mapping the linear predictor to a nonnegative conditional mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkFunction {
    /// `max(u, 0)`.
    Relu,
    /// `-σ log(1 - F(u/σ))` with `F` the standard Laplace CDF.
    Laplace {
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    /// `σ log(1 + exp(u/σ))`.
    Softplus {
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
}

impl Default for LinkFunction {
    fn default() -> Self {
        LinkFunction::Laplace { sigma: 1.0 }
    }
}

impl LinkFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LinkFunction::Relu => Ok(()),
            LinkFunction::Laplace { sigma } | LinkFunction::Softplus { sigma } => {
                if sigma > 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config(format!("link scale must be positive, got {sigma}")))
                }
            }
        }
    }

    /// Scale `σ` (zero for ReLU).
    pub fn sigma(&self) -> f64 {
        match *self {
            LinkFunction::Relu => 0.0,
            LinkFunction::Laplace { sigma } | LinkFunction::Softplus { sigma } => sigma,
        }
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self, LinkFunction::Relu)
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            LinkFunction::Relu => u.max(0.0),
            LinkFunction::Laplace { sigma } => {
                if u <= 0.0 {
                    // -σ log(1 - e/2) through log1p keeps the tail ~ e/2 accurate
                    -sigma * (-0.5 * (u / sigma).exp()).ln_1p()
                } else {
                    sigma * LN_2 + u
                }
            }
            LinkFunction::Softplus { sigma } => {
                u.max(0.0) + sigma * (-(u.abs() / sigma)).exp().ln_1p()
            }
        }
    }

    /// Derivative of [`eval`](Self::eval). ReLU uses 0 at the kink.
    #[inline]
    pub fn deriv(&self, u: f64) -> f64 {
        match *self {
            LinkFunction::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            LinkFunction::Laplace { sigma } => {
                if u <= 0.0 {
                    let e = 0.5 * (u / sigma).exp();
                    e / (1.0 - e)
                } else {
                    1.0
                }
            }
            LinkFunction::Softplus { sigma } => {
                let z = u / sigma;
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Second derivative, taken from the left at the Laplace and ReLU kinks.
    #[inline]
    pub(crate) fn deriv2(&self, u: f64) -> f64 {
        match *self {
            LinkFunction::Relu => 0.0,
            LinkFunction::Laplace { sigma } => {
                if u <= 0.0 {
                    let e = 0.5 * (u / sigma).exp();
                    e / ((1.0 - e) * (1.0 - e) * sigma)
                } else {
                    0.0
                }
            }
            LinkFunction::Softplus { sigma } => {
                let s = self.deriv(u);
                s * (1.0 - s) / sigma
            }
        }
    }

    /// Right inverse of [`eval`](Self::eval) on `(0, ∞)`; used for start values.
    pub(crate) fn inverse(&self, y: f64) -> f64 {
        let y = y.max(1e-8);
        match *self {
            LinkFunction::Relu => y,
            LinkFunction::Laplace { sigma } => {
                if y >= sigma * LN_2 {
                    y - sigma * LN_2
                } else {
                    sigma * (2.0 * -(-y / sigma).exp_m1()).ln()
                }
            }
            LinkFunction::Softplus { sigma } => y + sigma * (-(-y / sigma).exp_m1()).ln(),
        }
    }
}

/// Rule for the scaling term `ν_t ∈ [0, 1]` of the extended family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuRule {
    /// `ν_t = τ`.
    Tau,
    /// `ν_t = R(μ_t)`.
    ROfMu,
}

impl NuRule {
    #[inline]
    pub fn resolve(&self, mu: f64, tau: f64) -> f64 {
        match self {
            NuRule::Tau => tau,
            NuRule::ROfMu => r_fun(mu),
        }
    }
}

/// Variance-shape family `D_τ` in `var(X_t | F_{t-1}) = R(μ_t) + D_τ(μ_t) σ_ζ²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceFamily {
    #[default]
    Base,
    Extended {
        nu: NuRule,
    },
    Power,
    Mixture {
        r: u32,
    },
}

impl VarianceFamily {
    /// `D_τ(μ)` with `ν_t` resolved from the family's rule.
    #[inline]
    pub fn shape(&self, mu: f64, tau: f64) -> f64 {
        let v = v_tau_raw(mu, tau);
        match *self {
            VarianceFamily::Base => v,
            VarianceFamily::Extended { nu } => nu.resolve(mu, tau) * v,
            VarianceFamily::Power => mu.powf(2.0 * tau).min(v),
            VarianceFamily::Mixture { r } => {
                let w = r as f64 / (1.0 + r as f64);
                w * mu + (1.0 - w) * mu.powf(2.0 * tau).min(v)
            }
        }
    }

    /// `∂D_τ(μ)/∂τ`, taking the active branch at `min` kinks.
    pub fn shape_dtau(&self, mu: f64, tau: f64) -> f64 {
        let v = v_tau_raw(mu, tau);
        let dv = v_tau_dtau(mu, tau);
        let dmin = || {
            let p = mu.powf(2.0 * tau);
            if p < v {
                if mu > 0.0 {
                    2.0 * mu.ln() * p
                } else {
                    0.0
                }
            } else {
                dv
            }
        };
        match *self {
            VarianceFamily::Base => dv,
            VarianceFamily::Extended { nu: NuRule::Tau } => v + tau * dv,
            VarianceFamily::Extended { nu: NuRule::ROfMu } => r_fun(mu) * dv,
            VarianceFamily::Power => dmin(),
            VarianceFamily::Mixture { r } => dmin() / (1.0 + r as f64),
        }
    }
}

#[inline]
pub(crate) fn v_tau_raw(mu: f64, tau: f64) -> f64 {
    let lo = mu.floor();
    let hi = lo + 1.0;
    let frac = mu - lo;
    let lo_pow = if lo > 0.0 { lo.powf(2.0 * tau) } else { 0.0 };
    lo_pow * (1.0 - frac) + hi.powf(2.0 * tau) * frac
}

fn v_tau_dtau(mu: f64, tau: f64) -> f64 {
    let lo = mu.floor();
    let hi = lo + 1.0;
    let frac = mu - lo;
    let lo_term = if lo > 1.0 {
        2.0 * lo.ln() * lo.powf(2.0 * tau) * (1.0 - frac)
    } else {
        0.0
    };
    lo_term + 2.0 * hi.ln() * hi.powf(2.0 * tau) * frac
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("tau must lie in (0, 1], got {tau}")))
    }
}

/// Piecewise-linear interpolant of `x^{2τ}` at the integers, `E[⊙₁(μ,U)^{2τ}]`.
pub fn v_tau(mu: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("V_tau needs a nonnegative mean, got {mu}")));
    }
    Ok(v_tau_raw(mu, tau))
}

/// Family shape `D_τ(μ)` with an explicitly supplied `ν` for the extended family.
pub fn d_tau(family: &VarianceFamily, mu: f64, tau: f64, nu: Option<f64>) -> Result<f64> {
    let v = v_tau(mu, tau)?;
    match (family, nu) {
        (VarianceFamily::Extended { .. }, None) => Err(Error::Config(
            "extended family requires the scaling term nu".into(),
        )),
        (VarianceFamily::Extended { .. }, Some(nu)) => {
            if (0.0..=1.0).contains(&nu) {
                Ok(nu * v)
            } else {
                Err(Error::Domain(format!("nu must lie in [0, 1], got {nu}")))
            }
        }
        (VarianceFamily::Base, _) => Ok(v),
        (f, _) => Ok(f.shape(mu, tau)),
    }
}
