//! The generative model: specification, validation, simulation and
//! linear-regime theoretical moments.

mod innovation;
mod moments;
mod simulate;
mod stationarity;

pub use innovation::InnovationLaw;
pub use moments::{conditional_moments, psi_weights, theoretical_mean_acf, TheoreticalMoments};
pub use simulate::{draw_conditional, mean_recursion_step, simulate, simulate_with_rng, SimulatedPath};
pub(crate) use simulate::draw_count;
pub use stationarity::{spectral_radius, validate_stationarity, CheckStatus, StationarityReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{LinkFunction, VarianceFamily};

/// Orders `(p₁, p₂)` of the observation and mean lags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelOrder {
    pub p1: usize,
    pub p2: usize,
}

impl ModelOrder {
    pub fn new(p1: usize, p2: usize) -> Result<Self> {
        if p1 == 0 {
            return Err(Error::Config("order p1 must be at least 1".into()));
        }
        Ok(ModelOrder { p1, p2 })
    }

    /// `p = max(p₁, p₂)`.
    pub fn p(&self) -> usize {
        self.p1.max(self.p2)
    }

    /// Number of regression parameters `1 + p₁ + p₂`.
    pub fn dim(&self) -> usize {
        1 + self.p1 + self.p2
    }
}

impl std::fmt::Display for ModelOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.p1, self.p2)
    }
}

/// Regression parameters `θ = (c, φ₁..φ_{p₁}, ψ₁..ψ_{p₂})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub c: f64,
    #[serde(default)]
    pub phi: Vec<f64>,
    #[serde(default)]
    pub psi: Vec<f64>,
}

impl ThetaParams {
    pub fn new(c: f64, phi: Vec<f64>, psi: Vec<f64>) -> Self {
        ThetaParams { c, phi, psi }
    }

    pub fn order(&self) -> ModelOrder {
        ModelOrder { p1: self.phi.len(), p2: self.psi.len() }
    }

    pub fn dim(&self) -> usize {
        1 + self.phi.len() + self.psi.len()
    }

    /// Flatten as `(c, φ…, ψ…)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.c);
        v.extend_from_slice(&self.phi);
        v.extend_from_slice(&self.psi);
        v
    }

    pub fn from_slice(order: ModelOrder, v: &[f64]) -> Self {
        debug_assert_eq!(v.len(), order.dim());
        ThetaParams {
            c: v[0],
            phi: v[1..1 + order.p1].to_vec(),
            psi: v[1 + order.p1..].to_vec(),
        }
    }

    /// `Σ|φᵢ| + Σ|ψⱼ|`.
    pub fn abs_sum(&self) -> f64 {
        self.phi.iter().chain(&self.psi).map(|a| a.abs()).sum()
    }

    /// Membership in the contraction space `Σ|φᵢ| + Σ|ψⱼ| < 1`.
    pub fn in_theta0(&self) -> bool {
        self.abs_sum() < 1.0
    }

    /// Membership in the nonnegative linear-mean space for a link of scale `sigma`.
    pub fn in_theta1(&self, sigma: f64) -> bool {
        let nonneg = self.phi.iter().chain(&self.psi).all(|&a| a >= 0.0);
        let sum: f64 = self.phi.iter().chain(&self.psi).sum();
        self.c > -sigma * std::f64::consts::LN_2 && nonneg && sum < 1.0
    }
}

/// Dispersion parameters `λ = (τ, σ_ζ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaParams {
    pub tau: f64,
    pub sigma_zeta_sq: f64,
}

impl LambdaParams {
    pub fn new(tau: f64, sigma_zeta_sq: f64) -> Result<Self> {
        let lambda = LambdaParams { tau, sigma_zeta_sq };
        lambda.validate()?;
        Ok(lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.sigma_zeta_sq >= 0.0) || !self.sigma_zeta_sq.is_finite() {
            return Err(Error::Config(format!(
                "sigma_zeta_sq must be finite and nonnegative, got {}",
                self.sigma_zeta_sq
            )));
        }
        Ok(())
    }
}

/// Full generative description of an RRC-GARCH process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub order: ModelOrder,
    #[serde(default)]
    pub link: LinkFunction,
    #[serde(default)]
    pub family: VarianceFamily,
    pub theta: ThetaParams,
    pub lambda: LambdaParams,
    pub innovation: InnovationLaw,
}

impl ModelSpec {
    /// Build and validate; custom pmfs are renormalized.
    pub fn new(
        order: ModelOrder,
        link: LinkFunction,
        family: VarianceFamily,
        theta: ThetaParams,
        lambda: LambdaParams,
        innovation: InnovationLaw,
    ) -> Result<Self> {
        ModelSpec { order, link, family, theta, lambda, innovation }.validated()
    }

    /// Check every invariant, returning the normalized spec.
    pub fn validated(mut self) -> Result<Self> {
        ModelOrder::new(self.order.p1, self.order.p2)?;
        if self.theta.phi.len() != self.order.p1 || self.theta.psi.len() != self.order.p2 {
            return Err(Error::Config(format!(
                "theta has {} phi and {} psi coefficients but order is {}",
                self.theta.phi.len(),
                self.theta.psi.len(),
                self.order
            )));
        }
        if !self.theta.to_vec().iter().all(|v| v.is_finite()) {
            return Err(Error::Config("theta contains non-finite values".into()));
        }
        self.link.validate()?;
        self.lambda.validate()?;
        self.innovation = self.innovation.normalized()?;
        let mean = self.innovation.mean();
        let var = self.innovation.variance();
        if (mean - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("innovation mean must be 1, got {mean}")));
        }
        if (var - self.lambda.sigma_zeta_sq).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "innovation variance {var} does not match sigma_zeta_sq {}",
                self.lambda.sigma_zeta_sq
            )));
        }
        Ok(self)
    }

    /// Conditional variance `R(μ) + D_τ(μ) σ_ζ²`.
    #[inline]
    pub fn conditional_variance(&self, mu: f64) -> f64 {
        crate::kernel::r_fun(mu)
            + self.family.shape(mu, self.lambda.tau) * self.lambda.sigma_zeta_sq
    }
}

/// Observed count series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSeries {
    pub values: Vec<u64>,
    pub name: String,
}

impl CountSeries {
    pub fn new(values: Vec<u64>, name: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("count series is empty".into()));
        }
        Ok(CountSeries { values, name: name.into() })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    /// Split into `(head, tail)` with `tail` holding the last `k` values.
    pub fn split_tail(&self, k: usize) -> Result<(CountSeries, Vec<u64>)> {
        if k >= self.len() {
            return Err(Error::Domain(format!(
                "holdout {k} must be smaller than the series length {}",
                self.len()
            )));
        }
        let cut = self.len() - k;
        Ok((
            CountSeries { values: self.values[..cut].to_vec(), name: self.name.clone() },
            self.values[cut..].to_vec(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn m1a() -> ModelSpec {
        ModelSpec::new(
            ModelOrder::new(1, 0).unwrap(),
            LinkFunction::Laplace { sigma: 1.0 },
            VarianceFamily::Base,
            ThetaParams::new(-0.4, vec![0.5], vec![]),
            LambdaParams::new(0.5, 0.5).unwrap(),
            InnovationLaw::Binomial2Half,
        )
        .unwrap()
    }

    #[test]
    fn spec_validation() {
        let spec = m1a();
        assert_eq!(spec.order.dim(), 2);
        let mut bad = spec.clone();
        bad.theta.phi.push(0.1);
        assert!(matches!(bad.validated(), Err(Error::Config(_))));
        let mut bad = spec.clone();
        bad.lambda.sigma_zeta_sq = 1.0;
        assert!(bad.validated().is_err());
        let mut bad = spec.clone();
        bad.lambda.tau = 0.0;
        assert!(bad.validated().is_err());
        assert!(ModelOrder::new(0, 1).is_err());
    }

    #[test]
    fn theta_spaces() {
        let t = ThetaParams::new(-0.4, vec![0.5], vec![]);
        assert!(t.in_theta0() && t.in_theta1(1.0));
        let t = ThetaParams::new(2.0, vec![-0.5], vec![]);
        assert!(t.in_theta0() && !t.in_theta1(1.0));
        let t = ThetaParams::new(-0.8, vec![0.5], vec![]);
        assert!(!t.in_theta1(1.0));
        let t = ThetaParams::new(0.0, vec![0.6], vec![0.5]);
        assert!(!t.in_theta0());
        let v = ThetaParams::new(1.0, vec![0.1, 0.2], vec![0.3]).to_vec();
        assert_eq!(
            ThetaParams::from_slice(ModelOrder::new(2, 1).unwrap(), &v),
            ThetaParams::new(1.0, vec![0.1, 0.2], vec![0.3])
        );
    }

    #[test]
    fn series_split() {
        let s = CountSeries::new(vec![1, 2, 3, 4], "x").unwrap();
        let (head, tail) = s.split_tail(1).unwrap();
        assert_eq!(head.values, vec![1, 2, 3]);
        assert_eq!(tail, vec![4]);
        assert!(s.split_tail(4).is_err());
        assert!(CountSeries::new(vec![], "e").is_err());
    }

    #[test]
    fn config_keys_roundtrip() {
        let text = r#"
            [order]
            p1 = 1
            p2 = 0
            [link]
            kind = "laplace"
            sigma = 1.0
            [family]
            kind = "mixture"
            r = 1
            [theta]
            c = -0.4
            phi = [0.5]
            psi = []
            [lambda]
            tau = 0.5
            sigma_zeta_sq = 0.5
            [innovation]
            kind = "binomial_2_half"
        "#;
        let spec: ModelSpec = toml::from_str(text).unwrap();
        let spec = spec.validated().unwrap();
        assert_eq!(spec.family, VarianceFamily::Mixture { r: 1 });
        let again: ModelSpec = toml::from_str(&toml::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again, spec);
    }
}
