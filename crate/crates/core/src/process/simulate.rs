use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CountSeries, ModelSpec};
use crate::error::{Error, Result};
use crate::kernel::{r_fun, round1_raw, round2_raw, v_tau_raw, NuRule, VarianceFamily};
use crate::parallel::stream_rng;

/// A simulated path with its conditional mean and variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPath {
    pub counts: Vec<u64>,
    pub mu: Vec<f64>,
    pub variance: Vec<f64>,
}

impl SimulatedPath {
    pub fn into_series(self, name: impl Into<String>) -> Result<CountSeries> {
        CountSeries::new(self.counts, name)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// One step of the mean recursion: returns `(ξ_t, μ_t)`.
///
/// `lagged_x[i]` is `X_{t-1-i}` and `lagged_mu[j]` is `μ_{t-1-j}`.
pub fn mean_recursion_step(
    spec: &ModelSpec,
    lagged_x: &[f64],
    lagged_mu: &[f64],
) -> Result<(f64, f64)> {
    if lagged_x.len() != spec.order.p1 || lagged_mu.len() != spec.order.p2 {
        return Err(Error::Domain(format!(
            "expected {} observation lags and {} mean lags, got {} and {}",
            spec.order.p1,
            spec.order.p2,
            lagged_x.len(),
            lagged_mu.len()
        )));
    }
    let xi = spec.theta.c
        + dot(&spec.theta.phi, lagged_x)
        + dot(&spec.theta.psi, lagged_mu);
    Ok((xi, spec.link.eval(xi)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scale `κ_t` of the second rounding for the chosen family, given `A = ⊙₁(μ, U)`.
#[inline]
pub(crate) fn kappa(family: &VarianceFamily, mu: f64, a: f64, tau: f64) -> f64 {
    let a_pow = if a > 0.0 { a.powf(2.0 * tau) } else { 0.0 };
    let ratio = || {
        let v = v_tau_raw(mu, tau);
        if v > 0.0 {
            (mu.powf(2.0 * tau) / v).min(1.0)
        } else {
            1.0
        }
    };
    let k = match *family {
        VarianceFamily::Base => a_pow,
        VarianceFamily::Extended { nu: NuRule::Tau } => tau * a_pow,
        VarianceFamily::Extended { nu: NuRule::ROfMu } => r_fun(mu) * a_pow,
        VarianceFamily::Power => ratio() * a_pow,
        VarianceFamily::Mixture { r } => {
            let w = r as f64 / (1.0 + r as f64);
            w * a + (1.0 - w) * ratio() * a_pow
        }
    };
    // mathematically κ ≤ A²; clamp rounding noise so X stays nonnegative
    k.min(a * a)
}

/// Draw one count given the conditional mean and three uniforms.
#[inline]
pub(crate) fn draw_count(spec: &ModelSpec, mu: f64, u1: f64, u2: f64, u3: f64) -> f64 {
    let a = round1_raw(mu, u1);
    let k = kappa(&spec.family, mu, a, spec.lambda.tau);
    let zeta = spec.innovation.sample(u3);
    let x = a + round2_raw(k, u2) * (zeta - 1.0);
    assert!(x >= 0.0, "simulated count {x} is negative (mu={mu}, kappa={k})");
    x
}

/// One draw of `X_t` given `μ_t = mu`, consuming three uniforms from `rng`.
pub fn draw_conditional<R: Rng + ?Sized>(spec: &ModelSpec, mu: f64, rng: &mut R) -> Result<u64> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("conditional mean must be nonnegative, got {mu}")));
    }
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    Ok(draw_count(spec, mu, u1, u2, u3) as u64)
}

/// Simulate `n` observations after discarding `burn_in`, from stream `(seed, 0)`.
pub fn simulate(spec: &ModelSpec, n: usize, burn_in: usize, seed: u64) -> Result<SimulatedPath> {
    simulate_with_rng(spec, n, burn_in, &mut stream_rng(seed, 0))
}

/// Simulate from a caller-owned generator. Presample values are zero.
pub fn simulate_with_rng<R: Rng + ?Sized>(
    spec: &ModelSpec,
    n: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<SimulatedPath> {
    let total = n + burn_in;
    let p1 = spec.order.p1;
    let p2 = spec.order.p2;
    let theta = &spec.theta;
    let mut xs = Vec::with_capacity(total);
    let mut mus = Vec::with_capacity(total);
    for t in 0..total {
        let mut xi = theta.c;
        for i in 0..p1.min(t) {
            xi += theta.phi[i] * xs[t - 1 - i];
        }
        for j in 0..p2.min(t) {
            xi += theta.psi[j] * mus[t - 1 - j];
        }
        let mu = spec.link.eval(xi);
        if !mu.is_finite() {
            return Err(Error::Divergence(format!("conditional mean became {mu} at step {t}")));
        }
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        xs.push(draw_count(spec, mu, u1, u2, u3));
        mus.push(mu);
    }
    let counts = xs[burn_in..].iter().map(|&x| x as u64).collect();
    let mu = mus[burn_in..].to_vec();
    let variance = mu.iter().map(|&m| spec.conditional_variance(m)).collect();
    Ok(SimulatedPath { counts, mu, variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::LinkFunction;
    use crate::process::tests::m1a;

    #[test]
    fn recursion_step_examples() {
        let spec = m1a();
        let (xi, mu) = mean_recursion_step(&spec, &[2.0], &[]).unwrap();
        assert!((xi - 0.6).abs() < 1e-15);
        assert!((mu - 1.293_147_18).abs() < 1e-8);
        let (_, mu) = mean_recursion_step(&spec, &[0.0], &[]).unwrap();
        assert!((mu - 0.408_208_90).abs() < 1e-8);
        assert!(mean_recursion_step(&spec, &[1.0, 2.0], &[]).is_err());
    }

    #[test]
    fn deterministic_and_nonnegative() {
        let spec = m1a();
        let a = simulate(&spec, 300, 50, 11).unwrap();
        let b = simulate(&spec, 300, 50, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 300);
        let c = simulate(&spec, 300, 50, 12).unwrap();
        assert_ne!(a.counts, c.counts);
        assert!(a.mu.iter().all(|&m| m > 0.0));
        assert!(simulate(&spec, 0, 10, 1).unwrap().is_empty());
    }

    #[test]
    fn small_mean_gives_binary_counts() {
        let mut spec = m1a();
        spec.link = LinkFunction::Relu;
        spec.theta.c = 0.05;
        spec.theta.phi = vec![0.0];
        let path = simulate(&spec, 20_000, 0, 5).unwrap();
        let binary = path.counts.iter().filter(|&&x| x <= 1).count() as f64 / 20_000.0;
        assert!(binary > 0.95, "{binary}");
    }

    #[test]
    fn kappa_bounded_by_square() {
        for fam in [
            VarianceFamily::Base,
            VarianceFamily::Power,
            VarianceFamily::Mixture { r: 1 },
            VarianceFamily::Extended { nu: NuRule::Tau },
            VarianceFamily::Extended { nu: NuRule::ROfMu },
        ] {
            for a in 0..20 {
                let a = a as f64;
                for &tau in &[0.1, 0.5, 1.0] {
                    let k = kappa(&fam, a + 0.3, a, tau);
                    assert!(k >= 0.0 && k <= a * a + 1e-12);
                }
            }
        }
    }
}
