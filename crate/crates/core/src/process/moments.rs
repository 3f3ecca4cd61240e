use serde::{Deserialize, Serialize};

use super::{spectral_radius, ModelSpec, ThetaParams};
use crate::error::{Error, Result};
use crate::kernel::{LinkFunction, VarianceFamily};

const MAX_EXTRA_TERMS: usize = 100_000;

/// Conditional mean and variance `(μ, R(μ) + D_τ(μ)σ_ζ²)`.
pub fn conditional_moments(spec: &ModelSpec, mu: f64) -> Result<(f64, f64)> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("conditional mean must be nonnegative, got {mu}")));
    }
    Ok((mu, spec.conditional_variance(mu)))
}

/// Coefficients `ϖ₀..ϖ_{k_max}` of `ψ(z)/(1 - Σ(φⱼ+ψⱼ)zʲ)`.
pub fn psi_weights(theta: &ThetaParams, k_max: usize) -> Result<Vec<f64>> {
    let a = ar_coefficients(theta);
    let radius = spectral_radius(&a);
    if radius >= 1.0 - 1e-8 {
        return Err(Error::Divergence(format!(
            "AR polynomial has a root on or inside the unit circle (radius {radius})"
        )));
    }
    Ok(expand(theta, &a, k_max + 1))
}

fn ar_coefficients(theta: &ThetaParams) -> Vec<f64> {
    let p = theta.phi.len().max(theta.psi.len());
    (0..p)
        .map(|j| theta.phi.get(j).copied().unwrap_or(0.0) + theta.psi.get(j).copied().unwrap_or(0.0))
        .collect()
}

fn expand(theta: &ThetaParams, a: &[f64], len: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(len);
    for k in 0..len {
        if k == 0 {
            w.push(1.0);
            continue;
        }
        let mut v = -theta.psi.get(k - 1).copied().unwrap_or(0.0);
        for (j, aj) in a.iter().enumerate() {
            if j < k {
                v += aj * w[k - 1 - j];
            }
        }
        w.push(v);
    }
    w
}

/// Mean and autocorrelations of the linear regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalMoments {
    pub mean: f64,
    /// `ρ₀ = 1, ρ₁, …, ρ_{k_max}`.
    pub acf: Vec<f64>,
    /// Set for variance families other than the base family.
    pub experimental: bool,
}

/// Stationary mean and ACF when the mean equation stays in its linear regime.
pub fn theoretical_mean_acf(spec: &ModelSpec, k_max: usize) -> Result<TheoreticalMoments> {
    let offset = match spec.link {
        LinkFunction::Laplace { sigma } => sigma * std::f64::consts::LN_2,
        LinkFunction::Relu => 0.0,
        LinkFunction::Softplus { .. } => {
            return Err(Error::NotApplicable(
                "closed-form moments require the laplace or relu link".into(),
            ))
        }
    };
    let theta = &spec.theta;
    if !theta.in_theta1(spec.link.sigma()) || theta.c < 0.0 {
        return Err(Error::NotApplicable(
            "closed-form moments require nonnegative coefficients with sum below one and c >= 0"
                .into(),
        ));
    }
    let a = ar_coefficients(theta);
    let sum_a: f64 = a.iter().sum();
    let mean = (theta.c + offset) / (1.0 - sum_a);

    let p = a.len().max(1);
    let mut w = psi_weights(theta, k_max)?;
    // extend until the tail is negligible
    while w.len() < 2 * (k_max + 1) + MAX_EXTRA_TERMS {
        let tail_small = w[w.len().saturating_sub(p)..].iter().all(|v| v.abs() < 1e-12);
        if w.len() > k_max + 1 && tail_small {
            break;
        }
        let grow = (w.len() * 2).min(2 * (k_max + 1) + MAX_EXTRA_TERMS);
        w = expand(theta, &a, grow);
    }
    let denom: f64 = w.iter().map(|v| v * v).sum();
    let acf = (0..=k_max)
        .map(|k| {
            if k >= w.len() {
                return 0.0;
            }
            w.iter().zip(&w[k..]).map(|(x, y)| x * y).sum::<f64>() / denom
        })
        .collect();
    Ok(TheoreticalMoments {
        mean,
        acf,
        experimental: !matches!(spec.family, VarianceFamily::Base),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::tests::m1a;

    #[test]
    fn weights_of_arma11() {
        let t = ThetaParams::new(0.0, vec![0.4], vec![0.4]);
        let w = psi_weights(&t, 3).unwrap();
        assert_eq!(w.len(), 4);
        assert!((w[1] - 0.4).abs() < 1e-15);
        assert!((w[2] - 0.32).abs() < 1e-15);
        assert!((w[3] - 0.256).abs() < 1e-15);
        let bad = ThetaParams::new(0.0, vec![0.7], vec![0.4]);
        assert!(matches!(psi_weights(&bad, 3), Err(Error::Divergence(_))));
    }

    #[test]
    fn ar1_moments() {
        let mut spec = m1a();
        spec.theta.c = 0.0;
        let m = theoretical_mean_acf(&spec, 5).unwrap();
        assert!((m.mean - 1.386_294_4).abs() < 1e-7);
        for (k, r) in m.acf.iter().enumerate() {
            assert!((r - 0.5f64.powi(k as i32)).abs() < 1e-12);
        }
        assert!(!m.experimental);
    }

    #[test]
    fn gating() {
        let spec = m1a();
        assert!(matches!(theoretical_mean_acf(&spec, 3), Err(Error::NotApplicable(_))));
        let mut neg = m1a();
        neg.theta.c = 2.0;
        neg.theta.phi = vec![-0.5];
        assert!(matches!(theoretical_mean_acf(&neg, 3), Err(Error::NotApplicable(_))));
        let mut soft = m1a();
        soft.theta.c = 0.1;
        soft.link = LinkFunction::Softplus { sigma: 1.0 };
        assert!(theoretical_mean_acf(&soft, 3).is_err());
    }

    #[test]
    fn conditional_moments_domain() {
        let spec = m1a();
        let (m, v) = conditional_moments(&spec, 2.3).unwrap();
        assert_eq!(m, 2.3);
        assert!(v > 0.0);
        assert!(conditional_moments(&spec, -0.1).is_err());
    }
}
