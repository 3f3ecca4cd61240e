//! Residual diagnostics: Pearson residuals, MAR, MSPR and sample ACF/PACF.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{FitResult, VARIANCE_FLOOR};
use crate::kernel::VarianceFamily;

/// `(X_t − μ_t) / √max(v_t, 10⁻⁸)` from explicit paths.
pub fn pearson_residuals_from_paths(x: &[f64], mu: &[f64], var: &[f64]) -> Result<Vec<f64>> {
    if x.len() != mu.len() || x.len() != var.len() {
        return Err(Error::Domain(format!(
            "path lengths differ: {} observations, {} means, {} variances",
            x.len(),
            mu.len(),
            var.len()
        )));
    }
    Ok(x.iter()
        .zip(mu)
        .zip(var)
        .map(|((x, m), v)| (x - m) / v.max(VARIANCE_FLOOR).sqrt())
        .collect())
}

/// Standardized Pearson residuals of a fit.
pub fn pearson_residuals(x: &[f64], fit: &FitResult) -> Result<Vec<f64>> {
    pearson_residuals_from_paths(x, &fit.fitted_mu, &fit.fitted_var)
}

/// Mean absolute residual `(1/n) Σ|X_t − μ_t|`.
pub fn mar(x: &[f64], mu: &[f64]) -> Result<f64> {
    if x.len() != mu.len() || x.is_empty() {
        return Err(Error::Domain("MAR needs matching nonempty paths".into()));
    }
    Ok(x.iter().zip(mu).map(|(x, m)| (x - m).abs()).sum::<f64>() / x.len() as f64)
}

/// Mean squared Pearson residual.
pub fn mspr(residuals: &[f64]) -> Result<f64> {
    if residuals.is_empty() || residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain("MSPR needs finite, nonempty residuals".into()));
    }
    Ok(residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64)
}

/// Sample mean and standard deviation (`n − 1` denominator).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let s = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt();
    (m, s)
}

/// Biased sample autocorrelations `ρ₀ = 1, …, ρ_K`; `None` for zero variance.
pub(crate) fn acf_raw(x: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let c0: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    if !(c0 > 0.0) {
        return None;
    }
    Some(
        (0..=max_lag)
            .map(|k| {
                if k >= n {
                    return 0.0;
                }
                x[..n - k].iter().zip(&x[k..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / c0
            })
            .collect(),
    )
}

/// Partial autocorrelations at lags `1..K` and the order-`K` autoregression
/// coefficients from `ρ₀..ρ_K`.
pub(crate) fn durbin_levinson(acf: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k_max = acf.len().saturating_sub(1);
    let mut pacf = Vec::with_capacity(k_max);
    let mut phi: Vec<f64> = Vec::new();
    for k in 1..=k_max {
        let num = acf[k] - (1..k).map(|j| phi[j - 1] * acf[k - j]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi[j - 1] * acf[j]).sum::<f64>();
        let kk = if den.abs() > 1e-300 { num / den } else { 0.0 };
        let mut next = vec![0.0; k];
        for j in 1..k {
            next[j - 1] = phi[j - 1] - kk * phi[k - j - 1];
        }
        next[k - 1] = kk;
        phi = next;
        pacf.push(kk);
    }
    (pacf, phi)
}

/// Sample ACF and PACF at lags `1..K` with the `±2/√n` white-noise band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfTable {
    pub acf: Vec<f64>,
    pub pacf: Vec<f64>,
    pub band: f64,
}

pub fn sample_acf_pacf(x: &[f64], max_lag: usize) -> Result<AcfTable> {
    if x.len() <= max_lag + 1 {
        return Err(Error::Domain(format!(
            "series of length {} is too short for {max_lag} lags",
            x.len()
        )));
    }
    let acf = acf_raw(x, max_lag)
        .ok_or_else(|| Error::Degenerate("series has zero variance".into()))?;
    let (pacf, _) = durbin_levinson(&acf);
    Ok(AcfTable {
        acf: acf[1..].to_vec(),
        pacf,
        band: 2.0 / (x.len() as f64).sqrt(),
    })
}

/// `max_{1≤k≤K} |ρ̂(k)|`, or `None` for a constant or too-short input.
pub fn max_abs_acf(v: &[f64], max_lag: usize) -> Option<f64> {
    if v.len() <= max_lag + 1 {
        return None;
    }
    acf_raw(v, max_lag).map(|a| a[1..].iter().fold(0.0, |m, r| f64::max(m, r.abs())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub residuals: Vec<f64>,
    pub mean_r: f64,
    pub sd_r: f64,
    pub max_abs_acf: Option<f64>,
    pub acf_max_lag: usize,
    pub mar: f64,
    pub mspr: f64,
    /// Set when the standardization uses a family other than the base family.
    pub generalized_variance: bool,
}

/// Residual diagnostics of a fit, with the residual ACF scanned over lags `1..=max_lag`.
pub fn diagnose(x: &[f64], fit: &FitResult, max_lag: usize) -> Result<DiagnosticsReport> {
    let residuals = pearson_residuals(x, fit)?;
    let (mean_r, sd_r) = mean_sd(&residuals);
    Ok(DiagnosticsReport {
        max_abs_acf: max_abs_acf(&residuals, max_lag),
        acf_max_lag: max_lag,
        mar: mar(x, &fit.fitted_mu)?,
        mspr: mspr(&residuals)?,
        mean_r,
        sd_r,
        residuals,
        generalized_variance: !matches!(fit.family, VarianceFamily::Base),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn simple_values() {
        assert_eq!(mar(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mar(&[2.0, 5.0], &[2.0, 5.0]).unwrap(), 0.0);
        assert_eq!(mspr(&[1.0, -1.0, 1.0]).unwrap(), 1.0);
        let r = pearson_residuals_from_paths(&[2.0, 3.0], &[2.0, 3.0], &[1.0, 0.0]).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
        assert!(mar(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mar_translation() {
        let x = [1.0, 4.0, 2.0, 7.0];
        let mu = [1.5, 3.0, 2.5, 6.0];
        let xs: Vec<f64> = x.iter().map(|v| v + 10.0).collect();
        let ms: Vec<f64> = mu.iter().map(|v| v + 10.0).collect();
        assert!((mar(&x, &mu).unwrap() - mar(&xs, &ms).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn white_noise_acf() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let t = sample_acf_pacf(&x, 20).unwrap();
        assert!(t.acf.iter().all(|r| r.abs() < 0.03));
        assert_eq!(t.pacf.len(), 20);
    }

    #[test]
    fn trend_and_degenerate() {
        let x: Vec<f64> = (0..200).map(|t| t as f64).collect();
        assert!(sample_acf_pacf(&x, 5).unwrap().acf[0] > 0.95);
        assert!(matches!(sample_acf_pacf(&[2.0; 50], 5), Err(Error::Degenerate(_))));
        assert!(sample_acf_pacf(&[1.0, 2.0], 5).is_err());
    }

    #[test]
    fn durbin_levinson_ar1() {
        let acf: Vec<f64> = (0..6).map(|k| 0.6f64.powi(k)).collect();
        let (pacf, phi) = durbin_levinson(&acf);
        assert!((pacf[0] - 0.6).abs() < 1e-14);
        for p in &pacf[1..] {
            assert!(p.abs() < 1e-14);
        }
        assert!((phi[0] - 0.6).abs() < 1e-14);
    }

    #[test]
    fn durbin_levinson_ar2() {
        // AR(2) with a1 = 0.5, a2 = 0.3: ρ1 = a1/(1-a2), ρk = a1ρ(k-1) + a2ρ(k-2)
        let mut acf = vec![1.0, 0.5 / 0.7];
        for k in 2..5 {
            let v = 0.5 * acf[k - 1] + 0.3 * acf[k - 2];
            acf.push(v);
        }
        let (pacf, phi) = durbin_levinson(&acf[..3]);
        assert!((phi[0] - 0.5).abs() < 1e-13 && (phi[1] - 0.3).abs() < 1e-13);
        assert!((pacf[1] - 0.3).abs() < 1e-13);
    }

    #[test]
    fn sd_uses_n_minus_one() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }
}
