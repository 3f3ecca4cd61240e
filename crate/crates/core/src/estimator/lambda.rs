use serde::{Deserialize, Serialize};

use super::covariance::{condition_number, sym_inverse, Matrix};
use crate::error::{Error, Result};
use crate::kernel::{r_fun, NuRule, VarianceFamily};
use crate::process::LambdaParams;

/// Profile estimate of `λ = (τ, σ_ζ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaFit {
    pub lambda: LambdaParams,
    /// False when every fitted mean is at most one and `D_τ` does not depend on `τ`.
    pub tau_identifiable: bool,
    pub objective: f64,
}

fn excess(x: &[f64], mu: &[f64]) -> Vec<f64> {
    x.iter().zip(mu).map(|(x, m)| (x - m) * (x - m) - r_fun(*m)).collect()
}

/// Closed-form `σ²(τ)` clipped at zero, and the profile objective.
fn profile(z: &[f64], mu: &[f64], family: &VarianceFamily, tau: f64) -> (f64, f64) {
    let mut sdz = 0.0;
    let mut sdd = 0.0;
    for (zt, m) in z.iter().zip(mu) {
        let d = family.shape(*m, tau);
        sdz += d * zt;
        sdd += d * d;
    }
    let s2 = if sdd > 0.0 { (sdz / sdd).max(0.0) } else { 0.0 };
    let q = z
        .iter()
        .zip(mu)
        .map(|(zt, m)| {
            let r = zt - s2 * family.shape(*m, tau);
            r * r
        })
        .sum::<f64>()
        / z.len() as f64;
    (s2, q)
}

fn tau_free(family: &VarianceFamily) -> bool {
    matches!(family, VarianceFamily::Base | VarianceFamily::Extended { nu: NuRule::ROfMu })
}

/// Least-squares fit of `{X_t − μ_t}² − R(μ_t) ≈ σ² D_τ(μ_t)`.
///
/// `τ` is profiled over `k/grid`, `k = 1..grid`, then refined by golden-section
/// search on the bracketing cells.
pub fn fit_lambda(
    x: &[f64],
    mu: &[f64],
    family: &VarianceFamily,
    grid: usize,
) -> Result<LambdaFit> {
    if x.len() != mu.len() || x.is_empty() {
        return Err(Error::Domain("lambda fit needs matching nonempty paths".into()));
    }
    if grid < 10 {
        return Err(Error::Config(format!("tau grid must have at least 10 points, got {grid}")));
    }
    let z = excess(x, mu);
    if tau_free(family) && mu.iter().all(|&m| m <= 1.0) {
        let (s2, q) = profile(&z, mu, family, 0.5);
        return Ok(LambdaFit {
            lambda: LambdaParams { tau: 0.5, sigma_zeta_sq: s2 },
            tau_identifiable: false,
            objective: q,
        });
    }
    let mut best = (0usize, f64::INFINITY);
    for k in 1..=grid {
        let (_, q) = profile(&z, mu, family, k as f64 / grid as f64);
        if q < best.1 {
            best = (k, q);
        }
    }
    let h = 1.0 / grid as f64;
    let lo = ((best.0 as f64 - 1.0) * h).max(1e-6);
    let hi = ((best.0 as f64 + 1.0) * h).min(1.0);
    let obj = |t: f64| profile(&z, mu, family, t).1;
    let (mut tau, mut q) = golden_section(obj, lo, hi, 1e-10);
    let grid_tau = best.0 as f64 * h;
    if best.1 < q {
        tau = grid_tau;
        q = best.1;
    }
    let (s2, _) = profile(&z, mu, family, tau);
    Ok(LambdaFit {
        lambda: LambdaParams { tau, sigma_zeta_sq: s2 },
        tau_identifiable: true,
        objective: q,
    })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Naive plug-in covariance of `λ̂`, ignoring the first-stage estimation of `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCov {
    /// When false the matrix is `1 × 1` and refers to `σ_ζ²` alone.
    pub includes_tau: bool,
    pub matrix: Matrix,
    pub label: String,
}

/// Sandwich `A⁻¹BA⁻¹/n` for the λ regression with `u_t = {X_t−μ_t}² − R(μ_t) − h_t`.
pub fn lambda_sandwich_cov(
    x: &[f64],
    mu: &[f64],
    lambda: &LambdaParams,
    family: &VarianceFamily,
    tau_identifiable: bool,
) -> Result<LambdaCov> {
    let n = x.len();
    if n == 0 || mu.len() != n {
        return Err(Error::Domain("lambda covariance needs matching nonempty paths".into()));
    }
    let z = excess(x, mu);
    let (tau, s2) = (lambda.tau, lambda.sigma_zeta_sq);
    let rows: Vec<(f64, [f64; 2])> = z
        .iter()
        .zip(mu)
        .map(|(zt, m)| {
            let d = family.shape(*m, tau);
            let u = zt - s2 * d;
            (u, [s2 * family.shape_dtau(*m, tau), d])
        })
        .collect();
    let build = |idx: &[usize]| -> (Matrix, Matrix) {
        let k = idx.len();
        let mut a = vec![vec![0.0; k]; k];
        let mut b = vec![vec![0.0; k]; k];
        for (u, g) in &rows {
            for i in 0..k {
                for j in 0..k {
                    let gg = g[idx[i]] * g[idx[j]];
                    a[i][j] += gg / n as f64;
                    b[i][j] += u * u * gg / n as f64;
                }
            }
        }
        (a, b)
    };
    let sandwich = |a: &Matrix, b: &Matrix| -> Result<Matrix> {
        let ai = sym_inverse(a)?;
        let k = a.len();
        let mut out = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                let mut s = 0.0;
                for p in 0..k {
                    for q in 0..k {
                        s += ai[i][p] * b[p][q] * ai[q][j];
                    }
                }
                out[i][j] = s / n as f64;
            }
        }
        Ok(out)
    };
    if tau_identifiable {
        let (a, b) = build(&[0, 1]);
        if condition_number(&a) <= 1e12 {
            return Ok(LambdaCov { includes_tau: true, matrix: sandwich(&a, &b)?, label: "naive".into() });
        }
    }
    let (a, b) = build(&[1]);
    Ok(LambdaCov { includes_tau: false, matrix: sandwich(&a, &b)?, label: "naive".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_excess_gives_zero_sigma() {
        let mu: Vec<f64> = (0..50).map(|t| 1.5 + 0.1 * t as f64).collect();
        // choose x so that (x-mu)^2 = R(mu): x = mu ± sqrt(R)
        let x: Vec<f64> = mu.iter().map(|m| m + r_fun(*m).sqrt()).collect();
        let fit = fit_lambda(&x, &mu, &VarianceFamily::Base, 400).unwrap();
        assert!(fit.lambda.sigma_zeta_sq.abs() < 1e-15);
        assert!(fit.tau_identifiable);
        let cov = lambda_sandwich_cov(&x, &mu, &fit.lambda, &VarianceFamily::Base, true).unwrap();
        assert!(cov.matrix.iter().flatten().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn small_means_flag_tau() {
        let mu = vec![0.3, 0.8, 0.5, 1.0];
        let x = vec![0.0, 2.0, 1.0, 1.0];
        let fit = fit_lambda(&x, &mu, &VarianceFamily::Base, 400).unwrap();
        assert!(!fit.tau_identifiable);
        assert_eq!(fit.lambda.tau, 0.5);
        assert!(fit.lambda.sigma_zeta_sq >= 0.0);
    }

    #[test]
    fn exact_profile_is_recovered() {
        let family = VarianceFamily::Base;
        let mu: Vec<f64> = (0..200).map(|t| 0.5 + 0.07 * t as f64).collect();
        let (tau, s2) = (0.37, 0.8);
        let x: Vec<f64> = mu
            .iter()
            .map(|m| m + (r_fun(*m) + s2 * family.shape(*m, tau)).sqrt())
            .collect();
        let fit = fit_lambda(&x, &mu, &family, 400).unwrap();
        assert!((fit.lambda.tau - tau).abs() < 1e-6, "{:?}", fit);
        assert!((fit.lambda.sigma_zeta_sq - s2).abs() < 1e-6);
    }

    #[test]
    fn closed_form_sigma_is_inner_argmin() {
        let family = VarianceFamily::Power;
        let mu: Vec<f64> = (0..60).map(|t| 0.2 + 0.3 * t as f64).collect();
        let x: Vec<f64> = mu.iter().enumerate().map(|(t, m)| (m + (t % 5) as f64 - 2.0).max(0.0)).collect();
        let z = excess(&x, &mu);
        let tau = 0.63;
        let (s2, q) = profile(&z, &mu, &family, tau);
        for k in 0..2000 {
            let s = k as f64 * 0.005;
            let qs = z
                .iter()
                .zip(&mu)
                .map(|(zt, m)| (zt - s * family.shape(*m, tau)).powi(2))
                .sum::<f64>()
                / z.len() as f64;
            assert!(qs >= q - 1e-12, "{s} beats {s2}");
        }
    }

    #[test]
    fn known_tau_scalar_variance() {
        let family = VarianceFamily::Base;
        let mu: Vec<f64> = (0..40).map(|t| 1.2 + 0.25 * t as f64).collect();
        let x: Vec<f64> = mu.iter().enumerate().map(|(t, m)| m + ((t * 7) % 5) as f64 - 1.5).collect();
        let lambda = LambdaParams { tau: 0.5, sigma_zeta_sq: 0.6 };
        let cov = lambda_sandwich_cov(&x, &mu, &lambda, &family, false).unwrap();
        assert!(!cov.includes_tau);
        let n = x.len() as f64;
        let (mut a, mut b) = (0.0, 0.0);
        for (xt, m) in x.iter().zip(&mu) {
            let d = family.shape(*m, 0.5);
            let u = (xt - m).powi(2) - r_fun(*m) - 0.6 * d;
            a += d * d / n;
            b += u * u * d * d / n;
        }
        assert!((cov.matrix[0][0] - b / (a * a) / n).abs() < 1e-12);
    }
}
