use nalgebra::DMatrix;

use super::recursion::gradient_path_unchecked;
use crate::error::{Error, Result};
use crate::kernel::LinkFunction;
use crate::process::ThetaParams;

/// Dense row-major matrix as nested vectors (serializes cleanly).
pub type Matrix = Vec<Vec<f64>>;

const MAX_CONDITION: f64 = 1e12;

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    let k = m.len();
    DMatrix::from_fn(k, k, |i, j| m[i][j])
}

fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Ratio of extreme eigenvalues of a symmetric matrix; infinite if not positive definite.
pub(crate) fn condition_number(m: &Matrix) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    let eig = to_dmatrix(m).symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

pub(crate) fn sym_inverse(m: &Matrix) -> Result<Matrix> {
    let condition = condition_number(m);
    if condition > MAX_CONDITION {
        return Err(Error::SingularInformation { condition });
    }
    let inv = to_dmatrix(m)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::SingularInformation { condition })?;
    Ok(from_dmatrix(&inv))
}

/// `K = (1/n) Σ W_t g_t g_tᵀ` and `Γ = (1/n) Σ W_t² e_t² g_t g_tᵀ`.
fn information(
    theta: &ThetaParams,
    link: &LinkFunction,
    x: &[f64],
    weights: &[f64],
) -> Result<(Matrix, Matrix)> {
    if weights.len() != x.len() || x.is_empty() {
        return Err(Error::Domain("covariance needs one positive weight per observation".into()));
    }
    let path = gradient_path_unchecked(theta, link, x);
    let d = path.dim;
    let n = x.len() as f64;
    let mut k = vec![vec![0.0; d]; d];
    let mut gamma = vec![vec![0.0; d]; d];
    for t in 0..x.len() {
        let g = path.row(t);
        let e = x[t] - path.mu[t];
        let w = weights[t];
        for i in 0..d {
            for j in 0..d {
                let gg = g[i] * g[j] / n;
                k[i][j] += w * gg;
                gamma[i][j] += w * w * e * e * gg;
            }
        }
    }
    Ok((k, gamma))
}

/// Plug-in sandwich `K⁻¹ΓK⁻¹/n` for a (weighted) least-squares estimate.
pub fn theta_sandwich_cov(
    theta: &ThetaParams,
    link: &LinkFunction,
    x: &[f64],
    weights: &[f64],
) -> Result<Matrix> {
    let (k, gamma) = information(theta, link, x, weights)?;
    let ki = to_dmatrix(&sym_inverse(&k)?);
    let s = &ki * to_dmatrix(&gamma) * &ki / x.len() as f64;
    Ok(from_dmatrix(&s))
}

/// `K⁻¹/n`, the covariance under optimal weights.
pub fn theta_information_cov(
    theta: &ThetaParams,
    link: &LinkFunction,
    x: &[f64],
    weights: &[f64],
) -> Result<Matrix> {
    let (k, _) = information(theta, link, x, weights)?;
    let n = x.len() as f64;
    Ok(sym_inverse(&k)?
        .into_iter()
        .map(|row| row.into_iter().map(|v| v / n).collect())
        .collect())
}

/// Square roots of the diagonal.
pub fn standard_errors(cov: &Matrix) -> Vec<f64> {
    (0..cov.len()).map(|i| cov[i][i].max(0.0).sqrt()).collect()
}
