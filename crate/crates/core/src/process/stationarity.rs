use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ModelSpec;

const ROOT_TOL: f64 = 1.0 - 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

/// Outcome of the checkable ergodicity conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    /// Spectral radius of the companion matrix of `ψ(z) = 1 - Σψⱼzʲ`.
    pub psi_radius: f64,
    /// Spectral radius for `φ*(z) = 1 - Σ(φⱼ⁺ + ψⱼ⁺)zʲ`.
    pub phi_star_radius: f64,
    /// `Σ|φᵢ| + Σ|ψⱼ|`; below one is sufficient for both root conditions.
    pub abs_sum: f64,
    pub roots: CheckStatus,
    pub tau: CheckStatus,
    pub innovation: CheckStatus,
    pub notes: Vec<String>,
}

impl StationarityReport {
    pub fn overall(&self) -> CheckStatus {
        self.roots.max(self.tau).max(self.innovation)
    }

    pub fn is_admissible(&self) -> bool {
        self.overall() != CheckStatus::Fail
    }
}

/// Largest eigenvalue modulus of the companion matrix of `1 - Σ aⱼ zʲ`.
///
/// The polynomial has no roots in the closed unit disc iff this is below one.
pub fn spectral_radius(coeffs: &[f64]) -> f64 {
    let p = coeffs.len();
    match p {
        0 => 0.0,
        1 => coeffs[0].abs(),
        _ => {
            let mut m = DMatrix::<f64>::zeros(p, p);
            for (j, a) in coeffs.iter().enumerate() {
                m[(0, j)] = *a;
            }
            for i in 1..p {
                m[(i, i - 1)] = 1.0;
            }
            m.complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        }
    }
}

/// Check root conditions, the range of `τ` and the innovation moments.
pub fn validate_stationarity(spec: &ModelSpec) -> StationarityReport {
    let theta = &spec.theta;
    let p = spec.order.p();
    let mut notes = Vec::new();

    let psi_radius = spectral_radius(&theta.psi);
    let star: Vec<f64> = (0..p)
        .map(|j| {
            theta.phi.get(j).copied().unwrap_or(0.0).max(0.0)
                + theta.psi.get(j).copied().unwrap_or(0.0).max(0.0)
        })
        .collect();
    let phi_star_radius = spectral_radius(&star);
    let abs_sum = theta.abs_sum();

    let roots = if psi_radius < ROOT_TOL && phi_star_radius < ROOT_TOL {
        CheckStatus::Pass
    } else {
        notes.push(format!(
            "root condition violated: psi radius {psi_radius:.6}, phi* radius {phi_star_radius:.6}"
        ));
        CheckStatus::Fail
    };
    if abs_sum >= 1.0 && roots == CheckStatus::Pass {
        notes.push(format!(
            "sufficient condition sum|phi|+sum|psi| < 1 not met ({abs_sum:.4}); root condition still holds"
        ));
    }

    let tau_v = spec.lambda.tau;
    let tau = if tau_v > 0.0 && tau_v < 1.0 {
        CheckStatus::Pass
    } else if tau_v == 1.0 {
        notes.push("tau = 1 requires further parameter constraints for ergodicity".into());
        CheckStatus::Warn
    } else {
        notes.push(format!("tau = {tau_v} outside (0, 1]"));
        CheckStatus::Fail
    };

    let var = spec.innovation.variance();
    let innovation = if var.is_finite() { CheckStatus::Pass } else { CheckStatus::Fail };

    StationarityReport { psi_radius, phi_star_radius, abs_sum, roots, tau, innovation, notes }
}
