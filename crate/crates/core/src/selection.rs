//! Quasi-likelihood information criteria and order search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_ols, FitConfig, FitResult, WeightMode, VARIANCE_FLOOR};
use crate::kernel::{LinkFunction, VarianceFamily};
use crate::parallel::{map_indexed, Execution};
use crate::process::{CountSeries, LambdaParams, ModelOrder, ThetaParams};

/// `Σ log max(R(μ̂_t) + σ̂² D_τ̂(μ̂_t), 10⁻⁸)`, shared by both criteria.
pub fn goodness(fit: &FitResult) -> f64 {
    fit.fitted_var.iter().map(|v| v.max(VARIANCE_FLOOR).ln()).sum()
}

/// Number of free parameters `3 + p₁ + p₂` (the 3 counts `c`, `τ`, `σ_ζ²`).
pub fn parameter_count(order: ModelOrder) -> f64 {
    (3 + order.p1 + order.p2) as f64
}

pub fn aic(fit: &FitResult) -> f64 {
    goodness(fit) + 2.0 * parameter_count(fit.order)
}

/// Goodness term plus `log(n − p − 1)(3 + p₁ + p₂)` with `p = max(p₁, p₂)`.
pub fn bic(fit: &FitResult) -> Result<f64> {
    let p = fit.order.p();
    if fit.n <= p + 1 {
        return Err(Error::Domain(format!("BIC needs n > p + 1, got n = {}, p = {p}", fit.n)));
    }
    Ok(goodness(fit) + ((fit.n - p - 1) as f64).ln() * parameter_count(fit.order))
}

/// One candidate order with its criteria, or the reason it was excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub order: ModelOrder,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub theta_hat: Option<ThetaParams>,
    pub lambda_hat: Option<LambdaParams>,
    pub error: Option<String>,
    #[serde(skip)]
    pub fit: Option<FitResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub candidates: Vec<Candidate>,
    pub chosen_aic: ModelOrder,
    pub chosen_bic: ModelOrder,
    pub warnings: Vec<String>,
}

impl SelectionReport {
    pub fn candidate(&self, order: ModelOrder) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.order == order)
    }

    /// CSV table `p1,p2,aic,bic,status`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p1,p2,aic,bic,status\n");
        for c in &self.candidates {
            let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            let status = match &c.error {
                None => "ok".to_string(),
                Some(e) => format!("\"failed: {}\"", e.replace('"', "'")),
            };
            out.push_str(&format!("{},{},{},{},{}\n", c.order.p1, c.order.p2, f(c.aic), f(c.bic), status));
        }
        out
    }
}

/// Candidate grid `p₁ ∈ 1..=p₁ₘ`, `p₂ ∈ 0..=p₂ₘ`.
pub fn order_grid(p1_max: usize, p2_max: usize) -> Result<Vec<ModelOrder>> {
    if p1_max == 0 {
        return Err(Error::Config("the order grid needs p1 max of at least 1".into()));
    }
    Ok((1..=p1_max)
        .flat_map(|p1| (0..=p2_max).map(move |p2| ModelOrder { p1, p2 }))
        .collect())
}

fn argmin(cands: &[Candidate], key: impl Fn(&Candidate) -> Option<f64>) -> Option<ModelOrder> {
    cands
        .iter()
        .filter_map(|c| key(c).map(|v| (v, c.order)))
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then((a.1.p1 + a.1.p2).cmp(&(b.1.p1 + b.1.p2)))
                .then(a.1.p1.cmp(&b.1.p1))
        })
        .map(|(_, o)| o)
}

/// Fit every candidate with OLS (each with its own `λ̂`) and pick the minimizers.
pub fn select_order(
    series: &CountSeries,
    grid: &[ModelOrder],
    link: &LinkFunction,
    family: &VarianceFamily,
    config: &FitConfig,
    exec: Execution,
) -> Result<SelectionReport> {
    if grid.is_empty() {
        return Err(Error::Config("empty candidate grid".into()));
    }
    let cfg = FitConfig { weight_mode: WeightMode::Ols, ..config.clone() };
    let candidates: Vec<Candidate> = map_indexed(exec, grid.len(), |i| {
        let order = grid[i];
        let res = fit_ols(series, order, link, family, &cfg).and_then(|fit| {
            let b = bic(&fit)?;
            Ok((fit, b))
        });
        match res {
            Ok((fit, b)) => Candidate {
                order,
                aic: Some(aic(&fit)),
                bic: Some(b),
                theta_hat: Some(fit.theta_hat.clone()),
                lambda_hat: Some(fit.lambda_hat),
                error: None,
                fit: Some(fit),
            },
            Err(e) => Candidate {
                order,
                aic: None,
                bic: None,
                theta_hat: None,
                lambda_hat: None,
                error: Some(e.to_string()),
                fit: None,
            },
        }
    });
    let warnings: Vec<String> = candidates
        .iter()
        .filter_map(|c| c.error.as_ref().map(|e| format!("candidate {} excluded: {e}", c.order)))
        .collect();
    let (Some(chosen_aic), Some(chosen_bic)) = (argmin(&candidates, |c| c.aic), argmin(&candidates, |c| c.bic))
    else {
        return Err(Error::Selection(format!(
            "all {} candidates failed: {}",
            grid.len(),
            warnings.join("; ")
        )));
    };
    Ok(SelectionReport { candidates, chosen_aic, chosen_bic, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{Convergence, FitResult};

    fn fake_fit(order: ModelOrder, n: usize, var: f64) -> FitResult {
        FitResult {
            order,
            link: LinkFunction::default(),
            family: VarianceFamily::Base,
            weight_mode: WeightMode::Ols,
            n,
            theta_hat: ThetaParams::new(0.0, vec![0.0; order.p1], vec![0.0; order.p2]),
            lambda_hat: LambdaParams { tau: 0.5, sigma_zeta_sq: 0.5 },
            tau_identifiable: true,
            theta_cov: None,
            theta_sd: None,
            lambda_cov: None,
            fitted_mu: vec![1.0; n],
            fitted_var: vec![var; n],
            objective_value: 0.0,
            convergence: Convergence {
                converged: true,
                iterations: 0,
                projected_gradient: 0.0,
                boundary_contact: false,
                starts: 1,
                starts_converged: 1,
                trace: vec![],
            },
            notes: vec![],
        }
    }

    #[test]
    fn criterion_arithmetic() {
        let o10 = ModelOrder::new(1, 0).unwrap();
        let fit = fake_fit(o10, 50, 2.0);
        assert!((aic(&fit) - (50.0 * 2f64.ln() + 8.0)).abs() < 1e-12);
        let fit = fake_fit(o10, 101, 1.0);
        assert!((bic(&fit).unwrap() - 99f64.ln() * 4.0).abs() < 1e-12);
        let o20 = ModelOrder::new(2, 0).unwrap();
        let a = aic(&fake_fit(o10, 80, 1.7));
        let b = aic(&fake_fit(o20, 80, 1.7));
        assert!((b - a - 2.0).abs() < 1e-12);
        assert!(bic(&fake_fit(ModelOrder::new(2, 1).unwrap(), 3, 1.0)).is_err());
        // floored variance
        assert!((goodness(&fake_fit(o10, 2, 0.0)) - 2.0 * 1e-8f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn tie_break_prefers_parsimony() {
        let mk = |p1, p2, v| Candidate {
            order: ModelOrder { p1, p2 },
            aic: Some(v),
            bic: Some(v),
            theta_hat: None,
            lambda_hat: None,
            error: None,
            fit: None,
        };
        let c = vec![mk(2, 1, 5.0), mk(1, 2, 5.0), mk(2, 0, 5.0), mk(1, 1, 5.0)];
        assert_eq!(argmin(&c, |c| c.aic), Some(ModelOrder { p1: 1, p2: 1 }));
        let c = vec![mk(2, 1, 5.0), mk(1, 2, 5.0)];
        assert_eq!(argmin(&c, |c| c.aic), Some(ModelOrder { p1: 1, p2: 2 }));
    }

    #[test]
    fn grid_shape() {
        let g = order_grid(2, 2).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], ModelOrder { p1: 1, p2: 0 });
        assert!(order_grid(0, 1).is_err());
    }
}
