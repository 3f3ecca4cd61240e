//! Conditional least-squares estimation of `θ` (OLS, optimally weighted OLS),
//! profile estimation of `λ`, and plug-in covariance matrices.

mod covariance;
mod lambda;
mod optimize;
mod recursion;
mod starts;

pub use covariance::{standard_errors, theta_information_cov, theta_sandwich_cov, Matrix};
pub use lambda::{fit_lambda, lambda_sandwich_cov, LambdaCov, LambdaFit};
pub use recursion::{mu_gradient_path, mu_tilde_path, wls_objective, GradientPath};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{r_fun, LinkFunction, VarianceFamily};
use crate::process::{CountSeries, LambdaParams, ModelOrder, ThetaParams};
use optimize::{minimize, Feasible, Objective};
use recursion::Workspace;

/// Variance floor used when inverting conditional variances.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Ols,
    Owls,
}

impl std::fmt::Display for WeightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightMode::Ols => "ols",
            WeightMode::Owls => "owls",
        })
    }
}

/// Estimation settings. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub weight_mode: WeightMode,
    /// Box for `c`; `None` uses `±10(1 + max X)`.
    pub c_bounds: Option<(f64, f64)>,
    /// `ε` in `Σ|φᵢ| + Σ|ψⱼ| ≤ 1 − ε`.
    pub simplex_margin: f64,
    /// Number of `τ` grid points on `(0, 1]` before golden-section refinement.
    pub tau_grid: usize,
    /// Tolerance on the sup-norm of the projected gradient.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Number of optimizer starts (deterministic starts first, then random).
    pub multistart: usize,
    /// Seed for the random starts.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            weight_mode: WeightMode::Ols,
            c_bounds: None,
            simplex_margin: 1e-3,
            tau_grid: 400,
            grad_tol: 1e-8,
            max_iter: 500,
            multistart: 5,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.simplex_margin > 0.0 && self.simplex_margin < 1.0) {
            return Err(Error::Config(format!(
                "simplex margin must lie in (0, 1), got {}",
                self.simplex_margin
            )));
        }
        if self.tau_grid < 10 {
            return Err(Error::Config(format!("tau grid must be at least 10, got {}", self.tau_grid)));
        }
        if self.multistart == 0 || self.max_iter == 0 {
            return Err(Error::Config("multistart and max_iter must be positive".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("gradient tolerance must be positive".into()));
        }
        if let Some((lo, hi)) = self.c_bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("invalid c bounds ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    fn feasible(&self, x: &[f64]) -> Feasible {
        let (c_lo, c_hi) = self.c_bounds.unwrap_or_else(|| {
            let m = x.iter().cloned().fold(0.0, f64::max);
            (-10.0 * (1.0 + m), 10.0 * (1.0 + m))
        });
        Feasible { c_lo, c_hi, radius: 1.0 - self.simplex_margin }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm of the projected gradient at the returned point.
    pub projected_gradient: f64,
    pub boundary_contact: bool,
    pub starts: usize,
    pub starts_converged: usize,
    pub trace: Vec<String>,
}

/// Minimizer of the weighted objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFit {
    pub theta: ThetaParams,
    pub objective: f64,
    pub convergence: Convergence,
}

/// Result of a complete fit of `(θ, λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub order: ModelOrder,
    pub link: LinkFunction,
    pub family: VarianceFamily,
    pub weight_mode: WeightMode,
    pub n: usize,
    pub theta_hat: ThetaParams,
    pub lambda_hat: LambdaParams,
    pub tau_identifiable: bool,
    pub theta_cov: Option<Matrix>,
    pub theta_sd: Option<Vec<f64>>,
    pub lambda_cov: Option<LambdaCov>,
    pub fitted_mu: Vec<f64>,
    pub fitted_var: Vec<f64>,
    pub objective_value: f64,
    pub convergence: Convergence,
    pub notes: Vec<String>,
}

fn check_series(x: &[f64], order: ModelOrder) -> Result<()> {
    ModelOrder::new(order.p1, order.p2)?;
    if x.len() <= 10 * order.dim() {
        return Err(Error::Data(format!(
            "series of length {} is too short for order {order}: need more than {}",
            x.len(),
            10 * order.dim()
        )));
    }
    if x.iter().all(|v| *v == x[0]) {
        return Err(Error::Degenerate(
            "constant series: the conditional distribution is degenerate and θ is not identifiable"
                .into(),
        ));
    }
    Ok(())
}

struct WlsObjective<'a> {
    ws: &'a mut Workspace,
    link: &'a LinkFunction,
    x: &'a [f64],
    weights: &'a [f64],
}

impl Objective for WlsObjective<'_> {
    fn value(&mut self, theta: &[f64]) -> f64 {
        self.ws.objective(theta, self.link, self.x, self.weights, None)
    }

    fn full(&mut self, theta: &[f64], g: &mut [f64], h: &mut [f64], h_psd: &mut [f64]) -> f64 {
        self.ws.objective_newton(theta, self.link, self.x, self.weights, g, h, h_psd)
    }
}

fn run_starts(
    x: &[f64],
    order: ModelOrder,
    link: &LinkFunction,
    config: &FitConfig,
    weights: &[f64],
    starts: Vec<Vec<f64>>,
) -> Result<ThetaFit> {
    let set = config.feasible(x);
    let mut ws = Workspace::new(order, x.len());
    let mut trace = Vec::new();
    let mut best: Option<optimize::Outcome> = None;
    let mut converged = 0;
    let n_starts = starts.len();
    for (k, x0) in starts.iter().enumerate() {
        let mut obj = WlsObjective { ws: &mut ws, link, x, weights };
        let out = minimize(
            &mut obj,
            x0,
            &set,
            config.grad_tol,
            config.max_iter,
        );
        trace.push(format!(
            "start {k}: f={:.10e} iterations={} converged={} ({}, pg={:.2e})",
            out.f, out.iterations, out.converged, out.reason, out.pg_norm
        ));
        if out.converged {
            converged += 1;
        }
        let better = match &best {
            None => out.f.is_finite(),
            Some(b) => {
                out.f.is_finite()
                    && ((out.converged && !b.converged)
                        || (out.converged == b.converged && out.f < b.f))
            }
        };
        if better {
            best = Some(out);
        }
    }
    match best {
        Some(b) if converged > 0 => Ok(ThetaFit {
            theta: ThetaParams::from_slice(order, &b.x),
            objective: b.f,
            convergence: Convergence {
                converged: b.converged,
                iterations: b.iterations,
                projected_gradient: b.pg_norm,
                boundary_contact: set.on_boundary(&b.x, 1e-6),
                starts: n_starts,
                starts_converged: converged,
                trace,
            },
        }),
        _ => Err(Error::Optimization {
            message: format!("none of {n_starts} starts converged"),
            trace,
        }),
    }
}

/// Minimize `(1/n) Σ W_t (X_t − μ̃_t(θ))²` from the configured multistart points.
pub fn fit_theta(
    x: &[f64],
    order: ModelOrder,
    link: &LinkFunction,
    config: &FitConfig,
    weights: &[f64],
) -> Result<ThetaFit> {
    config.validate()?;
    check_series(x, order)?;
    if weights.len() != x.len() || weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Domain("weights must be positive, one per observation".into()));
    }
    let starts = starts::initial_points(
        x,
        order,
        link,
        &config.feasible(x),
        config.multistart,
        config.seed,
    );
    run_starts(x, order, link, config, weights, starts)
}

/// `1 / max(R(μ̂_t) + σ̂² D_τ̂(μ̂_t), 10⁻⁸)`.
pub fn optimal_weights(mu: &[f64], lambda: &LambdaParams, family: &VarianceFamily) -> Vec<f64> {
    mu.iter().map(|&m| 1.0 / conditional_variance(m, lambda, family)).collect()
}

fn conditional_variance(mu: f64, lambda: &LambdaParams, family: &VarianceFamily) -> f64 {
    (r_fun(mu) + lambda.sigma_zeta_sq * family.shape(mu, lambda.tau)).max(VARIANCE_FLOOR)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    x: &[f64],
    order: ModelOrder,
    link: &LinkFunction,
    family: &VarianceFamily,
    config: &FitConfig,
    mode: WeightMode,
    fit: ThetaFit,
    weights: &[f64],
) -> Result<FitResult> {
    let (mu, _) = mu_tilde_path(&fit.theta, link, x);
    let lam = fit_lambda(x, &mu, family, config.tau_grid)?;
    let fitted_var = mu
        .iter()
        .map(|&m| r_fun(m) + lam.lambda.sigma_zeta_sq * family.shape(m, lam.lambda.tau))
        .collect();
    let mut notes = Vec::new();
    if !link.is_differentiable() {
        notes.push("relu link: covariances use the almost-everywhere derivative".into());
    }
    if !lam.tau_identifiable {
        notes.push("all fitted means are at most one: tau is not identifiable, reported as 0.5".into());
    }
    if fit.convergence.boundary_contact {
        notes.push("estimate lies on the boundary of the parameter set".into());
    }
    let cov = match mode {
        WeightMode::Ols => theta_sandwich_cov(&fit.theta, link, x, weights),
        WeightMode::Owls => theta_information_cov(&fit.theta, link, x, weights),
    };
    let theta_cov = match cov {
        Ok(c) => Some(c),
        Err(e) => {
            notes.push(format!("theta covariance unavailable: {e}"));
            None
        }
    };
    let lambda_cov = match lambda_sandwich_cov(x, &mu, &lam.lambda, family, lam.tau_identifiable) {
        Ok(c) => Some(c),
        Err(e) => {
            notes.push(format!("lambda covariance unavailable: {e}"));
            None
        }
    };
    Ok(FitResult {
        order,
        link: *link,
        family: *family,
        weight_mode: mode,
        n: x.len(),
        theta_sd: theta_cov.as_ref().map(standard_errors),
        theta_cov,
        lambda_hat: lam.lambda,
        tau_identifiable: lam.tau_identifiable,
        lambda_cov,
        fitted_mu: mu,
        fitted_var,
        objective_value: fit.objective,
        theta_hat: fit.theta,
        convergence: fit.convergence,
        notes,
    })
}

/// Unweighted fit of `θ` followed by the profile fit of `λ`.
pub fn fit_ols(
    series: &CountSeries,
    order: ModelOrder,
    link: &LinkFunction,
    family: &VarianceFamily,
    config: &FitConfig,
) -> Result<FitResult> {
    let x = series.to_f64();
    fit_ols_slice(&x, order, link, family, config)
}

pub(crate) fn fit_ols_slice(
    x: &[f64],
    order: ModelOrder,
    link: &LinkFunction,
    family: &VarianceFamily,
    config: &FitConfig,
) -> Result<FitResult> {
    let ones = vec![1.0; x.len()];
    let fit = fit_theta(x, order, link, config, &ones)?;
    assemble(x, order, link, family, config, WeightMode::Ols, fit, &ones)
}

/// Second stage of the two-step estimator, warm-started at the OLS estimate.
/// Falls back to the full multistart set when the warm start does not converge.
fn owls_from(
    x: &[f64],
    ols: &FitResult,
    config: &FitConfig,
) -> Result<FitResult> {
    let weights = optimal_weights(&ols.fitted_mu, &ols.lambda_hat, &ols.family);
    let warm = ols.theta_hat.to_vec();
    let fit = match run_starts(x, ols.order, &ols.link, config, &weights, vec![warm.clone()]) {
        Ok(fit) => fit,
        Err(Error::Optimization { .. }) => {
            let mut starts = vec![warm];
            starts.extend(starts::initial_points(
                x,
                ols.order,
                &ols.link,
                &config.feasible(x),
                config.multistart,
                config.seed,
            ));
            run_starts(x, ols.order, &ols.link, config, &weights, starts)?
        }
        Err(e) => return Err(e),
    };
    assemble(x, ols.order, &ols.link, &ols.family, config, WeightMode::Owls, fit, &weights)
}

/// Both stages: the OLS fit and the optimally weighted refit.
pub fn fit_ols_owls(
    series: &CountSeries,
    order: ModelOrder,
    link: &LinkFunction,
    family: &VarianceFamily,
    config: &FitConfig,
) -> Result<(FitResult, FitResult)> {
    let x = series.to_f64();
    let ols = fit_ols_slice(&x, order, link, family, config)?;
    let owls = owls_from(&x, &ols, config)?;
    Ok((ols, owls))
}

/// Two-step optimally weighted estimator.
pub fn fit_owls(
    series: &CountSeries,
    order: ModelOrder,
    link: &LinkFunction,
    family: &VarianceFamily,
    config: &FitConfig,
) -> Result<FitResult> {
    fit_ols_owls(series, order, link, family, config).map(|(_, owls)| owls)
}

/// Fit with the estimator named in `config.weight_mode`.
pub fn fit(
    series: &CountSeries,
    order: ModelOrder,
    link: &LinkFunction,
    family: &VarianceFamily,
    config: &FitConfig,
) -> Result<FitResult> {
    match config.weight_mode {
        WeightMode::Ols => fit_ols(series, order, link, family, config),
        WeightMode::Owls => fit_owls(series, order, link, family, config),
    }
}
