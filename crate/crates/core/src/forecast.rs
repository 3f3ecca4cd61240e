//! One-step prediction, rolling out-of-sample evaluation and simulated
//! multi-step forecasts.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{max_abs_acf, mean_sd};
use crate::error::{Error, Result};
use crate::estimator::{mu_tilde_path, FitResult, VARIANCE_FLOOR};
use crate::kernel::{r_fun, LinkFunction, VarianceFamily};
use crate::parallel::{map_indexed, stream_rng, Execution};
use crate::process::{InnovationLaw, LambdaParams, ModelSpec, ThetaParams};

/// Lags scanned for the residual ACF of a forecast.
pub const FORECAST_ACF_LAGS: usize = 14;

/// Frozen parameters used for prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub link: LinkFunction,
    pub family: VarianceFamily,
    pub theta: ThetaParams,
    pub lambda: LambdaParams,
}

impl Predictor {
    pub fn from_fit(fit: &FitResult) -> Self {
        Predictor {
            link: fit.link,
            family: fit.family,
            theta: fit.theta_hat.clone(),
            lambda: fit.lambda_hat,
        }
    }

    fn variance(&self, mu: f64) -> f64 {
        r_fun(mu) + self.lambda.sigma_zeta_sq * self.family.shape(mu, self.lambda.tau)
    }

    fn p(&self) -> usize {
        self.theta.phi.len().max(self.theta.psi.len())
    }

    /// Conditional mean of the step after `history`, continuing the recursion over it.
    fn next_mean(&self, history: &[f64], mu_hist: &[f64]) -> f64 {
        let n = history.len();
        let mut s = self.theta.c;
        for (i, phi) in self.theta.phi.iter().enumerate() {
            if n > i {
                s += phi * history[n - 1 - i];
            }
        }
        for (j, psi) in self.theta.psi.iter().enumerate() {
            if n > j {
                s += psi * mu_hist[n - 1 - j];
            }
        }
        self.link.eval(s)
    }

    /// `(μ_{n+1}, R(μ_{n+1}) + D_τ̂(μ_{n+1}) σ̂²)` given `X_1..X_n`.
    pub fn one_step(&self, history: &[f64]) -> Result<(f64, f64)> {
        if history.len() < self.p().max(1) {
            return Err(Error::Domain(format!(
                "history of length {} is shorter than the model order {}",
                history.len(),
                self.p().max(1)
            )));
        }
        let (mu, _) = mu_tilde_path(&self.theta, &self.link, history);
        let m = self.next_mean(history, &mu);
        Ok((m, self.variance(m)))
    }
}

/// One-step predictive mean and variance from a fitted model.
pub fn one_step(fit: &FitResult, history: &[f64]) -> Result<(f64, f64)> {
    Predictor::from_fit(fit).one_step(history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastStep {
    /// One-based position in the full series.
    pub t: usize,
    pub mean: f64,
    pub variance: f64,
    pub realized: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSummary {
    pub mar: f64,
    pub mspr: f64,
    pub mean_r: f64,
    pub sd_r: f64,
    pub max_abs_acf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub steps: Vec<ForecastStep>,
    pub summary: Option<ForecastSummary>,
}

impl ForecastReport {
    /// CSV `t,mean,var,realized,residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mean,var,realized,residual\n");
        for s in &self.steps {
            out.push_str(&format!("{},{},{},{},{}\n", s.t, s.mean, s.variance, s.realized, s.residual));
        }
        out
    }
}

/// Walk through the last `holdout` observations with frozen parameters, feeding
/// the true lagged observations.
pub fn rolling_evaluate(fit: &FitResult, full: &[f64], holdout: usize) -> Result<ForecastReport> {
    rolling_with(&Predictor::from_fit(fit), full, holdout)
}

pub fn rolling_with(pred: &Predictor, full: &[f64], holdout: usize) -> Result<ForecastReport> {
    if holdout >= full.len() {
        return Err(Error::Domain(format!(
            "holdout {holdout} must be smaller than the series length {}",
            full.len()
        )));
    }
    if holdout == 0 {
        return Ok(ForecastReport { steps: vec![], summary: None });
    }
    let (mu, _) = mu_tilde_path(&pred.theta, &pred.link, full);
    let start = full.len() - holdout;
    let steps: Vec<ForecastStep> = (start..full.len())
        .map(|t| {
            let variance = pred.variance(mu[t]);
            ForecastStep {
                t: t + 1,
                mean: mu[t],
                variance,
                realized: full[t],
                residual: (full[t] - mu[t]) / variance.max(VARIANCE_FLOOR).sqrt(),
            }
        })
        .collect();
    let res: Vec<f64> = steps.iter().map(|s| s.residual).collect();
    let (mean_r, sd_r) = mean_sd(&res);
    let summary = ForecastSummary {
        mar: steps.iter().map(|s| (s.realized - s.mean).abs()).sum::<f64>() / holdout as f64,
        mspr: res.iter().map(|r| r * r).sum::<f64>() / holdout as f64,
        mean_r,
        sd_r,
        max_abs_acf: max_abs_acf(&res, FORECAST_ACF_LAGS),
    };
    Ok(ForecastReport { steps, summary: Some(summary) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub horizon: usize,
    pub mean: f64,
    pub variance: f64,
    /// Empirical 5%, 25%, 50%, 75% and 95% quantiles.
    pub quantiles: [f64; 5],
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Simulate `n_paths` continuations of `history` for `horizon` steps.
///
/// The innovation law is the mean-one law matched to `σ̂²`
/// (see [`InnovationLaw::MomentMatched`]).
pub fn mc_path_forecast(
    fit: &FitResult,
    history: &[f64],
    horizon: usize,
    n_paths: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<HorizonSummary>> {
    let pred = Predictor::from_fit(fit);
    mc_path_with(&pred, history, horizon, n_paths, seed, exec)
}

pub fn mc_path_with(
    pred: &Predictor,
    history: &[f64],
    horizon: usize,
    n_paths: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<HorizonSummary>> {
    if horizon == 0 || n_paths < 100 {
        return Err(Error::Domain(format!(
            "need horizon >= 1 and at least 100 paths, got {horizon} and {n_paths}"
        )));
    }
    pred.one_step(history)?;
    let order = pred.theta.order();
    let spec = ModelSpec::new(
        order,
        pred.link,
        pred.family,
        pred.theta.clone(),
        pred.lambda,
        InnovationLaw::MomentMatched { variance: pred.lambda.sigma_zeta_sq },
    )?;
    let (mu_hist, _) = mu_tilde_path(&pred.theta, &pred.link, history);
    let paths: Vec<Vec<f64>> = map_indexed(exec, n_paths, |k| {
        use rand::Rng;
        let mut rng = stream_rng(seed, k as u64);
        let mut xs = history.to_vec();
        let mut mus = mu_hist.clone();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let m = pred.next_mean(&xs, &mus);
            let (u1, u2, u3) = (rng.random(), rng.random(), rng.random());
            let x = crate::process::draw_count(&spec, m, u1, u2, u3);
            xs.push(x);
            mus.push(m);
            out.push(x);
        }
        out
    });
    Ok((0..horizon)
        .map(|h| {
            let mut v: Vec<f64> = paths.iter().map(|p| p[h]).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let variance = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            v.sort_by(|a, b| a.total_cmp(b));
            let q = QUANTILE_LEVELS.map(|p| {
                let idx = ((p * n).ceil() as usize).clamp(1, v.len()) - 1;
                v[idx]
            });
            HorizonSummary { horizon: h + 1, mean, variance, quantiles: q }
        })
        .collect())
}
