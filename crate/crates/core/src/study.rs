//! Monte Carlo harness over the built-in scenario catalog.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diagnostics::acf_raw;
use crate::error::{Error, Result};
use crate::estimator::{fit_ols_owls, FitConfig};
use crate::kernel::{LinkFunction, VarianceFamily};
use crate::parallel::{map_indexed, stream_rng, Execution};
use crate::process::{
    simulate_with_rng, CountSeries, InnovationLaw, LambdaParams, ModelOrder, ModelSpec,
    ThetaParams,
};
use crate::selection::{order_grid, select_order};

/// A named data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub spec: ModelSpec,
}

fn base_spec(c: f64, phi: &[f64], psi: &[f64]) -> ModelSpec {
    ModelSpec::new(
        ModelOrder { p1: phi.len(), p2: psi.len() },
        LinkFunction::Laplace { sigma: 1.0 },
        VarianceFamily::Base,
        ThetaParams::new(c, phi.to_vec(), psi.to_vec()),
        LambdaParams { tau: 0.5, sigma_zeta_sq: 0.5 },
        InnovationLaw::Binomial2Half,
    )
    .expect("catalog specs are valid")
}

/// The twelve scenarios M1-M6 under settings (a) and (b).
pub fn catalog() -> Vec<Scenario> {
    let a: [(&[f64], &[f64]); 6] = [
        (&[0.5], &[]),
        (&[0.4], &[0.4]),
        (&[0.4], &[0.1, 0.4]),
        (&[0.2, 0.5], &[]),
        (&[0.1, 0.4], &[0.4]),
        (&[0.1, 0.4], &[0.1, 0.3]),
    ];
    let mut out = Vec::with_capacity(12);
    for (i, (phi, psi)) in a.iter().enumerate() {
        out.push(Scenario { name: format!("M{}a", i + 1), spec: base_spec(-0.4, phi, psi) });
    }
    for (i, (phi, psi)) in a.iter().enumerate() {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        out.push(Scenario {
            name: format!("M{}b", i + 1),
            spec: base_spec(2.0, &neg(phi), &neg(psi)),
        });
    }
    out
}

pub fn scenario(name: &str) -> Option<Scenario> {
    catalog().into_iter().find(|s| s.name.eq_ignore_ascii_case(name))
}

/// Study settings. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McStudyConfig {
    /// Catalog names; empty means all twelve.
    pub scenarios: Vec<String>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub burn_in: usize,
    /// Fit OLS and OWLS at the true order.
    pub estimate: bool,
    /// Run AIC/BIC selection over the order grid.
    pub select: bool,
    /// Number of sample autocorrelation lags to record (0 disables).
    pub acf_lags: usize,
    pub max_order: (usize, usize),
    pub fit: FitConfig,
    pub execution: Execution,
}

impl Default for McStudyConfig {
    fn default() -> Self {
        McStudyConfig {
            scenarios: vec![],
            sample_sizes: vec![500],
            replications: 300,
            seed: 2024,
            burn_in: 500,
            estimate: true,
            select: true,
            acf_lags: 2,
            max_order: (2, 2),
            fit: FitConfig::default(),
            execution: Execution::Parallel,
        }
    }
}

impl McStudyConfig {
    pub fn validate(&self) -> Result<Vec<(usize, Scenario)>> {
        if self.replications == 0 {
            return Err(Error::Config("replication count must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::Config("sample sizes must be positive".into()));
        }
        self.fit.validate()?;
        order_grid(self.max_order.0, self.max_order.1)?;
        let all = catalog();
        if self.scenarios.is_empty() {
            return Ok(all.into_iter().enumerate().collect());
        }
        self.scenarios
            .iter()
            .map(|name| {
                all.iter()
                    .enumerate()
                    .find(|(_, s)| s.name.eq_ignore_ascii_case(name))
                    .map(|(i, s)| (i, s.clone()))
                    .ok_or_else(|| Error::Config(format!("unknown scenario {name}")))
            })
            .collect()
    }
}

/// Mean and RMSE of one estimator over the successful replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub scenario: String,
    pub n: usize,
    pub method: String,
    pub params: Vec<String>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub rmse: Vec<f64>,
    /// Mean of `(τ̂, σ̂²)`.
    pub lambda_mean: [f64; 2],
    pub lambda_rmse: [f64; 2],
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub scenario: String,
    pub n: usize,
    pub criterion: String,
    pub true_order: ModelOrder,
    pub counts: Vec<(ModelOrder, usize)>,
    pub failures: usize,
}

impl SelectionRow {
    pub fn true_order_count(&self) -> usize {
        self.counts.iter().find(|(o, _)| *o == self.true_order).map(|c| c.1).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfRow {
    pub scenario: String,
    pub n: usize,
    /// Sample ACF at lags `1..K` averaged over replications.
    pub mean_acf: Vec<f64>,
    /// Sample ACF of the first replication alone.
    pub single_acf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub scenario: String,
    pub n: usize,
    pub failed: usize,
    pub replications: usize,
    /// More than 5% of replications failed.
    pub flagged: bool,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McStudyReport {
    pub estimates: Vec<EstimateRow>,
    pub selection: Vec<SelectionRow>,
    pub acf: Vec<AcfRow>,
    pub failures: Vec<FailureRow>,
}

#[derive(Default)]
struct RepOutcome {
    ols: Option<(Vec<f64>, [f64; 2])>,
    owls: Option<(Vec<f64>, [f64; 2])>,
    aic: Option<ModelOrder>,
    bic: Option<ModelOrder>,
    acf: Option<Vec<f64>>,
    errors: Vec<String>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one (scenario, sample size) cell of a study.
pub fn cell_seed(seed: u64, scenario_index: usize, n: usize) -> u64 {
    splitmix(splitmix(seed ^ ((scenario_index as u64) << 40)) ^ n as u64)
}

fn run_rep(cfg: &McStudyConfig, sc: &Scenario, seed: u64, rep: usize, n: usize) -> RepOutcome {
    let mut out = RepOutcome::default();
    let mut rng = stream_rng(seed, rep as u64);
    let path = match simulate_with_rng(&sc.spec, n, cfg.burn_in, &mut rng) {
        Ok(p) => p,
        Err(e) => {
            out.errors.push(format!("simulate: {e}"));
            return out;
        }
    };
    let x: Vec<f64> = path.counts.iter().map(|&v| v as f64).collect();
    if cfg.acf_lags > 0 {
        out.acf = acf_raw(&x, cfg.acf_lags).map(|a| a[1..].to_vec());
    }
    let series = match CountSeries::new(path.counts, sc.name.clone()) {
        Ok(s) => s,
        Err(e) => {
            out.errors.push(e.to_string());
            return out;
        }
    };
    let fit_cfg = FitConfig { seed: splitmix(seed ^ rep as u64), ..cfg.fit.clone() };
    let spec = &sc.spec;
    if cfg.estimate {
        match fit_ols_owls(&series, spec.order, &spec.link, &spec.family, &fit_cfg) {
            Ok((ols, owls)) => {
                let lam = |f: &crate::estimator::FitResult| [f.lambda_hat.tau, f.lambda_hat.sigma_zeta_sq];
                out.ols = Some((ols.theta_hat.to_vec(), lam(&ols)));
                out.owls = Some((owls.theta_hat.to_vec(), lam(&owls)));
            }
            Err(e) => out.errors.push(format!("estimate: {e}")),
        }
    }
    if cfg.select {
        let grid = order_grid(cfg.max_order.0, cfg.max_order.1).expect("validated grid");
        match select_order(&series, &grid, &spec.link, &spec.family, &fit_cfg, Execution::Sequential) {
            Ok(r) => {
                out.aic = Some(r.chosen_aic);
                out.bic = Some(r.chosen_bic);
            }
            Err(e) => out.errors.push(format!("select: {e}")),
        }
    }
    out
}

fn param_names(order: ModelOrder) -> Vec<String> {
    std::iter::once("c".to_string())
        .chain((1..=order.p1).map(|i| format!("phi{i}")))
        .chain((1..=order.p2).map(|j| format!("psi{j}")))
        .collect()
}

fn aggregate_estimates(
    sc: &Scenario,
    n: usize,
    method: &str,
    draws: &[&(Vec<f64>, [f64; 2])],
) -> EstimateRow {
    let truth = sc.spec.theta.to_vec();
    let lam_truth = [sc.spec.lambda.tau, sc.spec.lambda.sigma_zeta_sq];
    let k = draws.len() as f64;
    let d = truth.len();
    let mut mean = vec![0.0; d];
    let mut mse = vec![0.0; d];
    let mut lmean = [0.0; 2];
    let mut lmse = [0.0; 2];
    for (theta, lam) in draws {
        for i in 0..d {
            mean[i] += theta[i] / k;
            mse[i] += (theta[i] - truth[i]).powi(2) / k;
        }
        for i in 0..2 {
            lmean[i] += lam[i] / k;
            lmse[i] += (lam[i] - lam_truth[i]).powi(2) / k;
        }
    }
    EstimateRow {
        scenario: sc.name.clone(),
        n,
        method: method.into(),
        params: param_names(sc.spec.order),
        truth,
        mean,
        rmse: mse.iter().map(|v| v.sqrt()).collect(),
        lambda_mean: lmean,
        lambda_rmse: [lmse[0].sqrt(), lmse[1].sqrt()],
        successes: draws.len(),
    }
}

/// Run every (scenario, sample size) cell. Replications run through
/// [`map_indexed`] and are aggregated in index order.
pub fn run_study(cfg: &McStudyConfig) -> Result<McStudyReport> {
    let scenarios = cfg.validate()?;
    let grid = order_grid(cfg.max_order.0, cfg.max_order.1)?;
    let mut report = McStudyReport { estimates: vec![], selection: vec![], acf: vec![], failures: vec![] };
    for (idx, sc) in &scenarios {
        for &n in &cfg.sample_sizes {
            let seed = cell_seed(cfg.seed, *idx, n);
            let reps = map_indexed(cfg.execution, cfg.replications, |r| run_rep(cfg, sc, seed, r, n));
            let failed = reps.iter().filter(|r| !r.errors.is_empty()).count();
            report.failures.push(FailureRow {
                scenario: sc.name.clone(),
                n,
                failed,
                replications: cfg.replications,
                flagged: failed as f64 > 0.05 * cfg.replications as f64,
                messages: reps.iter().flat_map(|r| r.errors.iter().cloned()).take(20).collect(),
            });
            if cfg.estimate {
                for (method, pick) in [("ols", 0), ("owls", 1)] {
                    let draws: Vec<_> = reps
                        .iter()
                        .filter_map(|r| if pick == 0 { r.ols.as_ref() } else { r.owls.as_ref() })
                        .collect();
                    report.estimates.push(aggregate_estimates(sc, n, method, &draws));
                }
            }
            if cfg.select {
                for (criterion, pick) in [("aic", 0), ("bic", 1)] {
                    let mut counts: BTreeMap<ModelOrder, usize> = grid.iter().map(|o| (*o, 0)).collect();
                    let mut failures = 0;
                    for r in &reps {
                        match if pick == 0 { r.aic } else { r.bic } {
                            Some(o) => *counts.entry(o).or_insert(0) += 1,
                            None => failures += 1,
                        }
                    }
                    report.selection.push(SelectionRow {
                        scenario: sc.name.clone(),
                        n,
                        criterion: criterion.into(),
                        true_order: sc.spec.order,
                        counts: counts.into_iter().collect(),
                        failures,
                    });
                }
            }
            if cfg.acf_lags > 0 {
                let acfs: Vec<&Vec<f64>> = reps.iter().filter_map(|r| r.acf.as_ref()).collect();
                let k = acfs.len().max(1) as f64;
                let mut mean = vec![0.0; cfg.acf_lags];
                for a in &acfs {
                    for (m, v) in mean.iter_mut().zip(a.iter()) {
                        *m += v / k;
                    }
                }
                report.acf.push(AcfRow {
                    scenario: sc.name.clone(),
                    n,
                    mean_acf: mean,
                    single_acf: reps[0].acf.clone().unwrap_or_default(),
                });
            }
        }
    }
    Ok(report)
}

impl McStudyReport {
    pub fn estimates_csv(&self) -> String {
        let mut out = String::from("scenario,n,method,param,truth,mean,rmse,successes\n");
        for r in &self.estimates {
            for i in 0..r.params.len() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.scenario, r.n, r.method, r.params[i], r.truth[i], r.mean[i], r.rmse[i], r.successes
                ));
            }
            for (i, name) in ["tau", "sigma_zeta_sq"].iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.scenario, r.n, r.method, name, 0.5, r.lambda_mean[i], r.lambda_rmse[i], r.successes
                ));
            }
        }
        out
    }

    pub fn selection_csv(&self) -> String {
        let mut out = String::from("scenario,n,criterion,p1,p2,count,true_order,failures\n");
        for r in &self.selection {
            for (o, c) in &r.counts {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.scenario,
                    r.n,
                    r.criterion,
                    o.p1,
                    o.p2,
                    c,
                    *o == r.true_order,
                    r.failures
                ));
            }
        }
        out
    }

    pub fn acf_csv(&self) -> String {
        let mut out = String::from("scenario,n,lag,mean_acf,single_acf\n");
        for r in &self.acf {
            for (k, m) in r.mean_acf.iter().enumerate() {
                let single = r.single_acf.get(k).map(|v| v.to_string()).unwrap_or_default();
                out.push_str(&format!("{},{},{},{},{}\n", r.scenario, r.n, k + 1, m, single));
            }
        }
        out
    }

    pub fn estimate(&self, scenario: &str, n: usize, method: &str) -> Option<&EstimateRow> {
        self.estimates.iter().find(|r| r.scenario == scenario && r.n == n && r.method == method)
    }

    pub fn selection_row(&self, scenario: &str, n: usize, criterion: &str) -> Option<&SelectionRow> {
        self.selection.iter().find(|r| r.scenario == scenario && r.n == n && r.criterion == criterion)
    }
}
