//! One function per subcommand. Each writes its files under the output
//! directory and returns the text printed to stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use rrc_garch::diagnostics::{diagnose, sample_acf_pacf, AcfTable, DiagnosticsReport};
use rrc_garch::estimator::{fit, Convergence, LambdaCov};
use rrc_garch::forecast::{mc_path_forecast, rolling_evaluate, ForecastSummary, HorizonSummary};
use rrc_garch::io::{counts_to_csv, load_config, load_spec, read_counts, write_text, Envelope, Ingested};
use rrc_garch::process::{simulate, theoretical_mean_acf, TheoreticalMoments};
use rrc_garch::selection::{aic, bic, order_grid, select_order};
use rrc_garch::study::{run_study, scenario, McStudyConfig};
use rrc_garch::{
    Error, Execution, FitConfig, FitResult, LambdaParams, LinkFunction, ModelOrder, ModelSpec, NuRule, Result,
    ThetaParams, VarianceFamily, WeightMode,
};

use crate::args::{
    AcfArgs, DiagnoseArgs, FitArgs, ForecastArgs, McStudyArgs, ModelArgs, SelectArgs, SimulateArgs, SpecSource,
};

/// Settings shared by every command.
pub struct Context {
    pub seed: Option<u64>,
    pub exec: Execution,
    pub out_dir: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write_report<C: Serialize, T: Serialize>(
        &self,
        name: &str,
        command: &str,
        seed: Option<u64>,
        config: &C,
        report: T,
    ) -> Result<PathBuf> {
        let path = self.path(name);
        write_text(&path, &Envelope::new(command, seed, config, report).to_json()?)?;
        Ok(path)
    }
}

pub fn parse_order(text: &str) -> Result<ModelOrder> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || Error::Config(format!("order must look like 'p1,p2', got '{text}'"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let p1 = parts[0].parse().map_err(|_| bad())?;
    let p2 = parts[1].parse().map_err(|_| bad())?;
    Ok(ModelOrder { p1, p2 })
}

fn split_scale(text: &str) -> Result<(&str, Option<f64>)> {
    match text.split_once(':') {
        None => Ok((text, None)),
        Some((name, v)) => {
            let v = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid parameter in '{text}'")))?;
            Ok((name, Some(v)))
        }
    }
}

pub fn parse_link(text: &str) -> Result<LinkFunction> {
    let (name, scale) = split_scale(text.trim())?;
    let sigma = scale.unwrap_or(1.0);
    let link = match name.to_ascii_lowercase().as_str() {
        "laplace" => LinkFunction::Laplace { sigma },
        "softplus" => LinkFunction::Softplus { sigma },
        "relu" if scale.is_none() => LinkFunction::Relu,
        _ => return Err(Error::Config(format!("unknown link '{text}'"))),
    };
    link.validate()?;
    Ok(link)
}

pub fn parse_family(text: &str) -> Result<VarianceFamily> {
    let (name, param) = split_scale(text.trim())?;
    let family = match (name.to_ascii_lowercase().as_str(), param) {
        ("base", None) => VarianceFamily::Base,
        ("extended-tau", None) => VarianceFamily::Extended { nu: NuRule::Tau },
        ("extended-r", None) => VarianceFamily::Extended { nu: NuRule::ROfMu },
        ("power", None) => VarianceFamily::Power,
        ("mixture", Some(r)) if r >= 0.0 && r.fract() == 0.0 && r <= u32::MAX as f64 => {
            VarianceFamily::Mixture { r: r as u32 }
        }
        _ => return Err(Error::Config(format!("unknown variance family '{text}'"))),
    };
    Ok(family)
}

fn parse_weights(text: &str) -> Result<WeightMode> {
    match text.to_ascii_lowercase().as_str() {
        "ols" => Ok(WeightMode::Ols),
        "owls" => Ok(WeightMode::Owls),
        _ => Err(Error::Config(format!("weights must be 'ols' or 'owls', got '{text}'"))),
    }
}

/// Resolved model options of a fitting command.
#[derive(Debug, Clone, Serialize)]
struct ModelSetup {
    link: LinkFunction,
    family: VarianceFamily,
    fit: FitConfig,
}

fn model_setup(args: &ModelArgs, ctx: &Context) -> Result<ModelSetup> {
    let mut fit = match &args.config {
        Some(p) => load_config::<FitConfig>(p)?,
        None => FitConfig::default(),
    };
    if let Some(w) = &args.weights {
        fit.weight_mode = parse_weights(w)?;
    }
    if let Some(seed) = ctx.seed {
        fit.seed = seed;
    }
    fit.validate()?;
    Ok(ModelSetup { link: parse_link(&args.link)?, family: parse_family(&args.family)?, fit })
}

fn load_source(src: &SpecSource) -> Result<Option<(ModelSpec, String)>> {
    match (&src.spec, &src.scenario) {
        (Some(p), _) => Ok(Some((load_spec(p)?, p.display().to_string()))),
        (None, Some(name)) => scenario(name)
            .map(|s| Some((s.spec, s.name)))
            .ok_or_else(|| Error::Config(format!("unknown scenario '{name}'"))),
        (None, None) => Ok(None),
    }
}

fn require_source(src: &SpecSource) -> Result<(ModelSpec, String)> {
    load_source(src)?.ok_or_else(|| Error::Config("either --spec or --scenario is required".into()))
}

fn load_data(path: &Path) -> Result<Ingested> {
    let data = read_counts(path)?;
    for note in &data.notes {
        eprintln!("note: {note}");
    }
    Ok(data)
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    source: String,
    spec: ModelSpec,
    n: usize,
    burn_in: usize,
    output: PathBuf,
    sample_mean: f64,
}

pub fn simulate_cmd(args: &SimulateArgs, ctx: &Context) -> Result<String> {
    let (spec, source) = require_source(&args.source)?;
    if args.n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    let seed = ctx.seed.unwrap_or(0);
    let path = simulate(&spec, args.n, args.burn_in, seed)?;
    let csv = args.output.clone().unwrap_or_else(|| ctx.path("simulated.csv"));
    write_text(&csv, &counts_to_csv(&path.counts))?;
    let sample_mean = path.counts.iter().sum::<u64>() as f64 / args.n as f64;
    let report = SimulateReport { source, spec, n: args.n, burn_in: args.burn_in, output: csv.clone(), sample_mean };
    let meta = csv.with_extension("json");
    let config = (&report.spec, report.n, report.burn_in);
    write_text(&meta, &Envelope::new("simulate", Some(seed), &config, &report).to_json()?)?;
    Ok(format!(
        "simulated {} observations (seed {seed}, sample mean {sample_mean:.4}) -> {}\n",
        args.n,
        csv.display()
    ))
}

/// Headline numbers of a fit, without the per-observation paths.
#[derive(Debug, Serialize)]
struct FitSummary {
    order: ModelOrder,
    link: LinkFunction,
    family: VarianceFamily,
    weight_mode: WeightMode,
    n: usize,
    theta_hat: ThetaParams,
    theta_sd: Option<Vec<f64>>,
    lambda_hat: LambdaParams,
    tau_identifiable: bool,
    lambda_cov: Option<LambdaCov>,
    objective: f64,
    aic: f64,
    bic: Option<f64>,
    convergence: Convergence,
    notes: Vec<String>,
}

impl FitSummary {
    fn new(f: &FitResult) -> Self {
        FitSummary {
            order: f.order,
            link: f.link,
            family: f.family,
            weight_mode: f.weight_mode,
            n: f.n,
            theta_hat: f.theta_hat.clone(),
            theta_sd: f.theta_sd.clone(),
            lambda_hat: f.lambda_hat,
            tau_identifiable: f.tau_identifiable,
            lambda_cov: f.lambda_cov.clone(),
            objective: f.objective_value,
            aic: aic(f),
            bic: bic(f).ok(),
            convergence: f.convergence.clone(),
            notes: f.notes.clone(),
        }
    }
}

/// Residual summary without the residual vector.
#[derive(Debug, Serialize)]
struct ResidualSummary {
    mean_r: f64,
    sd_r: f64,
    max_abs_acf: Option<f64>,
    acf_max_lag: usize,
    mar: f64,
    mspr: f64,
    generalized_variance: bool,
}

impl From<&DiagnosticsReport> for ResidualSummary {
    fn from(d: &DiagnosticsReport) -> Self {
        ResidualSummary {
            mean_r: d.mean_r,
            sd_r: d.sd_r,
            max_abs_acf: d.max_abs_acf,
            acf_max_lag: d.acf_max_lag,
            mar: d.mar,
            mspr: d.mspr,
            generalized_variance: d.generalized_variance,
        }
    }
}

fn param_names(order: ModelOrder) -> Vec<String> {
    let mut names = vec!["c".to_string()];
    names.extend((1..=order.p1).map(|i| format!("phi{i}")));
    names.extend((1..=order.p2).map(|j| format!("psi{j}")));
    names
}

fn describe_fit(f: &FitResult) -> String {
    let mut out = format!("order {} {} n={}\n", f.order, f.weight_mode, f.n);
    let sd = f.theta_sd.clone().unwrap_or_default();
    for (i, (name, v)) in param_names(f.order).iter().zip(f.theta_hat.to_vec()).enumerate() {
        match sd.get(i) {
            Some(s) => writeln!(out, "  {name:<6} {v:>10.4} ({s:.4})").unwrap(),
            None => writeln!(out, "  {name:<6} {v:>10.4}").unwrap(),
        }
    }
    writeln!(out, "  tau    {:>10.4}", f.lambda_hat.tau).unwrap();
    writeln!(out, "  sigma2 {:>10.4}", f.lambda_hat.sigma_zeta_sq).unwrap();
    out
}

fn diag_lags(n: usize, wanted: usize) -> usize {
    wanted.min(n.saturating_sub(2)).max(1)
}

fn fitted_csv(x: &[f64], f: &FitResult, residuals: &[f64]) -> String {
    let mut out = String::from("t,x,mu,var,residual\n");
    for t in 0..x.len() {
        writeln!(out, "{},{},{},{},{}", t + 1, x[t], f.fitted_mu[t], f.fitted_var[t], residuals[t]).unwrap();
    }
    out
}

#[derive(Debug, Serialize)]
struct FitReport {
    data: PathBuf,
    fit: FitSummary,
    diagnostics: ResidualSummary,
    ingestion_notes: Vec<String>,
}

pub fn fit_cmd(args: &FitArgs, ctx: &Context) -> Result<String> {
    let data = load_data(&args.data)?;
    let order = parse_order(&args.order)?;
    let setup = model_setup(&args.model, ctx)?;
    let f = fit(&data.series, order, &setup.link, &setup.family, &setup.fit)?;
    let x = data.series.to_f64();
    let diag = diagnose(&x, &f, diag_lags(x.len(), 20))?;
    write_text(&ctx.path("fitted.csv"), &fitted_csv(&x, &f, &diag.residuals))?;
    let report = FitReport {
        data: args.data.clone(),
        fit: FitSummary::new(&f),
        diagnostics: ResidualSummary::from(&diag),
        ingestion_notes: data.notes,
    };
    let mut out = describe_fit(&f);
    writeln!(out, "  AIC {:.4}  BIC {}", report.fit.aic, report.fit.bic.map(|b| format!("{b:.4}")).unwrap_or_default())
        .unwrap();
    writeln!(out, "  MAR {:.4}  MSPR {:.4}", diag.mar, diag.mspr).unwrap();
    let config = (&setup, order, &args.data);
    let path = ctx.write_report("fit.json", "fit", Some(setup.fit.seed), &config, report)?;
    writeln!(out, "report -> {}", path.display()).unwrap();
    Ok(out)
}

pub fn select_cmd(args: &SelectArgs, ctx: &Context) -> Result<String> {
    let data = load_data(&args.data)?;
    let max = parse_order(&args.max_order)?;
    let setup = model_setup(&args.model, ctx)?;
    let grid = order_grid(max.p1, max.p2)?;
    let report = select_order(&data.series, &grid, &setup.link, &setup.family, &setup.fit, ctx.exec)?;
    write_text(&ctx.path("selection.csv"), &report.to_csv())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut out = String::from("order        AIC          BIC\n");
    for c in &report.candidates {
        let f = |v: Option<f64>| v.map(|v| format!("{v:>12.4}")).unwrap_or_else(|| format!("{:>12}", "failed"));
        writeln!(out, "{:<6} {} {}", c.order.to_string(), f(c.aic), f(c.bic)).unwrap();
    }
    writeln!(out, "AIC chooses {}, BIC chooses {}", report.chosen_aic, report.chosen_bic).unwrap();
    let config = (&setup, max, &args.data);
    let path = ctx.write_report("selection.json", "select", Some(setup.fit.seed), &config, report)?;
    writeln!(out, "report -> {}", path.display()).unwrap();
    Ok(out)
}

#[derive(Debug, Serialize)]
struct ForecastOutput {
    data: PathBuf,
    holdout: usize,
    fit: FitSummary,
    rolling: Option<ForecastSummary>,
    paths: Option<Vec<HorizonSummary>>,
    notes: Vec<String>,
}

fn horizon_csv(rows: &[HorizonSummary]) -> String {
    let mut out = String::from("horizon,mean,variance,q05,q25,q50,q75,q95\n");
    for r in rows {
        let q = r.quantiles;
        writeln!(out, "{},{},{},{},{},{},{},{}", r.horizon, r.mean, r.variance, q[0], q[1], q[2], q[3], q[4]).unwrap();
    }
    out
}

pub fn forecast_cmd(args: &ForecastArgs, ctx: &Context) -> Result<String> {
    let data = load_data(&args.data)?;
    let order = parse_order(&args.order)?;
    let setup = model_setup(&args.model, ctx)?;
    let (train, _) = data.series.split_tail(args.holdout)?;
    let f = fit(&train, order, &setup.link, &setup.family, &setup.fit)?;
    let full = data.series.to_f64();
    let mut notes = data.notes.clone();
    let mut out = describe_fit(&f);
    let rolling = rolling_evaluate(&f, &full, args.holdout)?;
    if args.holdout == 0 {
        notes.push("holdout is 0: fit only, no forecasts evaluated".into());
        out.push_str("holdout is 0: fit only\n");
    } else {
        write_text(&ctx.path("forecast.csv"), &rolling.to_csv())?;
        if let Some(s) = &rolling.summary {
            writeln!(
                out,
                "holdout {}: MAR {:.4}  MSPR {:.4}  mean r {:.4}  sd r {:.4}",
                args.holdout, s.mar, s.mspr, s.mean_r, s.sd_r
            )
            .unwrap();
        }
    }
    let seed = ctx.seed.unwrap_or(setup.fit.seed);
    let paths = match args.horizon {
        Some(h) => {
            let rows = mc_path_forecast(&f, &full, h, args.paths, seed, ctx.exec)?;
            write_text(&ctx.path("path_forecast.csv"), &horizon_csv(&rows))?;
            writeln!(out, "simulated {} paths over {h} steps", args.paths).unwrap();
            Some(rows)
        }
        None => None,
    };
    let report = ForecastOutput {
        data: args.data.clone(),
        holdout: args.holdout,
        fit: FitSummary::new(&f),
        rolling: rolling.summary,
        paths,
        notes,
    };
    let config = (&setup, order, args.holdout, args.horizon, args.paths, &args.data);
    let path = ctx.write_report("forecast.json", "forecast", Some(seed), &config, report)?;
    writeln!(out, "report -> {}", path.display()).unwrap();
    Ok(out)
}

fn acf_csv(table: Option<&AcfTable>, theory: Option<&TheoreticalMoments>, lags: usize) -> String {
    let mut out = String::from("lag,acf,pacf,lower,upper,theoretical\n");
    for k in 1..=lags {
        let (a, p, lo, hi) = match table {
            Some(t) => (
                t.acf[k - 1].to_string(),
                t.pacf[k - 1].to_string(),
                (-t.band).to_string(),
                t.band.to_string(),
            ),
            None => Default::default(),
        };
        let th = theory.map(|m| m.acf[k].to_string()).unwrap_or_default();
        writeln!(out, "{k},{a},{p},{lo},{hi},{th}").unwrap();
    }
    out
}

#[derive(Debug, Serialize)]
struct DiagnoseOutput {
    data: PathBuf,
    fit: FitSummary,
    diagnostics: ResidualSummary,
    residual_acf: AcfTable,
}

pub fn diagnose_cmd(args: &DiagnoseArgs, ctx: &Context) -> Result<String> {
    let data = load_data(&args.data)?;
    let order = parse_order(&args.order)?;
    let setup = model_setup(&args.model, ctx)?;
    let f = fit(&data.series, order, &setup.link, &setup.family, &setup.fit)?;
    let x = data.series.to_f64();
    let lags = diag_lags(x.len(), args.lags);
    let diag = diagnose(&x, &f, lags)?;
    let table = sample_acf_pacf(&diag.residuals, lags)?;
    write_text(&ctx.path("residuals.csv"), &fitted_csv(&x, &f, &diag.residuals))?;
    write_text(&ctx.path("residual_acf.csv"), &acf_csv(Some(&table), None, lags))?;
    let mut out = describe_fit(&f);
    writeln!(
        out,
        "residuals: mean {:.4}  sd {:.4}  MSPR {:.4}  MAR {:.4}  max |acf| (lags 1-{lags}) {}",
        diag.mean_r,
        diag.sd_r,
        diag.mspr,
        diag.mar,
        diag.max_abs_acf.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into())
    )
    .unwrap();
    writeln!(out, "white-noise band ±{:.4}", table.band).unwrap();
    let report = DiagnoseOutput {
        data: args.data.clone(),
        fit: FitSummary::new(&f),
        diagnostics: ResidualSummary::from(&diag),
        residual_acf: table,
    };
    let config = (&setup, order, lags, &args.data);
    let path = ctx.write_report("diagnostics.json", "diagnose", Some(setup.fit.seed), &config, report)?;
    writeln!(out, "report -> {}", path.display()).unwrap();
    Ok(out)
}

pub fn mc_study_cmd(args: &McStudyArgs, ctx: &Context) -> Result<String> {
    let mut cfg = match &args.config {
        Some(p) => load_config::<McStudyConfig>(p)?,
        None => McStudyConfig::default(),
    };
    if !args.scenarios.is_empty() {
        cfg.scenarios = args.scenarios.clone();
    }
    if !args.sizes.is_empty() {
        cfg.sample_sizes = args.sizes.clone();
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    if args.no_estimate {
        cfg.estimate = false;
    }
    if args.no_select {
        cfg.select = false;
    }
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg.execution = ctx.exec;
    let report = run_study(&cfg)?;
    if cfg.estimate {
        write_text(&ctx.path("estimates.csv"), &report.estimates_csv())?;
    }
    if cfg.select {
        write_text(&ctx.path("selection.csv"), &report.selection_csv())?;
    }
    if cfg.acf_lags > 0 {
        write_text(&ctx.path("acf.csv"), &report.acf_csv())?;
    }
    let mut out = String::new();
    for r in &report.estimates {
        let cells: Vec<String> =
            r.params.iter().zip(r.mean.iter().zip(&r.rmse)).map(|(p, (m, e))| format!("{p} {m:.4} ({e:.4})")).collect();
        writeln!(out, "{} n={} {}: {}", r.scenario, r.n, r.method, cells.join("  ")).unwrap();
    }
    for r in &report.selection {
        writeln!(
            out,
            "{} n={} {}: true order {} chosen {}/{}",
            r.scenario,
            r.n,
            r.criterion,
            r.true_order,
            r.true_order_count(),
            cfg.replications
        )
        .unwrap();
    }
    for f in report.failures.iter().filter(|f| f.failed > 0) {
        let flag = if f.flagged { " (flagged)" } else { "" };
        eprintln!("warning: {} n={}: {}/{} replications failed{flag}", f.scenario, f.n, f.failed, f.replications);
    }
    let seed = cfg.seed;
    let path = ctx.write_report("study.json", "mc-study", Some(seed), &cfg, report)?;
    writeln!(out, "report -> {}", path.display()).unwrap();
    Ok(out)
}

#[derive(Debug, Serialize)]
struct AcfOutput {
    data: Option<PathBuf>,
    source: Option<String>,
    lags: usize,
    sample: Option<AcfTable>,
    theoretical: Option<TheoreticalMoments>,
}

pub fn acf_cmd(args: &AcfArgs, ctx: &Context) -> Result<String> {
    if args.lags == 0 {
        return Err(Error::Config("lags must be at least 1".into()));
    }
    if args.data.is_none() && !args.theoretical {
        return Err(Error::Config("give --data, or --theoretical with --spec or --scenario".into()));
    }
    let sample = match &args.data {
        Some(p) => Some(sample_acf_pacf(&load_data(p)?.series.to_f64(), args.lags)?),
        None => None,
    };
    let (theory, source) = if args.theoretical {
        let (spec, source) = require_source(&args.source)?;
        (Some(theoretical_mean_acf(&spec, args.lags)?), Some(source))
    } else {
        (None, None)
    };
    write_text(&ctx.path("acf.csv"), &acf_csv(sample.as_ref(), theory.as_ref(), args.lags))?;
    let mut out = String::from("lag      acf     pacf  theoretical\n");
    for k in 1..=args.lags {
        let s = |v: Option<f64>| v.map(|v| format!("{v:>8.4}")).unwrap_or_else(|| format!("{:>8}", "-"));
        writeln!(
            out,
            "{k:>3} {} {} {}",
            s(sample.as_ref().map(|t| t.acf[k - 1])),
            s(sample.as_ref().map(|t| t.pacf[k - 1])),
            s(theory.as_ref().map(|m| m.acf[k]))
        )
        .unwrap();
    }
    if let Some(t) = &sample {
        writeln!(out, "white-noise band ±{:.4}", t.band).unwrap();
    }
    if let Some(m) = &theory {
        let flag = if m.experimental { " (experimental for this family)" } else { "" };
        writeln!(out, "stationary mean {:.4}{flag}", m.mean).unwrap();
    }
    let report = AcfOutput { data: args.data.clone(), source, lags: args.lags, sample, theoretical: theory };
    let config = (&args.data, &report.source, args.lags, args.theoretical);
    let path = ctx.write_report("acf.json", "acf", ctx.seed, &config, &report)?;
    writeln!(out, "report -> {}", path.display()).unwrap();
    Ok(out)
}
