//! Property tests for the invariants of the kernel, simulator, estimator,
//! criteria, diagnostics and forecasts.

use proptest::prelude::*;

use rrc_garch::diagnostics::{mar, pearson_residuals_from_paths};
use rrc_garch::estimator::{fit_ols, fit_theta, mu_gradient_path, mu_tilde_path, wls_objective, FitConfig};
use rrc_garch::forecast::one_step;
use rrc_garch::kernel::{r_fun, round1, round2, v_tau, LinkFunction, NuRule, VarianceFamily};
use rrc_garch::parallel::{map_indexed, stream_rng, Execution};
use rrc_garch::process::{
    conditional_moments, simulate, InnovationLaw, LambdaParams, ModelOrder, ModelSpec, ThetaParams,
};
use rrc_garch::selection::{aic, bic, goodness, parameter_count};
use rrc_garch::study::{run_study, McStudyConfig};

fn family_strategy() -> impl Strategy<Value = VarianceFamily> {
    prop_oneof![
        Just(VarianceFamily::Base),
        Just(VarianceFamily::Extended { nu: NuRule::Tau }),
        Just(VarianceFamily::Extended { nu: NuRule::ROfMu }),
        Just(VarianceFamily::Power),
        (1u32..5).prop_map(|r| VarianceFamily::Mixture { r }),
    ]
}

fn link_strategy() -> impl Strategy<Value = LinkFunction> {
    prop_oneof![
        (0.2f64..3.0).prop_map(|sigma| LinkFunction::Laplace { sigma }),
        (0.2f64..3.0).prop_map(|sigma| LinkFunction::Softplus { sigma }),
    ]
}

/// A (1,1) parameter inside the ℓ1 ball of radius 0.9.
fn theta11() -> impl Strategy<Value = ThetaParams> {
    (-1.0f64..3.0, -0.9f64..0.9, -0.9f64..0.9).prop_filter_map("outside ball", |(c, a, b)| {
        (a.abs() + b.abs() < 0.9).then(|| ThetaParams::new(c, vec![a], vec![b]))
    })
}

fn spec11(theta: ThetaParams, link: LinkFunction, family: VarianceFamily, tau: f64) -> ModelSpec {
    ModelSpec::new(
        ModelOrder { p1: 1, p2: 1 },
        link,
        family,
        theta,
        LambdaParams { tau, sigma_zeta_sq: 0.5 },
        InnovationLaw::Binomial2Half,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn r_fun_is_bounded(c in -1e6f64..1e6) {
        let r = r_fun(c);
        prop_assert!((0.0..=0.25).contains(&r));
    }

    #[test]
    fn round1_picks_adjacent_integer(x in -1e4f64..1e4, u in 0.0f64..1.0) {
        let k = round1(x, u).unwrap() as f64;
        let lo = x.floor();
        prop_assert!(k == lo || k == lo + 1.0);
        prop_assert_eq!(k == lo, u < 1.0 + lo - x);
    }

    #[test]
    fn round2_brackets_square_root(x in 0.0f64..1e6, u in 0.0f64..1.0) {
        let k = round2(x, u).unwrap() as f64;
        let lo = x.sqrt().floor();
        prop_assert!(k == lo || k == lo + 1.0);
    }

    #[test]
    fn v_tau_interpolates_integer_powers(k in 0u32..500, tau in 0.01f64..1.0) {
        let v = v_tau(k as f64, tau).unwrap();
        let want = if k == 0 { 0.0 } else { (k as f64).powf(2.0 * tau) };
        prop_assert!((v - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn family_shapes_are_nonnegative(family in family_strategy(), mu in 0.0f64..200.0, tau in 0.01f64..1.0) {
        let d = family.shape(mu, tau);
        prop_assert!(d.is_finite() && d >= 0.0);
    }

    #[test]
    fn links_are_positive_and_dominate_relu(link in link_strategy(), u in -50.0f64..50.0) {
        let y = link.eval(u);
        prop_assert!(y > 0.0 || u < -30.0 * link.sigma());
        prop_assert!(y >= u.max(0.0) - 1e-12);
        prop_assert!(link.eval(u + 0.5) >= y);
    }

    #[test]
    fn conditional_variance_closed_form(
        family in family_strategy(),
        mu in 0.0f64..100.0,
        tau in 0.05f64..1.0,
    ) {
        let spec = spec11(ThetaParams::new(0.5, vec![0.3], vec![0.3]), LinkFunction::default(), family, tau);
        let (m, v) = conditional_moments(&spec, mu).unwrap();
        prop_assert_eq!(m, mu);
        let want = r_fun(mu) + family.shape(mu, tau) * 0.5;
        prop_assert!((v - want).abs() <= 1e-12 * want.max(1.0));
        prop_assert!(v >= r_fun(mu));
    }

    #[test]
    fn mar_is_translation_invariant(
        pairs in prop::collection::vec((0.0f64..50.0, 0.0f64..50.0), 1..60),
        shift in -20.0f64..20.0,
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mu: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let ms: Vec<f64> = mu.iter().map(|v| v + shift).collect();
        let a = mar(&x, &mu).unwrap();
        let b = mar(&xs, &ms).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn pearson_residuals_of_exact_means_vanish(mu in prop::collection::vec(0.0f64..50.0, 1..40)) {
        let var: Vec<f64> = mu.iter().map(|m| r_fun(*m) + 0.5).collect();
        let r = pearson_residuals_from_paths(&mu, &mu, &var).unwrap();
        prop_assert!(r.iter().all(|v| *v == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulated_paths_are_consistent(
        theta in theta11(),
        family in family_strategy(),
        tau in 0.05f64..1.0,
        seed in any::<u64>(),
    ) {
        let spec = spec11(theta, LinkFunction::default(), family, tau);
        let path = simulate(&spec, 200, 50, seed).unwrap();
        prop_assert_eq!(path.len(), 200);
        for (m, v) in path.mu.iter().zip(&path.variance) {
            prop_assert!(m.is_finite() && *m >= 0.0);
            prop_assert!((v - spec.conditional_variance(*m)).abs() <= 1e-12 * v.max(1.0));
        }
        let again = simulate(&spec, 200, 50, seed).unwrap();
        prop_assert_eq!(path, again);
    }

    #[test]
    fn gradient_matches_finite_differences(
        theta in theta11(),
        link in link_strategy(),
        seed in any::<u64>(),
    ) {
        let spec = spec11(theta.clone(), link, VarianceFamily::Base, 0.5);
        let x: Vec<f64> = simulate(&spec, 80, 20, seed).unwrap().counts.iter().map(|v| *v as f64).collect();
        let grad = mu_gradient_path(&theta, &link, &x).unwrap();
        let base = theta.to_vec();
        let h = 1e-6;
        for k in 0..base.len() {
            let mut up = base.clone();
            let mut dn = base.clone();
            up[k] += h;
            dn[k] -= h;
            let order = theta.order();
            let (mu_up, _) = mu_tilde_path(&ThetaParams::from_slice(order, &up), &link, &x);
            let (mu_dn, _) = mu_tilde_path(&ThetaParams::from_slice(order, &dn), &link, &x);
            for t in 0..x.len() {
                let fd = (mu_up[t] - mu_dn[t]) / (2.0 * h);
                let an = grad.row(t)[k];
                prop_assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "t={t} k={k} fd={fd} an={an}");
            }
        }
    }

    #[test]
    fn one_step_forecast_variance_bound(seed in 0u64..1_000, h in 1usize..40) {
        let spec = spec11(ThetaParams::new(1.0, vec![0.4], vec![0.2]), LinkFunction::default(), VarianceFamily::Base, 0.6);
        let series = simulate(&spec, 300, 100, seed).unwrap().into_series("x").unwrap();
        let cfg = FitConfig { multistart: 2, ..FitConfig::default() };
        let fit = fit_ols(&series, spec.order, &spec.link, &spec.family, &cfg).unwrap();
        let x = series.to_f64();
        let (m, v) = one_step(&fit, &x[..x.len() - h]).unwrap();
        prop_assert!(m.is_finite() && m >= 0.0);
        prop_assert!(v >= r_fun(m) - 1e-12);
        let want = r_fun(m) + fit.lambda_hat.sigma_zeta_sq * fit.family.shape(m, fit.lambda_hat.tau);
        prop_assert!((v - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn map_indexed_is_execution_independent(n in 0usize..300, seed in any::<u64>()) {
        use rand::Rng;
        let f = |i: usize| stream_rng(seed, i as u64).random::<u64>();
        let a = map_indexed(Execution::Sequential, n, f);
        let b = map_indexed(Execution::Parallel, n, f);
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fitted_objective_not_above_truth(seed in 0u64..10_000, c in 0.2f64..2.0, phi in 0.1f64..0.7) {
        let theta = ThetaParams::new(c, vec![phi], vec![]);
        let spec = ModelSpec::new(
            ModelOrder { p1: 1, p2: 0 },
            LinkFunction::default(),
            VarianceFamily::Base,
            theta.clone(),
            LambdaParams { tau: 0.5, sigma_zeta_sq: 0.5 },
            InnovationLaw::Binomial2Half,
        )
        .unwrap();
        let x: Vec<f64> = simulate(&spec, 400, 200, seed).unwrap().counts.iter().map(|v| *v as f64).collect();
        let w = vec![1.0; x.len()];
        let at_truth = wls_objective(&theta, &spec.link, &x, &w).unwrap();
        let fit = fit_theta(&x, spec.order, &spec.link, &FitConfig::default(), &w).unwrap();
        prop_assert!(fit.convergence.converged);
        prop_assert!(fit.objective <= at_truth * (1.0 + 1e-12), "{} > {}", fit.objective, at_truth);
        let again = wls_objective(&fit.theta, &spec.link, &x, &w).unwrap();
        prop_assert!((again - fit.objective).abs() <= 1e-12 * again);
        prop_assert!(fit.theta.abs_sum() <= 1.0 - 1e-3 + 1e-12);
    }

    #[test]
    fn criteria_decompose(seed in 0u64..10_000, p2 in 0usize..2) {
        let spec = spec11(ThetaParams::new(1.0, vec![0.3], vec![0.3]), LinkFunction::default(), VarianceFamily::Base, 0.5);
        let series = simulate(&spec, 250, 100, seed).unwrap().into_series("x").unwrap();
        let order = ModelOrder { p1: 1, p2 };
        let cfg = FitConfig { multistart: 2, ..FitConfig::default() };
        let fit = fit_ols(&series, order, &spec.link, &spec.family, &cfg).unwrap();
        let k = parameter_count(order);
        prop_assert_eq!(k, (3 + 1 + p2) as f64);
        let g = goodness(&fit);
        prop_assert!((aic(&fit) - g - 2.0 * k).abs() <= 1e-9 * g.abs().max(1.0));
        let pen = ((fit.n - order.p() - 1) as f64).ln() * k;
        prop_assert!((bic(&fit).unwrap() - g - pen).abs() <= 1e-9 * g.abs().max(1.0));
    }
}

#[test]
fn selection_frequencies_sum_to_replications() {
    let cfg = McStudyConfig {
        scenarios: vec!["M1b".into(), "M4a".into()],
        sample_sizes: vec![150],
        replications: 6,
        estimate: false,
        select: true,
        acf_lags: 0,
        max_order: (2, 1),
        fit: FitConfig { multistart: 2, ..FitConfig::default() },
        ..McStudyConfig::default()
    };
    let report = run_study(&cfg).unwrap();
    assert_eq!(report.selection.len(), 4);
    for row in &report.selection {
        let total: usize = row.counts.iter().map(|c| c.1).sum();
        assert_eq!(total + row.failures, cfg.replications, "{row:?}");
    }
}
