use qmed::estimands::evaluate;
use qmed::estimation::{fit, fit_dag_moments, fit_marginal, model_scores, FitSpec};
use qmed::gsem::{implied_correlation, CopulaKernel, DagParams, ScoreMoments};
use qmed::rng::data_stream;
use qmed::sim::{sample_gsem, SimScenario};
use qmed::{Dataset, Family, Link, Role};

fn scenario(n: usize, alpha: f64, beta: f64, gamma: f64) -> SimScenario {
    SimScenario { n, dag: DagParams::new(alpha, beta, gamma), ..SimScenario::default() }
}

#[test]
fn gamma_glm_coefficients_are_consistent() {
    let sc = SimScenario { families: FitSpec::new(Family::Normal, Family::Normal, Family::Gamma), dispersion_y: 0.5, ..scenario(10_000, 0.3, 0.3, 0.3) };
    let data = sample_gsem(&sc, &mut data_stream(11)).unwrap();
    let f = fit_marginal(&data, Role::Y, Family::Gamma, Link::Log).unwrap();
    assert!(f.converged);
    let err = f.model.zeta.iter().zip(&sc.zeta_y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 0.05, "max coefficient error {err}");
    assert!((f.model.phi - 0.5).abs() < 0.05, "dispersion {}", f.model.phi);
}

#[test]
fn dag_estimates_are_consistent() {
    for (truth, seed) in [((0.0, 0.0, 0.0), 3u64), ((0.5, 0.5, 0.5), 4)] {
        let data = sample_gsem(&scenario(10_000, truth.0, truth.1, truth.2), &mut data_stream(seed)).unwrap();
        let dag = *fit(&data, &FitSpec::default()).unwrap().dag();
        for (est, tru) in [(dag.alpha_s, truth.0), (dag.beta_m, truth.1), (dag.gamma_s, truth.2)] {
            assert!((est - tru).abs() < 0.05, "{dag:?} vs {truth:?}");
        }
    }
}

#[test]
fn stage_two_is_a_stationary_improvement_over_independence() {
    let data = sample_gsem(&scenario(500, 0.4, 0.3, 0.5), &mut data_stream(5)).unwrap();
    let f = fit(&data, &FitSpec::default()).unwrap();
    assert!(f.all_converged());
    assert!(f.stage2_gradient_norm < 1e-6, "gradient norm {}", f.stage2_gradient_norm);
    let moments = ScoreMoments::from_scores(&model_scores(&f.model, &data).unwrap());
    let at_zero = CopulaKernel::new(&implied_correlation(&DagParams::zero()).unwrap()).unwrap().log_likelihood(&moments);
    assert!(f.stage2_loglik >= at_zero);
    let r = implied_correlation(f.dag()).unwrap();
    assert!(r.iter().all(|v| v.abs() <= 1.0));
    assert!([r[(0, 1)], r[(0, 2)], r[(1, 2)]].iter().all(|v| v.abs() < 1.0));
    let again = fit_dag_moments(&moments, 0.0).unwrap();
    assert!((again.loglik - f.stage2_loglik).abs() < 1e-9);
}

#[test]
fn refitting_is_deterministic_and_row_order_free() {
    let data = sample_gsem(&scenario(400, 0.5, 0.2, 0.5), &mut data_stream(6)).unwrap();
    let a = fit(&data, &FitSpec::default()).unwrap();
    let b = fit(&data, &FitSpec::default()).unwrap();
    assert_eq!(a, b);
    let idx: Vec<usize> = (0..data.n()).rev().collect();
    let c = fit(&data.select(&idx), &FitSpec::default()).unwrap();
    let (da, dc) = (a.dag(), c.dag());
    for (u, v) in [(da.alpha_s, dc.alpha_s), (da.beta_m, dc.beta_m), (da.gamma_s, dc.gamma_s)] {
        assert!((u - v).abs() < 1e-10, "{u} vs {v}");
    }
    for (u, v) in a.model.marginal_y.zeta.iter().zip(&c.model.marginal_y.zeta) {
        assert!((u - v).abs() < 1e-10);
    }
}

#[test]
fn plug_in_indirect_effect_is_within_three_monte_carlo_sds() {
    let sc = scenario(1000, 0.5, 0.5, 0.5);
    let truth = evaluate(&sc.model().unwrap(), &sc.query).unwrap().qnie;
    let estimates: Vec<f64> = (0..40)
        .map(|r| {
            let d = sample_gsem(&sc, &mut data_stream(1000 + r)).unwrap();
            evaluate(&fit(&d, &sc.families).unwrap().model, &sc.query).unwrap().qnie
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / 40.0;
    let sd = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 39.0).sqrt();
    let one = sample_gsem(&sc, &mut data_stream(7)).unwrap();
    let est = evaluate(&fit(&one, &sc.families).unwrap().model, &sc.query).unwrap().qnie;
    assert!((est - truth).abs() < 3.0 * sd, "estimate {est}, truth {truth}, sd {sd}");
}

#[test]
fn intercept_only_fits_have_closed_forms() {
    let y = vec![0.5, 1.5, 2.0, 4.0, 0.25];
    let n = y.len() as f64;
    let data = Dataset::new(y.clone(), y.clone(), y.clone(), vec![vec![1.0]; y.len()]).unwrap();
    let mean = y.iter().sum::<f64>() / n;
    let f = fit_marginal(&data, Role::Y, Family::Exponential, Link::Log).unwrap();
    assert!((f.model.zeta[0].exp() - 1.0 / mean).abs() < 1e-10);
    let g = fit_marginal(&data, Role::S, Family::Normal, Link::Identity).unwrap();
    assert!((g.model.zeta[0] - mean).abs() < 1e-12);
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!((g.model.phi - var).abs() < 1e-12);
}
