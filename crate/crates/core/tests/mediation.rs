use qmed::estimands::evaluate;
use qmed::estimation::{fit, FitSpec};
use qmed::mediation::{
    ab_from_bootstrap, ab_test, classical_bootstrap_test, gsem_bootstrap, joint_significance_p, lambda_n, path_estimates, run_tests,
    AbConfig, Method,
};
use qmed::normal;
use qmed::rng::data_stream;
use qmed::sim::{sample_gsem, SimScenario};
use qmed::stats;
use qmed::DagParams;

fn data(alpha: f64, beta: f64, n: usize, seed: u64) -> (SimScenario, qmed::Dataset) {
    let sc = SimScenario { n, dag: DagParams::new(alpha, beta, 0.5), ..SimScenario::default() };
    let d = sample_gsem(&sc, &mut data_stream(seed)).unwrap();
    (sc, d)
}

fn cfg(replicates: usize, seed: u64) -> AbConfig {
    AbConfig { replicates, seed, ..AbConfig::default() }
}

#[test]
fn zero_threshold_reduces_to_the_classical_bootstrap() {
    let (sc, d) = data(0.0, 0.0, 300, 21);
    let c = AbConfig { lambda_scale: 0.0, ..cfg(200, 5) };
    let ab = ab_test(&d, &sc.families, &sc.query, &c).unwrap();
    let classical = classical_bootstrap_test(&d, &sc.families, &sc.query, &c).unwrap();
    assert_eq!(ab.statistics, classical.statistics);
    assert_eq!(ab.p_value, classical.p_value);
    assert_eq!(ab.reject, classical.reject);
    assert_eq!(ab.diagnostics.flag_fraction, Some(0.0));
}

#[test]
fn every_replicate_takes_exactly_one_branch() {
    let (sc, d) = data(0.0, 0.0, 300, 22);
    let c = cfg(200, 6);
    let boot = gsem_bootstrap(&d, &sc.families, &sc.query, &c).unwrap();
    let ab = ab_from_bootstrap(&boot, &c).unwrap();
    let flag = ab.diagnostics.flag_fraction.unwrap();
    assert!((0.0..=1.0).contains(&flag));
    let n = d.n() as f64;
    let (a0, b0) = (boot.base.dag().alpha_s, boot.base.dag().beta_m);
    let mut local = 0;
    for (u, r) in ab.statistics.iter().zip(&boot.replicates) {
        let classical = r.qnie - boot.base_qnie;
        let (z1, z2) = (n.sqrt() * (r.alpha - a0), n.sqrt() * (r.beta - b0));
        let drift = (1.0 / n) * r.drift.statistic(z1, z2, 0.0, 0.0);
        assert!(*u == classical || *u == drift);
        local += (*u == drift && *u != classical) as usize;
    }
    assert_eq!(local as f64 / ab.statistics.len() as f64, flag);
}

#[test]
fn results_do_not_depend_on_the_worker_count() {
    let (sc, d) = data(0.3, 0.0, 200, 23);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run_tests(&d, &sc.families, &sc.query, &cfg(150, 9), &Method::ALL).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(1));
}

#[test]
fn joint_significance_is_the_larger_path_p_value() {
    assert_eq!(joint_significance_p(0.01, 0.2), 0.2);
    let (sc, d) = data(0.3, 0.3, 300, 24);
    let paths = path_estimates(&d, sc.query.tau).unwrap();
    let results = run_tests(&d, &sc.families, &sc.query, &cfg(100, 1), &[Method::JsYm]).unwrap();
    let p_a = 2.0 * normal::sf((paths.a / paths.se_a).abs());
    let p_b = 2.0 * normal::sf((paths.b / paths.se_b).abs());
    assert!(results[0].p_value >= p_a.min(1.0) && results[0].p_value >= p_b.min(1.0));
}

#[test]
fn identical_seeds_give_identical_p_values() {
    let (sc, d) = data(0.5, 0.0, 300, 25);
    let a = classical_bootstrap_test(&d, &sc.families, &sc.query, &cfg(100, 3)).unwrap();
    let b = classical_bootstrap_test(&d, &sc.families, &sc.query, &cfg(100, 3)).unwrap();
    assert_eq!(a, b);
    let c = classical_bootstrap_test(&d, &sc.families, &sc.query, &cfg(100, 4)).unwrap();
    assert_ne!(a.statistics, c.statistics);
}

#[test]
fn pretest_keeps_null_paths_below_threshold() {
    let lam = lambda_n(300, 2.0);
    let mut below = 0;
    let reps = 60;
    for r in 0..reps {
        let (sc, d) = data(0.0, 0.0, 300, 500 + r);
        let t = ab_test(&d, &sc.families, &sc.query, &cfg(100, r)).unwrap();
        below += (t.diagnostics.t_alpha.unwrap().abs() <= lam) as usize;
    }
    assert!(below as f64 >= 0.95 * reps as f64, "{below} of {reps}");
}

const SAMPLING: u64 = 1500;
const POOLED: u64 = 10;

/// Kolmogorov-Smirnov distance between the pooled bootstrap law of `n·U*`
/// and the sampling law of `n(q̂ − q)` under the doubly null configuration.
fn bootstrap_gap(n: usize) -> f64 {
    let sc = SimScenario { n, dag: DagParams::new(0.0, 0.0, 0.5), ..SimScenario::default() };
    let truth = evaluate(&sc.model().unwrap(), &sc.query).unwrap().qnie;
    let sampling: Vec<f64> = (0..SAMPLING)
        .map(|r| {
            let d = sample_gsem(&sc, &mut data_stream(9000 + r)).unwrap();
            n as f64 * (evaluate(&fit(&d, &sc.families).unwrap().model, &sc.query).unwrap().qnie - truth)
        })
        .collect();
    let mut pooled = Vec::new();
    for r in 0..POOLED {
        let d = sample_gsem(&sc, &mut data_stream(7000 + r)).unwrap();
        let t = ab_test(&d, &FitSpec::default(), &sc.query, &cfg(300, r)).unwrap();
        pooled.extend(t.statistics.iter().map(|u| n as f64 * u));
    }
    stats::ks_two_sample(&pooled, &sampling)
}

#[test]
fn bootstrap_law_approaches_the_sampling_law() {
    let small = bootstrap_gap(200);
    let large = bootstrap_gap(800);
    println!("KS distance n=200: {small:.4}, n=800: {large:.4}");
    assert!(large < small, "{large} >= {small}");
}
