//! Tests of a zero conditional quantile natural indirect effect: the adaptive
//! bootstrap test, the naive bootstrap test and four path-coefficient
//! competitors.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{QmedError, Result};
use crate::estimands::{evaluate, EstimandQuery};
use crate::estimation::{fit, FitResult, FitSpec};
use crate::gsem::normal_score;
use crate::normal;
use crate::quantreg;
use crate::rng::replicate_stream;
use crate::stats;

/// Fewest usable replicates for which bootstrap spreads are computed.
pub const MIN_REPLICATES: usize = 30;
/// Largest tolerated fraction of failed bootstrap replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbConfig {
    /// Bootstrap replicates `B`.
    pub replicates: usize,
    pub lambda_scale: f64,
    /// Nominal level.
    pub omega: f64,
    /// Local drift constants; zero for the test itself.
    pub b_alpha: f64,
    pub b_beta: f64,
    pub seed: u64,
    /// Center the bootstrap path statistics at the full-data estimates.
    pub centered_z: bool,
}

impl Default for AbConfig {
    fn default() -> Self {
        Self { replicates: 500, lambda_scale: 2.0, omega: 0.05, b_alpha: 0.0, b_beta: 0.0, seed: 0, centered_z: true }
    }
}

impl AbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 100 {
            return Err(QmedError::InvalidArgument(format!("at least 100 bootstrap replicates are required, got {}", self.replicates)));
        }
        if !(self.lambda_scale >= 0.0 && self.lambda_scale.is_finite()) {
            return Err(QmedError::InvalidArgument(format!("lambda scale must be non-negative, got {}", self.lambda_scale)));
        }
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return Err(QmedError::ProbabilityOutOfRange(self.omega));
        }
        if !(self.b_alpha.is_finite() && self.b_beta.is_finite()) {
            return Err(QmedError::InvalidArgument("drift constants must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "QMA_AB")]
    QmaAb,
    #[serde(rename = "QMA_B")]
    QmaB,
    #[serde(rename = "PoC_B")]
    PocB,
    #[serde(rename = "PoC_YM")]
    PocYm,
    #[serde(rename = "JS_B")]
    JsB,
    #[serde(rename = "JS_YM")]
    JsYm,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::QmaAb, Method::QmaB, Method::PocB, Method::PocYm, Method::JsB, Method::JsYm];

    pub fn label(self) -> &'static str {
        match self {
            Method::QmaAb => "QMA_AB",
            Method::QmaB => "QMA_B",
            Method::PocB => "PoC_B",
            Method::PocYm => "PoC_YM",
            Method::JsB => "JS_B",
            Method::JsYm => "JS_YM",
        }
    }

    fn needs_gsem_bootstrap(self) -> bool {
        matches!(self, Method::QmaAb | Method::QmaB)
    }

    fn needs_path_bootstrap(self) -> bool {
        matches!(self, Method::PocB | Method::JsB)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = QmedError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.label().to_ascii_lowercase() == key)
            .ok_or_else(|| QmedError::InvalidArgument(format!("unknown method '{s}' (expected one of qma_ab, qma_b, poc_b, poc_ym, js_b, js_ym)")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TestDiagnostics {
    /// Fraction of replicates in which both pretest flags are raised.
    pub flag_fraction: Option<f64>,
    pub t_alpha: Option<f64>,
    pub t_beta: Option<f64>,
    pub lambda_n: Option<f64>,
    /// Replicates that were fitted successfully.
    pub b_effective: usize,
    pub failed_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub estimate: f64,
    pub p_value: f64,
    pub reject: bool,
    pub interval: Option<(f64, f64)>,
    pub diagnostics: TestDiagnostics,
    /// Bootstrap statistics the decision was based on, in replicate order.
    #[serde(skip)]
    pub statistics: Vec<f64>,
}

/// `lambda_scale · √n / log n`, for `n ≥ 3`.
pub fn lambda_n(n: usize, lambda_scale: f64) -> f64 {
    lambda_scale * (n as f64).sqrt() / (n as f64).ln()
}

/// `√n · estimate / sigma`.
pub fn pretest_statistic(estimate: f64, sigma: f64, n: usize) -> f64 {
    (n as f64).sqrt() * estimate / sigma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pretest {
    pub t_alpha: f64,
    pub t_beta: f64,
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
}

/// Pretest statistics with spreads taken from the bootstrap replicates of
/// `√n α̂*` and `√n β̂*`.
pub fn pretest_stats(fit: &FitResult, boot_alphas: &[f64], boot_betas: &[f64], n: usize) -> Result<Pretest> {
    pretest_from(fit.dag().alpha_s, fit.dag().beta_m, boot_alphas, boot_betas, n)
}

fn pretest_from(alpha: f64, beta: f64, boot_alphas: &[f64], boot_betas: &[f64], n: usize) -> Result<Pretest> {
    if boot_alphas.len() < MIN_REPLICATES || boot_betas.len() < MIN_REPLICATES {
        return Err(QmedError::DegenerateBootstrap("fewer than 30 usable bootstrap replicates"));
    }
    let root_n = (n as f64).sqrt();
    let scaled = |v: &[f64]| v.iter().map(|a| root_n * a).collect::<Vec<_>>();
    let sigma_alpha = stats::sd(&scaled(boot_alphas));
    let sigma_beta = stats::sd(&scaled(boot_betas));
    if !(sigma_alpha > 0.0 && sigma_beta > 0.0) {
        return Err(QmedError::DegenerateBootstrap("zero bootstrap spread of a path coefficient"));
    }
    Ok(Pretest {
        t_alpha: pretest_statistic(alpha, sigma_alpha, n),
        t_beta: pretest_statistic(beta, sigma_beta, n),
        sigma_alpha,
        sigma_beta,
    })
}

/// Per-replicate ingredients of the local drift statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drift {
    /// `ẑ*_{s′} − ẑ*_s`.
    pub score_gap: f64,
    /// `η̂*_τ(x) / δ̂*_Y`.
    pub slope: f64,
}

impl Drift {
    pub fn from_fit(fit: &FitResult, q: &EstimandQuery) -> Result<Self> {
        let model = &fit.model;
        let z_s = normal_score(&model.marginal_s, q.s, &q.x)?;
        let z_sp = normal_score(&model.marginal_s, q.s_prime, &q.x)?;
        let delta = model.dag.delta_y();
        let q_star = (model.dag.gamma_s * z_sp + normal::quantile(q.tau)) / delta;
        let y_at = model.marginal_y.quantile_of_score(q_star, &q.x)?;
        let density = model.marginal_y.density(y_at, &q.x)?;
        if !(density > 0.0 && density.is_finite()) {
            return Err(QmedError::DegenerateBootstrap("outcome density vanishes at the drift quantile"));
        }
        Ok(Self { score_gap: z_sp - z_s, slope: normal::pdf(q_star) / density / delta })
    }

    /// `{Z₁Z₂ + Z₁b_β + b_αZ₂}·(ẑ*_{s′} − ẑ*_s)·η̂*/δ̂*`.
    pub fn statistic(&self, z1: f64, z2: f64, b_alpha: f64, b_beta: f64) -> f64 {
        (z1 * z2 + z1 * b_beta + b_alpha * z2) * self.score_gap * self.slope
    }
}

/// Bootstrap statistic `R*` of one refitted replicate.
#[allow(clippy::too_many_arguments)]
pub fn r_star(boot_fit: &FitResult, base_fit: &FitResult, q: &EstimandQuery, n: usize, b_alpha: f64, b_beta: f64, centered_z: bool) -> Result<f64> {
    let drift = Drift::from_fit(boot_fit, q)?;
    let (z1, z2) = path_scores(boot_fit.dag().alpha_s, boot_fit.dag().beta_m, base_fit.dag().alpha_s, base_fit.dag().beta_m, n, centered_z);
    Ok(drift.statistic(z1, z2, b_alpha, b_beta))
}

fn path_scores(alpha_star: f64, beta_star: f64, alpha: f64, beta: f64, n: usize, centered: bool) -> (f64, f64) {
    let root_n = (n as f64).sqrt();
    if centered {
        (root_n * (alpha_star - alpha), root_n * (beta_star - beta))
    } else {
        (root_n * alpha_star, root_n * beta_star)
    }
}

/// Row indices of bootstrap replicate `b`.
pub fn resample_indices(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = replicate_stream(seed, b);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsemReplicate {
    pub alpha: f64,
    pub beta: f64,
    pub qnie: f64,
    pub drift: Drift,
}

/// Full-data fit plus refits on row-resampled datasets.
#[derive(Debug, Clone)]
pub struct GsemBootstrap {
    pub n: usize,
    pub base: FitResult,
    pub base_qnie: f64,
    /// Successful replicates in replicate order.
    pub replicates: Vec<GsemReplicate>,
    pub failures: usize,
}

fn fit_replicate(data: &Dataset, spec: &FitSpec, q: &EstimandQuery) -> Result<GsemReplicate> {
    let f = fit(data, spec)?;
    if !f.all_converged() {
        return Err(QmedError::NonConvergence { what: "bootstrap refit", iterations: f.iterations[3], gradient_norm: f.stage2_gradient_norm });
    }
    let qnie = evaluate(&f.model, q)?.qnie;
    let drift = Drift::from_fit(&f, q)?;
    Ok(GsemReplicate { alpha: f.dag().alpha_s, beta: f.dag().beta_m, qnie, drift })
}

fn check_failures(failures: usize, total: usize) -> Result<()> {
    if failures as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(QmedError::TooManyFailures { failed: failures, total });
    }
    Ok(())
}

pub fn gsem_bootstrap(data: &Dataset, spec: &FitSpec, q: &EstimandQuery, cfg: &AbConfig) -> Result<GsemBootstrap> {
    cfg.validate()?;
    let base = fit(data, spec)?;
    let base_qnie = evaluate(&base.model, q)?.qnie;
    let n = data.n();
    let results: Vec<Option<GsemReplicate>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| fit_replicate(&data.select(&resample_indices(n, cfg.seed, b)), spec, q).ok())
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    check_failures(failures, cfg.replicates)?;
    Ok(GsemBootstrap { n, base, base_qnie, replicates: results.into_iter().flatten().collect(), failures })
}

/// Two-sided rank p-value of `theta` within the bootstrap statistics.
pub fn rank_p_value(statistics: &[f64], theta: f64) -> f64 {
    let b = statistics.len() as f64;
    let below = statistics.iter().filter(|&&u| u <= theta).count() as f64;
    let above = statistics.iter().filter(|&&u| u >= theta).count() as f64;
    (2.0 * ((1.0 + below) / (b + 1.0)).min((1.0 + above) / (b + 1.0))).min(1.0)
}

/// Equal-tailed type-7 interval of the statistics.
pub fn percentile_interval(statistics: &[f64], omega: f64) -> (f64, f64) {
    let mut sorted = statistics.to_vec();
    sorted.sort_by(f64::total_cmp);
    (stats::quantile_sorted(&sorted, omega / 2.0), stats::quantile_sorted(&sorted, 1.0 - omega / 2.0))
}

fn outside(theta: f64, (lo, hi): (f64, f64)) -> bool {
    theta <= lo || theta >= hi
}

/// Adaptive bootstrap decision from precomputed replicates.
pub fn ab_from_bootstrap(boot: &GsemBootstrap, cfg: &AbConfig) -> Result<TestResult> {
    let alphas: Vec<f64> = boot.replicates.iter().map(|r| r.alpha).collect();
    let betas: Vec<f64> = boot.replicates.iter().map(|r| r.beta).collect();
    let (alpha, beta) = (boot.base.dag().alpha_s, boot.base.dag().beta_m);
    let pre = pretest_from(alpha, beta, &alphas, &betas, boot.n)?;
    let lam = lambda_n(boot.n, cfg.lambda_scale);
    let base_alpha_small = pre.t_alpha.abs() <= lam;
    let base_beta_small = pre.t_beta.abs() <= lam;
    let inv_n = 1.0 / boot.n as f64;
    let mut flagged = 0usize;
    let statistics: Vec<f64> = boot
        .replicates
        .iter()
        .map(|r| {
            let flag_alpha = base_alpha_small && pretest_statistic(r.alpha, pre.sigma_alpha, boot.n).abs() <= lam;
            let flag_beta = base_beta_small && pretest_statistic(r.beta, pre.sigma_beta, boot.n).abs() <= lam;
            if flag_alpha && flag_beta {
                flagged += 1;
                let (z1, z2) = path_scores(r.alpha, r.beta, alpha, beta, boot.n, cfg.centered_z);
                inv_n * r.drift.statistic(z1, z2, cfg.b_alpha, cfg.b_beta)
            } else {
                r.qnie - boot.base_qnie
            }
        })
        .collect();
    let interval = percentile_interval(&statistics, cfg.omega);
    Ok(TestResult {
        method: Method::QmaAb,
        estimate: boot.base_qnie,
        p_value: rank_p_value(&statistics, boot.base_qnie),
        reject: outside(boot.base_qnie, interval),
        interval: Some(interval),
        diagnostics: TestDiagnostics {
            flag_fraction: Some(flagged as f64 / statistics.len() as f64),
            t_alpha: Some(pre.t_alpha),
            t_beta: Some(pre.t_beta),
            lambda_n: Some(lam),
            b_effective: statistics.len(),
            failed_replicates: boot.failures,
        },
        statistics,
    })
}

/// Naive bootstrap decision from precomputed replicates.
pub fn classical_from_bootstrap(boot: &GsemBootstrap, cfg: &AbConfig) -> Result<TestResult> {
    if boot.replicates.len() < MIN_REPLICATES {
        return Err(QmedError::DegenerateBootstrap("fewer than 30 usable bootstrap replicates"));
    }
    let statistics: Vec<f64> = boot.replicates.iter().map(|r| r.qnie - boot.base_qnie).collect();
    let interval = percentile_interval(&statistics, cfg.omega);
    Ok(TestResult {
        method: Method::QmaB,
        estimate: boot.base_qnie,
        p_value: rank_p_value(&statistics, boot.base_qnie),
        reject: outside(boot.base_qnie, interval),
        interval: Some(interval),
        diagnostics: TestDiagnostics { b_effective: statistics.len(), failed_replicates: boot.failures, ..Default::default() },
        statistics,
    })
}

pub fn ab_test(data: &Dataset, spec: &FitSpec, q: &EstimandQuery, cfg: &AbConfig) -> Result<TestResult> {
    ab_from_bootstrap(&gsem_bootstrap(data, spec, q, cfg)?, cfg)
}

pub fn classical_bootstrap_test(data: &Dataset, spec: &FitSpec, q: &EstimandQuery, cfg: &AbConfig) -> Result<TestResult> {
    classical_from_bootstrap(&gsem_bootstrap(data, spec, q, cfg)?, cfg)
}

/// Path coefficients of the linear competitors: `a` is the exposure slope of
/// the mediator mean regression, `b` the mediator slope of the outcome
/// quantile regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEstimates {
    pub a: f64,
    pub se_a: f64,
    pub b: f64,
    pub se_b: f64,
}

fn path_designs(data: &Dataset) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, p) = (data.n(), data.p());
    let xm = DMatrix::from_fn(n, p + 1, |i, j| if j < p { data.x()[i][j] } else { data.s()[i] });
    let xy = DMatrix::from_fn(n, p + 2, |i, j| match j {
        j if j < p => data.x()[i][j],
        j if j == p => data.s()[i],
        _ => data.m()[i],
    });
    (xm, xy)
}

fn path_coefficients(data: &Dataset, tau: f64) -> Result<(f64, f64)> {
    let (xm, xy) = path_designs(data);
    let a = quantreg::ols(&xm, &DVector::from_column_slice(data.m()))?.coef[data.p()];
    let b = quantreg::quantile_regression(&xy, &DVector::from_column_slice(data.y()), tau)?.coef[data.p() + 1];
    Ok((a, b))
}

/// Path coefficients with large-sample standard errors.
pub fn path_estimates(data: &Dataset, tau: f64) -> Result<PathEstimates> {
    let (xm, xy) = path_designs(data);
    let p = data.p();
    let m_fit = quantreg::ols(&xm, &DVector::from_column_slice(data.m()))?;
    let y = DVector::from_column_slice(data.y());
    let y_fit = quantreg::quantile_regression(&xy, &y, tau)?;
    let se = quantreg::quantile_regression_se(&xy, &y, &y_fit.coef, tau)?;
    Ok(PathEstimates { a: m_fit.coef[p], se_a: m_fit.se[p], b: y_fit.coef[p + 1], se_b: se[p + 1] })
}

fn two_sided_normal_p(z: f64) -> f64 {
    (2.0 * normal::sf(z.abs())).min(1.0)
}

/// Sobel-type product-of-coefficients test.
pub fn sobel_from_paths(paths: &PathEstimates, omega: f64) -> TestResult {
    let estimate = paths.a * paths.b;
    let se = (paths.a * paths.a * paths.se_b * paths.se_b + paths.b * paths.b * paths.se_a * paths.se_a).sqrt();
    let z = if estimate == 0.0 { 0.0 } else { estimate / se };
    let p_value = two_sided_normal_p(z);
    let half = normal::quantile(1.0 - omega / 2.0) * se;
    TestResult {
        method: Method::PocYm,
        estimate,
        p_value,
        reject: p_value < omega,
        interval: Some((estimate - half, estimate + half)),
        diagnostics: TestDiagnostics::default(),
        statistics: Vec::new(),
    }
}

/// Joint significance: the larger of the two path p-values.
pub fn joint_significance_p(p_a: f64, p_b: f64) -> f64 {
    p_a.max(p_b)
}

fn js_from_paths(paths: &PathEstimates, omega: f64) -> TestResult {
    let p_value = joint_significance_p(two_sided_normal_p(paths.a / paths.se_a), two_sided_normal_p(paths.b / paths.se_b));
    TestResult {
        method: Method::JsYm,
        estimate: paths.a * paths.b,
        p_value,
        reject: p_value < omega,
        interval: None,
        diagnostics: TestDiagnostics::default(),
        statistics: Vec::new(),
    }
}

pub fn sobel_poc_test(data: &Dataset, q: &EstimandQuery, omega: f64) -> Result<TestResult> {
    Ok(sobel_from_paths(&path_estimates(data, q.tau)?, omega))
}

/// Bootstrap replicates of the competitor path coefficients, drawn with
/// the same row indices as [`gsem_bootstrap`].
#[derive(Debug, Clone)]
pub struct PathBootstrap {
    pub base: PathEstimates,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub failures: usize,
}

pub fn path_bootstrap(data: &Dataset, q: &EstimandQuery, cfg: &AbConfig) -> Result<PathBootstrap> {
    cfg.validate()?;
    let base = path_estimates(data, q.tau)?;
    let n = data.n();
    let results: Vec<Option<(f64, f64)>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| path_coefficients(&data.select(&resample_indices(n, cfg.seed, b)), q.tau).ok())
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    check_failures(failures, cfg.replicates)?;
    let (a, b) = results.into_iter().flatten().unzip();
    Ok(PathBootstrap { base, a, b, failures })
}

pub fn poc_from_bootstrap(boot: &PathBootstrap, cfg: &AbConfig) -> TestResult {
    let statistics: Vec<f64> = boot.a.iter().zip(&boot.b).map(|(a, b)| a * b).collect();
    let interval = percentile_interval(&statistics, cfg.omega);
    TestResult {
        method: Method::PocB,
        estimate: boot.base.a * boot.base.b,
        p_value: rank_p_value(&statistics, 0.0),
        reject: outside(0.0, interval),
        interval: Some(interval),
        diagnostics: TestDiagnostics { b_effective: statistics.len(), failed_replicates: boot.failures, ..Default::default() },
        statistics,
    }
}

pub fn js_from_bootstrap(boot: &PathBootstrap, cfg: &AbConfig) -> TestResult {
    let p_value = joint_significance_p(rank_p_value(&boot.a, 0.0), rank_p_value(&boot.b, 0.0));
    let reject = outside(0.0, percentile_interval(&boot.a, cfg.omega)) && outside(0.0, percentile_interval(&boot.b, cfg.omega));
    TestResult {
        method: Method::JsB,
        estimate: boot.base.a * boot.base.b,
        p_value,
        reject,
        interval: None,
        diagnostics: TestDiagnostics { b_effective: boot.a.len(), failed_replicates: boot.failures, ..Default::default() },
        statistics: Vec::new(),
    }
}

pub fn poc_bootstrap_test(data: &Dataset, q: &EstimandQuery, cfg: &AbConfig) -> Result<TestResult> {
    Ok(poc_from_bootstrap(&path_bootstrap(data, q, cfg)?, cfg))
}

/// `(JS_B, JS_YM)`.
pub fn joint_significance_tests(data: &Dataset, q: &EstimandQuery, cfg: &AbConfig) -> Result<(TestResult, TestResult)> {
    let boot = path_bootstrap(data, q, cfg)?;
    Ok((js_from_bootstrap(&boot, cfg), js_from_paths(&boot.base, cfg.omega)))
}

/// Runs the requested methods on one dataset; methods that share a
/// bootstrap reuse the same refits. Results follow the order of `methods`.
pub fn run_tests(data: &Dataset, spec: &FitSpec, q: &EstimandQuery, cfg: &AbConfig, methods: &[Method]) -> Result<Vec<TestResult>> {
    let gsem = if methods.iter().any(|m| m.needs_gsem_bootstrap()) { Some(gsem_bootstrap(data, spec, q, cfg)?) } else { None };
    let paths_boot = if methods.iter().any(|m| m.needs_path_bootstrap()) { Some(path_bootstrap(data, q, cfg)?) } else { None };
    let paths = match &paths_boot {
        Some(b) => Some(b.base),
        None if methods.iter().any(|m| matches!(m, Method::PocYm | Method::JsYm)) => Some(path_estimates(data, q.tau)?),
        None => None,
    };
    methods
        .iter()
        .map(|m| match m {
            Method::QmaAb => ab_from_bootstrap(gsem.as_ref().expect("gsem bootstrap"), cfg),
            Method::QmaB => classical_from_bootstrap(gsem.as_ref().expect("gsem bootstrap"), cfg),
            Method::PocB => Ok(poc_from_bootstrap(paths_boot.as_ref().expect("path bootstrap"), cfg)),
            Method::JsB => Ok(js_from_bootstrap(paths_boot.as_ref().expect("path bootstrap"), cfg)),
            Method::PocYm => Ok(sobel_from_paths(paths.as_ref().expect("paths"), cfg.omega)),
            Method::JsYm => Ok(js_from_paths(paths.as_ref().expect("paths"), cfg.omega)),
        })
        .collect()
}
