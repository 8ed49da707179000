//! Data generation, the counterfactual Monte Carlo oracle and the
//! simulation-study harness.

use std::time::Instant;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NumericTable};
use crate::error::{QmedError, Result};
use crate::estimands::{evaluate, EstimandQuery};
use crate::estimation::{fit, FitSpec};
use crate::gsem::{normal_score, DagParams, GsemModel};
use crate::marginal::{Family, MarginalModel};
use crate::mediation::{run_tests, AbConfig, Method, TestResult};
use crate::rng::{data_stream, derive_seed};
use crate::stats;

/// Simulation design. The defaults are the reference design: three
/// compound-symmetric normal covariates, normal exposure and mediator, and
/// an exponential outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimScenario {
    pub n: usize,
    pub dag: DagParams,
    pub zeta_s: Vec<f64>,
    pub zeta_m: Vec<f64>,
    pub zeta_y: Vec<f64>,
    pub sigma_s: f64,
    pub sigma_m: f64,
    /// Dispersion of the outcome when its family has one.
    pub dispersion_y: f64,
    pub families: FitSpec,
    /// Standard deviation and common correlation of the non-intercept covariates.
    pub covariate_sd: f64,
    pub covariate_corr: f64,
    pub replications: usize,
    pub bootstrap: usize,
    pub seed: u64,
    pub query: EstimandQuery,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            n: 300,
            dag: DagParams::new(0.0, 0.0, 0.5),
            zeta_s: vec![0.5, 0.2, 0.2, 0.0],
            zeta_m: vec![0.8, 0.3, 0.3, 0.4],
            zeta_y: vec![-0.2, 0.4, -0.2, 0.7],
            sigma_s: 0.3,
            sigma_m: 0.3,
            dispersion_y: 1.0,
            families: FitSpec::default(),
            covariate_sd: 0.3,
            covariate_corr: 0.2,
            replications: 500,
            bootstrap: 300,
            seed: 2024,
            query: EstimandQuery { tau: 0.5, s: 0.0, s_prime: 1.0, x: vec![1.0, 0.0, 0.0, 0.0] },
        }
    }
}

fn marginal(family: Family, zeta: Vec<f64>, sigma: f64) -> Result<MarginalModel> {
    match family {
        Family::Normal => MarginalModel::normal(zeta, sigma * sigma),
        Family::Exponential => MarginalModel::exponential(zeta),
        Family::Gamma => MarginalModel::gamma(zeta, sigma * sigma),
    }
}

impl SimScenario {
    pub fn with_dag(&self, alpha_s: f64, beta_m: f64) -> Self {
        Self { dag: DagParams::new(alpha_s, beta_m, self.dag.gamma_s).with_rho(self.dag.rho), ..self.clone() }
    }

    pub fn p(&self) -> usize {
        self.zeta_s.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if p == 0 || self.zeta_m.len() != p || self.zeta_y.len() != p || self.query.x.len() != p {
            return Err(QmedError::InvalidArgument("coefficient vectors and query x must share one length".into()));
        }
        if self.n <= p {
            return Err(QmedError::InvalidArgument(format!("need n > p, got n = {}, p = {p}", self.n)));
        }
        if !(self.covariate_sd > 0.0) || !(self.covariate_corr >= 0.0 && self.covariate_corr < 1.0) {
            return Err(QmedError::InvalidArgument("covariate sd must be positive and correlation in [0, 1)".into()));
        }
        if !(self.dag.rho.abs() < 1.0) {
            return Err(QmedError::InvalidArgument("rho must lie in (-1, 1)".into()));
        }
        Ok(())
    }

    /// The data-generating model.
    pub fn model(&self) -> Result<GsemModel> {
        let sigma_y = self.dispersion_y.sqrt();
        GsemModel::new(
            marginal(self.families.s.family, self.zeta_s.clone(), self.sigma_s)?,
            marginal(self.families.m.family, self.zeta_m.clone(), self.sigma_m)?,
            marginal(self.families.y.family, self.zeta_y.clone(), sigma_y)?,
            self.dag,
        )
    }

    /// Intercept followed by compound-symmetric normal covariates.
    pub fn sample_covariates<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let common: f64 = rng.sample(StandardNormal);
        let (a, b) = (self.covariate_corr.sqrt(), (1.0 - self.covariate_corr).sqrt());
        let mut x = Vec::with_capacity(self.p());
        x.push(1.0);
        for _ in 1..self.p() {
            let e: f64 = rng.sample(StandardNormal);
            x.push(self.covariate_sd * (a * common + b * e));
        }
        x
    }
}

/// Standardized latent scores `(Z_S, Z_M, Z_Y)` from independent errors
/// pushed through the structural equations.
pub fn sample_latent<R: Rng + ?Sized>(dag: &DagParams, rng: &mut R) -> Vector3<f64> {
    let e_s: f64 = rng.sample(StandardNormal);
    let e_m: f64 = rng.sample(StandardNormal);
    let e_free: f64 = rng.sample(StandardNormal);
    let e_y = dag.rho * e_m + (1.0 - dag.rho * dag.rho).sqrt() * e_free;
    let w_s = e_s;
    let w_m = dag.alpha_s * w_s + e_m;
    let w_y = dag.gamma_s * w_s + dag.beta_m * w_m + e_y;
    Vector3::new(w_s, w_m / dag.delta_m(), w_y / dag.delta_y())
}

/// Draws `n` rows from `model` with covariates from `covariates`.
pub fn sample_model<R: Rng + ?Sized, F: FnMut(&mut R) -> Vec<f64>>(model: &GsemModel, n: usize, mut covariates: F, rng: &mut R) -> Result<Dataset> {
    let (mut s, mut m, mut y, mut xs) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let x = covariates(rng);
        let z = sample_latent(&model.dag, rng);
        s.push(model.marginal_s.quantile_of_score(z[0], &x)?);
        m.push(model.marginal_m.quantile_of_score(z[1], &x)?);
        y.push(model.marginal_y.quantile_of_score(z[2], &x)?);
        xs.push(x);
    }
    Dataset::new(s, m, y, xs)
}

/// One dataset of `scenario.n` rows.
pub fn sample_gsem<R: Rng + ?Sized>(scenario: &SimScenario, rng: &mut R) -> Result<Dataset> {
    scenario.validate()?;
    sample_model(&scenario.model()?, scenario.n, |r| scenario.sample_covariates(r), rng)
}

/// A screening table with one candidate mediator per `(α_S, β_M)` pair.
/// Mediators share the exposure score but have independent errors; the
/// outcome score adds `β_M` times each standardized mediator score. Columns
/// are `S`, `M1..Mk`, `Y`, `X1..Xp`, with the marginals of `scenario`.
pub fn sample_screening_table<R: Rng + ?Sized>(scenario: &SimScenario, paths: &[(f64, f64)], rng: &mut R) -> Result<NumericTable> {
    scenario.validate()?;
    if paths.is_empty() {
        return Err(QmedError::InvalidArgument("at least one mediator is required".into()));
    }
    let model = scenario.model()?;
    let gamma = scenario.dag.gamma_s;
    let scale: Vec<f64> = paths.iter().map(|(a, _)| (a * a + 1.0).sqrt()).collect();
    let on_exposure = gamma + paths.iter().zip(&scale).map(|((a, b), d)| a * b / d).sum::<f64>();
    let y_sd = (on_exposure * on_exposure + paths.iter().zip(&scale).map(|((_, b), d)| (b / d).powi(2)).sum::<f64>() + 1.0).sqrt();
    let (k, p) = (paths.len(), scenario.p());
    let mut columns = vec![Vec::with_capacity(scenario.n); k + 2 + p];
    for _ in 0..scenario.n {
        let x = scenario.sample_covariates(rng);
        let z_s: f64 = rng.sample(StandardNormal);
        let mut w_y = gamma * z_s;
        columns[0].push(model.marginal_s.quantile_of_score(z_s, &x)?);
        for (j, ((a, b), d)) in paths.iter().zip(&scale).enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            let z_m = (a * z_s + e) / d;
            w_y += b * z_m;
            columns[1 + j].push(model.marginal_m.quantile_of_score(z_m, &x)?);
        }
        let e_y: f64 = rng.sample(StandardNormal);
        columns[k + 1].push(model.marginal_y.quantile_of_score((w_y + e_y) / y_sd, &x)?);
        for (c, v) in x.into_iter().enumerate() {
            columns[k + 2 + c].push(v);
        }
    }
    let headers = std::iter::once("S".to_string())
        .chain((1..=k).map(|j| format!("M{j}")))
        .chain(std::iter::once("Y".to_string()))
        .chain((1..=p).map(|c| format!("X{c}")))
        .collect();
    Ok(NumericTable { headers, columns })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub qnde: f64,
    pub qnie: f64,
    pub qnde_se: f64,
    pub qnie_se: f64,
}

pub const ORACLE_BATCHES: usize = 20;

/// Monte Carlo counterfactual effects: outcomes are simulated under
/// `(direct, mediated)` exposure pairs `(s,s)`, `(s′,s)` and `(s′,s′)` with
/// common random errors, and effects are differences of empirical
/// `tau`-quantiles. Standard errors come from 20 equal batches.
pub fn counterfactual_oracle<R: Rng + ?Sized>(model: &GsemModel, q: &EstimandQuery, n_mc: usize, rng: &mut R) -> Result<OracleEstimate> {
    if n_mc < ORACLE_BATCHES * 10 {
        return Err(QmedError::InvalidArgument(format!("need at least {} Monte Carlo draws", ORACLE_BATCHES * 10)));
    }
    if !(q.tau > 0.0 && q.tau < 1.0) {
        return Err(QmedError::ProbabilityOutOfRange(q.tau));
    }
    let dag = &model.dag;
    let z_s = normal_score(&model.marginal_s, q.s, &q.x)?;
    let z_sp = normal_score(&model.marginal_s, q.s_prime, &q.x)?;
    let eta = model.marginal_y.linear_predictor(&q.x)?;
    let delta = dag.delta_y();
    let outcome = |direct: f64, mediated: f64, e_m: f64, e_y: f64| {
        let w = dag.gamma_s * direct + dag.beta_m * (dag.alpha_s * mediated + e_m) + e_y;
        model.marginal_y.quantile_of_score_at(w / delta, eta)
    };
    let batch = n_mc / ORACLE_BATCHES;
    let total = batch * ORACLE_BATCHES;
    let (mut y_ss, mut y_ps, mut y_pp) = (Vec::with_capacity(total), Vec::with_capacity(total), Vec::with_capacity(total));
    for _ in 0..total {
        let e_m: f64 = rng.sample(StandardNormal);
        let e_y: f64 = rng.sample(StandardNormal);
        y_ss.push(outcome(z_s, z_s, e_m, e_y));
        y_ps.push(outcome(z_sp, z_s, e_m, e_y));
        y_pp.push(outcome(z_sp, z_sp, e_m, e_y));
    }
    let effects = |range: std::ops::Range<usize>| {
        let qs = |v: &[f64]| stats::quantile(&v[range.clone()], q.tau);
        let (a, b, c) = (qs(&y_ss), qs(&y_ps), qs(&y_pp));
        (b - a, c - b)
    };
    let (qnde, qnie) = effects(0..total);
    let per_batch: Vec<(f64, f64)> = (0..ORACLE_BATCHES).map(|k| effects(k * batch..(k + 1) * batch)).collect();
    let de: Vec<f64> = per_batch.iter().map(|e| e.0).collect();
    let ie: Vec<f64> = per_batch.iter().map(|e| e.1).collect();
    let k = (ORACLE_BATCHES as f64).sqrt();
    Ok(OracleEstimate { qnde, qnie, qnde_se: stats::sd(&de) / k, qnie_se: stats::sd(&ie) / k })
}

/// The three fixed null configurations of `(α_S, β_M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NullCase {
    /// Exposure-mediator path only.
    #[serde(rename = "omega0_1")]
    AlphaOnly,
    /// Mediator-outcome path only.
    #[serde(rename = "omega0_2")]
    BetaOnly,
    /// Neither path.
    #[serde(rename = "omega0_3")]
    Neither,
}

impl NullCase {
    pub const ALL: [NullCase; 3] = [NullCase::AlphaOnly, NullCase::BetaOnly, NullCase::Neither];

    pub fn paths(self) -> (f64, f64) {
        match self {
            NullCase::AlphaOnly => (0.5, 0.0),
            NullCase::BetaOnly => (0.0, 0.5),
            NullCase::Neither => (0.0, 0.0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NullCase::AlphaOnly => "omega0_1",
            NullCase::BetaOnly => "omega0_2",
            NullCase::Neither => "omega0_3",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl std::str::FromStr for NullCase {
    type Err = QmedError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "omega0_1" | "omega01" | "1" | "alpha" => Ok(NullCase::AlphaOnly),
            "omega0_2" | "omega02" | "2" | "beta" => Ok(NullCase::BetaOnly),
            "omega0_3" | "omega03" | "3" | "neither" => Ok(NullCase::Neither),
            _ => Err(QmedError::InvalidArgument(format!("unknown null case '{s}' (expected omega0_1, omega0_2 or omega0_3)"))),
        }
    }
}

/// Rejection record of one method within one study cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub label: String,
    pub alpha_s: f64,
    pub beta_m: f64,
    pub method: Method,
    /// Per-replication p-values; NaN marks a failed replication.
    pub p_values: Vec<f64>,
    /// Per-replication decisions; false for failed replications.
    pub rejects: Vec<bool>,
    pub completed: usize,
    pub failed: usize,
    pub rejection_rate: f64,
    pub rejection_se: f64,
}

impl StudyCell {
    fn new(label: String, alpha_s: f64, beta_m: f64, method: Method, outcomes: &[Option<TestResult>]) -> Self {
        let p_values: Vec<f64> = outcomes.iter().map(|o| o.as_ref().map_or(f64::NAN, |r| r.p_value)).collect();
        let rejects: Vec<bool> = outcomes.iter().map(|o| o.as_ref().is_some_and(|r| r.reject)).collect();
        let completed = outcomes.iter().filter(|o| o.is_some()).count();
        let rate = if completed == 0 { f64::NAN } else { rejects.iter().filter(|&&r| r).count() as f64 / completed as f64 };
        Self {
            label,
            alpha_s,
            beta_m,
            method,
            p_values,
            rejects,
            completed,
            failed: outcomes.len() - completed,
            rejection_rate: rate,
            rejection_se: stats::binomial_se(rate, completed.max(1)),
        }
    }

    /// Completed p-values.
    pub fn finite_p_values(&self) -> Vec<f64> {
        self.p_values.iter().copied().filter(|p| p.is_finite()).collect()
    }

    /// Kolmogorov–Smirnov distance of the p-values from the uniform law.
    pub fn uniformity_ks(&self) -> f64 {
        stats::ks_distance(&self.finite_p_values(), |u| u.clamp(0.0, 1.0))
    }

    /// Sorted p-values against the uniform plotting positions `i / (R + 1)`.
    pub fn qq_points(&self) -> Vec<(f64, f64)> {
        let mut p = self.finite_p_values();
        p.sort_by(f64::total_cmp);
        let r = p.len() as f64;
        p.into_iter().enumerate().map(|(i, v)| ((i + 1) as f64 / (r + 1.0), v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub alpha_s: f64,
    pub beta_m: f64,
    pub n: usize,
    pub mse_qnie: f64,
    pub mse_qnde: f64,
    /// MSE at the first sample size of the grid divided by the MSE at `n`.
    pub ratio_qnie: f64,
    pub ratio_qnde: f64,
    pub completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub kind: String,
    pub n: usize,
    pub replications: usize,
    pub bootstrap: usize,
    pub omega: f64,
    pub seed: u64,
    pub cells: Vec<StudyCell>,
    pub mse: Vec<MseRow>,
    pub runtime_secs: f64,
}

impl StudyReport {
    pub fn cell(&self, label: &str, method: Method) -> Option<&StudyCell> {
        self.cells.iter().find(|c| c.label == label && c.method == method)
    }

    /// Paired difference of rejection rates `first - second` within one cell
    /// and its standard error.
    pub fn paired_difference(&self, label: &str, first: Method, second: Method) -> Option<(f64, f64)> {
        let a = self.cell(label, first)?;
        let b = self.cell(label, second)?;
        let d: Vec<f64> = a
            .p_values
            .iter()
            .zip(&b.p_values)
            .zip(a.rejects.iter().zip(&b.rejects))
            .filter(|((pa, pb), _)| pa.is_finite() && pb.is_finite())
            .map(|(_, (&ra, &rb))| ra as u8 as f64 - rb as u8 as f64)
            .collect();
        if d.len() < 2 {
            return None;
        }
        Some((stats::mean(&d), stats::sd(&d) / (d.len() as f64).sqrt()))
    }

    pub fn write_rejections_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["label", "alpha_s", "beta_m", "method", "rejection_rate", "rejection_se", "completed", "failed"])?;
        for c in &self.cells {
            out.write_record([
                c.label.clone(),
                c.alpha_s.to_string(),
                c.beta_m.to_string(),
                c.method.to_string(),
                c.rejection_rate.to_string(),
                c.rejection_se.to_string(),
                c.completed.to_string(),
                c.failed.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Two-column QQ tables, one block per cell.
    pub fn write_qq_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["label", "method", "uniform_quantile", "p_value"])?;
        for c in &self.cells {
            for (u, p) in c.qq_points() {
                out.write_record([c.label.clone(), c.method.to_string(), u.to_string(), p.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_mse_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["alpha_s", "beta_m", "n", "mse_qnie", "mse_qnde", "ratio_qnie", "ratio_qnde", "completed"])?;
        for r in &self.mse {
            out.write_record([
                r.alpha_s.to_string(),
                r.beta_m.to_string(),
                r.n.to_string(),
                r.mse_qnie.to_string(),
                r.mse_qnde.to_string(),
                r.ratio_qnie.to_string(),
                r.ratio_qnde.to_string(),
                r.completed.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Generates one dataset and runs the methods on it; the dataset uses
/// stream 0 of `seed` and the bootstrap replicates the following streams.
pub fn replicate_tests(scenario: &SimScenario, seed: u64, methods: &[Method], cfg: &AbConfig) -> Result<Vec<TestResult>> {
    let data = sample_gsem(scenario, &mut data_stream(seed))?;
    let cfg = AbConfig { seed, replicates: scenario.bootstrap, ..cfg.clone() };
    run_tests(&data, &scenario.families, &scenario.query, &cfg, methods)
}

/// Runs every replication of one cell; the outer vector is indexed by
/// replication, the inner one by method.
fn run_cell<F: Fn(usize) -> (SimScenario, u64) + Sync>(replications: usize, methods: &[Method], cfg: &AbConfig, setup: F) -> Vec<Vec<Option<TestResult>>> {
    (0..replications)
        .into_par_iter()
        .map(|r| {
            let (scenario, seed) = setup(r);
            match replicate_tests(&scenario, seed, methods, cfg) {
                Ok(results) => results.into_iter().map(Some).collect(),
                Err(_) => vec![None; methods.len()],
            }
        })
        .collect()
}

fn cells_from(label: &str, alpha: f64, beta: f64, methods: &[Method], outcomes: &[Vec<Option<TestResult>>]) -> Vec<StudyCell> {
    methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let column: Vec<Option<TestResult>> = outcomes.iter().map(|row| row[k].clone()).collect();
            StudyCell::new(label.to_string(), alpha, beta, m, &column)
        })
        .collect()
}

fn check_study(scenario: &SimScenario, methods: &[Method]) -> Result<()> {
    scenario.validate()?;
    if scenario.replications == 0 {
        return Err(QmedError::InvalidArgument("at least one replication is required".into()));
    }
    if methods.is_empty() {
        return Err(QmedError::InvalidArgument("no methods requested".into()));
    }
    Ok(())
}

fn report(kind: &str, scenario: &SimScenario, cfg: &AbConfig, cells: Vec<StudyCell>, mse: Vec<MseRow>, start: Instant) -> StudyReport {
    StudyReport {
        kind: kind.into(),
        n: scenario.n,
        replications: scenario.replications,
        bootstrap: scenario.bootstrap,
        omega: cfg.omega,
        seed: scenario.seed,
        cells,
        mse,
        runtime_secs: start.elapsed().as_secs_f64(),
    }
}

/// Size of each method under fixed null configurations.
pub fn run_null_study(scenario: &SimScenario, cases: &[NullCase], methods: &[Method], cfg: &AbConfig) -> Result<StudyReport> {
    check_study(scenario, methods)?;
    let start = Instant::now();
    let mut cells = Vec::new();
    for &case in cases {
        let (a, b) = case.paths();
        let cell_scenario = scenario.with_dag(a, b);
        let outcomes = run_cell(scenario.replications, methods, cfg, |r| (cell_scenario.clone(), derive_seed(scenario.seed, &[case.tag(), r as u64])));
        cells.extend(cells_from(case.label(), a, b, methods, &outcomes));
    }
    Ok(report("null", scenario, cfg, cells, Vec::new(), start))
}

/// Size under a random null: each replication first draws its null
/// configuration with the given probabilities.
pub fn run_mixture_null_study(probabilities: [f64; 3], scenario: &SimScenario, methods: &[Method], cfg: &AbConfig) -> Result<StudyReport> {
    check_study(scenario, methods)?;
    if probabilities.iter().any(|p| !(*p >= 0.0)) || (probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(QmedError::InvalidArgument(format!("mixture probabilities must be non-negative and sum to 1, got {probabilities:?}")));
    }
    let start = Instant::now();
    let pick = |r: usize| {
        let u: f64 = data_stream(derive_seed(scenario.seed, &[0, r as u64])).random();
        let mut acc = 0.0;
        for (k, case) in NullCase::ALL.into_iter().enumerate() {
            acc += probabilities[k];
            if u < acc {
                return case;
            }
        }
        NullCase::ALL.into_iter().rev().find(|c| probabilities[*c as usize] > 0.0).unwrap_or(NullCase::Neither)
    };
    let outcomes = run_cell(scenario.replications, methods, cfg, |r| {
        let case = pick(r);
        let (a, b) = case.paths();
        (scenario.with_dag(a, b), derive_seed(scenario.seed, &[case.tag(), r as u64]))
    });
    let label = format!("mixture({},{},{})", probabilities[0], probabilities[1], probabilities[2]);
    let cells = cells_from(&label, f64::NAN, f64::NAN, methods, &outcomes);
    Ok(report("mixture", scenario, cfg, cells, Vec::new(), start))
}

/// Alternatives for the power study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PowerGrid {
    /// `α_S = β_M = v` for each value.
    Equal(Vec<f64>),
    /// `α_S β_M = product` with `α_S / β_M` taking each ratio.
    Product { product: f64, ratios: Vec<f64> },
}

impl PowerGrid {
    pub fn equal_default() -> Self {
        PowerGrid::Equal(vec![0.0, 0.05, 0.1, 0.15, 0.2])
    }

    pub fn product_default() -> Self {
        PowerGrid::Product { product: 0.04, ratios: vec![0.25, 0.5, 1.0, 2.0, 4.0] }
    }

    pub fn points(&self) -> Result<Vec<(f64, f64)>> {
        match self {
            PowerGrid::Equal(v) => Ok(v.iter().map(|&x| (x, x)).collect()),
            PowerGrid::Product { product, ratios } => {
                if !(*product > 0.0) || ratios.iter().any(|r| !(*r > 0.0)) {
                    return Err(QmedError::InvalidArgument("product and ratios must be positive".into()));
                }
                Ok(ratios.iter().map(|r| ((product * r).sqrt(), (product / r).sqrt())).collect())
            }
        }
    }
}

/// Rejection curves over a grid of alternatives.
pub fn run_power_study(scenario: &SimScenario, grid: &PowerGrid, methods: &[Method], cfg: &AbConfig) -> Result<StudyReport> {
    check_study(scenario, methods)?;
    let start = Instant::now();
    let mut cells = Vec::new();
    for (k, (a, b)) in grid.points()?.into_iter().enumerate() {
        let cell_scenario = scenario.with_dag(a, b);
        let outcomes = run_cell(scenario.replications, methods, cfg, |r| (cell_scenario.clone(), derive_seed(scenario.seed, &[100 + k as u64, r as u64])));
        cells.extend(cells_from(&format!("alpha={a:.4},beta={b:.4}"), a, b, methods, &outcomes));
    }
    Ok(report("power", scenario, cfg, cells, Vec::new(), start))
}

/// Plug-in estimation error of the effects over sample sizes and path
/// configurations.
pub fn run_mse_study(scenario: &SimScenario, ns: &[usize], paths: &[(f64, f64)]) -> Result<StudyReport> {
    scenario.validate()?;
    if ns.is_empty() || paths.is_empty() {
        return Err(QmedError::InvalidArgument("sample-size and path grids must be non-empty".into()));
    }
    let start = Instant::now();
    let mut rows = Vec::new();
    for (k, &(a, b)) in paths.iter().enumerate() {
        let base = scenario.with_dag(a, b);
        let truth = evaluate(&base.model()?, &base.query)?;
        let mut first: Option<(f64, f64)> = None;
        for &n in ns {
            let cell = SimScenario { n, ..base.clone() };
            cell.validate()?;
            let errors: Vec<Option<(f64, f64)>> = (0..scenario.replications)
                .into_par_iter()
                .map(|r| {
                    let data = sample_gsem(&cell, &mut data_stream(derive_seed(scenario.seed, &[200 + k as u64, n as u64, r as u64]))).ok()?;
                    let f = fit(&data, &cell.families).ok()?;
                    let v = evaluate(&f.model, &cell.query).ok()?;
                    Some(((v.qnie - truth.qnie).powi(2), (v.qnde - truth.qnde).powi(2)))
                })
                .collect();
            let done: Vec<(f64, f64)> = errors.into_iter().flatten().collect();
            let mse_qnie = stats::mean(&done.iter().map(|e| e.0).collect::<Vec<_>>());
            let mse_qnde = stats::mean(&done.iter().map(|e| e.1).collect::<Vec<_>>());
            let (r_ie, r_de) = *first.get_or_insert((mse_qnie, mse_qnde));
            rows.push(MseRow { alpha_s: a, beta_m: b, n, mse_qnie, mse_qnde, ratio_qnie: r_ie / mse_qnie, ratio_qnde: r_de / mse_qnde, completed: done.len() });
        }
    }
    let cfg = AbConfig::default();
    Ok(report("mse", scenario, &cfg, Vec::new(), rows, start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsem::implied_correlation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_design() {
        let s = SimScenario::default();
        s.validate().unwrap();
        let m = s.model().unwrap();
        assert_eq!(m.marginal_s.phi, 0.09);
        assert_eq!(m.marginal_y.family, Family::Exponential);
    }

    #[test]
    fn latent_correlation_matches_implied() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dag in [DagParams::zero(), DagParams::new(1.0, 1.0, 0.0), DagParams::new(0.5, -0.4, 0.3).with_rho(0.5)] {
            let z: Vec<Vector3<f64>> = (0..100_000).map(|_| sample_latent(&dag, &mut rng)).collect();
            let r = implied_correlation(&dag).unwrap();
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                let a: Vec<f64> = z.iter().map(|v| v[i]).collect();
                let b: Vec<f64> = z.iter().map(|v| v[j]).collect();
                assert!((stats::correlation(&a, &b) - r[(i, j)]).abs() < 0.02, "{dag:?} ({i},{j})");
            }
            for i in 0..3 {
                let a: Vec<f64> = z.iter().map(|v| v[i]).collect();
                assert!((stats::sd(&a) - 1.0).abs() < 0.01);
            }
        }
    }

    #[test]
    fn outcome_marginal_is_preserved() {
        let s = SimScenario { dag: DagParams::new(1.0, 1.0, 0.0), ..SimScenario::default() };
        let model = s.model().unwrap();
        let x = vec![1.0, 0.1, -0.2, 0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = sample_model(&model, 100_000, |_| x.clone(), &mut rng).unwrap();
        let d = stats::ks_distance(data.y(), |v| model.marginal_y.cdf(v, &x).unwrap());
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn oracle_same_exposure_is_zero() {
        let model = SimScenario::default().with_dag(0.5, 0.5).model().unwrap();
        let q = EstimandQuery::new(0.5, 0.3, 0.3, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let o = counterfactual_oracle(&model, &q, 10_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(o.qnde, 0.0);
        assert_eq!(o.qnie, 0.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = SimScenario { n: 50, ..SimScenario::default() };
        let a = sample_gsem(&s, &mut data_stream(3)).unwrap();
        let b = sample_gsem(&s, &mut data_stream(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn power_grid_points() {
        let pts = PowerGrid::product_default().points().unwrap();
        for (a, b) in pts {
            assert!((a * b - 0.04).abs() < 1e-12);
        }
    }
}
