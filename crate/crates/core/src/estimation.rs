//! Two-stage (inference functions for margins) maximum likelihood: GLM
//! marginals first, then the DAG coefficients of the copula with the
//! marginals held fixed.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::data::{Dataset, Role};
use crate::error::{QmedError, Result};
use crate::gsem::{dataset_scores, implied_correlation, CopulaKernel, DagParams, GsemModel, ScoreMoments};
use crate::marginal::{Family, Link, MarginalModel};
use crate::optim::{self, BfgsOptions};

pub const MAX_GLM_ITER: usize = 100;

/// Family and link of one marginal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub family: Family,
    pub link: Link,
}

impl MarginalSpec {
    pub fn new(family: Family) -> Self {
        Self { family, link: family.canonical_link() }
    }
}

/// Marginal specification for `(S, M, Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitSpec {
    pub s: MarginalSpec,
    pub m: MarginalSpec,
    pub y: MarginalSpec,
}

impl FitSpec {
    pub fn new(s: Family, m: Family, y: Family) -> Self {
        Self { s: MarginalSpec::new(s), m: MarginalSpec::new(m), y: MarginalSpec::new(y) }
    }

    pub fn get(&self, role: Role) -> MarginalSpec {
        match role {
            Role::S => self.s,
            Role::M => self.m,
            Role::Y => self.y,
        }
    }
}

impl Default for FitSpec {
    /// Normal exposure and mediator with an exponential outcome.
    fn default() -> Self {
        Self::new(Family::Normal, Family::Normal, Family::Exponential)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: GsemModel,
    /// Marginal log-likelihoods of S, M and Y.
    pub stage1_loglik: [f64; 3],
    /// Copula log-likelihood at the fitted DAG.
    pub stage2_loglik: f64,
    /// Iterations used by the S, M, Y and DAG stages.
    pub iterations: [usize; 4],
    pub converged: [bool; 4],
    pub clamp_count: usize,
    /// Infinity norm of the numerical gradient of the per-row stage-2 objective.
    pub stage2_gradient_norm: f64,
}

impl FitResult {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub fn dag(&self) -> &DagParams {
        &self.model.dag
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFit {
    pub model: MarginalModel,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn design(data: &Dataset) -> DMatrix<f64> {
    let (n, p) = (data.n(), data.p());
    DMatrix::from_fn(n, p, |i, j| data.x()[i][j])
}

/// Solves the symmetric positive definite system `a·b = rhs`.
fn spd_solve(a: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let max_diag = a.diagonal().amax();
    let chol = a.cholesky().ok_or(QmedError::RankDeficient)?;
    let l = chol.l();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12 * max_diag) {
        return Err(QmedError::RankDeficient);
    }
    Ok(chol.solve(rhs))
}

/// Maximum-likelihood GLM fit of one marginal.
pub fn fit_marginal(data: &Dataset, role: Role, family: Family, link: Link) -> Result<MarginalFit> {
    if link != family.canonical_link() {
        return Err(QmedError::InvalidArgument(format!("family {family} supports only the {:?} link", family.canonical_link())));
    }
    let y = data.column(role);
    let x = design(data);
    let n = data.n() as f64;
    match family {
        Family::Normal => {
            let xt = x.transpose();
            let beta = spd_solve(&xt * &x, &(&xt * DVector::from_column_slice(y)))?;
            let resid = DVector::from_column_slice(y) - &x * &beta;
            let phi = resid.norm_squared() / n;
            if !(phi > 0.0) {
                return Err(QmedError::InvalidArgument(format!("{} has zero residual variance", role.name())));
            }
            finish(data, role, MarginalModel::normal(beta.as_slice().to_vec(), phi)?, 1, true)
        }
        Family::Exponential => {
            check_positive(y, role)?;
            let (zeta, iterations) = fit_exponential(&x, y)?;
            finish(data, role, MarginalModel::exponential(zeta)?, iterations, true)
        }
        Family::Gamma => {
            check_positive(y, role)?;
            let (zeta, iterations) = fit_gamma_mean(&x, y)?;
            let mu = &x * DVector::from_vec(zeta.clone());
            let c = y.iter().zip(mu.iter()).map(|(&yi, &eta)| {
                let r = yi / eta.exp();
                r - r.ln() - 1.0
            }).sum::<f64>() / n;
            if !(c > 0.0) {
                return Err(QmedError::InvalidArgument(format!("{} is fitted exactly; dispersion undefined", role.name())));
            }
            // score in log-shape: ln k - ψ(k) = c, decreasing in k
            let log_shape = optim::brent_root(|t: f64| t - digamma(t.exp()) - c, -30.0, 30.0, 1e-12, 200)
                .ok_or(QmedError::NonConvergence { what: "gamma dispersion", iterations: 200, gradient_norm: c })?;
            let phi = (-log_shape).exp();
            finish(data, role, MarginalModel::gamma(zeta, phi)?, iterations, true)
        }
    }
}

fn check_positive(y: &[f64], role: Role) -> Result<()> {
    if let Some(i) = y.iter().position(|&v| !(v > 0.0)) {
        return Err(QmedError::RowOutOfSupport { row: i + 1, margin: role.name() });
    }
    Ok(())
}

fn finish(data: &Dataset, role: Role, model: MarginalModel, iterations: usize, converged: bool) -> Result<MarginalFit> {
    let y = data.column(role);
    let mut loglik = 0.0;
    for (i, &v) in y.iter().enumerate() {
        loglik += model.log_density(v, &data.x()[i])?;
    }
    Ok(MarginalFit { model, loglik, iterations, converged })
}

/// Newton iterations on the rate log-likelihood `Σ ηᵢ - yᵢ exp(ηᵢ)`.
fn fit_exponential(x: &DMatrix<f64>, y: &[f64]) -> Result<(Vec<f64>, usize)> {
    let (n, p) = x.shape();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut zeta = DVector::zeros(p);
    zeta[0] = -ybar.ln();
    let loglik = |z: &DVector<f64>| -> f64 {
        let eta = x * z;
        eta.iter().zip(y).map(|(&e, &yi)| e - yi * e.exp()).sum()
    };
    let mut current = loglik(&zeta);
    let mut grad_norm = f64::INFINITY;
    for iter in 1..=MAX_GLM_ITER {
        let eta = x * &zeta;
        let w: Vec<f64> = eta.iter().zip(y).map(|(&e, &yi)| yi * e.exp()).collect();
        let mut grad = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        for i in 0..n {
            let xi = x.row(i);
            for a in 0..p {
                grad[a] += xi[a] * (1.0 - w[i]);
                for b in 0..=a {
                    info[(a, b)] += w[i] * xi[a] * xi[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        grad_norm = grad.amax() / n as f64;
        if grad_norm < 1e-10 {
            return Ok((zeta.as_slice().to_vec(), iter));
        }
        let step = spd_solve(info, &grad)?;
        let mut t = 1.0;
        loop {
            let trial = &zeta + &step * t;
            let val = loglik(&trial);
            if val.is_finite() && val >= current - 1e-12 * current.abs() {
                zeta = trial;
                current = val;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return Err(QmedError::NonConvergence { what: "exponential GLM", iterations: iter, gradient_norm: grad_norm });
            }
        }
        if step.amax() * t < 1e-12 {
            return Ok((zeta.as_slice().to_vec(), iter));
        }
    }
    Err(QmedError::NonConvergence { what: "exponential GLM", iterations: MAX_GLM_ITER, gradient_norm: grad_norm })
}

/// Fisher scoring for the log-link Gamma mean; the working weights are
/// constant so each step is an ordinary least-squares solve.
fn fit_gamma_mean(x: &DMatrix<f64>, y: &[f64]) -> Result<(Vec<f64>, usize)> {
    let (n, p) = x.shape();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut zeta = DVector::zeros(p);
    zeta[0] = ybar.ln();
    let xt = x.transpose();
    let xtx = &xt * x;
    // deviance-like objective: Σ y/μ + ln μ
    let objective = |z: &DVector<f64>| -> f64 {
        let eta = x * z;
        eta.iter().zip(y).map(|(&e, &yi)| yi * (-e).exp() + e).sum()
    };
    let mut current = objective(&zeta);
    let mut grad_norm = f64::INFINITY;
    for iter in 1..=MAX_GLM_ITER {
        let eta = x * &zeta;
        let resid = DVector::from_iterator(n, eta.iter().zip(y).map(|(&e, &yi)| yi * (-e).exp() - 1.0));
        let score = &xt * &resid;
        grad_norm = score.amax() / n as f64;
        if grad_norm < 1e-10 {
            return Ok((zeta.as_slice().to_vec(), iter));
        }
        let step = spd_solve(xtx.clone(), &score)?;
        let mut t = 1.0;
        loop {
            let trial = &zeta + &step * t;
            let val = objective(&trial);
            if val.is_finite() && val <= current + 1e-12 * current.abs() {
                zeta = trial;
                current = val;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return Err(QmedError::NonConvergence { what: "gamma GLM", iterations: iter, gradient_norm: grad_norm });
            }
        }
        if step.amax() * t < 1e-12 {
            return Ok((zeta.as_slice().to_vec(), iter));
        }
    }
    Err(QmedError::NonConvergence { what: "gamma GLM", iterations: MAX_GLM_ITER, gradient_norm: grad_norm })
}

/// Result of the stage-2 copula fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DagFit {
    pub dag: DagParams,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

/// Maximizes the copula log-likelihood over `(α, β, γ)` with `rho` held
/// fixed, starting from the independence model.
pub fn fit_dag_moments(moments: &ScoreMoments, rho: f64) -> Result<DagFit> {
    if !(rho.abs() < 1.0) {
        return Err(QmedError::InvalidArgument(format!("rho must lie in (-1, 1), got {rho}")));
    }
    let n = moments.n as f64;
    let objective = |theta: &[f64]| -> f64 {
        let dag = DagParams::new(theta[0], theta[1], theta[2]).with_rho(rho);
        match implied_correlation(&dag).and_then(|r| CopulaKernel::new(&r)) {
            Ok(k) => -k.log_likelihood(moments) / n,
            Err(_) => f64::INFINITY,
        }
    };
    let min = optim::minimize(objective, &[0.0, 0.0, 0.0], BfgsOptions::default());
    if !min.value.is_finite() {
        return Err(QmedError::NonConvergence { what: "DAG stage", iterations: min.iterations, gradient_norm: min.gradient_norm });
    }
    let dag = DagParams::new(min.x[0], min.x[1], min.x[2]).with_rho(rho);
    Ok(DagFit { dag, loglik: -min.value * n, iterations: min.iterations, converged: min.converged, gradient_norm: min.gradient_norm })
}

/// Stage 2 on a dataset with fitted marginals; returns the fit and the
/// number of clamped normal scores.
pub fn fit_dag(data: &Dataset, marginals: [&MarginalModel; 3], rho: f64) -> Result<(DagFit, usize)> {
    let (scores, clamps) = dataset_scores(marginals[0], marginals[1], marginals[2], data)?;
    Ok((fit_dag_moments(&ScoreMoments::from_scores(&scores), rho)?, clamps))
}

/// Full two-stage fit with `rho = 0`.
pub fn fit(data: &Dataset, spec: &FitSpec) -> Result<FitResult> {
    fit_with_rho(data, spec, 0.0)
}

/// Full two-stage fit with a hypothesized error correlation.
pub fn fit_with_rho(data: &Dataset, spec: &FitSpec, rho: f64) -> Result<FitResult> {
    let ms = fit_marginal(data, Role::S, spec.s.family, spec.s.link)?;
    let mm = fit_marginal(data, Role::M, spec.m.family, spec.m.link)?;
    let my = fit_marginal(data, Role::Y, spec.y.family, spec.y.link)?;
    refit_dag(data, [ms, mm, my], rho)
}

/// Stage 2 on top of already fitted marginals.
pub fn refit_dag(data: &Dataset, marginals: [MarginalFit; 3], rho: f64) -> Result<FitResult> {
    let [ms, mm, my] = marginals;
    let (dag_fit, clamp_count) = fit_dag(data, [&ms.model, &mm.model, &my.model], rho)?;
    Ok(FitResult {
        stage1_loglik: [ms.loglik, mm.loglik, my.loglik],
        stage2_loglik: dag_fit.loglik,
        iterations: [ms.iterations, mm.iterations, my.iterations, dag_fit.iterations],
        converged: [ms.converged, mm.converged, my.converged, dag_fit.converged],
        clamp_count,
        stage2_gradient_norm: dag_fit.gradient_norm,
        model: GsemModel::new(ms.model, mm.model, my.model, dag_fit.dag)?,
    })
}

/// Clamped normal scores of the data under a fitted model.
pub fn model_scores(model: &GsemModel, data: &Dataset) -> Result<Vec<Vector3<f64>>> {
    Ok(dataset_scores(&model.marginal_s, &model.marginal_m, &model.marginal_y, data)?.0)
}
