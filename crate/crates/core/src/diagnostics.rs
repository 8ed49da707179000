//! Sensitivity to correlated mediator and outcome errors, a copula
//! goodness-of-fit test, p-value combination, FDR selection and the
//! multi-mediator screen.

use std::collections::HashMap;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NumericTable};
use crate::error::{QmedError, Result};
use crate::estimands::{evaluate, EstimandQuery};
use crate::estimation::{fit, fit_dag_moments, fit_marginal, refit_dag, FitSpec};
use crate::gsem::{dataset_scores, implied_correlation, CopulaKernel, DagParams, GsemModel, ScoreMoments};
use crate::data::Role;
use crate::mediation::{ab_test, rank_p_value, AbConfig, MAX_FAILURE_FRACTION};
use crate::optim;
use crate::rng::{data_stream, derive_seed, replicate_stream};
use crate::sim::sample_model;
use crate::stats;

/// `-0.9, -0.89, ..., 0.9`.
pub fn default_rho_grid() -> Vec<f64> {
    (-90..=90).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub rho_grid: Vec<f64>,
    /// Indirect effect refitted at each `rho`; `None` where the refit failed.
    pub qnie_at_rho: Vec<Option<f64>>,
    /// Smallest `|rho|` at which the indirect effect crosses zero.
    pub breakpoint_abs_rho: Option<f64>,
    /// Absolute sample correlation of the fitted mediator and outcome errors.
    pub observed_abs_corr: f64,
}

/// Structural residuals `(ε_M, ε_Y)` of the latent system at fitted scores.
pub fn structural_residuals(dag: &DagParams, scores: &[Vector3<f64>]) -> (Vec<f64>, Vec<f64>) {
    let (dm, dy) = (dag.delta_m(), dag.delta_y());
    scores
        .iter()
        .map(|z| {
            let e_m = dm * z[1] - dag.alpha_s * z[0];
            let e_y = dy * z[2] - dag.gamma_s * z[0] - dag.beta_m * dm * z[1];
            (e_m, e_y)
        })
        .unzip()
}

/// Refits the DAG at each hypothesized error correlation and recomputes the
/// indirect effect.
pub fn sensitivity_curve(data: &Dataset, spec: &FitSpec, q: &EstimandQuery, rho_grid: &[f64]) -> Result<SensitivityCurve> {
    if rho_grid.iter().any(|r| !(r.abs() < 1.0)) {
        return Err(QmedError::InvalidArgument("rho grid must lie in (-1, 1)".into()));
    }
    if !rho_grid.contains(&0.0) {
        return Err(QmedError::InvalidArgument("rho grid must contain 0".into()));
    }
    let mut grid = rho_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let ms = fit_marginal(data, Role::S, spec.s.family, spec.s.link)?;
    let mm = fit_marginal(data, Role::M, spec.m.family, spec.m.link)?;
    let my = fit_marginal(data, Role::Y, spec.y.family, spec.y.link)?;
    let (scores, _) = dataset_scores(&ms.model, &mm.model, &my.model, data)?;
    let moments = ScoreMoments::from_scores(&scores);
    let model_at = |rho: f64| -> Result<GsemModel> {
        let d = fit_dag_moments(&moments, rho)?;
        GsemModel::new(ms.model.clone(), mm.model.clone(), my.model.clone(), d.dag)
    };
    let qnie_at = |rho: f64| -> Option<f64> { evaluate(&model_at(rho).ok()?, q).ok().map(|v| v.qnie) };

    let qnie_at_rho: Vec<Option<f64>> = grid.par_iter().map(|&r| qnie_at(r)).collect();
    let base = model_at(0.0)?;
    let (e_m, e_y) = structural_residuals(&base.dag, &scores);
    let observed_abs_corr = stats::correlation(&e_m, &e_y).abs();

    let mut breakpoint: Option<f64> = None;
    let mut consider = |b: f64| {
        if breakpoint.is_none_or(|cur| b.abs() < cur) {
            breakpoint = Some(b.abs());
        }
    };
    for k in 0..grid.len() {
        if qnie_at_rho[k] == Some(0.0) {
            consider(grid[k]);
        }
        if k + 1 < grid.len() {
            if let (Some(a), Some(b)) = (qnie_at_rho[k], qnie_at_rho[k + 1]) {
                if a * b < 0.0 {
                    let root = optim::brent_root(|r| qnie_at(r).unwrap_or(f64::NAN), grid[k], grid[k + 1], 1e-10, 100);
                    consider(root.unwrap_or(0.5 * (grid[k] + grid[k + 1])));
                }
            }
        }
    }
    Ok(SensitivityCurve { rho_grid: grid, qnie_at_rho, breakpoint_abs_rho: breakpoint, observed_abs_corr })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub p_value: f64,
    pub folds: usize,
    pub b_effective: usize,
    pub failed_replicates: usize,
}

fn fold_moments(scores: &[Vector3<f64>], assignment: &[usize], folds: usize) -> Vec<ScoreMoments> {
    let mut out = vec![ScoreMoments { n: 0, szz: nalgebra::Matrix3::zeros() }; folds];
    for (z, &k) in scores.iter().zip(assignment) {
        out[k].n += 1;
        out[k].szz += z * z.transpose();
    }
    out
}

fn kernel(dag: &DagParams) -> Result<CopulaKernel> {
    CopulaKernel::new(&implied_correlation(dag)?)
}

/// Cross-validated copula pseudo-likelihood gap: the held-out folds scored
/// by the full-data fit minus the same folds scored by fits that never saw them.
pub fn cv_pseudo_likelihood_gap(scores: &[Vector3<f64>], assignment: &[usize], folds: usize) -> Result<f64> {
    let parts = fold_moments(scores, assignment, folds);
    let total = ScoreMoments::from_scores(scores);
    let full = kernel(&fit_dag_moments(&total, 0.0)?.dag)?;
    let mut gap = 0.0;
    for part in &parts {
        let train = ScoreMoments { n: total.n - part.n, szz: total.szz - part.szz };
        let held_out = kernel(&fit_dag_moments(&train, 0.0)?.dag)?;
        gap += full.log_likelihood(part) - held_out.log_likelihood(part);
    }
    Ok(gap)
}

/// Random folds over distinct observations: repeated rows share a fold so
/// held-out rows never have a copy in the training part.
fn fold_assignment(data: &Dataset, folds: usize, seed: u64) -> Vec<usize> {
    let key = |i: usize| {
        let (s, m, y, x) = data.row(i);
        let mut k = vec![s.to_bits(), m.to_bits(), y.to_bits()];
        k.extend(x.iter().map(|v| v.to_bits()));
        k
    };
    let mut first_seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let group: Vec<usize> = (0..data.n())
        .map(|i| {
            let next = first_seen.len();
            *first_seen.entry(key(i)).or_insert(next)
        })
        .collect();
    let mut order: Vec<usize> = (0..first_seen.len()).collect();
    order.shuffle(&mut data_stream(seed));
    let mut fold_of = vec![0; order.len()];
    for (pos, &g) in order.iter().enumerate() {
        fold_of[g] = pos % folds;
    }
    group.into_iter().map(|g| fold_of[g]).collect()
}

/// Goodness of fit of the copula: the cross-validated pseudo-likelihood gap
/// calibrated by parametric bootstrap from the fitted model at the observed
/// covariates. The p-value is two-sided.
pub fn gof_test(data: &Dataset, spec: &FitSpec, folds: usize, replicates: usize, seed: u64) -> Result<GofResult> {
    if folds < 2 {
        return Err(QmedError::InvalidArgument("at least two folds are required".into()));
    }
    if data.n() < 4 * folds {
        return Err(QmedError::InvalidArgument(format!("need n >= 4 * folds, got n = {}, folds = {folds}", data.n())));
    }
    if replicates < 1 {
        return Err(QmedError::InvalidArgument("at least one bootstrap replicate is required".into()));
    }
    let fitted = fit(data, spec)?;
    let n = data.n();
    let stat_of = |d: &Dataset, model: &GsemModel, fold_seed: u64| -> Result<f64> {
        let (scores, _) = dataset_scores(&model.marginal_s, &model.marginal_m, &model.marginal_y, d)?;
        cv_pseudo_likelihood_gap(&scores, &fold_assignment(d, folds, fold_seed), folds)
    };
    let statistic = stat_of(data, &fitted.model, derive_seed(seed, &[0]))?;
    let draws: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_stream(seed, b);
            let mut row = 0usize;
            let boot = sample_model(
                &fitted.model,
                n,
                |_| {
                    row += 1;
                    data.x()[row - 1].clone()
                },
                &mut rng,
            )
            .ok()?;
            let refit = fit(&boot, spec).ok()?;
            stat_of(&boot, &refit.model, derive_seed(seed, &[b as u64 + 1])).ok()
        })
        .collect();
    let failed = draws.iter().filter(|d| d.is_none()).count();
    if failed as f64 > MAX_FAILURE_FRACTION * replicates as f64 {
        return Err(QmedError::TooManyFailures { failed, total: replicates });
    }
    let null: Vec<f64> = draws.into_iter().flatten().collect();
    Ok(GofResult { statistic, p_value: rank_p_value(&null, statistic), folds, b_effective: null.len(), failed_replicates: failed })
}

pub const P_CLAMP: f64 = 1e-15;

/// Cauchy combination of p-values, also returning how many inputs were
/// clamped away from 0 or 1.
pub fn cauchy_combination_checked(p: &[f64]) -> Result<(f64, usize)> {
    if p.is_empty() {
        return Err(QmedError::InvalidArgument("no p-values to combine".into()));
    }
    let mut clamped = 0;
    let mut total = 0.0;
    for &pi in p {
        if !(0.0..=1.0).contains(&pi) {
            return Err(QmedError::ProbabilityOutOfRange(pi));
        }
        let c = pi.clamp(P_CLAMP, 1.0 - P_CLAMP);
        clamped += (c != pi) as usize;
        // tan((0.5 - p)π) = cot(pπ)
        total += 1.0 / (c * std::f64::consts::PI).tan();
    }
    let t = total / p.len() as f64;
    let combined = if t > 0.0 { (1.0 / t).atan() / std::f64::consts::PI } else { 0.5 - t.atan() / std::f64::consts::PI };
    Ok((combined, clamped))
}

pub fn cauchy_combination(p: &[f64]) -> Result<f64> {
    Ok(cauchy_combination_checked(p)?.0)
}

/// Benjamini–Hochberg step-up selection; returns selected indices in
/// increasing order.
pub fn bh_fdr(p: &[f64], q: f64) -> Result<Vec<usize>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(QmedError::ProbabilityOutOfRange(q));
    }
    if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(QmedError::ProbabilityOutOfRange(bad));
    }
    let m = p.len() as f64;
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted.iter().enumerate().filter(|(k, &v)| v <= (*k + 1) as f64 * q / m).map(|(_, &v)| v).last();
    Ok(match threshold {
        Some(t) => (0..p.len()).filter(|&i| p[i] <= t).collect(),
        None => Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediatorResult {
    pub name: String,
    pub estimate: f64,
    pub p_value: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub mediators: Vec<MediatorResult>,
    /// Cauchy combination of all mediator p-values.
    pub global_p_value: f64,
    pub fdr_level: f64,
    pub selected: Vec<String>,
}

/// Candidate mediator columns of a screening table: every column other than
/// `S`, `Y` and the covariates.
pub fn mediator_columns(table: &NumericTable) -> Vec<String> {
    table.headers.iter().filter(|h| h.as_str() != "S" && h.as_str() != "Y" && !NumericTable::is_covariate(h)).cloned().collect()
}

/// Tests every candidate mediator with the adaptive bootstrap test, combines
/// the p-values and selects mediators at FDR level `fdr`.
pub fn screen(table: &NumericTable, spec: &FitSpec, q: &EstimandQuery, cfg: &AbConfig, fdr: f64) -> Result<ScreenReport> {
    let s = table.column("S")?;
    let y = table.column("Y")?;
    let x = table.covariates()?;
    let names = mediator_columns(table);
    if names.is_empty() {
        return Err(QmedError::InvalidArgument("no mediator columns found".into()));
    }
    let mut results = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let data = Dataset::new(s.clone(), table.column(name)?, y.clone(), x.clone())?;
        let cfg_j = AbConfig { seed: derive_seed(cfg.seed, &[j as u64]), ..cfg.clone() };
        let r = ab_test(&data, spec, q, &cfg_j)?;
        results.push(MediatorResult { name: name.clone(), estimate: r.estimate, p_value: r.p_value, selected: false });
    }
    let p: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    let chosen = bh_fdr(&p, fdr)?;
    for &i in &chosen {
        results[i].selected = true;
    }
    Ok(ScreenReport {
        global_p_value: cauchy_combination(&p)?,
        fdr_level: fdr,
        selected: chosen.iter().map(|&i| results[i].name.clone()).collect(),
        mediators: results,
    })
}

/// Refits only the copula on top of the given fitted marginals.
pub fn refit_with_rho(data: &Dataset, spec: &FitSpec, rho: f64) -> Result<crate::estimation::FitResult> {
    let ms = fit_marginal(data, Role::S, spec.s.family, spec.s.link)?;
    let mm = fit_marginal(data, Role::M, spec.m.family, spec.m.link)?;
    let my = fit_marginal(data, Role::Y, spec.y.family, spec.y.link)?;
    refit_dag(data, [ms, mm, my], rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cauchy_examples() {
        assert!((cauchy_combination(&[0.5, 0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        for p in [0.001, 0.3, 0.77] {
            assert!((cauchy_combination(&[p]).unwrap() - p).abs() < 1e-14);
        }
        let c = cauchy_combination(&[0.01, 0.5]).unwrap();
        // two-term oracle: 0.5 - atan(tan(0.49 pi) / 2) / pi
        assert!((c - 0.019_980_299_664_05).abs() < 1e-12, "{c}");
        let (v, clamped) = cauchy_combination_checked(&[0.0, 0.5]).unwrap();
        assert_eq!(clamped, 1);
        assert!(v > 0.0 && v < 1e-14);
        assert!(cauchy_combination(&[]).is_err());
        assert!(cauchy_combination(&[1.2]).is_err());
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_fdr(&[0.01, 0.02, 0.9], 0.1).unwrap(), vec![0, 1]);
        assert!(bh_fdr(&[1.0, 1.0, 1.0], 0.1).unwrap().is_empty());
        assert_eq!(bh_fdr(&[0.05], 0.1).unwrap(), vec![0]);
        // step-up: 0.04 passes 2·0.1/4 even though 0.03 alone would not
        assert_eq!(bh_fdr(&[0.9, 0.04, 0.03, 0.8], 0.1).unwrap(), vec![1, 2]);
        assert!(bh_fdr(&[0.5], 1.0).is_err());
    }

    #[test]
    fn residuals_recover_structural_errors() {
        let dag = DagParams::new(0.7, -0.4, 0.3);
        let (e_s, e_m, e_y) = (0.2, -1.1, 0.6);
        let w_m = dag.alpha_s * e_s + e_m;
        let w_y = dag.gamma_s * e_s + dag.beta_m * w_m + e_y;
        let z = Vector3::new(e_s, w_m / dag.delta_m(), w_y / dag.delta_y());
        let (rm, ry) = structural_residuals(&dag, &[z]);
        assert!((rm[0] - e_m).abs() < 1e-14);
        assert!((ry[0] - e_y).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn cauchy_is_symmetric_and_monotone(p in proptest::collection::vec(0.001..0.999f64, 1..8), k in 0usize..8, shrink in 0.1..0.99f64) {
            let base = cauchy_combination(&p).unwrap();
            let mut rev = p.clone();
            rev.reverse();
            prop_assert!((cauchy_combination(&rev).unwrap() - base).abs() < 1e-12);
            let mut lower = p.clone();
            let i = k % p.len();
            lower[i] *= shrink;
            prop_assert!(cauchy_combination(&lower).unwrap() <= base + 1e-12);
        }

        #[test]
        fn bh_nested_in_q(p in proptest::collection::vec(0.0..1.0f64, 1..20), q1 in 0.01..0.5f64, dq in 0.0..0.4f64) {
            let small = bh_fdr(&p, q1).unwrap();
            let large = bh_fdr(&p, q1 + dq).unwrap();
            prop_assert!(small.iter().all(|i| large.contains(i)));
        }
    }
}
