//! Linear mean and quantile regression used by the product-of-coefficients
//! and joint-significance competitors.

use nalgebra::{DMatrix, DVector};

use crate::error::{QmedError, Result};
use crate::normal;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
}

fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = a.diagonal().amax();
    let chol = a.cholesky().ok_or(QmedError::RankDeficient)?;
    let l = chol.l_dirty();
    if (0..l.nrows()).any(|i| !(l[(i, i)] * l[(i, i)] > 1e-12 * scale)) {
        return Err(QmedError::RankDeficient);
    }
    Ok(chol.solve(b))
}

fn inverse_spd(a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = a.diagonal().amax();
    let chol = a.cholesky().ok_or(QmedError::RankDeficient)?;
    let l = chol.l_dirty();
    if (0..l.nrows()).any(|i| !(l[(i, i)] * l[(i, i)] > 1e-12 * scale)) {
        return Err(QmedError::RankDeficient);
    }
    Ok(chol.inverse())
}

/// Ordinary least squares with classical standard errors (`RSS / (n - p)`).
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearFit> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(QmedError::InvalidArgument(format!("need n > p, got n = {n}, p = {p}")));
    }
    let xt = x.transpose();
    let inv = inverse_spd(&xt * x)?;
    let coef = &inv * (&xt * y);
    let sigma2 = (y - x * &coef).norm_squared() / (n - p) as f64;
    let se = (0..p).map(|j| (sigma2 * inv[(j, j)]).sqrt()).collect();
    Ok(LinearFit { coef: coef.as_slice().to_vec(), se })
}

/// Check loss `Σ ρ_τ(rᵢ)`.
pub fn check_loss(residuals: &DVector<f64>, tau: f64) -> f64 {
    residuals.iter().map(|&r| if r < 0.0 { (tau - 1.0) * r } else { tau * r }).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantRegFit {
    pub coef: Vec<f64>,
    pub objective: f64,
    /// True when no edge leaving the final vertex descends.
    pub exact: bool,
}

/// Linear quantile regression at level `tau`.
///
/// A few majorize-minimize iterations (reweighted least squares on a
/// smoothed check loss) locate a starting vertex through the observations
/// with the smallest residuals; simplex pivots then move between adjacent
/// vertices until the subgradient optimality condition holds.
pub fn quantile_regression(x: &DMatrix<f64>, y: &DVector<f64>, tau: f64) -> Result<QuantRegFit> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(QmedError::ProbabilityOutOfRange(tau));
    }
    let (n, p) = x.shape();
    if n <= p {
        return Err(QmedError::InvalidArgument(format!("need n > p, got n = {n}, p = {p}")));
    }
    // Repeated rows make vertices degenerate and let the pivots cycle; a
    // tiny deterministic jitter of the response separates them.
    let y_orig = y;
    let jitter = 1e-9 * y.amax().max(1e-300);
    let y = &DVector::from_fn(n, |i, _| y[i] + jitter * (unit_hash(i) - 0.5));
    let resid = mm_start(x, y, tau)?;
    let mut basis = start_basis(x, &resid).ok_or(QmedError::RankDeficient)?;
    let scale = y.amax().max(1.0);
    let zero_tol = 1e-12 * scale;
    let mut in_basis = vec![false; n];
    for &i in &basis {
        in_basis[i] = true;
    }
    let mut best: Option<QuantRegFit> = None;
    for _ in 0..(20 * n).max(200) {
        let xh = DMatrix::from_fn(p, p, |i, j| x[(basis[i], j)]);
        let lu = xh.lu();
        let beta = lu.solve(&DVector::from_fn(p, |i, _| y[basis[i]])).ok_or(QmedError::RankDeficient)?;
        let r = y - x * &beta;
        let coef = lu.solve(&DVector::from_fn(p, |i, _| y_orig[basis[i]])).ok_or(QmedError::RankDeficient)?;
        let objective = check_loss(&(y_orig - x * &coef), tau);
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(QuantRegFit { coef: coef.as_slice().to_vec(), objective, exact: false });
        }

        // dual values of the basis observations
        let mut g = DVector::zeros(p);
        let mut zero_rows = Vec::new();
        for i in (0..n).filter(|&i| !in_basis[i]) {
            if r[i].abs() <= zero_tol {
                zero_rows.push(i);
            }
            let psi = if r[i] < -zero_tol { tau - 1.0 } else { tau };
            g += x.row(i).transpose() * psi;
        }
        let inv = lu.try_inverse().ok_or(QmedError::RankDeficient)?;
        let dual = -(inv.transpose() * &g);

        // Each basis observation can leave in two directions. The slope along
        // an edge adds the weight of zero residuals pushed negative, which
        // the dual alone misses at degenerate vertices.
        let mut step: Option<(usize, DVector<f64>, f64, f64)> = None;
        for j in 0..p {
            for sign in [1.0, -1.0] {
                let nominal = if sign > 0.0 { dual[j] + 1.0 - tau } else { tau - dual[j] };
                if nominal >= -1e-10 {
                    continue;
                }
                let d = inv.column(j) * sign;
                let slope = nominal + zero_rows.iter().map(|&i| x.row(i).dot(&d.transpose()).max(0.0)).sum::<f64>();
                if slope < -1e-10 && step.as_ref().is_none_or(|s| slope < s.3) {
                    step = Some((j, d, nominal, slope));
                }
            }
        }
        let Some((leave, d, slope0, _)) = step else {
            return Ok(QuantRegFit { coef: coef.as_slice().to_vec(), objective, exact: true });
        };

        // walk the breakpoints until the slope turns non-negative
        let mut breaks: Vec<(f64, f64, usize)> = Vec::new();
        for i in (0..n).filter(|&i| !in_basis[i]) {
            let c = x.row(i).dot(&d.transpose());
            if c.abs() < 1e-14 {
                continue;
            }
            // zero residuals are on the positive side, so they cross at once when pushed down
            if r[i].abs() <= zero_tol {
                if c > 0.0 {
                    breaks.push((0.0, c, i));
                }
            } else if r[i] / c > 0.0 {
                breaks.push((r[i] / c, c.abs(), i));
            }
        }
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut slope = slope0;
        let mut enter = None;
        for &(_, w, i) in &breaks {
            slope += w;
            if slope >= 0.0 {
                enter = Some(i);
                break;
            }
        }
        let Some(k) = enter else {
            return Err(QmedError::NonConvergence { what: "quantile regression (unbounded edge)", iterations: 0, gradient_norm: slope });
        };
        in_basis[basis[leave]] = false;
        in_basis[k] = true;
        basis[leave] = k;
    }
    Ok(best.expect("at least one vertex visited"))
}

/// Deterministic value in `[0, 1)` for an index.
fn unit_hash(i: usize) -> f64 {
    let mut z = (i as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) as f64 / 2f64.powi(64)
}

/// Residuals after a short run of reweighted least squares.
fn mm_start(x: &DMatrix<f64>, y: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let xt = x.transpose();
    let shift = &xt * DVector::from_element(n, 2.0 * tau - 1.0);
    let beta = solve_spd(&xt * x, &(&xt * y))?;
    let eps = 1e-6 * y.amax().max(1e-300);
    let mut resid = y - x * &beta;
    let mut obj = check_loss(&resid, tau);
    for _ in 0..25 {
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut xtwy = shift.clone();
        for i in 0..n {
            let w = 1.0 / (eps + resid[i].abs());
            let xi = x.row(i);
            for a in 0..p {
                let wa = w * xi[a];
                xtwy[a] += wa * y[i];
                for b in 0..=a {
                    xtwx[(a, b)] += wa * xi[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(b, a)] = xtwx[(a, b)];
            }
        }
        let Ok(next) = solve_spd(xtwx, &xtwy) else { break };
        let next_resid = y - x * &next;
        let next_obj = check_loss(&next_resid, tau);
        let done = (obj - next_obj).abs() <= 1e-6 * obj.max(1e-300);
        resid = next_resid;
        obj = next_obj;
        if done {
            break;
        }
    }
    Ok(resid)
}

/// Linearly independent rows chosen greedily by increasing |residual|.
fn start_basis(x: &DMatrix<f64>, resid: &DVector<f64>) -> Option<Vec<usize>> {
    let (n, p) = x.shape();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()));
    let mut chosen = Vec::with_capacity(p);
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(p);
    for i in order {
        let mut v = x.row(i).transpose();
        let norm = v.norm();
        for q in &ortho {
            let c = q.dot(&v);
            v -= q * c;
        }
        let left = v.norm();
        if left > 1e-8 * norm.max(1e-300) {
            ortho.push(v / left);
            chosen.push(i);
            if chosen.len() == p {
                return Some(chosen);
            }
        }
    }
    None
}

/// Hall–Sheather bandwidth for the sparsity estimate at level `tau`.
pub fn hall_sheather_bandwidth(n: usize, tau: f64, alpha: f64) -> f64 {
    let z = normal::quantile(1.0 - alpha / 2.0);
    let q = normal::quantile(tau);
    let f = normal::pdf(q);
    (n as f64).powf(-1.0 / 3.0) * z.powf(2.0 / 3.0) * (1.5 * f * f / (2.0 * q * q + 1.0)).powf(1.0 / 3.0)
}

/// Large-sample standard errors under i.i.d. errors: `τ(1-τ) s² (XᵀX)⁻¹`
/// with the sparsity `s` from a difference quotient of residual quantiles.
pub fn quantile_regression_se(x: &DMatrix<f64>, y: &DVector<f64>, coef: &[f64], tau: f64) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    let r = y - x * DVector::from_column_slice(coef);
    let mut sorted: Vec<f64> = r.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let h = hall_sheather_bandwidth(n, tau, 0.05);
    let (lo, hi) = ((tau - h).max(0.0), (tau + h).min(1.0));
    let sparsity = (stats::quantile_sorted(&sorted, hi) - stats::quantile_sorted(&sorted, lo)) / (hi - lo);
    let inv = inverse_spd(x.transpose() * x)?;
    Ok((0..p).map(|j| (tau * (1.0 - tau) * sparsity * sparsity * inv[(j, j)]).sqrt()).collect())
}
