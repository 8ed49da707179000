//! Small-dimension unconstrained minimization: BFGS with central
//! finite-difference gradients and a Nelder–Mead restart, plus a bracketed
//! scalar root finder.

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the relative objective change falls below this...
    pub rel_tol: f64,
    /// ...and the gradient infinity norm is below this.
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 200, rel_tol: 1e-10, grad_tol: 1e-6 }
    }
}

/// Central differences with step `1e-6·max(1, |xᵢ|)`.
pub fn numerical_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// Minimizes `f`, which may return `+inf` (or NaN) for rejected points.
/// A failed line search triggers a Nelder–Mead restart from the best point,
/// followed by one more quasi-Newton polish.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: BfgsOptions) -> Minimum {
    let first = bfgs(&f, x0, opts);
    if first.converged {
        return first;
    }
    let simplex = nelder_mead(&f, &first.x, 0.1, 2000, 1e-12);
    let mut polished = bfgs(&f, &simplex.x, opts);
    polished.iterations += first.iterations + simplex.iterations;
    if polished.value <= first.value {
        polished
    } else {
        Minimum { iterations: polished.iterations, ..first }
    }
}

fn bfgs<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], opts: BfgsOptions) -> Minimum {
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = numerical_gradient(f, &x);
    let mut h = vec![vec![0.0; d]; d];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut iterations = 0;
    if !fx.is_finite() {
        return Minimum { x, value: fx, iterations, gradient_norm: f64::INFINITY, converged: false };
    }
    if inf_norm(&g) < opts.grad_tol {
        return Minimum { x, value: fx, iterations, gradient_norm: inf_norm(&g), converged: true };
    }
    while iterations < opts.max_iter {
        iterations += 1;
        let mut dir: Vec<f64> = (0..d).map(|i| -(0..d).map(|j| h[i][j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            // not a descent direction: reset to steepest descent
            for (i, row) in h.iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[i] = 1.0;
            }
            dir = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        // Backtracking Armijo search; non-finite trial values shrink the step.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            return Minimum { x, value: fx, iterations, gradient_norm: inf_norm(&g), converged: false };
        };
        let g_new = numerical_gradient(f, &x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rel_change = (fx - f_new).abs() / fx.abs().max(1e-300).max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        let gnorm = inf_norm(&g);
        if gnorm < opts.grad_tol && (rel_change < opts.rel_tol || gnorm < opts.grad_tol * 1e-2) {
            return Minimum { x, value: fx, iterations, gradient_norm: gnorm, converged: true };
        }
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..d).map(|i| (0..d).map(|j| h[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..d {
                for j in 0..d {
                    h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
    }
    let gradient_norm = inf_norm(&g);
    Minimum { x, value: fx, iterations, gradient_norm, converged: gradient_norm < opts.grad_tol }
}

/// Nelder–Mead simplex search.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], scale: f64, max_iter: usize, tol: f64) -> Minimum {
    let d = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += scale * x0[i].abs().max(1.0);
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if (vals[d] - vals[0]).abs() <= tol * (vals[0].abs() + tol) {
            break;
        }
        let centroid: Vec<f64> = (0..d).map(|j| pts[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..d).map(|j| centroid[j] + t * (pts[d][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                pts[d] = xe;
                vals[d] = fe;
            } else {
                pts[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            pts[d] = xr;
            vals[d] = fr;
        } else {
            let (xc, fc) = if fr < vals[d] {
                let xc = along(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < vals[d].min(fr) {
                pts[d] = xc;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    pts[i] = (0..d).map(|j| pts[0][j] + 0.5 * (pts[i][j] - pts[0][j])).collect();
                    vals[i] = eval(&pts[i]);
                }
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    let x = pts[best].clone();
    let gradient_norm = inf_norm(&numerical_gradient(f, &x));
    Minimum { x, value: vals[best], iterations, gradient_norm, converged: false }
}

/// Root of a continuous `f` on `[lo, hi]` with a sign change, by Brent's method.
/// Returns `None` when the endpoints do not bracket a root.
pub fn brent_root<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Option<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return None;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn bfgs_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + (x[0] * x[1] - 0.5 * x[2]).powi(2) + x[2] * x[2];
        let m = minimize(f, &[0.0, 0.0, 0.0], BfgsOptions::default());
        assert!(m.converged);
        let g = numerical_gradient(&f, &m.x);
        assert!(inf_norm(&g) < 1e-6);
    }

    #[test]
    fn rosenbrock_converges() {
        let m = minimize(rosenbrock, &[-1.2, 1.0], BfgsOptions { max_iter: 500, ..Default::default() });
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn infinite_region_is_avoided() {
        // barrier at x >= 2
        let f = |x: &[f64]| if x[0] >= 2.0 { f64::INFINITY } else { (x[0] - 1.9).powi(2) };
        let m = minimize(f, &[0.0], BfgsOptions::default());
        assert!((m.x[0] - 1.9).abs() < 1e-5);
    }

    #[test]
    fn nelder_mead_finds_minimum() {
        let m = nelder_mead(&rosenbrock, &[-1.2, 1.0], 0.5, 5000, 1e-14);
        assert!((m.x[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn brent_finds_cos_root() {
        let r = brent_root(f64::cos, 0.0, 3.0, 1e-14, 100).unwrap();
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(brent_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_none());
    }
}
