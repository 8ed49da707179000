//! The generalized structural equation model: a Gaussian copula whose
//! correlation matrix is induced by the weighted adjacency matrix of the
//! `S → M → Y`, `S → Y` DAG, joined with GLM marginals.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Role};
use crate::error::{QmedError, Result};
use crate::marginal::MarginalModel;
use crate::normal;

/// Structural coefficients of the latent system
/// `W_S = ε_S`, `W_M = α W_S + ε_M`, `W_Y = γ W_S + β W_M + ε_Y`,
/// with unit error variances and `corr(ε_M, ε_Y) = rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DagParams {
    pub alpha_s: f64,
    pub beta_m: f64,
    pub gamma_s: f64,
    #[serde(default)]
    pub rho: f64,
}

impl DagParams {
    pub fn new(alpha_s: f64, beta_m: f64, gamma_s: f64) -> Self {
        Self { alpha_s, beta_m, gamma_s, rho: 0.0 }
    }

    pub fn with_rho(self, rho: f64) -> Self {
        Self { rho, ..self }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    /// Total DAG effect `αβ + γ`.
    pub fn eta(&self) -> f64 {
        self.alpha_s * self.beta_m + self.gamma_s
    }

    /// Standard deviation of `W_M`.
    pub fn delta_m(&self) -> f64 {
        (self.alpha_s * self.alpha_s + 1.0).sqrt()
    }

    /// Standard deviation of `W_Y`, including the error correlation.
    pub fn delta_y(&self) -> f64 {
        let eta = self.eta();
        (eta * eta + self.beta_m * self.beta_m + 1.0 + 2.0 * self.beta_m * self.rho).sqrt()
    }
}

/// Weighted adjacency matrix `LT(α, γ, β)` with rows/columns ordered `(S, M, Y)`.
pub fn adjacency(dag: &DagParams) -> Matrix3<f64> {
    let mut theta = Matrix3::zeros();
    theta[(1, 0)] = dag.alpha_s;
    theta[(2, 0)] = dag.gamma_s;
    theta[(2, 1)] = dag.beta_m;
    theta
}

/// Correlation matrix of the standardized latent variables `(Z_S, Z_M, Z_Y)`.
pub fn implied_correlation(dag: &DagParams) -> Result<Matrix3<f64>> {
    if !(dag.rho.abs() < 1.0) {
        return Err(QmedError::InvalidArgument(format!("error correlation must lie in (-1, 1), got {}", dag.rho)));
    }
    let eta = dag.eta();
    let dm = dag.delta_m();
    let dy = dag.delta_y();
    let r_sm = dag.alpha_s / dm;
    let r_sy = eta / dy;
    let r_my = (dag.alpha_s * eta + dag.beta_m + dag.rho) / (dm * dy);
    let r = Matrix3::new(1.0, r_sm, r_sy, r_sm, 1.0, r_my, r_sy, r_my, 1.0);
    if r.cholesky().is_none() {
        return Err(QmedError::SingularCorrelation);
    }
    Ok(r)
}

/// Precomputed inverse and log-determinant of a copula correlation matrix.
#[derive(Debug, Clone, Copy)]
pub struct CopulaKernel {
    /// `R⁻¹ - I`
    pub inv_minus_i: Matrix3<f64>,
    pub log_det: f64,
}

impl CopulaKernel {
    pub fn new(r: &Matrix3<f64>) -> Result<Self> {
        let chol = r.cholesky().ok_or(QmedError::SingularCorrelation)?;
        let l = chol.l();
        let log_det = 2.0 * (0..3).map(|i| l[(i, i)].ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(QmedError::SingularCorrelation);
        }
        let inv_minus_i = chol.inverse() - Matrix3::identity();
        Ok(Self { inv_minus_i, log_det })
    }

    pub fn log_density(&self, z: &Vector3<f64>) -> f64 {
        -0.5 * self.log_det - 0.5 * z.dot(&(self.inv_minus_i * z))
    }

    /// Summed log density over rows summarized by `Σ zzᵀ`.
    pub fn log_likelihood(&self, stats: &ScoreMoments) -> f64 {
        -0.5 * stats.n as f64 * self.log_det - 0.5 * self.inv_minus_i.component_mul(&stats.szz).sum()
    }
}

/// Log density of the trivariate Gaussian copula at normal scores `z`:
/// `-½ log det R - ½ zᵀ(R⁻¹ - I)z`.
pub fn gaussian_copula_log_density(z: &Vector3<f64>, r: &Matrix3<f64>) -> Result<f64> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(QmedError::InvalidArgument("normal scores must be finite".into()));
    }
    Ok(CopulaKernel::new(r)?.log_density(z))
}

/// Second-moment summary `Σ zᵢzᵢᵀ` of normal scores; the copula likelihood
/// depends on the data only through it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreMoments {
    pub n: usize,
    pub szz: Matrix3<f64>,
}

impl ScoreMoments {
    pub fn from_scores(scores: &[Vector3<f64>]) -> Self {
        let szz = scores.iter().fold(Matrix3::zeros(), |acc, z| acc + z * z.transpose());
        Self { n: scores.len(), szz }
    }
}

/// The full joint model: three conditional marginals plus the DAG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsemModel {
    pub marginal_s: MarginalModel,
    pub marginal_m: MarginalModel,
    pub marginal_y: MarginalModel,
    pub dag: DagParams,
}

impl GsemModel {
    pub fn new(marginal_s: MarginalModel, marginal_m: MarginalModel, marginal_y: MarginalModel, dag: DagParams) -> Result<Self> {
        let p = marginal_s.n_coef();
        if marginal_m.n_coef() != p || marginal_y.n_coef() != p {
            return Err(QmedError::InvalidArgument("marginals must share the covariate dimension".into()));
        }
        implied_correlation(&dag)?;
        Ok(Self { marginal_s, marginal_m, marginal_y, dag })
    }

    pub fn marginal(&self, role: Role) -> &MarginalModel {
        match role {
            Role::S => &self.marginal_s,
            Role::M => &self.marginal_m,
            Role::Y => &self.marginal_y,
        }
    }

    pub fn p(&self) -> usize {
        self.marginal_s.n_coef()
    }
}

/// Normal score `Φ⁻¹{F(v | x)}` without clamping; fails when the cdf is 0 or 1
/// to floating precision.
pub fn normal_score(model: &MarginalModel, value: f64, x: &[f64]) -> Result<f64> {
    let u = model.cdf(value, x)?;
    if u <= 0.0 || u >= 1.0 {
        return Err(QmedError::OutOfSupport { family: model.family.name(), value });
    }
    Ok(normal::quantile(u))
}

/// Normal score with the cdf clamped into `[1e-12, 1 - 1e-12]`; the flag
/// reports whether clamping happened.
pub fn clamped_normal_score(model: &MarginalModel, value: f64, x: &[f64]) -> Result<(f64, bool)> {
    // Use the upper tail for large values to avoid losing precision near 1.
    let lower = model.cdf(value, x)?;
    let z = if lower > 0.5 {
        let upper = model.sf(value, x)?;
        let (u, clamped) = normal::clamp_prob(upper);
        (-normal::quantile(u), clamped)
    } else {
        let (u, clamped) = normal::clamp_prob(lower);
        (normal::quantile(u), clamped)
    };
    Ok(z)
}

/// Clamped normal scores of every row plus the number of clamping events.
pub fn dataset_scores(model_s: &MarginalModel, model_m: &MarginalModel, model_y: &MarginalModel, data: &Dataset) -> Result<(Vec<Vector3<f64>>, usize)> {
    let mut clamps = 0;
    let mut out = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let (s, m, y, x) = data.row(i);
        let mut z = Vector3::zeros();
        for (k, (model, v, role)) in [(model_s, s, Role::S), (model_m, m, Role::M), (model_y, y, Role::Y)].into_iter().enumerate() {
            let (zk, c) = clamped_normal_score(model, v, x).map_err(|_| QmedError::RowOutOfSupport { row: i + 1, margin: role.name() })?;
            clamps += c as usize;
            z[k] = zk;
        }
        out.push(z);
    }
    Ok((out, clamps))
}

/// Full log-likelihood: copula term at the normal scores plus the three
/// marginal log densities, summed over rows.
pub fn joint_log_likelihood(model: &GsemModel, data: &Dataset) -> Result<f64> {
    let kernel = CopulaKernel::new(&implied_correlation(&model.dag)?)?;
    let mut total = 0.0;
    for i in 0..data.n() {
        let (s, m, y, x) = data.row(i);
        let mut z = Vector3::zeros();
        let mut marg = 0.0;
        for (k, (mm, v, role)) in [(&model.marginal_s, s, Role::S), (&model.marginal_m, m, Role::M), (&model.marginal_y, y, Role::Y)]
            .into_iter()
            .enumerate()
        {
            let err = || QmedError::RowOutOfSupport { row: i + 1, margin: role.name() };
            z[k] = clamped_normal_score(mm, v, x).map_err(|_| err())?.0;
            marg += mm.log_density(v, x).map_err(|_| err())?;
        }
        total += kernel.log_density(&z) + marg;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Independent trivariate normal log density via explicit cofactor inverse.
    fn mvn_log_density(z: &[f64; 3], r: &Matrix3<f64>) -> f64 {
        let a = r;
        let det = a[(0, 0)] * (a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)]) - a[(0, 1)] * (a[(1, 0)] * a[(2, 2)] - a[(1, 2)] * a[(2, 0)])
            + a[(0, 2)] * (a[(1, 0)] * a[(2, 1)] - a[(1, 1)] * a[(2, 0)]);
        let mut cof = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let r0: Vec<usize> = (0..3).filter(|&k| k != i).collect();
                let c0: Vec<usize> = (0..3).filter(|&k| k != j).collect();
                let minor = a[(r0[0], c0[0])] * a[(r0[1], c0[1])] - a[(r0[0], c0[1])] * a[(r0[1], c0[0])];
                cof[i][j] = if (i + j) % 2 == 0 { minor } else { -minor };
            }
        }
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                // inverse = adj / det, adj = cofᵀ
                q += z[i] * cof[j][i] / det * z[j];
            }
        }
        -1.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * q
    }

    #[test]
    fn adjacency_placement() {
        assert_eq!(adjacency(&DagParams::zero()), Matrix3::zeros());
        let t = adjacency(&DagParams::new(0.5, 0.3, -0.2));
        assert_eq!(t[(1, 0)], 0.5);
        assert_eq!(t[(2, 0)], -0.2);
        assert_eq!(t[(2, 1)], 0.3);
        assert_eq!(t.upper_triangle(), Matrix3::zeros());
        let t = adjacency(&DagParams::new(1.0, 1.0, 0.0));
        assert_eq!((t[(1, 0)], t[(2, 1)], t[(2, 0)]), (1.0, 1.0, 0.0));
    }

    #[test]
    fn implied_correlation_closed_form_values() {
        assert_eq!(implied_correlation(&DagParams::zero()).unwrap(), Matrix3::identity());
        let r = implied_correlation(&DagParams::new(1.0, 1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(r[(0, 1)], 0.70711, epsilon = 5e-6);
        assert_abs_diff_eq!(r[(0, 2)], 0.57735, epsilon = 5e-6);
        assert_abs_diff_eq!(r[(1, 2)], 0.81650, epsilon = 5e-6);
        let r = implied_correlation(&DagParams::new(0.5, 0.0, 0.5)).unwrap();
        assert_abs_diff_eq!(r[(0, 1)], 0.44721, epsilon = 5e-6);
        assert_abs_diff_eq!(r[(0, 2)], 0.44721, epsilon = 5e-6);
        assert_abs_diff_eq!(r[(1, 2)], 0.20000, epsilon = 5e-6);
    }

    /// Oracle: `(I - Θ)⁻¹ Σ (I - Θ)⁻ᵀ` rescaled to a correlation matrix.
    fn structural_correlation(dag: &DagParams) -> Matrix3<f64> {
        let inv = (Matrix3::identity() - adjacency(dag)).try_inverse().unwrap();
        let mut sigma = Matrix3::identity();
        sigma[(1, 2)] = dag.rho;
        sigma[(2, 1)] = dag.rho;
        let cov = inv * sigma * inv.transpose();
        Matrix3::from_fn(|i, j| cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt())
    }

    #[test]
    fn matches_structural_covariance_algebra() {
        for dag in [DagParams::new(1.0, 1.0, 0.0), DagParams::new(-0.7, 0.4, 1.3), DagParams::new(0.2, -2.0, 0.5).with_rho(0.6), DagParams::new(0.9, 0.3, -0.4).with_rho(-0.8)] {
            let a = implied_correlation(&dag).unwrap();
            let b = structural_correlation(&dag);
            assert!((a - b).abs().max() < 1e-12, "{dag:?}");
        }
    }

    #[test]
    fn sample_correlation_matches_implied() {
        let dag = DagParams::new(1.0, 1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut acc = Matrix3::zeros();
        for _ in 0..n {
            let e: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let ws = e[0];
            let wm = dag.alpha_s * ws + e[1];
            let wy = dag.gamma_s * ws + dag.beta_m * wm + e[2];
            let w = Vector3::new(ws, wm, wy);
            acc += w * w.transpose();
        }
        let corr = Matrix3::from_fn(|i, j| acc[(i, j)] / (acc[(i, i)] * acc[(j, j)]).sqrt());
        let r = implied_correlation(&dag).unwrap();
        assert!((corr - r).abs().max() < 3e-3);
    }

    #[test]
    fn copula_density_identity_is_zero() {
        let i = Matrix3::identity();
        assert_eq!(gaussian_copula_log_density(&Vector3::zeros(), &i).unwrap(), 0.0);
        assert_abs_diff_eq!(gaussian_copula_log_density(&Vector3::new(1.3, -0.2, 2.0), &i).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn copula_density_matches_mvn_oracle() {
        let r = implied_correlation(&DagParams::new(1.0, 1.0, 0.0)).unwrap();
        for z in [[1.0, 1.0, 1.0], [0.3, -1.2, 2.2], [-2.0, 0.1, 0.0]] {
            let c = gaussian_copula_log_density(&Vector3::from(z), &r).unwrap();
            let oracle = mvn_log_density(&z, &r) - z.iter().map(|&v| normal::ln_pdf(v)).sum::<f64>();
            assert!((c - oracle).abs() < 1e-10, "{c} vs {oracle}");
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let mut r = Matrix3::identity();
        r[(0, 1)] = 1.0;
        r[(1, 0)] = 1.0;
        assert!(matches!(gaussian_copula_log_density(&Vector3::zeros(), &r), Err(QmedError::SingularCorrelation)));
        assert!(implied_correlation(&DagParams::zero().with_rho(1.0)).is_err());
    }

    #[test]
    fn normal_scores() {
        let sn = MarginalModel::normal(vec![0.0], 1.0).unwrap();
        assert_eq!(normal_score(&sn, 0.0, &[1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(normal_score(&sn, 1.0, &[1.0]).unwrap(), 1.0, epsilon = 1e-12);
        let ex = MarginalModel::exponential(vec![0.0]).unwrap();
        assert_abs_diff_eq!(normal_score(&ex, 2.0f64.ln(), &[1.0]).unwrap(), 0.0, epsilon = 1e-12);
        assert!(normal_score(&sn, 40.0, &[1.0]).is_err());
        let (z, clamped) = clamped_normal_score(&sn, 40.0, &[1.0]).unwrap();
        assert!(clamped && z.is_finite() && z > 7.0);
    }

    fn std_normal_model(dag: DagParams) -> GsemModel {
        let m = MarginalModel::normal(vec![0.0], 1.0).unwrap();
        GsemModel::new(m.clone(), m.clone(), m, dag).unwrap()
    }

    #[test]
    fn joint_likelihood_properties() {
        let rows = [(0.2, -0.3, 1.1), (1.0, 1.0, 1.0), (-0.5, 0.4, -1.7)];
        let data = Dataset::new(rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect(), rows.iter().map(|r| r.2).collect(), vec![vec![1.0]; 3]).unwrap();

        let indep = std_normal_model(DagParams::zero());
        let marg: f64 = rows.iter().map(|r| normal::ln_pdf(r.0) + normal::ln_pdf(r.1) + normal::ln_pdf(r.2)).sum();
        assert_abs_diff_eq!(joint_log_likelihood(&indep, &data).unwrap(), marg, epsilon = 1e-12);

        // With standard-normal marginals the joint density is the trivariate normal one.
        let dag = DagParams::new(1.0, 1.0, 0.0);
        let model = std_normal_model(dag);
        let r = implied_correlation(&dag).unwrap();
        let oracle: f64 = rows.iter().map(|r0| mvn_log_density(&[r0.0, r0.1, r0.2], &r)).sum();
        assert_abs_diff_eq!(joint_log_likelihood(&model, &data).unwrap(), oracle, epsilon = 1e-10);

        let doubled = data.select(&[0, 1, 2, 0, 1, 2]);
        assert_abs_diff_eq!(joint_log_likelihood(&model, &doubled).unwrap(), 2.0 * oracle, epsilon = 1e-10);
    }

    #[test]
    fn out_of_support_row_is_named() {
        let ex = MarginalModel::exponential(vec![0.0]).unwrap();
        let sn = MarginalModel::normal(vec![0.0], 1.0).unwrap();
        let model = GsemModel::new(sn.clone(), sn, ex, DagParams::zero()).unwrap();
        let data = Dataset::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, -2.0], vec![vec![1.0]; 2]).unwrap();
        match joint_log_likelihood(&model, &data) {
            Err(QmedError::RowOutOfSupport { row, margin }) => assert_eq!((row, margin), (2, "Y")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn moments_likelihood_matches_rowwise() {
        let r = implied_correlation(&DagParams::new(0.4, -0.6, 0.9)).unwrap();
        let k = CopulaKernel::new(&r).unwrap();
        let zs = vec![Vector3::new(0.1, 0.5, -1.0), Vector3::new(2.0, -0.3, 0.4), Vector3::new(-1.1, -0.9, 0.0)];
        let direct: f64 = zs.iter().map(|z| k.log_density(z)).sum();
        assert_abs_diff_eq!(k.log_likelihood(&ScoreMoments::from_scores(&zs)), direct, epsilon = 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn implied_correlation_is_pd_and_sm_entry_invariant(a in -5.0f64..5.0, b in -5.0f64..5.0, g in -5.0f64..5.0, rho in -0.99f64..0.99, b2 in -5.0f64..5.0, g2 in -5.0f64..5.0) {
            let r = implied_correlation(&DagParams::new(a, b, g).with_rho(rho)).unwrap();
            proptest::prop_assert!(r.cholesky().is_some());
            proptest::prop_assert!((r - r.transpose()).abs().max() == 0.0);
            let r2 = implied_correlation(&DagParams::new(a, b2, g2)).unwrap();
            proptest::prop_assert_eq!(r[(0, 1)], r2[(0, 1)]);
        }

        #[test]
        fn copula_plus_margins_is_mvn(a in -2.0f64..2.0, b in -2.0f64..2.0, g in -2.0f64..2.0, z0 in -3.0f64..3.0, z1 in -3.0f64..3.0, z2 in -3.0f64..3.0) {
            let r = implied_correlation(&DagParams::new(a, b, g)).unwrap();
            let z = [z0, z1, z2];
            let lhs = gaussian_copula_log_density(&Vector3::from(z), &r).unwrap() + z.iter().map(|&v| normal::ln_pdf(v)).sum::<f64>();
            proptest::prop_assert!((lhs - mvn_log_density(&z, &r)).abs() < 1e-10);
        }
    }
}
