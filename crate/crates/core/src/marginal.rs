//! Exponential-dispersion GLM marginals: Normal (identity link), Exponential
//! and Gamma (log link).

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma as GammaDist, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};
use std::fmt;
use std::str::FromStr;

use crate::error::{QmedError, Result};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    Exponential,
    Gamma,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::Exponential => "exponential",
            Family::Gamma => "gamma",
        }
    }

    /// The only link each family is paired with.
    pub fn canonical_link(self) -> Link {
        match self {
            Family::Normal => Link::Identity,
            Family::Exponential | Family::Gamma => Link::Log,
        }
    }

    pub fn positive_support(self) -> bool {
        !matches!(self, Family::Normal)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = QmedError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(Family::Normal),
            "exponential" | "exp" => Ok(Family::Exponential),
            "gamma" => Ok(Family::Gamma),
            other => Err(QmedError::InvalidArgument(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Log,
}

/// One conditional marginal `V | X = x` of the generalized SEM.
///
/// Parameterizations:
/// * Normal + identity: mean `xᵀζ`, variance `phi`.
/// * Exponential + log: rate `exp(xᵀζ)`, mean `exp(-xᵀζ)`, `phi = 1`.
/// * Gamma + log: mean `exp(xᵀζ)`, shape `1/phi`, scale `phi·exp(xᵀζ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    pub family: Family,
    pub link: Link,
    pub zeta: Vec<f64>,
    pub phi: f64,
}

impl MarginalModel {
    pub fn new(family: Family, link: Link, zeta: Vec<f64>, phi: f64) -> Result<Self> {
        if link != family.canonical_link() {
            return Err(QmedError::InvalidArgument(format!(
                "family {family} supports only the {:?} link",
                family.canonical_link()
            )));
        }
        if zeta.is_empty() || zeta.iter().any(|z| !z.is_finite()) {
            return Err(QmedError::InvalidArgument("coefficients must be finite and non-empty".into()));
        }
        let phi = if family == Family::Exponential { 1.0 } else { phi };
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(QmedError::InvalidArgument(format!("dispersion must be positive, got {phi}")));
        }
        Ok(Self { family, link, zeta, phi })
    }

    pub fn normal(zeta: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(Family::Normal, Link::Identity, zeta, variance)
    }

    /// Exponential with `exp(xᵀζ)` as the rate.
    pub fn exponential(zeta: Vec<f64>) -> Result<Self> {
        Self::new(Family::Exponential, Link::Log, zeta, 1.0)
    }

    pub fn gamma(zeta: Vec<f64>, phi: f64) -> Result<Self> {
        Self::new(Family::Gamma, Link::Log, zeta, phi)
    }

    pub fn n_coef(&self) -> usize {
        self.zeta.len()
    }

    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.zeta.len() {
            return Err(QmedError::InvalidArgument(format!(
                "covariate vector has length {}, model expects {}",
                x.len(),
                self.zeta.len()
            )));
        }
        Ok(x.iter().zip(&self.zeta).map(|(a, b)| a * b).sum())
    }

    /// Conditional mean `E[V | x]`.
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        let eta = self.linear_predictor(x)?;
        Ok(match self.family {
            Family::Normal => eta,
            Family::Exponential => (-eta).exp(),
            Family::Gamma => eta.exp(),
        })
    }

    fn check_value(&self, value: f64) -> Result<()> {
        if !value.is_finite() || (self.family.positive_support() && value <= 0.0) {
            return Err(QmedError::OutOfSupport { family: self.family.name(), value });
        }
        Ok(())
    }

    pub fn cdf(&self, value: f64, x: &[f64]) -> Result<f64> {
        self.check_value(value)?;
        let eta = self.linear_predictor(x)?;
        Ok(self.cdf_at(value, eta))
    }

    /// Upper tail `1 - cdf`, computed without cancellation.
    pub fn sf(&self, value: f64, x: &[f64]) -> Result<f64> {
        self.check_value(value)?;
        let eta = self.linear_predictor(x)?;
        Ok(match self.family {
            Family::Normal => normal::sf((value - eta) / self.phi.sqrt()),
            Family::Exponential => (-eta.exp() * value).exp(),
            Family::Gamma => {
                let (shape, scale) = self.gamma_params(eta);
                gamma_ur(shape, value / scale)
            }
        })
    }

    pub(crate) fn cdf_at(&self, value: f64, eta: f64) -> f64 {
        match self.family {
            Family::Normal => normal::cdf((value - eta) / self.phi.sqrt()),
            Family::Exponential => -(-eta.exp() * value).exp_m1(),
            Family::Gamma => {
                let (shape, scale) = self.gamma_params(eta);
                gamma_lr(shape, value / scale)
            }
        }
    }

    pub fn quantile(&self, prob: f64, x: &[f64]) -> Result<f64> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(QmedError::ProbabilityOutOfRange(prob));
        }
        let eta = self.linear_predictor(x)?;
        Ok(self.quantile_at(prob, eta))
    }

    pub(crate) fn quantile_at(&self, prob: f64, eta: f64) -> f64 {
        match self.family {
            Family::Normal => eta + self.phi.sqrt() * normal::quantile(prob),
            Family::Exponential => -(-prob).ln_1p() / eta.exp(),
            Family::Gamma => {
                let (shape, scale) = self.gamma_params(eta);
                scale * gamma_unit_quantile(shape, prob)
            }
        }
    }

    /// `Q{Φ(z) | x}`, evaluated through the tail that keeps precision.
    pub fn quantile_of_score(&self, z: f64, x: &[f64]) -> Result<f64> {
        if !z.is_finite() {
            return Err(QmedError::InvalidArgument(format!("normal score must be finite, got {z}")));
        }
        let eta = self.linear_predictor(x)?;
        Ok(self.quantile_of_score_at(z, eta))
    }

    pub(crate) fn quantile_of_score_at(&self, z: f64, eta: f64) -> f64 {
        match self.family {
            Family::Normal => eta + self.phi.sqrt() * z,
            Family::Exponential => -normal::sf(z).ln() / eta.exp(),
            Family::Gamma => self.quantile_at(normal::cdf(z), eta),
        }
    }

    pub fn log_density(&self, value: f64, x: &[f64]) -> Result<f64> {
        self.check_value(value)?;
        let eta = self.linear_predictor(x)?;
        Ok(self.log_density_at(value, eta))
    }

    pub(crate) fn log_density_at(&self, value: f64, eta: f64) -> f64 {
        match self.family {
            Family::Normal => {
                let sd = self.phi.sqrt();
                normal::ln_pdf((value - eta) / sd) - sd.ln()
            }
            Family::Exponential => eta - eta.exp() * value,
            Family::Gamma => {
                let (shape, scale) = self.gamma_params(eta);
                (shape - 1.0) * value.ln() - value / scale - ln_gamma(shape) - shape * scale.ln()
            }
        }
    }

    pub fn density(&self, value: f64, x: &[f64]) -> Result<f64> {
        Ok(self.log_density(value, x)?.exp())
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        let eta = self.linear_predictor(x)?;
        Ok(match self.family {
            Family::Normal => {
                let z: f64 = StandardNormal.sample(rng);
                eta + self.phi.sqrt() * z
            }
            Family::Exponential => {
                let e: f64 = Exp1.sample(rng);
                e / eta.exp()
            }
            Family::Gamma => {
                let (shape, scale) = self.gamma_params(eta);
                GammaDist::new(shape, scale)
                    .map_err(|e| QmedError::InvalidArgument(e.to_string()))?
                    .sample(rng)
            }
        })
    }

    fn gamma_params(&self, eta: f64) -> (f64, f64) {
        let shape = 1.0 / self.phi;
        (shape, self.phi * eta.exp())
    }
}

/// Quantile of Gamma(shape, 1) by safeguarded Newton iteration on the
/// regularized incomplete gamma function, started from the Wilson–Hilferty
/// approximation.
fn gamma_unit_quantile(shape: f64, prob: f64) -> f64 {
    const TOL: f64 = 1e-10;
    let upper = prob > 0.5;
    let q = 1.0 - prob;
    // Increasing residual in x; the upper-tail form keeps precision near 1.
    let resid = |x: f64| {
        if upper {
            q - gamma_ur(shape, x)
        } else {
            gamma_lr(shape, x) - prob
        }
    };
    let ln_dens = |x: f64| (shape - 1.0) * x.ln() - x - ln_gamma(shape);

    let z = normal::quantile(prob);
    let c = 1.0 / (9.0 * shape);
    let wh = shape * (1.0 - c + z * c.sqrt()).powi(3);
    let mut x = if wh > 0.0 { wh } else { (prob * shape * (ln_gamma(shape)).exp()).powf(1.0 / shape).max(1e-300) };

    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    for _ in 0..200 {
        let r = resid(x);
        if r == 0.0 {
            return x;
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = r / ln_dens(x).exp();
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(1.0) };
        }
        if (next - x).abs() <= TOL * next.abs().max(1e-300) {
            return next;
        }
        if hi.is_finite() && (hi - lo) <= TOL * hi {
            return 0.5 * (lo + hi);
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn standard_normal_median() {
        let m = MarginalModel::normal(vec![0.0], 1.0).unwrap();
        assert_abs_diff_eq!(m.cdf(0.0, &[1.0]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn exponential_rate_parameterization() {
        let m = MarginalModel::exponential(vec![0.0]).unwrap();
        assert_relative_eq!(m.quantile(0.5, &[1.0]).unwrap(), std::f64::consts::LN_2, epsilon = 1e-14);
        // rate exp(1): mean exp(-1)
        let m = MarginalModel::exponential(vec![1.0]).unwrap();
        assert_relative_eq!(m.mean(&[1.0]).unwrap(), (-1.0f64).exp());
    }

    #[test]
    fn gamma_shape_two_scale_one() {
        // phi = 0.5 -> shape 2, scale 0.5 * exp(ln 2) = 1
        let m = MarginalModel::gamma(vec![2.0f64.ln()], 0.5).unwrap();
        let x = [1.0];
        assert_relative_eq!(m.cdf(1.0, &x).unwrap(), 1.0 - 2.0 * (-1.0f64).exp(), epsilon = 1e-12);
        for &y in &[0.2, 1.0, 3.7] {
            assert_relative_eq!(m.density(y, &x).unwrap(), y * (-y as f64).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = MarginalModel::exponential(vec![0.0]).unwrap();
        assert!(matches!(m.cdf(-1.0, &[1.0]), Err(QmedError::OutOfSupport { .. })));
        assert!(matches!(m.quantile(1.0, &[1.0]), Err(QmedError::ProbabilityOutOfRange(_))));
        assert!(m.cdf(1.0, &[1.0, 2.0]).is_err());
        assert!(MarginalModel::new(Family::Normal, Link::Log, vec![0.0], 1.0).is_err());
        assert!(MarginalModel::gamma(vec![0.0], 0.0).is_err());
    }

    fn grid_models() -> Vec<MarginalModel> {
        vec![
            MarginalModel::normal(vec![0.3, -0.5], 0.7).unwrap(),
            MarginalModel::exponential(vec![-0.2, 0.4]).unwrap(),
            MarginalModel::gamma(vec![0.5, 0.3], 0.4).unwrap(),
            MarginalModel::gamma(vec![0.1, -0.2], 3.0).unwrap(),
            MarginalModel::gamma(vec![1.0, 0.0], 0.02).unwrap(),
        ]
    }

    #[test]
    fn quantile_cdf_round_trip() {
        for m in grid_models() {
            for &x1 in &[-1.0, 0.0, 0.7] {
                let x = [1.0, x1];
                for i in 1..40 {
                    let p = i as f64 / 40.0;
                    let q = m.quantile(p, &x).unwrap();
                    let back = m.quantile(m.cdf(q, &x).unwrap(), &x).unwrap();
                    assert!(
                        (back - q).abs() <= 1e-8 * q.abs().max(1e-12),
                        "{:?} p={p} q={q} back={back}",
                        m.family
                    );
                }
            }
        }
    }

    #[test]
    fn density_integrates_to_one() {
        for m in grid_models() {
            let x = [1.0, 0.2];
            let lo = m.quantile(1e-9, &x).unwrap();
            let hi = m.quantile(1.0 - 1e-9, &x).unwrap();
            let steps = 200_000;
            // positive families integrate f(e^t) e^t over t to tame singular densities
            let (a, b) = if m.family.positive_support() { (lo.ln(), hi.ln()) } else { (lo, hi) };
            let h = (b - a) / steps as f64;
            let mut total = 0.0;
            for i in 0..=steps {
                let t = a + i as f64 * h;
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                let val = if m.family.positive_support() { m.density(t.exp(), &x).unwrap() * t.exp() } else { m.density(t, &x).unwrap() };
                assert!(val >= 0.0);
                total += w * val;
            }
            let mass = total * h;
            assert!((mass - (1.0 - 2e-9)).abs() < 1e-6, "{:?}: {mass}", m.family);
        }
    }

    #[test]
    fn sampling_matches_cdf() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for m in grid_models() {
            let x = [1.0, 0.4];
            let draws: Vec<f64> = (0..100_000).map(|_| m.sample(&x, &mut rng).unwrap()).collect();
            let d = crate::stats::ks_distance(&draws, |v| m.cdf(v, &x).unwrap());
            assert!(d < 0.01, "{:?}: KS {d}", m.family);
        }
    }
}
