//! Closed-form conditional quantile natural direct, indirect and total effects.

use serde::{Deserialize, Serialize};

use crate::error::{QmedError, Result};
use crate::gsem::{normal_score, DagParams, GsemModel};
use crate::normal;

/// A quantile level, an exposure contrast `s -> s_prime` and a confounder
/// profile `x` (intercept first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandQuery {
    pub tau: f64,
    pub s: f64,
    pub s_prime: f64,
    pub x: Vec<f64>,
}

impl EstimandQuery {
    pub fn new(tau: f64, s: f64, s_prime: f64, x: Vec<f64>) -> Result<Self> {
        let q = Self { tau, s, s_prime, x };
        q.check_tau()?;
        Ok(q)
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Self { tau, ..self.clone() }
    }

    fn check_tau(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(QmedError::ProbabilityOutOfRange(self.tau));
        }
        Ok(())
    }
}

/// Standardized outcome scores of the three counterfactual outcome
/// distributions; the first index is the exposure acting directly, the second
/// the exposure acting through the mediator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaTerms {
    pub sprime_s: f64,
    pub s_s: f64,
    pub sprime_sprime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimandValue {
    pub tau: f64,
    pub qnde: f64,
    pub qnie: f64,
    /// Always `qnde + qnie`.
    pub qte: f64,
    pub delta_terms: DeltaTerms,
}

/// Score of the `tau`-quantile of the outcome when the direct path sees
/// exposure score `z_direct` and the mediator path sees `z_mediated`.
///
/// With `rho != 0` the mediator and outcome errors are correlated and the
/// residual spread becomes `sqrt(1 + β² + 2βρ)`.
pub fn delta_term(dag: &DagParams, tau: f64, z_direct: f64, z_mediated: f64) -> f64 {
    let b = dag.beta_m;
    let spread = (1.0 + b * b + 2.0 * b * dag.rho).sqrt();
    (dag.gamma_s * z_direct + dag.alpha_s * b * z_mediated + normal::quantile(tau) * spread) / dag.delta_y()
}

/// All three Δ terms for a query given the exposure scores.
pub fn delta_terms(dag: &DagParams, tau: f64, z_s: f64, z_sprime: f64) -> DeltaTerms {
    DeltaTerms {
        sprime_s: delta_term(dag, tau, z_sprime, z_s),
        s_s: delta_term(dag, tau, z_s, z_s),
        sprime_sprime: delta_term(dag, tau, z_sprime, z_sprime),
    }
}

/// Normal scores of `s` and `s_prime` under the exposure marginal.
pub fn exposure_scores(model: &GsemModel, q: &EstimandQuery) -> Result<(f64, f64)> {
    if q.x.len() != model.p() {
        return Err(QmedError::InvalidArgument(format!("x has length {}, model expects {}", q.x.len(), model.p())));
    }
    Ok((normal_score(&model.marginal_s, q.s, &q.x)?, normal_score(&model.marginal_s, q.s_prime, &q.x)?))
}

/// Evaluates all three effects from one set of Δ terms.
pub fn evaluate(model: &GsemModel, q: &EstimandQuery) -> Result<EstimandValue> {
    q.check_tau()?;
    let (z_s, z_sprime) = exposure_scores(model, q)?;
    evaluate_scores(model, q.tau, z_s, z_sprime, &q.x)
}

/// As [`evaluate`] with the exposure scores already computed.
pub fn evaluate_scores(model: &GsemModel, tau: f64, z_s: f64, z_sprime: f64, x: &[f64]) -> Result<EstimandValue> {
    let d = delta_terms(&model.dag, tau, z_s, z_sprime);
    let y = &model.marginal_y;
    let q_sprime_s = y.quantile_of_score(d.sprime_s, x)?;
    let q_s_s = y.quantile_of_score(d.s_s, x)?;
    let q_sprime_sprime = y.quantile_of_score(d.sprime_sprime, x)?;
    let qnde = q_sprime_s - q_s_s;
    let qnie = q_sprime_sprime - q_sprime_s;
    Ok(EstimandValue { tau, qnde, qnie, qte: qnde + qnie, delta_terms: d })
}

pub fn qnde(model: &GsemModel, q: &EstimandQuery) -> Result<f64> {
    Ok(evaluate(model, q)?.qnde)
}

pub fn qnie(model: &GsemModel, q: &EstimandQuery) -> Result<f64> {
    Ok(evaluate(model, q)?.qnie)
}

pub fn qte(model: &GsemModel, q: &EstimandQuery) -> Result<f64> {
    Ok(evaluate(model, q)?.qte)
}

/// Effects over a grid of quantile levels; the `tau` of `q` is ignored.
pub fn estimand_curve(model: &GsemModel, q: &EstimandQuery, taus: &[f64]) -> Result<Vec<EstimandValue>> {
    if let Some(&t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(QmedError::ProbabilityOutOfRange(t));
    }
    let (z_s, z_sprime) = exposure_scores(model, q)?;
    taus.iter().map(|&t| evaluate_scores(model, t, z_s, z_sprime, &q.x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::MarginalModel;
    use proptest::prelude::*;

    fn example2() -> GsemModel {
        GsemModel::new(
            MarginalModel::normal(vec![0.0], 1.0).unwrap(),
            MarginalModel::normal(vec![0.0], 1.0).unwrap(),
            MarginalModel::exponential(vec![0.0]).unwrap(),
            DagParams::new(1.0, 1.0, 0.0),
        )
        .unwrap()
    }

    fn example1() -> GsemModel {
        GsemModel::new(
            MarginalModel::normal(vec![0.0], 1.0).unwrap(),
            MarginalModel::normal(vec![0.0], 1.0).unwrap(),
            MarginalModel::normal(vec![0.0], 1.0).unwrap(),
            DagParams::new(0.5, 0.5, 0.5),
        )
        .unwrap()
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_term(&DagParams::zero(), 0.5, 1.3, -0.2), 0.0);
        let d = DagParams::new(1.0, 1.0, 0.0);
        assert!((delta_term(&d, 0.5, 1.0, 1.0) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(delta_term(&d, 0.5, 1.0, 0.0), 0.0);
    }

    #[test]
    fn example2_indirect_effect() {
        let v = evaluate(&example2(), &EstimandQuery::new(0.5, 0.0, 1.0, vec![1.0]).unwrap()).unwrap();
        let expected = -(1.0 - normal::cdf(1.0 / 3f64.sqrt())).ln() + 0.5f64.ln();
        assert!((v.qnie - expected).abs() < 1e-12);
        assert!((v.qnie - 0.573228).abs() < 1e-6);
        assert_eq!(v.qnde, 0.0);
    }

    #[test]
    fn example1_values_do_not_depend_on_tau() {
        let q = EstimandQuery::new(0.1, 0.0, 1.0, vec![1.0]).unwrap();
        let curve = estimand_curve(&example1(), &q, &[0.1, 0.5, 0.9]).unwrap();
        let dy = 1.8125f64.sqrt();
        for v in &curve {
            assert!((v.qnde - 0.5 / dy).abs() < 1e-8, "{v:?}");
            assert!((v.qnie - 0.25 / dy).abs() < 1e-8);
            assert!((v.qte - 0.75 / dy).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_queries() {
        let m = example2();
        assert!(EstimandQuery::new(1.0, 0.0, 1.0, vec![1.0]).is_err());
        assert!(evaluate(&m, &EstimandQuery { tau: 0.5, s: 0.0, s_prime: 1.0, x: vec![1.0, 2.0] }).is_err());
        assert!(evaluate(&m, &EstimandQuery { tau: 0.5, s: 0.0, s_prime: 1e3, x: vec![1.0] }).is_err());
    }

    fn model_with(dag: DagParams) -> GsemModel {
        GsemModel::new(
            MarginalModel::normal(vec![0.2, 0.5], 0.3).unwrap(),
            MarginalModel::normal(vec![0.1, -0.4], 1.5).unwrap(),
            MarginalModel::gamma(vec![-0.2, 0.3], 0.7).unwrap(),
            dag,
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn total_is_sum(a in -2.0..2.0f64, b in -2.0..2.0f64, g in -2.0..2.0f64, tau in 0.02..0.98f64, s in -1.0..1.0f64, sp in -1.0..1.0f64) {
            let q = EstimandQuery::new(tau, s, sp, vec![1.0, 0.3]).unwrap();
            let v = evaluate(&model_with(DagParams::new(a, b, g)), &q).unwrap();
            prop_assert_eq!(v.qte, v.qnde + v.qnie);
        }

        #[test]
        fn direct_effect_vanishes_iff_no_direct_path(a in -2.0..2.0f64, b in -2.0..2.0f64, g in 0.05..2.0f64, tau in 0.05..0.95f64) {
            let q = EstimandQuery::new(tau, -0.5, 0.8, vec![1.0, -0.2]).unwrap();
            prop_assert_eq!(qnde(&model_with(DagParams::new(a, b, 0.0)), &q).unwrap(), 0.0);
            prop_assert!(qnde(&model_with(DagParams::new(a, b, g)), &q).unwrap().abs() > 1e-9);
            prop_assert!(qnde(&model_with(DagParams::new(a, b, -g)), &q).unwrap().abs() > 1e-9);
        }

        #[test]
        fn indirect_effect_vanishes_iff_no_mediated_path(a in 0.05..2.0f64, b in 0.05..2.0f64, g in -2.0..2.0f64, tau in 0.05..0.95f64) {
            let q = EstimandQuery::new(tau, -0.5, 0.8, vec![1.0, -0.2]).unwrap();
            prop_assert_eq!(qnie(&model_with(DagParams::new(0.0, b, g)), &q).unwrap(), 0.0);
            prop_assert_eq!(qnie(&model_with(DagParams::new(a, 0.0, g)), &q).unwrap(), 0.0);
            prop_assert!(qnie(&model_with(DagParams::new(a, b, g)), &q).unwrap().abs() > 1e-9);
            prop_assert!(qnie(&model_with(DagParams::new(-a, b, g)), &q).unwrap().abs() > 1e-9);
        }

        #[test]
        fn same_exposure_gives_no_effect(a in -2.0..2.0f64, b in -2.0..2.0f64, g in -2.0..2.0f64, tau in 0.05..0.95f64, s in -1.0..1.0f64) {
            let v = evaluate(&model_with(DagParams::new(a, b, g)), &EstimandQuery::new(tau, s, s, vec![1.0, 0.1]).unwrap()).unwrap();
            prop_assert_eq!(v.qte, 0.0);
        }

        #[test]
        fn total_effect_sign_follows_total_path(a in -2.0..2.0f64, b in -2.0..2.0f64, g in -2.0..2.0f64, tau in 0.05..0.95f64, s in -1.0..1.0f64, sp in -1.0..1.0f64) {
            let dag = DagParams::new(a, b, g);
            prop_assume!(dag.eta().abs() > 0.05 && (s - sp).abs() > 0.05);
            let v = evaluate(&model_with(dag), &EstimandQuery::new(tau, s, sp, vec![1.0, 0.1]).unwrap()).unwrap();
            prop_assert_eq!(v.qte.signum(), (dag.eta() * (sp - s)).signum());
        }
    }
}
