//! Effects of a unit exposure change across quantile levels for a model with
//! standard normal exposure and mediator and a unit-rate exponential outcome.
//! The direct path is absent, so the direct effect is zero at every level
//! while the indirect effect grows with tau.

use qmed::estimands::{estimand_curve, EstimandQuery};
use qmed::{DagParams, GsemModel, MarginalModel};

fn main() -> qmed::Result<()> {
    let model = GsemModel::new(
        MarginalModel::normal(vec![0.0], 1.0)?,
        MarginalModel::normal(vec![0.0], 1.0)?,
        MarginalModel::exponential(vec![0.0])?,
        DagParams::new(1.0, 1.0, 0.0),
    )?;
    let query = EstimandQuery::new(0.5, 0.0, 1.0, vec![1.0])?;
    let taus: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();

    println!("{:>5} {:>9} {:>9} {:>9}", "tau", "qNDE", "qNIE", "qTE");
    for v in estimand_curve(&model, &query, &taus)? {
        println!("{:>5.2} {:>9.5} {:>9.5} {:>9.5}", v.tau, v.qnde, v.qnie, v.qte);
    }
    Ok(())
}
