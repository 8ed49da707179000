//! Cross-validated goodness-of-fit test of the Gaussian copula on data drawn
//! from the model itself.

use qmed::diagnostics::gof_test;
use qmed::rng::data_stream;
use qmed::sim::{sample_gsem, SimScenario};

fn main() -> qmed::Result<()> {
    let scenario = SimScenario::default().with_dag(0.3, 0.3);
    let data = sample_gsem(&scenario, &mut data_stream(11))?;
    let g = gof_test(&data, &scenario.families, 5, 200, 11)?;
    println!("statistic {:.4}, p-value {:.3} ({} replicates, {} failed)", g.statistic, g.p_value, g.b_effective, g.failed_replicates);
    Ok(())
}
