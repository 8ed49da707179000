//! A small size study under the three fixed null configurations. The
//! full-scale study uses 500 replications; pass a count as the first
//! argument to change the default of 40.

use qmed::mediation::{AbConfig, Method};
use qmed::sim::{run_null_study, NullCase, SimScenario};

fn main() -> qmed::Result<()> {
    let replications = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(40);
    let scenario = SimScenario { replications, bootstrap: 200, ..SimScenario::default() };
    let methods = [Method::QmaAb, Method::QmaB, Method::JsYm];
    let report = run_null_study(&scenario, &NullCase::ALL, &methods, &AbConfig::default())?;

    for cell in &report.cells {
        println!(
            "{:<9} {:<7} rejection {:.3} (SE {:.3}), p-value KS {:.3}",
            cell.label,
            cell.method.label(),
            cell.rejection_rate,
            cell.rejection_se,
            cell.uniformity_ks()
        );
    }
    println!("{:.1}s", report.runtime_secs);
    Ok(())
}
