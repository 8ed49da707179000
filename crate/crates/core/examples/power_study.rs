//! Power of the adaptive and the classical bootstrap on shared datasets,
//! with the paired difference of their rejection indicators.

use qmed::mediation::{AbConfig, Method};
use qmed::sim::{run_power_study, PowerGrid, SimScenario};

fn main() -> qmed::Result<()> {
    let scenario = SimScenario { replications: 60, bootstrap: 200, ..SimScenario::default() };
    let grid = PowerGrid::Equal(vec![0.1, 0.2]);
    let report = run_power_study(&scenario, &grid, &[Method::QmaAb, Method::QmaB], &AbConfig::default())?;

    for cell in &report.cells {
        println!("{:<26} {:<7} power {:.3}", cell.label, cell.method.label(), cell.rejection_rate);
    }
    for cell in report.cells.iter().filter(|c| c.method == Method::QmaAb) {
        if let Some((diff, se)) = report.paired_difference(&cell.label, Method::QmaAb, Method::QmaB) {
            println!("{}: AB - B = {diff:.3} (SE {se:.3})", cell.label);
        }
    }
    Ok(())
}
