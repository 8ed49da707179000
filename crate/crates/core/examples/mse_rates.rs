//! Mean squared error of the plug-in effects at n = 200 and 800. Quadrupling
//! n divides the error by about four, except for the indirect effect when
//! both paths vanish, where it falls much faster.

use qmed::sim::{run_mse_study, SimScenario};

fn main() -> qmed::Result<()> {
    let scenario = SimScenario { replications: 300, ..SimScenario::default() };
    let report = run_mse_study(&scenario, &[200, 800], &[(0.0, 0.0), (0.5, 0.5)])?;

    println!("{:>5} {:>5} {:>5} {:>11} {:>11} {:>8} {:>8}", "alpha", "beta", "n", "mse qNIE", "mse qNDE", "ratio IE", "ratio DE");
    for r in &report.mse {
        println!(
            "{:>5} {:>5} {:>5} {:>11.3e} {:>11.3e} {:>8.2} {:>8.2}",
            r.alpha_s, r.beta_m, r.n, r.mse_qnie, r.mse_qnde, r.ratio_qnie, r.ratio_qnde
        );
    }
    Ok(())
}
