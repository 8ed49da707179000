//! Cauchy combination of dependent p-values and Benjamini-Hochberg selection.

use qmed::diagnostics::{bh_fdr, cauchy_combination};

fn main() -> qmed::Result<()> {
    let p = [0.001, 0.004, 0.03, 0.2, 0.45, 0.8];
    println!("combined p-value {:.5}", cauchy_combination(&p)?);
    for q in [0.05, 0.1, 0.2] {
        println!("selected at q = {q}: {:?}", bh_fdr(&p, q)?);
    }
    Ok(())
}
