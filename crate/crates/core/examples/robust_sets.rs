//! Worst-case expectations over interval and likelihood uncertainty sets.

use robust_dc::uncertainty::{
    worst_case_expectation_interval, worst_case_expectation_kl, IntervalSet, LikelihoodSet, KL_TOL,
};

fn main() -> robust_dc::Result<()> {
    let nominal = vec![0.6, 0.3, 0.1];
    let values = [1.0, 4.0, 10.0];
    let mean: f64 = nominal.iter().zip(&values).map(|(p, v)| p * v).sum();
    println!("nominal expectation {mean:.4}");
    for width in [0.0, 0.05, 0.1, 0.2] {
        let set = IntervalSet::around(nominal.clone(), width)?;
        let (worst, row) = worst_case_expectation_interval(&values, &set)?;
        println!("interval half-width {width:.2}: {worst:.4} at {row:.3?}");
    }
    for radius in [0.0, 0.01, 0.05, 0.2] {
        let worst = worst_case_expectation_kl(&values, &LikelihoodSet::new(nominal.clone(), radius)?, KL_TOL)?;
        println!("divergence radius {radius:.2}: {worst:.4}");
    }
    Ok(())
}
