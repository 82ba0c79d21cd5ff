//! Compare the threshold solver against brute-force dynamic programming on a
//! reduced copy of the reference data center.

use robust_dc::check::{run_checks, CheckOptions};
use robust_dc::scenario::{reference_config, reference_traffic_model};

fn main() -> robust_dc::Result<()> {
    let report = run_checks(&reference_config(), &reference_traffic_model().widened(0.05), &CheckOptions::default())?;
    println!("reduced fleet: {:?}", report.reduced_servers);
    println!("largest value gap to brute force: {:e}", report.oracle_max_diff);
    println!("states where the rule is not optimal: {}", report.rule_mismatches);
    println!("robust values below nominal: {}", report.dominance_violations);
    println!("checks passed: {}", report.passed());
    Ok(())
}
