//! Generate a year of hourly traffic, cluster it into modes and estimate a
//! mode model with confidence intervals on the chain.

use robust_dc::ingest::{cluster_modes, estimate_mode_model, gen_synthetic_trace};
use robust_dc::scenario::{reference_traffic_model, REFERENCE_CLASSES};

fn main() -> robust_dc::Result<()> {
    let truth = reference_traffic_model();
    let names: Vec<String> = REFERENCE_CLASSES.iter().map(|s| s.to_string()).collect();
    let (trace, _) = gen_synthetic_trace(&truth, &names, 8760, 7)?;
    let clusters = cluster_modes(&trace, 3, 7)?;
    println!("k-means inertia {:.1} after {} iterations", clusters.inertia, clusters.history.len());
    for (c, m) in clusters.centers.iter().zip(truth.mode_means()) {
        println!("center {c:.1?} (true mean {m:.1?})");
    }
    let est = estimate_mode_model(&trace, &clusters.assignments, 3, 3, 0.9)?;
    for th in 0..3 {
        println!(
            "mode {th}: estimated row {:.3?}, true row {:.3?}",
            est.nominal_row(0, th),
            truth.nominal_row(0, th)
        );
    }
    println!("{} arrival-rate points in the estimated support", est.num_lambda());
    Ok(())
}
