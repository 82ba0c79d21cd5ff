//! Discounted infinite-horizon solve with time-invariant prices; prints the
//! convergence trace and the stationary thresholds.

use std::sync::Arc;

use robust_dc::model::Orthant;
use robust_dc::scenario::{random_instance, InstanceSpec};
use robust_dc::solver::{infinite_horizon_solve, FullCosts, SharedCosts};

fn main() -> robust_dc::Result<()> {
    let spec = InstanceSpec {
        max_horizon: 1,
        ..InstanceSpec::default()
    };
    let inst = random_instance(21, &spec);
    let costs: SharedCosts = Arc::new(FullCosts::new(&inst.config, inst.model.support(), 1));
    let sol = infinite_horizon_solve(&inst.model, costs, 0.9, 1e-8)?;
    println!("converged after {} backups", sol.iterations);
    for (i, c) in sol.changes.iter().enumerate().step_by(20) {
        println!("  backup {i}: change {c:e}");
    }
    for th in 0..inst.model.num_modes() {
        for (g, blocks) in sol.policy.groups().iter().enumerate() {
            for (id, k) in sol.policy.thresholds(0, th, g).iter().enumerate() {
                let signs = Orthant::from_id(id, blocks.len());
                println!("mode {th} group {g} orthant {:?}: target {:?}", signs.signs(), k.tau);
            }
        }
    }
    Ok(())
}
