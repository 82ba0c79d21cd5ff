//! Solve the four-block reference data center for one day and print the
//! threshold policy for the busiest traffic mode.

use std::sync::Arc;

use robust_dc::model::Orthant;
use robust_dc::scenario::{reference_config, reference_traffic_model};
use robust_dc::solver::{backward_induction, FullCosts, SharedCosts};

fn main() -> robust_dc::Result<()> {
    let cfg = reference_config();
    let model = reference_traffic_model().widened(0.02);
    let horizon = 24;
    let costs: SharedCosts = Arc::new(FullCosts::new(&cfg, model.support(), horizon));
    let sol = backward_induction(&model, costs, horizon, 0.95)?;

    let busy = model.num_modes() - 1;
    for (g, blocks) in sol.policy.groups().iter().enumerate() {
        println!("group {g} (blocks {blocks:?})");
        for (id, k) in sol.policy.thresholds(0, busy, g).iter().enumerate() {
            println!("  orthant {:?} -> target {:?}", Orthant::from_id(id, blocks.len()).signs(), k.tau);
        }
    }
    let x = cfg.caps();
    println!("from full capacity the first action is {:?}", sol.policy.act(0, &x, busy));
    println!("value at full capacity, first point: {:.2}", sol.values.value(0, &x, 0, busy));
    Ok(())
}
