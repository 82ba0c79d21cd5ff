//! Search stationary thresholds by simulation and compare with value
//! iteration on a small stationary instance.

use std::sync::Arc;

use robust_dc::scenario::{random_instance, InstanceSpec};
use robust_dc::solver::{infinite_horizon_solve, monte_carlo_search, FullCosts, SharedCosts};

fn main() -> robust_dc::Result<()> {
    let spec = InstanceSpec {
        max_horizon: 1,
        max_classes: 1,
        max_lambda: 2,
        max_width: 0.1,
        ..InstanceSpec::default()
    };
    let inst = random_instance(11, &spec);
    let costs: SharedCosts = Arc::new(FullCosts::new(&inst.config, inst.model.support(), 1));
    let gamma = 0.8;
    let exact = infinite_horizon_solve(&inst.model, costs.clone(), gamma, 1e-9)?;
    let found = monte_carlo_search(&inst.model, costs, gamma, 2000, 1e-3, 5)?;
    println!("value iteration converged in {} sweeps", exact.iterations);
    println!("search ran {} sweeps, estimates {:.3?}", found.sweeps, found.history);
    println!(
        "searched policy: worst case {:.3} +- {:.3}, nominal {:.3} +- {:.3}",
        found.adversarial.mean, found.adversarial.std_err, found.nominal.mean, found.nominal.std_err
    );
    Ok(())
}
