//! Simulate the threshold policy against a one-step lookahead controller on
//! the reference data center.

use std::sync::Arc;

use robust_dc::modes::Robustness;
use robust_dc::mpc::MpcPolicy;
use robust_dc::qos::big_m;
use robust_dc::scenario::{reference_config, reference_traffic_model};
use robust_dc::sim::{compare_policies, default_start, Dynamics, Environment, HoldCapacity, ThresholdRule};
use robust_dc::solver::{backward_induction, FullCosts, SharedCosts};

fn main() -> robust_dc::Result<()> {
    let cfg = reference_config();
    let model = reference_traffic_model().with_robustness(Robustness::Off)?;
    let horizon = 24;
    let costs: SharedCosts = Arc::new(FullCosts::new(&cfg, model.support(), horizon));
    let sol = backward_induction(&model, costs.clone(), horizon, 0.95)?;
    let env = Environment {
        model: model.clone(),
        costs,
        dynamics: Dynamics::Nominal,
    };
    let mdp = ThresholdRule {
        label: "mdp".into(),
        policy: sol.policy,
    };
    let mpc = MpcPolicy::new(cfg.clone(), model.clone(), big_m(&cfg, model.support(), horizon));
    let hold = HoldCapacity { label: "always-on".into() };
    let cmp = compare_policies(&env, &[&mdp, &mpc, &hold], &default_start(&env), 500, horizon, 1)?;
    for s in &cmp.stats {
        println!("{:>10}: mean {:.1} std {:.1}", s.label, s.mean[horizon - 1], s.std[horizon - 1]);
    }
    let (d, se) = cmp.paired_difference(0, 1);
    println!("mdp - mpc = {d:.1} +- {se:.1}");
    Ok(())
}
