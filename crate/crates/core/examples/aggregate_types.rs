//! Solve over per-type server totals instead of per-block counts and map the
//! totals back to the cheapest block allocation.

use std::sync::Arc;

use robust_dc::aggregate::{aggregate_by_type, build_aggregated_model, optimal_disaggregation, AggregationCase};
use robust_dc::model::PriceSchedule;
use robust_dc::scenario::{random_instance, InstanceSpec};
use robust_dc::solver::{backward_induction, FullCosts, SharedCosts};

fn main() -> robust_dc::Result<()> {
    let inst = random_instance(3, &InstanceSpec::default());
    let mut cfg = inst.config.clone();
    cfg.prices = PriceSchedule::constant(cfg.num_blocks(), 1.0, 2.0, 0.5);
    let reduced = build_aggregated_model(AggregationCase::ConstantPrices, &cfg, inst.model.support(), inst.horizon)?;
    let agg = reduced.aggregation().clone();
    println!("{} blocks grouped into {} types, totals {:?}", cfg.num_blocks(), agg.num_types(), agg.totals());
    let full: SharedCosts = Arc::new(FullCosts::new(&cfg, inst.model.support(), inst.horizon));
    let reduced: SharedCosts = Arc::new(reduced);
    let a = backward_induction(&inst.model, full, inst.horizon, 0.9)?;
    let b = backward_induction(&inst.model, reduced, inst.horizon, 0.9)?;
    println!("full grid {} states, aggregated grid {} states", a.values.grid().len(), b.values.grid().len());
    let x = cfg.caps();
    let y = aggregate_by_type(&x, &agg);
    println!("value at full capacity: full {:.4}, aggregated {:.4}", a.values.value(0, &x, 0, 0), b.values.value(0, &y, 0, 0));
    for y in agg.grid().iter() {
        println!("totals {y:?} -> blocks {:?}", optimal_disaggregation(0, &y, &agg, &cfg)?);
    }
    Ok(())
}
