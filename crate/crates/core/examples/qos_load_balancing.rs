//! Route two job classes over three server blocks and report the optimal
//! split and mean response cost.

use robust_dc::model::{Block, DataCenterConfig, EnergyShape, JobClass, PriceSchedule};
use robust_dc::qos::optimize_load_balancing;

fn main() -> robust_dc::Result<()> {
    let block = |servers, server_type, rate, serves: [bool; 2]| Block {
        servers,
        server_type,
        rate,
        serves: serves.to_vec(),
        energy_shape: EnergyShape::Linear,
    };
    let cfg = DataCenterConfig::new(
        vec![
            block(4, 0, 1.0, [true, true]),
            block(2, 1, 3.0, [true, false]),
            block(3, 2, 0.5, [false, true]),
        ],
        vec![
            JobClass {
                name: "web".into(),
                qos_weight: 2.0,
            },
            JobClass {
                name: "batch".into(),
                qos_weight: 0.5,
            },
        ],
        PriceSchedule::constant(3, 1.0, 1.0, 1.0),
    )?;
    let x = [3, 2, 3];
    for lambda in [[1.0, 0.5], [4.0, 1.0], [7.0, 2.0], [20.0, 2.0]] {
        let res = optimize_load_balancing(&x, &lambda, &cfg);
        if !res.feasible {
            println!("rates {lambda:?}: cannot be served by {x:?}");
            continue;
        }
        println!("rates {lambda:?}: cost {:.4}", res.cost);
        for b in 0..cfg.num_blocks() {
            println!("  block {b}: web {:.3} batch {:.3}", res.q_star.get(b, 0), res.q_star.get(b, 1));
        }
    }
    Ok(())
}
