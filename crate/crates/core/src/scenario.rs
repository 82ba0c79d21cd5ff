//! Ready-made instances: the four-block reference fleet with its hidden-mode
//! traffic generator, and small random instances for cross-checking solvers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Block, DataCenterConfig, EnergyShape, JobClass, PriceSchedule};
use crate::modes::ModeModel;
use crate::uncertainty::IntervalSet;

/// Servers per block in the reference fleet.
pub const REFERENCE_SERVERS: [u32; 4] = [30, 50, 6, 3];
/// Jobs per slot one server processes, per block.
pub const REFERENCE_RATES: [f64; 4] = [610_000.0, 6_100.0, 610_000.0, 6_100.0];
pub const REFERENCE_CLASSES: [&str; 4] = ["en-html", "en-image", "es-html", "es-image"];
/// Mean load of each mode as a fraction of full capacity.
pub const MODE_LOAD: [f64; 3] = [0.3, 0.5, 0.7];

/// Four blocks, each serving its own class, with flat prices
/// (energy 10, switching 3 both ways) and unit QoS weights.
pub fn reference_config() -> DataCenterConfig {
    scaled_reference_config(REFERENCE_SERVERS)
}

/// The reference fleet with other server counts.
pub fn scaled_reference_config(servers: [u32; 4]) -> DataCenterConfig {
    let blocks = (0..4)
        .map(|b| Block {
            servers: servers[b],
            server_type: b,
            rate: REFERENCE_RATES[b],
            serves: (0..4).map(|j| j == b).collect(),
            energy_shape: EnergyShape::Linear,
        })
        .collect();
    let classes = REFERENCE_CLASSES
        .iter()
        .map(|n| JobClass {
            name: n.to_string(),
            qos_weight: 1.0,
        })
        .collect();
    DataCenterConfig::new(blocks, classes, PriceSchedule::constant(4, 10.0, 3.0, 3.0))
        .expect("reference fleet is valid")
}

/// Proportional scaling of the reference server counts to about `total`
/// servers (at least one per block).
pub fn scaled_servers(total: u32) -> [u32; 4] {
    let base: u32 = REFERENCE_SERVERS.iter().sum();
    REFERENCE_SERVERS.map(|m| ((m as f64 * total as f64 / base as f64).round() as u32).max(1))
}

/// Hidden-mode traffic for the reference fleet: three modes (low, normal,
/// peak) at 30%, 50% and 70% of each block's full capacity, each emitting
/// one of seven jointly scaled rate vectors between 90% and 110% of its mean.
pub fn reference_traffic_model() -> ModeModel {
    let caps: Vec<f64> = (0..4)
        .map(|b| REFERENCE_SERVERS[b] as f64 * REFERENCE_RATES[b])
        .collect();
    let factors = [0.9, 0.95, 0.98, 1.0, 1.02, 1.05, 1.1];
    let mut support = Vec::new();
    let mut emission = Vec::new();
    for (th, load) in MODE_LOAD.iter().enumerate() {
        let mut row = vec![0.0; MODE_LOAD.len() * factors.len()];
        for (i, f) in factors.iter().enumerate() {
            support.push(caps.iter().map(|c| (c * load * f).round()).collect());
            row[th * factors.len() + i] = 1.0 / factors.len() as f64;
        }
        emission.push(row);
    }
    let chain = [
        [0.85, 0.12, 0.03],
        [0.10, 0.80, 0.10],
        [0.04, 0.16, 0.80],
    ]
    .iter()
    .map(|r| IntervalSet::singleton(r.to_vec()).expect("valid row"))
    .collect();
    ModeModel::stationary(support, emission, chain).expect("reference traffic model is valid")
}

/// Bounds for [`random_instance`].
#[derive(Debug, Clone, Copy)]
pub struct InstanceSpec {
    pub max_blocks: usize,
    pub max_servers: u32,
    pub max_lambda: usize,
    pub max_modes: usize,
    pub max_classes: usize,
    pub max_horizon: usize,
    /// Interval half-widths are drawn up to this value (0 gives nominal sets).
    pub max_width: f64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec {
            max_blocks: 2,
            max_servers: 3,
            max_lambda: 3,
            max_modes: 2,
            max_classes: 2,
            max_horizon: 4,
            max_width: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub config: DataCenterConfig,
    pub model: ModeModel,
    pub horizon: usize,
}

fn random_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// A random instance within `spec`. Every support point can be served with
/// all servers on; time-varying prices cover the whole horizon.
pub fn random_instance(seed: u64, spec: &InstanceSpec) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.gen_range(1..=spec.max_blocks);
    let nj = rng.gen_range(1..=spec.max_classes);
    let horizon = rng.gen_range(1..=spec.max_horizon);
    let nl = rng.gen_range(1..=spec.max_lambda);
    let nm = rng.gen_range(1..=spec.max_modes);

    let mut serves: Vec<Vec<bool>> = (0..nb).map(|_| (0..nj).map(|_| rng.gen_bool(0.6)).collect()).collect();
    for j in 0..nj {
        if !serves.iter().any(|r| r[j]) {
            let b = rng.gen_range(0..nb);
            serves[b][j] = true;
        }
    }
    let blocks: Vec<Block> = (0..nb)
        .map(|b| Block {
            servers: rng.gen_range(1..=spec.max_servers),
            server_type: b,
            rate: rng.gen_range(0.5..2.0),
            serves: serves[b].clone(),
            energy_shape: EnergyShape::Linear,
        })
        .collect();
    let classes: Vec<JobClass> = (0..nj)
        .map(|j| JobClass {
            name: format!("class{j}"),
            qos_weight: rng.gen_range(0.5..2.0),
        })
        .collect();
    let table = |rng: &mut ChaCha8Rng, hi: f64| -> Vec<Vec<f64>> {
        (0..horizon).map(|_| (0..nb).map(|_| rng.gen_range(0.0..hi)).collect()).collect()
    };
    let prices = PriceSchedule::new(table(&mut rng, 2.0), table(&mut rng, 3.0), table(&mut rng, 3.0))
        .expect("random prices are valid");
    let config = DataCenterConfig::new(blocks, classes, prices).expect("random config is valid");

    // per-class capacity share under a proportional split keeps every point servable
    let total_cap: f64 = config.blocks.iter().map(|b| b.rate * b.servers as f64).sum();
    let support: Vec<Vec<f64>> = (0..nl)
        .map(|l| {
            if l == 0 && rng.gen_bool(0.3) {
                return vec![0.0; nj];
            }
            (0..nj)
                .map(|j| {
                    let cap: f64 = config
                        .blocks
                        .iter()
                        .filter(|b| b.serves[j])
                        .map(|b| b.rate * b.servers as f64)
                        .sum::<f64>()
                        .min(total_cap);
                    rng.gen_range(0.0..0.9) * cap / nj as f64
                })
                .collect()
        })
        .collect();
    let emission: Vec<Vec<f64>> = (0..nm).map(|_| random_row(&mut rng, nl)).collect();
    let chain: Vec<IntervalSet> = (0..nm)
        .map(|_| {
            let nominal = random_row(&mut rng, nm);
            let w = rng.gen_range(0.0..=spec.max_width);
            IntervalSet::around(nominal, w).expect("valid interval set")
        })
        .collect();
    Instance {
        config,
        model: ModeModel::stationary(support, emission, chain).expect("random model is valid"),
        horizon,
    }
}
