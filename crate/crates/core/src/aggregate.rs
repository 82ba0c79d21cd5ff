//! Reduced models over server types.
//!
//! When block identity does not matter for switching, the state can be the
//! number of servers on per type. Given per-type counts `y`, the cheapest
//! block-level vector `x*(y)` fills each type's blocks in order of marginal
//! idle-energy cost.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::DataCenterConfig;
use crate::qos::{big_m, penalized_qos_cost};
use crate::solver::StageCosts;

/// Block membership of each server type.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeAggregation {
    totals: Vec<u32>,
    type_blocks: Vec<Vec<usize>>,
}

impl TypeAggregation {
    pub fn new(cfg: &DataCenterConfig) -> Self {
        let mut type_blocks = vec![Vec::new(); cfg.num_types()];
        for (b, blk) in cfg.blocks.iter().enumerate() {
            type_blocks[blk.server_type].push(b);
        }
        let totals = type_blocks
            .iter()
            .map(|bs: &Vec<usize>| bs.iter().map(|&b| cfg.blocks[b].servers).sum())
            .collect();
        TypeAggregation { totals, type_blocks }
    }

    /// Servers per type.
    pub fn totals(&self) -> &[u32] {
        &self.totals
    }

    pub fn type_blocks(&self) -> &[Vec<usize>] {
        &self.type_blocks
    }

    pub fn num_types(&self) -> usize {
        self.totals.len()
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.totals.clone())
    }
}

/// Per-type on-counts of a block-level vector.
pub fn aggregate_by_type(x: &[u32], agg: &TypeAggregation) -> Vec<u32> {
    agg.type_blocks
        .iter()
        .map(|bs| bs.iter().map(|&b| x[b]).sum())
        .collect()
}

/// Cheapest block-level vector with per-type counts `y` under the idle
/// energy prices of slot `t`: servers are added one at a time to the block
/// of their type with the smallest marginal cost (ties: lower block index).
pub fn optimal_disaggregation(t: usize, y: &[u32], agg: &TypeAggregation, cfg: &DataCenterConfig) -> Result<Vec<u32>> {
    if y.len() != agg.num_types() {
        return Err(Error::domain(format!("expected {} type counts, got {}", agg.num_types(), y.len())));
    }
    if let Some(i) = (0..y.len()).find(|&i| y[i] > agg.totals[i]) {
        return Err(Error::domain(format!(
            "type {i} has {} servers, {} requested",
            agg.totals[i], y[i]
        )));
    }
    let mut x = vec![0u32; cfg.num_blocks()];
    for (i, blocks) in agg.type_blocks.iter().enumerate() {
        for _ in 0..y[i] {
            let mut best: Option<(f64, usize)> = None;
            for &b in blocks {
                let blk = &cfg.blocks[b];
                if x[b] >= blk.servers {
                    continue;
                }
                let price = cfg.prices.energy(t, b);
                let marginal = price * (blk.energy_shape.eval(x[b] + 1) - blk.energy_shape.eval(x[b]));
                if best.is_none_or(|(m, _)| marginal < m) {
                    best = Some((marginal, b));
                }
            }
            let (_, b) = best.expect("type has spare servers");
            x[b] += 1;
        }
    }
    Ok(x)
}

/// Which simplifying assumption licenses the reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationCase {
    /// Switching prices equal across blocks and slots, idle prices constant
    /// over time.
    ConstantPrices,
    /// No switching costs at all.
    ZeroSwitchCost,
}

/// Stage costs over per-type counts `y`, evaluated at `x*(y)`.
#[derive(Debug, Clone)]
pub struct AggregatedCosts {
    agg: TypeAggregation,
    grid: Grid,
    num_lambda: usize,
    switch_on: f64,
    switch_off: f64,
    stationary: bool,
    /// `[price slot][y index]` -> state cost per support point
    cells: Vec<Vec<Vec<f64>>>,
}

/// Build the reduced model, checking the case's assumptions.
pub fn build_aggregated_model(
    case: AggregationCase,
    cfg: &DataCenterConfig,
    support: &[Vec<f64>],
    horizon: usize,
) -> Result<AggregatedCosts> {
    let prices = &cfg.prices;
    let flat = |t: &[Vec<f64>]| {
        let v = t[0][0];
        t.iter().flatten().all(|&p| p == v)
    };
    let (on, off) = match case {
        AggregationCase::ConstantPrices => {
            if !flat(prices.switch_on_table()) || !flat(prices.switch_off_table()) {
                return Err(Error::domain(
                    "constant-price aggregation needs switching prices equal across blocks and slots",
                ));
            }
            let e = prices.energy_table();
            if e.iter().any(|row| row != &e[0]) {
                return Err(Error::domain("constant-price aggregation needs idle prices constant over time"));
            }
            (prices.switch_on(0, 0), prices.switch_off(0, 0))
        }
        AggregationCase::ZeroSwitchCost => {
            let zero = |t: &[Vec<f64>]| t.iter().flatten().all(|&p| p == 0.0);
            if !zero(prices.switch_on_table()) || !zero(prices.switch_off_table()) {
                return Err(Error::domain("zero-switch aggregation needs every switching price to be zero"));
            }
            (0.0, 0.0)
        }
    };
    let agg = TypeAggregation::new(cfg);
    let grid = agg.grid();
    let penalty = big_m(cfg, support, horizon);
    let slots = prices.horizon().max(1);
    let mut qos_memo: HashMap<Vec<u32>, Vec<f64>> = HashMap::new();
    let mut cells = Vec::with_capacity(slots);
    for t in 0..slots {
        let mut row = Vec::with_capacity(grid.len());
        for y in grid.iter() {
            let x = optimal_disaggregation(t, &y, &agg, cfg)?;
            let qos = qos_memo
                .entry(x.clone())
                .or_insert_with(|| support.iter().map(|l| penalized_qos_cost(&x, l, cfg, penalty).0).collect());
            let energy = cfg.energy_unchecked(t, &x);
            row.push(qos.iter().map(|q| q + energy).collect());
        }
        cells.push(row);
    }
    Ok(AggregatedCosts {
        agg,
        grid,
        num_lambda: support.len(),
        switch_on: on,
        switch_off: off,
        stationary: prices.is_stationary(),
        cells,
    })
}

impl AggregatedCosts {
    pub fn aggregation(&self) -> &TypeAggregation {
        &self.agg
    }
}

impl StageCosts for AggregatedCosts {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn num_lambda(&self) -> usize {
        self.num_lambda
    }

    #[inline]
    fn state_cost(&self, t: usize, x: usize, l: usize) -> f64 {
        self.cells[t.min(self.cells.len() - 1)][x][l]
    }

    fn switch_on(&self, _t: usize, _coord: usize) -> f64 {
        self.switch_on
    }

    fn switch_off(&self, _t: usize, _coord: usize) -> f64 {
        self.switch_off
    }

    fn is_stationary(&self) -> bool {
        self.stationary
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Block, EnergyShape, JobClass, PriceSchedule};

    fn two_same_type(prices: [f64; 2]) -> DataCenterConfig {
        DataCenterConfig::new(
            (0..2)
                .map(|_| Block {
                    servers: 2,
                    server_type: 0,
                    rate: 1.0,
                    serves: vec![true],
                    energy_shape: EnergyShape::Linear,
                })
                .collect(),
            vec![JobClass {
                name: "web".into(),
                qos_weight: 1.0,
            }],
            PriceSchedule::new(vec![prices.to_vec()], vec![vec![1.0, 1.0]], vec![vec![1.0, 1.0]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn cheaper_block_fills_first() {
        let cfg = two_same_type([10.0, 5.0]);
        let agg = TypeAggregation::new(&cfg);
        assert_eq!(agg.totals(), &[4]);
        assert_eq!(optimal_disaggregation(0, &[3], &agg, &cfg).unwrap(), vec![1, 2]);
        assert_eq!(aggregate_by_type(&[1, 2], &agg), vec![3]);
        assert!(optimal_disaggregation(0, &[5], &agg, &cfg).is_err());
    }

    #[test]
    fn case_checks() {
        let cfg = two_same_type([10.0, 5.0]);
        let support = vec![vec![0.5]];
        assert!(build_aggregated_model(AggregationCase::ConstantPrices, &cfg, &support, 2).is_ok());
        assert!(build_aggregated_model(AggregationCase::ZeroSwitchCost, &cfg, &support, 2).is_err());
        let mut varying = cfg.clone();
        varying.prices =
            PriceSchedule::new(vec![vec![1.0, 1.0], vec![2.0, 1.0]], vec![vec![1.0, 1.0]], vec![vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            build_aggregated_model(AggregationCase::ConstantPrices, &varying, &support, 2),
            Err(Error::Domain(_))
        ));
    }
}
