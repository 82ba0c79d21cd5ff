use std::sync::Arc;

use crate::grid::Grid;
use crate::model::DataCenterConfig;
use crate::qos::{big_m, QosTable};

/// Per-slot costs of a capacity-control problem over a box of on-count
/// vectors and a finite set of arrival-rate vectors.
///
/// The stage cost of moving from `x` to `a` in slot `t` with rates `l` is
/// `state_cost(t, x, l) + switching(t, x, a)`, where switching is linear in
/// the per-coordinate increase and decrease.
pub trait StageCosts: Send + Sync {
    fn grid(&self) -> &Grid;

    fn num_lambda(&self) -> usize;

    /// QoS plus idle-energy cost of flat state index `x` and support point `l`.
    fn state_cost(&self, t: usize, x: usize, l: usize) -> f64;

    fn switch_on(&self, t: usize, coord: usize) -> f64;

    fn switch_off(&self, t: usize, coord: usize) -> f64;

    /// True when no cost depends on the slot.
    fn is_stationary(&self) -> bool;

    /// Coordinate groups whose costs add up independently, with the costs of
    /// each group. Empty when the problem does not split.
    fn split(&self) -> Vec<(Vec<usize>, SharedCosts)> {
        Vec::new()
    }

    fn switching(&self, t: usize, x: &[u32], a: &[u32]) -> f64 {
        let mut total = 0.0;
        for b in 0..x.len() {
            if a[b] > x[b] {
                total += self.switch_on(t, b) * (a[b] - x[b]) as f64;
            } else if x[b] > a[b] {
                total += self.switch_off(t, b) * (x[b] - a[b]) as f64;
            }
        }
        total
    }
}

pub type SharedCosts = Arc<dyn StageCosts>;

/// Costs of the full block-level model: a memoized QoS table plus per-block
/// idle energy and switching prices.
#[derive(Debug, Clone)]
pub struct FullCosts {
    cfg: DataCenterConfig,
    table: QosTable,
    grid: Grid,
    /// Per component, `(block, stride inside the component grid)`.
    coords: Vec<Vec<(usize, usize)>>,
}

impl FullCosts {
    /// Build the QoS table for `support` with the default big-M penalty for
    /// `horizon` slots.
    pub fn new(cfg: &DataCenterConfig, support: &[Vec<f64>], horizon: usize) -> Self {
        let table = QosTable::build(cfg, support, big_m(cfg, support, horizon));
        Self::from_table(cfg.clone(), table)
    }

    pub fn from_table(cfg: DataCenterConfig, table: QosTable) -> Self {
        let grid = cfg.grid();
        let coords = (0..table.num_components())
            .map(|c| {
                let blocks = table.component_blocks(c);
                let mut unit = vec![0u32; grid.dims()];
                blocks
                    .iter()
                    .map(|&b| {
                        unit[b] = 1;
                        let stride = table.local_index(c, &unit);
                        unit[b] = 0;
                        (b, stride)
                    })
                    .collect()
            })
            .collect();
        FullCosts {
            cfg,
            table,
            grid,
            coords,
        }
    }

    pub fn config(&self) -> &DataCenterConfig {
        &self.cfg
    }

    pub fn qos_table(&self) -> &QosTable {
        &self.table
    }

    #[inline]
    pub fn qos(&self, x: usize, l: usize) -> f64 {
        self.coords
            .iter()
            .enumerate()
            .map(|(c, coords)| {
                let local = coords
                    .iter()
                    .map(|&(b, stride)| self.grid.digit(x, b) as usize * stride)
                    .sum();
                self.table.component_cost(c, local, l)
            })
            .sum()
    }

    #[inline]
    pub fn energy(&self, t: usize, x: usize) -> f64 {
        let prices = &self.cfg.prices;
        self.cfg
            .blocks
            .iter()
            .enumerate()
            .map(|(b, blk)| prices.energy(t, b) * blk.energy_shape.eval(self.grid.digit(x, b)))
            .sum()
    }

    /// True when some support point cannot be served even with every server on.
    pub fn infeasible_at_full_capacity(&self) -> bool {
        self.table.infeasible_at_full_capacity(&self.cfg)
    }
}

impl StageCosts for FullCosts {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn num_lambda(&self) -> usize {
        self.table.num_lambda()
    }

    #[inline]
    fn state_cost(&self, t: usize, x: usize, l: usize) -> f64 {
        self.qos(x, l) + self.energy(t, x)
    }

    #[inline]
    fn switch_on(&self, t: usize, coord: usize) -> f64 {
        self.cfg.prices.switch_on(t, coord)
    }

    #[inline]
    fn switch_off(&self, t: usize, coord: usize) -> f64 {
        self.cfg.prices.switch_off(t, coord)
    }

    fn is_stationary(&self) -> bool {
        self.cfg.prices.is_stationary()
    }

    fn split(&self) -> Vec<(Vec<usize>, SharedCosts)> {
        let nc = self.table.num_components();
        if nc < 2 {
            return Vec::new();
        }
        (0..nc)
            .map(|c| {
                let blocks = self.table.component_blocks(c).to_vec();
                let sub = FullCosts::from_table(self.cfg.select_blocks(&blocks), self.table.component_table(c));
                (blocks, Arc::new(sub) as SharedCosts)
            })
            .collect()
    }
}
