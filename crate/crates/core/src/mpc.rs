//! Two-stage model-predictive baseline: pick next-slot capacity against the
//! worst arrival rates of an interval forecast, then balance the load that
//! actually arrives.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{Component, DataCenterConfig};
use crate::modes::ModeModel;
use crate::qos::{component_qos, optimize_load_balancing, penalized_qos_cost, LoadBalancingMatrix};
use crate::uncertainty::UncertaintySet;

/// Per-class arrival-rate intervals for the next slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Forecast {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::domain("forecast needs matching non-empty bounds"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && 0.0 <= *l && l <= h)) {
            return Err(Error::domain("forecast bounds must satisfy 0 <= lo <= hi"));
        }
        Ok(Forecast { lo, hi })
    }

    /// Zero-width forecast at `lambda`.
    pub fn point(lambda: Vec<f64>) -> Result<Self> {
        Self::new(lambda.clone(), lambda)
    }

    /// Box covering every support point that can be emitted in slot `t + 1`
    /// by a mode reachable from `theta` under any admissible row (emissions
    /// follow the slot of the transition, as in the solver).
    pub fn covering(model: &ModeModel, t: usize, theta: usize) -> Self {
        let nj = model.num_classes();
        let mut lo = vec![f64::INFINITY; nj];
        let mut hi = vec![0.0f64; nj];
        let reachable = reachable_modes(model.chain_set(t, theta));
        for (next, _) in reachable.iter().enumerate().filter(|(_, r)| **r) {
            for (l, p) in model.emission(t, next).iter().enumerate() {
                if *p > 0.0 {
                    for (j, v) in model.support()[l].iter().enumerate() {
                        lo[j] = lo[j].min(*v);
                        hi[j] = hi[j].max(*v);
                    }
                }
            }
        }
        for v in &mut lo {
            if !v.is_finite() {
                *v = 0.0;
            }
        }
        Forecast { lo, hi }
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    /// Upper corner; the QoS cost is nondecreasing in every rate, so this is
    /// the worst case over the box.
    pub fn hi(&self) -> &[f64] {
        &self.hi
    }
}

fn reachable_modes(set: &UncertaintySet) -> Vec<bool> {
    match set {
        UncertaintySet::Interval(s) => s.hi().iter().map(|p| *p > 0.0).collect(),
        // a KL ball only reweights the nominal support
        UncertaintySet::Likelihood(s) => s.nominal().iter().map(|p| *p > 0.0).collect(),
    }
}

/// Next-slot capacity chosen by the first stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub action: Vec<u32>,
    /// Planned stage cost at the forecast's upper corner, with `penalty`
    /// charged per component that cannot be served.
    pub worst_cost: f64,
    /// Some component cannot serve the upper corner even at full capacity.
    pub infeasible: bool,
}

/// Capacity minimizing `qos(a, hi) + energy(t + 1, a) + switching(t, x, a)`.
/// The cost separates over serve-mask components, so each is searched on its
/// own; ties go to the first action in grid order.
pub fn mpc_plan(t: usize, x: &[u32], forecast: &Forecast, cfg: &DataCenterConfig, penalty: f64) -> Result<Plan> {
    cfg.grid().check(x)?;
    if forecast.hi.len() != cfg.num_classes() {
        return Err(Error::domain(format!(
            "forecast covers {} classes, expected {}",
            forecast.hi.len(),
            cfg.num_classes()
        )));
    }
    let mut action = x.to_vec();
    let mut worst_cost = 0.0;
    let mut infeasible = false;
    for comp in cfg.components() {
        let (local, cost, ok) = plan_component(t, x, forecast.hi(), cfg, &comp, penalty);
        for (i, &b) in comp.blocks.iter().enumerate() {
            action[b] = local[i];
        }
        worst_cost += cost;
        infeasible |= !ok;
    }
    Ok(Plan {
        action,
        worst_cost,
        infeasible,
    })
}

fn block_cost(t: usize, b: usize, xb: u32, ab: u32, cfg: &DataCenterConfig) -> f64 {
    let prices = &cfg.prices;
    let energy = prices.energy(t + 1, b) * cfg.blocks[b].energy_shape.eval(ab);
    let switch = if ab > xb {
        prices.switch_on(t, b) * (ab - xb) as f64
    } else {
        prices.switch_off(t, b) * (xb - ab) as f64
    };
    energy + switch
}

fn plan_component(
    t: usize,
    x: &[u32],
    lambda: &[f64],
    cfg: &DataCenterConfig,
    comp: &Component,
    penalty: f64,
) -> (Vec<u32>, f64, bool) {
    let grid = Grid::new(comp.blocks.iter().map(|&b| cfg.blocks[b].servers).collect());
    let mut full = x.to_vec();
    let mut best: Option<(f64, Vec<u32>)> = None;
    for local in grid.iter() {
        for (i, &b) in comp.blocks.iter().enumerate() {
            full[b] = local[i];
        }
        let Some(q) = component_qos(&full, lambda, cfg, comp) else {
            continue;
        };
        let other: f64 = comp
            .blocks
            .iter()
            .zip(&local)
            .map(|(&b, &ab)| block_cost(t, b, x[b], ab, cfg))
            .sum();
        let c = q + other;
        if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
            best = Some((c, local));
        }
    }
    match best {
        Some((c, local)) => (local, c, true),
        None => {
            let top = grid.top();
            let other: f64 = comp
                .blocks
                .iter()
                .zip(&top)
                .map(|(&b, &ab)| block_cost(t, b, x[b], ab, cfg))
                .sum();
            (top, penalty + other, false)
        }
    }
}

/// What the second stage observed and paid.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub q: LoadBalancingMatrix,
    /// `qos(plan, observed) + energy(t + 1, plan) + switching(t, x, plan)`,
    /// with `penalty` per component that cannot serve `observed`.
    pub cost: f64,
    pub feasible: bool,
}

/// Apply `plan` from `x` and balance the observed load on the planned
/// capacity.
pub fn mpc_step(
    t: usize,
    x: &[u32],
    plan: &Plan,
    observed: &[f64],
    cfg: &DataCenterConfig,
    penalty: f64,
) -> Result<StepOutcome> {
    let grid = cfg.grid();
    grid.check(x)?;
    grid.check(&plan.action)?;
    if observed.len() != cfg.num_classes() {
        return Err(Error::domain(format!(
            "observed rates cover {} classes, expected {}",
            observed.len(),
            cfg.num_classes()
        )));
    }
    let a = &plan.action;
    let q = optimize_load_balancing(a, observed, cfg).q_star;
    let (qos, feasible) = penalized_qos_cost(a, observed, cfg, penalty);
    let other: f64 = (0..cfg.num_blocks()).map(|b| block_cost(t, b, x[b], a[b], cfg)).sum();
    Ok(StepOutcome {
        q,
        cost: qos + other,
        feasible,
    })
}

/// The baseline as a closed-loop controller: forecasts cover the support
/// reachable from the current mode, and plans are cached per
/// `(price slot, mode slot, mode, x)`.
#[derive(Debug)]
pub struct MpcPolicy {
    cfg: DataCenterConfig,
    model: ModeModel,
    penalty: f64,
    cache: Mutex<HashMap<(usize, usize, usize, Vec<u32>), Plan>>,
}

impl MpcPolicy {
    pub fn new(cfg: DataCenterConfig, model: ModeModel, penalty: f64) -> Self {
        MpcPolicy {
            cfg,
            model,
            penalty,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &DataCenterConfig {
        &self.cfg
    }

    /// Plan for slot `t` in mode `theta` from `x`.
    pub fn plan(&self, t: usize, x: &[u32], theta: usize) -> Plan {
        // slots past the last price or mode row behave like the last one
        let key = (
            t.min(self.cfg.prices.horizon().saturating_sub(1) + 1),
            if self.model.is_stationary() { 0 } else { t },
            theta,
            x.to_vec(),
        );
        if let Some(p) = self.cache.lock().expect("plan cache").get(&key) {
            return p.clone();
        }
        let forecast = Forecast::covering(&self.model, t, theta);
        let plan = mpc_plan(t, x, &forecast, &self.cfg, self.penalty).expect("state inside the capacity box");
        self.cache.lock().expect("plan cache").insert(key, plan.clone());
        plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PriceSchedule;

    fn config(blocks: Vec<(u32, f64, Vec<bool>)>, weights: Vec<f64>) -> DataCenterConfig {
        let mut cfg = crate::qos::tests::config(blocks, weights);
        cfg.prices = PriceSchedule::constant(cfg.num_blocks(), 0.3, 0.5, 0.2);
        cfg
    }

    fn brute_force(t: usize, x: &[u32], lambda: &[f64], cfg: &DataCenterConfig) -> f64 {
        cfg.grid()
            .iter()
            .filter_map(|a| {
                let r = optimize_load_balancing(&a, lambda, cfg);
                r.feasible.then(|| {
                    r.cost
                        + (0..cfg.num_blocks())
                            .map(|b| block_cost(t, b, x[b], a[b], cfg))
                            .sum::<f64>()
                })
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn single_block_matches_exhaustive() {
        let cfg = config(vec![(6, 1.0, vec![true])], vec![4.0]);
        for lam in [0.0, 0.5, 2.2, 5.5] {
            for x0 in 0..=6 {
                let plan = mpc_plan(0, &[x0], &Forecast::point(vec![lam]).unwrap(), &cfg, 1e9).unwrap();
                assert!(!plan.infeasible);
                assert!((plan.worst_cost - brute_force(0, &[x0], &[lam], &cfg)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn beyond_capacity_plans_everything_on() {
        let cfg = config(vec![(3, 1.0, vec![true]), (2, 1.0, vec![true])], vec![1.0]);
        let f = Forecast::new(vec![0.0], vec![7.0]).unwrap();
        let plan = mpc_plan(0, &[1, 1], &f, &cfg, 1e9).unwrap();
        assert!(plan.infeasible);
        assert_eq!(plan.action, vec![3, 2]);
    }

    #[test]
    fn observed_corner_realizes_planned_cost() {
        let cfg = config(vec![(3, 1.0, vec![true, false]), (2, 2.0, vec![true, true])], vec![1.0, 2.0]);
        let f = Forecast::new(vec![0.0, 0.0], vec![1.5, 0.7]).unwrap();
        let plan = mpc_plan(0, &[0, 2], &f, &cfg, 1e9).unwrap();
        let step = mpc_step(0, &[0, 2], &plan, f.hi(), &cfg, 1e9).unwrap();
        assert!(step.feasible);
        assert!((step.cost - plan.worst_cost).abs() <= 1e-6 * plan.worst_cost.max(1.0));
        let idle = mpc_step(0, &[0, 2], &plan, &[0.0, 0.0], &cfg, 1e9).unwrap();
        let direct: f64 = (0..2).map(|b| block_cost(0, b, [0, 2][b], plan.action[b], &cfg)).sum();
        assert_eq!(idle.cost, direct);
    }
}
