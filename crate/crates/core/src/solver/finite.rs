use rayon::prelude::*;

use super::backup::{backup_mode, backup_slot, digit_table, discounted_worst, orthant_prices, Envelope};
use super::costs::{SharedCosts, StageCosts};
use super::policy::{OrthantThreshold, ThresholdPolicy};
use super::values::{DenseValues, Part, ValueTable};
use crate::error::{Error, Result};
use crate::model::Orthant;
use crate::modes::ModeModel;

/// Whether the solver may split the blocks into independent groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Decomposition {
    /// Split when the costs separate and the chain is known exactly (robust
    /// worst cases couple the groups).
    #[default]
    Auto,
    Joint,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub policy: ThresholdPolicy,
    pub values: ValueTable,
}

pub(crate) fn check_inputs(model: &ModeModel, costs: &dyn StageCosts, gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::domain(format!("discount must lie in [0, 1), got {gamma}")));
    }
    if model.num_lambda() != costs.num_lambda() {
        return Err(Error::domain(format!(
            "mode model has {} arrival-rate points, costs have {}",
            model.num_lambda(),
            costs.num_lambda()
        )));
    }
    Ok(())
}

pub(crate) fn parts_of(model: &ModeModel, costs: &SharedCosts, how: Decomposition) -> Vec<(Vec<usize>, SharedCosts)> {
    let split = match how {
        Decomposition::Auto if model.is_nominal() => costs.split(),
        _ => Vec::new(),
    };
    if split.is_empty() {
        vec![((0..costs.grid().dims()).collect(), costs.clone())]
    } else {
        split
    }
}

/// Robust finite-horizon optimal values and threshold policy.
pub fn backward_induction(model: &ModeModel, costs: SharedCosts, horizon: usize, gamma: f64) -> Result<Solution> {
    backward_induction_with(model, costs, horizon, gamma, Decomposition::Auto)
}

pub fn backward_induction_with(
    model: &ModeModel,
    costs: SharedCosts,
    horizon: usize,
    gamma: f64,
    how: Decomposition,
) -> Result<Solution> {
    check_inputs(model, costs.as_ref(), gamma)?;
    if horizon == 0 {
        return Err(Error::domain("horizon must be at least one slot"));
    }
    let modes = model.num_modes();
    let mut parts = Vec::new();
    // [part][t][theta][k]
    let mut part_thresholds = Vec::new();
    for (coords, pc) in parts_of(model, &costs, how) {
        let digits = digit_table(pc.grid());
        let mut slots: Vec<Envelope> = Vec::with_capacity(horizon);
        let mut taus = Vec::with_capacity(horizon);
        for t in (0..horizon).rev() {
            let (env, th) = backup_slot(pc.as_ref(), model, t, t + 1, gamma, slots.last(), &digits);
            slots.push(env);
            taus.push(th);
        }
        slots.reverse();
        taus.reverse();
        parts.push(Part {
            coords,
            grid: pc.grid().clone(),
            slots,
        });
        part_thresholds.push(taus);
    }
    let groups: Vec<Vec<usize>> = parts.iter().map(|p| p.coords.clone()).collect();
    let slots = (0..horizon)
        .map(|t| {
            (0..modes)
                .map(|th| part_thresholds.iter().map(|pt| pt[t][th].clone()).collect())
                .collect()
        })
        .collect();
    Ok(Solution {
        policy: ThresholdPolicy::new(groups, modes, false, slots)?,
        values: ValueTable {
            costs,
            num_modes: modes,
            stationary: false,
            parts,
        },
    })
}

/// `g^k_t(x, l) = state_cost(t, x, l) - <x, s^k_t>`.
pub fn g_term(t: usize, k: &Orthant, x: &[u32], l: usize, costs: &dyn StageCosts) -> Result<f64> {
    costs.grid().check(x)?;
    if k.dims() != x.len() {
        return Err(Error::domain("orthant and state dimensions differ"));
    }
    let s = orthant_prices(costs, t, k);
    let lin: f64 = x.iter().zip(&s).map(|(&xb, sb)| xb as f64 * sb).sum();
    Ok(costs.state_cost(t, costs.grid().index(x), l) - lin)
}

/// `h^k_t(a, theta) = <a, s^k_t> + gamma * worst-case expected value of
/// slot `t + 1` after moving to `a`. `next` is `None` after the last slot.
#[allow(clippy::too_many_arguments)]
pub fn h_term(
    t: usize,
    k: &Orthant,
    a: &[u32],
    theta: usize,
    next: Option<&ValueTable>,
    model: &ModeModel,
    costs: &dyn StageCosts,
    gamma: f64,
) -> Result<f64> {
    costs.grid().check(a)?;
    let s = orthant_prices(costs, t, k);
    let lin: f64 = a.iter().zip(&s).map(|(&ab, sb)| ab as f64 * sb).sum();
    let Some(next) = next else {
        return Ok(lin);
    };
    let u: Vec<f64> = (0..model.num_modes())
        .map(|th2| {
            let mut acc = 0.0;
            for (l, &p) in model.emission(t, th2).iter().enumerate() {
                if p != 0.0 {
                    acc += p * next.value(t + 1, a, l, th2);
                }
            }
            acc
        })
        .collect();
    Ok(lin + gamma * model.chain_set(t, theta).worst_value(&u))
}

/// Per orthant, the minimizer and minimum of `h^k_t(., theta)` given the
/// values of slot `t + 1` (`None` after the last slot).
pub fn compute_thresholds(
    t: usize,
    theta: usize,
    next: Option<&ValueTable>,
    model: &ModeModel,
    costs: &dyn StageCosts,
    gamma: f64,
) -> Vec<OrthantThreshold> {
    let grid = costs.grid();
    let modes = model.num_modes();
    let mut u = vec![0.0; grid.len() * modes];
    if let Some(next) = next {
        u.par_chunks_mut(modes).enumerate().for_each(|(a, row)| {
            let x = grid.decode(a);
            for (th2, slot) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (l, &p) in model.emission(t, th2).iter().enumerate() {
                    if p != 0.0 {
                        acc += p * next.value(t + 1, &x, l, th2);
                    }
                }
                *slot = acc;
            }
        });
    }
    let gw = discounted_worst(model, t, theta, gamma, &u);
    backup_mode(costs, t, &gw, &digit_table(grid)).2
}

/// Robust backward induction by direct minimization over every action.
pub fn flat_backward_induction(
    model: &ModeModel,
    costs: &dyn StageCosts,
    horizon: usize,
    gamma: f64,
) -> Result<DenseValues> {
    check_inputs(model, costs, gamma)?;
    let grid = costs.grid().clone();
    let nl = costs.num_lambda();
    let modes = model.num_modes();
    let mut slots: Vec<Vec<f64>> = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let gw = flat_discounted_worst(model, costs, t, t + 1, gamma, slots.last().map(Vec::as_slice));
        slots.push(flat_minimize(costs, t, t, &grid, nl, modes, &gw));
    }
    slots.reverse();
    Ok(DenseValues {
        grid,
        num_lambda: nl,
        num_modes: modes,
        slots,
    })
}

/// `gw[theta][a]` from dense next-slot values.
pub(crate) fn flat_discounted_worst(
    model: &ModeModel,
    costs: &dyn StageCosts,
    t: usize,
    _t_next: usize,
    gamma: f64,
    next: Option<&[f64]>,
) -> Vec<Vec<f64>> {
    let n = costs.grid().len();
    let nl = costs.num_lambda();
    let modes = model.num_modes();
    (0..modes)
        .map(|th| {
            let set = model.chain_set(t, th);
            (0..n)
                .map(|a| {
                    let u: Vec<f64> = (0..modes)
                        .map(|th2| match next {
                            None => 0.0,
                            Some(v) => {
                                let mut acc = 0.0;
                                for (l, &p) in model.emission(t, th2).iter().enumerate() {
                                    if p != 0.0 {
                                        acc += p * v[(a * nl + l) * modes + th2];
                                    }
                                }
                                acc
                            }
                        })
                        .collect();
                    gamma * set.worst_value(&u)
                })
                .collect()
        })
        .collect()
}

pub(crate) fn flat_minimize(
    costs: &dyn StageCosts,
    t_price: usize,
    t_cost: usize,
    grid: &crate::grid::Grid,
    nl: usize,
    modes: usize,
    gw: &[Vec<f64>],
) -> Vec<f64> {
    let n = grid.len();
    let mut out = vec![0.0; n * nl * modes];
    out.par_chunks_mut(nl * modes).enumerate().for_each(|(x, cell)| {
        let xv = grid.decode(x);
        let best: Vec<f64> = (0..modes)
            .map(|th| {
                let mut b = f64::INFINITY;
                for a in 0..n {
                    let c = costs.switching(t_price, &xv, &grid.decode(a)) + gw[th][a];
                    if c < b {
                        b = c;
                    }
                }
                b
            })
            .collect();
        for l in 0..nl {
            let sc = costs.state_cost(t_cost, x, l);
            for th in 0..modes {
                cell[l * modes + th] = sc + best[th];
            }
        }
    });
    out
}

/// Robust Bellman right-hand side of moving to `a` from `(x, l, theta)` at
/// slot `t`, against dense values (slot `t + 1` of `values`, zero past its
/// last slot). Summed in the same order as the solvers, so the minimum over
/// `a` reproduces the stored value exactly.
#[allow(clippy::too_many_arguments)]
pub fn action_value(
    model: &ModeModel,
    costs: &dyn StageCosts,
    values: &DenseValues,
    gamma: f64,
    t: usize,
    x: &[u32],
    l: usize,
    theta: usize,
    a: &[u32],
) -> f64 {
    let grid = costs.grid();
    let ai = grid.index(a);
    let u: Vec<f64> = (0..model.num_modes())
        .map(|th2| {
            let mut acc = 0.0;
            for (l2, &p) in model.emission(t, th2).iter().enumerate() {
                if p != 0.0 {
                    acc += p * values.get(t + 1, ai, l2, th2);
                }
            }
            acc
        })
        .collect();
    costs.state_cost(t, grid.index(x), l) + (costs.switching(t, x, a) + gamma * model.chain_set(t, theta).worst_value(&u))
}
