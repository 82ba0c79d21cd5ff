use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::backup::{backup_slot, digit_table, Envelope};
use super::costs::{SharedCosts, StageCosts};
use super::finite::{check_inputs, flat_discounted_worst, flat_minimize, parts_of, Decomposition};
use super::policy::{OrthantThreshold, ThresholdPolicy};
use super::values::{DenseValues, Part, ValueTable};
use crate::error::{Error, Result};
use crate::modes::ModeModel;

const MAX_ITERATIONS: usize = 1_000_000;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct InfiniteSolution {
    pub policy: ThresholdPolicy,
    pub values: ValueTable,
    pub iterations: usize,
    /// Sup-norm change of the values after each backup (summed over groups).
    pub changes: Vec<f64>,
}

fn check_stationary(model: &ModeModel, costs: &dyn StageCosts) -> Result<()> {
    if !model.is_stationary() || !costs.is_stationary() {
        return Err(Error::domain("infinite-horizon solves need a time-invariant model and prices"));
    }
    Ok(())
}

/// Iterate the robust backup until the values change by at most `tol` in
/// sup norm; the last decision rule is returned as a stationary policy.
pub fn infinite_horizon_solve(model: &ModeModel, costs: SharedCosts, gamma: f64, tol: f64) -> Result<InfiniteSolution> {
    infinite_horizon_solve_with(model, costs, gamma, tol, Decomposition::Auto)
}

pub fn infinite_horizon_solve_with(
    model: &ModeModel,
    costs: SharedCosts,
    gamma: f64,
    tol: f64,
    how: Decomposition,
) -> Result<InfiniteSolution> {
    check_inputs(model, costs.as_ref(), gamma)?;
    check_stationary(model, costs.as_ref())?;
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    let modes = model.num_modes();
    let split = parts_of(model, &costs, how);
    let part_tol = tol / split.len() as f64;
    let mut parts = Vec::new();
    let mut part_taus = Vec::new();
    let mut changes: Vec<f64> = Vec::new();
    for (coords, pc) in split {
        let digits = digit_table(pc.grid());
        let n = pc.grid().len();
        let nl = pc.num_lambda();
        let mut env: Option<Envelope> = None;
        let mut taus;
        let mut iter = 0;
        loop {
            let (next, th) = backup_slot(pc.as_ref(), model, 0, 0, gamma, env.as_ref(), &digits);
            taus = th;
            let change = match &env {
                Some(old) => old
                    .m
                    .iter()
                    .zip(&next.m)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
                None => {
                    let mut worst = 0.0f64;
                    for x in 0..n {
                        for l in 0..nl {
                            let sc = pc.state_cost(0, x, l);
                            for th in 0..modes {
                                worst = worst.max((sc + next.m[x * modes + th]).abs());
                            }
                        }
                    }
                    worst
                }
            };
            if changes.len() <= iter {
                changes.push(0.0);
            }
            changes[iter] += change;
            iter += 1;
            env = Some(next);
            if gamma == 0.0 || (iter > 1 && change <= part_tol) {
                break;
            }
            if iter >= MAX_ITERATIONS {
                return Err(Error::domain("value iteration did not converge"));
            }
        }
        parts.push(Part {
            coords,
            grid: pc.grid().clone(),
            slots: vec![env.expect("at least one backup")],
        });
        part_taus.push(taus);
    }
    let groups: Vec<Vec<usize>> = parts.iter().map(|p| p.coords.clone()).collect();
    let slot = (0..modes)
        .map(|th| part_taus.iter().map(|pt| pt[th].clone()).collect())
        .collect();
    Ok(InfiniteSolution {
        policy: ThresholdPolicy::new(groups, modes, true, vec![slot])?,
        values: ValueTable {
            costs,
            num_modes: modes,
            stationary: true,
            parts,
        },
        iterations: changes.len(),
        changes,
    })
}

/// Flat robust value iteration to sup-norm change `tol`; returns the final
/// values as a single stationary slot and the iteration count.
pub fn flat_value_iteration(
    model: &ModeModel,
    costs: &dyn StageCosts,
    gamma: f64,
    tol: f64,
) -> Result<(DenseValues, usize)> {
    check_inputs(model, costs, gamma)?;
    check_stationary(model, costs)?;
    let grid = costs.grid().clone();
    let nl = costs.num_lambda();
    let modes = model.num_modes();
    let mut v: Option<Vec<f64>> = None;
    let mut iter = 0;
    loop {
        let gw = flat_discounted_worst(model, costs, 0, 0, gamma, v.as_deref());
        let next = flat_minimize(costs, 0, 0, &grid, nl, modes, &gw);
        iter += 1;
        let change = match &v {
            Some(old) => old.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            None => f64::INFINITY,
        };
        v = Some(next);
        if gamma == 0.0 || change <= tol {
            break;
        }
        if iter >= MAX_ITERATIONS {
            return Err(Error::domain("value iteration did not converge"));
        }
    }
    Ok((
        DenseValues {
            grid,
            num_lambda: nl,
            num_modes: modes,
            slots: vec![v.expect("at least one iteration")],
        },
        iter,
    ))
}

/// How transition rows are resolved when evaluating a fixed policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowChoice {
    Nominal,
    Adversarial,
}

/// Exact discounted value of a stationary policy `act(x_index, theta)`
/// (returning an action index), with rows resolved per `rows`.
pub fn evaluate_policy(
    model: &ModeModel,
    costs: &dyn StageCosts,
    gamma: f64,
    tol: f64,
    rows: RowChoice,
    act: &(dyn Fn(usize, usize) -> usize + Sync),
) -> Result<DenseValues> {
    check_inputs(model, costs, gamma)?;
    check_stationary(model, costs)?;
    let grid = costs.grid().clone();
    let n = grid.len();
    let nl = costs.num_lambda();
    let modes = model.num_modes();
    let actions: Vec<usize> = (0..n * modes).map(|i| act(i / modes, i % modes)).collect();
    let switch: Vec<f64> = (0..n * modes)
        .map(|i| costs.switching(0, &grid.decode(i / modes), &grid.decode(actions[i])))
        .collect();
    let mut v = vec![0.0; n * nl * modes];
    loop {
        let u = expected_next(model, nl, modes, n, &v);
        let next: Vec<f64> = (0..n * nl * modes)
            .into_par_iter()
            .map(|i| {
                let th = i % modes;
                let l = (i / modes) % nl;
                let x = i / (modes * nl);
                let a = actions[x * modes + th];
                let row = &u[a * modes..(a + 1) * modes];
                let set = model.chain_set(0, th);
                let w = match rows {
                    RowChoice::Nominal => set.nominal().iter().zip(row).map(|(p, v)| p * v).sum(),
                    RowChoice::Adversarial => set.worst_value(row),
                };
                costs.state_cost(0, x, l) + switch[x * modes + th] + gamma * w
            })
            .collect();
        let change = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if gamma == 0.0 || change <= tol {
            break;
        }
    }
    Ok(DenseValues {
        grid,
        num_lambda: nl,
        num_modes: modes,
        slots: vec![v],
    })
}

/// `U[a * modes + theta'] = sum_l P(l | theta') v(a, l, theta')`.
fn expected_next(model: &ModeModel, nl: usize, modes: usize, n: usize, v: &[f64]) -> Vec<f64> {
    (0..n * modes)
        .into_par_iter()
        .map(|i| {
            let (a, th) = (i / modes, i % modes);
            model
                .emission(0, th)
                .iter()
                .enumerate()
                .map(|(l, p)| p * v[(a * nl + l) * modes + th])
                .sum()
        })
        .collect()
}

/// Mean of the start-state values, the quantity the Monte-Carlo search minimizes.
pub fn mean_value(v: &DenseValues) -> f64 {
    let s = &v.slots[0];
    s.iter().sum::<f64>() / s.len() as f64
}

/// Sampled policy value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Transition rows used inside rollouts: `[a * modes + theta]` cumulative
/// distributions over the next mode.
#[derive(Debug, Clone)]
pub struct RolloutRows {
    cumulative: Vec<Vec<f64>>,
    modes: usize,
}

impl RolloutRows {
    pub fn nominal(model: &ModeModel, n: usize) -> Self {
        let modes = model.num_modes();
        RolloutRows {
            cumulative: (0..n * modes).map(|i| cumulate(model.nominal_row(0, i % modes))).collect(),
            modes,
        }
    }

    /// Worst-case rows against the values `v` of some policy.
    pub fn adversarial(model: &ModeModel, v: &DenseValues) -> Self {
        let modes = model.num_modes();
        let n = v.grid.len();
        let u = expected_next(model, v.num_lambda, modes, n, &v.slots[0]);
        RolloutRows {
            cumulative: (0..n * modes)
                .map(|i| {
                    let a = i / modes;
                    let set = model.chain_set(0, i % modes);
                    cumulate(&set.worst_case(&u[a * modes..(a + 1) * modes]).1)
                })
                .collect(),
            modes,
        }
    }

    #[inline]
    fn sample(&self, a: usize, theta: usize, u: f64) -> usize {
        sample_cumulative(&self.cumulative[a * self.modes + theta], u)
    }
}

pub(crate) fn cumulate(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

#[inline]
pub(crate) fn sample_cumulative(cum: &[f64], u: f64) -> usize {
    let total = *cum.last().expect("non-empty distribution");
    let target = u * total;
    cum.iter().position(|&c| target < c).unwrap_or_else(|| {
        // rounding at the top: last entry with positive mass
        (0..cum.len())
            .rev()
            .find(|&i| i == 0 || cum[i] > cum[i - 1])
            .unwrap_or(0)
    })
}

/// Number of slots after which `gamma^T` drops below `1e-8`.
pub fn default_cutoff(gamma: f64) -> usize {
    if gamma <= 0.0 {
        1
    } else {
        ((1e-8f64).ln() / gamma.ln()).ceil().clamp(1.0, 100_000.0) as usize
    }
}

/// Mean discounted cost of `policy` over `n` rollouts of `cutoff` slots from
/// start states drawn uniformly over (x, lambda, mode). Rollout `i` uses
/// random stream `i` of `seed`, so estimates of different policies share
/// their random numbers.
#[allow(clippy::too_many_arguments)]
pub fn estimate_policy_value(
    policy: &ThresholdPolicy,
    model: &ModeModel,
    costs: &dyn StageCosts,
    gamma: f64,
    n: usize,
    cutoff: usize,
    rows: &RolloutRows,
    seed: u64,
) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::domain("need at least one rollout"));
    }
    let grid = costs.grid();
    let nl = costs.num_lambda();
    let modes = model.num_modes();
    let emission: Vec<Vec<f64>> = (0..modes).map(|th| cumulate(model.emission(0, th))).collect();
    let samples: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut x = grid.decode(rng.gen_range(0..grid.len()));
            let mut l = rng.gen_range(0..nl);
            let mut th = rng.gen_range(0..modes);
            let mut total = 0.0;
            let mut disc = 1.0;
            for _ in 0..cutoff {
                let a = policy.act(0, &x, th);
                let ai = grid.index(&a);
                total += disc * (costs.state_cost(0, grid.index(&x), l) + costs.switching(0, &x, &a));
                disc *= gamma;
                th = rows.sample(ai, th, rng.gen());
                l = sample_cumulative(&emission[th], rng.gen());
                x = a;
            }
            total
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Ok(Estimate {
        mean,
        std_err: (var / n as f64).sqrt(),
    })
}

#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub policy: ThresholdPolicy,
    /// Estimate under worst-case rows of the final policy.
    pub adversarial: Estimate,
    /// Estimate under nominal rows.
    pub nominal: Estimate,
    pub sweeps: usize,
    /// Estimate after each sweep.
    pub history: Vec<f64>,
}

/// Coordinate descent over stationary thresholds: each `(mode, group,
/// orthant)` threshold in turn is set to the candidate minimizing the
/// sampled value with all others fixed. Rollouts use the worst-case rows of
/// the current policy, refreshed every sweep. Stops once two successive
/// sweep estimates differ by at most `eps`.
pub fn monte_carlo_search(
    model: &ModeModel,
    costs: SharedCosts,
    gamma: f64,
    n: usize,
    eps: f64,
    seed: u64,
) -> Result<MonteCarloResult> {
    check_inputs(model, costs.as_ref(), gamma)?;
    check_stationary(model, costs.as_ref())?;
    if n == 0 || !(eps > 0.0) {
        return Err(Error::domain("need n >= 1 and eps > 0"));
    }
    let grid = costs.grid().clone();
    let modes = model.num_modes();
    let cutoff = default_cutoff(gamma);
    let groups: Vec<Vec<usize>> = parts_of(model, &costs, Decomposition::Auto)
        .into_iter()
        .map(|(c, _)| c)
        .collect();
    let caps = grid.caps().to_vec();
    let group_grids: Vec<crate::grid::Grid> = groups
        .iter()
        .map(|g| crate::grid::Grid::new(g.iter().map(|&b| caps[b]).collect()))
        .collect();
    let slot: Vec<Vec<Vec<OrthantThreshold>>> = (0..modes)
        .map(|_| {
            group_grids
                .iter()
                .map(|gg| {
                    (0..1 << gg.dims())
                        .map(|_| OrthantThreshold {
                            tau: gg.top(),
                            value: f64::NAN,
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut policy = ThresholdPolicy::new(groups.clone(), modes, true, vec![slot])?;
    let exact_rows = |p: &ThresholdPolicy| -> Result<RolloutRows> {
        let v = evaluate_policy(model, costs.as_ref(), gamma, 1e-9, RowChoice::Adversarial, &|x, th| {
            grid.index(&p.act(0, &grid.decode(x), th))
        })?;
        Ok(RolloutRows::adversarial(model, &v))
    };
    let mut rows = exact_rows(&policy)?;
    let mut prev = estimate_policy_value(&policy, model, costs.as_ref(), gamma, n, cutoff, &rows, seed)?.mean;
    let mut history = vec![prev];
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut current = prev;
        for th in 0..modes {
            for (g, gg) in group_grids.iter().enumerate() {
                for k in 0..1usize << gg.dims() {
                    let mut best: Option<(f64, Vec<u32>)> = None;
                    for cand in gg.iter() {
                        let mut trial = policy.clone();
                        trial.set_threshold(0, th, g, k, cand.clone());
                        let est = estimate_policy_value(&trial, model, costs.as_ref(), gamma, n, cutoff, &rows, seed)?;
                        if best.as_ref().is_none_or(|b| est.mean < b.0) {
                            best = Some((est.mean, cand));
                        }
                    }
                    let (v, tau) = best.expect("non-empty candidate grid");
                    policy.set_threshold(0, th, g, k, tau);
                    current = v;
                }
            }
        }
        history.push(current);
        let done = (current - prev).abs() <= eps;
        prev = current;
        rows = exact_rows(&policy)?;
        if done {
            break;
        }
    }
    let adversarial = estimate_policy_value(&policy, model, costs.as_ref(), gamma, n, cutoff, &rows, seed)?;
    let nominal_rows = RolloutRows::nominal(model, grid.len());
    let nominal = estimate_policy_value(&policy, model, costs.as_ref(), gamma, n, cutoff, &nominal_rows, seed)?;
    Ok(MonteCarloResult {
        policy,
        adversarial,
        nominal,
        sweeps,
        history,
    })
}
