//! The exact robust Bellman backup on a box of on-count vectors.
//!
//! With switching prices `s^k_b` selected by an orthant `k`, the switching
//! cost of a move inside that orthant is linear, so
//! `min_a [switch(x, a) + gW(a)] = min_k [-<x, s^k> + min_{a in O^k(x)} h^k(a)]`
//! where `h^k(a) = <a, s^k> + gW(a)` and `O^k(x)` is the box of actions on the
//! `k` side of `x`. The inner minimum over a box orthant is a cumulative
//! minimum along each axis, so one slot costs `O(2^B * B * |grid|)` per mode.

use rayon::prelude::*;

use super::costs::StageCosts;
use super::policy::OrthantThreshold;
use crate::grid::Grid;
use crate::model::Orthant;
use crate::modes::ModeModel;

/// One slot of the solution: `m[x * modes + theta]` is the optimal
/// switching-plus-continuation cost from `x`, attained by action index
/// `decision[x * modes + theta]`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Envelope {
    pub m: Vec<f64>,
    pub decision: Vec<u32>,
}

/// Flat coordinate digits of every grid point, `[idx * dims + b]`.
pub(crate) fn digit_table(grid: &Grid) -> Vec<u32> {
    let d = grid.dims();
    let mut out = vec![0u32; grid.len() * d];
    for (idx, chunk) in out.chunks_mut(d.max(1)).enumerate().take(grid.len()) {
        if d > 0 {
            grid.decode_into(idx, chunk);
        }
    }
    out
}

/// `U[a * modes + theta'] = sum_l P_t(l | theta') * v_{t+1}(a, l, theta')`,
/// with `v_{t+1} = state_cost(t_next, .) + next.m`. `None` means a zero
/// continuation.
pub(crate) fn continuation(
    costs: &dyn StageCosts,
    model: &ModeModel,
    t: usize,
    t_next: usize,
    next: Option<&Envelope>,
) -> Vec<f64> {
    let n = costs.grid().len();
    let modes = model.num_modes();
    let nl = costs.num_lambda();
    let mut u = vec![0.0; n * modes];
    let Some(next) = next else {
        return u;
    };
    u.par_chunks_mut(modes).enumerate().for_each(|(a, row)| {
        let sc: Vec<f64> = (0..nl).map(|l| costs.state_cost(t_next, a, l)).collect();
        for (th, slot) in row.iter_mut().enumerate() {
            let m = next.m[a * modes + th];
            let mut acc = 0.0;
            for (l, &p) in model.emission(t, th).iter().enumerate() {
                if p != 0.0 {
                    acc += p * (sc[l] + m);
                }
            }
            *slot = acc;
        }
    });
    u
}

/// `gamma * worst-case expectation of U(a, .)` for the row leaving `theta`.
pub(crate) fn discounted_worst(model: &ModeModel, t: usize, theta: usize, gamma: f64, u: &[f64]) -> Vec<f64> {
    let modes = model.num_modes();
    let set = model.chain_set(t, theta);
    u.par_chunks(modes).map(|row| gamma * set.worst_value(row)).collect()
}

#[inline]
fn better(v1: f64, i1: u32, v2: f64, i2: u32) -> bool {
    v1 < v2 || (v1 == v2 && i1 < i2)
}

/// Signed switching prices of orthant `k` at slot `t`.
pub(crate) fn orthant_prices(costs: &dyn StageCosts, t: usize, k: &Orthant) -> Vec<f64> {
    k.signs()
        .iter()
        .enumerate()
        .map(|(b, &s)| if s > 0 { costs.switch_on(t, b) } else { -costs.switch_off(t, b) })
        .collect()
}

#[inline]
fn linear(x: &[u32], s: &[f64]) -> f64 {
    x.iter().zip(s).map(|(&xb, &sb)| xb as f64 * sb).sum()
}

/// Exact backup for one mode: `(m, decision)` over the grid plus, per
/// orthant, the global minimizer of `h^k(a) = <a, s^k> + gw(a)`
/// (lexicographically smallest on ties).
pub(crate) fn backup_mode(
    costs: &dyn StageCosts,
    t: usize,
    gw: &[f64],
    digits: &[u32],
) -> (Vec<f64>, Vec<u32>, Vec<OrthantThreshold>) {
    let grid = costs.grid();
    let n = grid.len();
    let dims = grid.dims();
    let mut best_v = vec![f64::INFINITY; n];
    let mut best_a = vec![0u32; n];
    let mut r = vec![0.0; n];
    let mut arg = vec![0u32; n];
    let mut taus = Vec::with_capacity(1 << dims);
    for k in Orthant::all(dims) {
        let s = orthant_prices(costs, t, &k);
        let mut top = (f64::INFINITY, 0usize);
        for a in 0..n {
            r[a] = linear(&digits[a * dims..(a + 1) * dims], &s) + gw[a];
            arg[a] = a as u32;
            if r[a] < top.0 {
                top = (r[a], a);
            }
        }
        taus.push(OrthantThreshold {
            tau: grid.decode(top.1),
            value: top.0,
        });
        for (b, &sign) in k.signs().iter().enumerate() {
            let st = grid.stride(b);
            let cap = grid.caps()[b];
            if sign > 0 {
                // min over a_b >= x_b
                for idx in (0..n).rev() {
                    if digits[idx * dims + b] < cap && better(r[idx + st], arg[idx + st], r[idx], arg[idx]) {
                        r[idx] = r[idx + st];
                        arg[idx] = arg[idx + st];
                    }
                }
            } else {
                // min over a_b <= x_b
                for idx in 0..n {
                    if digits[idx * dims + b] > 0 && better(r[idx - st], arg[idx - st], r[idx], arg[idx]) {
                        r[idx] = r[idx - st];
                        arg[idx] = arg[idx - st];
                    }
                }
            }
        }
        for x in 0..n {
            let v = r[x] - linear(&digits[x * dims..(x + 1) * dims], &s);
            if better(v, arg[x], best_v[x], best_a[x]) {
                best_v[x] = v;
                best_a[x] = arg[x];
            }
        }
    }
    // re-evaluate at the chosen action so values do not depend on the
    // orthant bookkeeping
    let m = (0..n)
        .map(|x| {
            let a = best_a[x] as usize;
            costs.switching(
                t,
                &digits[x * dims..(x + 1) * dims],
                &digits[a * dims..(a + 1) * dims],
            ) + gw[a]
        })
        .collect();
    (m, best_a, taus)
}

/// One full backup over all modes at slot `t` (prices and chain rows of `t`),
/// given the envelope of the following slot.
pub(crate) fn backup_slot(
    costs: &dyn StageCosts,
    model: &ModeModel,
    t: usize,
    t_next: usize,
    gamma: f64,
    next: Option<&Envelope>,
    digits: &[u32],
) -> (Envelope, Vec<Vec<OrthantThreshold>>) {
    let n = costs.grid().len();
    let modes = model.num_modes();
    let u = continuation(costs, model, t, t_next, next);
    let per_mode: Vec<(Vec<f64>, Vec<u32>, Vec<OrthantThreshold>)> = (0..modes)
        .into_par_iter()
        .map(|th| {
            let gw = discounted_worst(model, t, th, gamma, &u);
            backup_mode(costs, t, &gw, digits)
        })
        .collect();
    let mut env = Envelope {
        m: vec![0.0; n * modes],
        decision: vec![0; n * modes],
    };
    let mut thresholds = Vec::with_capacity(modes);
    for (th, (m, d, tau)) in per_mode.into_iter().enumerate() {
        for x in 0..n {
            env.m[x * modes + th] = m[x];
            env.decision[x * modes + th] = d[x];
        }
        thresholds.push(tau);
    }
    (env, thresholds)
}
