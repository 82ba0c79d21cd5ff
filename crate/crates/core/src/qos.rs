//! QoS cost of a capacity vector: the best load-balancing split of each job
//! class across the blocks allowed to serve it, under a per-block mean
//! response time `x_b / (r_b x_b - lambda^S_b)`.
//!
//! The inner problem decomposes over connected components of the serve mask.
//! Within a component, a strictly stable starting split comes from a
//! utilization-minimizing max-flow; projected gradient descent on the product
//! of per-class simplices then refines it, backtracking whenever an iterate
//! leaves the stability region.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{Component, DataCenterConfig};

/// Relative objective change below which descent stops.
pub const TOL_Q: f64 = 1e-6;
pub const MAX_ITERS: usize = 10_000;
pub const RESTARTS: usize = 5;
const RESTART_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// `B x J` traffic split; column `j` distributes class-`j` arrivals.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadBalancingMatrix {
    blocks: usize,
    classes: usize,
    data: Vec<f64>,
}

impl LoadBalancingMatrix {
    pub fn zeros(blocks: usize, classes: usize) -> Self {
        LoadBalancingMatrix {
            blocks,
            classes,
            data: vec![0.0; blocks * classes],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let blocks = rows.len();
        let classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::domain("load balancing rows have unequal lengths"));
        }
        Ok(LoadBalancingMatrix {
            blocks,
            classes,
            data: rows.into_iter().flatten().collect(),
        })
    }

    #[inline]
    pub fn get(&self, b: usize, j: usize) -> f64 {
        self.data[b * self.classes + j]
    }

    #[inline]
    pub fn set(&mut self, b: usize, j: usize, v: f64) {
        self.data[b * self.classes + j] = v;
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    /// Column-stochastic and zero wherever the serve mask forbids routing.
    pub fn is_admissible(&self, cfg: &DataCenterConfig, tol: f64) -> bool {
        if self.blocks != cfg.num_blocks() || self.classes != cfg.num_classes() {
            return false;
        }
        (0..self.classes).all(|j| {
            let mut s = 0.0;
            for b in 0..self.blocks {
                let q = self.get(b, j);
                if q < -tol || (!cfg.blocks[b].serves[j] && q.abs() > tol) {
                    return false;
                }
                s += q;
            }
            (s - 1.0).abs() <= tol
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QosResult {
    pub cost: f64,
    pub q_star: LoadBalancingMatrix,
    pub feasible: bool,
}

/// `lambda^S = Q lambda`.
pub fn block_rates(q: &LoadBalancingMatrix, lambda: &[f64]) -> Vec<f64> {
    (0..q.blocks)
        .map(|b| (0..q.classes).map(|j| q.get(b, j) * lambda[j]).sum())
        .collect()
}

/// Mean response time `x / (r x - lambda^S)`, or `None` when the block is
/// not stable.
pub fn block_response_time(x_b: u32, r_b: f64, lams_b: f64) -> Option<f64> {
    let cap = r_b * x_b as f64;
    if cap > lams_b {
        Some(x_b as f64 / (cap - lams_b))
    } else {
        None
    }
}

/// `sum_j C_j lambda_j (Q^T d^S)_j`, or `None` when some block receiving
/// traffic is unstable.
pub fn qos_cost_given_q(
    x: &[u32],
    lambda: &[f64],
    q: &LoadBalancingMatrix,
    cfg: &DataCenterConfig,
) -> Option<f64> {
    let rates = block_rates(q, lambda);
    let mut d = vec![0.0; cfg.num_blocks()];
    for (b, blk) in cfg.blocks.iter().enumerate() {
        if rates[b] > 0.0 {
            d[b] = block_response_time(x[b], blk.rate, rates[b])?;
        }
    }
    Some(
        cfg.classes
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let dj: f64 = (0..cfg.num_blocks()).map(|b| q.get(b, j) * d[b]).sum();
                c.qos_weight * lambda[j] * dj
            })
            .sum(),
    )
}

/// Penalty charged for capacity-infeasible `(x, lambda)`:
/// `1e6 * max_j C_j * max lambda-mass * horizon`.
pub fn big_m(cfg: &DataCenterConfig, support: &[Vec<f64>], horizon: usize) -> f64 {
    let cmax = cfg.classes.iter().map(|c| c.qos_weight).fold(0.0, f64::max);
    let mass = support
        .iter()
        .map(|l| l.iter().sum::<f64>())
        .fold(0.0, f64::max);
    1e6 * cmax * mass * horizon.max(1) as f64
}

// ---------------------------------------------------------------------------
// Per-component solver

struct Problem<'a> {
    weights: Vec<f64>,   // C_j * lambda_j per active class
    lambda: Vec<f64>,    // per active class
    allowed: Vec<Vec<usize>>, // per active class: local block ids
    cap: Vec<f64>,       // r_b x_b per local block
    servers: Vec<f64>,   // x_b per local block
    eps: f64,
    _cfg: &'a DataCenterConfig,
}

/// Split as one weight vector per active class, aligned with `allowed`.
type Split = Vec<Vec<f64>>;

impl Problem<'_> {
    fn loads(&self, q: &Split) -> Vec<f64> {
        let mut l = vec![0.0; self.cap.len()];
        for (j, col) in q.iter().enumerate() {
            for (&b, &v) in self.allowed[j].iter().zip(col) {
                l[b] += v * self.lambda[j];
            }
        }
        l
    }

    fn stable(&self, loads: &[f64]) -> bool {
        loads
            .iter()
            .zip(&self.cap)
            .all(|(&l, &c)| l <= 0.0 || c - l > self.eps)
    }

    /// Objective, or `None` outside the stability region.
    fn objective(&self, q: &Split) -> Option<f64> {
        let loads = self.loads(q);
        if !self.stable(&loads) {
            return None;
        }
        let d: Vec<f64> = (0..self.cap.len())
            .map(|b| {
                if self.servers[b] > 0.0 {
                    self.servers[b] / (self.cap[b] - loads[b])
                } else {
                    0.0
                }
            })
            .collect();
        Some(
            q.iter()
                .enumerate()
                .map(|(j, col)| {
                    let dj: f64 = self.allowed[j].iter().zip(col).map(|(&b, &v)| v * d[b]).sum();
                    self.weights[j] * dj
                })
                .sum(),
        )
    }

    fn gradient(&self, q: &Split) -> Split {
        let loads = self.loads(q);
        let nb = self.cap.len();
        let mut w = vec![0.0; nb];
        for (j, col) in q.iter().enumerate() {
            for (&b, &v) in self.allowed[j].iter().zip(col) {
                w[b] += self.weights[j] * v;
            }
        }
        let mut d = vec![0.0; nb];
        let mut dd = vec![0.0; nb];
        for b in 0..nb {
            if self.servers[b] > 0.0 {
                let u = self.cap[b] - loads[b];
                d[b] = self.servers[b] / u;
                dd[b] = self.servers[b] / (u * u);
            }
        }
        q.iter()
            .enumerate()
            .map(|(j, _)| {
                self.allowed[j]
                    .iter()
                    .map(|&b| self.weights[j] * d[b] + w[b] * dd[b] * self.lambda[j])
                    .collect()
            })
            .collect()
    }

    fn descend(&self, start: Split) -> (Split, f64) {
        let mut q = start;
        let mut f = self.objective(&q).expect("descent starts inside the stability region");
        let mut g = self.gradient(&q);
        let gmax = g.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut step = if gmax > 0.0 { 0.1 / gmax } else { 1.0 };
        for _ in 0..MAX_ITERS {
            let mut accepted = None;
            while step > 1e-300 {
                let cand: Split = q
                    .iter()
                    .zip(&g)
                    .map(|(col, gc)| {
                        let v: Vec<f64> = col.iter().zip(gc).map(|(a, b)| a - step * b).collect();
                        project_simplex(&v)
                    })
                    .collect();
                if let Some(fc) = self.objective(&cand) {
                    let mut lin = 0.0;
                    let mut sq = 0.0;
                    for ((c0, c1), gc) in q.iter().zip(&cand).zip(&g) {
                        for ((a, b), gg) in c0.iter().zip(c1).zip(gc) {
                            lin += gg * (b - a);
                            sq += (b - a) * (b - a);
                        }
                    }
                    if fc <= f + lin + sq / (2.0 * step) + 1e-15 * f.abs() {
                        let moved = q
                            .iter()
                            .zip(&cand)
                            .flat_map(|(c0, c1)| c0.iter().zip(c1).map(|(a, b)| (a - b).abs()))
                            .fold(0.0, f64::max);
                        accepted = Some((cand, fc, moved));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((cand, fc, moved)) = accepted else {
                break;
            };
            let change = (f - fc).abs() / f.abs().max(f64::MIN_POSITIVE);
            q = cand;
            f = fc;
            if change <= TOL_Q * 1e-4 || moved <= 1e-12 {
                break;
            }
            g = self.gradient(&q);
            step *= 2.0;
        }
        (q, f)
    }
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&vi| (vi - theta).max(0.0)).collect()
}

/// Tiny max-flow (Edmonds-Karp) on a dense graph with real capacities.
fn max_flow(cap: &mut [Vec<f64>], s: usize, t: usize, eps: f64) -> f64 {
    let n = cap.len();
    let mut total = 0.0;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[s] = s;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if prev[v] == usize::MAX && cap[u][v] > eps {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[t] == usize::MAX {
            return total;
        }
        let mut push = f64::INFINITY;
        let mut v = t;
        while v != s {
            push = push.min(cap[prev[v]][v]);
            v = prev[v];
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            cap[u][v] -= push;
            cap[v][u] += push;
            v = u;
        }
        total += push;
    }
}

/// Route all traffic with block capacities scaled by `alpha`; returns the
/// per-class flows when every class is fully routed.
fn route(p: &Problem<'_>, alpha: f64) -> Option<Split> {
    let nc = p.lambda.len();
    let nb = p.cap.len();
    let n = nc + nb + 2;
    let (s, t) = (n - 2, n - 1);
    let mut cap = vec![vec![0.0; n]; n];
    let total: f64 = p.lambda.iter().sum();
    for j in 0..nc {
        cap[s][j] = p.lambda[j];
        for &b in &p.allowed[j] {
            cap[j][nc + b] = f64::INFINITY;
        }
    }
    for b in 0..nb {
        cap[nc + b][t] = alpha * p.cap[b];
    }
    let eps = 1e-14 * total;
    let flow = max_flow(&mut cap, s, t, eps);
    if flow < total * (1.0 - 1e-12) {
        return None;
    }
    // flow on class->block edges is the reverse residual capacity
    Some(
        (0..nc)
            .map(|j| {
                let raw: Vec<f64> = p.allowed[j].iter().map(|&b| cap[nc + b][j]).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect(),
    )
}

struct ComponentSolution {
    cost: f64,
    feasible: bool,
    /// `(class, block, share)` triples for the routed classes.
    shares: Vec<(usize, usize, f64)>,
}

fn solve_component(
    x: &[u32],
    lambda: &[f64],
    cfg: &DataCenterConfig,
    comp: &Component,
    eps: f64,
) -> ComponentSolution {
    let mut shares = Vec::new();
    // classes without traffic: any admissible column, cost-neutral
    let mut active = Vec::new();
    for &j in &comp.classes {
        if lambda[j] > 0.0 {
            active.push(j);
        } else {
            let b = comp
                .blocks
                .iter()
                .copied()
                .find(|&b| cfg.blocks[b].serves[j] && x[b] > 0)
                .or_else(|| comp.blocks.iter().copied().find(|&b| cfg.blocks[b].serves[j]))
                .expect("every class has a serving block");
            shares.push((j, b, 1.0));
        }
    }
    if active.is_empty() {
        return ComponentSolution {
            cost: 0.0,
            feasible: true,
            shares,
        };
    }
    let allowed: Vec<Vec<usize>> = active
        .iter()
        .map(|&j| {
            comp.blocks
                .iter()
                .enumerate()
                .filter(|(_, &b)| cfg.blocks[b].serves[j] && x[b] > 0)
                .map(|(local, _)| local)
                .collect()
        })
        .collect();
    if allowed.iter().any(Vec::is_empty) {
        return ComponentSolution {
            cost: f64::INFINITY,
            feasible: false,
            shares,
        };
    }
    let p = Problem {
        weights: active
            .iter()
            .map(|&j| cfg.classes[j].qos_weight * lambda[j])
            .collect(),
        lambda: active.iter().map(|&j| lambda[j]).collect(),
        allowed,
        cap: comp
            .blocks
            .iter()
            .map(|&b| cfg.blocks[b].rate * x[b] as f64)
            .collect(),
        servers: comp.blocks.iter().map(|&b| x[b] as f64).collect(),
        eps,
        _cfg: cfg,
    };
    let finish = |split: Split, cost: f64, mut shares: Vec<(usize, usize, f64)>| {
        for (jj, col) in split.iter().enumerate() {
            for (&local, &v) in p.allowed[jj].iter().zip(col) {
                shares.push((active[jj], comp.blocks[local], v));
            }
        }
        ComponentSolution {
            cost,
            feasible: true,
            shares,
        }
    };

    // every active class has a single admissible block: nothing to optimize
    if p.allowed.iter().all(|a| a.len() == 1) {
        let split: Split = p.allowed.iter().map(|_| vec![1.0]).collect();
        return match p.objective(&split) {
            Some(c) => finish(split, c, shares),
            None => ComponentSolution {
                cost: f64::INFINITY,
                feasible: false,
                shares,
            },
        };
    }

    // smallest uniform utilization that still routes all traffic
    if route(&p, 1.0).is_none() {
        return ComponentSolution {
            cost: f64::INFINITY,
            feasible: false,
            shares,
        };
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if route(&p, mid).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let start = route(&p, 0.5 * (hi + 1.0)).expect("looser capacities still route");
    if p.objective(&start).is_none() {
        return ComponentSolution {
            cost: f64::INFINITY,
            feasible: false,
            shares,
        };
    }

    let (mut best_q, mut best_f) = p.descend(start.clone());
    if p.lambda.len() > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
        for _ in 0..RESTARTS {
            let random: Split = p
                .allowed
                .iter()
                .map(|a| {
                    let e: Vec<f64> = a.iter().map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
                    let s: f64 = e.iter().sum();
                    e.into_iter().map(|v| v / s).collect()
                })
                .collect();
            let mut beta = 1.0;
            let init = loop {
                let blend: Split = start
                    .iter()
                    .zip(&random)
                    .map(|(a, r)| a.iter().zip(r).map(|(u, v)| (1.0 - beta) * u + beta * v).collect())
                    .collect();
                if p.objective(&blend).is_some() {
                    break blend;
                }
                beta *= 0.5;
            };
            let (q, f) = p.descend(init);
            if f < best_f {
                best_f = f;
                best_q = q;
            }
        }
    }
    finish(best_q, best_f, shares)
}

fn stability_eps(cfg: &DataCenterConfig) -> f64 {
    1e-9 * cfg
        .blocks
        .iter()
        .map(|b| b.rate * b.servers as f64)
        .fold(0.0, f64::max)
}

/// Minimize the QoS cost over admissible load-balancing matrices. Infeasible
/// inputs yield `feasible = false` with an infinite cost.
pub fn optimize_load_balancing(x: &[u32], lambda: &[f64], cfg: &DataCenterConfig) -> QosResult {
    let eps = stability_eps(cfg);
    let mut q = LoadBalancingMatrix::zeros(cfg.num_blocks(), cfg.num_classes());
    let mut cost = 0.0;
    let mut feasible = true;
    for comp in cfg.components() {
        let sol = solve_component(x, lambda, cfg, &comp, eps);
        feasible &= sol.feasible;
        cost += sol.cost;
        for (j, b, v) in sol.shares {
            q.set(b, j, v);
        }
    }
    QosResult {
        cost: if feasible { cost } else { f64::INFINITY },
        q_star: q,
        feasible,
    }
}

/// QoS cost of one serve-mask component, or `None` when its traffic cannot
/// be served stably.
pub fn component_qos(x: &[u32], lambda: &[f64], cfg: &DataCenterConfig, comp: &Component) -> Option<f64> {
    let sol = solve_component(x, lambda, cfg, comp, stability_eps(cfg));
    sol.feasible.then_some(sol.cost)
}

/// Sum over serve-mask components of the optimal QoS cost, charging
/// `penalty` for each component whose traffic cannot be served. Returns the
/// cost and whether every component was feasible.
pub fn penalized_qos_cost(x: &[u32], lambda: &[f64], cfg: &DataCenterConfig, penalty: f64) -> (f64, bool) {
    let mut feasible = true;
    let cost = cfg
        .components()
        .iter()
        .map(|comp| match component_qos(x, lambda, cfg, comp) {
            Some(c) => c,
            None => {
                feasible = false;
                penalty
            }
        })
        .sum();
    (cost, feasible)
}

/// Memoized `c_QoS(x, lambda)` over the whole capacity box and a finite set of
/// arrival-rate vectors, stored per serve-mask component. A component whose
/// traffic cannot be served contributes the big-M penalty.
#[derive(Debug, Clone)]
pub struct QosTable {
    parts: Vec<ComponentTable>,
    num_lambda: usize,
    penalty: f64,
}

#[derive(Debug, Clone)]
struct ComponentTable {
    blocks: Vec<usize>,
    grid: Grid,
    /// `[x_local * num_lambda + l]`
    cost: Vec<f64>,
    feasible: Vec<bool>,
}

pub fn build_qos_table(support: &[Vec<f64>], cfg: &DataCenterConfig, penalty: f64) -> QosTable {
    QosTable::build(cfg, support, penalty)
}

impl QosTable {
    pub fn build(cfg: &DataCenterConfig, support: &[Vec<f64>], penalty: f64) -> Self {
        let eps = stability_eps(cfg);
        let nl = support.len();
        let parts = cfg
            .components()
            .into_iter()
            .map(|comp| {
                let grid = Grid::new(comp.blocks.iter().map(|&b| cfg.blocks[b].servers).collect());
                let cells: Vec<(f64, bool)> = (0..grid.len() * nl)
                    .into_par_iter()
                    .map(|cell| {
                        let local = grid.decode(cell / nl);
                        let mut x = vec![0u32; cfg.num_blocks()];
                        for (i, &b) in comp.blocks.iter().enumerate() {
                            x[b] = local[i];
                        }
                        let sol = solve_component(&x, &support[cell % nl], cfg, &comp, eps);
                        if sol.feasible {
                            (sol.cost, true)
                        } else {
                            (penalty, false)
                        }
                    })
                    .collect();
                ComponentTable {
                    blocks: comp.blocks,
                    grid,
                    cost: cells.iter().map(|c| c.0).collect(),
                    feasible: cells.iter().map(|c| c.1).collect(),
                }
            })
            .collect();
        QosTable {
            parts,
            num_lambda: nl,
            penalty,
        }
    }

    pub fn num_lambda(&self) -> usize {
        self.num_lambda
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn num_components(&self) -> usize {
        self.parts.len()
    }

    pub fn component_blocks(&self, c: usize) -> &[usize] {
        &self.parts[c].blocks
    }

    /// Local flat index of `x` inside component `c`.
    #[inline]
    pub fn local_index(&self, c: usize, x: &[u32]) -> usize {
        let part = &self.parts[c];
        part.blocks
            .iter()
            .enumerate()
            .map(|(i, &b)| x[b] as usize * part.grid.stride(i))
            .sum()
    }

    #[inline]
    pub fn component_cost(&self, c: usize, local: usize, lambda: usize) -> f64 {
        self.parts[c].cost[local * self.num_lambda + lambda]
    }

    #[inline]
    pub fn cost(&self, x: &[u32], lambda: usize) -> f64 {
        (0..self.parts.len())
            .map(|c| self.component_cost(c, self.local_index(c, x), lambda))
            .sum()
    }

    pub fn is_feasible(&self, x: &[u32], lambda: usize) -> bool {
        (0..self.parts.len()).all(|c| {
            self.parts[c].feasible[self.local_index(c, x) * self.num_lambda + lambda]
        })
    }

    /// The table of component `c` alone, for the configuration returned by
    /// `cfg.select_blocks(self.component_blocks(c))`.
    pub fn component_table(&self, c: usize) -> QosTable {
        let part = &self.parts[c];
        QosTable {
            parts: vec![ComponentTable {
                blocks: (0..part.blocks.len()).collect(),
                grid: part.grid.clone(),
                cost: part.cost.clone(),
                feasible: part.feasible.clone(),
            }],
            num_lambda: self.num_lambda,
            penalty: self.penalty,
        }
    }

    /// Discrete midpoint inequality `c(x - e_b) + c(x + e_b) >= 2 c(x)` along
    /// every axis, for every support point, up to a relative tolerance.
    pub fn is_axis_convex(&self, rel_tol: f64) -> bool {
        let nl = self.num_lambda;
        self.parts.iter().all(|part| {
            let g = &part.grid;
            (0..g.len()).all(|x| {
                (0..g.dims()).all(|b| {
                    let d = g.digit(x, b);
                    if d == 0 || d == g.caps()[b] {
                        return true;
                    }
                    let st = g.stride(b);
                    (0..nl).all(|l| {
                        let mid = part.cost[x * nl + l];
                        let lo = part.cost[(x - st) * nl + l];
                        let hi = part.cost[(x + st) * nl + l];
                        lo + hi - 2.0 * mid >= -rel_tol * (lo.abs() + hi.abs() + mid.abs())
                    })
                })
            })
        })
    }

    /// True when some cell needs the penalty even with every server on.
    pub fn infeasible_at_full_capacity(&self, cfg: &DataCenterConfig) -> bool {
        let top = cfg.caps();
        (0..self.num_lambda).any(|l| !self.is_feasible(&top, l))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{Block, EnergyShape, JobClass, PriceSchedule};

    pub(crate) fn config(blocks: Vec<(u32, f64, Vec<bool>)>, weights: Vec<f64>) -> DataCenterConfig {
        let nb = blocks.len();
        DataCenterConfig::new(
            blocks
                .into_iter()
                .enumerate()
                .map(|(b, (m, r, serves))| Block {
                    servers: m,
                    server_type: b,
                    rate: r,
                    serves,
                    energy_shape: EnergyShape::Linear,
                })
                .collect(),
            weights
                .into_iter()
                .enumerate()
                .map(|(j, w)| JobClass {
                    name: format!("c{j}"),
                    qos_weight: w,
                })
                .collect(),
            PriceSchedule::constant(nb, 0.0, 0.0, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn rates_examples() {
        let q = LoadBalancingMatrix::from_rows(vec![vec![1.0]]).unwrap();
        assert_eq!(block_rates(&q, &[4.0]), vec![4.0]);
        let q = LoadBalancingMatrix::from_rows(vec![vec![0.5], vec![0.5]]).unwrap();
        assert_eq!(block_rates(&q, &[2.0]), vec![1.0, 1.0]);
        assert_eq!(block_rates(&q, &[0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn response_time_examples() {
        assert_eq!(block_response_time(1, 2.0, 1.0), Some(1.0));
        assert_eq!(block_response_time(2, 1.0, 1.0), Some(2.0));
        assert_eq!(block_response_time(3, 2.0, 0.0), Some(0.5));
        assert_eq!(block_response_time(1, 1.0, 1.0), None);
        assert_eq!(block_response_time(0, 1.0, 0.5), None);
    }

    #[test]
    fn cost_given_q_examples() {
        let cfg = config(vec![(2, 1.0, vec![true])], vec![1.0]);
        let q = LoadBalancingMatrix::from_rows(vec![vec![1.0]]).unwrap();
        assert_eq!(qos_cost_given_q(&[2], &[0.0], &q, &cfg), Some(0.0));
        assert_eq!(qos_cost_given_q(&[2], &[1.0], &q, &cfg), Some(2.0));
        let cfg2 = config(vec![(1, 1.0, vec![true]), (1, 1.0, vec![true])], vec![1.0]);
        let q2 = LoadBalancingMatrix::from_rows(vec![vec![0.5], vec![0.5]]).unwrap();
        assert_eq!(qos_cost_given_q(&[1, 1], &[1.0], &q2, &cfg2), Some(2.0));
        assert_eq!(qos_cost_given_q(&[1, 1], &[2.0], &q2, &cfg2), None);
    }

    #[test]
    fn symmetric_split() {
        let cfg = config(vec![(1, 1.0, vec![true]), (1, 1.0, vec![true])], vec![1.0]);
        let res = optimize_load_balancing(&[1, 1], &[1.0], &cfg);
        assert!(res.feasible);
        assert!((res.cost - 2.0).abs() < 1e-9, "{}", res.cost);
        assert!((res.q_star.get(0, 0) - 0.5).abs() < 1e-4);
        assert!(res.q_star.is_admissible(&cfg, 1e-9));
    }

    #[test]
    fn no_capacity_is_infeasible() {
        let cfg = config(vec![(2, 1.0, vec![true]), (2, 1.0, vec![true])], vec![1.0]);
        let res = optimize_load_balancing(&[0, 0], &[0.5], &cfg);
        assert!(!res.feasible);
        let res = optimize_load_balancing(&[1, 1], &[2.0], &cfg);
        assert!(!res.feasible, "saturated capacity must be rejected");
    }

    #[test]
    fn mask_is_respected() {
        let cfg = config(
            vec![(2, 1.0, vec![true, true]), (2, 1.0, vec![false, true])],
            vec![1.0, 2.0],
        );
        let res = optimize_load_balancing(&[2, 2], &[0.7, 1.1], &cfg);
        assert!(res.feasible);
        assert_eq!(res.q_star.get(1, 0), 0.0);
        assert!(res.q_star.is_admissible(&cfg, 1e-9));
        let direct = qos_cost_given_q(&[2, 2], &[0.7, 1.1], &res.q_star, &cfg).unwrap();
        assert!((direct - res.cost).abs() <= 1e-9 * res.cost);
    }

    #[test]
    fn table_matches_fresh_calls() {
        let cfg = config(
            vec![(2, 1.0, vec![true, false]), (1, 2.0, vec![true, false]), (2, 1.5, vec![false, true])],
            vec![1.0, 0.5],
        );
        let support = vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![2.5, 1.0]];
        let table = QosTable::build(&cfg, &support, 1e9);
        for x in cfg.grid().iter() {
            for (l, lam) in support.iter().enumerate() {
                let fresh = optimize_load_balancing(&x, lam, &cfg);
                let cell = table.cost(&x, l);
                if fresh.feasible {
                    assert!((cell - fresh.cost).abs() <= 1e-12 * fresh.cost.max(1.0));
                    assert!(table.is_feasible(&x, l));
                } else {
                    assert!(!table.is_feasible(&x, l));
                }
                if l == 0 {
                    assert_eq!(cell, 0.0);
                }
            }
        }
        assert_eq!(table.cost(&[0, 0, 0], 1), 2e9);
    }

    #[test]
    fn projection_lands_on_simplex() {
        let p = project_simplex(&[0.3, 2.0, -1.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
        let p = project_simplex(&[0.5, 0.5]);
        assert_eq!(p, vec![0.5, 0.5]);
    }
}
