//! Closed-loop simulation of capacity policies and batch statistics of their
//! cumulative cost.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::modes::ModeModel;
use crate::mpc::MpcPolicy;
use crate::solver::{apply_threshold_rule, cumulate, sample_cumulative, SharedCosts, ThresholdPolicy, ValueTable};

/// A capacity controller: the on-counts for the next slot given the current
/// slot, on-counts, arrival-rate support index and mode.
pub trait Policy: Sync {
    fn label(&self) -> &str;

    fn act(&self, t: usize, x: &[u32], l: usize, theta: usize) -> Vec<u32>;
}

/// Threshold rule applied to stored thresholds.
#[derive(Debug, Clone)]
pub struct ThresholdRule {
    pub label: String,
    pub policy: ThresholdPolicy,
}

impl Policy for ThresholdRule {
    fn label(&self) -> &str {
        &self.label
    }

    fn act(&self, t: usize, x: &[u32], _l: usize, theta: usize) -> Vec<u32> {
        apply_threshold_rule(x, theta, t, &self.policy).0
    }
}

/// Minimizer recorded during backward induction.
#[derive(Debug, Clone)]
pub struct OptimalDecision {
    pub label: String,
    pub values: ValueTable,
}

impl Policy for OptimalDecision {
    fn label(&self) -> &str {
        &self.label
    }

    fn act(&self, t: usize, x: &[u32], _l: usize, theta: usize) -> Vec<u32> {
        self.values.decision(t, x, theta)
    }
}

/// Keeps the current capacity forever.
#[derive(Debug, Clone)]
pub struct HoldCapacity {
    pub label: String,
}

impl Policy for HoldCapacity {
    fn label(&self) -> &str {
        &self.label
    }

    fn act(&self, _t: usize, x: &[u32], _l: usize, _theta: usize) -> Vec<u32> {
        x.to_vec()
    }
}

impl Policy for MpcPolicy {
    fn label(&self) -> &str {
        "mpc"
    }

    fn act(&self, t: usize, x: &[u32], _l: usize, theta: usize) -> Vec<u32> {
        self.plan(t, x, theta).action
    }
}

/// How the next mode is drawn.
#[derive(Debug, Clone)]
pub enum Dynamics {
    /// Nominal chain rows.
    Nominal,
    /// Rows of the uncertainty sets that maximize the expected future value
    /// under the given solved values.
    Adversarial(ValueTable),
}

/// Everything a rollout needs besides the policy.
#[derive(Clone)]
pub struct Environment {
    pub model: ModeModel,
    pub costs: SharedCosts,
    pub dynamics: Dynamics,
}

/// `(x, lambda support index, mode)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimState {
    pub x: Vec<u32>,
    pub l: usize,
    pub theta: usize,
}

/// All servers on, in the most likely mode of the stationary distribution,
/// at that mode's most likely arrival rates.
pub fn default_start(env: &Environment) -> SimState {
    let pi = env.model.stationary_distribution();
    let theta = argmax(&pi);
    SimState {
        x: env.costs.grid().top(),
        l: argmax(env.model.emission(0, theta)),
        theta,
    }
}

fn argmax(v: &[f64]) -> usize {
    // first maximum
    let mut best = 0;
    for (i, p) in v.iter().enumerate() {
        if *p > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub t: usize,
    pub state: SimState,
    pub action: Vec<u32>,
    pub cost: f64,
    pub next_theta: usize,
    pub next_l: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub label: String,
    pub seed: u64,
    pub run: u64,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn total_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.cost).sum()
    }
}

fn check_env(env: &Environment, s0: &SimState) -> Result<()> {
    env.costs.grid().check(&s0.x)?;
    if env.model.num_lambda() != env.costs.num_lambda() {
        return Err(Error::domain("mode model and costs disagree on the arrival-rate support"));
    }
    if s0.l >= env.model.num_lambda() || s0.theta >= env.model.num_modes() {
        return Err(Error::domain("start state outside the model"));
    }
    Ok(())
}

/// The row the next mode is drawn from, slot `t`, mode `theta`, action `a`.
fn transition_row(env: &Environment, t: usize, theta: usize, a: &[u32]) -> Vec<f64> {
    let set = env.model.chain_set(t, theta);
    match &env.dynamics {
        Dynamics::Nominal => set.nominal().to_vec(),
        Dynamics::Adversarial(values) => {
            let u: Vec<f64> = (0..env.model.num_modes())
                .map(|th| {
                    env.model
                        .emission(t, th)
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| **p != 0.0)
                        .map(|(l, p)| p * values.value(t + 1, a, l, th))
                        .sum()
                })
                .collect();
            set.worst_case(&u).1
        }
    }
}

/// Roll `policy` forward `h` slots from `s0`. Each slot draws exactly two
/// uniforms (next mode, next arrival rates), so runs sharing a random
/// stream see the same noise whatever the policy does.
pub fn sample_trajectory<R: Rng>(
    env: &Environment,
    policy: &dyn Policy,
    s0: &SimState,
    h: usize,
    rng: &mut R,
) -> Result<Vec<Step>> {
    check_env(env, s0)?;
    let grid = env.costs.grid();
    let mut s = s0.clone();
    let mut steps = Vec::with_capacity(h);
    for t in 0..h {
        let a = policy.act(t, &s.x, s.l, s.theta);
        grid.check(&a)?;
        let cost = env.costs.state_cost(t, grid.index(&s.x), s.l) + env.costs.switching(t, &s.x, &a);
        let row = cumulate(&transition_row(env, t, s.theta, &a));
        let next_theta = sample_cumulative(&row, rng.gen());
        let next_l = sample_cumulative(&cumulate(env.model.emission(t, next_theta)), rng.gen());
        steps.push(Step {
            t,
            state: s.clone(),
            action: a.clone(),
            cost,
            next_theta,
            next_l,
        });
        s = SimState {
            x: a,
            l: next_l,
            theta: next_theta,
        };
    }
    Ok(steps)
}

/// Generator for run `run` of a batch seeded with `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// Per-slot statistics of the cumulative cost over a batch of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub label: String,
    /// Cumulative cost mean after each slot.
    pub mean: Vec<f64>,
    /// Sample standard deviation of the cumulative cost after each slot.
    pub std: Vec<f64>,
    /// Final cumulative cost of each run.
    pub finals: Vec<f64>,
}

/// `n_runs` trajectories of `h` slots; run `i` uses random stream `i` of
/// `seed`.
pub fn run_batch(
    env: &Environment,
    policy: &dyn Policy,
    s0: &SimState,
    n_runs: usize,
    h: usize,
    seed: u64,
) -> Result<BatchStats> {
    if n_runs < 2 {
        return Err(Error::domain("a batch needs at least two runs"));
    }
    check_env(env, s0)?;
    let runs: Vec<Vec<f64>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|run| {
            let steps = sample_trajectory(env, policy, s0, h, &mut run_rng(seed, run))?;
            let mut acc = 0.0;
            Ok(steps
                .iter()
                .map(|s| {
                    acc += s.cost;
                    acc
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let n = n_runs as f64;
    let mean: Vec<f64> = (0..h).map(|t| runs.iter().map(|r| r[t]).sum::<f64>() / n).collect();
    let std = (0..h)
        .map(|t| (runs.iter().map(|r| (r[t] - mean[t]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
        .collect();
    Ok(BatchStats {
        label: policy.label().to_string(),
        mean,
        std,
        finals: runs.iter().map(|r| r.last().copied().unwrap_or(0.0)).collect(),
    })
}

/// Batch statistics of several policies on common random numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub horizon: usize,
    pub stats: Vec<BatchStats>,
}

impl Comparison {
    /// Mean and standard error of the per-run final cost difference
    /// `stats[i] - stats[j]`.
    pub fn paired_difference(&self, i: usize, j: usize) -> (f64, f64) {
        let d: Vec<f64> = self.stats[i]
            .finals
            .iter()
            .zip(&self.stats[j].finals)
            .map(|(a, b)| a - b)
            .collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    /// Band data: per policy, `horizon` slot rows with the mean and the one-
    /// and two-standard-deviation bands, then one `final` summary row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<comparison>", e);
        writeln!(out, "policy,slot,mean,std,lo1,hi1,lo2,hi2").map_err(io)?;
        for s in &self.stats {
            for t in 0..self.horizon {
                let (m, d) = (s.mean[t], s.std[t]);
                writeln!(
                    out,
                    "{},{},{m},{d},{},{},{},{}",
                    s.label,
                    t + 1,
                    m - d,
                    m + d,
                    m - 2.0 * d,
                    m + 2.0 * d
                )
                .map_err(io)?;
            }
        }
        for s in &self.stats {
            let (m, d) = match (s.mean.last(), s.std.last()) {
                (Some(m), Some(d)) => (*m, *d),
                _ => (0.0, 0.0),
            };
            writeln!(out, "{},final,{m},{d},{},{},{},{}", s.label, m - d, m + d, m - 2.0 * d, m + 2.0 * d)
                .map_err(io)?;
        }
        Ok(())
    }
}

/// Run every policy on the same random streams.
pub fn compare_policies(
    env: &Environment,
    policies: &[&dyn Policy],
    s0: &SimState,
    n_runs: usize,
    h: usize,
    seed: u64,
) -> Result<Comparison> {
    if policies.len() < 2 {
        return Err(Error::domain("comparison needs at least two policies"));
    }
    let stats = policies
        .iter()
        .map(|p| run_batch(env, *p, s0, n_runs, h, seed))
        .collect::<Result<_>>()?;
    Ok(Comparison { horizon: h, stats })
}

/// One row per slot: `run,slot,x,lambda,mode,action,cost,cumulative,next_mode,next_lambda`,
/// with vectors joined by `;`.
pub fn write_trajectories_csv<W: Write>(trajectories: &[Trajectory], mut out: W) -> Result<()> {
    let io = |e| Error::io("<trajectory>", e);
    let join = |v: &[u32]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    writeln!(out, "policy,run,slot,x,lambda,mode,action,cost,cumulative,next_mode,next_lambda").map_err(io)?;
    for tr in trajectories {
        let mut acc = 0.0;
        for s in &tr.steps {
            acc += s.cost;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{acc},{},{}",
                tr.label,
                tr.run,
                s.t,
                join(&s.state.x),
                s.state.l,
                s.state.theta,
                join(&s.action),
                s.cost,
                s.next_theta,
                s.next_l
            )
            .map_err(io)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{random_instance, InstanceSpec};
    use crate::solver::{backward_induction, FullCosts};
    use std::sync::Arc;

    fn env(seed: u64) -> (Environment, usize) {
        let inst = random_instance(seed, &InstanceSpec::default());
        let costs: SharedCosts = Arc::new(FullCosts::new(&inst.config, inst.model.support(), inst.horizon));
        (
            Environment {
                model: inst.model,
                costs,
                dynamics: Dynamics::Nominal,
            },
            inst.horizon,
        )
    }

    #[test]
    fn chaining_and_reproducibility() {
        let (env, h) = env(4);
        let s0 = default_start(&env);
        let hold = HoldCapacity { label: "hold".into() };
        let a = sample_trajectory(&env, &hold, &s0, h, &mut run_rng(9, 0)).unwrap();
        let b = sample_trajectory(&env, &hold, &s0, h, &mut run_rng(9, 0)).unwrap();
        assert_eq!(a, b);
        for w in a.windows(2) {
            assert_eq!(w[1].state.x, w[0].action);
            assert_eq!(w[1].state.theta, w[0].next_theta);
        }
    }

    #[test]
    fn single_slot_cost_is_stage_cost() {
        let (env, _) = env(7);
        let s0 = default_start(&env);
        let sol = backward_induction(&env.model, env.costs.clone(), 2, 0.0).unwrap();
        let opt = OptimalDecision {
            label: "opt".into(),
            values: sol.values,
        };
        let steps = sample_trajectory(&env, &opt, &s0, 1, &mut run_rng(1, 0)).unwrap();
        let a = &steps[0].action;
        let grid = env.costs.grid();
        let expect = env.costs.state_cost(0, grid.index(&s0.x), s0.l) + env.costs.switching(0, &s0.x, a);
        assert_eq!(steps[0].cost, expect);
    }

    #[test]
    fn identical_policies_identical_columns() {
        let (env, h) = env(11);
        let s0 = default_start(&env);
        let p = HoldCapacity { label: "a".into() };
        let q = HoldCapacity { label: "b".into() };
        let cmp = compare_policies(&env, &[&p, &q], &s0, 20, h, 5).unwrap();
        assert_eq!(cmp.stats[0].mean, cmp.stats[1].mean);
        assert_eq!(cmp.stats[0].std, cmp.stats[1].std);
        assert_eq!(cmp.paired_difference(0, 1), (0.0, 0.0));
        let mut buf = Vec::new();
        cmp.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("a,")).count(), h + 1);
    }
}
