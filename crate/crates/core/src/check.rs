//! Invariant suite run on a shrunken copy of an instance: QoS convexity
//! probe, exact-versus-flat value agreement, threshold-rule optimality,
//! value convexity and orthant dominance of the signed switching form.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{signed_switch_unchecked, Action, DataCenterConfig, Orthant};
use crate::modes::ModeModel;
use crate::solver::{
    action_value, apply_threshold_rule, backward_induction, flat_backward_induction, DenseValues, FullCosts,
    SharedCosts,
};

/// Agreement tolerance between the two backward inductions.
pub const ORACLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    /// Cap on servers per block in the reduced instance.
    pub max_servers: u32,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            max_servers: 3,
            horizon: 3,
            gamma: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub reduced_servers: Vec<u32>,
    pub qos_axis_convex: bool,
    pub oracle_max_diff: f64,
    /// `(t, x, l, theta)` cells where the threshold rule's action is not a
    /// Bellman minimizer.
    pub rule_mismatches: usize,
    /// Axis midpoint inequalities of the values that fail.
    pub value_convexity_violations: usize,
    /// `(k, x, a)` triples where the signed form exceeds the switching cost,
    /// or differs from it inside the matching orthant.
    pub dominance_violations: usize,
    pub cells_checked: usize,
}

impl CheckReport {
    pub fn oracle_ok(&self) -> bool {
        self.oracle_max_diff <= ORACLE_TOL
    }

    /// The invariants that hold on every instance.
    pub fn passed(&self) -> bool {
        self.oracle_ok() && self.dominance_violations == 0
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<check>", e);
        let servers = self
            .reduced_servers
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(";");
        writeln!(out, "check,value,ok").map_err(io)?;
        writeln!(out, "reduced_servers,{servers},true").map_err(io)?;
        writeln!(out, "qos_axis_convex,{},{}", self.qos_axis_convex, self.qos_axis_convex).map_err(io)?;
        writeln!(out, "oracle_max_diff,{:e},{}", self.oracle_max_diff, self.oracle_ok()).map_err(io)?;
        writeln!(out, "rule_mismatches,{},{}", self.rule_mismatches, self.rule_mismatches == 0).map_err(io)?;
        writeln!(
            out,
            "value_convexity_violations,{},{}",
            self.value_convexity_violations,
            self.value_convexity_violations == 0
        )
        .map_err(io)?;
        writeln!(
            out,
            "dominance_violations,{},{}",
            self.dominance_violations,
            self.dominance_violations == 0
        )
        .map_err(io)?;
        writeln!(out, "cells_checked,{},true", self.cells_checked).map_err(io)?;
        Ok(())
    }
}

/// Cap every block at `max_servers` and scale each class's rates by the
/// fraction of its serving capacity that remains, so loads stay comparable.
pub fn reduce_instance(cfg: &DataCenterConfig, model: &ModeModel, max_servers: u32) -> Result<(DataCenterConfig, ModeModel)> {
    if max_servers == 0 {
        return Err(Error::domain("reduced instance needs at least one server per block"));
    }
    let mut small = cfg.clone();
    for b in &mut small.blocks {
        b.servers = b.servers.min(max_servers);
    }
    let capacity = |c: &DataCenterConfig, j: usize| -> f64 {
        c.blocks
            .iter()
            .filter(|b| b.serves[j])
            .map(|b| b.rate * b.servers as f64)
            .sum()
    };
    let scale: Vec<f64> = (0..cfg.num_classes())
        .map(|j| {
            let full = capacity(cfg, j);
            if full > 0.0 {
                capacity(&small, j) / full
            } else {
                1.0
            }
        })
        .collect();
    let support = model
        .support()
        .iter()
        .map(|p| p.iter().zip(&scale).map(|(v, s)| v * s).collect())
        .collect();
    let small = DataCenterConfig::new(small.blocks, small.classes, small.prices)?;
    Ok((small, model.with_support(support)?))
}

/// Midpoint violations `v(x - e) + v(x + e) < 2 v(x)` along every axis,
/// with a tolerance relative to the magnitudes involved (big-M values make
/// an absolute tolerance meaningless).
pub fn value_convexity_violations(values: &DenseValues, rel_tol: f64) -> usize {
    let grid = &values.grid;
    let mut bad = 0;
    for t in 0..values.horizon() {
        for (xi, x) in grid.iter().enumerate() {
            for (b, &xb) in x.iter().enumerate() {
                if xb == 0 || xb == grid.caps()[b] {
                    continue;
                }
                let (lo, hi) = (xi - grid.stride(b), xi + grid.stride(b));
                for l in 0..values.num_lambda {
                    for th in 0..values.num_modes {
                        let (a, m, c) = (values.get(t, lo, l, th), values.get(t, xi, l, th), values.get(t, hi, l, th));
                        let tol = rel_tol * (a.abs() + m.abs() + c.abs()).max(1.0);
                        if a + c - 2.0 * m < -tol {
                            bad += 1;
                        }
                    }
                }
            }
        }
    }
    bad
}

fn dominance_violations(cfg: &DataCenterConfig, horizon: usize) -> usize {
    let grid = cfg.grid();
    let nb = cfg.num_blocks();
    let mut bad = 0;
    for t in 0..horizon.max(1) {
        for x in grid.iter() {
            for a in grid.iter() {
                let full = cfg.switching_unchecked(t, &x, &a);
                for k in Orthant::all(nb) {
                    let signed = signed_switch_unchecked(t, k.signs(), &x, &a, cfg);
                    let tol = 1e-12 * full.abs().max(1.0);
                    if signed > full + tol || (k.contains_move(&x, &a) && (signed - full).abs() > tol) {
                        bad += 1;
                    }
                }
            }
        }
    }
    bad
}

/// Run the suite on the instance reduced per `opts`.
pub fn run_checks(cfg: &DataCenterConfig, model: &ModeModel, opts: &CheckOptions) -> Result<CheckReport> {
    if opts.horizon == 0 {
        return Err(Error::domain("check horizon must be positive"));
    }
    let (small, model) = reduce_instance(cfg, model, opts.max_servers)?;
    let full = FullCosts::new(&small, model.support(), opts.horizon);
    let qos_axis_convex = full.qos_table().is_axis_convex(ORACLE_TOL);
    let costs: SharedCosts = Arc::new(full);
    let sol = backward_induction(&model, costs.clone(), opts.horizon, opts.gamma)?;
    let flat = flat_backward_induction(&model, costs.as_ref(), opts.horizon, opts.gamma)?;
    let grid = costs.grid().clone();
    let mut rule_mismatches = 0;
    let mut cells = 0;
    for t in 0..opts.horizon {
        for (xi, x) in grid.iter().enumerate() {
            for th in 0..model.num_modes() {
                let Action(a) = apply_threshold_rule(&x, th, t, &sol.policy);
                for l in 0..model.num_lambda() {
                    cells += 1;
                    let best = flat.get(t, xi, l, th);
                    let got = action_value(&model, costs.as_ref(), &flat, opts.gamma, t, &x, l, th, &a);
                    if got - best > ORACLE_TOL * best.abs().max(1.0) {
                        rule_mismatches += 1;
                    }
                }
            }
        }
    }
    Ok(CheckReport {
        reduced_servers: grid.caps().to_vec(),
        qos_axis_convex,
        oracle_max_diff: flat.max_abs_diff(&sol.values),
        rule_mismatches,
        value_convexity_violations: value_convexity_violations(&flat, ORACLE_TOL),
        dominance_violations: dominance_violations(&small, opts.horizon),
        cells_checked: cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{reference_config, reference_traffic_model};

    #[test]
    fn reference_instance_reduces_and_passes() {
        let cfg = reference_config();
        let model = reference_traffic_model();
        let (small, reduced) = reduce_instance(&cfg, &model, 2).unwrap();
        assert_eq!(small.caps(), vec![2, 2, 2, 2]);
        // block 0 keeps 2 of 30 servers
        assert!((reduced.support()[0][0] - model.support()[0][0] * 2.0 / 30.0).abs() < 1e-6);
        let report = run_checks(&cfg, &model, &CheckOptions { max_servers: 2, horizon: 2, gamma: 0.9 }).unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
