use std::io::Write;

use super::backup::Envelope;
use super::costs::SharedCosts;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// One independently solved block group.
#[derive(Debug, Clone)]
pub(crate) struct Part {
    pub coords: Vec<usize>,
    pub grid: Grid,
    /// One envelope per slot.
    pub slots: Vec<Envelope>,
}

impl Part {
    #[inline]
    fn local(&self, x: &[u32]) -> usize {
        self.coords
            .iter()
            .enumerate()
            .map(|(i, &b)| x[b] as usize * self.grid.stride(i))
            .sum()
    }
}

/// Optimal values `v_t(x, l, theta) = state_cost(t, x, l) + m_t(x, theta)`,
/// where the envelope `m` is a sum over independently solved block groups.
/// Slots at or past the horizon have value zero unless the table is
/// stationary, in which case slot 0 is reused for every `t`.
#[derive(Clone)]
pub struct ValueTable {
    pub(crate) costs: SharedCosts,
    pub(crate) num_modes: usize,
    pub(crate) stationary: bool,
    pub(crate) parts: Vec<Part>,
}

impl std::fmt::Debug for ValueTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ValueTable")
            .field("horizon", &self.horizon())
            .field("num_modes", &self.num_modes)
            .field("stationary", &self.stationary)
            .field("groups", &self.parts.iter().map(|p| &p.coords).collect::<Vec<_>>())
            .finish()
    }
}

impl ValueTable {
    pub fn grid(&self) -> &Grid {
        self.costs.grid()
    }

    pub fn num_lambda(&self) -> usize {
        self.costs.num_lambda()
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn horizon(&self) -> usize {
        self.parts[0].slots.len()
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    pub fn costs(&self) -> &SharedCosts {
        &self.costs
    }

    #[inline]
    fn slot(&self, t: usize) -> Option<usize> {
        if self.stationary {
            Some(0)
        } else if t < self.horizon() {
            Some(t)
        } else {
            None
        }
    }

    /// Switching-plus-continuation part of the value.
    pub fn envelope(&self, t: usize, x: &[u32], theta: usize) -> f64 {
        let Some(s) = self.slot(t) else {
            return 0.0;
        };
        let mut acc = 0.0;
        for p in &self.parts {
            acc += p.slots[s].m[p.local(x) * self.num_modes + theta];
        }
        acc
    }

    pub fn value(&self, t: usize, x: &[u32], l: usize, theta: usize) -> f64 {
        if self.slot(t).is_none() {
            return 0.0;
        }
        let idx = self.grid().index(x);
        self.costs.state_cost(t, idx, l) + self.envelope(t, x, theta)
    }

    /// Value at flat state index `x`.
    pub fn value_at(&self, t: usize, x: usize, l: usize, theta: usize) -> f64 {
        if self.slot(t).is_none() {
            return 0.0;
        }
        self.value(t, &self.grid().decode(x), l, theta)
    }

    /// An optimal action from `(x, theta)` at slot `t`.
    pub fn decision(&self, t: usize, x: &[u32], theta: usize) -> Vec<u32> {
        let Some(s) = self.slot(t) else {
            return x.to_vec();
        };
        let mut a = x.to_vec();
        for p in &self.parts {
            let d = p.slots[s].decision[p.local(x) * self.num_modes + theta] as usize;
            for (i, &b) in p.coords.iter().enumerate() {
                a[b] = p.grid.digit(d, i);
            }
        }
        a
    }

    /// CSV with one row per `(slot, x, lambda index, mode)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let slots = if self.stationary { 1 } else { self.horizon() };
        self.write_slots_csv(out, 0..slots)
    }

    /// Like [`ValueTable::write_csv`], restricted to some slots.
    pub fn write_slots_csv<W: Write>(&self, out: W, slots: std::ops::Range<usize>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::validation(format!("cannot write values: {e}"));
        w.write_record(["slot", "x", "lambda", "mode", "value"]).map_err(err)?;
        let grid = self.grid().clone();
        for t in slots {
            for (idx, x) in grid.iter().enumerate() {
                let xs = x.iter().map(u32::to_string).collect::<Vec<_>>().join(";");
                for l in 0..self.num_lambda() {
                    let sc = self.costs.state_cost(t, idx, l);
                    for th in 0..self.num_modes {
                        w.write_record([
                            if self.stationary { "*".to_string() } else { t.to_string() },
                            xs.clone(),
                            l.to_string(),
                            th.to_string(),
                            (sc + self.envelope(t, &x, th)).to_string(),
                        ])
                        .map_err(err)?;
                    }
                }
            }
        }
        w.flush().map_err(|e| Error::validation(format!("cannot write values: {e}")))
    }
}

/// Values stored densely as `[slot][(x * num_lambda + l) * num_modes + theta]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseValues {
    pub grid: Grid,
    pub num_lambda: usize,
    pub num_modes: usize,
    pub slots: Vec<Vec<f64>>,
}

impl DenseValues {
    pub fn horizon(&self) -> usize {
        self.slots.len()
    }

    #[inline]
    pub fn get(&self, t: usize, x: usize, l: usize, theta: usize) -> f64 {
        match self.slots.get(t) {
            Some(s) => s[(x * self.num_lambda + l) * self.num_modes + theta],
            None => 0.0,
        }
    }

    /// Largest absolute difference to a factored table over all stored slots.
    pub fn max_abs_diff(&self, other: &ValueTable) -> f64 {
        let mut worst = 0.0f64;
        for t in 0..self.horizon() {
            for (idx, x) in self.grid.iter().enumerate() {
                for l in 0..self.num_lambda {
                    for th in 0..self.num_modes {
                        let d = (self.get(t, idx, l, th) - other.value(t, &x, l, th)).abs();
                        worst = worst.max(d);
                    }
                }
            }
        }
        worst
    }
}
