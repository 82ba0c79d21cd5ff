use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::{Action, Orthant};

/// Minimizer and minimum of the continuation term for one orthant.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthantThreshold {
    pub tau: Vec<u32>,
    pub value: f64,
}

/// Per slot and mode, one threshold vector per orthant for each block group.
///
/// Groups partition the blocks; the rule is applied to each group on its
/// own, with thresholds stored in group-local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdPolicy {
    groups: Vec<Vec<usize>>,
    num_modes: usize,
    stationary: bool,
    /// `[slot][mode][group][orthant id]`
    slots: Vec<Vec<Vec<Vec<OrthantThreshold>>>>,
}

impl ThresholdPolicy {
    pub fn new(
        groups: Vec<Vec<usize>>,
        num_modes: usize,
        stationary: bool,
        slots: Vec<Vec<Vec<Vec<OrthantThreshold>>>>,
    ) -> Result<Self> {
        let p = ThresholdPolicy {
            groups,
            num_modes,
            stationary,
            slots,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let mut seen: Vec<usize> = self.groups.iter().flatten().copied().collect();
        seen.sort_unstable();
        if seen.iter().enumerate().any(|(i, &b)| i != b) {
            return Err(Error::validation("policy groups must partition the blocks"));
        }
        if self.slots.is_empty() || (self.stationary && self.slots.len() != 1) {
            return Err(Error::validation("policy slot count does not match its kind"));
        }
        for (t, modes) in self.slots.iter().enumerate() {
            if modes.len() != self.num_modes {
                return Err(Error::validation(format!("policy slot {t} has {} modes", modes.len())));
            }
            for groups in modes {
                if groups.len() != self.groups.len() {
                    return Err(Error::validation(format!("policy slot {t} has wrong group count")));
                }
                for (g, ks) in groups.iter().enumerate() {
                    let dims = self.groups[g].len();
                    if ks.len() != 1 << dims || ks.iter().any(|k| k.tau.len() != dims) {
                        return Err(Error::validation(format!(
                            "policy slot {t} group {g} needs {} thresholds of length {dims}",
                            1 << dims
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_blocks(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    /// Slots covered; a stationary policy covers one slot reused forever.
    pub fn horizon(&self) -> usize {
        self.slots.len()
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    #[inline]
    fn slot(&self, t: usize) -> usize {
        t.min(self.slots.len() - 1)
    }

    /// Thresholds of `group` at slot `t` and mode `theta`, indexed by orthant id.
    pub fn thresholds(&self, t: usize, theta: usize, group: usize) -> &[OrthantThreshold] {
        &self.slots[self.slot(t)][theta][group]
    }

    pub fn set_threshold(&mut self, t: usize, theta: usize, group: usize, k: usize, tau: Vec<u32>) {
        let s = self.slot(t);
        self.slots[s][theta][group][k].tau = tau;
    }

    /// Threshold rule: per group, move to `tau^k` for the first orthant `k`
    /// (lexicographic order) with `k_b * (tau^k_b - x_b) >= 0` for every
    /// block, and keep `x` when no orthant qualifies.
    pub fn act(&self, t: usize, x: &[u32], theta: usize) -> Vec<u32> {
        let mut a = x.to_vec();
        let s = self.slot(t);
        for (g, blocks) in self.groups.iter().enumerate() {
            let local: Vec<u32> = blocks.iter().map(|&b| x[b]).collect();
            let hit = self.slots[s][theta][g].iter().enumerate().find(|(id, th)| {
                Orthant::from_id(*id, blocks.len()).contains_move(&local, &th.tau)
            });
            if let Some((_, th)) = hit {
                for (i, &b) in blocks.iter().enumerate() {
                    a[b] = th.tau[i];
                }
            }
        }
        a
    }

    /// CSV with one row per `(slot, mode, group, orthant)`. Stationary
    /// policies use `*` as their slot label.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::validation(format!("cannot write policy: {e}"));
        w.write_record(["slot", "mode", "group", "orthant", "tau", "value"])
            .map_err(err)?;
        for (t, modes) in self.slots.iter().enumerate() {
            let slot = if self.stationary { "*".to_string() } else { t.to_string() };
            for (th, groups) in modes.iter().enumerate() {
                for (g, ks) in groups.iter().enumerate() {
                    let dims = self.groups[g].len();
                    for (id, k) in ks.iter().enumerate() {
                        let signs = Orthant::from_id(id, dims)
                            .signs()
                            .iter()
                            .map(|&s| if s > 0 { "+" } else { "-" })
                            .collect::<String>();
                        w.write_record([
                            slot.clone(),
                            th.to_string(),
                            join(&self.groups[g]),
                            signs,
                            join(&k.tau),
                            k.value.to_string(),
                        ])
                        .map_err(err)?;
                    }
                }
            }
        }
        w.flush().map_err(|e| Error::validation(format!("cannot write policy: {e}")))
    }

    /// Inverse of [`ThresholdPolicy::write_csv`]; lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(input: R, origin: &std::path::Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut rows: Vec<(Option<usize>, usize, Vec<usize>, usize, Vec<u32>, f64)> = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| {
                parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != 6 {
                return Err(parse_err(line, format!("expected 6 fields, found {}", rec.len())));
            }
            let num = |s: &str| -> Result<usize> {
                s.trim().parse().map_err(|_| parse_err(line, format!("bad integer {s:?}")))
            };
            let slot = if rec[0].trim() == "*" { None } else { Some(num(&rec[0])?) };
            let group = split_list(&rec[2]).map_err(|m| parse_err(line, m))?;
            let signs = rec[3].trim();
            if signs.len() != group.len() || signs.chars().any(|c| c != '+' && c != '-') {
                return Err(parse_err(line, format!("bad orthant {signs:?}")));
            }
            let id = signs.chars().fold(0usize, |acc, c| (acc << 1) | usize::from(c == '+'));
            let tau = split_list(&rec[4]).map_err(|m| parse_err(line, m))?;
            let value: f64 = rec[5]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad value {:?}", &rec[5])))?;
            rows.push((slot, num(&rec[1])?, group, id, tau, value));
        }
        if rows.is_empty() {
            return Err(parse_err(0, "policy file has no rows".into()));
        }
        let stationary = rows[0].0.is_none();
        if rows.iter().any(|r| r.0.is_none() != stationary) {
            return Err(parse_err(0, "mixed stationary and slot rows".into()));
        }
        let horizon = rows.iter().map(|r| r.0.unwrap_or(0) + 1).max().unwrap_or(1);
        let num_modes = rows.iter().map(|r| r.1 + 1).max().unwrap_or(1);
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for r in &rows {
            if !groups.contains(&r.2) {
                groups.push(r.2.clone());
            }
        }
        let mut slots: Vec<Vec<Vec<Vec<Option<OrthantThreshold>>>>> = (0..horizon)
            .map(|_| {
                (0..num_modes)
                    .map(|_| groups.iter().map(|g| vec![None; 1 << g.len()]).collect())
                    .collect()
            })
            .collect();
        for (slot, th, group, id, tau, value) in rows {
            let g = groups.iter().position(|x| *x == group).expect("group registered");
            slots[slot.unwrap_or(0)][th][g][id] = Some(OrthantThreshold { tau, value });
        }
        let slots = slots
            .into_iter()
            .map(|m| {
                m.into_iter()
                    .map(|gs| {
                        gs.into_iter()
                            .map(|ks| ks.into_iter().collect::<Option<Vec<_>>>())
                            .collect::<Option<Vec<_>>>()
                    })
                    .collect::<Option<Vec<_>>>()
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| parse_err(0, "policy file misses some (slot, mode, orthant) rows".into()))?;
        Self::new(groups, num_modes, stationary, slots)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn split_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(';')
        .map(|p| p.trim().parse().map_err(|_| format!("bad list entry {p:?}")))
        .collect()
}

/// The threshold rule as an [`Action`].
pub fn apply_threshold_rule(x: &[u32], theta: usize, t: usize, policy: &ThresholdPolicy) -> Action {
    Action(policy.act(t, x, theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_block(tau_off: u32, tau_on: u32) -> ThresholdPolicy {
        // orthant id 0 is k = (-1), id 1 is k = (+1)
        ThresholdPolicy::new(
            vec![vec![0]],
            1,
            false,
            vec![vec![vec![vec![
                OrthantThreshold { tau: vec![tau_off], value: 0.0 },
                OrthantThreshold { tau: vec![tau_on], value: 0.0 },
            ]]]],
        )
        .unwrap()
    }

    #[test]
    fn terminal_band_keeps_state() {
        let p = single_block(3, 0);
        for x in 1..3 {
            assert_eq!(apply_threshold_rule(&[x], 0, 0, &p).0, vec![x]);
        }
        assert_eq!(p.act(0, &[0], 0), vec![0]);
        assert_eq!(p.act(0, &[3], 0), vec![3]);
    }

    #[test]
    fn moves_toward_thresholds() {
        let p = single_block(4, 2);
        assert_eq!(p.act(0, &[0], 0), vec![2]);
        assert_eq!(p.act(0, &[3], 0), vec![3]);
        assert_eq!(p.act(0, &[6], 0), vec![4]);
        assert_eq!(p.act(0, &[2], 0), vec![2]);
    }

    #[test]
    fn csv_round_trip() {
        let p = ThresholdPolicy::new(
            vec![vec![1], vec![0]],
            2,
            true,
            vec![(0..2)
                .map(|th| {
                    (0..2)
                        .map(|g| {
                            (0..2)
                                .map(|k| OrthantThreshold {
                                    tau: vec![(th + g + k) as u32],
                                    value: 0.1 * (th * 4 + g * 2 + k) as f64,
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()],
        )
        .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = ThresholdPolicy::read_csv(&buf[..], std::path::Path::new("p.csv")).unwrap();
        assert_eq!(back, p);
    }
}
