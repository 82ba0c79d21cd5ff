//! Hidden load-intensity modes: a Markov chain over modes whose rows are only
//! known up to an uncertainty set, and per-mode categorical emissions over a
//! finite support of arrival-rate vectors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::{IntervalSet, LikelihoodSet, UncertaintySet};

const ROW_TOL: f64 = 1e-12;

/// Which uncertainty sets the solver should use for the chain rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Robustness {
    /// Singleton sets at the nominal rows.
    Off,
    /// The interval sets carried by the model.
    Interval,
    /// KL balls of the given radius around the nominal rows.
    Kl(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeModel {
    /// Arrival-rate vectors, one per support point.
    support: Vec<Vec<f64>>,
    /// `[slot][mode][support point]`; a single slot means time-invariant.
    emission: Vec<Vec<Vec<f64>>>,
    /// `[slot][mode]`; a single slot means time-invariant.
    chain: Vec<Vec<UncertaintySet>>,
}

impl ModeModel {
    pub fn new(
        support: Vec<Vec<f64>>,
        emission: Vec<Vec<Vec<f64>>>,
        chain: Vec<Vec<UncertaintySet>>,
    ) -> Result<Self> {
        let m = ModeModel {
            support,
            emission,
            chain,
        };
        m.validate()?;
        Ok(m)
    }

    /// Time-invariant model with interval sets.
    pub fn stationary(
        support: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
        chain: Vec<IntervalSet>,
    ) -> Result<Self> {
        Self::new(
            support,
            vec![emission],
            vec![chain.into_iter().map(UncertaintySet::Interval).collect()],
        )
    }

    fn validate(&self) -> Result<()> {
        if self.support.is_empty() {
            return Err(Error::validation("arrival-rate support is empty"));
        }
        let nj = self.support[0].len();
        for (l, p) in self.support.iter().enumerate() {
            if p.len() != nj {
                return Err(Error::validation(format!(
                    "support point {l} has {} rates, expected {nj}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::validation(format!("support point {l} has invalid rates")));
            }
        }
        if self.chain.is_empty() || self.emission.is_empty() {
            return Err(Error::validation("mode model needs at least one slot"));
        }
        let nm = self.chain[0].len();
        if nm == 0 {
            return Err(Error::validation("mode model has no modes"));
        }
        for (t, rows) in self.chain.iter().enumerate() {
            if rows.len() != nm {
                return Err(Error::validation(format!("chain slot {t} has {} rows", rows.len())));
            }
            for (th, set) in rows.iter().enumerate() {
                if set.len() != nm {
                    return Err(Error::validation(format!(
                        "chain row ({t}, {th}) has {} entries, expected {nm}",
                        set.len()
                    )));
                }
            }
        }
        for (t, rows) in self.emission.iter().enumerate() {
            if rows.len() != nm {
                return Err(Error::validation(format!(
                    "emission slot {t} has {} rows, expected {nm}",
                    rows.len()
                )));
            }
            for (th, row) in rows.iter().enumerate() {
                if row.len() != self.support.len() {
                    return Err(Error::validation(format!(
                        "emission row ({t}, {th}) has {} entries, expected {}",
                        row.len(),
                        self.support.len()
                    )));
                }
                let s: f64 = row.iter().sum();
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (s - 1.0).abs() > ROW_TOL * row.len() as f64 {
                    return Err(Error::validation(format!(
                        "emission row ({t}, {th}) is not a distribution (sum {s})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_modes(&self) -> usize {
        self.chain[0].len()
    }

    pub fn num_lambda(&self) -> usize {
        self.support.len()
    }

    pub fn num_classes(&self) -> usize {
        self.support[0].len()
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    /// Emission row of `theta` at slot `t` (clamped to the last slot).
    #[inline]
    pub fn emission(&self, t: usize, theta: usize) -> &[f64] {
        &self.emission[t.min(self.emission.len() - 1)][theta]
    }

    /// Uncertainty set of the row leaving `theta` at slot `t`.
    #[inline]
    pub fn chain_set(&self, t: usize, theta: usize) -> &UncertaintySet {
        &self.chain[t.min(self.chain.len() - 1)][theta]
    }

    #[inline]
    pub fn nominal_row(&self, t: usize, theta: usize) -> &[f64] {
        self.chain_set(t, theta).nominal()
    }

    pub fn is_stationary(&self) -> bool {
        self.chain.len() == 1 && self.emission.len() == 1
    }

    /// True when every chain set is a single row.
    pub fn is_nominal(&self) -> bool {
        self.chain.iter().flatten().all(UncertaintySet::is_singleton)
    }

    /// Largest total arrival rate over the support.
    pub fn max_mass(&self) -> f64 {
        self.support
            .iter()
            .map(|p| p.iter().sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Same emissions and nominal rows with different chain sets.
    pub fn with_robustness(&self, robustness: Robustness) -> Result<Self> {
        let chain = self
            .chain
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|set| {
                        let nominal = set.nominal().to_vec();
                        Ok(match robustness {
                            Robustness::Off => UncertaintySet::Interval(IntervalSet::singleton(nominal)?),
                            Robustness::Interval => match set {
                                UncertaintySet::Interval(s) => UncertaintySet::Interval(s.clone()),
                                UncertaintySet::Likelihood(_) => {
                                    UncertaintySet::Interval(IntervalSet::singleton(nominal)?)
                                }
                            },
                            Robustness::Kl(r) => UncertaintySet::Likelihood(LikelihoodSet::new(nominal, r)?),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.support.clone(), self.emission.clone(), chain)
    }

    /// Same chain and emissions over a replacement support of equal size.
    pub fn with_support(&self, support: Vec<Vec<f64>>) -> Result<Self> {
        if support.len() != self.support.len() {
            return Err(Error::domain("replacement support must keep the number of points"));
        }
        Self::new(support, self.emission.clone(), self.chain.clone())
    }

    /// Widen every interval set by `delta` on both sides (clipped to [0, 1]).
    pub fn widened(&self, delta: f64) -> Self {
        let chain = self
            .chain
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|set| match set {
                        UncertaintySet::Interval(s) => UncertaintySet::Interval(s.widen(delta)),
                        other => other.clone(),
                    })
                    .collect()
            })
            .collect();
        ModeModel {
            support: self.support.clone(),
            emission: self.emission.clone(),
            chain,
        }
    }

    /// Stationary distribution of the nominal chain at slot 0, by power
    /// iteration on the lazy chain (which shares it and is aperiodic).
    pub fn stationary_distribution(&self) -> Vec<f64> {
        let n = self.num_modes();
        let mut p = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let mut next = vec![0.0; n];
            for (i, &pi) in p.iter().enumerate() {
                for (j, &q) in self.nominal_row(0, i).iter().enumerate() {
                    next[j] += 0.5 * pi * q;
                }
                next[i] += 0.5 * pi;
            }
            let diff = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            p = next;
            if diff < 1e-15 {
                break;
            }
        }
        let s: f64 = p.iter().sum();
        p.iter().map(|v| v / s).collect()
    }

    /// Mean arrival-rate vector of each mode at slot 0.
    pub fn mode_means(&self) -> Vec<Vec<f64>> {
        (0..self.num_modes())
            .map(|th| {
                let mut mean = vec![0.0; self.num_classes()];
                for (p, point) in self.emission(0, th).iter().zip(&self.support) {
                    for (m, v) in mean.iter_mut().zip(point) {
                        *m += p * v;
                    }
                }
                mean
            })
            .collect()
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        Ok(Self::parse_with_classes(text, origin)?.0)
    }

    /// Parse a model file, also returning the class names it lists.
    pub fn parse_with_classes(text: &str, origin: &Path) -> Result<(Self, Vec<String>)> {
        let file: ModeFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e
                .span()
                .map_or(0, |s| text[..s.start].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
        let n = file.chain.nominal.len();
        let chain = (0..n)
            .map(|th| {
                let nominal = file.chain.nominal[th].clone();
                Ok(match &file.intervals {
                    Some(IntervalsSection::Interval { lo, hi }) => {
                        let (lo, hi) = match (lo.get(th), hi.get(th)) {
                            (Some(l), Some(h)) => (l.clone(), h.clone()),
                            _ => {
                                return Err(Error::validation(format!(
                                    "[intervals] lacks bounds for mode {th}"
                                )))
                            }
                        };
                        UncertaintySet::Interval(IntervalSet::new(nominal, lo, hi)?)
                    }
                    Some(IntervalsSection::Kl { radius }) => {
                        UncertaintySet::Likelihood(LikelihoodSet::new(nominal, *radius)?)
                    }
                    None => UncertaintySet::Interval(IntervalSet::singleton(nominal)?),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                Error::Domain(m) => Error::Validation(m),
                other => other,
            })?;
        let classes = file.lambda_support.classes;
        if !classes.is_empty() && file.lambda_support.points.iter().any(|p| p.len() != classes.len()) {
            return Err(Error::validation(format!(
                "[lambda_support] names {} classes but points have other lengths",
                classes.len()
            )));
        }
        let model = Self::new(file.lambda_support.points, vec![file.emission.probs], vec![chain])?;
        Ok((model, classes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::load_with_classes(path)?.0)
    }

    pub fn load_with_classes(path: &Path) -> Result<(Self, Vec<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_with_classes(&text, path)
    }

    /// Serialize the slot-0 model with the given class names.
    pub fn to_toml(&self, class_names: &[String]) -> String {
        let rows = &self.chain[0];
        let intervals = match &rows[0] {
            UncertaintySet::Interval(_) => Some(IntervalsSection::Interval {
                lo: rows
                    .iter()
                    .map(|s| match s {
                        UncertaintySet::Interval(i) => i.lo().to_vec(),
                        UncertaintySet::Likelihood(k) => k.nominal().to_vec(),
                    })
                    .collect(),
                hi: rows
                    .iter()
                    .map(|s| match s {
                        UncertaintySet::Interval(i) => i.hi().to_vec(),
                        UncertaintySet::Likelihood(k) => k.nominal().to_vec(),
                    })
                    .collect(),
            }),
            UncertaintySet::Likelihood(k) => Some(IntervalsSection::Kl { radius: k.radius() }),
        };
        let file = ModeFile {
            chain: ChainSection {
                nominal: rows.iter().map(|s| s.nominal().to_vec()).collect(),
            },
            intervals,
            lambda_support: SupportSection {
                classes: class_names.to_vec(),
                points: self.support.clone(),
            },
            emission: EmissionSection {
                probs: self.emission[0].clone(),
            },
        };
        toml::to_string(&file).expect("mode model serializes")
    }

    pub fn save(&self, path: &Path, class_names: &[String]) -> Result<()> {
        std::fs::write(path, self.to_toml(class_names)).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeFile {
    chain: ChainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intervals: Option<IntervalsSection>,
    lambda_support: SupportSection,
    emission: EmissionSection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainSection {
    nominal: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum IntervalsSection {
    Interval { lo: Vec<Vec<f64>>, hi: Vec<Vec<f64>> },
    Kl { radius: f64 },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SupportSection {
    #[serde(default)]
    classes: Vec<String>,
    points: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmissionSection {
    probs: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_mode() -> ModeModel {
        ModeModel::stationary(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.25, 0.75]],
            vec![
                IntervalSet::new(vec![0.9, 0.1], vec![0.8, 0.0], vec![1.0, 0.2]).unwrap(),
                IntervalSet::singleton(vec![0.3, 0.7]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn accessors_clamp_slots() {
        let m = two_mode();
        assert_eq!(m.num_modes(), 2);
        assert_eq!(m.num_lambda(), 3);
        assert_eq!(m.emission(17, 1), &[0.0, 0.25, 0.75]);
        assert_eq!(m.nominal_row(5, 0), &[0.9, 0.1]);
        assert!(m.is_stationary());
        assert!(!m.is_nominal());
        assert!(m.with_robustness(Robustness::Off).unwrap().is_nominal());
        assert_eq!(m.max_mass(), 2.0);
    }

    #[test]
    fn stationary_distribution_solves_balance() {
        let m = two_mode();
        let pi = m.stationary_distribution();
        // pi_0 * 0.1 = pi_1 * 0.3
        assert!((pi[0] - 0.75).abs() < 1e-12 && (pi[1] - 0.25).abs() < 1e-12);
        let periodic = ModeModel::stationary(
            vec![vec![1.0]],
            vec![vec![1.0], vec![1.0]],
            vec![
                IntervalSet::singleton(vec![0.0, 1.0]).unwrap(),
                IntervalSet::singleton(vec![1.0, 0.0]).unwrap(),
            ],
        )
        .unwrap();
        let pi = periodic.stationary_distribution();
        assert!((pi[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn file_round_trip() {
        let m = two_mode();
        let names = vec!["web".to_string()];
        let text = m.to_toml(&names);
        let back = ModeModel::parse(&text, Path::new("m.toml")).unwrap();
        assert_eq!(back, m);
        let kl = m.with_robustness(Robustness::Kl(0.05)).unwrap();
        let back = ModeModel::parse(&kl.to_toml(&names), Path::new("m.toml")).unwrap();
        assert_eq!(back, kl);
    }

    #[test]
    fn rejects_bad_emission() {
        let err = ModeModel::stationary(
            vec![vec![0.0], vec![1.0]],
            vec![vec![0.5, 0.6]],
            vec![IntervalSet::singleton(vec![1.0]).unwrap()],
        );
        assert!(matches!(err, Err(Error::Validation(_))));
    }
}
