//! Uncertainty sets over a mode-transition row and their worst-case
//! (cost-maximizing) expectations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-9;

/// Box-constrained rows: `lo <= p <= hi`, `sum p = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    nominal: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl IntervalSet {
    pub fn new(nominal: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let n = nominal.len();
        if n == 0 || lo.len() != n || hi.len() != n {
            return Err(Error::domain("interval set rows must be nonempty and of equal length"));
        }
        check_row(&nominal)?;
        for i in 0..n {
            if !(0.0..=1.0).contains(&lo[i]) || !(0.0..=1.0).contains(&hi[i]) || lo[i] > hi[i] {
                return Err(Error::domain(format!(
                    "interval bounds [{}, {}] at entry {i} are not nested in [0, 1]",
                    lo[i], hi[i]
                )));
            }
            if nominal[i] < lo[i] - ROW_TOL || nominal[i] > hi[i] + ROW_TOL {
                return Err(Error::domain(format!(
                    "nominal entry {i} = {} lies outside [{}, {}]",
                    nominal[i], lo[i], hi[i]
                )));
            }
        }
        let slo: f64 = lo.iter().sum();
        let shi: f64 = hi.iter().sum();
        if slo > 1.0 + ROW_TOL || shi < 1.0 - ROW_TOL {
            return Err(Error::domain(format!(
                "interval set is empty: sum(lo) = {slo}, sum(hi) = {shi}"
            )));
        }
        Ok(IntervalSet { nominal, lo, hi })
    }

    /// The degenerate set `{nominal}`.
    pub fn singleton(nominal: Vec<f64>) -> Result<Self> {
        IntervalSet::new(nominal.clone(), nominal.clone(), nominal)
    }

    /// Symmetric box `nominal +/- half_width` clipped to `[0, 1]`.
    pub fn around(nominal: Vec<f64>, half_width: f64) -> Result<Self> {
        let lo = nominal.iter().map(|p| (p - half_width).max(0.0)).collect();
        let hi = nominal.iter().map(|p| (p + half_width).min(1.0)).collect();
        IntervalSet::new(nominal, lo, hi)
    }

    /// Enlarge every bound by `delta`, clipped to `[0, 1]`.
    pub fn widen(&self, delta: f64) -> IntervalSet {
        IntervalSet {
            nominal: self.nominal.clone(),
            lo: self.lo.iter().map(|v| (v - delta).max(0.0)).collect(),
            hi: self.hi.iter().map(|v| (v + delta).min(1.0)).collect(),
        }
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn len(&self) -> usize {
        self.nominal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nominal.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, row: &[f64], tol: f64) -> bool {
        row.len() == self.len()
            && (row.iter().sum::<f64>() - 1.0).abs() <= tol
            && row
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(p, (l, h))| *p >= l - tol && *p <= h + tol)
    }
}

/// KL ball `{p : KL(p || nominal) <= radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodSet {
    nominal: Vec<f64>,
    radius: f64,
}

impl LikelihoodSet {
    pub fn new(nominal: Vec<f64>, radius: f64) -> Result<Self> {
        check_row(&nominal)?;
        if !(radius.is_finite() || radius == f64::INFINITY) || radius < 0.0 {
            return Err(Error::domain(format!("KL radius must be nonnegative, got {radius}")));
        }
        Ok(LikelihoodSet { nominal, radius })
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

fn check_row(row: &[f64]) -> Result<()> {
    if row.is_empty() {
        return Err(Error::domain("probability row is empty"));
    }
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::domain(format!("probability row {row:?} has invalid entries")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > ROW_TOL {
        return Err(Error::domain(format!("probability row sums to {s}")));
    }
    Ok(())
}

fn check_values(values: &[f64], n: usize) -> Result<()> {
    if values.len() != n {
        return Err(Error::domain(format!(
            "value vector has {} entries, set has {n}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("value vector contains non-finite entries"));
    }
    Ok(())
}

#[inline]
fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Maximize `sum_i p_i * values_i` over the interval set. Entries are filled
/// greedily in descending value order (ties: lower index first) from `lo`
/// up to `hi` until the row carries unit mass.
pub fn worst_case_expectation_interval(values: &[f64], set: &IntervalSet) -> Result<(f64, Vec<f64>)> {
    check_values(values, set.len())?;
    let row = interval_argmax(values, set);
    Ok((dot(&row, values), row))
}

pub(crate) fn interval_argmax(values: &[f64], set: &IntervalSet) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut row = set.lo.clone();
    let mut remaining = 1.0 - set.lo.iter().sum::<f64>();
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let add = (set.hi[i] - set.lo[i]).min(remaining);
        row[i] += add;
        remaining -= add;
    }
    row
}

/// Maximize `sum_i p_i * values_i` subject to `KL(p || nominal) <= radius`.
/// The worst case is an exponential tilt `p ~ q * exp(v / mu)`; `mu` is found
/// by bisection and the returned value is within `tol` of the maximum.
pub fn worst_case_expectation_kl(values: &[f64], set: &LikelihoodSet, tol: f64) -> Result<f64> {
    Ok(kl_argmax(values, set, tol)?.0)
}

pub(crate) fn kl_argmax(values: &[f64], set: &LikelihoodSet, tol: f64) -> Result<(f64, Vec<f64>)> {
    check_values(values, set.nominal.len())?;
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    let q = &set.nominal;
    if set.radius == 0.0 {
        return Ok((dot(q, values), q.clone()));
    }
    let support: Vec<usize> = (0..q.len()).filter(|&i| q[i] > 0.0).collect();
    let vmax = support.iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max);
    let vmin = support.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
    let top_mass: f64 = support.iter().filter(|&&i| values[i] == vmax).map(|&i| q[i]).sum();
    if vmax == vmin || set.radius >= -top_mass.ln() {
        let mut row = vec![0.0; q.len()];
        for &i in &support {
            if values[i] == vmax {
                row[i] = q[i] / top_mass;
            }
        }
        return Ok((vmax, row));
    }

    // Tilted row at temperature mu, its KL divergence and its expectation.
    let tilt = |mu: f64| -> (Vec<f64>, f64, f64) {
        let mut row = vec![0.0; q.len()];
        let mut z = 0.0;
        for &i in &support {
            let w = q[i] * ((values[i] - vmax) / mu).exp();
            row[i] = w;
            z += w;
        }
        for p in &mut row {
            *p /= z;
        }
        let mean = dot(&row, values);
        let kl = (mean - vmax) / mu - z.ln();
        (row, kl, mean)
    };
    let dual = |mu: f64| -> f64 {
        let z: f64 = support
            .iter()
            .map(|&i| q[i] * ((values[i] - vmax) / mu).exp())
            .sum();
        mu * set.radius + vmax + mu * z.ln()
    };

    let spread = vmax - vmin;
    let mut lo = 1e-12 * spread;
    let mut hi = spread + 1.0;
    while tilt(hi).1 > set.radius {
        hi *= 2.0;
    }
    let (mut best_row, _, mut best) = tilt(hi);
    for _ in 0..200 {
        if dual(hi) - best <= tol {
            break;
        }
        let mid = (lo * hi).sqrt();
        let (row, kl, mean) = tilt(mid);
        if kl <= set.radius {
            hi = mid;
            best = mean;
            best_row = row;
        } else {
            lo = mid;
        }
    }
    Ok((best, best_row))
}

/// The admissible set for one transition row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UncertaintySet {
    Interval(IntervalSet),
    Likelihood(LikelihoodSet),
}

/// Tolerance used for KL inner maximizations inside the solvers.
pub const KL_TOL: f64 = 1e-10;

impl UncertaintySet {
    pub fn nominal(&self) -> &[f64] {
        match self {
            UncertaintySet::Interval(s) => s.nominal(),
            UncertaintySet::Likelihood(s) => s.nominal(),
        }
    }

    pub fn len(&self) -> usize {
        self.nominal().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nominal().is_empty()
    }

    /// True when the set holds exactly one row.
    pub fn is_singleton(&self) -> bool {
        match self {
            UncertaintySet::Interval(s) => s.is_singleton(),
            UncertaintySet::Likelihood(s) => s.radius() == 0.0,
        }
    }

    /// Worst-case expectation and an attaining row.
    pub fn worst_case(&self, values: &[f64]) -> (f64, Vec<f64>) {
        match self {
            UncertaintySet::Interval(s) => {
                let row = interval_argmax(values, s);
                (dot(&row, values), row)
            }
            UncertaintySet::Likelihood(s) => {
                kl_argmax(values, s, KL_TOL).expect("solver values are finite")
            }
        }
    }

    /// Worst-case expectation only.
    #[inline]
    pub fn worst_value(&self, values: &[f64]) -> f64 {
        match self {
            UncertaintySet::Interval(s) if s.is_singleton() => dot(s.nominal(), values),
            UncertaintySet::Likelihood(s) if s.radius() == 0.0 => dot(s.nominal(), values),
            _ => self.worst_case(values).0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_gives_nominal() {
        let s = IntervalSet::singleton(vec![0.25, 0.75]).unwrap();
        let (e, row) = worst_case_expectation_interval(&[4.0, 8.0], &s).unwrap();
        assert_eq!(e, 0.25 * 4.0 + 0.75 * 8.0);
        assert_eq!(row, vec![0.25, 0.75]);
    }

    #[test]
    fn box_example() {
        let s = IntervalSet::new(vec![0.5, 0.5], vec![0.3, 0.3], vec![0.7, 0.7]).unwrap();
        let (e, row) = worst_case_expectation_interval(&[10.0, 0.0], &s).unwrap();
        assert!((e - 7.0).abs() < 1e-12);
        assert!((row[0] - 0.7).abs() < 1e-12 && (row[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn constant_values() {
        let s = IntervalSet::new(vec![0.2, 0.3, 0.5], vec![0.0, 0.1, 0.2], vec![0.6, 0.5, 0.9]).unwrap();
        let (e, _) = worst_case_expectation_interval(&[3.0, 3.0, 3.0], &s).unwrap();
        assert!((e - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ties_favor_lower_index() {
        let s = IntervalSet::new(vec![0.5, 0.5], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let (_, row) = worst_case_expectation_interval(&[1.0, 1.0], &s).unwrap();
        assert_eq!(row, vec![1.0, 0.0]);
    }

    #[test]
    fn empty_and_malformed_sets_are_rejected() {
        assert!(IntervalSet::new(vec![0.5, 0.5], vec![0.6, 0.6], vec![0.7, 0.7]).is_err());
        assert!(IntervalSet::new(vec![0.5, 0.5], vec![0.1, 0.1], vec![0.2, 0.2]).is_err());
        assert!(IntervalSet::new(vec![0.5, 0.5], vec![0.6, 0.0], vec![0.4, 1.0]).is_err());
        let s = IntervalSet::singleton(vec![1.0]).unwrap();
        assert!(worst_case_expectation_interval(&[1.0, 2.0], &s).is_err());
    }

    #[test]
    fn kl_radius_zero_and_infinite() {
        let v = [1.0, 0.0, 5.0];
        let q = vec![0.5, 0.5, 0.0];
        let s0 = LikelihoodSet::new(q.clone(), 0.0).unwrap();
        assert_eq!(worst_case_expectation_kl(&v, &s0, 1e-9).unwrap(), 0.5);
        let sinf = LikelihoodSet::new(q, 50.0).unwrap();
        // entry 2 has zero nominal mass and cannot receive any
        assert_eq!(worst_case_expectation_kl(&v, &sinf, 1e-9).unwrap(), 1.0);
    }

    #[test]
    fn kl_rejects_bad_input() {
        let s = LikelihoodSet::new(vec![0.5, 0.5], 0.1).unwrap();
        assert!(worst_case_expectation_kl(&[f64::NAN, 0.0], &s, 1e-9).is_err());
        assert!(worst_case_expectation_kl(&[1.0, 0.0], &s, 0.0).is_err());
        assert!(LikelihoodSet::new(vec![0.5, 0.5], -1.0).is_err());
    }

    #[test]
    fn kl_small_radius_needs_wide_bracket() {
        // the optimal temperature is far above max - min + 1 here
        let s = LikelihoodSet::new(vec![0.5, 0.5], 1e-6).unwrap();
        let e = worst_case_expectation_kl(&[1.0, 0.0], &s, 1e-12).unwrap();
        // second-order expansion: 0.5 + sqrt(2 r) * sd
        let approx = 0.5 + (2.0f64 * 1e-6).sqrt() * 0.5;
        assert!((e - approx).abs() < 1e-6, "{e} vs {approx}");
    }
}
