//! From hourly request counts to a mode model: k-means clustering of the
//! per-slot rate vectors into modes, chain estimation with confidence
//! intervals, and quantized per-mode emissions.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::statistics::{Data, OrderStatistics};

use crate::error::{Error, Result};
use crate::modes::ModeModel;
use crate::solver::{cumulate, sample_cumulative};
use crate::uncertainty::IntervalSet;

/// Lloyd iterations cap.
pub const MAX_KMEANS_ITERS: usize = 300;

/// Per-slot per-class arrival counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSeries {
    pub timestamps: Vec<i64>,
    pub class_names: Vec<String>,
    /// `[slot][class]`
    pub counts: Vec<Vec<f64>>,
}

impl TraceSeries {
    pub fn new(timestamps: Vec<i64>, class_names: Vec<String>, counts: Vec<Vec<f64>>) -> Result<Self> {
        if timestamps.len() != counts.len() {
            return Err(Error::validation(format!(
                "{} timestamps for {} count rows",
                timestamps.len(),
                counts.len()
            )));
        }
        if let Some(i) = (1..timestamps.len()).find(|&i| timestamps[i] <= timestamps[i - 1]) {
            return Err(Error::validation(format!("timestamps not increasing at row {i}")));
        }
        for (i, row) in counts.iter().enumerate() {
            if row.len() != class_names.len() {
                return Err(Error::validation(format!(
                    "row {i} has {} counts, expected {}",
                    row.len(),
                    class_names.len()
                )));
            }
            if row.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::validation(format!("row {i} has a negative or non-finite count")));
            }
        }
        Ok(TraceSeries {
            timestamps,
            class_names,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Parse a `timestamp,<class>,...` CSV. Columns are matched to
/// `class_names` by name; an empty list accepts the file's own order.
pub fn read_trace<R: Read>(input: R, class_names: &[String], origin: &Path) -> Result<TraceSeries> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("timestamp") {
        return Err(parse_err(1, "first column must be `timestamp`".into()));
    }
    let names: Vec<String> = if class_names.is_empty() {
        header[1..].to_vec()
    } else {
        class_names.to_vec()
    };
    let mut columns = Vec::with_capacity(names.len());
    for name in &names {
        match header.iter().skip(1).position(|h| h == name) {
            Some(c) => columns.push(c + 1),
            None => return Err(Error::validation(format!("trace lacks class column `{name}`"))),
        }
    }
    if let Some(extra) = header[1..].iter().find(|h| !names.contains(h)) {
        return Err(Error::validation(format!("trace has unknown class column `{extra}`")));
    }
    let mut timestamps = Vec::new();
    let mut counts = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let ts: i64 = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad timestamp `{}`", &record[0])))?;
        let row = columns
            .iter()
            .map(|&c| {
                let v: f64 = record[c]
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad count `{}`", &record[c])))?;
                if v < 0.0 {
                    return Err(Error::validation(format!("negative count on line {line}")));
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        timestamps.push(ts);
        counts.push(row);
    }
    TraceSeries::new(timestamps, names, counts)
}

pub fn parse_trace(path: &Path, class_names: &[String]) -> Result<TraceSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(file, class_names, path)
}

pub fn write_trace<W: Write>(series: &TraceSeries, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::io("<trace>", e.into());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp".to_string()];
    header.extend(series.class_names.iter().cloned());
    w.write_record(&header).map_err(io)?;
    for (ts, row) in series.timestamps.iter().zip(&series.counts) {
        let mut rec = vec![ts.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))
}

/// Result of k-means on the slot rate vectors. Clusters are labelled in
/// increasing order of total center rate, so mode 0 is the lightest.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration.
    pub history: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, ctr) in centers.iter().enumerate() {
        let d = dist2(p, ctr);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means with k-means++ seeding; stops when assignments repeat or after
/// [`MAX_KMEANS_ITERS`] iterations.
pub fn cluster_modes(series: &TraceSeries, k: usize, seed: u64) -> Result<Clustering> {
    let pts = &series.counts;
    let n = pts.len();
    if k == 0 || n < k {
        return Err(Error::domain(format!("cannot form {k} clusters from {n} slots")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![pts[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = pts.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut acc = 0.0;
            let cum: Vec<f64> = d2
                .iter()
                .map(|d| {
                    acc += d;
                    acc
                })
                .collect();
            sample_cumulative(&cum, rng.gen())
        } else {
            rng.gen_range(0..n)
        };
        centers.push(pts[pick].clone());
        for (d, p) in d2.iter_mut().zip(pts) {
            *d = d.min(dist2(p, &centers[centers.len() - 1]));
        }
    }
    let mut assignments: Vec<usize> = pts.iter().map(|p| nearest(p, &centers).0).collect();
    let mut history = Vec::new();
    for _ in 0..MAX_KMEANS_ITERS {
        let dims = series.class_names.len();
        let mut sums = vec![vec![0.0; dims]; k];
        let mut sizes = vec![0usize; k];
        for (p, &a) in pts.iter().zip(&assignments) {
            sizes[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }
        for c in 0..k {
            if sizes[c] == 0 {
                // reseed at the point farthest from its own center
                let far = (0..n)
                    .max_by(|&i, &j| {
                        dist2(&pts[i], &centers[assignments[i]]).total_cmp(&dist2(&pts[j], &centers[assignments[j]]))
                    })
                    .expect("non-empty trace");
                centers[c] = pts[far].clone();
                sizes[assignments[far]] -= 1;
                assignments[far] = c;
                sizes[c] = 1;
            }
        }
        let next: Vec<usize> = pts.iter().map(|p| nearest(p, &centers).0).collect();
        history.push(pts.iter().zip(&next).map(|(p, &a)| dist2(p, &centers[a])).sum());
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centers[a].iter().sum::<f64>().total_cmp(&centers[b].iter().sum::<f64>()));
    let mut relabel = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    let centers: Vec<Vec<f64>> = order.iter().map(|&c| centers[c].clone()).collect();
    let assignments: Vec<usize> = assignments.iter().map(|&a| relabel[a]).collect();
    let inertia = pts.iter().zip(&assignments).map(|(p, &a)| dist2(p, &centers[a])).sum();
    Ok(Clustering {
        assignments,
        centers,
        inertia,
        history,
    })
}

/// Estimate a stationary mode model from a clustered trace.
///
/// Chain rows are empirical transition frequencies with normal-approximation
/// confidence intervals clipped to [0, 1]. Each mode's observations are
/// snapped per class to a grid of `lambda_levels` quantiles (the median when
/// there is one level); the support is the union over modes of the snapped
/// vectors that occur.
pub fn estimate_mode_model(
    series: &TraceSeries,
    assignments: &[usize],
    k: usize,
    lambda_levels: usize,
    confidence: f64,
) -> Result<ModeModel> {
    if assignments.len() != series.len() {
        return Err(Error::domain("one assignment per slot required"));
    }
    if k == 0 || assignments.iter().any(|&a| a >= k) {
        return Err(Error::domain("assignments must lie in 0..k"));
    }
    if lambda_levels == 0 {
        return Err(Error::domain("need at least one quantization level"));
    }
    if !(0.0..1.0).contains(&confidence) {
        return Err(Error::domain("confidence must lie in [0, 1)"));
    }
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf((1.0 + confidence) / 2.0);
    let z = if z.abs() < 1e-12 { 0.0 } else { z };
    let mut transitions = vec![vec![0usize; k]; k];
    for w in assignments.windows(2) {
        transitions[w[0]][w[1]] += 1;
    }
    let chain = transitions
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            if total == 0 {
                let uniform = vec![1.0 / k as f64; k];
                return IntervalSet::new(uniform, vec![0.0; k], vec![1.0; k]);
            }
            let nominal: Vec<f64> = row.iter().map(|&c| c as f64 / total as f64).collect();
            let half: Vec<f64> = nominal
                .iter()
                .map(|p| z * (p * (1.0 - p) / total as f64).sqrt())
                .collect();
            let lo = nominal.iter().zip(&half).map(|(p, h)| (p - h).max(0.0)).collect();
            let hi = nominal.iter().zip(&half).map(|(p, h)| (p + h).min(1.0)).collect();
            IntervalSet::new(nominal, lo, hi)
        })
        .collect::<Result<Vec<_>>>()?;

    let dims = series.class_names.len();
    let mut support: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (th, mode_counts) in counts.iter_mut().enumerate() {
        let rows: Vec<&Vec<f64>> = series
            .counts
            .iter()
            .zip(assignments)
            .filter(|(_, &a)| a == th)
            .map(|(r, _)| r)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let grids: Vec<Vec<f64>> = (0..dims)
            .map(|j| {
                let mut data = Data::new(rows.iter().map(|r| r[j]).collect::<Vec<f64>>());
                let mut g: Vec<f64> = if lambda_levels == 1 {
                    vec![data.median()]
                } else {
                    (0..lambda_levels)
                        .map(|i| data.quantile(i as f64 / (lambda_levels - 1) as f64))
                        .collect()
                };
                g.dedup();
                g
            })
            .collect();
        for r in rows {
            let snapped: Vec<f64> = (0..dims).map(|j| snap(r[j], &grids[j])).collect();
            let idx = match support.iter().position(|p| *p == snapped) {
                Some(i) => i,
                None => {
                    support.push(snapped);
                    support.len() - 1
                }
            };
            if mode_counts.len() <= idx {
                mode_counts.resize(idx + 1, 0);
            }
            mode_counts[idx] += 1;
        }
    }
    if support.is_empty() {
        return Err(Error::domain("trace has no slots"));
    }
    let nl = support.len();
    let emission = counts
        .into_iter()
        .map(|mut c| {
            c.resize(nl, 0);
            let total: usize = c.iter().sum();
            if total == 0 {
                vec![1.0 / nl as f64; nl]
            } else {
                c.iter().map(|&v| v as f64 / total as f64).collect()
            }
        })
        .collect();
    ModeModel::stationary(support, emission, chain)
}

/// Nearest grid value; ties go to the lower one.
fn snap(v: f64, grid: &[f64]) -> f64 {
    let mut best = grid[0];
    for &g in grid {
        if (v - g).abs() < (v - best).abs() {
            best = g;
        }
    }
    best
}

/// Sample `slots` slots from the nominal dynamics of `model`, starting from
/// its stationary distribution. Counts are the emitted rate vectors.
/// Returns the trace and the hidden mode of every slot.
pub fn gen_synthetic_trace(
    model: &ModeModel,
    class_names: &[String],
    slots: usize,
    seed: u64,
) -> Result<(TraceSeries, Vec<usize>)> {
    if slots == 0 {
        return Err(Error::domain("trace needs at least one slot"));
    }
    if class_names.len() != model.num_classes() {
        return Err(Error::domain(format!(
            "{} class names for {} classes",
            class_names.len(),
            model.num_classes()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = sample_cumulative(&cumulate(&model.stationary_distribution()), rng.gen());
    let mut modes = Vec::with_capacity(slots);
    let mut counts = Vec::with_capacity(slots);
    for t in 0..slots {
        let l = sample_cumulative(&cumulate(model.emission(t, theta)), rng.gen());
        modes.push(theta);
        counts.push(model.support()[l].clone());
        theta = sample_cumulative(&cumulate(model.nominal_row(t, theta)), rng.gen());
    }
    let series = TraceSeries::new((0..slots as i64).collect(), class_names.to_vec(), counts)?;
    Ok((series, modes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("c{j}")).collect()
    }

    #[test]
    fn parse_small_file() {
        let text = "timestamp,b,a\n0,1,2\n1,3,4\n";
        let s = read_trace(text.as_bytes(), &["a".into(), "b".into()], Path::new("t.csv")).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.counts, vec![vec![2.0, 1.0], vec![4.0, 3.0]]);
        let err = read_trace(text.as_bytes(), &["a".into(), "zz".into()], Path::new("t.csv")).unwrap_err();
        assert!(err.to_string().contains("zz"));
        let bad = "timestamp,a\n0,1\n1,x\n";
        match read_trace(bad.as_bytes(), &[], Path::new("t.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let neg = "timestamp,a\n0,-1\n";
        assert!(matches!(read_trace(neg.as_bytes(), &[], Path::new("t.csv")), Err(Error::Validation(_))));
    }

    #[test]
    fn round_trip() {
        let s = TraceSeries::new(vec![3, 7], names(2), vec![vec![0.5, 1e-9], vec![12345.0, 2.0]]).unwrap();
        let mut buf = Vec::new();
        write_trace(&s, &mut buf).unwrap();
        assert_eq!(read_trace(&buf[..], &names(2), Path::new("t")).unwrap(), s);
    }

    #[test]
    fn one_cluster_is_the_mean() {
        let s = TraceSeries::new(vec![0, 1, 2], names(1), vec![vec![1.0], vec![2.0], vec![6.0]]).unwrap();
        let c = cluster_modes(&s, 1, 0).unwrap();
        assert_eq!(c.centers, vec![vec![3.0]]);
        let all = cluster_modes(&s, 3, 0).unwrap();
        assert_eq!(all.inertia, 0.0);
        assert_eq!(all.assignments, vec![0, 1, 2]);
    }

    #[test]
    fn cyclic_modes_give_a_permutation() {
        let s = TraceSeries::new((0..9).collect(), names(1), (0..9).map(|i| vec![(i % 3) as f64]).collect()).unwrap();
        let a: Vec<usize> = (0..9).map(|i| i % 3).collect();
        let m = estimate_mode_model(&s, &a, 3, 1, 0.9).unwrap();
        for th in 0..3 {
            let mut expect = vec![0.0; 3];
            expect[(th + 1) % 3] = 1.0;
            assert_eq!(m.nominal_row(0, th), &expect[..]);
        }
        let z = estimate_mode_model(&s, &[0, 0, 1, 0, 1, 1, 0, 0, 1], 2, 2, 0.0).unwrap();
        assert!(z.chain_set(0, 0).is_singleton());
    }
}
