//! Acceptance criteria, one test per criterion. Each test prints a single
//! `PASS` or `FAIL` line before asserting. Tests hold a shared lock so the
//! runtime criterion is measured without interference.

use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robust_dc::aggregate::{
    build_aggregated_model, optimal_disaggregation, AggregationCase, TypeAggregation,
};
use robust_dc::check::value_convexity_violations;
use robust_dc::grid::Grid;
use robust_dc::ingest::{cluster_modes, estimate_mode_model, gen_synthetic_trace};
use robust_dc::model::{Block, DataCenterConfig, EnergyShape, JobClass, PriceSchedule};
use robust_dc::modes::{ModeModel, Robustness};
use robust_dc::mpc::MpcPolicy;
use robust_dc::qos::{big_m, optimize_load_balancing, qos_cost_given_q, LoadBalancingMatrix};
use robust_dc::scenario::{
    random_instance, reference_config, reference_traffic_model, scaled_reference_config, scaled_servers,
    InstanceSpec, REFERENCE_CLASSES, REFERENCE_SERVERS,
};
use robust_dc::sim::{compare_policies, default_start, Dynamics, Environment, ThresholdRule};
use robust_dc::solver::{
    action_value, backward_induction, backward_induction_with, evaluate_policy, flat_backward_induction,
    flat_value_iteration, mean_value, monte_carlo_search, Decomposition, FullCosts, RowChoice, SharedCosts,
};
use robust_dc::uncertainty::{
    worst_case_expectation_interval, worst_case_expectation_kl, IntervalSet, LikelihoodSet, KL_TOL,
};

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: &str, ok: bool, detail: &str) {
    println!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
}

const GAMMA: f64 = 0.9;
const ORACLE_TOL: f64 = 1e-9;

/// Random small instances whose QoS tables pass the axis-convexity probe,
/// together with the ones that fail it.
fn probe_split(count: usize) -> (Vec<u64>, Vec<u64>) {
    let spec = InstanceSpec::default();
    let (mut pass, mut fail) = (Vec::new(), Vec::new());
    let mut seed = 0;
    while pass.len() < count {
        let inst = random_instance(seed, &spec);
        let costs = FullCosts::new(&inst.config, inst.model.support(), inst.horizon);
        if costs.qos_table().is_axis_convex(ORACLE_TOL) {
            pass.push(seed);
        } else {
            fail.push(seed);
        }
        seed += 1;
    }
    (pass, fail)
}

#[test]
fn criterion_1_threshold_oracle_equivalence() {
    let _g = serial();
    let (seeds, _) = probe_split(150);
    let spec = InstanceSpec::default();
    let mut worst_diff = 0.0f64;
    let (mut rule_bad_instances, mut decision_bad_instances, mut cells) = (0, 0, 0usize);
    for &seed in &seeds {
        let inst = random_instance(seed, &spec);
        let costs: SharedCosts = Arc::new(FullCosts::new(&inst.config, inst.model.support(), inst.horizon));
        let sol = backward_induction(&inst.model, costs.clone(), inst.horizon, GAMMA).unwrap();
        let flat = flat_backward_induction(&inst.model, costs.as_ref(), inst.horizon, GAMMA).unwrap();
        worst_diff = worst_diff.max(flat.max_abs_diff(&sol.values));
        let grid = costs.grid().clone();
        let (mut rule_bad, mut decision_bad) = (false, false);
        for t in 0..inst.horizon {
            for (xi, x) in grid.iter().enumerate() {
                for th in 0..inst.model.num_modes() {
                    let rule = sol.policy.act(t, &x, th);
                    let decision = sol.values.decision(t, &x, th);
                    for l in 0..inst.model.num_lambda() {
                        cells += 1;
                        let best = flat.get(t, xi, l, th);
                        let tol = ORACLE_TOL * best.abs().max(1.0);
                        let rv = action_value(&inst.model, costs.as_ref(), &flat, GAMMA, t, &x, l, th, &rule);
                        let dv = action_value(&inst.model, costs.as_ref(), &flat, GAMMA, t, &x, l, th, &decision);
                        rule_bad |= rv - best > tol;
                        decision_bad |= dv - best > tol;
                    }
                }
            }
        }
        rule_bad_instances += usize::from(rule_bad);
        decision_bad_instances += usize::from(decision_bad);
    }
    let values_ok = worst_diff <= ORACLE_TOL;
    report(
        "1a",
        values_ok,
        &format!(
            "{} probe-passing instances, max |exact - flat| = {worst_diff:e} (tol {ORACLE_TOL:e})",
            seeds.len()
        ),
    );
    report(
        "1b",
        rule_bad_instances == 0,
        &format!(
            "threshold-rule actions miss the flat minimum on {rule_bad_instances}/{} instances ({cells} cells checked)",
            seeds.len()
        ),
    );
    println!(
        "INFO criterion 1b: recorded optimal decisions miss the flat minimum on {decision_bad_instances}/{} instances",
        seeds.len()
    );
    assert!(values_ok);
    assert_eq!(decision_bad_instances, 0);
    assert_eq!(rule_bad_instances, 0, "threshold rule is not Bellman-optimal everywhere");
}

#[test]
fn criterion_2_value_convexity() {
    let _g = serial();
    let (pass, fail) = probe_split(150);
    let spec = InstanceSpec::default();
    let violations = |seed: u64| {
        let inst = random_instance(seed, &spec);
        let costs = FullCosts::new(&inst.config, inst.model.support(), inst.horizon);
        let flat = flat_backward_induction(&inst.model, &costs, inst.horizon, GAMMA).unwrap();
        value_convexity_violations(&flat, ORACLE_TOL)
    };
    let bad_pass: Vec<u64> = pass.iter().copied().filter(|&s| violations(s) > 0).collect();
    let bad_fail = fail.iter().filter(|&&s| violations(s) > 0).count();
    let ok = bad_pass.is_empty();
    report(
        "2",
        ok,
        &format!(
            "{} probe-passing instances with value-convexity violations {:?}; {bad_fail}/{} probe-failing instances violate (logged)",
            bad_pass.len(),
            bad_pass,
            fail.len()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_3_robust_degeneracy_and_monotonicity() {
    let _g = serial();
    let spec = InstanceSpec::default();
    let (mut identical, mut monotone) = (true, true);
    let mut checked = 0;
    for seed in 0..100 {
        let inst = random_instance(seed, &spec);
        let costs: SharedCosts = Arc::new(FullCosts::new(&inst.config, inst.model.support(), inst.horizon));
        let nominal = inst.model.with_robustness(Robustness::Off).unwrap();
        let zero_interval = nominal.widened(0.0);
        let zero_kl = inst.model.with_robustness(Robustness::Kl(0.0)).unwrap();
        for m in [&zero_interval, &zero_kl] {
            for how in [Decomposition::Auto, Decomposition::Joint] {
                let a = backward_induction_with(m, costs.clone(), inst.horizon, GAMMA, how).unwrap();
                let b = backward_induction_with(&nominal, costs.clone(), inst.horizon, GAMMA, how).unwrap();
                for xi in 0..costs.grid().len() {
                    for t in 0..inst.horizon {
                        for l in 0..m.num_lambda() {
                            for th in 0..m.num_modes() {
                                let (va, vb) = (a.values.value_at(t, xi, l, th), b.values.value_at(t, xi, l, th));
                                identical &= va.to_bits() == vb.to_bits();
                            }
                        }
                    }
                }
            }
        }
        let mut prev = backward_induction(&inst.model, costs.clone(), inst.horizon, GAMMA).unwrap().values;
        for delta in [0.05, 0.1, 0.2] {
            let wide = backward_induction(&inst.model.widened(delta), costs.clone(), inst.horizon, GAMMA)
                .unwrap()
                .values;
            for xi in 0..costs.grid().len() {
                for l in 0..inst.model.num_lambda() {
                    for th in 0..inst.model.num_modes() {
                        let (lo, hi) = (prev.value_at(0, xi, l, th), wide.value_at(0, xi, l, th));
                        // summation order may differ between the two solves
                        monotone &= hi >= lo - 1e-12 * lo.abs().max(1.0);
                    }
                }
            }
            prev = wide;
        }
        checked += 1;
    }
    let ok = identical && monotone;
    report(
        "3",
        ok,
        &format!("{checked} instances: zero-width sets bit-identical = {identical}, widening monotone = {monotone}"),
    );
    assert!(ok);
}

/// Maximum of `p . v` over the vertices of `{lo <= p <= hi, sum p = 1}`.
fn vertex_oracle(v: &[f64], set: &IntervalSet) -> f64 {
    let n = v.len();
    let mut best = f64::NEG_INFINITY;
    for free in 0..n {
        for mask in 0..(1usize << n) {
            if mask & (1 << free) != 0 {
                continue;
            }
            let mut p = vec![0.0; n];
            let mut rest = 0.0;
            for i in (0..n).filter(|&i| i != free) {
                p[i] = if mask & (1 << i) != 0 { set.hi()[i] } else { set.lo()[i] };
                rest += p[i];
            }
            p[free] = 1.0 - rest;
            if p[free] < set.lo()[free] - 1e-12 || p[free] > set.hi()[free] + 1e-12 {
                continue;
            }
            best = best.max(p.iter().zip(v).map(|(a, b)| a * b).sum());
        }
    }
    best
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| if *a > 0.0 { a * (a / b).ln() } else { 0.0 })
        .sum()
}

#[test]
fn criterion_4_inner_max_exactness() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut interval_worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=4);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let s: f64 = w.iter().sum();
        let nominal: Vec<f64> = w.iter().map(|x| x / s).collect();
        let set = IntervalSet::around(nominal, rng.gen_range(0.0..0.3)).unwrap();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let (greedy, _) = worst_case_expectation_interval(&v, &set).unwrap();
        // the same vertex, summed in a different order
        let scale: f64 = v.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        interval_worst = interval_worst.max((greedy - vertex_oracle(&v, &set)).abs() / scale);
    }
    let mut kl_worst = 0.0f64;
    for _ in 0..200 {
        let q0 = rng.gen_range(0.05..0.95);
        let nominal = vec![q0, 1.0 - q0];
        let radius = rng.gen_range(0.0..0.5);
        let v = vec![rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
        let got = worst_case_expectation_kl(&v, &LikelihoodSet::new(nominal.clone(), radius).unwrap(), KL_TOL)
            .unwrap();
        let steps = 1_000_000;
        let mut grid_best = f64::NEG_INFINITY;
        for i in 0..=steps {
            let p0 = i as f64 / steps as f64;
            let p = [p0, 1.0 - p0];
            if kl(&p, &nominal) <= radius {
                grid_best = grid_best.max(p0 * v[0] + (1.0 - p0) * v[1]);
            }
        }
        kl_worst = kl_worst.max((got - grid_best).abs());
    }
    let ok = interval_worst <= 1e-14 && kl_worst <= 1e-4;
    report(
        "4",
        ok,
        &format!("interval greedy vs vertex LP max scaled diff {interval_worst:e} (rounding only); KL bisection vs grid max diff {kl_worst:e}"),
    );
    assert!(ok);
}

/// Best QoS cost over load-balancing matrices on a 0.01 grid of per-class splits.
fn grid_search(x: &[u32], lambda: &[f64], cfg: &DataCenterConfig) -> Option<f64> {
    let nb = cfg.num_blocks();
    let allowed: Vec<Vec<usize>> = (0..cfg.num_classes())
        .map(|j| (0..nb).filter(|&b| cfg.blocks[b].serves[j] && x[b] > 0).collect())
        .collect();
    if allowed.iter().zip(lambda).any(|(a, l)| a.is_empty() && *l > 0.0) {
        return None;
    }
    // per class: share sent to its first allowed block, 0..=100
    let choices: Vec<usize> = allowed.iter().map(|a| if a.len() == 2 { 101 } else { 1 }).collect();
    let total: usize = choices.iter().product();
    let mut best: Option<f64> = None;
    for code in 0..total {
        let mut q = LoadBalancingMatrix::zeros(nb, cfg.num_classes());
        let mut c = code;
        for (j, a) in allowed.iter().enumerate() {
            let k = c % choices[j];
            c /= choices[j];
            match a.len() {
                0 => {}
                1 => q.set(a[0], j, 1.0),
                _ => {
                    let s = k as f64 / 100.0;
                    q.set(a[0], j, s);
                    q.set(a[1], j, 1.0 - s);
                }
            }
        }
        if let Some(v) = qos_cost_given_q(x, lambda, &q, cfg) {
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

fn small_config(rng: &mut ChaCha8Rng) -> DataCenterConfig {
    let nb = rng.gen_range(1..=2);
    let nj = rng.gen_range(1..=2);
    let mut serves: Vec<Vec<bool>> = (0..nb).map(|_| (0..nj).map(|_| rng.gen_bool(0.7)).collect()).collect();
    for j in 0..nj {
        if !serves.iter().any(|r| r[j]) {
            serves[rng.gen_range(0..nb)][j] = true;
        }
    }
    DataCenterConfig::new(
        (0..nb)
            .map(|b| Block {
                servers: rng.gen_range(1..=3),
                server_type: b,
                rate: rng.gen_range(0.5..2.0),
                serves: serves[b].clone(),
                energy_shape: EnergyShape::Linear,
            })
            .collect(),
        (0..nj)
            .map(|j| JobClass {
                name: format!("c{j}"),
                qos_weight: rng.gen_range(0.5..2.0),
            })
            .collect(),
        PriceSchedule::constant(nb, 1.0, 1.0, 1.0),
    )
    .unwrap()
}

#[test]
fn criterion_5_qos_optimizer() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut cases, mut worst) = (0, 0.0f64);
    while cases < 100 {
        let cfg = small_config(&mut rng);
        let x: Vec<u32> = cfg.blocks.iter().map(|b| rng.gen_range(1..=b.servers)).collect();
        let lambda: Vec<f64> = (0..cfg.num_classes())
            .map(|j| {
                let cap: f64 = cfg
                    .blocks
                    .iter()
                    .zip(&x)
                    .filter(|(b, _)| b.serves[j])
                    .map(|(b, &xb)| b.rate * xb as f64)
                    .sum();
                rng.gen_range(0.0..0.6) * cap / cfg.num_classes() as f64
            })
            .collect();
        let Some(grid) = grid_search(&x, &lambda, &cfg) else {
            continue;
        };
        let res = optimize_load_balancing(&x, &lambda, &cfg);
        if !res.feasible {
            worst = f64::INFINITY;
            break;
        }
        worst = worst.max((res.cost - grid).abs() / grid.abs().max(1e-12));
        cases += 1;
    }
    let sym_cfg = DataCenterConfig::new(
        (0..2)
            .map(|b| Block {
                servers: 1,
                server_type: b,
                rate: 1.0,
                serves: vec![true],
                energy_shape: EnergyShape::Linear,
            })
            .collect(),
        vec![JobClass {
            name: "web".into(),
            qos_weight: 1.0,
        }],
        PriceSchedule::constant(2, 1.0, 1.0, 1.0),
    )
    .unwrap();
    let sym = optimize_load_balancing(&[1, 1], &[1.0], &sym_cfg);
    let sym_ok = (sym.cost - 2.0).abs() <= 1e-4
        && (sym.q_star.get(0, 0) - 0.5).abs() <= 1e-4
        && (sym.q_star.get(1, 0) - 0.5).abs() <= 1e-4;
    let ok = worst <= 1e-3 && sym_ok;
    report(
        "5",
        ok,
        &format!(
            "{cases} cases, max relative gap to 0.01 grid {worst:e}; symmetric case cost {:.6} split ({:.6}, {:.6})",
            sym.cost,
            sym.q_star.get(0, 0),
            sym.q_star.get(1, 0)
        ),
    );
    assert!(ok);
}

const HORIZON: usize = 24;
const SOLVE_GAMMA: f64 = 0.95;

/// Mode model estimated from a year of hourly synthetic traffic.
fn estimated_reference_model() -> &'static ModeModel {
    static MODEL: OnceLock<ModeModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let names: Vec<String> = REFERENCE_CLASSES.iter().map(|s| s.to_string()).collect();
        let (trace, _) = gen_synthetic_trace(&reference_traffic_model(), &names, 8760, 2024).unwrap();
        let clusters = cluster_modes(&trace, 3, 2024).unwrap();
        estimate_mode_model(&trace, &clusters.assignments, 3, 3, 0.9).unwrap()
    })
}

#[test]
fn criterion_6_mdp_beats_mpc() {
    let _g = serial();
    let cfg = reference_config();
    // the chain is taken as precisely known
    let model = estimated_reference_model().with_robustness(Robustness::Off).unwrap();
    let costs: SharedCosts = Arc::new(FullCosts::new(&cfg, model.support(), HORIZON));
    let sol = backward_induction(&model, costs.clone(), HORIZON, SOLVE_GAMMA).unwrap();
    let env = Environment {
        model: model.clone(),
        costs,
        dynamics: Dynamics::Nominal,
    };
    let mdp = ThresholdRule {
        label: "mdp".into(),
        policy: sol.policy,
    };
    let mpc = MpcPolicy::new(cfg.clone(), model.clone(), big_m(&cfg, model.support(), HORIZON));
    let s0 = default_start(&env);
    let cmp = compare_policies(&env, &[&mdp, &mpc], &s0, 1000, HORIZON, 6).unwrap();
    let (m_mdp, m_mpc) = (cmp.stats[0].mean[HORIZON - 1], cmp.stats[1].mean[HORIZON - 1]);
    let (d, se) = cmp.paired_difference(0, 1);
    let ok = m_mdp <= m_mpc;
    report(
        "6",
        ok,
        &format!("mean cumulative cost at slot 24: mdp {m_mdp:.3}, mpc {m_mpc:.3} (paired diff {d:.3} +- {se:.3})"),
    );

    let robust = estimated_reference_model().clone();
    let rcosts: SharedCosts = Arc::new(FullCosts::new(&cfg, robust.support(), HORIZON));
    let rsol = backward_induction(&robust, rcosts, HORIZON, SOLVE_GAMMA).unwrap();
    let rmdp = ThresholdRule {
        label: "robust-mdp".into(),
        policy: rsol.policy,
    };
    let rcmp = compare_policies(&env, &[&rmdp, &mpc], &s0, 1000, HORIZON, 6).unwrap();
    println!(
        "INFO criterion 6: interval-robust policy {:.3} vs mpc {:.3}",
        rcmp.stats[0].mean[HORIZON - 1],
        rcmp.stats[1].mean[HORIZON - 1]
    );
    assert!(ok);
}

/// The estimated model with rates rescaled to a fleet of `servers`.
fn scaled_model(model: &ModeModel, servers: [u32; 4]) -> ModeModel {
    let support = model
        .support()
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(j, v)| v * servers[j] as f64 / REFERENCE_SERVERS[j] as f64)
                .collect()
        })
        .collect();
    model.with_support(support).unwrap()
}

fn median_solve_time(cfg: &DataCenterConfig, model: &ModeModel, reps: usize) -> Duration {
    let mut times: Vec<Duration> = (0..reps)
        .map(|_| {
            let t0 = Instant::now();
            let costs: SharedCosts = Arc::new(FullCosts::new(cfg, model.support(), HORIZON));
            backward_induction(model, costs, HORIZON, SOLVE_GAMMA).unwrap();
            t0.elapsed()
        })
        .collect();
    times.sort();
    times[reps / 2]
}

#[test]
fn criterion_7_runtime() {
    let _g = serial();
    let model = estimated_reference_model().with_robustness(Robustness::Off).unwrap();
    let full = median_solve_time(&reference_config(), &model, 3);
    let robust = median_solve_time(&reference_config(), estimated_reference_model(), 1);
    let limit = Duration::from_secs(600);
    let totals = [22u32, 45, 89, 178];
    let times: Vec<Duration> = totals
        .iter()
        .map(|&n| {
            let servers = scaled_servers(n);
            median_solve_time(&scaled_reference_config(servers), &scaled_model(&model, servers), 7)
        })
        .collect();
    let base = times[0].as_secs_f64();
    let linear = totals.iter().zip(&times).all(|(&n, t)| {
        t.as_secs_f64() <= 1.5 * base * n as f64 / totals[0] as f64
    });
    let ok = full < limit && linear;
    report(
        "7",
        ok,
        &format!(
            "reference solve {full:?} (limit {limit:?}); sweep {:?} -> {:?}",
            totals, times
        ),
    );
    println!("INFO criterion 7: interval-robust reference solve {robust:?}");
    assert!(ok);
}

fn random_typed_config(rng: &mut ChaCha8Rng) -> DataCenterConfig {
    let types = rng.gen_range(1..=2);
    let mut blocks = Vec::new();
    for i in 0..types {
        let total = rng.gen_range(1..=6u32);
        let nblocks = rng.gen_range(1..=3u32).min(total);
        // split `total` servers over `nblocks` blocks, each at least one
        let mut sizes = vec![1u32; nblocks as usize];
        for _ in 0..(total - nblocks) {
            let k = rng.gen_range(0..sizes.len());
            sizes[k] += 1;
        }
        for m in sizes {
            let shape = if rng.gen_bool(0.5) {
                EnergyShape::Linear
            } else {
                // convex: nondecreasing increments
                let mut inc: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..2.0)).collect();
                inc.sort_by(f64::total_cmp);
                let mut acc = 0.0;
                let mut t = vec![0.0];
                for d in inc {
                    acc += d;
                    t.push(acc);
                }
                EnergyShape::Tabulated(t)
            };
            blocks.push(Block {
                servers: m,
                server_type: i,
                rate: 1.0 + i as f64,
                serves: vec![true],
                energy_shape: shape,
            });
        }
    }
    let nb = blocks.len();
    let horizon = 2;
    let energy = (0..horizon).map(|_| (0..nb).map(|_| rng.gen_range(0.1..3.0)).collect()).collect();
    DataCenterConfig::new(
        blocks,
        vec![JobClass {
            name: "web".into(),
            qos_weight: 1.0,
        }],
        PriceSchedule::new(energy, vec![vec![1.0; nb]], vec![vec![1.0; nb]]).unwrap(),
    )
    .unwrap()
}

fn exhaustive_energy(t: usize, y: &[u32], agg: &TypeAggregation, cfg: &DataCenterConfig) -> f64 {
    let mut best = f64::INFINITY;
    for x in cfg.grid().iter() {
        let fits = agg
            .type_blocks()
            .iter()
            .zip(y)
            .all(|(bs, &yi)| bs.iter().map(|&b| x[b]).sum::<u32>() == yi);
        if fits {
            best = best.min(cfg.energy_unchecked(t, &x));
        }
    }
    best
}

#[test]
fn criterion_8_aggregation() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut disagg_bad = 0;
    let mut checked = 0;
    for _ in 0..200 {
        let cfg = random_typed_config(&mut rng);
        let agg = TypeAggregation::new(&cfg);
        for t in 0..2 {
            for y in Grid::new(agg.totals().to_vec()).iter() {
                let x = optimal_disaggregation(t, &y, &agg, &cfg).unwrap();
                let oracle = exhaustive_energy(t, &y, &agg, &cfg);
                checked += 1;
                if (cfg.energy_unchecked(t, &x) - oracle).abs() > 1e-12 * oracle.abs().max(1.0) {
                    disagg_bad += 1;
                }
            }
        }
    }

    let spec = InstanceSpec::default();
    let mut solve_bad = 0;
    for seed in 0..60 {
        let inst = random_instance(seed, &spec);
        let nb = inst.config.num_blocks();
        let mut case1 = inst.config.clone();
        case1.prices = PriceSchedule::constant(nb, 1.5, 2.0, 0.5);
        let mut case2 = inst.config.clone();
        case2.prices = PriceSchedule::new(
            inst.config.prices.energy_table().to_vec(),
            vec![vec![0.0; nb]],
            vec![vec![0.0; nb]],
        )
        .unwrap();
        for (case, cfg) in [(AggregationCase::ConstantPrices, case1), (AggregationCase::ZeroSwitchCost, case2)] {
            let full: SharedCosts = Arc::new(FullCosts::new(&cfg, inst.model.support(), inst.horizon));
            let reduced: SharedCosts =
                Arc::new(build_aggregated_model(case, &cfg, inst.model.support(), inst.horizon).unwrap());
            let a = backward_induction_with(&inst.model, full.clone(), inst.horizon, GAMMA, Decomposition::Joint)
                .unwrap();
            let b = backward_induction_with(&inst.model, reduced, inst.horizon, GAMMA, Decomposition::Joint)
                .unwrap();
            let same = (0..inst.horizon).all(|t| {
                (0..full.grid().len()).all(|xi| {
                    (0..inst.model.num_lambda()).all(|l| {
                        (0..inst.model.num_modes())
                            .all(|th| a.values.value_at(t, xi, l, th) == b.values.value_at(t, xi, l, th))
                    })
                })
            });
            solve_bad += usize::from(!same);
        }
    }
    let ok = disagg_bad == 0 && solve_bad == 0;
    report(
        "8",
        ok,
        &format!(
            "greedy disaggregation differs from enumeration in {disagg_bad}/{checked} cases; bijective solves differ in {solve_bad}/120"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_9_monte_carlo_search() {
    let _g = serial();
    let spec = InstanceSpec {
        max_blocks: 1,
        max_servers: 3,
        max_lambda: 2,
        max_modes: 2,
        max_classes: 1,
        max_horizon: 1,
        max_width: 0.1,
    };
    let inst = (0..)
        .map(|s| random_instance(s, &spec))
        .find(|i| i.model.num_modes() == 2 && i.config.blocks[0].servers == 3)
        .unwrap();
    let costs: SharedCosts = Arc::new(FullCosts::new(&inst.config, inst.model.support(), 1));
    let gamma = 0.8;
    let (opt, _) = flat_value_iteration(&inst.model, costs.as_ref(), gamma, 1e-10).unwrap();
    let found = monte_carlo_search(&inst.model, costs.clone(), gamma, 10_000, 1e-3, 9).unwrap();
    let grid = costs.grid().clone();
    let exact = evaluate_policy(&inst.model, costs.as_ref(), gamma, 1e-10, RowChoice::Adversarial, &|x, th| {
        grid.index(&found.policy.act(0, &grid.decode(x), th))
    })
    .unwrap();
    let (v_opt, v_mc) = (mean_value(&opt), mean_value(&exact));
    let gap = (v_mc - v_opt) / v_opt.abs();
    let ok = gap <= 0.02;
    report(
        "9",
        ok,
        &format!(
            "optimal mean value {v_opt:.6}, searched policy {v_mc:.6} (gap {:.3}%, {} sweeps)",
            gap * 100.0,
            found.sweeps
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_10_estimation_closed_loop() {
    let _g = serial();
    let truth = reference_traffic_model();
    let names: Vec<String> = REFERENCE_CLASSES.iter().map(|s| s.to_string()).collect();
    let (trace, _) = gen_synthetic_trace(&truth, &names, 8760, 10).unwrap();
    let clusters = cluster_modes(&trace, 3, 10).unwrap();
    let est = estimate_mode_model(&trace, &clusters.assignments, 3, 3, 0.9).unwrap();
    let mut chain_err = 0.0f64;
    for th in 0..3 {
        for (a, b) in est.nominal_row(0, th).iter().zip(truth.nominal_row(0, th)) {
            chain_err = chain_err.max((a - b).abs());
        }
    }
    let means = truth.mode_means();
    let mut center_err = 0.0f64;
    for (c, m) in clusters.centers.iter().zip(&means) {
        for (a, b) in c.iter().zip(m) {
            center_err = center_err.max((a - b).abs() / b.abs());
        }
    }
    let ok = chain_err <= 0.05 && center_err <= 0.05;
    report(
        "10",
        ok,
        &format!(
            "max chain-entry error {chain_err:.4} (tol 0.05); max relative center error {:.3}% (tol 5%)",
            center_err * 100.0
        ),
    );
    assert!(ok);
}
