//! Command-line surface: ingest, gen-trace, solve, simulate, compare and
//! check. Exit codes: 0 success, 1 usage error, 2 validation or input
//! error, 3 an instance that needs the big-M penalty even at full capacity.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::aggregate::{build_aggregated_model, AggregationCase};
use crate::check::{run_checks, CheckOptions};
use crate::error::{Error, Result};
use crate::export::{digest, Metadata};
use crate::ingest::{cluster_modes, estimate_mode_model, gen_synthetic_trace, parse_trace, write_trace};
use crate::model::{ConfigDocument, DataCenterConfig};
use crate::modes::{ModeModel, Robustness};
use crate::mpc::MpcPolicy;
use crate::qos::{big_m, penalized_qos_cost};
use crate::sim::{
    compare_policies, default_start, run_batch, run_rng, sample_trajectory, write_trajectories_csv, Comparison,
    Dynamics, Environment, Policy, ThresholdRule, Trajectory,
};
use crate::solver::{
    backward_induction, infinite_horizon_solve, monte_carlo_search, FullCosts, SharedCosts, ThresholdPolicy,
    ValueTable,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "robust-dc", version, about = "Robust capacity control for heterogeneous data centers")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a mode model from an arrival trace.
    Ingest(IngestArgs),
    /// Sample a synthetic trace from a mode model.
    GenTrace(GenTraceArgs),
    /// Compute threshold policies and values.
    Solve(SolveArgs),
    /// Simulate a stored threshold policy.
    Simulate(SimulateArgs),
    /// Compare the threshold policy with the MPC baseline and custom policies.
    Compare(CompareArgs),
    /// Run the invariant suite on a reduced copy of an instance.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct InstanceArgs {
    /// Data-center configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Mode model file; defaults to `[modes].model` of the configuration.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RobustArg {
    Interval,
    Kl,
    Off,
}

#[derive(Debug, Args)]
struct RobustArgs {
    /// Uncertainty sets used for the chain rows.
    #[arg(long, value_enum, default_value_t = RobustArg::Interval)]
    robust: RobustArg,
    /// Radius of the KL balls with `--robust kl`.
    #[arg(long, default_value_t = 0.05)]
    kl_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AggregateArg {
    None,
    Case1,
    Case2,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Comma-separated class columns; default: every column of the trace.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<String>,
    #[arg(long, default_value_t = 3)]
    modes: usize,
    /// Quantile levels per class and mode.
    #[arg(long, default_value_t = 3)]
    levels: usize,
    /// Confidence level of the chain intervals.
    #[arg(long, default_value_t = 0.9)]
    confidence: f64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the mode of every slot.
    #[arg(long)]
    assignments: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenTraceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 8760)]
    slots: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write the hidden mode of every slot.
    #[arg(long)]
    modes_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 24)]
    horizon: usize,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[command(flatten)]
    robust: RobustArgs,
    /// Solve over per-type server counts.
    #[arg(long, value_enum, default_value_t = AggregateArg::None)]
    aggregate: AggregateArg,
    /// Stationary policy by value iteration.
    #[arg(long, conflicts_with = "mc")]
    infinite: bool,
    /// Value-iteration stopping threshold.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Stationary policy by Monte-Carlo coordinate search.
    #[arg(long)]
    mc: bool,
    /// Rollouts per Monte-Carlo estimate.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Monte-Carlo stopping precision.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Directory receiving `policy.csv` and `values.csv`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Write values for every slot instead of the first one only.
    #[arg(long)]
    all_slots: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Threshold policy written by `solve`.
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[arg(long, default_value_t = 24)]
    horizon: usize,
    /// Per-slot statistics output.
    #[arg(long)]
    out: PathBuf,
    /// Trajectory output for the first `--keep` runs.
    #[arg(long)]
    trajectories: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    keep: usize,
    /// Draw modes from worst-case rows of a robust solve instead of nominal rows.
    #[arg(long)]
    adversarial: bool,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[command(flatten)]
    robust: RobustArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 24)]
    horizon: usize,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[command(flatten)]
    robust: RobustArgs,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    /// Extra threshold policies, labelled by file stem.
    #[arg(long)]
    custom: Vec<PathBuf>,
    #[arg(long)]
    adversarial: bool,
    /// Band CSV output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 3)]
    max_servers: u32,
    #[arg(long, default_value_t = 3)]
    horizon: usize,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse `argv` (including the program name), run the subcommand and return
/// the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.jobs {
        // a pool may already exist when dispatch runs twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let seed = cli.seed;
    let outcome = match cli.command {
        Command::Ingest(a) => ingest(a, seed),
        Command::GenTrace(a) => gen_trace(a, seed),
        Command::Solve(a) => solve(a, seed),
        Command::Simulate(a) => simulate(a, seed),
        Command::Compare(a) => compare(a, seed),
        Command::Check(a) => check(a, seed),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_VALIDATION
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

struct Instance {
    cfg: DataCenterConfig,
    model: ModeModel,
    bytes: Vec<Vec<u8>>,
}

fn load_instance(args: &InstanceArgs) -> Result<Instance> {
    let cfg_bytes = read_bytes(&args.config)?;
    let text = String::from_utf8_lossy(&cfg_bytes);
    let doc = ConfigDocument::parse(&text, &args.config)?;
    let model_path = match (&args.model, &doc.modes.model) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => args.config.parent().unwrap_or(Path::new(".")).join(p),
        (None, None) => {
            return Err(Error::validation(
                "no mode model: pass --model or set `model` under [modes]",
            ))
        }
    };
    let model_bytes = read_bytes(&model_path)?;
    let model = ModeModel::parse(&String::from_utf8_lossy(&model_bytes), &model_path)?;
    if model.num_classes() != doc.config.num_classes() {
        return Err(Error::validation(format!(
            "mode model has {} classes, configuration has {}",
            model.num_classes(),
            doc.config.num_classes()
        )));
    }
    Ok(Instance {
        cfg: doc.config,
        model,
        bytes: vec![cfg_bytes, model_bytes],
    })
}

impl Instance {
    fn digest(&self, settings: &str) -> String {
        let mut parts: Vec<&[u8]> = vec![settings.as_bytes()];
        parts.extend(self.bytes.iter().map(Vec::as_slice));
        digest(&parts)
    }

    fn robust_model(&self, r: &RobustArgs) -> Result<ModeModel> {
        self.model.with_robustness(match r.robust {
            RobustArg::Interval => Robustness::Interval,
            RobustArg::Kl => Robustness::Kl(r.kl_radius),
            RobustArg::Off => Robustness::Off,
        })
    }

    /// True when some support point overwhelms the full fleet.
    fn infeasible(&self) -> bool {
        let top = self.cfg.caps();
        self.model
            .support()
            .iter()
            .any(|l| !penalized_qos_cost(&top, l, &self.cfg, 1.0).1)
    }
}

fn warn_infeasible(code: i32) -> i32 {
    eprintln!("warning: some arrival rates exceed the full fleet's capacity; big-M penalties are in the costs");
    code.max(EXIT_INFEASIBLE)
}

fn ingest(a: IngestArgs, seed: u64) -> Result<i32> {
    let series = parse_trace(&a.trace, &a.classes)?;
    let clusters = cluster_modes(&series, a.modes, seed)?;
    let model = estimate_mode_model(&series, &clusters.assignments, a.modes, a.levels, a.confidence)?;
    let settings = format!("ingest modes={} levels={} confidence={}", a.modes, a.levels, a.confidence);
    let meta = Metadata::new(digest(&[settings.as_bytes(), &read_bytes(&a.trace)?]), seed)
        .note("chain_intervals", format!("normal approximation at confidence {}", a.confidence))
        .note("lambda_grid", format!("{} quantiles per class and mode", a.levels));
    meta.write_file(&a.out, |buf| {
        buf.extend_from_slice(model.to_toml(&series.class_names).as_bytes());
        Ok(())
    })?;
    if let Some(path) = &a.assignments {
        meta.write_file(path, |buf| {
            buf.extend_from_slice(b"timestamp,mode\n");
            for (ts, m) in series.timestamps.iter().zip(&clusters.assignments) {
                buf.extend_from_slice(format!("{ts},{m}\n").as_bytes());
            }
            Ok(())
        })?;
    }
    println!(
        "{} slots, {} modes, {} support points, inertia {:.6e}",
        series.len(),
        a.modes,
        model.num_lambda(),
        clusters.inertia
    );
    Ok(EXIT_OK)
}

fn gen_trace(a: GenTraceArgs, seed: u64) -> Result<i32> {
    let bytes = read_bytes(&a.model)?;
    let (model, mut names) = ModeModel::parse_with_classes(&String::from_utf8_lossy(&bytes), &a.model)?;
    if names.is_empty() {
        names = (0..model.num_classes()).map(|j| format!("class{j}")).collect();
    }
    let (series, modes) = gen_synthetic_trace(&model, &names, a.slots, seed)?;
    let settings = format!("gen-trace slots={}", a.slots);
    let meta = Metadata::new(digest(&[settings.as_bytes(), &bytes]), seed);
    meta.write_file(&a.out, |buf| write_trace(&series, buf))?;
    if let Some(path) = &a.modes_out {
        meta.write_file(path, |buf| {
            buf.extend_from_slice(b"timestamp,mode\n");
            for (ts, m) in series.timestamps.iter().zip(&modes) {
                buf.extend_from_slice(format!("{ts},{m}\n").as_bytes());
            }
            Ok(())
        })?;
    }
    println!("{} slots written to {}", series.len(), a.out.display());
    Ok(EXIT_OK)
}

fn robust_label(r: &RobustArgs) -> String {
    match r.robust {
        RobustArg::Interval => "interval".into(),
        RobustArg::Kl => format!("kl:{}", r.kl_radius),
        RobustArg::Off => "off".into(),
    }
}

fn full_costs(inst: &Instance, horizon: usize) -> SharedCosts {
    Arc::new(FullCosts::new(&inst.cfg, inst.model.support(), horizon))
}

fn solve(a: SolveArgs, seed: u64) -> Result<i32> {
    let inst = load_instance(&a.instance)?;
    let model = inst.robust_model(&a.robust)?;
    let costs: SharedCosts = match a.aggregate {
        AggregateArg::None => full_costs(&inst, a.horizon),
        AggregateArg::Case1 | AggregateArg::Case2 => {
            let case = if a.aggregate == AggregateArg::Case1 {
                AggregationCase::ConstantPrices
            } else {
                AggregationCase::ZeroSwitchCost
            };
            Arc::new(build_aggregated_model(case, &inst.cfg, model.support(), a.horizon)?)
        }
    };
    let method = if a.mc {
        "monte-carlo"
    } else if a.infinite {
        "value-iteration"
    } else {
        "backward-induction"
    };
    let settings = format!(
        "solve horizon={} gamma={} robust={} aggregate={:?} method={method} tol={} n={} eps={}",
        a.horizon,
        a.gamma,
        robust_label(&a.robust),
        a.aggregate,
        a.tol,
        a.n,
        a.eps
    );
    let mut meta = Metadata::new(inst.digest(&settings), seed)
        .note("method", method)
        .note("robust", robust_label(&a.robust))
        .note("gamma", a.gamma)
        .note(
            "state",
            if a.aggregate == AggregateArg::None {
                "servers on per block"
            } else {
                "servers on per type"
            },
        );
    let (policy, values): (ThresholdPolicy, Option<ValueTable>) = if a.mc {
        let r = monte_carlo_search(&model, costs, a.gamma, a.n, a.eps, seed)?;
        println!(
            "monte-carlo: {} sweeps, adversarial estimate {:.6} (se {:.3e}), nominal {:.6} (se {:.3e})",
            r.sweeps, r.adversarial.mean, r.adversarial.std_err, r.nominal.mean, r.nominal.std_err
        );
        meta = meta
            .note("mc_adversarial_mean", r.adversarial.mean)
            .note("mc_nominal_mean", r.nominal.mean)
            .note("mc_start", "uniform over states");
        (r.policy, None)
    } else if a.infinite {
        let r = infinite_horizon_solve(&model, costs, a.gamma, a.tol)?;
        println!("value iteration: {} iterations", r.iterations);
        meta = meta.note("iterations", r.iterations);
        (r.policy, Some(r.values))
    } else {
        meta = meta.note("horizon", a.horizon);
        let s = backward_induction(&model, costs, a.horizon, a.gamma)?;
        (s.policy, Some(s.values))
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let policy_path = a.out.join("policy.csv");
    meta.write_file(&policy_path, |buf| policy.write_csv(buf))?;
    if let Some(values) = &values {
        let slots = if a.all_slots && !values.is_stationary() {
            0..values.horizon()
        } else {
            0..1
        };
        meta.clone()
            .note("value_slots", format!("{}..{}", slots.start, slots.end))
            .write_file(&a.out.join("values.csv"), |buf| values.write_slots_csv(buf, slots))?;
    }
    println!(
        "policy for {} slot(s), {} mode(s) written to {}",
        policy.horizon(),
        policy.num_modes(),
        policy_path.display()
    );
    Ok(if inst.infeasible() { warn_infeasible(EXIT_OK) } else { EXIT_OK })
}

fn load_policy(path: &Path) -> Result<ThresholdPolicy> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ThresholdPolicy::read_csv(file, path)
}

fn environment(inst: &Instance, adversarial: bool, robust: &RobustArgs, horizon: usize, gamma: f64) -> Result<Environment> {
    let costs = full_costs(inst, horizon);
    let dynamics = if adversarial {
        let model = inst.robust_model(robust)?;
        Dynamics::Adversarial(backward_induction(&model, costs.clone(), horizon, gamma)?.values)
    } else {
        Dynamics::Nominal
    };
    Ok(Environment {
        model: inst.model.clone(),
        costs,
        dynamics,
    })
}

fn check_policy_shape(policy: &ThresholdPolicy, inst: &Instance) -> Result<()> {
    if policy.num_blocks() != inst.cfg.num_blocks() || policy.num_modes() != inst.model.num_modes() {
        return Err(Error::validation(format!(
            "policy covers {} blocks and {} modes, instance has {} and {}",
            policy.num_blocks(),
            policy.num_modes(),
            inst.cfg.num_blocks(),
            inst.model.num_modes()
        )));
    }
    Ok(())
}

fn simulate(a: SimulateArgs, seed: u64) -> Result<i32> {
    let inst = load_instance(&a.instance)?;
    let policy_bytes = read_bytes(&a.policy)?;
    let policy = ThresholdPolicy::read_csv(&policy_bytes[..], &a.policy)?;
    check_policy_shape(&policy, &inst)?;
    let env = environment(&inst, a.adversarial, &a.robust, a.horizon, a.gamma)?;
    let s0 = default_start(&env);
    let rule = ThresholdRule {
        label: a.policy.file_stem().map_or("policy".into(), |s| s.to_string_lossy().into_owned()),
        policy,
    };
    let stats = run_batch(&env, &rule, &s0, a.runs, a.horizon, seed)?;
    let settings = format!(
        "simulate runs={} horizon={} adversarial={} gamma={} robust={}",
        a.runs,
        a.horizon,
        a.adversarial,
        a.gamma,
        robust_label(&a.robust)
    );
    let mut parts: Vec<&[u8]> = vec![settings.as_bytes(), &policy_bytes];
    parts.extend(inst.bytes.iter().map(Vec::as_slice));
    let meta = Metadata::new(digest(&parts), seed)
        .note("dynamics", if a.adversarial { "worst-case rows" } else { "nominal rows" })
        .note("start", format!("x={:?} lambda={} mode={}", s0.x, s0.l, s0.theta));
    let final_mean = stats.mean.last().copied().unwrap_or(0.0);
    let report = Comparison {
        horizon: a.horizon,
        stats: vec![stats],
    };
    meta.write_file(&a.out, |buf| report.write_csv(buf))?;
    if let Some(path) = &a.trajectories {
        let trajectories = (0..a.keep.min(a.runs) as u64)
            .map(|run| {
                Ok(Trajectory {
                    label: rule.label.clone(),
                    seed,
                    run,
                    steps: sample_trajectory(&env, &rule, &s0, a.horizon, &mut run_rng(seed, run))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        meta.write_file(path, |buf| write_trajectories_csv(&trajectories, buf))?;
    }
    println!("mean cumulative cost after {} slots: {final_mean:.6}", a.horizon);
    Ok(if inst.infeasible() { warn_infeasible(EXIT_OK) } else { EXIT_OK })
}

fn compare(a: CompareArgs, seed: u64) -> Result<i32> {
    let inst = load_instance(&a.instance)?;
    let model = inst.robust_model(&a.robust)?;
    let env = environment(&inst, a.adversarial, &a.robust, a.horizon, a.gamma)?;
    let solved = backward_induction(&model, env.costs.clone(), a.horizon, a.gamma)?;
    let mdp = ThresholdRule {
        label: "mdp".into(),
        policy: solved.policy,
    };
    let penalty = big_m(&inst.cfg, inst.model.support(), a.horizon);
    let mpc = MpcPolicy::new(inst.cfg.clone(), inst.model.clone(), penalty);
    let mut customs = Vec::new();
    let mut custom_bytes = Vec::new();
    for path in &a.custom {
        let policy = load_policy(path)?;
        check_policy_shape(&policy, &inst)?;
        custom_bytes.push(read_bytes(path)?);
        customs.push(ThresholdRule {
            label: path.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned()),
            policy,
        });
    }
    let mut policies: Vec<&dyn Policy> = vec![&mdp, &mpc];
    policies.extend(customs.iter().map(|c| c as &dyn Policy));
    let s0 = default_start(&env);
    let report = compare_policies(&env, &policies, &s0, a.runs, a.horizon, seed)?;
    let settings = format!(
        "compare runs={} horizon={} gamma={} robust={} adversarial={}",
        a.runs,
        a.horizon,
        a.gamma,
        robust_label(&a.robust),
        a.adversarial
    );
    let mut parts: Vec<&[u8]> = vec![settings.as_bytes()];
    parts.extend(inst.bytes.iter().map(Vec::as_slice));
    parts.extend(custom_bytes.iter().map(Vec::as_slice));
    let meta = Metadata::new(digest(&parts), seed)
        .note("mpc_forecast", "box over the support reachable from the current mode")
        .note("dynamics", if a.adversarial { "worst-case rows" } else { "nominal rows" })
        .note("start", format!("x={:?} lambda={} mode={}", s0.x, s0.l, s0.theta));
    meta.write_file(&a.out, |buf| report.write_csv(buf))?;
    for s in &report.stats {
        println!(
            "{}: mean {:.6} std {:.6} after {} slots",
            s.label,
            s.mean.last().copied().unwrap_or(0.0),
            s.std.last().copied().unwrap_or(0.0),
            a.horizon
        );
    }
    let (d, se) = report.paired_difference(0, 1);
    println!("mdp - mpc: {d:.6} (paired se {se:.6})");
    Ok(if inst.infeasible() { warn_infeasible(EXIT_OK) } else { EXIT_OK })
}

fn check(a: CheckArgs, seed: u64) -> Result<i32> {
    let inst = load_instance(&a.instance)?;
    let opts = CheckOptions {
        max_servers: a.max_servers,
        horizon: a.horizon,
        gamma: a.gamma,
    };
    let report = run_checks(&inst.cfg, &inst.model, &opts)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    print!("{}", String::from_utf8_lossy(&buf));
    if let Some(path) = &a.out {
        let settings = format!("check max_servers={} horizon={} gamma={}", a.max_servers, a.horizon, a.gamma);
        Metadata::new(inst.digest(&settings), seed).write_file(path, |out| {
            out.extend_from_slice(&buf);
            Ok(())
        })?;
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_VALIDATION })
}
