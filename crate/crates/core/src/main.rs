use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use netrecon::dictionary::{build_node_problem, estimate_sigma2, increments, true_weight_vector, DictionarySpec};
use netrecon::exec::Executor;
use netrecon::experiment::{run_sweep, score, SweepSpec, Variant};
use netrecon::io::{self, with_suffix};
use netrecon::kuramoto::{
    calibrate_noise_for_snr, generate_network, random_initial_phases, simulate, KuramotoModel, NetworkSpec,
    TimeSeries,
};
use netrecon::metrics::nmse;
use netrecon::problem::{validate_problem, RegressionProblem, SolverConfig};
use netrecon::{Error, Result};

#[derive(Parser)]
#[command(name = "netrecon", version, about = "Sparse reconstruction of oscillator networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random Kuramoto network and simulate it.
    Simulate(SimulateArgs),
    /// Build per-node regression problems from a simulation.
    BuildDict(BuildDictArgs),
    /// Solve one regression problem.
    Solve(SolveArgs),
    /// Run a seeded sweep and write raw and aggregate CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 50)]
    nodes: usize,
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    weight_low: f64,
    #[arg(long, default_value_t = 10.0)]
    weight_high: f64,
    #[arg(long, default_value_t = 10f64.sqrt())]
    omega_std: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    /// Target SNR on `--snr-node`; overrides `--noise-std`.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    snr_node: usize,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildDictArgs {
    /// Prefix written by `simulate`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, conflicts_with = "all_nodes")]
    node: Option<usize>,
    #[arg(long)]
    all_nodes: bool,
    /// Noise variance; defaults to the simulated noise level, else an estimate from y.
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Prefix written by `build-dict`.
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, default_value = "rw-l1")]
    variant: Variant,
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    max_reweight: Option<usize>,
    #[arg(long)]
    prune_rel: Option<f64>,
    #[arg(long)]
    lambda_scale: Option<f64>,
    /// `key=value` solver settings, applied before the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ground-truth weights for scoring.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    support_rel_tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "50")]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25", allow_hyphen_values = true)]
    snrs: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "rw-l1,lasso")]
    variants: Vec<Variant>,
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    workers_list: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    nodes: Vec<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_prefix: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(|_| 0),
        Command::BuildDict(a) => cmd_build_dict(a).map(|_| 0),
        Command::Solve(a) => cmd_solve(a).map(|_| 0),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let model = generate_network(a.nodes, a.density, a.weight_low, a.weight_high, a.omega_std, a.seed)?;
    let x0 = random_initial_phases(a.nodes, a.seed.wrapping_add(1));
    let noise_seed = a.seed.wrapping_add(2);
    let noise_std = match a.snr_db {
        Some(t) => calibrate_noise_for_snr(&model, a.dt, a.steps, &x0, t, a.snr_node, noise_seed)?,
        None => a.noise_std,
    };
    let series = simulate(&model, a.dt, a.steps, &x0, noise_std, noise_seed)?;
    io::write_matrix(&with_suffix(&a.out, "_phases.csv"), &series.phases)?;
    io::write_matrix(&with_suffix(&a.out, "_noise.csv"), &series.noise_record)?;
    io::write_matrix(&with_suffix(&a.out, "_coupling.csv"), &model.coupling)?;
    io::write_vector(&with_suffix(&a.out, "_omega.csv"), &model.omega)?;
    let mut meta = BTreeMap::new();
    meta.insert("nodes".into(), a.nodes.to_string());
    meta.insert("steps".into(), a.steps.to_string());
    meta.insert("dt".into(), a.dt.to_string());
    meta.insert("noise_std".into(), noise_std.to_string());
    meta.insert("seed".into(), a.seed.to_string());
    meta.insert("edges".into(), model.edge_count().to_string());
    if let Some(t) = a.snr_db {
        meta.insert("target_snr_db".into(), t.to_string());
        meta.insert("snr_node".into(), a.snr_node.to_string());
        meta.insert("realized_snr_db".into(), series.snr_db_realized[a.snr_node].to_string());
    }
    io::write_key_values(&with_suffix(&a.out, "_meta.txt"), &meta)?;
    println!(
        "simulated {} nodes, {} edges, {} steps, noise_std {}",
        a.nodes,
        model.edge_count(),
        a.steps,
        noise_std
    );
    Ok(())
}

fn load_series(prefix: &Path) -> Result<(TimeSeries, BTreeMap<String, String>)> {
    let meta = io::read_key_values(&with_suffix(prefix, "_meta.txt"))?;
    let dt: f64 = io::lookup_parsed(&meta, "dt")?;
    let phases = io::read_matrix(&with_suffix(prefix, "_phases.csv"))?;
    let noise_path = with_suffix(prefix, "_noise.csv");
    let noise_record = if noise_path.exists() {
        io::read_matrix(&noise_path)?
    } else {
        DMatrix::zeros(phases.nrows().saturating_sub(1), phases.ncols())
    };
    let n = phases.ncols();
    let series = TimeSeries {
        times: (0..phases.nrows()).map(|k| k as f64 * dt).collect(),
        phases,
        dt,
        noise_record,
        snr_db_realized: vec![f64::NAN; n],
    };
    Ok((series, meta))
}

fn load_model(prefix: &Path) -> Option<KuramotoModel> {
    let coupling = io::read_matrix(&with_suffix(prefix, "_coupling.csv")).ok()?;
    let omega = io::read_vector(&with_suffix(prefix, "_omega.csv")).ok()?;
    KuramotoModel::new(omega, coupling).ok()
}

fn cmd_build_dict(a: BuildDictArgs) -> Result<()> {
    let (series, meta) = load_series(&a.data)?;
    let n = series.nodes();
    let nodes: Vec<usize> = match (a.node, a.all_nodes) {
        (Some(i), false) => vec![i],
        (None, true) => (0..n).collect(),
        _ => return Err(Error::InvalidConfig("pass exactly one of --node or --all-nodes".into())),
    };
    let model = load_model(&a.data);
    let spec = DictionarySpec::default();
    let known: Option<f64> = meta.get("noise_std").and_then(|v| v.parse().ok());
    for &node in &nodes {
        let sigma2 = match (a.sigma2, known) {
            (Some(s), _) => s,
            (None, Some(std)) => std * std,
            (None, None) => estimate_sigma2(&increments(&series, node)),
        };
        let problem = build_node_problem(&series, node, &spec, sigma2)?;
        let prefix = if a.all_nodes {
            with_suffix(&a.out, &format!("_node{node}"))
        } else {
            a.out.clone()
        };
        write_problem(&prefix, &problem)?;
        if let Some(m) = &model {
            io::write_vector(&with_suffix(&prefix, "_wtrue.csv"), &true_weight_vector(m, node, &spec)?)?;
        }
    }
    println!("built {} problem(s) with {} columns", nodes.len(), spec.width(n));
    Ok(())
}

fn write_problem(prefix: &Path, p: &RegressionProblem) -> Result<()> {
    io::write_matrix(&with_suffix(prefix, "_A.csv"), &p.a)?;
    io::write_vector(&with_suffix(prefix, "_y.csv"), &p.y)?;
    io::write_labels(&with_suffix(prefix, "_labels.csv"), &p.column_labels)?;
    let mut meta = BTreeMap::new();
    meta.insert("sigma2".into(), p.sigma2.to_string());
    meta.insert("rows".into(), p.rows().to_string());
    meta.insert("cols".into(), p.cols().to_string());
    io::write_key_values(&with_suffix(prefix, "_meta.txt"), &meta)
}

fn read_problem(prefix: &Path, sigma2: Option<f64>) -> Result<RegressionProblem> {
    let a = io::read_matrix(&with_suffix(prefix, "_A.csv"))?;
    let y = io::read_vector(&with_suffix(prefix, "_y.csv"))?;
    let labels_path = with_suffix(prefix, "_labels.csv");
    let column_labels = if labels_path.exists() {
        io::read_labels(&labels_path)?
    } else {
        netrecon::problem::default_labels(a.ncols())
    };
    let sigma2 = match sigma2 {
        Some(s) => s,
        None => {
            let meta_path = with_suffix(prefix, "_meta.txt");
            if meta_path.exists() {
                io::lookup_parsed(&io::read_key_values(&meta_path)?, "sigma2")?
            } else {
                estimate_sigma2(&y)
            }
        }
    };
    validate_problem(RegressionProblem {
        y,
        a,
        sigma2,
        column_labels,
    })
}

fn solver_config(path: Option<&Path>) -> Result<SolverConfig> {
    match path {
        Some(p) => std::fs::read_to_string(p)?.parse(),
        None => Ok(SolverConfig::default()),
    }
}

fn cmd_solve(a: SolveArgs) -> Result<()> {
    let problem = read_problem(&a.problem, a.sigma2)?;
    let mut cfg = solver_config(a.config.as_deref())?;
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(k) = a.max_reweight {
        cfg.max_reweight_iters = k;
    }
    if let Some(p) = a.prune_rel {
        cfg.prune_rel = p;
    }
    if let Some(l) = a.lambda_scale {
        cfg.lambda_scale = l;
    }
    cfg.validate()?;
    let exec = Executor::new(cfg.workers)?;
    let run = a.variant.solve(&problem, a.blocks, &cfg, &exec)?;

    io::write_vector(&with_suffix(&a.out, "_w.csv"), &run.estimate.w_hat)?;
    let mut residuals = String::from("outer,iteration,e_primal,e_dual,objective\n");
    for (outer, row) in &run.residual_log {
        residuals.push_str(&format!(
            "{outer},{},{},{},{}\n",
            row.iteration, row.e_primal, row.e_dual, row.objective
        ));
    }
    std::fs::write(with_suffix(&a.out, "_residuals.csv"), residuals)?;
    let mut trace = String::from("outer,active_count,dual_objective\n");
    for h in &run.history {
        trace.push_str(&format!("{},{},{}\n", h.iteration, h.active_count, h.dual_objective));
    }
    std::fs::write(with_suffix(&a.out, "_trace.csv"), trace)?;

    println!(
        "variant {} lambda {} outer {} inner {} support {}",
        a.variant.name(),
        run.lambda.value,
        run.estimate.outer_iterations,
        run.estimate.inner_iterations,
        run.estimate.support.len()
    );
    for &j in &run.estimate.support {
        println!("  {} {}", problem.column_labels[j], run.estimate.w_hat[j]);
    }
    if let Some(path) = &a.truth {
        let truth: DVector<f64> = io::read_vector(path)?;
        let raw = nmse(&run.estimate.w_hat, &truth)?;
        let (folded, sm) = score(&problem, &run.estimate.w_hat, &truth, a.support_rel_tol)?;
        println!(
            "nmse {raw} nmse_folded {folded} precision {} recall {}",
            sm.precision, sm.recall
        );
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<u8> {
    let spec = SweepSpec {
        sizes: a.sizes,
        snrs_db: a.snrs,
        trials: a.trials,
        variants: a.variants,
        blocks: a.blocks,
        workers_list: a.workers_list,
        base_seed: a.base_seed,
        steps: a.steps,
        dt: a.dt,
        network: NetworkSpec::default(),
        nodes: a.nodes,
        solver: solver_config(a.config.as_deref())?,
        ..SweepSpec::default()
    };
    let report = run_sweep(&spec)?;
    std::fs::write(with_suffix(&a.out_prefix, "_raw.csv"), report.raw_csv())?;
    std::fs::write(with_suffix(&a.out_prefix, "_aggregate.csv"), report.aggregate_csv())?;
    print!("{}", report.aggregate_csv());
    let failures = report.failures();
    if failures > 0 {
        eprintln!("{failures} of {} cells failed", report.rows.len());
        Ok(2)
    } else {
        Ok(0)
    }
}
