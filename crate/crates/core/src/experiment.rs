//! Seeded sweeps over network size, SNR, trial and solver variant.
//!
//! Every trial draws its network, initial phases and noise from seeds mixed
//! out of `(base_seed, n, trial, stream)`. The SNR is not part of the mix,
//! so all SNR levels of a trial share the same network and the same unit
//! noise sequence, scaled differently.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;

use crate::dictionary::{build_node_problem, duplicate_column_groups, fold_duplicates, true_weight_vector, DictionarySpec};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::kuramoto::{calibrate_noise_for_snr, generate_network, random_initial_phases, simulate, NetworkSpec};
use crate::metrics::{nmse, support_metrics};
use crate::problem::{partition_columns, RegressionProblem, SolverConfig};
use crate::reweight::{reweighted_l2, reweighted_lasso, ReweightRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Reweighted lasso on the sharing ADMM.
    ReweightedL1,
    /// Reweighted ridge with closed-form steps.
    ReweightedL2,
    /// The first outer iteration of [`Variant::ReweightedL1`] alone.
    Lasso,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::ReweightedL1 => "rw-l1",
            Variant::ReweightedL2 => "rw-l2",
            Variant::Lasso => "lasso",
        }
    }

    pub fn solve(
        self,
        problem: &RegressionProblem,
        blocks: usize,
        cfg: &SolverConfig,
        exec: &Executor,
    ) -> Result<ReweightRun> {
        match self {
            Variant::ReweightedL1 => {
                let part = partition_columns(problem.cols(), blocks)?;
                reweighted_lasso(problem, &part, cfg, exec)
            }
            Variant::Lasso => {
                let part = partition_columns(problem.cols(), blocks)?;
                let cfg = SolverConfig {
                    max_reweight_iters: 1,
                    ..cfg.clone()
                };
                reweighted_lasso(problem, &part, &cfg, exec)
            }
            Variant::ReweightedL2 => reweighted_l2(problem, cfg),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rw-l1" | "reweighted-l1" => Ok(Variant::ReweightedL1),
            "rw-l2" | "reweighted-l2" => Ok(Variant::ReweightedL2),
            "lasso" => Ok(Variant::Lasso),
            other => Err(Error::InvalidConfig(format!("unknown variant `{other}`"))),
        }
    }
}

/// Seed streams of one trial.
pub mod stream {
    pub const NETWORK: u64 = 0;
    pub const INITIAL: u64 = 1;
    pub const NOISE: u64 = 2;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(base: u64, n: usize, trial: usize, stream: u64) -> u64 {
    let mut h = splitmix64(base);
    for part in [n as u64, trial as u64, stream] {
        h = splitmix64(h ^ part);
    }
    h
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub sizes: Vec<usize>,
    pub snrs_db: Vec<f64>,
    pub trials: usize,
    pub variants: Vec<Variant>,
    pub blocks: usize,
    pub workers_list: Vec<usize>,
    pub base_seed: u64,
    pub steps: usize,
    pub dt: f64,
    pub network: NetworkSpec,
    /// Nodes scored per trial; the noise is calibrated on the first.
    pub nodes: Vec<usize>,
    /// Relative threshold of the predicted support.
    pub support_rel_tol: f64,
    pub solver: SolverConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            sizes: vec![50],
            snrs_db: vec![5.0, 10.0, 15.0, 20.0, 25.0],
            trials: 50,
            variants: vec![Variant::ReweightedL1],
            blocks: 1,
            workers_list: vec![1],
            base_seed: 0,
            steps: 1000,
            dt: 0.1,
            network: NetworkSpec::default(),
            nodes: vec![0],
            support_rel_tol: 1e-3,
            solver: SolverConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("sizes", self.sizes.is_empty()),
            ("snrs", self.snrs_db.is_empty()),
            ("variants", self.variants.is_empty()),
            ("workers", self.workers_list.is_empty()),
            ("nodes", self.nodes.is_empty()),
        ];
        for (name, is_empty) in empty {
            if is_empty {
                return Err(Error::InvalidConfig(format!("sweep has no {name}")));
            }
        }
        if self.trials == 0 || self.blocks == 0 || self.steps == 0 {
            return Err(Error::InvalidConfig("trials, blocks and steps must be positive".into()));
        }
        if let Some(w) = self.workers_list.iter().find(|w| **w == 0) {
            return Err(Error::InvalidConfig(format!("bad worker count {w}")));
        }
        if let Some(s) = self.snrs_db.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad SNR {s}")));
        }
        for &n in &self.sizes {
            if let Some(node) = self.nodes.iter().find(|i| **i >= n) {
                return Err(Error::InvalidConfig(format!("node {node} outside network of size {n}")));
            }
        }
        self.solver.validate()
    }
}

/// One solve of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub n: usize,
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    pub node: usize,
    pub variant: Variant,
    pub workers: usize,
    pub blocks: usize,
    pub noise_std: f64,
    pub nmse: f64,
    pub precision: f64,
    pub recall: f64,
    pub empty_prediction: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub wall_time_seconds: f64,
    /// Set when the cell failed; the numeric fields are then NaN or zero.
    pub error: Option<String>,
}

impl TrialRecord {
    pub const HEADER: &'static str = "n,snr_db,trial,seed,node,variant,workers,blocks,noise_std,nmse,precision,recall,empty_prediction,outer_iterations,inner_iterations,wall_time_seconds,error";

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    fn csv_fields(&self, with_time: bool) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.snr_db,
            self.trial,
            self.seed,
            self.node,
            self.variant.name(),
            self.workers,
            self.blocks,
            self.noise_std,
            self.nmse,
            self.precision,
            self.recall,
            self.empty_prediction,
            self.outer_iterations,
            self.inner_iterations,
        );
        if with_time {
            write!(s, ",{}", self.wall_time_seconds).expect("write to string");
        }
        let err = self.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        write!(s, ",{err}").expect("write to string");
        s
    }

    pub fn csv_row(&self) -> String {
        self.csv_fields(true)
    }
}

/// Mean and sample standard deviation over the successful rows of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub n: usize,
    pub snr_db: f64,
    pub variant: Variant,
    pub workers: usize,
    pub count: usize,
    pub failures: usize,
    pub nmse_mean: f64,
    pub nmse_std: f64,
    pub precision_mean: f64,
    pub recall_mean: f64,
    pub wall_time_mean: f64,
}

impl AggregateRow {
    pub const HEADER: &'static str =
        "n,snr_db,variant,workers,count,failures,nmse_mean,nmse_std,precision_mean,recall_mean,wall_time_mean";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.snr_db,
            self.variant.name(),
            self.workers,
            self.count,
            self.failures,
            self.nmse_mean,
            self.nmse_std,
            self.precision_mean,
            self.recall_mean,
            self.wall_time_mean
        )
    }
}

/// `(mean, sample std)`; the std of fewer than two values is zero.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<TrialRecord>,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok()).count()
    }

    /// Rows grouped by `(n, snr, variant, workers)` in first-seen order.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut keys: Vec<(usize, f64, Variant, usize)> = Vec::new();
        for r in &self.rows {
            let key = (r.n, r.snr_db, r.variant, r.workers);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(n, snr_db, variant, workers)| {
                let cell: Vec<&TrialRecord> = self
                    .rows
                    .iter()
                    .filter(|r| r.n == n && r.snr_db == snr_db && r.variant == variant && r.workers == workers)
                    .collect();
                let good: Vec<&&TrialRecord> = cell.iter().filter(|r| r.ok()).collect();
                let pick = |f: fn(&TrialRecord) -> f64| good.iter().map(|r| f(r)).collect::<Vec<_>>();
                let (nmse_mean, nmse_std) = mean_std(&pick(|r| r.nmse));
                AggregateRow {
                    n,
                    snr_db,
                    variant,
                    workers,
                    count: good.len(),
                    failures: cell.len() - good.len(),
                    nmse_mean,
                    nmse_std,
                    precision_mean: mean_std(&pick(|r| r.precision)).0,
                    recall_mean: mean_std(&pick(|r| r.recall)).0,
                    wall_time_mean: mean_std(&pick(|r| r.wall_time_seconds)).0,
                }
            })
            .collect()
    }

    pub fn raw_csv(&self) -> String {
        let mut s = String::from(TrialRecord::HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn aggregate_csv(&self) -> String {
        let mut s = String::from(AggregateRow::HEADER);
        s.push('\n');
        for r in self.aggregate() {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    /// Every field except wall time, one line per row.
    pub fn determinism_key(&self) -> String {
        self.rows.iter().map(|r| r.csv_fields(false) + "\n").collect()
    }

    /// Same as [`Self::determinism_key`] with the worker count dropped too.
    pub fn determinism_key_across_workers(&self) -> String {
        self.rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.workers = 0;
                r.csv_fields(false) + "\n"
            })
            .collect()
    }
}

/// Network, noise level and per-node problems of one `(n, snr, trial)` cell.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub noise_std: f64,
    pub problems: Vec<(usize, RegressionProblem, DVector<f64>)>,
}

pub fn trial_data(spec: &SweepSpec, n: usize, snr_db: f64, trial: usize) -> Result<TrialData> {
    let net = &spec.network;
    let model = generate_network(
        n,
        net.density,
        net.weight_low,
        net.weight_high,
        net.omega_std,
        derive_seed(spec.base_seed, n, trial, stream::NETWORK),
    )?;
    let x0 = random_initial_phases(n, derive_seed(spec.base_seed, n, trial, stream::INITIAL));
    let noise_seed = derive_seed(spec.base_seed, n, trial, stream::NOISE);
    let noise_std = calibrate_noise_for_snr(&model, spec.dt, spec.steps, &x0, snr_db, spec.nodes[0], noise_seed)?;
    let series = simulate(&model, spec.dt, spec.steps, &x0, noise_std, noise_seed)?;
    let dict = DictionarySpec::default();
    let problems = spec
        .nodes
        .iter()
        .map(|&node| {
            let p = build_node_problem(&series, node, &dict, noise_std * noise_std)?;
            let w = true_weight_vector(&model, node, &dict)?;
            Ok((node, p, w))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialData { noise_std, problems })
}

/// Scores an estimate after crediting duplicate columns to their last member.
pub fn score(
    problem: &RegressionProblem,
    w_hat: &DVector<f64>,
    w_true: &DVector<f64>,
    rel_tol: f64,
) -> Result<(f64, crate::metrics::SupportMetrics)> {
    let groups = duplicate_column_groups(&problem.a);
    let w_hat = fold_duplicates(w_hat, &groups);
    let w_true = fold_duplicates(w_true, &groups);
    Ok((nmse(&w_hat, &w_true)?, support_metrics(&w_hat, &w_true, rel_tol)?))
}

/// Runs every cell. Failures inside a cell become rows with `error` set.
pub fn run_sweep(spec: &SweepSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let executors = spec
        .workers_list
        .iter()
        .map(|&w| Executor::new(w))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &n in &spec.sizes {
        for &snr_db in &spec.snrs_db {
            for trial in 0..spec.trials {
                let seed = derive_seed(spec.base_seed, n, trial, stream::NETWORK);
                let blank = |node, variant, workers, noise_std, error: String| TrialRecord {
                    n,
                    snr_db,
                    trial,
                    seed,
                    node,
                    variant,
                    workers,
                    blocks: spec.blocks,
                    noise_std,
                    nmse: f64::NAN,
                    precision: f64::NAN,
                    recall: f64::NAN,
                    empty_prediction: false,
                    outer_iterations: 0,
                    inner_iterations: 0,
                    wall_time_seconds: 0.0,
                    error: Some(error),
                };
                let data = match trial_data(spec, n, snr_db, trial) {
                    Ok(d) => d,
                    Err(e) => {
                        for &node in &spec.nodes {
                            for &variant in &spec.variants {
                                for &workers in &spec.workers_list {
                                    rows.push(blank(node, variant, workers, f64::NAN, e.to_string()));
                                }
                            }
                        }
                        continue;
                    }
                };
                for (node, problem, w_true) in &data.problems {
                    for &variant in &spec.variants {
                        for (exec, &workers) in executors.iter().zip(&spec.workers_list) {
                            let cfg = SolverConfig {
                                workers,
                                seed,
                                ..spec.solver.clone()
                            };
                            let start = Instant::now();
                            let outcome = variant.solve(problem, spec.blocks, &cfg, exec);
                            let elapsed = start.elapsed().as_secs_f64();
                            let scored = outcome.and_then(|run| {
                                let s = score(problem, &run.estimate.w_hat, w_true, spec.support_rel_tol)?;
                                Ok((run, s))
                            });
                            match scored {
                                Ok((run, (e, sm))) => rows.push(TrialRecord {
                                    n,
                                    snr_db,
                                    trial,
                                    seed,
                                    node: *node,
                                    variant,
                                    workers,
                                    blocks: spec.blocks,
                                    noise_std: data.noise_std,
                                    nmse: e,
                                    precision: sm.precision,
                                    recall: sm.recall,
                                    empty_prediction: sm.empty_prediction,
                                    outer_iterations: run.estimate.outer_iterations,
                                    inner_iterations: run.estimate.inner_iterations,
                                    wall_time_seconds: elapsed.max(f64::MIN_POSITIVE),
                                    error: None,
                                }),
                                Err(e) => rows.push(blank(*node, variant, workers, data.noise_std, e.to_string())),
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ExperimentReport { rows })
}
