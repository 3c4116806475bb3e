//! Sharing-form ADMM across column blocks.
//!
//! The weighted lasso `1/2 ||A w - y||^2 + lambda ||Theta w||_1` is split into
//! `P` column blocks coupled only through the sum of their partial predictions
//! `A_i w_i`. Each iteration
//!
//! 1. solves `P` independent block lassos against the local targets
//!    `b_i = A_i w_i + z_bar - avg(Aw) - u` (in parallel),
//! 2. averages the partial predictions in fixed block order,
//! 3. updates `z_bar = (y + rho avg(Aw) + rho u) / (P + rho)` and the single
//!    scaled dual `u += avg(Aw) - z_bar`.
//!
//! Columns whose weight is `+inf` are pruned: they are held at zero and never
//! enter a block solve.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::lasso::{InnerState, ResidualReport, StopRule, WeightedLasso};
use crate::problem::{BlockPartition, RegressionProblem, SolverConfig};

/// One row of the per-iteration residual log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualLogRow {
    pub iteration: usize,
    pub e_primal: f64,
    pub e_dual: f64,
    pub objective: f64,
}

/// Per-block iterates.
#[derive(Debug, Clone)]
pub struct BlockState {
    pub range: Range<usize>,
    /// Global indices of the columns still in play.
    pub active: Vec<usize>,
    /// Weights over the whole block range, zero on pruned columns.
    pub w: DVector<f64>,
    /// `A_i w_i`.
    pub prediction: DVector<f64>,
    /// Inner ADMM iterates over the active columns.
    pub inner: InnerState,
    /// Whether the last update was settled by the zero test.
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct SharingState {
    pub blocks: Vec<BlockState>,
    pub z_bar: DVector<f64>,
    /// The single scaled dual shared by every block.
    pub u: DVector<f64>,
    /// `(1/P) sum_i A_i w_i`, as used in the last update.
    pub avg_prediction: DVector<f64>,
    pub iteration: usize,
    pub residual_report: ResidualReport,
    pub inner_iterations: usize,
    pub log: Vec<ResidualLogRow>,
}

impl SharingState {
    fn cold(m: usize, partition: &BlockPartition) -> Self {
        let blocks = partition
            .ranges()
            .iter()
            .map(|r| BlockState {
                range: r.clone(),
                active: r.clone().collect(),
                w: DVector::zeros(r.len()),
                prediction: DVector::zeros(m),
                inner: InnerState::zeros(r.len()),
                skipped: false,
            })
            .collect();
        Self {
            blocks,
            z_bar: DVector::zeros(m),
            u: DVector::zeros(m),
            avg_prediction: DVector::zeros(m),
            iteration: 0,
            residual_report: ResidualReport {
                eps_primal: 0.0,
                eps_dual: 0.0,
                e_primal: f64::INFINITY,
                e_dual: f64::INFINITY,
                converged: false,
            },
            inner_iterations: 0,
            log: Vec::new(),
        }
    }

    pub fn block_w(&self, i: usize) -> &DVector<f64> {
        &self.blocks[i].w
    }

    pub fn block_prediction(&self, i: usize) -> &DVector<f64> {
        &self.blocks[i].prediction
    }

    /// Concatenated block weights.
    pub fn weights(&self) -> DVector<f64> {
        let n = self.blocks.last().map_or(0, |b| b.range.end);
        let mut w = DVector::zeros(n);
        for b in &self.blocks {
            w.rows_mut(b.range.start, b.range.len()).copy_from(&b.w);
        }
        w
    }
}

/// `b_i = A_i w_i + z_bar - avg(Aw) - u`.
pub fn local_target(state: &SharingState, block: usize) -> DVector<f64> {
    target(
        &state.blocks[block].prediction,
        &state.z_bar,
        &state.avg_prediction,
        &state.u,
    )
}

fn target(
    prediction: &DVector<f64>,
    z_bar: &DVector<f64>,
    avg: &DVector<f64>,
    u: &DVector<f64>,
) -> DVector<f64> {
    let mut b = prediction + z_bar;
    b -= avg;
    b -= u;
    b
}

/// `z_bar = (y + rho avg + rho u) / (P + rho)`.
pub fn zbar_update(
    y: &DVector<f64>,
    avg_pred: &DVector<f64>,
    u: &DVector<f64>,
    blocks: usize,
    rho: f64,
) -> DVector<f64> {
    let scale = 1.0 / (blocks as f64 + rho);
    DVector::from_fn(y.len(), |k, _| {
        (y[k] + rho * avg_pred[k] + rho * u[k]) * scale
    })
}

/// Whether the block lasso `min rho/2 ||A_i w - b||^2 + lambda ||Theta_i w||_1`
/// is solved by `w = 0`, i.e. `|A_j^T b| <= (lambda / rho) theta_j` for every
/// column `j` of the block.
///
/// This is the exact optimality condition for a weighted l1 penalty. The
/// group bound `||A_i^T b||_2 <= lambda / rho` implies it, so every block that
/// bound would skip is skipped here too.
pub fn block_skip_test(
    a_i: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda: f64,
    rho: f64,
    theta_i: &DVector<f64>,
) -> bool {
    let corr = a_i.tr_mul(b);
    skip_from_correlation(&corr, lambda / rho, theta_i)
}

fn skip_from_correlation(corr: &DVector<f64>, lambda_hat: f64, theta: &DVector<f64>) -> bool {
    corr.iter()
        .zip(theta.iter())
        .all(|(c, t)| c.abs() <= lambda_hat * t)
}

struct BlockOp {
    op: Option<WeightedLasso>,
}

fn build_ops(
    problem: &RegressionProblem,
    state: &SharingState,
    theta: &DVector<f64>,
    rho_hat: f64,
    exec: &Executor,
) -> Result<Vec<BlockOp>> {
    let built = exec.map(state.blocks.len(), |i| {
        let blk = &state.blocks[i];
        if blk.active.is_empty() {
            return Ok(BlockOp { op: None });
        }
        let a = problem.a.select_columns(blk.active.iter());
        let th = DVector::from_iterator(blk.active.len(), blk.active.iter().map(|&j| theta[j]));
        WeightedLasso::new(a, th, rho_hat)
            .map(|op| BlockOp { op: Some(op) })
            .map_err(|e| Error::Block {
                block: i,
                source: Box::new(e),
            })
    });
    built.into_iter().collect()
}

/// Re-targets a previous state at a new weight vector: drops newly pruned
/// columns, rescales the split variables and refreshes the predictions.
fn adapt_state(
    problem: &RegressionProblem,
    mut state: SharingState,
    theta: &DVector<f64>,
) -> SharingState {
    let m = problem.rows();
    for blk in &mut state.blocks {
        let active: Vec<usize> = blk.range.clone().filter(|&j| theta[j].is_finite()).collect();
        if active != blk.active {
            let mut inner = InnerState::zeros(active.len());
            for (new_pos, &j) in active.iter().enumerate() {
                if let Some(old_pos) = blk.active.iter().position(|&k| k == j) {
                    inner.w[new_pos] = blk.inner.w[old_pos];
                    inner.u_hat[new_pos] = blk.inner.u_hat[old_pos];
                }
            }
            inner.iteration = blk.inner.iteration;
            blk.inner = inner;
            blk.active = active;
        }
        let th = DVector::from_iterator(blk.active.len(), blk.active.iter().map(|&j| theta[j]));
        blk.inner.rescale_split(&th);
        blk.w.fill(0.0);
        let mut pred = DVector::zeros(m);
        for (pos, &j) in blk.active.iter().enumerate() {
            let wj = blk.inner.w[pos];
            blk.w[j - blk.range.start] = wj;
            if wj != 0.0 {
                pred.axpy(wj, &problem.a.column(j), 1.0);
            }
        }
        blk.prediction = pred;
    }
    state.avg_prediction = average(&state.blocks, m);
    state.log.clear();
    state.iteration = 0;
    state
}

fn average(blocks: &[BlockState], m: usize) -> DVector<f64> {
    let mut sum = DVector::zeros(m);
    for b in blocks {
        sum += &b.prediction;
    }
    sum / blocks.len() as f64
}

/// Solves `min 1/2 ||A w - y||^2 + lambda ||Theta w||_1` by sharing ADMM.
///
/// `theta` may hold `+inf` for pruned columns. `warm` resumes from a
/// previous state over the same partition. The result does not depend on the
/// executor's worker count.
pub fn solve_sharing(
    problem: &RegressionProblem,
    partition: &BlockPartition,
    theta: &DVector<f64>,
    lambda: f64,
    cfg: &SolverConfig,
    exec: &Executor,
    warm: Option<SharingState>,
) -> Result<(DVector<f64>, SharingState)> {
    let (m, n) = problem.a.shape();
    if partition.width() != n {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} columns, problem has {n}",
            partition.width()
        )));
    }
    if theta.len() != n {
        return Err(Error::DimensionMismatch {
            field: "theta",
            expected: n,
            found: theta.len(),
        });
    }
    if let Some(j) = theta.iter().position(|t| t.is_nan() || *t < 0.0) {
        return Err(Error::NonFinite {
            field: "theta",
            row: j,
            col: 0,
        });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be nonnegative, got {lambda}")));
    }
    cfg.validate()?;

    let mut state = match warm {
        Some(prev) if prev.blocks.len() == partition.len() && prev.z_bar.len() == m => {
            adapt_state(problem, prev, theta)
        }
        _ => adapt_state(problem, SharingState::cold(m, partition), theta),
    };
    let ops = build_ops(problem, &state, theta, cfg.rho_hat, exec)?;
    let stop = StopRule::from_config(cfg);
    let lambda_hat = lambda / cfg.rho;
    let p = partition.len();
    let rho_hat = cfg.rho_hat;

    for _ in 0..cfg.max_admm_iters {
        let z_bar = &state.z_bar;
        let avg = &state.avg_prediction;
        let u = &state.u;
        exec.try_for_each_mut(&mut state.blocks, |i, blk| {
            let Some(op) = &ops[i].op else {
                return Ok(());
            };
            let b = target(&blk.prediction, z_bar, avg, u);
            let corr = op.matrix().tr_mul(&b);
            if skip_from_correlation(&corr, lambda_hat, op.theta()) {
                blk.skipped = true;
                blk.inner.w.fill(0.0);
                blk.inner.z_prev.copy_from(&blk.inner.z_hat);
                blk.inner.z_hat.fill(0.0);
                for (pos, (c, t)) in corr.iter().zip(op.theta().iter()).enumerate() {
                    blk.inner.u_hat[pos] = if *t > 0.0 { c / (rho_hat * t) } else { 0.0 };
                }
            } else {
                blk.skipped = false;
                op.solve_from(&b, lambda_hat, &stop, &mut blk.inner)
                    .map_err(|e| Error::Block {
                        block: i,
                        source: Box::new(e),
                    })?;
            }
            blk.w.fill(0.0);
            for (pos, &j) in blk.active.iter().enumerate() {
                blk.w[j - blk.range.start] = blk.inner.w[pos];
            }
            blk.prediction = op.matrix() * &blk.inner.w;
            Ok(())
        })?;

        let before: usize = state.blocks.iter().map(|b| b.inner.iteration).sum();
        let avg = average(&state.blocks, m);
        let z_prev = std::mem::replace(
            &mut state.z_bar,
            zbar_update(&problem.y, &avg, &state.u, p, cfg.rho),
        );
        state.u += &avg - &state.z_bar;
        state.avg_prediction = avg;
        state.iteration += 1;
        state.inner_iterations = before;

        let report = ResidualReport::compute(
            &state.avg_prediction,
            &state.z_bar,
            &z_prev,
            &state.u,
            cfg.rho,
            cfg.eps_abs,
            cfg.eps_rel,
        );
        state.residual_report = report;
        let w = state.weights();
        state.log.push(ResidualLogRow {
            iteration: state.iteration,
            e_primal: report.e_primal,
            e_dual: report.e_dual,
            objective: sharing_objective(problem, &state, theta, lambda, &w),
        });
        if !report.e_primal.is_finite() || !report.e_dual.is_finite() {
            return Err(Error::NonFinite {
                field: "sharing residual",
                row: state.iteration,
                col: 0,
            });
        }
        if report.converged {
            break;
        }
    }
    let w = state.weights();
    Ok((w, state))
}

fn sharing_objective(
    problem: &RegressionProblem,
    state: &SharingState,
    theta: &DVector<f64>,
    lambda: f64,
    w: &DVector<f64>,
) -> f64 {
    let mut fit = -&problem.y;
    for b in &state.blocks {
        fit += &b.prediction;
    }
    let penalty: f64 = w
        .iter()
        .zip(theta.iter())
        .filter(|(wj, _)| **wj != 0.0)
        .map(|(wj, t)| t * wj.abs())
        .sum();
    0.5 * fit.norm_squared() + lambda * penalty
}

/// `1/2 ||A w - y||^2 + lambda sum_j theta_j |w_j|`, with pruned columns
/// (zero weight, infinite theta) contributing nothing.
pub fn lasso_objective(
    problem: &RegressionProblem,
    theta: &DVector<f64>,
    lambda: f64,
    w: &DVector<f64>,
) -> f64 {
    let r = &problem.a * w - &problem.y;
    let penalty: f64 = w
        .iter()
        .zip(theta.iter())
        .filter(|(wj, _)| **wj != 0.0)
        .map(|(wj, t)| t * wj.abs())
        .sum();
    0.5 * r.norm_squared() + lambda * penalty
}
