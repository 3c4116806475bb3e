//! Iterative reweighted l1 (and l2) on top of the sharing solver.
//!
//! The outer loop minimizes the type-II cost
//!
//! ```text
//! ||A w - y||^2 + sigma^2 w^T Gamma^-1 w + sigma^2 log|sigma^2 I + A Gamma A^T|
//! ```
//!
//! by linearizing the concave log-determinant. With
//! `alpha = diag(A^T (sigma^2 I + A Gamma A^T)^-1 A)` each step is a weighted
//! lasso with weights `theta = sqrt(alpha)`, followed by the closed form
//! `gamma_j = |w_j| / sqrt(alpha_j)`.
//!
//! All matrix inverses go through Cholesky factorizations. Two algebraically
//! equivalent routes are implemented: the `M x M` observation-space form and
//! the parameter-space form on the support of `gamma`, which is cheaper
//! whenever fewer than `M` hyperparameters are nonzero.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::problem::{BlockPartition, Estimate, RegressionProblem, SolverConfig};
use crate::sharing::{solve_sharing, ResidualLogRow, SharingState};

/// Relative change of the weights below which the outer loop may stop.
pub const OUTER_REL_TOL: f64 = 1e-4;

/// Which factorization evaluates `(sigma^2 I + A Gamma A^T)^-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Parameter space when `sigma^2 > 0` and the support of `gamma` is
    /// smaller than `M`, observation space otherwise.
    Auto,
    Observation,
    Parameter,
}

/// `A` together with its Gram matrix, computed once per problem.
#[derive(Debug, Clone)]
pub struct Curvature<'a> {
    a: &'a DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl<'a> Curvature<'a> {
    pub fn new(a: &'a DMatrix<f64>) -> Self {
        Self {
            a,
            gram: a.tr_mul(a),
        }
    }

    fn resolve(&self, route: Route, sigma2: f64, support: usize) -> Route {
        match route {
            Route::Auto if sigma2 > 0.0 && support < self.a.nrows() => Route::Parameter,
            Route::Auto => Route::Observation,
            r => r,
        }
    }

    /// `alpha_j = A_j^T (sigma^2 I + A Gamma A^T)^-1 A_j` for every `j` with
    /// `active[j]`; inactive columns get `+inf`.
    pub fn alpha(
        &self,
        gamma: &DVector<f64>,
        sigma2: f64,
        active: &[bool],
        route: Route,
    ) -> Result<DVector<f64>> {
        check_gamma(gamma, self.a.ncols())?;
        let support = support_indices(gamma);
        let n = self.a.ncols();
        let mut alpha = DVector::from_element(n, f64::INFINITY);
        match self.resolve(route, sigma2, support.len()) {
            Route::Observation => {
                let chol = self.observation_factor(gamma, &support, sigma2)?;
                for j in (0..n).filter(|&j| active[j]) {
                    let mut x = self.a.column(j).into_owned();
                    chol.l_dirty().solve_lower_triangular_mut(&mut x);
                    alpha[j] = x.norm_squared();
                }
            }
            Route::Parameter | Route::Auto => {
                if sigma2 <= 0.0 {
                    return Err(Error::SingularModel);
                }
                let (chol, d) = self.parameter_factor(gamma, &support, sigma2)?;
                let l = lower(&chol);
                for j in (0..n).filter(|&j| active[j]) {
                    let mut v = DVector::from_iterator(
                        support.len(),
                        support
                            .iter()
                            .zip(d.iter())
                            .map(|(&s, ds)| ds * self.gram[(s, j)]),
                    );
                    l.solve_lower_triangular_mut(&mut v);
                    alpha[j] = ((self.gram[(j, j)] - v.norm_squared()) / sigma2).max(0.0);
                }
            }
        }
        Ok(alpha)
    }

    /// `log|sigma^2 I + A Gamma A^T|`.
    pub fn log_det(&self, gamma: &DVector<f64>, sigma2: f64, route: Route) -> Result<f64> {
        check_gamma(gamma, self.a.ncols())?;
        let support = support_indices(gamma);
        let m = self.a.nrows();
        match self.resolve(route, sigma2, support.len()) {
            Route::Observation => {
                let chol = self.observation_factor(gamma, &support, sigma2)?;
                Ok(chol_log_det(&chol))
            }
            Route::Parameter | Route::Auto => {
                if sigma2 <= 0.0 {
                    return Err(Error::SingularModel);
                }
                let (chol, _) = self.parameter_factor(gamma, &support, sigma2)?;
                // determinant lemma: |s2 I_M + B B^T| = s2^(M-k) |s2 I_k + B^T B|
                Ok((m as f64 - support.len() as f64) * sigma2.ln() + chol_log_det(&chol))
            }
        }
    }

    /// `Gamma A^T (sigma^2 I + A Gamma A^T)^-1 y`.
    pub fn posterior_mean(
        &self,
        y: &DVector<f64>,
        gamma: &DVector<f64>,
        sigma2: f64,
        route: Route,
    ) -> Result<DVector<f64>> {
        check_gamma(gamma, self.a.ncols())?;
        if y.len() != self.a.nrows() {
            return Err(Error::DimensionMismatch {
                field: "y",
                expected: self.a.nrows(),
                found: y.len(),
            });
        }
        let support = support_indices(gamma);
        let mut w = DVector::zeros(self.a.ncols());
        if support.is_empty() {
            return Ok(w);
        }
        match self.resolve(route, sigma2, support.len()) {
            Route::Observation => {
                let chol = self.observation_factor(gamma, &support, sigma2)?;
                let k_inv_y = chol.solve(y);
                for &j in &support {
                    w[j] = gamma[j] * self.a.column(j).dot(&k_inv_y);
                }
            }
            Route::Parameter | Route::Auto => {
                if sigma2 <= 0.0 {
                    return Err(Error::SingularModel);
                }
                let (chol, d) = self.parameter_factor(gamma, &support, sigma2)?;
                let rhs = DVector::from_iterator(
                    support.len(),
                    support
                        .iter()
                        .zip(d.iter())
                        .map(|(&s, ds)| ds * self.a.column(s).dot(y)),
                );
                let x = chol.solve(&rhs);
                for (pos, &s) in support.iter().enumerate() {
                    w[s] = d[pos] * x[pos];
                }
            }
        }
        Ok(w)
    }

    fn observation_factor(
        &self,
        gamma: &DVector<f64>,
        support: &[usize],
        sigma2: f64,
    ) -> Result<Cholesky<f64, Dyn>> {
        let m = self.a.nrows();
        let mut k = DMatrix::from_diagonal_element(m, m, sigma2);
        if !support.is_empty() {
            let mut b = self.a.select_columns(support.iter());
            for (pos, &s) in support.iter().enumerate() {
                b.column_mut(pos).scale_mut(gamma[s].sqrt());
            }
            k.gemm(1.0, &b, &b.transpose(), 1.0);
        }
        Cholesky::new(k).ok_or(Error::SingularModel)
    }

    /// Factor of `sigma^2 I + D G_SS D` with `D = diag(sqrt(gamma_S))`.
    fn parameter_factor(
        &self,
        gamma: &DVector<f64>,
        support: &[usize],
        sigma2: f64,
    ) -> Result<(Cholesky<f64, Dyn>, Vec<f64>)> {
        let d: Vec<f64> = support.iter().map(|&s| gamma[s].sqrt()).collect();
        let k = support.len();
        let c = DMatrix::from_fn(k, k, |p, q| {
            let v = d[p] * self.gram[(support[p], support[q])] * d[q];
            if p == q {
                v + sigma2
            } else {
                v
            }
        });
        let chol = Cholesky::new(c).ok_or(Error::SingularModel)?;
        Ok((chol, d))
    }
}

fn lower(chol: &Cholesky<f64, Dyn>) -> &DMatrix<f64> {
    chol.l_dirty()
}

fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

fn support_indices(gamma: &DVector<f64>) -> Vec<usize> {
    gamma
        .iter()
        .enumerate()
        .filter(|(_, g)| **g > 0.0)
        .map(|(j, _)| j)
        .collect()
}

fn check_gamma(gamma: &DVector<f64>, n: usize) -> Result<()> {
    if gamma.len() != n {
        return Err(Error::DimensionMismatch {
            field: "gamma",
            expected: n,
            found: gamma.len(),
        });
    }
    if let Some(j) = gamma.iter().position(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::NonFinite {
            field: "gamma",
            row: j,
            col: 0,
        });
    }
    Ok(())
}

/// `alpha = diag[A^T (sigma^2 I + A Gamma A^T)^-1 A]` over every column.
pub fn alpha_update(a: &DMatrix<f64>, gamma: &DVector<f64>, sigma2: f64) -> Result<DVector<f64>> {
    let active = vec![true; a.ncols()];
    Curvature::new(a).alpha(gamma, sigma2, &active, Route::Auto)
}

/// `gamma_j = |w_j| / sqrt(alpha_j)`; zero weights and infinite curvature
/// give zero.
pub fn gamma_closed_form(w: &DVector<f64>, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    if w.len() != alpha.len() {
        return Err(Error::DimensionMismatch {
            field: "alpha",
            expected: w.len(),
            found: alpha.len(),
        });
    }
    let mut gamma = DVector::zeros(w.len());
    for j in 0..w.len() {
        if w[j] == 0.0 || alpha[j] == f64::INFINITY {
            continue;
        }
        if !(alpha[j] > 0.0) {
            return Err(Error::DegenerateCurvature(j));
        }
        gamma[j] = w[j].abs() / alpha[j].sqrt();
    }
    Ok(gamma)
}

/// `theta_j = [A_j^T (sigma^2 I + A Gamma A^T)^-1 A_j]^(1/2)` with
/// `gamma_j = |w_j| / theta_prev_j`.
pub fn theta_update(
    a: &DMatrix<f64>,
    theta_prev: &DVector<f64>,
    w_new: &DVector<f64>,
    sigma2: f64,
) -> Result<DVector<f64>> {
    let active: Vec<bool> = theta_prev.iter().map(|t| t.is_finite()).collect();
    theta_update_with(&Curvature::new(a), theta_prev, w_new, sigma2, &active)
}

fn theta_update_with(
    curv: &Curvature<'_>,
    theta_prev: &DVector<f64>,
    w_new: &DVector<f64>,
    sigma2: f64,
    active: &[bool],
) -> Result<DVector<f64>> {
    let alpha_prev = theta_prev.map(|t| t * t);
    let mut gamma = gamma_closed_form(w_new, &alpha_prev)?;
    for (g, on) in gamma.iter_mut().zip(active) {
        if !on {
            *g = 0.0;
        }
    }
    Ok(curv
        .alpha(&gamma, sigma2, active, Route::Auto)?
        .map(f64::sqrt))
}

/// Active mask: `|w_j| >= prune_rel * ||w||_2`.
pub fn prune(w: &DVector<f64>, prune_rel: f64) -> Vec<bool> {
    let cut = prune_rel * w.norm();
    w.iter().map(|v| v.abs() >= cut).collect()
}

/// `||A w - y||^2 + sigma^2 w^T Gamma^-1 w + sigma^2 log|sigma^2 I + A Gamma A^T|`.
///
/// Terms with `w_j = gamma_j = 0` contribute nothing; `w_j != 0` with
/// `gamma_j = 0` gives `+inf`.
pub fn dual_objective(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    gamma: &DVector<f64>,
    sigma2: f64,
) -> Result<f64> {
    dual_objective_with(&Curvature::new(a), y, w, gamma, sigma2)
}

fn dual_objective_with(
    curv: &Curvature<'_>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    gamma: &DVector<f64>,
    sigma2: f64,
) -> Result<f64> {
    let fit = (curv.a * w - y).norm_squared();
    let mut quad = 0.0;
    for j in 0..w.len() {
        if w[j] == 0.0 {
            continue;
        }
        if gamma[j] == 0.0 {
            return Ok(f64::INFINITY);
        }
        quad += w[j] * w[j] / gamma[j];
    }
    let log_det = curv.log_det(gamma, sigma2, Route::Auto)?;
    Ok(fit + sigma2 * quad + sigma2 * log_det)
}

/// `Gamma A^T (sigma^2 I + A Gamma A^T)^-1 y`.
pub fn posterior_mean(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma: &DVector<f64>,
    sigma2: f64,
) -> Result<DVector<f64>> {
    Curvature::new(a).posterior_mean(y, gamma, sigma2, Route::Auto)
}

/// Hyperparameters carried between outer iterations.
#[derive(Debug, Clone)]
pub struct ReweightState {
    pub theta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub alpha: DVector<f64>,
    pub active_mask: Vec<bool>,
    pub outer_iteration: usize,
    pub objective: f64,
}

/// The two candidate penalty levels and the one in use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaChoice {
    pub sigma2_term: f64,
    pub scaled_term: f64,
    pub value: f64,
}

/// `max(sigma^2, lambda_scale * ||A^T y||_inf)`.
pub fn effective_lambda(problem: &RegressionProblem, cfg: &SolverConfig) -> LambdaChoice {
    let sigma2_term = problem.sigma2;
    let scaled_term = cfg.lambda_for(problem);
    LambdaChoice {
        sigma2_term,
        scaled_term,
        value: sigma2_term.max(scaled_term),
    }
}

/// Per-outer-iteration summary.
#[derive(Debug, Clone)]
pub struct OuterRecord {
    pub iteration: usize,
    pub active_count: usize,
    pub dual_objective: f64,
    pub w: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct ReweightRun {
    pub estimate: Estimate,
    pub history: Vec<OuterRecord>,
    /// `(outer iteration, sharing residual row)`.
    pub residual_log: Vec<(usize, ResidualLogRow)>,
    pub lambda: LambdaChoice,
    pub state: ReweightState,
}

fn relative_change(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    let denom = old.norm();
    let diff = (new - old).norm();
    if denom > 0.0 {
        diff / denom
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Reweighted lasso with the sharing ADMM as the inner solver.
///
/// Iteration 0 uses `theta = 1`, i.e. a plain lasso. The loop stops once the
/// active set is unchanged and the weights move by less than
/// [`OUTER_REL_TOL`] relative, or after `max_reweight_iters` iterations.
///
/// The curvature and the tracked cost use the penalty in force, `lambda_eff`,
/// as the noise variance. Each outer step is then an exact majorize-minimize
/// step of that cost, and a noiseless problem still has an invertible model
/// matrix.
pub fn reweighted_lasso(
    problem: &RegressionProblem,
    partition: &BlockPartition,
    cfg: &SolverConfig,
    exec: &Executor,
) -> Result<ReweightRun> {
    cfg.validate()?;
    let n = problem.cols();
    let lambda = effective_lambda(problem, cfg);
    let noise = lambda.value;
    let curv = Curvature::new(&problem.a);

    let mut state = ReweightState {
        theta: DVector::from_element(n, 1.0),
        gamma: DVector::zeros(n),
        alpha: DVector::from_element(n, 1.0),
        active_mask: vec![true; n],
        outer_iteration: 0,
        objective: f64::INFINITY,
    };
    let mut history: Vec<OuterRecord> = Vec::new();
    let mut residual_log = Vec::new();
    let mut warm: Option<SharingState> = None;
    let mut inner_total = 0;
    let mut w_final = DVector::zeros(n);

    for k in 0..cfg.max_reweight_iters {
        let (w, sharing) = solve_sharing(
            problem,
            partition,
            &state.theta,
            lambda.value,
            cfg,
            exec,
            warm.take(),
        )?;
        inner_total += sharing.iteration;
        residual_log.extend(sharing.log.iter().map(|row| (k, *row)));
        warm = Some(sharing);

        // gamma_j = |w_j| / theta_j, zero on pruned columns
        let mut gamma = gamma_closed_form(&w, &state.alpha)?;
        for (g, on) in gamma.iter_mut().zip(&state.active_mask) {
            if !on {
                *g = 0.0;
            }
        }
        let objective = dual_objective_with(&curv, &problem.y, &w, &gamma, noise)?;

        let prev_mask = state.active_mask.clone();
        let fresh = prune(&w, cfg.prune_rel);
        for (m, f) in state.active_mask.iter_mut().zip(fresh) {
            *m = *m && f;
        }
        for j in 0..n {
            if !state.active_mask[j] {
                gamma[j] = 0.0;
            }
        }
        let active_count = state.active_mask.iter().filter(|m| **m).count();
        let change = history
            .last()
            .map_or(f64::INFINITY, |prev| relative_change(&w, &prev.w));
        history.push(OuterRecord {
            iteration: k,
            active_count,
            dual_objective: objective,
            w: w.clone(),
        });
        state.gamma = gamma;
        state.objective = objective;
        state.outer_iteration = k + 1;
        w_final = w;

        if k > 0 && prev_mask == state.active_mask && change < OUTER_REL_TOL {
            break;
        }
        if k + 1 == cfg.max_reweight_iters {
            break;
        }
        state.alpha = curv.alpha(&state.gamma, noise, &state.active_mask, Route::Auto)?;
        state.theta = state.alpha.map(f64::sqrt);
    }

    for j in 0..n {
        if !state.active_mask[j] {
            w_final[j] = 0.0;
        }
    }
    let trace = history.iter().map(|h| h.dual_objective).collect();
    let estimate = Estimate::new(w_final, trace, history.len(), inner_total);
    Ok(ReweightRun {
        estimate,
        history,
        residual_log,
        lambda,
        state,
    })
}

/// Reweighted l2: ridge steps `w = argmin ||A w - y||^2 + sigma^2 sum w_j^2 / gamma_j`
/// solved in closed form, then `gamma_j = |w_j| / sqrt(alpha_j)`.
pub fn reweighted_l2(problem: &RegressionProblem, cfg: &SolverConfig) -> Result<ReweightRun> {
    cfg.validate()?;
    if !(problem.sigma2 > 0.0) {
        return Err(Error::SingularModel);
    }
    let n = problem.cols();
    let curv = Curvature::new(&problem.a);
    let mut state = ReweightState {
        theta: DVector::from_element(n, 1.0),
        gamma: DVector::from_element(n, 1.0),
        alpha: DVector::zeros(n),
        active_mask: vec![true; n],
        outer_iteration: 0,
        objective: f64::INFINITY,
    };
    let mut history: Vec<OuterRecord> = Vec::new();
    for k in 0..cfg.max_reweight_iters {
        let alpha = curv.alpha(&state.gamma, problem.sigma2, &state.active_mask, Route::Auto)?;
        let w = curv.posterior_mean(&problem.y, &state.gamma, problem.sigma2, Route::Auto)?;
        let mut gamma = gamma_closed_form(&w, &alpha)?;
        let objective = dual_objective_with(&curv, &problem.y, &w, &gamma, problem.sigma2)?;
        let prev_mask = state.active_mask.clone();
        let fresh = prune(&w, cfg.prune_rel);
        for (m, f) in state.active_mask.iter_mut().zip(fresh) {
            *m = *m && f;
        }
        for j in 0..n {
            if !state.active_mask[j] {
                gamma[j] = 0.0;
            }
        }
        let change = history
            .last()
            .map_or(f64::INFINITY, |prev| relative_change(&w, &prev.w));
        history.push(OuterRecord {
            iteration: k,
            active_count: state.active_mask.iter().filter(|m| **m).count(),
            dual_objective: objective,
            w,
        });
        state.alpha = alpha;
        state.theta = state.alpha.map(f64::sqrt);
        state.gamma = gamma;
        state.objective = objective;
        state.outer_iteration = k + 1;
        if k > 0 && prev_mask == state.active_mask && change < OUTER_REL_TOL {
            break;
        }
    }
    let mut w_final = history.last().map(|h| h.w.clone()).unwrap_or_else(|| DVector::zeros(n));
    for j in 0..n {
        if !state.active_mask[j] {
            w_final[j] = 0.0;
        }
    }
    let trace = history.iter().map(|h| h.dual_objective).collect();
    let estimate = Estimate::new(w_final, trace, history.len(), 0);
    Ok(ReweightRun {
        estimate,
        history,
        residual_log: Vec::new(),
        lambda: LambdaChoice {
            sigma2_term: problem.sigma2,
            scaled_term: 0.0,
            value: problem.sigma2,
        },
        state,
    })
}
