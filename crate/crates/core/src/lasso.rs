//! ADMM for one block's weighted lasso
//!
//! ```text
//! minimize  1/2 ||A w - b||^2 + lambda_hat ||Theta w||_1
//! ```
//!
//! split as `Theta w = z`. The `w`-update is a linear solve with the fixed
//! normal matrix `A^T A + rho_hat Theta^2`, factorized once per weight vector
//! and reused for every right-hand side `b`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Stopping tolerances shared by the inner and sharing ADMM loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iters: usize,
}

impl StopRule {
    pub fn from_config(cfg: &crate::problem::SolverConfig) -> Self {
        Self {
            eps_abs: cfg.eps_abs,
            eps_rel: cfg.eps_rel,
            max_iters: cfg.max_admm_iters,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub e_primal: f64,
    pub e_dual: f64,
    pub converged: bool,
}

impl ResidualReport {
    /// Absolute-plus-relative test for a split `x = z` with scaled dual `u`:
    ///
    /// ```text
    /// e_primal = ||x - z||            eps_primal = sqrt(n) eps_abs + eps_rel max(||x||, ||z||)
    /// e_dual   = rho ||z - z_prev||   eps_dual   = sqrt(n) eps_abs + eps_rel rho ||u||
    /// ```
    pub fn compute(
        x: &DVector<f64>,
        z: &DVector<f64>,
        z_prev: &DVector<f64>,
        u: &DVector<f64>,
        rho: f64,
        eps_abs: f64,
        eps_rel: f64,
    ) -> Self {
        let root_n = (x.len() as f64).sqrt();
        let e_primal = (x - z).norm();
        let e_dual = rho * (z - z_prev).norm();
        let eps_primal = root_n * eps_abs + eps_rel * x.norm().max(z.norm());
        let eps_dual = root_n * eps_abs + eps_rel * rho * u.norm();
        Self {
            eps_primal,
            eps_dual,
            e_primal,
            e_dual,
            converged: e_primal <= eps_primal && e_dual <= eps_dual,
        }
    }
}

/// Iterates of the weighted-lasso ADMM.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerState {
    pub w: DVector<f64>,
    pub z_hat: DVector<f64>,
    pub u_hat: DVector<f64>,
    pub z_prev: DVector<f64>,
    pub primal_residual_norm: f64,
    pub dual_residual_norm: f64,
    pub iteration: usize,
}

impl InnerState {
    pub fn zeros(n: usize) -> Self {
        Self {
            w: DVector::zeros(n),
            z_hat: DVector::zeros(n),
            u_hat: DVector::zeros(n),
            z_prev: DVector::zeros(n),
            primal_residual_norm: 0.0,
            dual_residual_norm: 0.0,
            iteration: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.w.len()
    }

    /// Keeps the entries listed in `keep` (ascending positions).
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let pick = |v: &DVector<f64>| DVector::from_iterator(keep.len(), keep.iter().map(|&j| v[j]));
        Self {
            w: pick(&self.w),
            z_hat: pick(&self.z_hat),
            u_hat: pick(&self.u_hat),
            z_prev: pick(&self.z_prev),
            primal_residual_norm: self.primal_residual_norm,
            dual_residual_norm: self.dual_residual_norm,
            iteration: self.iteration,
        }
    }

    /// Re-expresses the split variable for new weights: `z = Theta w`. The
    /// scaled dual only depends on `lambda_hat / rho_hat` and carries over.
    pub fn rescale_split(&mut self, theta: &DVector<f64>) {
        self.z_hat = self.w.component_mul(theta);
        self.z_prev.copy_from(&self.z_hat);
    }
}

/// Elementwise `S_k(x) = max(0, x - k) - max(0, -x - k)`.
pub fn soft_threshold(x: &DVector<f64>, kappa: f64) -> DVector<f64> {
    x.map(|v| soft_threshold_scalar(v, kappa))
}

#[inline]
pub fn soft_threshold_scalar(x: f64, kappa: f64) -> f64 {
    (x - kappa).max(0.0) - (-x - kappa).max(0.0)
}

/// Residual report for the inner split `Theta w = z`.
pub fn check_stopping(
    state: &InnerState,
    theta: &DVector<f64>,
    rho_hat: f64,
    eps_abs: f64,
    eps_rel: f64,
) -> ResidualReport {
    let theta_w = state.w.component_mul(theta);
    ResidualReport::compute(
        &theta_w,
        &state.z_hat,
        &state.z_prev,
        &state.u_hat,
        rho_hat,
        eps_abs,
        eps_rel,
    )
}

/// Factorized weighted-lasso operator for fixed `(A, Theta, rho_hat)`.
#[derive(Debug, Clone)]
pub struct WeightedLasso {
    a: DMatrix<f64>,
    theta: DVector<f64>,
    rho_hat: f64,
    factor: Cholesky<f64, Dyn>,
    ridge: f64,
}

impl WeightedLasso {
    /// Factorizes `A^T A + rho_hat diag(theta^2)`. A numerically singular
    /// normal matrix (unpenalized duplicate or empty columns) gets a ridge of
    /// `1e-12 * trace / N` and the amount is reported by [`Self::ridge`].
    pub fn new(a: DMatrix<f64>, theta: DVector<f64>, rho_hat: f64) -> Result<Self> {
        if theta.len() != a.ncols() {
            return Err(Error::DimensionMismatch {
                field: "theta",
                expected: a.ncols(),
                found: theta.len(),
            });
        }
        if let Some(j) = theta.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::NonFinite {
                field: "theta",
                row: j,
                col: 0,
            });
        }
        if !(rho_hat.is_finite() && rho_hat > 0.0) {
            return Err(Error::InvalidConfig(format!("rho_hat must be positive, got {rho_hat}")));
        }
        let n = a.ncols();
        let mut normal = a.tr_mul(&a);
        for j in 0..n {
            normal[(j, j)] += rho_hat * theta[j] * theta[j];
        }
        let (factor, ridge) = match Cholesky::new(normal.clone()) {
            Some(f) if well_conditioned(&f) => (f, 0.0),
            _ => {
                let scale = (normal.trace() / n as f64).max(f64::MIN_POSITIVE);
                let ridge = 1e-12 * scale.max(1.0);
                for j in 0..n {
                    normal[(j, j)] += ridge;
                }
                let f = Cholesky::new(normal).ok_or(Error::RegularizationFailure)?;
                (f, ridge)
            }
        };
        Ok(Self {
            a,
            theta,
            rho_hat,
            factor,
            ridge,
        })
    }

    pub fn width(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// Ridge added to the normal matrix, zero when none was needed.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Runs the ADMM from `state` until the residual test passes or the
    /// iteration cap is hit. On return `state.w` has exact zeros wherever the
    /// thresholded variable is zero under a positive weight.
    pub fn solve_from(
        &self,
        b: &DVector<f64>,
        lambda_hat: f64,
        stop: &StopRule,
        state: &mut InnerState,
    ) -> Result<ResidualReport> {
        let n = self.width();
        if b.len() != self.a.nrows() {
            return Err(Error::DimensionMismatch {
                field: "b",
                expected: self.a.nrows(),
                found: b.len(),
            });
        }
        if state.width() != n {
            return Err(Error::DimensionMismatch {
                field: "inner state",
                expected: n,
                found: state.width(),
            });
        }
        let kappa = lambda_hat / self.rho_hat;
        let atb = self.a.tr_mul(b);
        let mut rhs = DVector::zeros(n);
        let mut theta_w = DVector::zeros(n);
        let mut report = ResidualReport {
            eps_primal: 0.0,
            eps_dual: 0.0,
            e_primal: f64::INFINITY,
            e_dual: f64::INFINITY,
            converged: false,
        };
        for _ in 0..stop.max_iters {
            for j in 0..n {
                rhs[j] = atb[j] + self.rho_hat * self.theta[j] * (state.z_hat[j] - state.u_hat[j]);
            }
            self.factor.solve_mut(&mut rhs);
            state.w.copy_from(&rhs);
            state.z_prev.copy_from(&state.z_hat);
            for j in 0..n {
                theta_w[j] = self.theta[j] * state.w[j];
                state.z_hat[j] = soft_threshold_scalar(theta_w[j] + state.u_hat[j], kappa);
                state.u_hat[j] += theta_w[j] - state.z_hat[j];
            }
            state.iteration += 1;
            report = ResidualReport::compute(
                &theta_w,
                &state.z_hat,
                &state.z_prev,
                &state.u_hat,
                self.rho_hat,
                stop.eps_abs,
                stop.eps_rel,
            );
            state.primal_residual_norm = report.e_primal;
            state.dual_residual_norm = report.e_dual;
            if report.converged {
                break;
            }
        }
        for j in 0..n {
            if state.z_hat[j] == 0.0 && self.theta[j] > 0.0 {
                state.w[j] = 0.0;
            }
        }
        Ok(report)
    }

    /// Cold-started solve.
    pub fn solve(
        &self,
        b: &DVector<f64>,
        lambda_hat: f64,
        stop: &StopRule,
    ) -> Result<(DVector<f64>, ResidualReport)> {
        let mut state = InnerState::zeros(self.width());
        let report = self.solve_from(b, lambda_hat, stop, &mut state)?;
        Ok((state.w, report))
    }
}

fn well_conditioned(f: &Cholesky<f64, Dyn>) -> bool {
    let l = f.l_dirty();
    let diag: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0_f64, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    // pivot ratio squared approximates the condition number
    min > 0.0 && min.is_finite() && (max / min) < 1e7
}

/// One-shot weighted-lasso solve, `lambda_hat` and `rho_hat` as in the block
/// subproblem of the sharing ADMM.
pub fn solve_weighted_lasso(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    theta: &DVector<f64>,
    lambda_hat: f64,
    rho_hat: f64,
    stop: &StopRule,
) -> Result<(DVector<f64>, ResidualReport)> {
    WeightedLasso::new(a.clone(), theta.clone(), rho_hat)?.solve(b, lambda_hat, stop)
}

/// `1/2 ||A w - b||^2 + lambda_hat ||Theta w||_1`.
pub fn weighted_lasso_objective(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    theta: &DVector<f64>,
    lambda_hat: f64,
    w: &DVector<f64>,
) -> f64 {
    let r = a * w - b;
    0.5 * r.norm_squared() + lambda_hat * w.component_mul(theta).abs().sum()
}
