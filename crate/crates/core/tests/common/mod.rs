//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the solver code paths it is used to check: the
//! lasso reference is accelerated proximal gradient, the curvature and
//! posterior references go through LU inverses, and the log-determinant is
//! differentiated numerically.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut Pcg64, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vector(rng: &mut Pcg64, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `k` nonzeros of magnitude in `[1, 3]` with random signs.
pub fn sparse_vector(rng: &mut Pcg64, n: usize, k: usize) -> DVector<f64> {
    let mut w = DVector::zeros(n);
    for j in rand::seq::index::sample(rng, n, k.min(n)) {
        let mag = rng.random_range(1.0..3.0);
        w[j] = if rng.random::<bool>() { mag } else { -mag };
    }
    w
}

pub fn uniform_vector(rng: &mut Pcg64, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

pub fn weighted_l1(theta: &DVector<f64>, w: &DVector<f64>) -> f64 {
    w.iter().zip(theta.iter()).filter(|(v, _)| **v != 0.0).map(|(v, t)| t * v.abs()).sum()
}

/// `1/2 ||A w - b||^2 + lambda sum theta_j |w_j|`.
pub fn lasso_cost(a: &DMatrix<f64>, b: &DVector<f64>, theta: &DVector<f64>, lambda: f64, w: &DVector<f64>) -> f64 {
    0.5 * (a * w - b).norm_squared() + lambda * weighted_l1(theta, w)
}

fn spectral_norm_sq(a: &DMatrix<f64>) -> f64 {
    a.tr_mul(a).symmetric_eigenvalues().max()
}

/// Weighted lasso by FISTA with adaptive restart, iterated until successive
/// iterates differ by less than `tol` relative.
pub fn fista(a: &DMatrix<f64>, b: &DVector<f64>, theta: &DVector<f64>, lambda: f64, tol: f64) -> DVector<f64> {
    let n = a.ncols();
    let step = 1.0 / spectral_norm_sq(a).max(f64::MIN_POSITIVE);
    let mut x = DVector::zeros(n);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..2_000_000 {
        let grad = a.tr_mul(&(a * &y - b));
        let v = &y - grad * step;
        let x_new = DVector::from_fn(n, |j, _| {
            let k = step * lambda * theta[j];
            (v[j] - k).max(0.0) - (-v[j] - k).max(0.0)
        });
        let diff = (&x_new - &x).norm();
        // restart when the momentum points uphill
        let uphill = (&y - &x_new).dot(&(&x_new - &x)) > 0.0;
        let t_new = if uphill { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
        y = if uphill { x_new.clone() } else { &x_new + (&x_new - &x) * ((t - 1.0) / t_new) };
        t = t_new;
        x = x_new;
        if diff <= tol * x.norm().max(1.0) {
            break;
        }
    }
    x
}

/// Largest violation of the weighted-lasso optimality conditions
/// `A^T (b - A w) in lambda Theta d|w|`.
pub fn kkt_violation(a: &DMatrix<f64>, b: &DVector<f64>, theta: &DVector<f64>, lambda: f64, w: &DVector<f64>) -> f64 {
    let g = a.tr_mul(&(b - a * w));
    let mut worst = 0.0f64;
    for j in 0..w.len() {
        let bound = lambda * theta[j];
        let v = if w[j] == 0.0 {
            (g[j].abs() - bound).max(0.0)
        } else {
            (g[j] - bound * w[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// `(sigma^2 I + A Gamma A^T)` built and inverted by LU.
pub fn model_inverse(a: &DMatrix<f64>, gamma: &DVector<f64>, sigma2: f64) -> DMatrix<f64> {
    let m = a.nrows();
    let s = DMatrix::identity(m, m) * sigma2 + a * DMatrix::from_diagonal(gamma) * a.transpose();
    s.lu().try_inverse().expect("model matrix is invertible")
}

pub fn alpha_reference(a: &DMatrix<f64>, gamma: &DVector<f64>, sigma2: f64) -> DVector<f64> {
    let inv = model_inverse(a, gamma, sigma2);
    DVector::from_fn(a.ncols(), |j, _| {
        let c = a.column(j);
        (c.transpose() * &inv * c)[(0, 0)]
    })
}

pub fn log_det_reference(a: &DMatrix<f64>, gamma: &DVector<f64>, sigma2: f64) -> f64 {
    let m = a.nrows();
    let s = DMatrix::identity(m, m) * sigma2 + a * DMatrix::from_diagonal(gamma) * a.transpose();
    s.lu().determinant().ln()
}

/// Fourth-order central difference of `log|sigma^2 I + A Gamma A^T|` in `gamma_j`.
pub fn log_det_gradient_fd(a: &DMatrix<f64>, gamma: &DVector<f64>, sigma2: f64, j: usize) -> f64 {
    let h = 1e-3 * gamma[j].max(1e-2);
    let at = |d: f64| {
        let mut g = gamma.clone();
        g[j] += d;
        log_det_reference(a, &g, sigma2)
    };
    (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
}

/// `(A^T A + sigma^2 Gamma^-1)^-1 A^T y` by LU.
pub fn posterior_mean_reference(a: &DMatrix<f64>, y: &DVector<f64>, gamma: &DVector<f64>, sigma2: f64) -> DVector<f64> {
    let mut h = a.tr_mul(a);
    for j in 0..gamma.len() {
        h[(j, j)] += sigma2 / gamma[j];
    }
    h.lu().solve(&a.tr_mul(y)).expect("normal matrix is invertible")
}

pub fn rel_diff(x: f64, y: f64) -> f64 {
    (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE)
}

pub fn rel_vec_diff(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (x - y).norm() / x.norm().max(y.norm()).max(f64::MIN_POSITIVE)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    v[v.len() / 2]
}
