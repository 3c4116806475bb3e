//! Ground-truth Kuramoto networks and their noisy discrete-time dynamics.
//!
//! ```text
//! phi_i(t_{k+1}) = phi_i(t_k) + dt [ omega_i + sum_j w_ij sin(phi_j - phi_i) + xi_i(t_k) ]
//! ```
//!
//! Randomness comes from PCG64 (`Lcg128Xsl64`) seeded with `seed_from_u64`.
//! Draw order, per generator:
//!
//! * [`generate_network`]: the edge set (uniform sample without replacement
//!   over the `n (n - 1)` off-diagonal slots, row-major, then sorted), one
//!   uniform weight per edge in slot order, then `omega_0 .. omega_{n-1}`.
//! * [`random_initial_phases`]: `x0_0 .. x0_{n-1}`, uniform on `(0, 2 pi)`.
//! * [`simulate`]: noise step-major, `xi_0(t_0), xi_1(t_0), ..., xi_{n-1}(t_{M-1})`.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use rand_pcg::Pcg64;

use crate::error::{Error, Result};

/// Coupling function family of the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Sine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KuramotoModel {
    /// Natural frequencies.
    pub omega: DVector<f64>,
    /// `w_ij`, the influence of oscillator `j` on oscillator `i`. Zero diagonal.
    pub coupling: DMatrix<f64>,
    pub coupling_fn: Coupling,
}

impl KuramotoModel {
    pub fn new(omega: DVector<f64>, coupling: DMatrix<f64>) -> Result<Self> {
        let n = omega.len();
        if coupling.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                field: "coupling",
                expected: n,
                found: coupling.nrows(),
            });
        }
        for i in 0..n {
            if coupling[(i, i)] != 0.0 {
                return Err(Error::DegenerateNetwork(format!(
                    "self-coupling w[{i},{i}] must be zero"
                )));
            }
            if !omega[i].is_finite() {
                return Err(Error::NonFinite {
                    field: "omega",
                    row: i,
                    col: 0,
                });
            }
            for j in 0..n {
                if !coupling[(i, j)].is_finite() {
                    return Err(Error::NonFinite {
                        field: "coupling",
                        row: i,
                        col: j,
                    });
                }
            }
        }
        Ok(Self {
            omega,
            coupling,
            coupling_fn: Coupling::Sine,
        })
    }

    pub fn nodes(&self) -> usize {
        self.omega.len()
    }

    pub fn edge_count(&self) -> usize {
        self.coupling.iter().filter(|v| **v != 0.0).count()
    }

    /// `omega_i + sum_j w_ij sin(phi_j - phi_i)` for every node.
    pub fn drift(&self, phases: &[f64], out: &mut [f64]) {
        let n = self.nodes();
        for i in 0..n {
            let mut acc = self.omega[i];
            for j in 0..n {
                let w = self.coupling[(i, j)];
                if w != 0.0 {
                    acc += w * (phases[j] - phases[i]).sin();
                }
            }
            out[i] = acc;
        }
    }
}

/// Random network parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkSpec {
    pub density: f64,
    pub weight_low: f64,
    pub weight_high: f64,
    pub omega_std: f64,
}

impl Default for NetworkSpec {
    /// 10% of off-diagonal couplings, weights on `[-10, 10]`, omega with variance 10.
    fn default() -> Self {
        Self {
            density: 0.1,
            weight_low: -10.0,
            weight_high: 10.0,
            omega_std: 10f64.sqrt(),
        }
    }
}

/// Draws a network with exactly `round(density * n (n - 1))` couplings.
pub fn generate_network(
    n: usize,
    density: f64,
    weight_low: f64,
    weight_high: f64,
    omega_std: f64,
    seed: u64,
) -> Result<KuramotoModel> {
    if n == 0 {
        return Err(Error::DegenerateNetwork("no nodes".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::DegenerateNetwork(format!(
            "density must lie in (0, 1], got {density}"
        )));
    }
    if !(weight_low < weight_high) || !weight_low.is_finite() || !weight_high.is_finite() {
        return Err(Error::DegenerateNetwork(format!(
            "weight range [{weight_low}, {weight_high}] is empty"
        )));
    }
    if !(omega_std.is_finite() && omega_std > 0.0) {
        return Err(Error::DegenerateNetwork(format!(
            "omega_std must be positive, got {omega_std}"
        )));
    }
    let slots = n * (n - 1);
    let edges = (density * slots as f64).round() as usize;
    if n >= 2 && edges == 0 {
        return Err(Error::DegenerateNetwork(format!(
            "density {density} gives no edges for {n} nodes"
        )));
    }
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, slots, edges).into_vec();
    chosen.sort_unstable();
    let weights = Uniform::new_inclusive(weight_low, weight_high)
        .map_err(|e| Error::DegenerateNetwork(e.to_string()))?;
    let mut coupling = DMatrix::zeros(n, n);
    for slot in chosen {
        let i = slot / (n - 1);
        let r = slot % (n - 1);
        let j = if r >= i { r + 1 } else { r };
        let mut w = weights.sample(&mut rng);
        // an exact zero would silently drop the edge
        while w == 0.0 {
            w = weights.sample(&mut rng);
        }
        coupling[(i, j)] = w;
    }
    let normal = Normal::new(0.0, omega_std).map_err(|e| Error::DegenerateNetwork(e.to_string()))?;
    let omega = DVector::from_iterator(n, (0..n).map(|_| normal.sample(&mut rng)));
    KuramotoModel::new(omega, coupling)
}

/// Initial phases uniform on the open interval `(0, 2 pi)`.
pub fn random_initial_phases(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = Pcg64::seed_from_u64(seed);
    DVector::from_iterator(
        n,
        (0..n).map(|_| loop {
            let x: f64 = rng.random::<f64>() * TAU;
            if x > 0.0 {
                break x;
            }
        }),
    )
}

/// Sampled trajectory with the realized noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    /// `t_0 .. t_M`, with `t_k = k dt`.
    pub times: Vec<f64>,
    /// `(M + 1) x n`, unwrapped.
    pub phases: DMatrix<f64>,
    pub dt: f64,
    /// `M x n`, the `xi_i(t_k)` that entered each step.
    pub noise_record: DMatrix<f64>,
    /// `20 log10(||drift_i|| / ||xi_i||)` per node; `+inf` without noise.
    pub snr_db_realized: Vec<f64>,
}

impl TimeSeries {
    pub fn nodes(&self) -> usize {
        self.phases.ncols()
    }

    /// Number of transitions `M`.
    pub fn steps(&self) -> usize {
        self.phases.nrows().saturating_sub(1)
    }
}

pub fn simulate(
    model: &KuramotoModel,
    dt: f64,
    steps: usize,
    x0: &DVector<f64>,
    noise_std: f64,
    seed: u64,
) -> Result<TimeSeries> {
    let n = model.nodes();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            field: "x0",
            expected: n,
            found: x0.len(),
        });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    if steps == 0 {
        return Err(Error::InvalidConfig("steps must be at least 1".into()));
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "noise_std must be nonnegative, got {noise_std}"
        )));
    }
    if let Some(i) = x0.iter().position(|v| !(v.is_finite() && (0.0..TAU).contains(v))) {
        return Err(Error::InvalidConfig(format!(
            "x0[{i}] = {} lies outside [0, 2 pi)",
            x0[i]
        )));
    }
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut phases = DMatrix::zeros(steps + 1, n);
    let mut noise = DMatrix::zeros(steps, n);
    let mut signal_sq = vec![0.0; n];
    let mut noise_sq = vec![0.0; n];
    let mut current: Vec<f64> = x0.iter().copied().collect();
    let mut drift = vec![0.0; n];
    phases.row_mut(0).copy_from_slice(&current);
    for k in 0..steps {
        model.drift(&current, &mut drift);
        for i in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let xi = noise_std * z;
            noise[(k, i)] = xi;
            signal_sq[i] += drift[i] * drift[i];
            noise_sq[i] += xi * xi;
            current[i] += dt * (drift[i] + xi);
            if !current[i].is_finite() {
                return Err(Error::Divergence { step: k });
            }
        }
        phases.row_mut(k + 1).copy_from_slice(&current);
    }
    let snr_db_realized = signal_sq
        .iter()
        .zip(&noise_sq)
        .map(|(s, e)| {
            if *e == 0.0 {
                f64::INFINITY
            } else {
                10.0 * (s / e).log10()
            }
        })
        .collect();
    Ok(TimeSeries {
        times: (0..=steps).map(|k| k as f64 * dt).collect(),
        phases,
        dt,
        noise_record: noise,
        snr_db_realized,
    })
}

/// Realized SNR tolerance of [`calibrate_noise_for_snr`], in dB.
pub const SNR_TOLERANCE_DB: f64 = 0.5;

const MAX_CALIBRATION_ROUNDS: usize = 60;

/// Finds the noise level at which `node` sees the requested SNR.
///
/// At a fixed seed the noise record scales linearly with `noise_std`, while
/// the noiseless drift depends on the perturbed trajectory, so the level is
/// refined by rescaling until the realized SNR is within
/// [`SNR_TOLERANCE_DB`] of the target.
pub fn calibrate_noise_for_snr(
    model: &KuramotoModel,
    dt: f64,
    steps: usize,
    x0: &DVector<f64>,
    target_snr_db: f64,
    node: usize,
    seed: u64,
) -> Result<f64> {
    if !target_snr_db.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "target SNR must be finite, got {target_snr_db}"
        )));
    }
    if node >= model.nodes() {
        return Err(Error::DimensionMismatch {
            field: "node",
            expected: model.nodes(),
            found: node,
        });
    }
    let clean = simulate(model, dt, steps, x0, 0.0, seed)?;
    let mut drift = vec![0.0; model.nodes()];
    let mut signal_sq = 0.0;
    for k in 0..steps {
        let row: Vec<f64> = clean.phases.row(k).iter().copied().collect();
        model.drift(&row, &mut drift);
        signal_sq += drift[node] * drift[node];
    }
    if signal_sq == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    // E||xi||^2 = steps * std^2
    let mut std = (signal_sq / steps as f64).sqrt() / 10f64.powf(target_snr_db / 20.0);
    for _ in 0..MAX_CALIBRATION_ROUNDS {
        let series = simulate(model, dt, steps, x0, std, seed)?;
        let realized = series.snr_db_realized[node];
        if !realized.is_finite() {
            return Err(Error::UndefinedSnr);
        }
        let miss = realized - target_snr_db;
        if miss.abs() <= SNR_TOLERANCE_DB * 0.5 {
            return Ok(std);
        }
        std *= 10f64.powf(miss / 20.0);
    }
    // accept the last level if it is within the advertised tolerance
    let series = simulate(model, dt, steps, x0, std, seed)?;
    if (series.snr_db_realized[node] - target_snr_db).abs() <= SNR_TOLERANCE_DB {
        Ok(std)
    } else {
        Err(Error::UndefinedSnr)
    }
}
