mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use netrecon::exec::Executor;
use netrecon::kuramoto::{generate_network, random_initial_phases, simulate};
use netrecon::lasso::{solve_weighted_lasso, StopRule};
use netrecon::problem::{partition_columns, RegressionProblem, SolverConfig};
use netrecon::reweight::{
    alpha_update, dual_objective, gamma_closed_form, posterior_mean, reweighted_l2, reweighted_lasso, theta_update,
    Curvature, Route,
};
use netrecon::sharing::{block_skip_test, lasso_objective, solve_sharing};

fn tight_stop() -> StopRule {
    StopRule {
        eps_abs: 1e-11,
        eps_rel: 1e-11,
        max_iters: 200_000,
    }
}

fn tight_cfg() -> SolverConfig {
    SolverConfig {
        eps_abs: 1e-10,
        eps_rel: 1e-10,
        max_admm_iters: 20_000,
        ..SolverConfig::default()
    }
}

fn random_problem(seed: u64, m: usize, n: usize, k: usize, noise: f64) -> RegressionProblem {
    let mut r = rng(seed);
    let a = gaussian_matrix(&mut r, m, n);
    let w = sparse_vector(&mut r, n, k);
    let y = &a * &w + gaussian_vector(&mut r, m) * noise;
    RegressionProblem::with_default_labels(a, y, noise * noise).unwrap()
}

#[test]
fn inner_admm_agrees_with_proximal_gradient() {
    for seed in 0..20 {
        let mut r = rng(1000 + seed);
        let m = r.random_range(5..=50);
        let n = r.random_range(2..=30);
        let a = gaussian_matrix(&mut r, m, n);
        let b = gaussian_vector(&mut r, m) * 3.0;
        let theta = uniform_vector(&mut r, n, 0.2, 3.0);
        let scale = a.tr_mul(&b).component_div(&theta).amax();
        let lambda = r.random_range(0.05..0.5) * scale;
        let (w, _) = solve_weighted_lasso(&a, &b, &theta, lambda, 1.0, &tight_stop()).unwrap();
        let w_ref = fista(&a, &b, &theta, lambda, 1e-13);
        let f = lasso_cost(&a, &b, &theta, lambda, &w);
        let f_ref = lasso_cost(&a, &b, &theta, lambda, &w_ref);
        assert!(rel_diff(f, f_ref) < 1e-6, "seed {seed}: {f} vs {f_ref}");
        assert!(kkt_violation(&a, &b, &theta, lambda, &w) < 1e-6 * scale.max(1.0));
    }
}

#[test]
fn sharing_is_partition_invariant() {
    for seed in 0..8 {
        let p = random_problem(2000 + seed, 40, 20, 5, 0.3);
        let mut r = rng(3000 + seed);
        let theta = uniform_vector(&mut r, 20, 0.5, 2.0);
        let lambda = 0.1 * p.lambda_max();
        let cfg = tight_cfg();
        let exec = Executor::sequential();
        let direct = solve_weighted_lasso(&p.a, &p.y, &theta, lambda, 1.0, &tight_stop()).unwrap().0;
        let f_direct = lasso_objective(&p, &theta, lambda, &direct);
        for blocks in [1, 2, 4, 5] {
            let part = partition_columns(20, blocks).unwrap();
            let (w, _) = solve_sharing(&p, &part, &theta, lambda, &cfg, &exec, None).unwrap();
            let f = lasso_objective(&p, &theta, lambda, &w);
            assert!(rel_diff(f, f_direct) < 1e-6, "P={blocks}: {f} vs {f_direct}");
        }
    }
}

#[test]
fn skip_test_matches_zero_solution() {
    for seed in 0..40 {
        let mut r = rng(4000 + seed);
        let a = gaussian_matrix(&mut r, 15, 4);
        let b = gaussian_vector(&mut r, 15);
        let theta = uniform_vector(&mut r, 4, 0.5, 2.0);
        let rho = 1.0;
        // penalty just around the smallest level that zeroes the block
        let critical = a.tr_mul(&b).component_div(&theta).amax() * rho;
        let lambda = critical * if seed % 2 == 0 { 1.02 } else { 0.98 };
        let skip = block_skip_test(&a, &b, lambda, rho, &theta);
        let (w, _) = solve_weighted_lasso(&a, &b, &theta, lambda / rho, 1.0, &tight_stop()).unwrap();
        assert_eq!(skip, w.iter().all(|v| *v == 0.0), "seed {seed}");
        assert_eq!(skip, seed % 2 == 0);
    }
}

#[test]
fn group_bound_implies_skip() {
    for seed in 0..40 {
        let mut r = rng(4500 + seed);
        let a = gaussian_matrix(&mut r, 12, 5);
        let b = gaussian_vector(&mut r, 12);
        let lambda = a.tr_mul(&b).norm() * r.random_range(0.9..1.1);
        let ones = DVector::from_element(5, 1.0);
        if a.tr_mul(&b).norm() <= lambda {
            assert!(block_skip_test(&a, &b, lambda, 1.0, &ones));
        }
    }
}

#[test]
fn alpha_matches_lu_reference_on_both_routes() {
    for seed in 0..20 {
        let mut r = rng(5000 + seed);
        let (m, n) = (r.random_range(4..20), r.random_range(3..25));
        let a = gaussian_matrix(&mut r, m, n);
        let mut gamma = uniform_vector(&mut r, n, 0.1, 2.0);
        // leave some hyperparameters at zero so both routes see a real support
        for j in 0..n {
            if r.random::<f64>() < 0.3 {
                gamma[j] = 0.0;
            }
        }
        let sigma2 = r.random_range(0.05..1.0);
        let reference = alpha_reference(&a, &gamma, sigma2);
        let curv = Curvature::new(&a);
        let all = vec![true; n];
        for route in [Route::Observation, Route::Parameter, Route::Auto] {
            let alpha = curv.alpha(&gamma, sigma2, &all, route).unwrap();
            assert!(rel_vec_diff(&alpha, &reference) < 1e-9, "{route:?}");
            let ld = curv.log_det(&gamma, sigma2, route).unwrap();
            assert!(rel_diff(ld, log_det_reference(&a, &gamma, sigma2)) < 1e-9, "{route:?}");
        }
    }
}

#[test]
fn alpha_is_log_det_gradient() {
    for seed in 0..10 {
        let mut r = rng(6000 + seed);
        let a = gaussian_matrix(&mut r, 10, 6);
        let gamma = uniform_vector(&mut r, 6, 0.2, 2.0);
        let sigma2 = r.random_range(0.1..1.0);
        let alpha = alpha_update(&a, &gamma, sigma2).unwrap();
        for j in 0..6 {
            let fd = log_det_gradient_fd(&a, &gamma, sigma2, j);
            assert!(rel_diff(alpha[j], fd) < 1e-7, "{} vs {fd}", alpha[j]);
        }
    }
}

#[test]
fn theta_update_is_composition() {
    for seed in 0..20 {
        let mut r = rng(7000 + seed);
        let a = gaussian_matrix(&mut r, 12, 8);
        let theta_prev = uniform_vector(&mut r, 8, 0.3, 3.0);
        let w = sparse_vector(&mut r, 8, 4);
        let sigma2 = r.random_range(0.05..1.0);
        let t = theta_update(&a, &theta_prev, &w, sigma2).unwrap();
        let gamma = gamma_closed_form(&w, &theta_prev.map(|v| v * v)).unwrap();
        let reference = alpha_reference(&a, &gamma, sigma2).map(f64::sqrt);
        assert!(rel_vec_diff(&t, &reference) < 1e-9);
    }
}

#[test]
fn posterior_mean_matches_normal_equations() {
    for seed in 0..30 {
        let mut r = rng(8000 + seed);
        let (m, n) = (r.random_range(3..30), r.random_range(2..30));
        let a = gaussian_matrix(&mut r, m, n);
        let y = gaussian_vector(&mut r, m);
        let gamma = uniform_vector(&mut r, n, 0.05, 3.0);
        let sigma2 = r.random_range(0.01..2.0);
        let w = posterior_mean(&a, &y, &gamma, sigma2).unwrap();
        let reference = posterior_mean_reference(&a, &y, &gamma, sigma2);
        assert!(rel_vec_diff(&w, &reference) < 1e-9);
        let curv = Curvature::new(&a);
        for route in [Route::Observation, Route::Parameter] {
            let wr = curv.posterior_mean(&y, &gamma, sigma2, route).unwrap();
            assert!(rel_vec_diff(&wr, &reference) < 1e-9, "{route:?}");
        }
    }
}

#[test]
fn cccp_objective_descends() {
    for seed in 0..10 {
        let p = random_problem(9000 + seed, 30, 20, 4, 0.2);
        let cfg = SolverConfig {
            lambda_scale: 1e-12,
            ..tight_cfg()
        };
        let part = partition_columns(20, 3).unwrap();
        let run = reweighted_lasso(&p, &part, &cfg, &Executor::sequential()).unwrap();
        let trace = &run.estimate.objective_trace;
        for k in 1..trace.len() {
            assert!(
                trace[k] <= trace[k - 1] + 1e-6 * trace[k - 1].abs().max(1.0),
                "seed {seed} step {k}: {trace:?}"
            );
        }
        assert!(
            dual_objective(&p.a, &p.y, &run.estimate.w_hat, &run.state.gamma, p.sigma2).unwrap().is_finite()
        );
    }
}

#[test]
fn reweighted_results_agree_across_partitions() {
    for seed in 0..5 {
        let p = random_problem(9500 + seed, 40, 24, 5, 0.1);
        let cfg = tight_cfg();
        let exec = Executor::sequential();
        let base = reweighted_lasso(&p, &partition_columns(24, 1).unwrap(), &cfg, &exec).unwrap();
        for blocks in [3, 8] {
            let run = reweighted_lasso(&p, &partition_columns(24, blocks).unwrap(), &cfg, &exec).unwrap();
            assert_eq!(run.estimate.support, base.estimate.support, "P={blocks}");
            assert!(rel_vec_diff(&run.estimate.w_hat, &base.estimate.w_hat) < 1e-5);
        }
    }
}

#[test]
fn worker_count_is_bitwise_invisible() {
    let p = random_problem(77, 60, 40, 6, 0.2);
    let part = partition_columns(40, 7).unwrap();
    let cfg = SolverConfig::default();
    let base = reweighted_lasso(&p, &part, &cfg, &Executor::new(1).unwrap()).unwrap();
    for workers in [2, 4] {
        let run = reweighted_lasso(&p, &part, &cfg, &Executor::new(workers).unwrap()).unwrap();
        assert_eq!(run.estimate.w_hat, base.estimate.w_hat);
        assert_eq!(run.estimate.objective_trace, base.estimate.objective_trace);
        assert_eq!(run.estimate.inner_iterations, base.estimate.inner_iterations);
    }
}

#[test]
fn noiseless_sparse_recovery() {
    for seed in 0..5 {
        let mut r = rng(10_000 + seed);
        let a = gaussian_matrix(&mut r, 30, 50);
        let w = sparse_vector(&mut r, 50, 5);
        let y = &a * &w;
        let p = RegressionProblem::with_default_labels(a, y, 0.0).unwrap();
        let cfg = SolverConfig {
            lambda_scale: 1e-4,
            ..tight_cfg()
        };
        let run = reweighted_lasso(&p, &partition_columns(50, 5).unwrap(), &cfg, &Executor::sequential()).unwrap();
        let truth: Vec<usize> = (0..50).filter(|&j| w[j] != 0.0).collect();
        assert_eq!(run.estimate.support, truth, "seed {seed}");
        assert!(rel_vec_diff(&run.estimate.w_hat, &w) < 1e-3);
    }
}

#[test]
fn reweighted_l2_steps_are_posterior_means() {
    let p = random_problem(31, 40, 15, 3, 0.3);
    let cfg = SolverConfig {
        max_reweight_iters: 1,
        ..SolverConfig::default()
    };
    let run = reweighted_l2(&p, &cfg).unwrap();
    let reference = posterior_mean_reference(&p.a, &p.y, &DVector::from_element(15, 1.0), p.sigma2);
    assert!(rel_vec_diff(&run.history[0].w, &reference) < 1e-9);
}

#[test]
fn kuramoto_matches_independent_recursion() {
    use rand::SeedableRng;
    let model = generate_network(7, 0.3, -4.0, 4.0, 1.0, 12).unwrap();
    let x0 = random_initial_phases(7, 13);
    let (dt, steps, std, seed) = (0.05, 120, 0.7, 14);
    let series = simulate(&model, dt, steps, &x0, std, seed).unwrap();
    // regenerate the noise in the documented step-major order
    let mut r = rand_pcg::Pcg64::seed_from_u64(seed);
    let mut phi: Vec<f64> = x0.iter().copied().collect();
    for k in 0..steps {
        let xi: Vec<f64> = (0..7).map(|_| { let z: f64 = StandardNormal.sample(&mut r); std * z }).collect();
        let next: Vec<f64> = (0..7)
            .map(|i| {
                let coupling: f64 = (0..7).map(|j| model.coupling[(i, j)] * (phi[j] - phi[i]).sin()).sum();
                phi[i] + dt * (model.omega[i] + coupling + xi[i])
            })
            .collect();
        for i in 0..7 {
            assert_eq!(series.noise_record[(k, i)], xi[i]);
            assert!((series.phases[(k + 1, i)] - next[i]).abs() <= 1e-12 * next[i].abs().max(1.0));
        }
        phi = next;
    }
}

#[test]
fn dictionary_column_layout() {
    use netrecon::dictionary::{build_node_problem, DictionarySpec};
    let model = generate_network(4, 0.5, -3.0, 3.0, 1.0, 2).unwrap();
    let series = simulate(&model, 0.1, 20, &random_initial_phases(4, 2), 0.0, 0).unwrap();
    let p = build_node_problem(&series, 1, &DictionarySpec::default(), 0.0).unwrap();
    let expect = DMatrix::from_fn(20, 9, |k, c| {
        if c == 8 {
            return 1.0;
        }
        let d = series.phases[(k, c / 2)] - series.phases[(k, 1)];
        if c % 2 == 0 { d.sin() } else { d.cos() }
    });
    assert_eq!(p.a, expect);
}
