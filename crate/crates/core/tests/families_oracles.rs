mod common;

use common::*;
use linsel::families::*;
use linsel::harness::{run_smoothing, test_signal, Experiment, ExperimentConfig};
use linsel::linmodel::{oracle_select, quadratic_risk};
use linsel::{EstimatorMatrix, LinearModel, RiskMode};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn spd(g: &mut rand_chacha::ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = gaussian(g, n, n);
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n)
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Weighted least squares under `E beta = 0` through the KKT system.
fn constrained_ls(x: &DMatrix<f64>, p: &DMatrix<f64>, h: &DMatrix<f64>, e: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let d = x.ncols();
    let k = e.nrows();
    let mut kkt = DMatrix::zeros(d + k, d + k);
    kkt.view_mut((0, 0), (d, d)).copy_from(&(x.transpose() * p * x + h));
    kkt.view_mut((0, d), (d, k)).copy_from(&e.transpose());
    kkt.view_mut((d, 0), (k, d)).copy_from(e);
    let mut rhs = DVector::zeros(d + k);
    rhs.rows_mut(0, d).copy_from(&(x.transpose() * p * y));
    kkt.lu().solve(&rhs).unwrap().rows(0, d).into_owned()
}

#[test]
fn tikhonov_solves_its_normal_equations() {
    let mut g = gen(101);
    for _ in 0..20 {
        let x = gaussian(&mut g, 10, 6);
        let p = spd(&mut g, 10);
        let h = spd(&mut g, 6);
        let psi = build_tikhonov(&x, &p, &h).unwrap();
        let lhs = (x.transpose() * &p * &x + &h) * &psi;
        assert!(rel(&lhs, &(x.transpose() * &p)) < 1e-8);
    }
}

#[test]
fn constrained_fit_matches_kkt_solution() {
    let mut g = gen(102);
    for _ in 0..20 {
        let x = gaussian(&mut g, 12, 7);
        let p = spd(&mut g, 12);
        let phi_bar = gaussian(&mut g, 2, 7);
        let psi = build_basis_constrained(&x, &p, &phi_bar).unwrap();
        let y = gvec(&mut g, 12);
        let est = &psi * &y;
        let oracle = constrained_ls(&x, &p, &DMatrix::zeros(7, 7), &phi_bar, &y);
        assert!((&est - &oracle).norm() <= 1e-8 * oracle.norm());
        assert!((&phi_bar * &est).norm() <= 1e-8 * est.norm());
    }
}

#[test]
fn regularized_constrained_fit_matches_kkt_solution() {
    let mut g = gen(103);
    for _ in 0..10 {
        let x = gaussian(&mut g, 12, 7);
        let p = spd(&mut g, 12);
        let phi = gaussian(&mut g, 7, 7);
        let f = DMatrix::from_diagonal(&DVector::from_fn(7, |i, _| (i as f64 + 1.0).powi(2)));
        let h = coefficient_regularizer(&phi, &f).unwrap();
        let phi_bar = gaussian(&mut g, 3, 7);
        let psi = build_basis_regularized(&x, &p, &phi_bar, &h).unwrap();
        let y = gvec(&mut g, 12);
        let oracle = constrained_ls(&x, &p, &h, &phi_bar, &y);
        assert!((&psi * &y - &oracle).norm() <= 1e-8 * oracle.norm());
    }
}

#[test]
fn large_mu_matches_exact_constrained_filter() {
    let mut g = gen(104);
    for _ in 0..10 {
        let x = gaussian(&mut g, 15, 8);
        let p = spd(&mut g, 15);
        let h = spd(&mut g, 8) * 0.1;
        let phi_bar = gaussian(&mut g, 3, 8);
        let exact = build_basis_regularized(&x, &p, &phi_bar, &h).unwrap();
        let approx = build_penalty_approximation(&x, &p, &phi_bar, &h, 1e8).unwrap();
        assert!(rel(&approx, &exact) < 1e-4, "{}", rel(&approx, &exact));
    }
}

#[test]
fn variable_selection_is_restricted_least_squares() {
    let mut g = gen(105);
    for _ in 0..20 {
        let x = gaussian(&mut g, 11, 6);
        let p = spd(&mut g, 11);
        let nu: Vec<u8> = (0..6).map(|_| g.random_range(0..2u8)).collect();
        let psi = build_variable_selection(&x, &p, &nu).unwrap();
        let active: Vec<usize> = (0..6).filter(|&k| nu[k] == 0).collect();
        let y = gvec(&mut g, 11);
        let mut oracle = DVector::zeros(6);
        if !active.is_empty() {
            let xa = x.select_columns(&active);
            let sol = (xa.transpose() * &p * &xa).lu().solve(&(xa.transpose() * &p * &y)).unwrap();
            for (j, &k) in active.iter().enumerate() {
                oracle[k] = sol[j];
            }
        }
        assert!((&psi * &y - &oracle).norm() <= 1e-8 * oracle.norm().max(1.0));
    }
}

#[test]
fn ideal_filter_beats_random_perturbations() {
    let mut g = gen(106);
    let x = gaussian(&mut g, 6, 6);
    let r = gaussian(&mut g, 6, 6) * 0.5;
    let beta = gvec(&mut g, 6);
    let model = LinearModel::new(x.clone(), r.clone()).unwrap();
    let ideal = build_ideal(&beta, &x, &r).unwrap();
    let best = quadratic_risk(&model, &EstimatorMatrix::new("i", ideal.clone(), ""), &beta).unwrap();
    for eps in [1e-3, 1e-1] {
        for _ in 0..10_000 {
            let psi = &ideal + gaussian(&mut g, 6, 6) * eps;
            let r_pert = quadratic_risk(&model, &EstimatorMatrix::new("p", psi, ""), &beta).unwrap();
            assert!(best <= r_pert * (1.0 + 1e-12));
        }
    }
}

#[test]
fn ideal_risk_matches_generic_risk() {
    let mut g = gen(107);
    for _ in 0..20 {
        let n = 4 + g.random_range(0..6);
        let d = 2 + g.random_range(0..5);
        let x = gaussian(&mut g, n, d);
        let r = gaussian(&mut g, n, n);
        let beta = gvec(&mut g, d);
        let model = LinearModel::new(x.clone(), r.clone()).unwrap();
        let psi = EstimatorMatrix::new("i", build_ideal(&beta, &x, &r).unwrap(), "");
        let generic = quadratic_risk(&model, &psi, &beta).unwrap();
        let closed = ideal_risk(&beta, &x, &r).unwrap();
        assert!((generic - closed).abs() <= 1e-8 * generic.abs().max(1e-12));
    }
}

#[test]
fn ideal_filter_beats_a_whole_family() {
    let p = 30;
    let model = LinearModel::denoising(p, 1.0).unwrap();
    let beta = test_signal(p);
    let mut family = build_gaussian_bank(p, 40, Normalization::RowStochastic).unwrap();
    let ideal = build_ideal(&beta, model.x(), model.r()).unwrap();
    family.push(EstimatorMatrix::new("ideal", ideal, "ideal"));
    let o = oracle_select(&model, &family, &beta, RiskMode::Quadratic).unwrap();
    assert_eq!(o.id.0, "ideal");
}

#[test]
fn bank_oracle_bandwidth_near_published_value() {
    let p = 100;
    let model = LinearModel::denoising(p, 1.0).unwrap();
    let beta = test_signal(p);
    let family = build_gaussian_bank(p, 100, Normalization::RowStochastic).unwrap();
    let o = oracle_select(&model, &family, &beta, RiskMode::Quadratic).unwrap();
    let sigma = bank_bandwidth(&family[o.index].label).unwrap();
    // Grid step is 0.1.
    assert!((sigma - 2.43).abs() <= 0.1 + 1e-12, "oracle sigma {sigma}");
}

#[test]
fn selected_bandwidth_same_order_as_published() {
    let mut c = ExperimentConfig::new(Experiment::Smoothing);
    c.models = 1000;
    c.trials = 20;
    let out = run_smoothing(&c).unwrap();
    let mut chosen: Vec<f64> = out
        .report
        .trials
        .iter()
        .map(|t| bank_bandwidth(&out.labels[t.chosen_index]).unwrap())
        .collect();
    chosen.sort_by(f64::total_cmp);
    let median = chosen[chosen.len() / 2];
    let oracle = bank_bandwidth(&out.labels[out.report.oracle_index]).unwrap();
    assert!(median > 4.05 / 3.0 && median < 4.05 * 3.0, "median selected sigma {median}");
    assert!(median >= oracle * 0.8, "median {median} oracle {oracle}");
}
