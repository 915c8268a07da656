mod common;

use common::*;
use linsel::linalg::pseudo_inverse;
use linsel::linmodel::{oracle_select, predictive_risk, quadratic_risk};
use linsel::{rng, EstimatorMatrix, LinearModel, RiskMode};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn pinv_of_rank_two_satisfies_penrose() {
    let mut g = gen(11);
    let a = rank_deficient(&mut g, 5, 3, 2);
    let p = pseudo_inverse(&a).unwrap();
    assert!(penrose_residual(&a, &p) < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn pinv_penrose_on_random_shapes(rows in 1usize..50, cols in 1usize..50, rank_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let mut g = gen(seed);
        let rank = ((rows.min(cols) as f64) * rank_frac) as usize;
        let a = rank_deficient(&mut g, rows, cols, rank);
        let p = pseudo_inverse(&a).unwrap();
        prop_assert!(penrose_residual(&a, &p) < 1e-8);
    }

    #[test]
    fn risks_are_nonnegative(n in 1usize..8, p in 1usize..8, seed in any::<u64>()) {
        let mut g = gen(seed);
        let model = LinearModel::new(gaussian(&mut g, n, p), gaussian(&mut g, n, n)).unwrap();
        let psi = EstimatorMatrix::new("m", gaussian(&mut g, p, n), "");
        let beta = gvec(&mut g, p);
        let slack = 1e-10 * (beta.norm_squared() + (&psi.psi * model.r()).norm_squared());
        prop_assert!(quadratic_risk(&model, &psi, &beta).unwrap() >= -slack);
        prop_assert!(predictive_risk(&model, &psi, &beta).unwrap() >= -slack * 10.0);
    }

    #[test]
    fn predictive_is_quadratic_on_composite(n in 1usize..8, p in 1usize..8, seed in any::<u64>()) {
        let mut g = gen(seed);
        let x = gaussian(&mut g, n, p);
        let r = gaussian(&mut g, n, n);
        let model = LinearModel::new(x.clone(), r.clone()).unwrap();
        let psi = EstimatorMatrix::new("m", gaussian(&mut g, p, n), "");
        let beta = gvec(&mut g, p);
        let pred = predictive_risk(&model, &psi, &beta).unwrap();
        let composite = LinearModel::new(DMatrix::identity(n, n), r).unwrap();
        let xpsi = EstimatorMatrix::new("xm", &x * &psi.psi, "");
        let quad = quadratic_risk(&composite, &xpsi, &(&x * &beta)).unwrap();
        prop_assert!((pred - quad).abs() <= 1e-10 * quad.abs().max(1.0));
    }

    #[test]
    fn oracle_value_is_order_invariant(seed in any::<u64>(), shift in 0usize..6) {
        let mut g = gen(seed);
        let model = LinearModel::new(gaussian(&mut g, 4, 3), gaussian(&mut g, 4, 4)).unwrap();
        let beta = gvec(&mut g, 3);
        let fam: Vec<EstimatorMatrix> = (0..6)
            .map(|i| EstimatorMatrix::new(format!("m{i}"), gaussian(&mut g, 3, 4) * 0.3, ""))
            .collect();
        let mut rotated = fam.clone();
        rotated.rotate_left(shift);
        let a = oracle_select(&model, &fam, &beta, RiskMode::Quadratic).unwrap();
        let b = oracle_select(&model, &rotated, &beta, RiskMode::Quadratic).unwrap();
        prop_assert_eq!(a.risk(), b.risk());
    }
}

/// Monte-Carlo average of the realized loss against the closed forms.
#[test]
fn risks_match_monte_carlo() {
    let mut g = gen(5);
    for &(n, p, mode) in &[(8, 8, RiskMode::Quadratic), (6, 9, RiskMode::Predictive)] {
        let x = gaussian(&mut g, n, p);
        let model = LinearModel::new(x.clone(), gaussian(&mut g, n, n)).unwrap();
        let psi = EstimatorMatrix::new("m", gaussian(&mut g, p, n) * 0.5, "");
        let beta = gvec(&mut g, p);
        let exact = match mode {
            RiskMode::Quadratic => quadratic_risk(&model, &psi, &beta).unwrap(),
            RiskMode::Predictive => predictive_risk(&model, &psi, &beta).unwrap(),
        };
        let mut s = rng::stream(99, n as u64);
        let draws = 1_000_000;
        let losses: Vec<f64> = (0..draws)
            .map(|_| {
                let y = model.observe(&beta, &rng::normal_vector(&mut s, n)).unwrap();
                let est = psi.apply(&y);
                match mode {
                    RiskMode::Quadratic => (est - &beta).norm_squared(),
                    RiskMode::Predictive => (&x * (est - &beta)).norm_squared(),
                }
            })
            .collect();
        let (mean, se) = mean_se(&losses);
        assert!((mean - exact).abs() / exact < 0.01, "{mode}: mc {mean} exact {exact}");
        assert!((mean - exact).abs() <= 3.0 * se, "{mode}: mc {mean} +- {se} exact {exact}");
    }
}

#[test]
fn perfect_member_is_the_oracle() {
    let model = LinearModel::new(
        DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 2.0])),
    )
    .unwrap();
    let perfect = EstimatorMatrix::new(
        "perfect",
        DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        "",
    );
    let fam = vec![EstimatorMatrix::new("zero", DMatrix::zeros(2, 3), ""), perfect];
    let beta = DVector::from_vec(vec![0.3, -1.0]);
    let o = oracle_select(&model, &fam, &beta, RiskMode::Quadratic).unwrap();
    assert_eq!(o.id.0, "perfect");
    assert!(o.risk().abs() < 1e-14);
}
