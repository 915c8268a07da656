mod common;

use common::*;
use linsel::families::{gaussian_filter, Normalization};
use linsel::harness::draw_design;
use linsel::identify::*;
use nalgebra::{DMatrix, DVector};

fn max_null_residual(k: &DMatrix<f64>, x: &DMatrix<f64>, basis: &DMatrix<f64>) -> f64 {
    let kx = k * x;
    basis
        .column_iter()
        .map(|v| (&kx * v - v).norm() / v.norm())
        .fold(0.0, f64::max)
}

#[test]
fn rank_sixty_design_with_annihilating_basis() {
    let mut g = gen(201);
    let x = rank_deficient(&mut g, 100, 100, 60);
    let q = orthonormal(&mut g, 100);
    let phi = q.columns(60, 40).transpose();
    let rec = reconstructor_basis(&x, &phi).unwrap();
    assert_eq!(rec.certificate.augmented_rank, 100);
    let basis = eig_null_space(&phi);
    assert_eq!(basis.ncols(), 60);
    let res = max_null_residual(&rec.k, &x, &basis);
    assert!(res <= 1e-8, "residual {res}");
}

#[test]
fn missing_annihilator_is_an_identifiability_error() {
    let mut g = gen(202);
    let x = rank_deficient(&mut g, 20, 20, 12);
    let phi = gaussian(&mut g, 5, 20);
    assert!(matches!(
        reconstructor_basis(&x, &phi),
        Err(linsel::LinselError::Identifiability(_))
    ));
}

/// Ellipsoid weight `Phi^T C Phi` with fast-growing `C`.
fn ellipsoid(g: &mut rand_chacha::ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let phi = orthonormal(g, p);
    let c = DMatrix::from_diagonal(&DVector::from_fn(p, |k, _| ((k + 1) as f64).powi(2)));
    phi.transpose() * c * phi
}

#[test]
fn quadratic_reconstructor_matches_null_space_qp() {
    let mut g = gen(203);
    let x = rank_deficient(&mut g, 25, 30, 18);
    let pi = ellipsoid(&mut g, 30);
    for phi_rows in [0usize, 3] {
        let phi = gaussian(&mut g, phi_rows, 30);
        let rec = reconstructor_quadratic(&x, &pi, &phi, None).unwrap();
        let e = vstack(&x, &phi);
        let free = eig_null_space(&phi);
        for _ in 0..10 {
            let beta = &free * gvec(&mut g, free.ncols());
            let oracle = qp_null_space(&pi, &e, &beta);
            let got = &rec.k * &x * &beta;
            assert!((&got - &oracle).norm() <= 1e-6 * oracle.norm(), "{}", (&got - &oracle).norm());
            let again = &rec.k * &x * &oracle;
            assert!((&again - &oracle).norm() <= 1e-6 * oracle.norm());
        }
    }
}

#[test]
fn approximation_improves_with_mu() {
    let mut g = gen(204);
    for _ in 0..5 {
        let x = rank_deficient(&mut g, 20, 24, 15);
        let pi = ellipsoid(&mut g, 24);
        let phi = gaussian(&mut g, 2, 24);
        let devs: Vec<f64> = [1e2, 1e4, 1e6, 1e8]
            .iter()
            .map(|&mu| {
                reconstructor_quadratic(&x, &pi, &phi, Some(mu))
                    .unwrap()
                    .certificate
                    .approx_deviation
                    .unwrap()
            })
            .collect();
        assert!(devs.windows(2).all(|w| w[1] < w[0]), "{devs:?}");
    }
}

#[test]
fn smoothing_kernel_restores_rank_on_inverse_design() {
    let (x, _) = draw_design(100, 7, 500.0, 100).unwrap();
    let phi = DMatrix::identity(100, 100) - gaussian_filter(100, 0.5, Normalization::RowStochastic);
    let cert = check_identifiability(&x, &phi).unwrap();
    assert_eq!(cert.augmented_rank, 100);
    assert!(cert.identifiable);
}

#[test]
fn inverse_design_extremes_match_published_magnitudes() {
    let (x, draw) = draw_design(100, 7, 500.0, 100).unwrap();
    let cert = check_identifiability(&x, &DMatrix::zeros(0, 100)).unwrap();
    assert_eq!(cert.augmented_rank, 100);
    // Same order of magnitude as 19.9659 and 0.0098.
    assert!(draw.s_max / 19.9659 > 0.316 && draw.s_max / 19.9659 < 3.16, "{draw:?}");
    assert!(draw.s_min / 0.0098 > 0.1 && draw.s_min / 0.0098 < 10.0, "{draw:?}");
    assert!((cert.largest_singular_value - draw.s_max).abs() < 1e-10 * draw.s_max);
}
