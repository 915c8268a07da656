//! Noiseless reconstructors `K` with `beta = K X beta` on a constraint class,
//! and the rank certificates that justify them.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, LinselError, Result};
use crate::families::check_psd;
use crate::linalg::{
    ensure_finite, frob, null_space, numerical_rank, pseudo_inverse, singular_values,
    symmetrize_checked, vstack,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    FullRank,
    BasisAnnihilator,
    QuadraticMinimizer,
    ApproximateMu,
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Construction::FullRank => "full_rank",
            Construction::BasisAnnihilator => "basis_annihilator",
            Construction::QuadraticMinimizer => "quadratic_minimizer",
            Construction::ApproximateMu => "approximate_mu",
        })
    }
}

/// Rank report for the stacked matrix `[X; phi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub augmented_rank: usize,
    pub expected_rank: usize,
    pub identifiable: bool,
    pub smallest_singular_value: f64,
    pub largest_singular_value: f64,
    /// Worst relative reconstruction residual over the checked class.
    pub max_residual: f64,
    /// Set when a matrix that the inverse form needs was singular and the
    /// pseudo-inverse stood in for it.
    pub used_pseudo_inverse: bool,
    /// Relative Frobenius distance of an approximate `K` from the exact one.
    pub approx_deviation: Option<f64>,
}

impl Certificate {
    /// `key = value` lines for reports.
    pub fn report(&self, construction: Construction) -> String {
        let mut out = format!(
            "construction = {construction}\naugmented_rank = {}\nexpected_rank = {}\nidentifiable = {}\nsmallest_singular_value = {:e}\nlargest_singular_value = {:e}\nmax_residual = {:e}\nused_pseudo_inverse = {}\n",
            self.augmented_rank,
            self.expected_rank,
            self.identifiable,
            self.smallest_singular_value,
            self.largest_singular_value,
            self.max_residual,
            self.used_pseudo_inverse,
        );
        if let Some(d) = self.approx_deviation {
            out.push_str(&format!("approx_deviation = {d:e}\n"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Reconstructor {
    pub k: DMatrix<f64>,
    pub construction: Construction,
    pub certificate: Certificate,
}

impl Reconstructor {
    pub fn p(&self) -> usize {
        self.k.nrows()
    }

    pub fn n(&self) -> usize {
        self.k.ncols()
    }
}

/// Numerical rank of `[X; phi]` and its extreme retained singular values.
pub fn check_identifiability(x: &DMatrix<f64>, phi: &DMatrix<f64>) -> Result<Certificate> {
    let stacked = stack_constraints(x, phi)?;
    let (rank, smallest) = numerical_rank(&stacked);
    let largest = singular_values(&stacked).first().cloned().unwrap_or(0.0);
    Ok(Certificate {
        augmented_rank: rank,
        expected_rank: x.ncols(),
        identifiable: rank == x.ncols(),
        smallest_singular_value: smallest,
        largest_singular_value: largest,
        max_residual: f64::NAN,
        used_pseudo_inverse: false,
        approx_deviation: None,
    })
}

fn stack_constraints(x: &DMatrix<f64>, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_finite(x, "X")?;
    ensure_finite(phi, "phi")?;
    if phi.ncols() != x.ncols() {
        return Err(invalid(format!(
            "phi has {} columns, expected {}",
            phi.ncols(),
            x.ncols()
        )));
    }
    Ok(vstack(x, phi))
}

/// Worst `||K X v - v|| / ||v||` over the columns of `basis`.
fn worst_residual(k: &DMatrix<f64>, x: &DMatrix<f64>, basis: &DMatrix<f64>) -> f64 {
    let kx = k * x;
    basis
        .column_iter()
        .map(|v| {
            let v = v.into_owned();
            let nv = v.norm();
            if nv == 0.0 {
                0.0
            } else {
                (&kx * &v - &v).norm() / nv
            }
        })
        .fold(0.0, f64::max)
}

/// `K = (X^T X)^{-1} X^T` for a design of full column rank.
pub fn reconstructor_full_rank(x: &DMatrix<f64>) -> Result<Reconstructor> {
    let mut cert = check_identifiability(x, &DMatrix::zeros(0, x.ncols()))?;
    if !cert.identifiable {
        return Err(LinselError::RankDeficient {
            rank: cert.augmented_rank,
            expected: cert.expected_rank,
        });
    }
    let k = pseudo_inverse(x)?;
    cert.max_residual = worst_residual(&k, x, &DMatrix::identity(x.ncols(), x.ncols()));
    Ok(Reconstructor {
        k,
        construction: Construction::FullRank,
        certificate: cert,
    })
}

/// `K = (X^T X + phi^T phi)^{-1} X^T`, exact on `{beta : phi beta = 0}` when
/// `[X; phi]` has full column rank.
pub fn reconstructor_basis(x: &DMatrix<f64>, phi: &DMatrix<f64>) -> Result<Reconstructor> {
    let mut cert = check_identifiability(x, phi)?;
    if !cert.identifiable {
        return Err(LinselError::Identifiability(format!(
            "rank of [X; phi] is {} but p = {}",
            cert.augmented_rank, cert.expected_rank
        )));
    }
    let n = x.nrows();
    let k = pseudo_inverse(&vstack(x, phi))?.columns(0, n).into_owned();
    cert.max_residual = worst_residual(&k, x, &null_space(phi));
    Ok(Reconstructor {
        k,
        construction: Construction::BasisAnnihilator,
        certificate: cert,
    })
}

/// Symmetric square root of a PSD matrix, negative round-off clamped to zero.
fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Reconstructor for the `Pi`-minimal element of `{mu : X mu = X beta, phi mu = 0}`.
///
/// With `mu_approx = Some(m)` the returned `K` is the penalty approximation
/// `m (Pi + m X^T X + m phi^T phi)^{-1} X^T`, and the certificate records its
/// distance from the exact one.
pub fn reconstructor_quadratic(
    x: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    mu_approx: Option<f64>,
) -> Result<Reconstructor> {
    let p = x.ncols();
    let n = x.nrows();
    if pi.shape() != (p, p) {
        return Err(invalid(format!(
            "Pi has shape {}x{}, expected {p}x{p}",
            pi.nrows(),
            pi.ncols()
        )));
    }
    let pi = symmetrize_checked(pi, "Pi")?;
    check_psd(&pi, "Pi")?;
    let mut cert = check_identifiability(x, phi)?;
    let stacked = vstack(x, phi);
    let base = pseudo_inverse(&stacked)?.columns(0, n).into_owned();
    let z = null_space(&stacked);

    let k_exact = if z.ncols() == 0 {
        base
    } else if frob(&pi) == 0.0 {
        // Least-norm convention: no weight to choose among solutions.
        cert.used_pseudo_inverse = true;
        base
    } else {
        let zt_pi = z.transpose() * &pi;
        let reduced = &zt_pi * &z;
        let (rank, _) = numerical_rank(&reduced);
        if rank < z.ncols() {
            return Err(LinselError::Identifiability(format!(
                "Pi + X^T X + phi^T phi is singular: Pi has rank {rank} on the {}-dimensional null space of [X; phi]",
                z.ncols()
            )));
        }
        let w = reduced
            .lu()
            .solve(&(zt_pi * &base))
            .ok_or_else(|| LinselError::Identifiability("Pi restricted to the null space is singular".into()))?;
        &base - &z * w
    };

    // Reconstruction holds on the range of K X, which is exactly the solution class.
    let class = &k_exact * x;
    cert.max_residual = worst_residual(&k_exact, x, &class);

    match mu_approx {
        None => Ok(Reconstructor {
            k: k_exact,
            construction: Construction::QuadraticMinimizer,
            certificate: cert,
        }),
        Some(mu) => {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(invalid("mu_approx must be a positive finite number"));
            }
            let weighted = vstack(&stacked, &(psd_sqrt(&pi) / mu.sqrt()));
            let k = pseudo_inverse(&weighted)?.columns(0, n).into_owned();
            let scale = frob(&k_exact);
            let dev = frob(&(&k - &k_exact));
            cert.approx_deviation = Some(if scale > 0.0 { dev / scale } else { dev });
            Ok(Reconstructor {
                k,
                construction: Construction::ApproximateMu,
                certificate: cert,
            })
        }
    }
}

/// `diag(delta) * Phi`: keeps the rows of `Phi` whose coefficient is assumed to vanish.
pub fn phi_from_zero_pattern(phi: &DMatrix<f64>, delta: &[u8]) -> Result<DMatrix<f64>> {
    if delta.len() != phi.nrows() {
        return Err(invalid(format!(
            "zero pattern has length {}, expected {}",
            delta.len(),
            phi.nrows()
        )));
    }
    if delta.iter().any(|&d| d > 1) {
        return Err(invalid("zero pattern entries must be 0 or 1"));
    }
    let mut out = phi.clone();
    for (i, &d) in delta.iter().enumerate() {
        if d == 0 {
            out.row_mut(i).fill(0.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn full_rank_identity_and_scaling() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        let r = reconstructor_full_rank(&i3).unwrap();
        assert_relative_eq!(r.k, i3, epsilon = 1e-14);
        let r = reconstructor_full_rank(&(&i3 * 2.0)).unwrap();
        assert_relative_eq!(r.k, &i3 * 0.5, epsilon = 1e-14);
        assert!(r.certificate.max_residual < 1e-12);
    }

    #[test]
    fn full_rank_rejects_deficient() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        match reconstructor_full_rank(&x) {
            Err(LinselError::RankDeficient { rank: 1, expected: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn complementary_coordinates() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let phi = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let r = reconstructor_basis(&x, &phi).unwrap();
        let beta = DVector::from_vec(vec![3.5, 0.0]);
        assert_relative_eq!(&r.k * &x * &beta, beta, epsilon = 1e-14);
        assert!(reconstructor_basis(&x, &DMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn quadratic_least_norm_convention() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        let r = reconstructor_quadratic(&x, &DMatrix::zeros(3, 3), &DMatrix::zeros(0, 3), None)
            .unwrap();
        assert_relative_eq!(r.k, pseudo_inverse(&x).unwrap(), epsilon = 1e-12);
        assert!(r.certificate.used_pseudo_inverse);
    }

    #[test]
    fn quadratic_singular_weight_is_rejected() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let pi = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            reconstructor_quadratic(&x, &pi, &DMatrix::zeros(0, 2), None),
            Err(LinselError::Identifiability(_))
        ));
    }

    #[test]
    fn quadratic_full_rank_design_is_exact() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, 0.1]);
        let pi = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let r = reconstructor_quadratic(&x, &pi, &DMatrix::zeros(0, 2), None).unwrap();
        assert_relative_eq!(&r.k * &x, DMatrix::identity(2, 2), epsilon = 1e-10);
    }

    #[test]
    fn identifiability_reports() {
        let c = check_identifiability(&DMatrix::identity(4, 4), &DMatrix::zeros(0, 4)).unwrap();
        assert!(c.identifiable);
        assert_eq!(c.augmented_rank, 4);
        let c = check_identifiability(&DMatrix::zeros(3, 3), &DMatrix::zeros(2, 3)).unwrap();
        assert!(!c.identifiable);
        assert_eq!(c.augmented_rank, 0);
        assert!(c.report(Construction::FullRank).contains("augmented_rank = 0"));
    }

    #[test]
    fn zero_pattern_rows() {
        let phi = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let out = phi_from_zero_pattern(&phi, &[0, 1]).unwrap();
        assert_eq!(out, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 4.0]));
        assert!(phi_from_zero_pattern(&phi, &[2, 1]).is_err());
    }
}
