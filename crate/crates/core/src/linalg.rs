//! Dense linear-algebra helpers shared by every module.
//!
//! Rank decisions all go through [`rank_cutoff`], so a matrix judged
//! rank-deficient by the pseudo-inverse is judged the same way by the
//! identifiability checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Relative singular-value cutoff used for numerical rank: `1e-12 * max(rows, cols)`.
pub fn rank_tolerance(rows: usize, cols: usize) -> f64 {
    1e-12 * rows.max(cols).max(1) as f64
}

/// Absolute cutoff below which a singular value counts as zero.
pub fn rank_cutoff(singular_values: &[f64], rows: usize, cols: usize) -> f64 {
    let smax = singular_values.iter().cloned().fold(0.0, f64::max);
    rank_tolerance(rows, cols) * smax
}

pub fn ensure_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{what} contains non-finite entries")))
    }
}

/// Thin SVD `A = U diag(s) V^T` with `s` sorted in decreasing order and a
/// full orthogonal `V` (`v_t` is `r x r`). `u` is `q x r`; its columns for
/// zero singular values carry no information.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

fn sorted(u: DMatrix<f64>, s: &[f64], v_t: DMatrix<f64>) -> Svd {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v_t = DMatrix::from_fn(order.len(), v_t.ncols(), |r, c| v_t[(order[r], c)]);
    Svd {
        u,
        s: order.iter().map(|&i| s[i]).collect(),
        v_t,
    }
}

/// Checks the reconstruction and the orthogonality of `V`.
fn verified(a: &DMatrix<f64>, svd: &Svd) -> bool {
    let (q, r) = a.shape();
    if svd.v_t.shape() != (r, r) || svd.u.shape() != (q, r) {
        return false;
    }
    if svd.s.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let tol = 1e-12 * (q.max(r) as f64) * frob(a).max(f64::MIN_POSITIVE);
    let us = DMatrix::from_fn(q, r, |i, j| svd.u[(i, j)] * svd.s[j]);
    let recon = frob(&(us * &svd.v_t - a));
    let orth = frob(&(&svd.v_t * svd.v_t.transpose() - DMatrix::identity(r, r)));
    recon <= tol && orth <= 1e-10 * r as f64
}

/// nalgebra's bidiagonal SVD of a tall (or square) matrix.
fn library_svd(a: &DMatrix<f64>, eps: f64, max_iter: usize) -> Option<Svd> {
    let svd = a.clone().try_svd(true, true, eps, max_iter)?;
    Some(sorted(svd.u?, svd.singular_values.as_slice(), svd.v_t?))
}

/// One-sided Jacobi SVD for `q >= r`.
fn jacobi_svd(a: &DMatrix<f64>) -> Svd {
    let (q, r) = a.shape();
    let mut u = a.clone();
    let mut v = DMatrix::<f64>::identity(r, r);
    for _ in 0..100 {
        let mut rotated = false;
        for i in 0..r {
            for j in (i + 1)..r {
                let alpha = u.column(i).norm_squared();
                let beta = u.column(j).norm_squared();
                let gamma = u.column(i).dot(&u.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut u, &mut v] {
                    for k in 0..m.nrows() {
                        let (x, y) = (m[(k, i)], m[(k, j)]);
                        m[(k, i)] = c * x - s * y;
                        m[(k, j)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let s: Vec<f64> = (0..r).map(|j| u.column(j).norm()).collect();
    for (j, &sj) in s.iter().enumerate() {
        if sj > 0.0 {
            u.column_mut(j).unscale_mut(sj);
        } else {
            u.column_mut(j).fill(0.0);
        }
    }
    debug_assert_eq!(u.nrows(), q);
    sorted(u, &s, v.transpose())
}

fn tall_svd(a: &DMatrix<f64>) -> Svd {
    for (eps, iters) in [(f64::EPSILON, 0), (1e-30, 100_000)] {
        if let Some(svd) = library_svd(a, eps, iters) {
            if verified(a, &svd) {
                return svd;
            }
        }
    }
    jacobi_svd(a)
}

/// Verified singular value decomposition.
///
/// The library routine occasionally returns inconsistent singular vectors
/// for rank-deficient inputs, so every result is checked against `A` and
/// recomputed with tighter convergence or one-sided Jacobi when it fails.
pub fn svd(a: &DMatrix<f64>) -> Svd {
    let (q, r) = a.shape();
    if q == 0 || r == 0 {
        return Svd {
            u: DMatrix::zeros(q, r),
            s: vec![0.0; r],
            v_t: DMatrix::identity(r, r),
        };
    }
    if q >= r {
        return tall_svd(a);
    }
    // Wide: pad with zero rows so the decomposition keeps a complete V.
    let mut padded = DMatrix::zeros(r, r);
    padded.view_mut((0, 0), (q, r)).copy_from(a);
    let full = tall_svd(&padded);
    Svd {
        u: full.u.rows(0, q).into_owned(),
        s: full.s,
        v_t: full.v_t,
    }
}

/// Moore-Penrose pseudo-inverse through the SVD.
///
/// Singular values `s_i <= 1e-12 * max(q, r) * s_max` are treated as zero.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_finite(a, "matrix")?;
    let (q, r) = a.shape();
    let d = svd(a);
    let cutoff = rank_cutoff(&d.s, q, r);
    let mut out = DMatrix::zeros(r, q);
    for (k, &s) in d.s.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let vk = d.v_t.row(k).transpose();
        let uk = d.u.column(k).into_owned();
        out.ger(1.0 / s, &vk, &uk, 1.0);
    }
    Ok(out)
}

/// The `min(q, r)` singular values in decreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s = svd(a).s;
    s.truncate(a.nrows().min(a.ncols()));
    s
}

/// Numerical rank and the smallest retained singular value (0 when the rank is 0).
pub fn numerical_rank(a: &DMatrix<f64>) -> (usize, f64) {
    let sv = singular_values(a);
    let cutoff = rank_cutoff(&sv, a.nrows(), a.ncols());
    let kept: Vec<f64> = sv.into_iter().filter(|&s| s > cutoff && s > 0.0).collect();
    let smallest = kept.last().cloned().unwrap_or(0.0);
    (kept.len(), smallest)
}

/// Orthonormal basis (as columns) of the null space of `a`.
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let p = a.ncols();
    let d = svd(a);
    let cutoff = rank_cutoff(&d.s, a.nrows(), p);
    let null_rows: Vec<usize> = (0..p).filter(|&k| d.s[k] <= cutoff).collect();
    let mut basis = DMatrix::zeros(p, null_rows.len());
    for (j, &k) in null_rows.iter().enumerate() {
        basis.set_column(j, &d.v_t.row(k).transpose());
    }
    basis
}

/// Squared Frobenius norm.
pub fn frob2(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn frob(a: &DMatrix<f64>) -> f64 {
    frob2(a).sqrt()
}

/// Largest eigenvalue of a symmetric matrix (`-inf` for an empty one).
pub fn max_sym_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    a.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    if a.nrows() == 0 {
        return DVector::zeros(0);
    }
    a.symmetric_eigenvalues()
}

/// `(A + A^T) / 2`.
pub fn sym_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Accepts `a` as symmetric when `||A - A^T|| <= 1e-12 ||A||` and returns its
/// symmetric part; rejects anything more asymmetric than that.
pub fn symmetrize_checked(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(invalid(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a, what)?;
    let skew = frob(&(a - a.transpose()));
    let scale = frob(a);
    if skew > 1e-12 * scale {
        return Err(invalid(format!(
            "{what} is not symmetric (||A - A^T|| = {skew:e}, ||A|| = {scale:e})"
        )));
    }
    Ok(sym_part(a))
}

/// Stacks `top` over `bottom` (same column count).
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(top.ncols(), bottom.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

pub(crate) fn check_shape(
    a: &DMatrix<f64>,
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<()> {
    if a.shape() != (rows, cols) {
        return Err(invalid(format!(
            "{what} has shape {}x{}, expected {rows}x{cols}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn check_len(v: &DVector<f64>, len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(invalid(format!(
            "{what} has length {}, expected {len}",
            v.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pinv_of_identity_and_zero() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(pseudo_inverse(&i3).unwrap(), i3, epsilon = 1e-14);
        let z = DMatrix::<f64>::zeros(2, 3);
        assert_eq!(pseudo_inverse(&z).unwrap(), DMatrix::zeros(3, 2));
    }

    #[test]
    fn pinv_rejects_nan() {
        let mut a = DMatrix::<f64>::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(pseudo_inverse(&a).is_err());
    }

    #[test]
    fn pinv_empty() {
        let a = DMatrix::<f64>::zeros(0, 4);
        assert_eq!(pseudo_inverse(&a).unwrap().shape(), (4, 0));
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let n = null_space(&a);
        assert_eq!(n.ncols(), 2);
        assert!((&a * &n).norm() < 1e-12);
        assert_relative_eq!(n.transpose() * &n, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn rank_of_rank_one() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let v = DVector::from_vec(vec![1.0, -1.0]);
        let a = &u * v.transpose();
        assert_eq!(numerical_rank(&a).0, 1);
        assert_eq!(numerical_rank(&DMatrix::zeros(3, 3)).0, 0);
    }

    #[test]
    fn symmetrize_tolerates_roundoff_only() {
        let mut a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        a[(0, 1)] += 1e-15;
        assert!(symmetrize_checked(&a, "P").is_ok());
        a[(0, 1)] += 1e-3;
        assert!(symmetrize_checked(&a, "P").is_err());
    }

    fn low_rank(seed: u64, q: usize, r: usize, k: usize) -> DMatrix<f64> {
        let mut g = crate::rng::stream(seed, 0);
        crate::rng::normal_matrix(&mut g, q, k) * crate::rng::normal_matrix(&mut g, k, r)
    }

    #[test]
    fn svd_recomposes_rank_deficient_inputs() {
        for seed in 0..300u64 {
            let q = 2 + (seed % 37) as usize;
            let r = 2 + (seed * 7 % 29) as usize;
            let k = 1 + (seed % 4) as usize;
            let a = low_rank(seed, q, r, k.min(q).min(r));
            let d = svd(&a);
            assert!(verified(&a, &d), "seed {seed} shape {q}x{r}");
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn jacobi_matches_library_values() {
        let a = low_rank(11, 12, 7, 3) + DMatrix::from_fn(12, 7, |i, j| ((i * 7 + j) as f64).sin() * 1e-3);
        let j = jacobi_svd(&a);
        assert!(verified(&a, &j));
        let lib: Vec<f64> = {
            let mut v: Vec<f64> = a.singular_values().iter().cloned().collect();
            v.sort_by(|x, y| y.total_cmp(x));
            v
        };
        for (x, y) in j.s.iter().zip(lib.iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-12 * lib[0]);
        }
    }

    #[test]
    fn wide_svd_keeps_full_right_basis() {
        let a = low_rank(3, 4, 9, 2);
        let d = svd(&a);
        assert_eq!(d.v_t.shape(), (9, 9));
        assert_eq!(singular_values(&a).len(), 4);
        assert_eq!(null_space(&a).ncols(), 7);
    }
}
