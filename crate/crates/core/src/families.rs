//! Constructors for families of linear estimators: regularized least squares,
//! subspace-constrained fits, variable selection, Gaussian smoothing banks,
//! difference-operator regularization, and the rank-one ideal filter.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::linalg::{
    check_len, check_shape, ensure_finite, frob, pseudo_inverse, sym_eigenvalues,
    symmetrize_checked,
};
use crate::linmodel::EstimatorMatrix;

/// `Psi = (X^T P X + H)^+ X^T P`.
pub fn build_tikhonov(x: &DMatrix<f64>, p: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, pdim) = x.shape();
    check_shape(p, n, n, "P")?;
    check_shape(h, pdim, pdim, "H")?;
    ensure_finite(x, "X")?;
    let p = symmetrize_checked(p, "P")?;
    let h = symmetrize_checked(h, "H")?;
    let xtp = x.transpose() * &p;
    let normal = &xtp * x + h;
    Ok(pseudo_inverse(&normal)? * xtp)
}

/// Shared projection formula
/// `Psi = C [I - F^T (F C F^T)^+ F C] X^T P` with `C = (X^T P X + F^T F + H)^+`.
fn constrained_filter(
    x: &DMatrix<f64>,
    p: &DMatrix<f64>,
    constraint: &DMatrix<f64>,
    h: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let (n, pdim) = x.shape();
    check_shape(p, n, n, "P")?;
    if constraint.ncols() != pdim {
        return Err(invalid(format!(
            "constraint matrix has {} columns, expected {pdim}",
            constraint.ncols()
        )));
    }
    ensure_finite(x, "X")?;
    ensure_finite(constraint, "constraint matrix")?;
    let p = symmetrize_checked(p, "P")?;
    let xtp = x.transpose() * &p;
    let ftf = constraint.transpose() * constraint;
    let mut normal = &xtp * x + &ftf;
    if let Some(h) = h {
        normal += h;
    }
    let c = pseudo_inverse(&normal)?;
    let fc = constraint * &c;
    let inner = pseudo_inverse(&(&fc * constraint.transpose()))?;
    let proj = DMatrix::identity(pdim, pdim) - constraint.transpose() * inner * fc;
    Ok(c * proj * xtp)
}

/// Least squares under the linear constraint `phi_bar * beta = 0`.
pub fn build_basis_constrained(
    x: &DMatrix<f64>,
    p: &DMatrix<f64>,
    phi_bar: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    constrained_filter(x, p, phi_bar, None)
}

/// Constrained least squares with an additional quadratic regularizer `H`
/// (positive semi-definite).
pub fn build_basis_regularized(
    x: &DMatrix<f64>,
    p: &DMatrix<f64>,
    phi_bar: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let pdim = x.ncols();
    check_shape(h, pdim, pdim, "H")?;
    let h = symmetrize_checked(h, "H")?;
    check_psd(&h, "H")?;
    constrained_filter(x, p, phi_bar, Some(&h))
}

/// Regularizer acting on basis coefficients: `H = Phi^T F Phi`.
pub fn coefficient_regularizer(phi: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shape(f, phi.nrows(), phi.nrows(), "coefficient filter F")?;
    Ok(phi.transpose() * f * phi)
}

/// Large-`mu` penalty approximation of the constrained filter,
/// `(X^T P X + H + mu Phi_bar^T Phi_bar)^+ X^T P`.
pub fn build_penalty_approximation(
    x: &DMatrix<f64>,
    p: &DMatrix<f64>,
    phi_bar: &DMatrix<f64>,
    h: &DMatrix<f64>,
    mu: f64,
) -> Result<DMatrix<f64>> {
    if mu.is_nan() || mu <= 0.0 {
        return Err(invalid("mu must be positive"));
    }
    let penalty = h + phi_bar.transpose() * phi_bar * mu;
    build_tikhonov(x, p, &penalty)
}

pub(crate) fn check_psd(h: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = frob(h);
    let min = sym_eigenvalues(h).iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * scale {
        return Err(invalid(format!(
            "{what} is not positive semi-definite (smallest eigenvalue {min:e})"
        )));
    }
    Ok(())
}

/// Variable selection: coordinates with `nu_k = 1` are forced to zero.
pub fn build_variable_selection(
    x: &DMatrix<f64>,
    p: &DMatrix<f64>,
    nu: &[u8],
) -> Result<DMatrix<f64>> {
    let pdim = x.ncols();
    if nu.len() != pdim {
        return Err(invalid(format!(
            "selection mask has length {}, expected {pdim}",
            nu.len()
        )));
    }
    if let Some(bad) = nu.iter().find(|&&v| v > 1) {
        return Err(invalid(format!("selection mask entries must be 0 or 1, got {bad}")));
    }
    let n_mat = DMatrix::from_diagonal(&DVector::from_iterator(
        pdim,
        nu.iter().map(|&v| v as f64),
    ));
    constrained_filter(x, p, &n_mat, None)
}

/// Row normalization of the Gaussian smoothing kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `a_i = (1/p) sum_j exp(...)`; rows sum to `p`.
    AsWritten,
    /// `a_i = sum_j exp(...)`; rows sum to one.
    #[default]
    RowStochastic,
}

impl std::str::FromStr for Normalization {
    type Err = crate::error::LinselError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row_stochastic" | "row-stochastic" => Ok(Normalization::RowStochastic),
            "as_written" | "as-written" => Ok(Normalization::AsWritten),
            other => Err(invalid(format!("unknown normalization `{other}`"))),
        }
    }
}

/// Unnormalized Gaussian kernel `exp(-(i-j)^2 / (2 sigma^2))`, symmetric.
pub fn gaussian_kernel_raw(p: usize, sigma: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| {
        let d = i as f64 - j as f64;
        (-d * d / (2.0 * sigma * sigma)).exp()
    })
}

pub fn gaussian_filter(p: usize, sigma: f64, normalization: Normalization) -> DMatrix<f64> {
    let mut g = gaussian_kernel_raw(p, sigma);
    for mut row in g.row_iter_mut() {
        let sum: f64 = row.iter().sum();
        let a = match normalization {
            Normalization::RowStochastic => sum,
            Normalization::AsWritten => sum / p as f64,
        };
        row /= a;
    }
    g
}

/// `M` Gaussian filters with bandwidths `sigma_m = m * 10 / M`, `m = 1..=M`.
pub fn build_gaussian_bank(
    p: usize,
    models: usize,
    normalization: Normalization,
) -> Result<Vec<EstimatorMatrix>> {
    if models == 0 {
        return Err(invalid("bank needs at least one filter"));
    }
    if p == 0 {
        return Err(invalid("signal length must be positive"));
    }
    let step = 10.0 / models as f64;
    Ok((1..=models)
        .into_par_iter()
        .map(|m| {
            let sigma = m as f64 * step;
            EstimatorMatrix::new(
                format!("g{m:04}"),
                gaussian_filter(p, sigma, normalization),
                format!("gaussian sigma={sigma}"),
            )
        })
        .collect())
}

/// Bandwidth encoded in a Gaussian-bank label, if any.
pub fn bank_bandwidth(label: &str) -> Option<f64> {
    label.strip_prefix("gaussian sigma=")?.parse().ok()
}

/// Forward difference, shape `(p-1) x p`: `-1` on the diagonal, `+1` above it.
pub fn first_difference(p: usize) -> DMatrix<f64> {
    let rows = p.saturating_sub(1);
    DMatrix::from_fn(rows, p, |i, j| {
        if i == j {
            -1.0
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    })
}

/// Difference operator of the given order, shape `(p-order) x p`, built by
/// composing first differences on compatible shapes.
pub fn difference_operator(p: usize, order: usize) -> DMatrix<f64> {
    let mut d = DMatrix::identity(p, p);
    for k in 0..order {
        d = first_difference(p - k) * d;
    }
    d
}

pub type RegularizerWeights = (f64, f64, f64);

/// The 1000-member grid `a, b, c in {2^i - 1 : i = 0..9}`, ordered with `c`
/// varying fastest.
pub fn default_difference_grid() -> Vec<RegularizerWeights> {
    let w = |i: u32| 2f64.powi(i as i32) - 1.0;
    let mut grid = Vec::with_capacity(1000);
    for i in 0..10 {
        for j in 0..10 {
            for k in 0..10 {
                grid.push((w(i), w(j), w(k)));
            }
        }
    }
    grid
}

/// `Psi_m = (X^T X + a D1^T D1 + b D2^T D2 + c D3^T D3)^{-1} X^T` for each
/// weight triple. `X` must be square.
pub fn build_diff_regularizer_family(
    x: &DMatrix<f64>,
    grid: &[RegularizerWeights],
) -> Result<Vec<EstimatorMatrix>> {
    if !x.is_square() {
        return Err(invalid(format!(
            "difference-regularized family needs a square design, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if grid.is_empty() {
        return Err(invalid("regularization grid is empty"));
    }
    ensure_finite(x, "X")?;
    let p = x.ncols();
    if p < 4 {
        return Err(invalid("difference operators need p >= 4"));
    }
    if let Some(bad) = grid.iter().find(|(a, b, c)| !(*a >= 0.0 && *b >= 0.0 && *c >= 0.0)) {
        return Err(invalid(format!("regularization weights must be nonnegative: {bad:?}")));
    }
    let grams: Vec<DMatrix<f64>> = (1..=3)
        .map(|o| {
            let d = difference_operator(p, o);
            d.transpose() * d
        })
        .collect();
    let xt = x.transpose();
    let xtx = &xt * x;
    grid.par_iter()
        .enumerate()
        .map(|(m, &(a, b, c))| {
            let normal = &xtx + &grams[0] * a + &grams[1] * b + &grams[2] * c;
            let psi = match normal.clone().cholesky() {
                Some(ch) => ch.solve(&xt),
                None => pseudo_inverse(&normal)? * &xt,
            };
            Ok(EstimatorMatrix::new(
                format!("d{m:04}"),
                psi,
                format!("a={a} b={b} c={c}"),
            ))
        })
        .collect()
}

/// Ideal linear filter for a hypothesized `beta`:
/// `Psi = beta (X beta)^T ((X beta)(X beta)^T + R R^T)^+`.
pub fn build_ideal(
    beta: &DVector<f64>,
    x: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (w, m_pinv) = ideal_parts(beta, x, r)?;
    Ok(beta * (w.transpose() * m_pinv))
}

fn ideal_parts(
    beta: &DVector<f64>,
    x: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    check_len(beta, x.ncols(), "beta")?;
    check_shape(r, n, n, "R")?;
    let w = x * beta;
    let m = &w * w.transpose() + r * r.transpose();
    Ok((w, pseudo_inverse(&m)?))
}

/// Closed-form quadratic risk of the ideal filter:
/// `||beta||^2 (a^2 - 2a + ||R^T M^+ w||^2 + 1)`, `w = X beta`, `a = w^T M^+ w`.
pub fn ideal_risk(beta: &DVector<f64>, x: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
    let (w, m_pinv) = ideal_parts(beta, x, r)?;
    let mw = &m_pinv * &w;
    let a = w.dot(&mw);
    let noise = (r.transpose() * &mw).norm_squared();
    Ok(beta.norm_squared() * (a * a - 2.0 * a + noise + 1.0))
}
