#![allow(dead_code)]

use linsel::rng;
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

pub fn gen(seed: u64) -> ChaCha8Rng {
    rng::stream(seed, 0)
}

pub fn gaussian(g: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    rng::normal_matrix(g, rows, cols)
}

pub fn gvec(g: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    rng::normal_vector(g, n)
}

/// Random `rows x cols` matrix of the given rank.
pub fn rank_deficient(g: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> DMatrix<f64> {
    gaussian(g, rows, rank) * gaussian(g, rank, cols)
}

/// Monte-Carlo mean and standard error.
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Solves `min mu^T Pi mu` subject to `E mu = e` through the KKT system.
pub fn kkt_solve(pi: &DMatrix<f64>, e: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let p = pi.nrows();
    let k = e.nrows();
    let mut kkt = DMatrix::zeros(p + k, p + k);
    kkt.view_mut((0, 0), (p, p)).copy_from(&(pi * 2.0));
    kkt.view_mut((0, p), (p, k)).copy_from(&e.transpose());
    kkt.view_mut((p, 0), (k, p)).copy_from(e);
    let mut b = DVector::zeros(p + k);
    b.rows_mut(p, k).copy_from(rhs);
    let sol = kkt.lu().solve(&b).expect("KKT system is nonsingular");
    sol.rows(0, p).into_owned()
}

pub fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    linsel::linalg::vstack(a, b)
}

/// Moore-Penrose residuals: max of the four identities, relative to scale.
pub fn penrose_residual(a: &DMatrix<f64>, pinv: &DMatrix<f64>) -> f64 {
    let scale_a = a.norm().max(1.0);
    let scale_p = pinv.norm().max(1.0);
    let aa = a * pinv;
    let pa = pinv * a;
    [
        (&aa * a - a).norm() / scale_a,
        (&pa * pinv - pinv).norm() / scale_p,
        (&aa - aa.transpose()).norm(),
        (&pa - pa.transpose()).norm(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Orthonormal null-space basis of `e` from the eigenvectors of `E^T E`.
pub fn eig_null_space(e: &DMatrix<f64>) -> DMatrix<f64> {
    let p = e.ncols();
    let eig = (e.transpose() * e).symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<usize> = (0..p).filter(|&i| eig.eigenvalues[i] <= 1e-10 * top.max(1e-300)).collect();
    eig.eigenvectors.select_columns(&cols)
}

/// `argmin mu^T Pi mu` subject to `E mu = E beta`, by the null-space method.
pub fn qp_null_space(pi: &DMatrix<f64>, e: &DMatrix<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let z = eig_null_space(e);
    if z.ncols() == 0 {
        return beta.clone();
    }
    let zt_pi = z.transpose() * pi;
    let w = (&zt_pi * &z).lu().solve(&(zt_pi * beta)).expect("Pi is definite on the null space");
    beta - z * w
}

/// Orthonormal `n x n` matrix from the QR factor of a Gaussian draw.
pub fn orthonormal(g: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    gaussian(g, n, n).qr().q()
}
