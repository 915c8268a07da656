//! Tail thresholds for Gaussian quadratic forms `T = z^T A z + b^T z`, the
//! Laplace-transform-to-tail conversion, and a seeded Monte-Carlo checker.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::linalg::{frob2, sym_eigenvalues, sym_part};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Upper,
    Lower,
}

/// Threshold `center + spread sqrt(x) + slope x` (upper) or
/// `center - spread sqrt(x) - slope x` (lower), exceeded with probability at
/// most `exp(-x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub center: f64,
    pub spread: f64,
    pub slope: f64,
    pub direction: Direction,
}

impl TailBound {
    pub fn threshold(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        let dev = self.spread * x.sqrt() + self.slope * x;
        Ok(match self.direction {
            Direction::Upper => self.center + dev,
            Direction::Lower => self.center - dev,
        })
    }
}

fn check_x(x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid("x must be a positive finite number"));
    }
    Ok(())
}

pub fn quadform_tail(a: &DMatrix<f64>, b: &DVector<f64>, direction: Direction) -> Result<TailBound> {
    let p = a.nrows();
    if !a.is_square() || b.len() != p {
        return Err(invalid("A must be square and b must match its dimension"));
    }
    let sym = sym_part(a);
    let eig = sym_eigenvalues(&sym);
    let extreme = match direction {
        Direction::Upper => eig.iter().cloned().fold(0.0, f64::max),
        Direction::Lower => eig.iter().map(|v| -v).fold(0.0, f64::max),
    };
    let spread = 2.0 * (0.25 * frob2(&(a + a.transpose())) + 0.5 * b.norm_squared()).sqrt();
    Ok(TailBound {
        center: a.trace(),
        spread,
        slope: 2.0 * extreme,
        direction,
    })
}

/// `tr(A) +/- 2 sqrt(||A + A^T||^2 / 4 + ||b||^2 / 2) sqrt(x) +/- 2 s x`, with
/// `s` the largest positive eigenvalue of `+/-(A + A^T)/2` (or zero).
pub fn bound_quadform(a: &DMatrix<f64>, b: &DVector<f64>, x: f64, direction: Direction) -> Result<f64> {
    quadform_tail(a, b, direction)?.threshold(x)
}

pub fn diag_tail(a: &DVector<f64>, b: &DVector<f64>, direction: Direction) -> Result<TailBound> {
    if a.len() != b.len() {
        return Err(invalid("a and b must have the same length"));
    }
    let extreme = match direction {
        Direction::Upper => a.iter().cloned().fold(0.0, f64::max),
        Direction::Lower => a.iter().map(|v| -v).fold(0.0, f64::max),
    };
    let s: f64 = a.iter().zip(b.iter()).map(|(ak, bk)| ak * ak + 0.5 * bk * bk).sum();
    Ok(TailBound {
        center: a.sum(),
        spread: 2.0 * s.sqrt(),
        slope: 2.0 * extreme,
        direction,
    })
}

/// Diagonal case `T = sum a_k z_k^2 + b_k z_k`.
pub fn bound_diag(a: &DVector<f64>, b: &DVector<f64>, x: f64, direction: Direction) -> Result<f64> {
    diag_tail(a, b, direction)?.threshold(x)
}

/// `2 u sqrt(x) + v x`: if `log E exp(y xi) <= (u y)^2 / (1 - v y)` then
/// `P[xi >= 2 u sqrt(x) + v x] <= exp(-x)`.
pub fn laplace_to_tail(u: f64, v: f64, x: f64) -> Result<f64> {
    check_x(x)?;
    if !(u >= 0.0 && v >= 0.0) {
        return Err(invalid("u and v must be nonnegative"));
    }
    Ok(2.0 * u * x.sqrt() + v * x)
}

/// Checks `-log(1 - 2 r y)/2 - r y <= r^2 y^2 / (1 - 2 a y)` on every grid point.
///
/// Valid regimes are `a >= r > 0` and `r <= 0 < a`; grid points must lie in
/// `(0, 1/(2a))`.
pub fn log_inequality_check(r: f64, a: f64, y_grid: &[f64]) -> Result<bool> {
    if !(a > 0.0 && a.is_finite() && r.is_finite()) {
        return Err(invalid("a must be positive and r finite"));
    }
    if r > a {
        return Err(invalid("the inequality is stated for r <= a"));
    }
    let upper = 1.0 / (2.0 * a);
    if let Some(y) = y_grid.iter().find(|&&y| !(y > 0.0 && y < upper)) {
        return Err(invalid(format!("grid point {y} outside (0, {upper})")));
    }
    Ok(y_grid.iter().all(|&y| {
        let ry = r * y;
        let lhs = -0.5 * (-2.0 * ry).ln_1p() - ry;
        let rhs = ry * ry / (1.0 - 2.0 * a * y);
        lhs <= rhs + 8.0 * f64::EPSILON * ry.abs()
    }))
}

/// Monte-Carlo tail frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exceedance {
    pub hits: u64,
    pub samples: u64,
}

impl Exceedance {
    pub fn frequency(&self) -> f64 {
        self.hits as f64 / self.samples as f64
    }

    /// Binomial standard error evaluated at the nominal probability `prob`.
    pub fn standard_error(&self, prob: f64) -> f64 {
        (prob * (1.0 - prob) / self.samples as f64).sqrt()
    }

    /// `frequency <= exp(-x) + 3 standard errors`.
    pub fn within_bound(&self, x: f64) -> bool {
        let p = (-x).exp();
        self.frequency() <= p + 3.0 * self.standard_error(p)
    }
}

const BLOCK: usize = 1 << 14;

/// Draws `samples` standard normal vectors of length `dim` and returns
/// `stat(z)` for each, in sample order. Blocks of samples use their own
/// substreams.
pub fn sample_statistic<F>(dim: usize, samples: usize, seed: u64, stat: F) -> Vec<f64>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    let blocks = samples.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut g = rng::stream(seed, b as u64);
            let len = BLOCK.min(samples - b * BLOCK);
            let stat = &stat;
            (0..len).map(move |_| stat(&rng::normal_vector(&mut g, dim)))
        })
        .collect()
}

/// Samples of `z^T A z + b^T z`.
pub fn sample_quadform(a: &DMatrix<f64>, b: &DVector<f64>, samples: usize, seed: u64) -> Vec<f64> {
    sample_statistic(a.nrows(), samples, seed, |z| z.dot(&(a * z)) + b.dot(z))
}

pub fn count_exceedance(values: &[f64], threshold: f64, direction: Direction) -> Exceedance {
    let hits = values
        .iter()
        .filter(|&&v| match direction {
            Direction::Upper => v >= threshold,
            Direction::Lower => v <= threshold,
        })
        .count();
    Exceedance {
        hits: hits as u64,
        samples: values.len() as u64,
    }
}

/// Empirical check of the quadratic-form bound in both directions at each `x`.
/// Returns `(x, direction, exceedance)` triples.
pub fn verify_quadform(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    xs: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<(f64, Direction, Exceedance)>> {
    let values = sample_quadform(a, b, samples, seed);
    let mut out = Vec::new();
    for dir in [Direction::Upper, Direction::Lower] {
        let tail = quadform_tail(a, b, dir)?;
        for &x in xs {
            out.push((x, dir, count_exceedance(&values, tail.threshold(x)?, dir)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_linear_case() {
        let a = DMatrix::zeros(3, 3);
        let mut b = DVector::zeros(3);
        b[0] = 1.0;
        assert_relative_eq!(bound_quadform(&a, &b, 1.0, Direction::Upper).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn chi_square_coefficients() {
        let t = quadform_tail(&DMatrix::identity(6, 6), &DVector::zeros(6), Direction::Upper).unwrap();
        assert_eq!(t.center, 6.0);
        assert_relative_eq!(t.spread, 2.0 * 6f64.sqrt(), epsilon = 1e-14);
        assert_eq!(t.slope, 2.0);
        let lower = quadform_tail(&DMatrix::identity(6, 6), &DVector::zeros(6), Direction::Lower).unwrap();
        assert_eq!(lower.slope, 0.0);
    }

    #[test]
    fn diagonal_cases() {
        let z = DVector::zeros(4);
        assert_eq!(bound_diag(&z, &z, 2.0, Direction::Upper).unwrap(), 0.0);
        let one = DVector::from_element(1, 1.0);
        assert_eq!(bound_diag(&one, &DVector::zeros(1), 1.0, Direction::Upper).unwrap(), 5.0);
        let a = DVector::from_vec(vec![0.5, -1.5, 2.0]);
        let b = DVector::from_vec(vec![1.0, 0.0, -0.3]);
        for dir in [Direction::Upper, Direction::Lower] {
            assert_relative_eq!(
                bound_diag(&a, &b, 0.7, dir).unwrap(),
                bound_quadform(&DMatrix::from_diagonal(&a), &b, 0.7, dir).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn laplace_cases() {
        assert_eq!(laplace_to_tail(1.0, 0.0, 1.0).unwrap(), 2.0);
        assert_eq!(laplace_to_tail(0.0, 1.0, 3.0).unwrap(), 3.0);
        assert!(laplace_to_tail(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn log_inequality_cases() {
        assert!(log_inequality_check(1.0, 1.0, &[0.1]).unwrap());
        assert!(log_inequality_check(0.0, 1.0, &[0.2, 0.4]).unwrap());
        let grid: Vec<f64> = (1..1000).map(|i| i as f64 * 0.5 / 1000.0).collect();
        assert!(log_inequality_check(-1.0, 1.0, &grid).unwrap());
        assert!(log_inequality_check(1.0, 1.0, &[0.5]).is_err());
        assert!(log_inequality_check(2.0, 1.0, &[0.1]).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::zeros(2);
        let s1 = sample_quadform(&a, &b, 20_000, 3);
        let s2 = sample_quadform(&a, &b, 20_000, 3);
        assert_eq!(s1, s2);
        assert_eq!(s1.len(), 20_000);
        let mean = s1.iter().sum::<f64>() / s1.len() as f64;
        assert!((mean - 2.0).abs() < 0.1);
    }
}
