//! The correlated Gaussian linear model `y = X beta + R z`, linear estimators
//! `beta_hat = Psi y`, and their exact quadratic and predictive risks.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::linalg::{check_len, check_shape, ensure_finite, frob2};

pub use crate::linalg::pseudo_inverse;

/// Design `X` (n x p) and noise-shaping matrix `R` (n x n).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    x: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(x: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || x.ncols() == 0 {
            return Err(invalid("design matrix must have at least one row and column"));
        }
        check_shape(&r, n, n, "noise matrix R")?;
        ensure_finite(&x, "design matrix X")?;
        ensure_finite(&r, "noise matrix R")?;
        Ok(Self { x, r })
    }

    /// `X = I_p`, `R = scale * I_p`: plain denoising.
    pub fn denoising(p: usize, noise_scale: f64) -> Result<Self> {
        Self::new(
            DMatrix::identity(p, p),
            DMatrix::identity(p, p) * noise_scale,
        )
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// `X beta + R z`.
    pub fn observe(&self, beta: &DVector<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(beta, self.p(), "beta")?;
        check_len(z, self.n(), "noise vector z")?;
        Ok(&self.x * beta + &self.r * z)
    }
}

/// Opaque model identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelId(pub String);

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ModelId {
    fn from(s: &str) -> Self {
        ModelId(s.to_string())
    }
}

impl From<String> for ModelId {
    fn from(s: String) -> Self {
        ModelId(s)
    }
}

/// One linear estimator `beta_hat = psi * y`, with `psi` of shape p x n.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorMatrix {
    pub id: ModelId,
    pub psi: DMatrix<f64>,
    pub label: String,
}

impl EstimatorMatrix {
    pub fn new(id: impl Into<ModelId>, psi: DMatrix<f64>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            psi,
            label: label.into(),
        }
    }

    pub fn check_against(&self, model: &LinearModel) -> Result<()> {
        check_shape(
            &self.psi,
            model.p(),
            model.n(),
            &format!("estimator `{}`", self.id),
        )
    }

    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.psi * y
    }
}

/// Which figure of merit the selection targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RiskMode {
    /// `E||beta_hat - beta||^2`, the inverse-problem setting.
    #[default]
    Quadratic,
    /// `E||X beta_hat - X beta||^2`, the regression setting.
    Predictive,
}

impl fmt::Display for RiskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskMode::Quadratic => f.write_str("quadratic"),
            RiskMode::Predictive => f.write_str("predictive"),
        }
    }
}

impl std::str::FromStr for RiskMode {
    type Err = crate::error::LinselError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(RiskMode::Quadratic),
            "predictive" => Ok(RiskMode::Predictive),
            other => Err(invalid(format!("unknown mode `{other}`"))),
        }
    }
}

/// Exact quadratic risk
/// `||beta||^2 + beta^T X^T Psi^T Psi X beta - 2 beta^T Psi X beta + ||Psi R||^2`.
pub fn quadratic_risk(
    model: &LinearModel,
    psi: &EstimatorMatrix,
    beta: &DVector<f64>,
) -> Result<f64> {
    psi.check_against(model)?;
    check_len(beta, model.p(), "beta")?;
    let xb = model.x() * beta;
    let psi_xb = &psi.psi * &xb;
    Ok(beta.norm_squared() + psi_xb.norm_squared() - 2.0 * beta.dot(&psi_xb)
        + frob2(&(&psi.psi * model.r())))
}

/// Exact predictive risk
/// `||X beta||^2 + (X beta)^T (Psi^T X^T X Psi - 2 X Psi)(X beta) + ||X Psi R||^2`.
pub fn predictive_risk(
    model: &LinearModel,
    psi: &EstimatorMatrix,
    beta: &DVector<f64>,
) -> Result<f64> {
    psi.check_against(model)?;
    check_len(beta, model.p(), "beta")?;
    let xb = model.x() * beta;
    let x_psi = model.x() * &psi.psi;
    let u = &x_psi * &xb;
    Ok(xb.norm_squared() + u.norm_squared() - 2.0 * xb.dot(&u) + frob2(&(&x_psi * model.r())))
}

pub fn risk(
    model: &LinearModel,
    psi: &EstimatorMatrix,
    beta: &DVector<f64>,
    mode: RiskMode,
) -> Result<f64> {
    match mode {
        RiskMode::Quadratic => quadratic_risk(model, psi, beta),
        RiskMode::Predictive => predictive_risk(model, psi, beta),
    }
}

/// Index of the smallest value; ties go to the first index.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if *v < values[b] => best = Some(i),
            _ => {}
        }
    }
    best
}

/// Outcome of the exact (unrealizable) oracle.
#[derive(Debug, Clone)]
pub struct OracleChoice {
    pub index: usize,
    pub id: ModelId,
    pub risks: Vec<f64>,
}

impl OracleChoice {
    pub fn risk(&self) -> f64 {
        self.risks[self.index]
    }
}

/// Exact-risk minimizer over the family.
pub fn oracle_select(
    model: &LinearModel,
    family: &[EstimatorMatrix],
    beta: &DVector<f64>,
    mode: RiskMode,
) -> Result<OracleChoice> {
    use rayon::prelude::*;

    if family.is_empty() {
        return Err(invalid("estimator family is empty"));
    }
    let risks = family
        .par_iter()
        .map(|psi| risk(model, psi, beta, mode))
        .collect::<Result<Vec<f64>>>()?;
    let index = argmin_first(&risks).expect("non-empty family");
    Ok(OracleChoice {
        index,
        id: family[index].id.clone(),
        risks,
    })
}
