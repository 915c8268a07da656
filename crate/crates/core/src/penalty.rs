//! Per-model spectral quantities, model complexities, kernel model weights
//! and the calibrated penalty `pen(m)`.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{LinselError, Result};
use crate::identify::Reconstructor;
use crate::linalg::{frob, frob2, max_sym_eigenvalue, sym_part};
use crate::linmodel::{EstimatorMatrix, LinearModel, ModelId, RiskMode};

/// How the printed complexity (which carries a weight factor) is combined
/// with the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightReading {
    /// Complexity without the weight; `L = Delta * ell`.
    #[default]
    Linear,
    /// Complexity as printed, weight included; `L = Delta * ell^2`.
    Squared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub theta: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub kernel_mu: f64,
    /// `None` selects the automatic search.
    pub delta: Option<f64>,
    /// `None` means `0.01 * max_m ||Psi_m R||^2`.
    pub target_c: Option<f64>,
    pub mode: RiskMode,
    pub reading: WeightReading,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            theta: 0.75,
            alpha: 1.0,
            epsilon: 1.0,
            kernel_mu: 3.0,
            delta: None,
            target_c: None,
            mode: RiskMode::Quadratic,
            reading: WeightReading::Linear,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(LinselError::Configuration(msg.to_string()));
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad("theta must lie in (0, 1)");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if !(self.kernel_mu > 0.0 && self.kernel_mu.is_finite()) {
            return bad("kernel mu must be positive");
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return bad("delta must be positive");
            }
        }
        if let Some(c) = self.target_c {
            if !(c > 0.0 && c.is_finite()) {
                return bad("target C must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSummary {
    pub s_plus: f64,
    pub r_star: f64,
    pub frob_a: f64,
    pub trace_cross: f64,
    pub var_term: f64,
}

/// Effective estimator and reconstructor products `(W R, K R)` for a mode:
/// `(Psi R, K R)` in quadratic mode and `(X Psi R, R)` in predictive mode.
fn effective_products(
    model: &LinearModel,
    psi: &EstimatorMatrix,
    mode: RiskMode,
) -> Result<DMatrix<f64>> {
    psi.check_against(model)?;
    Ok(match mode {
        RiskMode::Quadratic => &psi.psi * model.r(),
        RiskMode::Predictive => model.x() * (&psi.psi * model.r()),
    })
}

fn reconstructor_product(
    model: &LinearModel,
    k: Option<&Reconstructor>,
    mode: RiskMode,
) -> Result<DMatrix<f64>> {
    match mode {
        RiskMode::Predictive => Ok(model.r().clone()),
        RiskMode::Quadratic => {
            let k = k.ok_or_else(|| {
                LinselError::Configuration("quadratic mode requires a reconstructor".into())
            })?;
            if k.k.shape() != (model.p(), model.n()) {
                return Err(LinselError::Configuration(format!(
                    "reconstructor has shape {}x{}, expected {}x{}",
                    k.k.nrows(),
                    k.k.ncols(),
                    model.p(),
                    model.n()
                )));
            }
            Ok(&k.k * model.r())
        }
    }
}

/// `A = -theta (WR)^T (WR) + (KR)^T (WR) + (WR)^T (KR)` as assembled (not yet
/// symmetrized) and the factor `C = theta WR - KR` with `B = C C^T`.
fn assemble(wr: &DMatrix<f64>, kr: &DMatrix<f64>, theta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let wrt = wr.transpose();
    let cross = kr.transpose() * wr;
    let a = &wrt * wr * (-theta) + &cross + wrt * kr;
    let c = wr * theta - kr;
    (a, c)
}

/// The matrices `(A_m, B_m)` of the oracle inequality; `A_m` is symmetrized.
pub fn per_model_matrices(
    model: &LinearModel,
    psi: &EstimatorMatrix,
    k: Option<&Reconstructor>,
    config: &PenaltyConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let kr = reconstructor_product(model, k, config.mode)?;
    let wr = effective_products(model, psi, config.mode)?;
    let (a, c) = assemble(&wr, &kr, config.theta);
    Ok((sym_part(&a), &c * c.transpose()))
}

/// Relative asymmetry `||A - A^T|| / ||A||` of `A_m` before symmetrization.
pub fn assembly_asymmetry(
    model: &LinearModel,
    psi: &EstimatorMatrix,
    k: Option<&Reconstructor>,
    config: &PenaltyConfig,
) -> Result<f64> {
    let kr = reconstructor_product(model, k, config.mode)?;
    let wr = effective_products(model, psi, config.mode)?;
    let (a, _) = assemble(&wr, &kr, config.theta);
    let scale = frob(&a);
    Ok(if scale == 0.0 { 0.0 } else { frob(&(&a - a.transpose())) / scale })
}

fn summary_from_products(wr: &DMatrix<f64>, kr: &DMatrix<f64>, theta: f64) -> SpectralSummary {
    let (a, c) = assemble(wr, kr, theta);
    let a = sym_part(&a);
    // Largest eigenvalue of C C^T equals that of C^T C.
    let gram = c.transpose() * &c;
    let r_star = if gram.nrows() == 0 { 0.0 } else { max_sym_eigenvalue(&sym_part(&gram)).max(0.0) };
    SpectralSummary {
        s_plus: max_sym_eigenvalue(&a).max(0.0),
        r_star,
        frob_a: frob(&a),
        trace_cross: kr.iter().zip(wr.iter()).map(|(k, w)| k * w).sum(),
        var_term: frob2(wr),
    }
}

pub fn spectral_summary(
    model: &LinearModel,
    psi: &EstimatorMatrix,
    k: Option<&Reconstructor>,
    config: &PenaltyConfig,
) -> Result<SpectralSummary> {
    let kr = reconstructor_product(model, k, config.mode)?;
    let wr = effective_products(model, psi, config.mode)?;
    Ok(summary_from_products(&wr, &kr, config.theta))
}

fn lead_constant(s: &SpectralSummary, theta: f64) -> f64 {
    2.0 * s.r_star / theta + s.s_plus
}

/// Complexity `V^3 / ((2 r*/theta + s+) V^2 + 4 alpha^2 ||A||^2 (V + h))`
/// with `V = ||Psi R||^2`, without any weight factor. Zero when `V = 0`.
pub fn model_complexity(s: &SpectralSummary, h: f64, config: &PenaltyConfig) -> f64 {
    let v = s.var_term;
    if v <= 0.0 {
        return 0.0;
    }
    let c = lead_constant(s, config.theta);
    let denom = c * v * v + 4.0 * config.alpha * config.alpha * s.frob_a * s.frob_a * (v + h);
    if denom <= 0.0 {
        return 0.0;
    }
    v * v * v / denom
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    pub ell: Vec<f64>,
    pub sigma: f64,
    pub tau: f64,
}

/// `log sum_{m'} exp(-(D_{m'} - D_m)^2 / (2 sigma^2)) / D_m` per model, with
/// the bandwidth `sigma = tau / (mu p)` and the scale `tau`.
fn kernel_log_terms(deltas: &[f64], kernel_mu: f64, p: usize) -> (Vec<f64>, f64, f64) {
    let count = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / count;
    // sum_{m,m'} (D_m - D_m')^2 = 2 M sum (D_m - mean)^2
    let centered: f64 = deltas.iter().map(|d| (d - mean) * (d - mean)).sum();
    let tau = (2.0 * centered).sqrt();
    let sigma = (tau / (kernel_mu * p as f64)).max(1e-12 * (1.0 + mean));
    let two_s2 = 2.0 * sigma * sigma;
    let terms = deltas
        .par_iter()
        .map(|&dm| {
            let s: f64 = deltas
                .iter()
                .map(|&d| (-(d - dm) * (d - dm) / two_s2).exp())
                .sum();
            s.ln() / dm
        })
        .collect();
    (terms, sigma, tau)
}

pub fn kernel_weights(deltas: &[f64], delta: f64, kernel_mu: f64, p: usize) -> Result<KernelWeights> {
    if deltas.is_empty() {
        return Err(crate::error::invalid("complexity list is empty"));
    }
    if deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(crate::error::invalid("complexities must be positive and finite"));
    }
    let (terms, sigma, tau) = kernel_log_terms(deltas, kernel_mu, p);
    Ok(KernelWeights {
        ell: terms.into_iter().map(|t| delta + t).collect(),
        sigma,
        tau,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyRow {
    pub id: ModelId,
    pub spectral: SpectralSummary,
    /// Complexity with `h = 0`, the input of the kernel weights.
    pub delta0: f64,
    pub delta_m: f64,
    pub ell: f64,
    pub t: f64,
    pub h: f64,
    pub l: f64,
    pub q: f64,
    pub pen: f64,
}

impl PenaltyRow {
    /// `Q_m` rebuilt from the row's components and the global `lambda`.
    pub fn q_from_parts(&self, lambda: f64, theta: f64) -> f64 {
        let s = &self.spectral;
        let c1 = s.r_star / theta + s.s_plus;
        let root_l = self.l.sqrt();
        let root_lh = (self.l + self.h).sqrt();
        let inner = if s.frob_a == 0.0 { c1 } else { s.frob_a / (root_l + root_lh) + c1 };
        let lambda_term = if inner == 0.0 { 0.0 } else { lambda * inner * inner };
        2.0 * s.trace_cross - theta * s.var_term
            + 2.0 * c1 * self.l
            + 2.0 * s.frob_a * root_lh
            + lambda_term
    }
}

#[derive(Debug, Clone)]
pub struct PenaltyTable {
    pub rows: Vec<PenaltyRow>,
    pub lambda: f64,
    pub sigma_sum: f64,
    pub gamma: f64,
    pub tau: f64,
    pub sigma_kernel: f64,
    pub delta: f64,
    pub target_c: f64,
    pub config: PenaltyConfig,
    pub warning: Option<String>,
}

impl PenaltyTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn penalties(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.pen).collect()
    }

    pub fn position(&self, id: &ModelId) -> Option<usize> {
        self.rows.iter().position(|r| &r.id == id)
    }

    /// `(1 + max_m (ell_m + sqrt(ell_m)/alpha + 1 - theta)) / (1 - theta)`.
    pub fn multiplicative_constant(&self) -> f64 {
        let c = &self.config;
        let worst = self
            .rows
            .iter()
            .map(|r| r.ell + r.ell.sqrt() / c.alpha + 1.0 - c.theta)
            .fold(f64::NEG_INFINITY, f64::max);
        (1.0 + worst) / (1.0 - c.theta)
    }

    /// Header block of `# key = value` lines followed by one CSV row per model.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let c = &self.config;
        let header = [
            ("lambda", self.lambda),
            ("Sigma", self.sigma_sum),
            ("Gamma", self.gamma),
            ("delta", self.delta),
            ("sigma", self.sigma_kernel),
            ("tau", self.tau),
            ("theta", c.theta),
            ("alpha", c.alpha),
            ("epsilon", c.epsilon),
            ("target_C", self.target_c),
        ];
        let io = |e| LinselError::Io {
            path: "<penalty table>".into(),
            source: e,
        };
        for (k, v) in header {
            writeln!(out, "# {k} = {v}").map_err(io)?;
        }
        writeln!(out, "# mode = {}", c.mode).map_err(io)?;
        if let Some(w) = &self.warning {
            writeln!(out, "# warning = {w}").map_err(io)?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "id", "s_plus", "r_star", "frob_A", "var_term", "trace_cross", "delta_m", "ell_m",
            "L_m", "t_m", "h_m", "Q_m", "pen_m",
        ])?;
        for r in &self.rows {
            let s = &r.spectral;
            let nums = [
                s.s_plus, s.r_star, s.frob_a, s.var_term, s.trace_cross, r.delta_m, r.ell, r.l,
                r.t, r.h, r.q, r.pen,
            ];
            let mut rec = vec![r.id.0.clone()];
            rec.extend(nums.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }
}

/// Stored `pen(m)` for a model id.
pub fn penalty_value(table: &PenaltyTable, id: &ModelId) -> Result<f64> {
    table
        .position(id)
        .map(|i| table.rows[i].pen)
        .ok_or_else(|| LinselError::UnknownModel(id.0.clone()))
}

/// Everything that does not depend on the weight offset `delta`.
struct Precomputed {
    ids: Vec<ModelId>,
    spectral: Vec<SpectralSummary>,
    delta0: Vec<f64>,
    log_terms: Vec<f64>,
    sigma_kernel: f64,
    tau: f64,
}

fn floor_degenerate(values: &mut [f64]) {
    let mut good: Vec<f64> = values.iter().cloned().filter(|v| *v > 0.0 && v.is_finite()).collect();
    if good.len() == values.len() {
        return;
    }
    let floor = if good.is_empty() {
        1e-12
    } else {
        good.sort_by(f64::total_cmp);
        let mid = good.len() / 2;
        let median = if good.len().is_multiple_of(2) {
            0.5 * (good[mid - 1] + good[mid])
        } else {
            good[mid]
        };
        1e-12 * median
    };
    for v in values.iter_mut() {
        if !(*v > 0.0 && v.is_finite()) {
            *v = floor;
        }
    }
}

fn precompute(
    model: &LinearModel,
    family: &[EstimatorMatrix],
    k: Option<&Reconstructor>,
    config: &PenaltyConfig,
) -> Result<Precomputed> {
    let kr = reconstructor_product(model, k, config.mode)?;
    let spectral = family
        .par_iter()
        .map(|psi| {
            let wr = effective_products(model, psi, config.mode)?;
            Ok(summary_from_products(&wr, &kr, config.theta))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut delta0: Vec<f64> = spectral.iter().map(|s| model_complexity(s, 0.0, config)).collect();
    floor_degenerate(&mut delta0);
    let (log_terms, sigma_kernel, tau) = kernel_log_terms(&delta0, config.kernel_mu, model.p());
    Ok(Precomputed {
        ids: family.iter().map(|e| e.id.clone()).collect(),
        spectral,
        delta0,
        log_terms,
        sigma_kernel,
        tau,
    })
}

fn assemble_table(pre: &Precomputed, delta: f64, target_c: f64, config: &PenaltyConfig) -> PenaltyTable {
    let theta = config.theta;
    let mut rows: Vec<PenaltyRow> = (0..pre.ids.len())
        .map(|i| {
            let s = pre.spectral[i];
            let ell = delta + pre.log_terms[i];
            let t = pre.delta0[i] * ell;
            let c2 = lead_constant(&s, theta);
            let eps = config.epsilon;
            let h = if s.frob_a > 0.0 && s.frob_a / (2.0 * t.sqrt()) >= eps * c2 {
                s.frob_a * s.frob_a / (eps * eps * c2 * c2)
            } else {
                0.0
            };
            let delta_m = model_complexity(&s, h, config);
            PenaltyRow {
                id: pre.ids[i].clone(),
                spectral: s,
                delta0: pre.delta0[i],
                delta_m,
                ell,
                t,
                h,
                l: 0.0,
                q: 0.0,
                pen: 0.0,
            }
        })
        .collect();
    let mut finals: Vec<f64> = rows.iter().map(|r| r.delta_m).collect();
    floor_degenerate(&mut finals);
    for (r, d) in rows.iter_mut().zip(finals) {
        r.delta_m = d;
        r.l = match config.reading {
            WeightReading::Linear => d * r.ell,
            WeightReading::Squared => d * r.ell * r.ell,
        };
    }
    let sigma_sum: f64 = rows.iter().map(|r| (-r.l).exp()).sum();
    let sup = rows
        .iter()
        .map(|r| {
            let s = &r.spectral;
            let a_term = if s.frob_a == 0.0 { 0.0 } else { s.frob_a / (2.0 * r.l.sqrt()) };
            a_term + s.r_star / theta + s.s_plus
        })
        .fold(0.0, f64::max);
    let lambda = if sup > 0.0 {
        std::f64::consts::SQRT_2 * sigma_sum.sqrt() / sup
    } else {
        f64::INFINITY
    };
    let gamma = 2.0 * std::f64::consts::SQRT_2 / (1.0 - theta) * sup * sigma_sum.sqrt();
    for r in rows.iter_mut() {
        r.q = r.q_from_parts(lambda, theta);
        r.pen = r.q;
    }
    PenaltyTable {
        rows,
        lambda,
        sigma_sum,
        gamma,
        tau: pre.tau,
        sigma_kernel: pre.sigma_kernel,
        delta,
        target_c,
        config: config.clone(),
        warning: None,
    }
}

pub const DELTA_MIN: f64 = 1.0 / 64.0;
pub const DELTA_MAX: f64 = 64.0;

/// Calibrates every penalty constant for the family.
///
/// With `config.delta = None`, `delta` is the smallest value on the grid
/// `2^-6 .. 2^6` reaching `Gamma <= target_C`, refined by bisection against
/// the previous grid point. If no grid value reaches the target the table
/// uses `2^6` and carries a warning.
pub fn calibrate(
    model: &LinearModel,
    family: &[EstimatorMatrix],
    k: Option<&Reconstructor>,
    config: &PenaltyConfig,
) -> Result<PenaltyTable> {
    config.validate()?;
    if family.is_empty() {
        return Err(crate::error::invalid("estimator family is empty"));
    }
    let pre = precompute(model, family, k, config)?;
    let max_var = pre.spectral.iter().map(|s| s.var_term).fold(0.0, f64::max);
    let target = config.target_c.unwrap_or(0.01 * max_var);

    if let Some(d) = config.delta {
        return Ok(assemble_table(&pre, d, target, config));
    }
    let grid: Vec<f64> = (-6..=6).map(|e| 2f64.powi(e)).collect();
    let passes = |t: &PenaltyTable| t.gamma <= target;
    let mut prev: Option<f64> = None;
    for &g in &grid {
        let table = assemble_table(&pre, g, target, config);
        if passes(&table) {
            let Some(mut lo) = prev else {
                return Ok(table);
            };
            let mut hi = g;
            let mut best = table;
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                let t = assemble_table(&pre, mid, target, config);
                if passes(&t) {
                    hi = mid;
                    best = t;
                } else {
                    lo = mid;
                }
                if hi - lo <= 1e-9 * hi {
                    break;
                }
            }
            return Ok(best);
        }
        prev = Some(g);
    }
    let mut table = assemble_table(&pre, DELTA_MAX, target, config);
    table.warning = Some(format!(
        "Gamma = {} exceeds target C = {} at the largest delta {}",
        table.gamma, target, DELTA_MAX
    ));
    Ok(table)
}
