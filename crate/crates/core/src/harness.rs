//! End-to-end simulation studies: Gaussian smoothing of a test signal and an
//! ill-conditioned deconvolution-style inverse problem.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{LinselError, Result};
use crate::families::{
    build_diff_regularizer_family, build_gaussian_bank, default_difference_grid, Normalization,
    RegularizerWeights,
};
use crate::identify::{reconstructor_full_rank, Reconstructor};
use crate::linalg::{frob2, pseudo_inverse, singular_values};
use crate::linmodel::{EstimatorMatrix, LinearModel, RiskMode};
use crate::penalty::{calibrate, PenaltyConfig, PenaltyTable};
use crate::rng;
use crate::select::{risk_report, trial_observation, RiskReport, Selector};

/// `beta(t) = (e^{-t} (t/10)^2 / 2 + (t/10) log(t/10 + 1) + 25 sin(t/5) e^{t/50}) / 50`
/// for `t = 1..=p`.
pub fn test_signal(p: usize) -> DVector<f64> {
    DVector::from_iterator(
        p,
        (1..=p).map(|t| {
            let t = t as f64;
            let s = t / 10.0;
            ((-t).exp() * s * s / 2.0 + s * (s + 1.0).ln() + 25.0 * (t / 5.0).sin() * (t / 50.0).exp())
                / 50.0
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Smoothing,
    Inverse,
}

impl std::str::FromStr for Experiment {
    type Err = LinselError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoothing" => Ok(Experiment::Smoothing),
            "inverse" => Ok(Experiment::Inverse),
            other => Err(crate::error::invalid(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub p: usize,
    /// Size of the Gaussian bank (smoothing only).
    pub models: usize,
    /// Regularization weights (inverse only); `None` means the default grid.
    pub grid: Option<Vec<RegularizerWeights>>,
    pub trials: usize,
    pub seed: u64,
    pub noise_scale: f64,
    pub normalization: Normalization,
    pub penalty: PenaltyConfig,
    pub min_condition: f64,
    pub max_draws: usize,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            p: 100,
            models: 100,
            grid: None,
            trials: 50,
            seed: 7,
            noise_scale: 1.0,
            normalization: Normalization::RowStochastic,
            penalty: PenaltyConfig::default(),
            min_condition: 500.0,
            max_draws: 100,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LinselError::Configuration(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.p < 4 {
            return bad("p must be at least 4");
        }
        if self.experiment == Experiment::Smoothing && self.models == 0 {
            return bad("the Gaussian bank needs at least one model");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("noise scale must be a nonnegative number");
        }
        if self.max_draws == 0 {
            return bad("max draws must be at least 1");
        }
        if matches!(&self.grid, Some(g) if g.is_empty()) {
            return bad("regularization grid is empty");
        }
        self.penalty.validate()
    }
}

/// Condition data of the accepted random design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignDraw {
    pub draws: usize,
    pub s_max: f64,
    pub s_min: f64,
    pub condition: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: RiskReport,
    pub table: PenaltyTable,
    pub labels: Vec<String>,
    pub beta: DVector<f64>,
    /// `oracle risk / ||beta||^2`.
    pub oracle_relative_error: f64,
    /// `||X^{-1} R||^2 / ||beta||^2`, inverse study only.
    pub direct_inversion_error: Option<f64>,
    pub design: Option<DesignDraw>,
}

impl ExperimentOutcome {
    pub fn summary(&self) -> String {
        let r = &self.report;
        let mut s = format!(
            "rho = {:.4} oracle = {} oracle_relative_error = {:.6} penalized_relative_error = {:.6} delta = {}",
            r.rho, r.oracle, self.oracle_relative_error, r.relative_error, self.table.delta
        );
        if let Some(d) = self.direct_inversion_error {
            s.push_str(&format!(" direct_inversion_error = {d:.4}"));
        }
        if let Some(w) = &self.table.warning {
            s.push_str(&format!(" warning: {w}"));
        }
        s
    }
}

/// Draws i.i.d. Gaussian `p x p` designs until the condition number reaches
/// `min_condition`.
pub fn draw_design(p: usize, seed: u64, min_condition: f64, max_draws: usize) -> Result<(DMatrix<f64>, DesignDraw)> {
    for d in 0..max_draws {
        let mut g = rng::stream(seed, u64::MAX - d as u64);
        let x = rng::normal_matrix(&mut g, p, p);
        let sv = singular_values(&x);
        let (s_max, s_min) = (sv[0], *sv.last().expect("non-empty"));
        let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
        if condition >= min_condition {
            return Ok((
                x,
                DesignDraw {
                    draws: d + 1,
                    s_max,
                    s_min,
                    condition,
                },
            ));
        }
    }
    Err(LinselError::Configuration(format!(
        "no design with condition number >= {min_condition} in {max_draws} draws"
    )))
}

fn run_family(
    config: &ExperimentConfig,
    model: &LinearModel,
    family: &[EstimatorMatrix],
    beta: &DVector<f64>,
) -> Result<(RiskReport, PenaltyTable, Option<Reconstructor>)> {
    let k = match config.penalty.mode {
        RiskMode::Quadratic => Some(reconstructor_full_rank(model.x())?),
        RiskMode::Predictive => None,
    };
    let table = calibrate(model, family, k.as_ref(), &config.penalty)?;
    let report = risk_report(model, family, k.as_ref(), &table, beta, config.trials, config.seed)?;
    Ok((report, table, k))
}

/// Gaussian-bank smoothing with `X = I`, `R = noise_scale * I`.
pub fn run_smoothing(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let p = config.p;
    let model = LinearModel::denoising(p, config.noise_scale)?;
    let beta = test_signal(p);
    let family = build_gaussian_bank(p, config.models, config.normalization)?;
    let (report, table, k) = run_family(config, &model, &family, &beta)?;
    finish(config, &model, &family, k.as_ref(), &beta, report, table, None, None)
}

/// Difference-regularized inversion of a random ill-conditioned square design
/// with `R = noise_scale * I`.
pub fn run_inverse(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let p = config.p;
    let (x, design) = draw_design(p, config.seed, config.min_condition, config.max_draws)?;
    let model = LinearModel::new(x, DMatrix::identity(p, p) * config.noise_scale)?;
    let beta = test_signal(p);
    let grid = config.grid.clone().unwrap_or_else(default_difference_grid);
    let family = build_diff_regularizer_family(model.x(), &grid)?;
    let (report, table, k) = run_family(config, &model, &family, &beta)?;
    let direct = frob2(&(pseudo_inverse(model.x())? * model.r())) / beta.norm_squared();
    finish(config, &model, &family, k.as_ref(), &beta, report, table, Some(direct), Some(design))
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    match config.experiment {
        Experiment::Smoothing => run_smoothing(config),
        Experiment::Inverse => run_inverse(config),
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    config: &ExperimentConfig,
    model: &LinearModel,
    family: &[EstimatorMatrix],
    k: Option<&Reconstructor>,
    beta: &DVector<f64>,
    report: RiskReport,
    table: PenaltyTable,
    direct: Option<f64>,
    design: Option<DesignDraw>,
) -> Result<ExperimentOutcome> {
    if let Some(dir) = &config.output_dir {
        write_artifacts(dir, config, model, family, k, beta, &report, &table)?;
    }
    Ok(ExperimentOutcome {
        oracle_relative_error: report.oracle_risk / beta.norm_squared(),
        labels: family.iter().map(|e| e.label.clone()).collect(),
        beta: beta.clone(),
        report,
        table,
        direct_inversion_error: direct,
        design,
    })
}

fn create(dir: &Path, name: &str) -> Result<fs::File> {
    let path = dir.join(name);
    fs::File::create(&path).map_err(|e| LinselError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

#[allow(clippy::too_many_arguments)]
fn write_artifacts(
    dir: &Path,
    config: &ExperimentConfig,
    model: &LinearModel,
    family: &[EstimatorMatrix],
    k: Option<&Reconstructor>,
    beta: &DVector<f64>,
    report: &RiskReport,
    table: &PenaltyTable,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LinselError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    report.write_csv(create(dir, "risk_report.csv")?)?;
    report.write_trace(create(dir, "trace.csv")?)?;
    table.write_csv(create(dir, "penalty_table.csv")?)?;

    // Columns of the figure: the first trial's data and both estimates.
    let y = trial_observation(model, beta, config.seed, 0)?;
    let selected = Selector::new(model, family, k, table)?.select(&y)?;
    let oracle_est = family[report.oracle_index].apply(&y);
    let mut w = csv::Writer::from_writer(create(dir, "signal.csv")?);
    w.write_record(["t", "beta", "y", "oracle_estimate", "penalized_estimate"])?;
    for i in 0..beta.len() {
        let yi = if model.n() == beta.len() { y[i].to_string() } else { String::new() };
        w.write_record([
            (i + 1).to_string(),
            beta[i].to_string(),
            yi,
            oracle_est[i].to_string(),
            selected.estimate[i].to_string(),
        ])?;
    }
    w.flush().map_err(|e| LinselError::Io {
        path: dir.join("signal.csv").display().to_string(),
        source: e,
    })?;
    Ok(())
}
