//! The penalized criterion, model selection, and Monte-Carlo risk reports.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{LinselError, Result};
use crate::identify::Reconstructor;
use crate::linalg::check_len;
use crate::linmodel::{argmin_first, risk, EstimatorMatrix, LinearModel, ModelId, RiskMode};
use crate::penalty::PenaltyTable;
use crate::rng;

/// `Crit(m)` for one estimator.
///
/// Quadratic mode: `||Psi y||^2 - 2 (K y) . (Psi y) + pen`.
/// Predictive mode: `||X Psi y||^2 - 2 y . (X Psi y) + pen`; `k` is unused.
pub fn criterion(
    model: &LinearModel,
    y: &DVector<f64>,
    psi: &EstimatorMatrix,
    k: Option<&Reconstructor>,
    pen: f64,
    mode: RiskMode,
) -> Result<f64> {
    check_len(y, model.n(), "y")?;
    psi.check_against(model)?;
    let target = reference_vector(model, y, k, mode)?;
    Ok(criterion_with(model, y, &target, psi, pen, mode))
}

/// `K y` in quadratic mode, `y` itself in predictive mode.
fn reference_vector(
    model: &LinearModel,
    y: &DVector<f64>,
    k: Option<&Reconstructor>,
    mode: RiskMode,
) -> Result<DVector<f64>> {
    match mode {
        RiskMode::Predictive => Ok(y.clone()),
        RiskMode::Quadratic => {
            let k = k.ok_or_else(|| {
                LinselError::Configuration("quadratic mode requires a reconstructor".into())
            })?;
            if k.k.shape() != (model.p(), model.n()) {
                return Err(LinselError::Configuration(
                    "reconstructor shape does not match the model".into(),
                ));
            }
            Ok(&k.k * y)
        }
    }
}

fn criterion_with(
    model: &LinearModel,
    y: &DVector<f64>,
    target: &DVector<f64>,
    psi: &EstimatorMatrix,
    pen: f64,
    mode: RiskMode,
) -> f64 {
    let u = psi.apply(y);
    match mode {
        RiskMode::Quadratic => u.norm_squared() - 2.0 * target.dot(&u) + pen,
        RiskMode::Predictive => {
            let xu = model.x() * u;
            xu.norm_squared() - 2.0 * target.dot(&xu) + pen
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub index: usize,
    pub chosen: ModelId,
    pub criterion: Vec<f64>,
    pub estimate: DVector<f64>,
    pub mode: RiskMode,
}

impl SelectionResult {
    /// Columns `id, pen, criterion, chosen`.
    pub fn write_csv<W: Write>(&self, table: &PenaltyTable, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "pen", "criterion", "chosen"])?;
        for (i, (row, c)) in table.rows.iter().zip(&self.criterion).enumerate() {
            w.write_record([
                row.id.0.clone(),
                row.pen.to_string(),
                c.to_string(),
                u8::from(i == self.index).to_string(),
            ])?;
        }
        w.flush().map_err(|e| LinselError::Io {
            path: "<selection>".into(),
            source: e,
        })?;
        Ok(())
    }
}

fn check_table(family: &[EstimatorMatrix], table: &PenaltyTable) -> Result<()> {
    if family.is_empty() {
        return Err(crate::error::invalid("estimator family is empty"));
    }
    if family.len() != table.len() || family.iter().zip(&table.rows).any(|(e, r)| e.id != r.id) {
        return Err(LinselError::Configuration(
            "penalty table was not built for this family".into(),
        ));
    }
    Ok(())
}

/// Minimizes the criterion over the family; ties go to the first index.
pub fn select(
    y: &DVector<f64>,
    model: &LinearModel,
    family: &[EstimatorMatrix],
    k: Option<&Reconstructor>,
    table: &PenaltyTable,
) -> Result<SelectionResult> {
    check_table(family, table)?;
    check_len(y, model.n(), "y")?;
    for psi in family {
        psi.check_against(model)?;
    }
    let mode = table.config.mode;
    Ok(select_unchecked(y, model, family, &reference_vector(model, y, k, mode)?, table))
}

fn select_unchecked(
    y: &DVector<f64>,
    model: &LinearModel,
    family: &[EstimatorMatrix],
    target: &DVector<f64>,
    table: &PenaltyTable,
) -> SelectionResult {
    let mode = table.config.mode;
    let crit: Vec<f64> = family
        .iter()
        .zip(&table.rows)
        .map(|(psi, row)| criterion_with(model, y, target, psi, row.pen, mode))
        .collect();
    let index = argmin_first(&crit).expect("non-empty family");
    SelectionResult {
        index,
        chosen: family[index].id.clone(),
        estimate: family[index].apply(y),
        criterion: crit,
        mode,
    }
}

/// A family bound to its model, reconstructor and calibrated penalties.
pub struct Selector<'a> {
    pub model: &'a LinearModel,
    pub family: &'a [EstimatorMatrix],
    pub k: Option<&'a Reconstructor>,
    pub table: &'a PenaltyTable,
}

impl<'a> Selector<'a> {
    pub fn new(
        model: &'a LinearModel,
        family: &'a [EstimatorMatrix],
        k: Option<&'a Reconstructor>,
        table: &'a PenaltyTable,
    ) -> Result<Self> {
        check_table(family, table)?;
        for psi in family {
            psi.check_against(model)?;
        }
        reference_vector(model, &DVector::zeros(model.n()), k, table.config.mode)?;
        Ok(Self { model, family, k, table })
    }

    pub fn select(&self, y: &DVector<f64>) -> Result<SelectionResult> {
        check_len(y, self.model.n(), "y")?;
        let target = reference_vector(self.model, y, self.k, self.table.config.mode)?;
        Ok(select_unchecked(y, self.model, self.family, &target, self.table))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub chosen_index: usize,
    pub squared_error: f64,
}

#[derive(Debug, Clone)]
pub struct RiskReport {
    pub mode: RiskMode,
    pub ids: Vec<ModelId>,
    /// Exact risk of every model.
    pub risks: Vec<f64>,
    pub penalties: Vec<f64>,
    /// Criterion averaged over trials, per model.
    pub criterion_mean: Vec<f64>,
    pub oracle_index: usize,
    pub oracle: ModelId,
    pub oracle_risk: f64,
    /// Mean squared error of the penalized estimator over the trials.
    pub penalized_risk: f64,
    /// Standard error of `penalized_risk`.
    pub penalized_se: f64,
    /// `penalized_risk / oracle_risk`.
    pub rho: f64,
    /// Mean exact risk of the selected models divided by the oracle risk;
    /// free of the noise in the realized errors.
    pub rho_selected_exact: f64,
    /// Mean of `squared error / ||target||^2`.
    pub relative_error: f64,
    pub trials: Vec<TrialRecord>,
}

impl RiskReport {
    /// Columns `id, exact_risk, pen, criterion_mean`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "exact_risk", "pen", "criterion_mean"])?;
        for i in 0..self.ids.len() {
            w.write_record([
                self.ids[i].0.clone(),
                self.risks[i].to_string(),
                self.penalties[i].to_string(),
                self.criterion_mean[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| LinselError::Io {
            path: "<risk report>".into(),
            source: e,
        })?;
        Ok(())
    }

    /// Columns `trial, chosen_id, squared_error`.
    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trial", "chosen_id", "squared_error"])?;
        for t in &self.trials {
            w.write_record([
                t.trial.to_string(),
                self.ids[t.chosen_index].0.clone(),
                t.squared_error.to_string(),
            ])?;
        }
        w.flush().map_err(|e| LinselError::Io {
            path: "<trace>".into(),
            source: e,
        })?;
        Ok(())
    }
}

fn ratio_to_oracle(num: f64, oracle_risk: f64) -> f64 {
    if oracle_risk > 0.0 {
        num / oracle_risk
    } else if num == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Observation of trial `trial`: `X beta + R z` with `z` from substream `trial`.
pub fn trial_observation(
    model: &LinearModel,
    beta: &DVector<f64>,
    seed: u64,
    trial: usize,
) -> Result<DVector<f64>> {
    let z = rng::normal_vector(&mut rng::stream(seed, trial as u64), model.n());
    model.observe(beta, &z)
}

/// Runs `trials` seeded draws of the noise, selects a model in each, and
/// compares the realized error against the exact oracle risk.
pub fn risk_report(
    model: &LinearModel,
    family: &[EstimatorMatrix],
    k: Option<&Reconstructor>,
    table: &PenaltyTable,
    beta: &DVector<f64>,
    trials: usize,
    seed: u64,
) -> Result<RiskReport> {
    if trials == 0 {
        return Err(crate::error::invalid("trials must be at least 1"));
    }
    check_len(beta, model.p(), "beta")?;
    let selector = Selector::new(model, family, k, table)?;
    let mode = table.config.mode;
    let risks = family
        .par_iter()
        .map(|psi| risk(model, psi, beta, mode))
        .collect::<Result<Vec<f64>>>()?;
    let oracle_index = argmin_first(&risks).expect("non-empty family");
    let oracle_risk = risks[oracle_index];
    let truth = match mode {
        RiskMode::Quadratic => beta.clone(),
        RiskMode::Predictive => model.x() * beta,
    };
    let scale = truth.norm_squared();

    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let y = trial_observation(model, beta, seed, t)?;
            let sel = selector.select(&y)?;
            let err = match mode {
                RiskMode::Quadratic => (&sel.estimate - &truth).norm_squared(),
                RiskMode::Predictive => (model.x() * &sel.estimate - &truth).norm_squared(),
            };
            Ok((sel.index, err, sel.criterion))
        })
        .collect::<Result<Vec<_>>>()?;

    let m = family.len();
    let mut crit_sum = vec![0.0; m];
    let mut records = Vec::with_capacity(trials);
    let mut err_sum = 0.0;
    let mut rel_sum = 0.0;
    let mut chosen_ratio_sum = 0.0;
    for (t, (idx, err, crit)) in outcomes.into_iter().enumerate() {
        for (acc, c) in crit_sum.iter_mut().zip(crit) {
            *acc += c;
        }
        err_sum += err;
        rel_sum += if scale > 0.0 { err / scale } else { 0.0 };
        // Per-trial ratios keep the all-oracle case exactly 1.
        chosen_ratio_sum += if idx == oracle_index { 1.0 } else { ratio_to_oracle(risks[idx], oracle_risk) };
        records.push(TrialRecord {
            trial: t,
            chosen_index: idx,
            squared_error: err,
        });
    }
    let nt = trials as f64;
    let mean = err_sum / nt;
    let var = if trials > 1 {
        records.iter().map(|r| (r.squared_error - mean).powi(2)).sum::<f64>() / (nt - 1.0)
    } else {
        0.0
    };
    Ok(RiskReport {
        mode,
        ids: family.iter().map(|e| e.id.clone()).collect(),
        penalties: table.penalties(),
        criterion_mean: crit_sum.into_iter().map(|s| s / nt).collect(),
        oracle_index,
        oracle: family[oracle_index].id.clone(),
        oracle_risk,
        penalized_risk: mean,
        penalized_se: (var / nt).sqrt(),
        rho: ratio_to_oracle(mean, oracle_risk),
        rho_selected_exact: chosen_ratio_sum / nt,
        relative_error: rel_sum / nt,
        risks,
        trials: records,
    })
}
