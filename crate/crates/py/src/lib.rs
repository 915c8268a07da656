//! Python bindings. Matrices cross the boundary as lists of rows, vectors as
//! flat lists.

use linsel::families::{self, Normalization};
use linsel::harness::{self, Experiment, ExperimentConfig};
use linsel::penalty::{PenaltyConfig, WeightReading};
use linsel::select as selection;
use linsel::{identify, linalg, linmodel, penalty, LinselError, ModelId, RiskMode};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows = Vec<Vec<f64>>;

fn err(e: LinselError) -> PyErr {
    match e {
        LinselError::Io { .. } | LinselError::Csv(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Rows) -> PyResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged matrix: rows differ in length"));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

/// Like `matrix`, but an empty list means zero rows of width `cols`.
fn matrix_or_empty(rows: Rows, cols: usize) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() {
        Ok(DMatrix::zeros(0, cols))
    } else {
        matrix(rows)
    }
}

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse<T: std::str::FromStr<Err = LinselError>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

#[pyclass(name = "LinearModel", module = "linsel_py", frozen)]
struct PyLinearModel {
    inner: linsel::LinearModel,
}

#[pymethods]
impl PyLinearModel {
    #[new]
    fn new(x: Rows, r: Rows) -> PyResult<Self> {
        let inner = linsel::LinearModel::new(matrix(x)?, matrix(r)?).map_err(err)?;
        Ok(Self { inner })
    }

    /// `X = I`, `R = noise_scale * I`.
    #[staticmethod]
    fn denoising(p: usize, noise_scale: f64) -> PyResult<Self> {
        Ok(Self { inner: linsel::LinearModel::denoising(p, noise_scale).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn x(&self) -> Rows {
        rows(self.inner.x())
    }

    #[getter]
    fn r(&self) -> Rows {
        rows(self.inner.r())
    }

    fn observe(&self, beta: Vec<f64>, z: Vec<f64>) -> PyResult<Vec<f64>> {
        let y = self.inner.observe(&DVector::from_vec(beta), &DVector::from_vec(z)).map_err(err)?;
        Ok(y.as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("LinearModel(n={}, p={})", self.inner.n(), self.inner.p())
    }
}

#[pyclass(name = "Estimator", module = "linsel_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEstimator {
    inner: linsel::EstimatorMatrix,
}

#[pymethods]
impl PyEstimator {
    #[new]
    #[pyo3(signature = (id, psi, label = String::new()))]
    fn new(id: String, psi: Rows, label: String) -> PyResult<Self> {
        Ok(Self { inner: linsel::EstimatorMatrix::new(id, matrix(psi)?, label) })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.0.clone()
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn psi(&self) -> Rows {
        rows(&self.inner.psi)
    }

    fn apply(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        if y.len() != self.inner.psi.ncols() {
            return Err(PyValueError::new_err(format!(
                "y has length {}, estimator expects {}",
                y.len(),
                self.inner.psi.ncols()
            )));
        }
        Ok(self.inner.apply(&DVector::from_vec(y)).as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Estimator(id={:?}, shape=({}, {}))", self.inner.id.0, self.inner.psi.nrows(), self.inner.psi.ncols())
    }
}

fn members(list: &[PyRef<'_, PyEstimator>]) -> Vec<linsel::EstimatorMatrix> {
    list.iter().map(|e| e.inner.clone()).collect()
}

#[pyclass(name = "Reconstructor", module = "linsel_py", frozen)]
struct PyReconstructor {
    inner: identify::Reconstructor,
}

#[pymethods]
impl PyReconstructor {
    #[getter]
    fn k(&self) -> Rows {
        rows(&self.inner.k)
    }

    #[getter]
    fn construction(&self) -> String {
        self.inner.construction.to_string()
    }

    fn report(&self) -> String {
        self.inner.certificate.report(self.inner.construction)
    }
}

#[pyfunction]
fn reconstructor_full_rank(x: Rows) -> PyResult<PyReconstructor> {
    Ok(PyReconstructor { inner: identify::reconstructor_full_rank(&matrix(x)?).map_err(err)? })
}

#[pyfunction]
fn reconstructor_basis(x: Rows, phi: Rows) -> PyResult<PyReconstructor> {
    let x = matrix(x)?;
    let phi = matrix_or_empty(phi, x.ncols())?;
    Ok(PyReconstructor { inner: identify::reconstructor_basis(&x, &phi).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (x, pi, phi, mu = None))]
fn reconstructor_quadratic(x: Rows, pi: Rows, phi: Rows, mu: Option<f64>) -> PyResult<PyReconstructor> {
    let x = matrix(x)?;
    let phi = matrix_or_empty(phi, x.ncols())?;
    let inner = identify::reconstructor_quadratic(&x, &matrix(pi)?, &phi, mu).map_err(err)?;
    Ok(PyReconstructor { inner })
}

/// Returns a dict with the augmented rank, singular values and verdict.
#[pyfunction]
fn check_identifiability<'py>(py: Python<'py>, x: Rows, phi: Rows) -> PyResult<Bound<'py, PyDict>> {
    let x = matrix(x)?;
    let phi = matrix_or_empty(phi, x.ncols())?;
    let c = identify::check_identifiability(&x, &phi).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("augmented_rank", c.augmented_rank)?;
    d.set_item("expected_rank", c.expected_rank)?;
    d.set_item("identifiable", c.identifiable)?;
    d.set_item("smallest_singular_value", c.smallest_singular_value)?;
    d.set_item("largest_singular_value", c.largest_singular_value)?;
    Ok(d)
}

#[pyclass(name = "PenaltyTable", module = "linsel_py", frozen)]
struct PyPenaltyTable {
    inner: penalty::PenaltyTable,
}

#[pymethods]
impl PyPenaltyTable {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn penalties(&self) -> Vec<f64> {
        self.inner.penalties()
    }

    fn penalty(&self, id: &str) -> PyResult<f64> {
        penalty::penalty_value(&self.inner, &ModelId::from(id)).map_err(err)
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn sigma_sum(&self) -> f64 {
        self.inner.sigma_sum
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn warning(&self) -> Option<String> {
        self.inner.warning.clone()
    }

    fn multiplicative_constant(&self) -> f64 {
        self.inner.multiplicative_constant()
    }

    /// One dict per model with the calibration components.
    fn rows<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .rows
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("id", &r.id.0)?;
                d.set_item("trace_cross", r.spectral.trace_cross)?;
                d.set_item("var_term", r.spectral.var_term)?;
                d.set_item("delta_m", r.delta_m)?;
                d.set_item("ell", r.ell)?;
                d.set_item("h", r.h)?;
                d.set_item("l", r.l)?;
                d.set_item("q", r.q)?;
                d.set_item("pen", r.pen)?;
                Ok(d)
            })
            .collect()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

#[pyfunction]
#[pyo3(signature = (
    model, family, k = None, *, theta = 0.75, alpha = 1.0, epsilon = 1.0, kernel_mu = 3.0,
    delta = None, target_c = None, mode = "quadratic", reading = "linear"
))]
#[allow(clippy::too_many_arguments)]
fn calibrate(
    model: &PyLinearModel,
    family: Vec<PyRef<'_, PyEstimator>>,
    k: Option<&PyReconstructor>,
    theta: f64,
    alpha: f64,
    epsilon: f64,
    kernel_mu: f64,
    delta: Option<f64>,
    target_c: Option<f64>,
    mode: &str,
    reading: &str,
) -> PyResult<PyPenaltyTable> {
    let reading = match reading {
        "linear" => WeightReading::Linear,
        "squared" => WeightReading::Squared,
        other => return Err(PyValueError::new_err(format!("unknown reading `{other}`"))),
    };
    let config = PenaltyConfig {
        theta,
        alpha,
        epsilon,
        kernel_mu,
        delta,
        target_c,
        mode: parse::<RiskMode>(mode)?,
        reading,
    };
    let fam = members(&family);
    let inner = penalty::calibrate(&model.inner, &fam, k.map(|k| &k.inner), &config).map_err(err)?;
    Ok(PyPenaltyTable { inner })
}

#[pyclass(name = "Selection", module = "linsel_py", frozen, get_all)]
struct PySelection {
    index: usize,
    chosen: String,
    criterion: Vec<f64>,
    estimate: Vec<f64>,
}

#[pyfunction]
#[pyo3(signature = (y, model, family, table, k = None))]
fn select(
    y: Vec<f64>,
    model: &PyLinearModel,
    family: Vec<PyRef<'_, PyEstimator>>,
    table: &PyPenaltyTable,
    k: Option<&PyReconstructor>,
) -> PyResult<PySelection> {
    let fam = members(&family);
    let s = selection::select(&DVector::from_vec(y), &model.inner, &fam, k.map(|k| &k.inner), &table.inner)
        .map_err(err)?;
    Ok(PySelection {
        index: s.index,
        chosen: s.chosen.0,
        criterion: s.criterion,
        estimate: s.estimate.as_slice().to_vec(),
    })
}

fn report_dict<'py>(py: Python<'py>, r: &selection::RiskReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("ids", r.ids.iter().map(|i| i.0.clone()).collect::<Vec<_>>())?;
    d.set_item("risks", r.risks.clone())?;
    d.set_item("penalties", r.penalties.clone())?;
    d.set_item("oracle", &r.oracle.0)?;
    d.set_item("oracle_risk", r.oracle_risk)?;
    d.set_item("penalized_risk", r.penalized_risk)?;
    d.set_item("penalized_se", r.penalized_se)?;
    d.set_item("rho", r.rho)?;
    d.set_item("rho_selected_exact", r.rho_selected_exact)?;
    d.set_item("relative_error", r.relative_error)?;
    d.set_item("chosen", r.trials.iter().map(|t| t.chosen_index).collect::<Vec<_>>())?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (model, family, table, beta, trials, seed, k = None))]
#[allow(clippy::too_many_arguments)]
fn risk_report<'py>(
    py: Python<'py>,
    model: &PyLinearModel,
    family: Vec<PyRef<'_, PyEstimator>>,
    table: &PyPenaltyTable,
    beta: Vec<f64>,
    trials: usize,
    seed: u64,
    k: Option<&PyReconstructor>,
) -> PyResult<Bound<'py, PyDict>> {
    let fam = members(&family);
    let beta = DVector::from_vec(beta);
    let r = py
        .detach(|| selection::risk_report(&model.inner, &fam, k.map(|k| &k.inner), &table.inner, &beta, trials, seed))
        .map_err(err)?;
    report_dict(py, &r)
}

#[pyfunction]
fn quadratic_risk(model: &PyLinearModel, est: &PyEstimator, beta: Vec<f64>) -> PyResult<f64> {
    linmodel::quadratic_risk(&model.inner, &est.inner, &DVector::from_vec(beta)).map_err(err)
}

#[pyfunction]
fn predictive_risk(model: &PyLinearModel, est: &PyEstimator, beta: Vec<f64>) -> PyResult<f64> {
    linmodel::predictive_risk(&model.inner, &est.inner, &DVector::from_vec(beta)).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (p, models, normalization = "row-stochastic"))]
fn gaussian_bank(p: usize, models: usize, normalization: &str) -> PyResult<Vec<PyEstimator>> {
    let bank = families::build_gaussian_bank(p, models, parse::<Normalization>(normalization)?).map_err(err)?;
    Ok(bank.into_iter().map(|inner| PyEstimator { inner }).collect())
}

/// Generalized Tikhonov estimator matrix for design `x`, weight `p`, regularizer `h`.
#[pyfunction]
fn tikhonov(x: Rows, p: Rows, h: Rows) -> PyResult<Rows> {
    Ok(rows(&families::build_tikhonov(&matrix(x)?, &matrix(p)?, &matrix(h)?).map_err(err)?))
}

#[pyfunction]
fn pseudo_inverse(a: Rows) -> PyResult<Rows> {
    Ok(rows(&linalg::pseudo_inverse(&matrix(a)?).map_err(err)?))
}

#[pyfunction]
fn test_signal(p: usize) -> Vec<f64> {
    harness::test_signal(p).as_slice().to_vec()
}

/// Runs a simulation study and returns its risk summary.
#[pyfunction]
#[pyo3(signature = (experiment, *, p = None, models = None, trials = None, seed = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    experiment: &str,
    p: Option<usize>,
    models: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut c = ExperimentConfig::new(parse::<Experiment>(experiment)?);
    if let Some(p) = p {
        c.p = p;
    }
    if let Some(m) = models {
        c.models = m;
    }
    if let Some(t) = trials {
        c.trials = t;
    }
    if let Some(s) = seed {
        c.seed = s;
    }
    let out = py.detach(|| harness::run(&c)).map_err(err)?;
    let d = report_dict(py, &out.report)?;
    d.set_item("oracle_relative_error", out.oracle_relative_error)?;
    d.set_item("direct_inversion_error", out.direct_inversion_error)?;
    d.set_item("delta", out.table.delta)?;
    d.set_item("summary", out.summary())?;
    Ok(d)
}

#[pymodule]
fn linsel_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLinearModel>()?;
    m.add_class::<PyEstimator>()?;
    m.add_class::<PyReconstructor>()?;
    m.add_class::<PyPenaltyTable>()?;
    m.add_class::<PySelection>()?;
    m.add_function(wrap_pyfunction!(reconstructor_full_rank, m)?)?;
    m.add_function(wrap_pyfunction!(reconstructor_basis, m)?)?;
    m.add_function(wrap_pyfunction!(reconstructor_quadratic, m)?)?;
    m.add_function(wrap_pyfunction!(check_identifiability, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(risk_report, m)?)?;
    m.add_function(wrap_pyfunction!(quadratic_risk, m)?)?;
    m.add_function(wrap_pyfunction!(predictive_risk, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_bank, m)?)?;
    m.add_function(wrap_pyfunction!(tikhonov, m)?)?;
    m.add_function(wrap_pyfunction!(pseudo_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(test_signal, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
