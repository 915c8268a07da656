//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 identifiability
//! failure, 4 calibration warning under `--strict`, 1 when `conc-verify`
//! observes a bound violation.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use crate::conc::{verify_quadform, Direction};
use crate::error::{LinselError, Result};
use crate::familyspec::FamilySpec;
use crate::families::Normalization;
use crate::harness::{self, Experiment, ExperimentConfig};
use crate::identify::{
    check_identifiability, reconstructor_basis, reconstructor_full_rank, reconstructor_quadratic,
    Construction, Reconstructor,
};
use crate::io::{read_matrix, read_vector, write_vector};
use crate::linmodel::{LinearModel, RiskMode};
use crate::penalty::{calibrate, PenaltyConfig, PenaltyTable};
use crate::rng;
use crate::select::select;

#[derive(Debug, Parser)]
#[command(name = "linsel", version, about = "Penalized selection among linear estimators")]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select an estimator for observed data; writes result.csv and estimate.txt.
    Select(SelectArgs),
    /// Calibrate penalties for a family; writes penalty_table.csv.
    PenaltyTable(TableArgs),
    /// Run a simulation study; writes risk_report.csv, trace.csv, signal.csv
    /// and penalty_table.csv.
    ///
    /// risk_report.csv: id, exact_risk, pen, criterion_mean (criterion averaged
    /// over trials). trace.csv: trial, chosen_id, squared_error. signal.csv:
    /// t, beta, y, oracle_estimate, penalized_estimate for the first trial.
    Experiment(ExperimentArgs),
    /// Report the rank of [X; phi].
    CheckIdentifiability(IdentArgs),
    /// Monte-Carlo check of the quadratic-form tail bounds on a random or given (A, b).
    ConcVerify(ConcArgs),
}

#[derive(Debug, Args, Clone)]
pub struct PenaltyArgs {
    #[arg(long, default_value = "quadratic")]
    pub mode: String,
    #[arg(long, default_value_t = 0.75)]
    pub theta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Weight offset, or `auto` to search for Gamma <= target C.
    #[arg(long, default_value = "auto")]
    pub delta: String,
    /// Target for the additive constant, or `auto` for 0.01 * max ||Psi R||^2.
    #[arg(long = "target-C", default_value = "auto")]
    pub target_c: String,
    /// Exit with code 4 when the calibration carries a warning.
    #[arg(long)]
    pub strict: bool,
}

fn parse_auto(s: &str, what: &str) -> Result<Option<f64>> {
    if s == "auto" {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| LinselError::Configuration(format!("--{what} must be a number or `auto`, got `{s}`")))
}

impl PenaltyArgs {
    fn config(&self) -> Result<PenaltyConfig> {
        let cfg = PenaltyConfig {
            theta: self.theta,
            alpha: self.alpha,
            epsilon: self.epsilon,
            delta: parse_auto(&self.delta, "delta")?,
            target_c: parse_auto(&self.target_c, "target-C")?,
            mode: self.mode.parse::<RiskMode>()?,
            ..PenaltyConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long = "X")]
    pub x: PathBuf,
    #[arg(long = "R")]
    pub r: PathBuf,
    /// Family description file.
    #[arg(long)]
    pub family: PathBuf,
    /// Reconstructor: `full-rank`, `basis:PHI` or `quadratic:PI[,PHI]`
    /// (matrix file paths). Ignored in predictive mode.
    #[arg(long = "K", default_value = "full-rank")]
    pub k: String,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub y: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// `smoothing` or `inverse`.
    pub experiment: String,
    #[arg(long, default_value_t = 100)]
    pub models: usize,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, env = "LINSEL_SEED", default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
    /// `row_stochastic` or `as_written`.
    #[arg(long, default_value = "row_stochastic")]
    pub normalization: String,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct IdentArgs {
    #[arg(long = "X")]
    pub x: PathBuf,
    /// Constraint rows; none when omitted.
    #[arg(long)]
    pub phi: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConcArgs {
    /// Matrix A; drawn at random when omitted.
    #[arg(long = "A")]
    pub a: Option<PathBuf>,
    /// Vector b; drawn at random when omitted.
    #[arg(long)]
    pub b: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub dim: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, env = "LINSEL_SEED", default_value_t = 7)]
    pub seed: u64,
}

/// Outcome of a successful command: its exit code.
type Code = i32;

pub fn exit_code(err: &LinselError) -> Code {
    match err {
        LinselError::RankDeficient { .. } | LinselError::Identifiability(_) => 3,
        _ => 2,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Code
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        // Fails only if a pool already exists, which leaves the old one in place.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match &cli.command {
        Command::Select(a) => cmd_select(a),
        Command::PenaltyTable(a) => cmd_penalty_table(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::CheckIdentifiability(a) => cmd_check(a),
        Command::ConcVerify(a) => cmd_conc(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn build_reconstructor(spec: &str, x: &DMatrix<f64>) -> Result<Reconstructor> {
    if spec == "full-rank" {
        return reconstructor_full_rank(x);
    }
    if let Some(path) = spec.strip_prefix("basis:") {
        return reconstructor_basis(x, &read_matrix(Path::new(path))?);
    }
    if let Some(rest) = spec.strip_prefix("quadratic:") {
        let (pi, phi) = match rest.split_once(',') {
            Some((a, b)) => (read_matrix(Path::new(a))?, read_matrix(Path::new(b))?),
            None => (read_matrix(Path::new(rest))?, DMatrix::zeros(0, x.ncols())),
        };
        return reconstructor_quadratic(x, &pi, &phi, None);
    }
    Err(LinselError::Configuration(format!(
        "--K must be `full-rank`, `basis:PHI` or `quadratic:PI[,PHI]`, got `{spec}`"
    )))
}

struct Prepared {
    model: LinearModel,
    family: Vec<crate::linmodel::EstimatorMatrix>,
    k: Option<Reconstructor>,
    table: PenaltyTable,
}

fn prepare(a: &ModelArgs) -> Result<Prepared> {
    let cfg = a.penalty.config()?;
    let model = LinearModel::new(read_matrix(&a.x)?, read_matrix(&a.r)?)?;
    let family = FamilySpec::read(&a.family)?.build(&model)?;
    let k = match cfg.mode {
        RiskMode::Quadratic => Some(build_reconstructor(&a.k, model.x())?),
        RiskMode::Predictive => None,
    };
    let table = calibrate(&model, &family, k.as_ref(), &cfg)?;
    Ok(Prepared { model, family, k, table })
}

fn output_file(dir: &Path, name: &str) -> Result<fs::File> {
    fs::create_dir_all(dir).map_err(|e| LinselError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let path = dir.join(name);
    fs::File::create(&path).map_err(|e| LinselError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn warning_code(table: &PenaltyTable, strict: bool) -> Code {
    match &table.warning {
        Some(w) => {
            eprintln!("warning: {w}");
            if strict {
                4
            } else {
                0
            }
        }
        None => 0,
    }
}

fn cmd_select(a: &SelectArgs) -> Result<Code> {
    let y = read_vector(&a.y)?;
    let prep = prepare(&a.model)?;
    let res = select(&y, &prep.model, &prep.family, prep.k.as_ref(), &prep.table)?;
    res.write_csv(&prep.table, output_file(&a.model.output_dir, "result.csv")?)?;
    write_vector(&a.model.output_dir.join("estimate.txt"), &res.estimate)?;
    println!("chosen = {} criterion = {}", res.chosen, res.criterion[res.index]);
    Ok(warning_code(&prep.table, a.model.penalty.strict))
}

fn cmd_penalty_table(a: &TableArgs) -> Result<Code> {
    let prep = prepare(&a.model)?;
    prep.table
        .write_csv(output_file(&a.model.output_dir, "penalty_table.csv")?)?;
    println!(
        "models = {} lambda = {} Sigma = {} Gamma = {} delta = {}",
        prep.table.len(),
        prep.table.lambda,
        prep.table.sigma_sum,
        prep.table.gamma,
        prep.table.delta
    );
    Ok(warning_code(&prep.table, a.model.penalty.strict))
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<Code> {
    let experiment: Experiment = a.experiment.parse()?;
    let mut cfg = ExperimentConfig::new(experiment);
    cfg.models = a.models;
    cfg.trials = a.trials;
    cfg.seed = a.seed;
    cfg.p = a.p;
    cfg.noise_scale = a.noise_scale;
    cfg.normalization = a.normalization.parse::<Normalization>()?;
    cfg.penalty = a.penalty.config()?;
    cfg.output_dir = Some(a.output_dir.clone());
    let out = harness::run(&cfg)?;
    println!("{}", out.summary());
    Ok(warning_code(&out.table, a.penalty.strict))
}

fn cmd_check(a: &IdentArgs) -> Result<Code> {
    let x = read_matrix(&a.x)?;
    let phi = match &a.phi {
        Some(p) => read_matrix(p)?,
        None => DMatrix::zeros(0, x.ncols()),
    };
    let cert = check_identifiability(&x, &phi)?;
    let construction = if a.phi.is_some() {
        Construction::BasisAnnihilator
    } else {
        Construction::FullRank
    };
    print!("{}", cert.report(construction));
    if cert.identifiable {
        Ok(0)
    } else {
        eprintln!(
            "error: rank of [X; phi] is {}, short of p = {} by {}",
            cert.augmented_rank,
            cert.expected_rank,
            cert.expected_rank - cert.augmented_rank
        );
        Ok(3)
    }
}

fn cmd_conc(a: &ConcArgs) -> Result<Code> {
    let mut g = rng::stream(a.seed, u64::MAX);
    let amat = match &a.a {
        Some(p) => read_matrix(p)?,
        None => rng::normal_matrix(&mut g, a.dim, a.dim),
    };
    let b = match &a.b {
        Some(p) => read_vector(p)?,
        None => rng::normal_vector(&mut g, amat.nrows()),
    };
    if a.samples == 0 {
        return Err(LinselError::Configuration("--samples must be positive".into()));
    }
    let b: DVector<f64> = b;
    let checks = verify_quadform(&amat, &b, &[0.5, 1.0, 2.0, 3.0], a.samples, a.seed)?;
    let mut ok = true;
    for (x, dir, ex) in checks {
        let pass = ex.within_bound(x);
        ok &= pass;
        println!(
            "x = {x} direction = {} frequency = {} bound = {} {}",
            if dir == Direction::Upper { "upper" } else { "lower" },
            ex.frequency(),
            (-x).exp(),
            if pass { "ok" } else { "VIOLATED" }
        );
    }
    Ok(if ok { 0 } else { 1 })
}
