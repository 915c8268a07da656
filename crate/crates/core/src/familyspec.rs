//! Text description of an estimator family.
//!
//! ```text
//! # one block per member
//! [model]
//! id = ridge1
//! kind = tikhonov
//! P = identity
//! H = scaled_identity:0.5
//!
//! # or a generator for a whole grid
//! [generator]
//! kind = gaussian_bank
//! models = 100
//! normalization = row_stochastic
//! ```
//!
//! Member kinds and their keys:
//!
//! - `tikhonov`: `P`, `H`
//! - `basis_constrained`: `P`, `phi_bar`
//! - `basis_regularized`: `P`, `phi_bar`, `H`
//! - `variable_selection`: `P`, `nu` (space-separated 0/1 flags)
//! - `matrix`: `psi`
//! - `ideal`: `beta`
//!
//! Generator kinds: `gaussian_bank` (`models`, `normalization`) and
//! `diff_regularized` (`grid = default` or `a,b,c; a,b,c; ...`).
//!
//! Matrix values are `identity`, `zero`, `none` (zero rows, for constraints),
//! `scaled_identity:<s>`, or a path to a matrix file relative to the spec.
//! `P` defaults to `identity`, `H` to `zero` and `phi_bar` to `none`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{LinselError, Result};
use crate::families::{
    build_basis_constrained, build_basis_regularized, build_diff_regularizer_family,
    build_gaussian_bank, build_ideal, build_tikhonov, build_variable_selection,
    default_difference_grid, Normalization, RegularizerWeights,
};
use crate::io::{read_matrix, read_vector};
use crate::linmodel::{EstimatorMatrix, LinearModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Tikhonov,
    BasisConstrained,
    BasisRegularized,
    VariableSelection,
    Matrix,
    Ideal,
    GaussianBank,
    DiffRegularized,
}

impl FamilyKind {
    fn parse(s: &str, generator: bool) -> Option<Self> {
        use FamilyKind::*;
        let kind = match s {
            "tikhonov" => Tikhonov,
            "basis_constrained" => BasisConstrained,
            "basis_regularized" => BasisRegularized,
            "variable_selection" => VariableSelection,
            "matrix" => Matrix,
            "ideal" => Ideal,
            "gaussian_bank" => GaussianBank,
            "diff_regularized" => DiffRegularized,
            _ => return None,
        };
        (kind.is_generator() == generator).then_some(kind)
    }

    pub fn is_generator(self) -> bool {
        matches!(self, FamilyKind::GaussianBank | FamilyKind::DiffRegularized)
    }
}

#[derive(Debug, Clone)]
pub struct FamilyEntry {
    pub kind: FamilyKind,
    pub params: BTreeMap<String, String>,
    /// Line of the section header, for diagnostics.
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct FamilySpec {
    pub entries: Vec<FamilyEntry>,
    origin: String,
    base_dir: PathBuf,
}

fn perr(origin: &str, line: usize, msg: impl Into<String>) -> LinselError {
    LinselError::Parse {
        path: origin.to_string(),
        line,
        msg: msg.into(),
    }
}

impl FamilySpec {
    pub fn parse(text: &str, origin: &str, base_dir: &Path) -> Result<Self> {
        struct Open {
            generator: bool,
            line: usize,
            params: BTreeMap<String, String>,
        }
        let mut raw: Vec<Open> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(section) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let generator = match section.trim() {
                    "model" => false,
                    "generator" => true,
                    other => return Err(perr(origin, ln, format!("unknown section `[{other}]`"))),
                };
                raw.push(Open {
                    generator,
                    line: ln,
                    params: BTreeMap::new(),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(origin, ln, "expected `key = value`"))?;
            let block = raw
                .last_mut()
                .ok_or_else(|| perr(origin, ln, "entry outside of a [model] or [generator] section"))?;
            let key = key.trim().to_string();
            if block.params.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(perr(origin, ln, format!("duplicate key `{key}`")));
            }
        }
        if raw.is_empty() {
            return Err(perr(origin, 1, "no [model] or [generator] sections"));
        }
        let mut entries = Vec::with_capacity(raw.len());
        for b in raw {
            let kind_str = b
                .params
                .get("kind")
                .ok_or_else(|| perr(origin, b.line, "section has no `kind`"))?;
            let kind = FamilyKind::parse(kind_str, b.generator).ok_or_else(|| {
                perr(
                    origin,
                    b.line,
                    format!(
                        "`{kind_str}` is not a valid {} kind",
                        if b.generator { "generator" } else { "model" }
                    ),
                )
            })?;
            if !kind.is_generator() && !b.params.contains_key("id") {
                return Err(perr(origin, b.line, "[model] section needs an `id`"));
            }
            entries.push(FamilyEntry {
                kind,
                params: b.params,
                line: b.line,
            });
        }
        Ok(Self {
            entries,
            origin: origin.to_string(),
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LinselError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    fn matrix(&self, e: &FamilyEntry, key: &str, default: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let value = e.params.get(key).map(String::as_str).unwrap_or(default);
        let m = match value {
            "identity" => DMatrix::identity(rows, cols),
            "zero" => DMatrix::zeros(rows, cols),
            "none" => DMatrix::zeros(0, cols),
            v if v.starts_with("scaled_identity:") => {
                let s: f64 = v["scaled_identity:".len()..].trim().parse().map_err(|_| {
                    perr(&self.origin, e.line, format!("bad scale in `{v}`"))
                })?;
                DMatrix::identity(rows, cols) * s
            }
            path => read_matrix(&self.base_dir.join(path))?,
        };
        Ok(m)
    }

    fn number<T: std::str::FromStr>(&self, e: &FamilyEntry, key: &str) -> Result<T> {
        let v = e
            .params
            .get(key)
            .ok_or_else(|| perr(&self.origin, e.line, format!("missing `{key}`")))?;
        v.parse()
            .map_err(|_| perr(&self.origin, e.line, format!("bad value `{v}` for `{key}`")))
    }

    fn grid(&self, e: &FamilyEntry) -> Result<Vec<RegularizerWeights>> {
        let v = e.params.get("grid").map(String::as_str).unwrap_or("default");
        if v == "default" {
            return Ok(default_difference_grid());
        }
        v.split(';')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                let nums: Vec<f64> = t
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| perr(&self.origin, e.line, format!("bad grid triple `{t}`")))?;
                match nums[..] {
                    [a, b, c] => Ok((a, b, c)),
                    _ => Err(perr(&self.origin, e.line, format!("grid triple `{t}` needs 3 numbers"))),
                }
            })
            .collect()
    }

    /// Builds every member for the given model; ids must be unique.
    pub fn build(&self, model: &LinearModel) -> Result<Vec<EstimatorMatrix>> {
        let (n, p) = (model.n(), model.p());
        let x = model.x();
        let mut out: Vec<EstimatorMatrix> = Vec::new();
        for e in &self.entries {
            let id = e.params.get("id").cloned().unwrap_or_default();
            let label = format!("{:?}", e.kind).to_lowercase();
            let one = |psi: DMatrix<f64>| vec![EstimatorMatrix::new(id.clone(), psi, label.clone())];
            let built = match e.kind {
                FamilyKind::Tikhonov => one(build_tikhonov(
                    x,
                    &self.matrix(e, "P", "identity", n, n)?,
                    &self.matrix(e, "H", "zero", p, p)?,
                )?),
                FamilyKind::BasisConstrained => one(build_basis_constrained(
                    x,
                    &self.matrix(e, "P", "identity", n, n)?,
                    &self.matrix(e, "phi_bar", "none", p, p)?,
                )?),
                FamilyKind::BasisRegularized => one(build_basis_regularized(
                    x,
                    &self.matrix(e, "P", "identity", n, n)?,
                    &self.matrix(e, "phi_bar", "none", p, p)?,
                    &self.matrix(e, "H", "zero", p, p)?,
                )?),
                FamilyKind::VariableSelection => {
                    let nu = e
                        .params
                        .get("nu")
                        .ok_or_else(|| perr(&self.origin, e.line, "missing `nu`"))?
                        .split_whitespace()
                        .map(|t| t.parse::<u8>())
                        .collect::<std::result::Result<Vec<u8>, _>>()
                        .map_err(|_| perr(&self.origin, e.line, "`nu` must be 0/1 flags"))?;
                    one(build_variable_selection(x, &self.matrix(e, "P", "identity", n, n)?, &nu)?)
                }
                FamilyKind::Matrix => {
                    let psi = self.matrix(e, "psi", "zero", p, n)?;
                    one(psi)
                }
                FamilyKind::Ideal => {
                    let path = e
                        .params
                        .get("beta")
                        .ok_or_else(|| perr(&self.origin, e.line, "missing `beta`"))?;
                    let beta = read_vector(&self.base_dir.join(path))?;
                    one(build_ideal(&beta, x, model.r())?)
                }
                FamilyKind::GaussianBank => {
                    if n != p {
                        return Err(LinselError::Configuration(
                            "a Gaussian bank needs n = p".into(),
                        ));
                    }
                    let norm: Normalization = e
                        .params
                        .get("normalization")
                        .map(|s| s.parse())
                        .transpose()?
                        .unwrap_or_default();
                    build_gaussian_bank(p, self.number(e, "models")?, norm)?
                }
                FamilyKind::DiffRegularized => build_diff_regularizer_family(x, &self.grid(e)?)?,
            };
            out.extend(built);
        }
        let mut seen = HashSet::new();
        for e in &out {
            e.check_against(model)?;
            if !seen.insert(e.id.clone()) {
                return Err(LinselError::Configuration(format!("duplicate model id `{}`", e.id)));
            }
        }
        Ok(out)
    }
}
