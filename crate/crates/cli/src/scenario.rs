//! Scenario files: what to transport, how to solve it, and what to report.
//!
//! Scenarios are TOML (or the JSON echo found in a run report). Parsing
//! errors and semantic validation errors both carry the path of the
//! offending field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    pub fiber_dim: usize,
    pub interval: [f64; 2],
    pub coefficients: CoefficientSource,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub outputs: Outputs,
}

/// Where the transport coefficients come from. Exactly one per scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientSource {
    /// `zero`, or `rotation` (`Γ = rate · [[0, -1], [1, 0]]`, rank 2 only).
    Preset(PresetSource),
    /// `Γ(s)` given entrywise as ascending-power coefficient lists.
    Polynomial(MatrixEntries),
    /// A frame family `F(s)`, entrywise polynomial, with `H(t,s) = F(t)⁻¹F(s)`.
    Frames(MatrixEntries),
    /// A connection preset contracted with the velocity of a chart path.
    Christoffel(ChristoffelSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetSource {
    pub name: String,
    #[serde(default = "one")]
    pub rate: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixEntries {
    /// `entries[i][j]` lists the coefficients of entry `(i, j)`.
    pub entries: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChristoffelSource {
    pub preset: String,
    /// Constant `Γ_α` matrices for the `constant-custom` preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<Vec<Vec<f64>>>>,
    pub path: PathSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathSource {
    /// `γ(s) = (θ₀, s)` on the sphere chart.
    Latitude { theta0: f64 },
    /// One ascending-power coefficient list per chart coordinate.
    Polynomial { coords: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub step: f64,
    /// Finite-difference step for coefficient extraction.
    pub fd_step: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Random parameter triples drawn by the axiom check.
    pub samples: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            step: 1e-3,
            fd_step: 1e-4,
            tolerance: 1e-8,
            seed: 0,
            samples: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    /// `(s, t)` pairs at which `H(t, s)` is reported.
    pub pairs: Vec<[f64; 2]>,
    /// Number of evenly spaced grid points for tables.
    pub grid: usize,
    /// Fiber vectors to transport with each reported matrix.
    pub vectors: Vec<Vec<f64>>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            pairs: Vec::new(),
            grid: 11,
            vectors: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::schema("<document>", e.to_string()))?;
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(path_error)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(&mut de).map_err(path_error)?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Loads `.json` files as JSON and everything else as TOML.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn lo(&self) -> f64 {
        self.interval[0]
    }

    pub fn hi(&self) -> f64 {
        self.interval[1]
    }

    pub fn contains(&self, s: f64) -> bool {
        s.is_finite() && s >= self.lo() && s <= self.hi()
    }

    /// Checks every constraint the engine relies on, before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::schema(
                "schema",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema),
            ));
        }
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return Err(CliError::schema(
                "name",
                "must be non-empty and use only [A-Za-z0-9._-]",
            ));
        }
        let n = self.fiber_dim;
        if n == 0 {
            return Err(CliError::schema("fiber_dim", "must be at least 1"));
        }
        let [lo, hi] = self.interval;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(CliError::schema(
                "interval",
                "must be finite with interval[0] < interval[1]",
            ));
        }
        self.solver.validate()?;
        match &self.coefficients {
            CoefficientSource::Preset(p) => match p.name.as_str() {
                "zero" => {}
                "rotation" => {
                    if n != 2 {
                        return Err(CliError::schema(
                            "coefficients.name",
                            "rotation preset needs fiber_dim = 2",
                        ));
                    }
                    if !p.rate.is_finite() {
                        return Err(CliError::schema("coefficients.rate", "must be finite"));
                    }
                }
                other => {
                    return Err(CliError::schema(
                        "coefficients.name",
                        format!("unknown preset `{other}` (expected `zero` or `rotation`)"),
                    ))
                }
            },
            CoefficientSource::Polynomial(m) | CoefficientSource::Frames(m) => {
                check_entries(&m.entries, n, "coefficients.entries")?;
            }
            CoefficientSource::Christoffel(c) => self.validate_christoffel(c)?,
        }
        let o = &self.outputs;
        if o.grid < 2 {
            return Err(CliError::schema("outputs.grid", "must be at least 2"));
        }
        for (k, [s, t]) in o.pairs.iter().enumerate() {
            if !self.contains(*s) || !self.contains(*t) {
                return Err(CliError::schema(
                    format!("outputs.pairs[{k}]"),
                    "parameters must lie in the interval",
                ));
            }
        }
        for (k, v) in o.vectors.iter().enumerate() {
            if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                return Err(CliError::schema(
                    format!("outputs.vectors[{k}]"),
                    format!("must have {n} finite components"),
                ));
            }
        }
        Ok(())
    }

    fn validate_christoffel(&self, c: &ChristoffelSource) -> Result<(), CliError> {
        let n = self.fiber_dim;
        let base_dim = match c.preset.as_str() {
            "flat-euclidean" => n,
            "sphere-levi-civita" => {
                if n != 2 {
                    return Err(CliError::schema(
                        "coefficients.preset",
                        "sphere preset needs fiber_dim = 2",
                    ));
                }
                2
            }
            "constant-custom" => {
                let Some(mats) = &c.matrices else {
                    return Err(CliError::schema("coefficients.matrices", "required by constant-custom"));
                };
                if mats.is_empty() {
                    return Err(CliError::schema(
                        "coefficients.matrices",
                        "must list at least one matrix",
                    ));
                }
                for (a, m) in mats.iter().enumerate() {
                    check_square(m, n, &format!("coefficients.matrices[{a}]"))?;
                }
                mats.len()
            }
            other => {
                return Err(CliError::schema(
                    "coefficients.preset",
                    format!(
                        "unknown preset `{other}` (expected flat-euclidean, sphere-levi-civita or constant-custom)"
                    ),
                ))
            }
        };
        if c.matrices.is_some() && c.preset != "constant-custom" {
            return Err(CliError::schema(
                "coefficients.matrices",
                "only used by constant-custom",
            ));
        }
        match &c.path {
            PathSource::Latitude { theta0 } => {
                if c.preset != "sphere-levi-civita" {
                    return Err(CliError::schema(
                        "coefficients.path.kind",
                        "latitude paths need the sphere preset",
                    ));
                }
                let margin = ltransport::connection::SPHERE_POLE_MARGIN;
                if !(theta0.is_finite() && *theta0 >= margin && *theta0 <= std::f64::consts::PI - margin) {
                    return Err(CliError::schema(
                        "coefficients.path.theta0",
                        "must lie strictly between the poles",
                    ));
                }
            }
            PathSource::Polynomial { coords } => {
                if coords.len() != base_dim {
                    return Err(CliError::schema(
                        "coefficients.path.coords",
                        format!("expected {base_dim} coordinate polynomials"),
                    ));
                }
                for (a, p) in coords.iter().enumerate() {
                    if p.is_empty() || p.iter().any(|x| !x.is_finite()) {
                        return Err(CliError::schema(
                            format!("coefficients.path.coords[{a}]"),
                            "must be a non-empty list of finite numbers",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

impl SolverSettings {
    fn validate(&self) -> Result<(), CliError> {
        for (field, v) in [
            ("solver.step", self.step),
            ("solver.fd_step", self.fd_step),
            ("solver.tolerance", self.tolerance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::schema(field, "must be positive and finite"));
            }
        }
        if self.samples == 0 {
            return Err(CliError::schema("solver.samples", "must be positive"));
        }
        Ok(())
    }
}

fn check_square(m: &[Vec<f64>], n: usize, path: &str) -> Result<(), CliError> {
    if m.len() != n {
        return Err(CliError::schema(path, format!("expected {n} rows")));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(CliError::schema(
                format!("{path}[{i}]"),
                format!("expected {n} columns"),
            ));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(CliError::schema(format!("{path}[{i}]"), "entries must be finite"));
        }
    }
    Ok(())
}

fn check_entries(entries: &[Vec<Vec<f64>>], n: usize, path: &str) -> Result<(), CliError> {
    if entries.len() != n {
        return Err(CliError::schema(path, format!("expected {n} rows")));
    }
    for (i, row) in entries.iter().enumerate() {
        if row.len() != n {
            return Err(CliError::schema(
                format!("{path}[{i}]"),
                format!("expected {n} columns"),
            ));
        }
        for (j, c) in row.iter().enumerate() {
            if c.is_empty() || c.iter().any(|x| !x.is_finite()) {
                return Err(CliError::schema(
                    format!("{path}[{i}][{j}]"),
                    "must be a non-empty list of finite coefficients",
                ));
            }
        }
    }
    Ok(())
}

fn path_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> CliError {
    let path = e.path().to_string();
    let path = if path == "." { "<document>".to_string() } else { path };
    CliError::schema(path, e.into_inner().to_string())
}
