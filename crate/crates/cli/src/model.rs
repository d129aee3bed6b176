//! Turns a validated scenario into engine objects.

use std::sync::Arc;

use ltransport::linalg::Vector;
use ltransport::{
    path_coefficients, solve_fundamental, tangent_bundle_preset, ChristoffelField, CoefficientField, FrameFamily,
    FrameTransport, FundamentalSolution, Interval, Matrix, PathSpec, PolyMatrix, TransportSource,
};
use nalgebra::DMatrix;

use crate::error::{CliError, Stage};
use crate::scenario::{CoefficientSource, PathSource, Scenario};

/// How `H(t, s)` is obtained.
#[derive(Clone)]
pub enum Engine {
    /// Integrated from the coefficients with base point at the interval start.
    Ode(Arc<FundamentalSolution>),
    /// Read off a frame family.
    Frames(Arc<FrameTransport>),
}

impl Engine {
    pub fn source(&self) -> &dyn TransportSource {
        match self {
            Engine::Ode(sol) => sol.as_ref(),
            Engine::Frames(ft) => ft.as_ref(),
        }
    }
}

#[derive(Clone)]
pub struct Model {
    pub interval: Interval,
    pub dim: usize,
    pub coefficients: CoefficientField,
    pub engine: Engine,
    pub frames: Option<FrameFamily>,
    pub connection: Option<(ChristoffelField, PathSpec)>,
}

impl Model {
    pub fn build(scenario: &Scenario) -> Result<Self, CliError> {
        Self::build_with_step(scenario, scenario.solver.step)
    }

    /// Builds the model with a different integrator step (used by oracles
    /// and error estimates).
    pub fn build_with_step(scenario: &Scenario, step: f64) -> Result<Self, CliError> {
        let interval = Interval::new(scenario.lo(), scenario.hi()).stage("setup")?;
        let n = scenario.fiber_dim;
        let mut frames = None;
        let mut connection = None;
        let coefficients = match &scenario.coefficients {
            CoefficientSource::Preset(p) => match p.name.as_str() {
                "rotation" => CoefficientField::constant(nalgebra::dmatrix![0.0, -p.rate; p.rate, 0.0]),
                _ => CoefficientField::zero(n),
            },
            CoefficientSource::Polynomial(m) => {
                CoefficientField::polynomial(PolyMatrix::new(m.entries.clone()).stage("setup")?).stage("setup")?
            }
            CoefficientSource::Frames(m) => {
                let family =
                    FrameFamily::polynomial(PolyMatrix::new(m.entries.clone()).stage("setup")?).stage("setup")?;
                frames = Some(family.clone());
                frame_coefficients(family)
            }
            CoefficientSource::Christoffel(c) => {
                let field = match c.preset.as_str() {
                    "flat-euclidean" => ltransport::Preset::FlatEuclidean { dim: n }.field(),
                    name => tangent_bundle_preset(
                        name,
                        c.matrices.as_ref().map(|ms| ms.iter().map(|m| to_matrix(m)).collect()),
                    ),
                }
                .stage("setup")?;
                let path = build_path(&c.path, interval, field.base_dim()).stage("setup")?;
                let gamma = path_coefficients(&field, &path).stage("path coefficients")?;
                connection = Some((field, path));
                gamma
            }
        };
        let engine = match &frames {
            Some(f) => Engine::Frames(Arc::new(FrameTransport::new(f.clone(), interval))),
            None => Engine::Ode(Arc::new(
                solve_fundamental(&coefficients, interval.lo(), interval, step).stage("integration")?,
            )),
        };
        Ok(Self {
            interval,
            dim: n,
            coefficients,
            engine,
            frames,
            connection,
        })
    }
}

/// `Γ(s) = F(s)⁻¹ F′(s)` for a frame family with `H(t,s) = F(t)⁻¹F(s)`.
fn frame_coefficients(family: FrameFamily) -> CoefficientField {
    let n = family.dim();
    CoefficientField::try_from_fn(n, move |s| {
        let f = family.eval(s)?;
        let df = family.derivative(s, 1e-6)?;
        Ok(ltransport::linalg::invert(&f, "frame family")? * df)
    })
}

pub fn to_matrix(rows: &[Vec<f64>]) -> Matrix {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

pub fn from_matrix(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn horner(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, x| acc * s + x)
}

fn horner_derivative(c: &[f64], s: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, x)| acc * s + k as f64 * x)
}

fn build_path(source: &PathSource, interval: Interval, base_dim: usize) -> ltransport::Result<PathSpec> {
    match source {
        PathSource::Latitude { theta0 } => {
            let th = *theta0;
            PathSpec::chart(
                interval,
                2,
                move |s| Vector::from_vec(vec![th, s]),
                Some(Arc::new(|_| Vector::from_vec(vec![0.0, 1.0]))),
            )
        }
        PathSource::Polynomial { coords } => {
            let (c1, c2) = (coords.clone(), coords.clone());
            PathSpec::chart(
                interval,
                base_dim,
                move |s| Vector::from_iterator(c1.len(), c1.iter().map(|c| horner(c, s))),
                Some(Arc::new(move |s| {
                    Vector::from_iterator(c2.len(), c2.iter().map(|c| horner_derivative(c, s)))
                })),
            )
        }
    }
}
