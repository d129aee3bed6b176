//! Transports induced by linear connections: coefficient fields obtained by
//! contracting a Christoffel-type field with the path velocity,
//! `Γ(s) = Σ_α Γ_α(γ(s)) γ̇^α(s)`, their behavior under frame and coordinate
//! changes, preset geometries, and holonomy around closed paths.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::bundle::{CoefficientField, FrameChange, FrameId, PathForm, PathSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::transport::{solve_fundamental, TransportSource};

type PointFn<T> = Arc<dyn Fn(&[f64]) -> T + Send + Sync>;

/// Endpoints of a loop must agree to this in chart coordinates.
pub const LOOP_CLOSURE_TOL: f64 = 1e-10;

/// Keeps the sphere chart away from the poles, where `cot θ` blows up.
pub const SPHERE_POLE_MARGIN: f64 = 1e-3;

/// A rectangular coordinate domain. Periodic axes wrap and are unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    id: String,
    lower: Vec<f64>,
    upper: Vec<f64>,
    periods: Vec<Option<f64>>,
}

impl Chart {
    pub fn new(id: impl Into<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidDimension(
                "chart bounds must be non-empty and of equal length".into(),
            ));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| l.partial_cmp(u) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::InvalidArgument(
                "chart lower bounds must lie below upper bounds".into(),
            ));
        }
        let periods = vec![None; lower.len()];
        Ok(Self {
            id: id.into(),
            lower,
            upper,
            periods,
        })
    }

    /// All of `ℝ^m`.
    pub fn unbounded(id: impl Into<String>, dim: usize) -> Result<Self> {
        Self::new(id, vec![f64::NEG_INFINITY; dim], vec![f64::INFINITY; dim])
    }

    /// Declares `axis` periodic with the given period.
    pub fn with_period(mut self, axis: usize, period: f64) -> Self {
        self.periods[axis] = Some(period);
        self.lower[axis] = f64::NEG_INFINITY;
        self.upper[axis] = f64::INFINITY;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(a, &v)| {
                v.is_finite() && (self.periods[a].is_some() || (v >= self.lower[a] && v <= self.upper[a]))
            })
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideChart {
                point: x.to_vec(),
                chart: self.id.clone(),
            })
        }
    }

    /// Largest coordinate difference, reduced modulo the period on periodic
    /// axes.
    pub fn gap(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(axis, (x, y))| {
                let d = (x - y).abs();
                match self.periods[axis] {
                    Some(p) => {
                        let r = d.rem_euclid(p);
                        r.min(p - r)
                    }
                    None => d,
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `x ↦ [Γ_1(x), …, Γ_m(x)]`, one `n×n` matrix per base direction, with
/// `Γ_α[i][j] = Γ^i_{jα}`. Optionally carries a fiber metric `g(x)`.
#[derive(Clone)]
pub struct ChristoffelField {
    fiber_dim: usize,
    chart: Chart,
    frame_id: FrameId,
    eval: PointFn<Vec<Matrix>>,
    metric: Option<PointFn<Matrix>>,
}

impl fmt::Debug for ChristoffelField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChristoffelField")
            .field("fiber_dim", &self.fiber_dim)
            .field("base_dim", &self.chart.dim())
            .field("chart", &self.chart.id)
            .field("frame_id", &self.frame_id)
            .field("has_metric", &self.metric.is_some())
            .finish()
    }
}

impl ChristoffelField {
    pub fn new<F>(fiber_dim: usize, chart: Chart, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<Matrix> + Send + Sync + 'static,
    {
        Self {
            fiber_dim,
            chart,
            frame_id: FrameId::canonical(),
            eval: Arc::new(f),
            metric: None,
        }
    }

    pub fn with_metric<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64]) -> Matrix + Send + Sync + 'static,
    {
        self.metric = Some(Arc::new(g));
        self
    }

    pub fn with_frame(mut self, frame_id: FrameId) -> Self {
        self.frame_id = frame_id;
        self
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn base_dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn frame_id(&self) -> &FrameId {
        &self.frame_id
    }

    pub fn has_metric(&self) -> bool {
        self.metric.is_some()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<Matrix>> {
        self.chart.check(x)?;
        let mats = (self.eval)(x);
        let n = self.fiber_dim;
        if mats.len() != self.base_dim() || mats.iter().any(|m| m.shape() != (n, n)) {
            return Err(Error::InvalidDimension(format!(
                "Christoffel field must return {} matrices of size {n}x{n}",
                self.base_dim()
            )));
        }
        if mats.iter().any(|m| !linalg::all_finite(m)) {
            return Err(Error::NonFinite {
                param: f64::NAN,
                context: format!("Christoffel field at {x:?}"),
            });
        }
        Ok(mats)
    }

    pub fn metric(&self, x: &[f64]) -> Option<Result<Matrix>> {
        self.metric.as_ref().map(|g| {
            self.chart.check(x)?;
            Ok(g(x))
        })
    }
}

type CurveFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

fn chart_path_parts(path: &PathSpec) -> Result<(usize, CurveFn, CurveFn)> {
    match &path.form {
        PathForm::Abstract => Err(Error::InvalidArgument("path must be given in chart coordinates".into())),
        PathForm::Chart {
            dim_base,
            position,
            velocity,
        } => Ok((*dim_base, position.clone(), velocity.clone())),
    }
}

const PATH_DOMAIN_SAMPLES: usize = 257;

/// `Γ(s) = Σ_α Γ_α(γ(s)) γ̇^α(s)`.
pub fn path_coefficients(field: &ChristoffelField, path: &PathSpec) -> Result<CoefficientField> {
    let (m, position, velocity) = chart_path_parts(path)?;
    if m != field.base_dim() {
        return Err(Error::InvalidDimension(format!(
            "path in {m} coordinates for a field over a {}-dimensional chart",
            field.base_dim()
        )));
    }
    for s in path.interval.linspace(PATH_DOMAIN_SAMPLES) {
        field.chart.check(position(s).as_slice())?;
    }
    let f = field.clone();
    let n = field.fiber_dim;
    Ok(CoefficientField::try_from_fn(n, move |s| {
        let x = position(s);
        let v = velocity(s);
        let mats = f.eval(x.as_slice())?;
        Ok(mats
            .iter()
            .zip(v.iter())
            .fold(Matrix::zeros(n, n), |acc, (g, va)| acc + g * *va))
    })
    .with_frame(field.frame_id.clone()))
}

/// A change of fiber frame depending on the base point, `x ↦ A(x)`.
#[derive(Clone)]
pub struct PointFrameChange {
    from: FrameId,
    to: FrameId,
    dim: usize,
    base_dim: usize,
    eval: PointFn<Matrix>,
    gradient: Option<PointFn<Vec<Matrix>>>,
}

impl fmt::Debug for PointFrameChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointFrameChange")
            .field("from", &self.from)
            .field("to", &self.to)
            .field("dim", &self.dim)
            .field("base_dim", &self.base_dim)
            .field("has_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl PointFrameChange {
    pub fn new<F>(from: FrameId, to: FrameId, dim: usize, base_dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Matrix + Send + Sync + 'static,
    {
        Self {
            from,
            to,
            dim,
            base_dim,
            eval: Arc::new(f),
            gradient: None,
        }
    }

    pub fn identity(frame: FrameId, dim: usize, base_dim: usize) -> Self {
        Self::new(frame.clone(), frame, dim, base_dim, move |_| Matrix::identity(dim, dim))
            .with_gradient(move |_| vec![Matrix::zeros(dim, dim); base_dim])
    }

    /// Partial derivatives `∂A/∂x^α`, one matrix per coordinate.
    pub fn with_gradient<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<Matrix> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn from_frame(&self) -> &FrameId {
        &self.from
    }

    pub fn to_frame(&self) -> &FrameId {
        &self.to
    }

    pub fn eval(&self, x: &[f64]) -> Result<Matrix> {
        let a = (self.eval)(x);
        linalg::ensure_invertible(&a, &format!("frame change at {x:?}"))?;
        Ok(a)
    }

    /// Declared partials, or central differences with `h = 1e-6`.
    pub fn gradient(&self, x: &[f64]) -> Vec<Matrix> {
        if let Some(g) = &self.gradient {
            return g(x);
        }
        let h = 1e-6;
        (0..self.base_dim)
            .map(|a| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[a] += h;
                xm[a] -= h;
                ((self.eval)(&xp) - (self.eval)(&xm)) / (2.0 * h)
            })
            .collect()
    }

    /// Restriction to a path: `A(s) = A(γ(s))`, `dA/ds = Σ_α ∂_αA γ̇^α`.
    pub fn along_path(&self, path: &PathSpec) -> Result<FrameChange> {
        let (m, position, velocity) = chart_path_parts(path)?;
        if m != self.base_dim {
            return Err(Error::InvalidDimension(
                "path and frame change use different charts".into(),
            ));
        }
        let me = self.clone();
        let me_d = self.clone();
        let (pos_d, vel_d) = (position.clone(), velocity);
        let n = self.dim;
        Ok(FrameChange::new(self.from.clone(), self.to.clone(), n, move |s| {
            (me.eval)(position(s).as_slice())
        })
        .with_derivative(move |s| {
            let x = pos_d(s);
            let v = vel_d(s);
            me_d.gradient(x.as_slice())
                .iter()
                .zip(v.iter())
                .fold(Matrix::zeros(n, n), |acc, (g, va)| acc + g * *va)
        })
        .with_fd_interval(path.interval))
    }
}

/// Coordinate change `x ↦ x′` between two charts, with its inverse and the
/// Jacobian `∂x′/∂x` evaluated at old coordinates.
#[derive(Clone)]
pub struct CoordinateChange {
    to_new: PointFn<Vector>,
    to_old: PointFn<Vector>,
    jacobian: PointFn<Matrix>,
    target: Chart,
}

impl fmt::Debug for CoordinateChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoordinateChange")
            .field("target", &self.target)
            .finish_non_exhaustive()
    }
}

impl CoordinateChange {
    pub fn new<N, O, J>(to_new: N, to_old: O, jacobian: J, target: Chart) -> Self
    where
        N: Fn(&[f64]) -> Vector + Send + Sync + 'static,
        O: Fn(&[f64]) -> Vector + Send + Sync + 'static,
        J: Fn(&[f64]) -> Matrix + Send + Sync + 'static,
    {
        Self {
            to_new: Arc::new(to_new),
            to_old: Arc::new(to_old),
            jacobian: Arc::new(jacobian),
            target,
        }
    }

    pub fn identity(chart: Chart) -> Self {
        let m = chart.dim();
        Self::new(
            Vector::from_column_slice,
            Vector::from_column_slice,
            move |_| Matrix::identity(m, m),
            chart,
        )
    }

    pub fn target(&self) -> &Chart {
        &self.target
    }

    pub fn to_new(&self, x: &[f64]) -> Vector {
        (self.to_new)(x)
    }

    pub fn to_old(&self, x: &[f64]) -> Vector {
        (self.to_old)(x)
    }

    /// `∂x′/∂x` at old coordinates `x`.
    pub fn jacobian(&self, x: &[f64]) -> Matrix {
        (self.jacobian)(x)
    }

    /// The same path in new coordinates; velocities map through the Jacobian.
    pub fn transform_path(&self, path: &PathSpec) -> Result<PathSpec> {
        let (m, position, velocity) = chart_path_parts(path)?;
        let (a, b) = (self.clone(), self.clone());
        let pos = position.clone();
        PathSpec::chart(
            path.interval,
            m,
            move |s| a.to_new(position(s).as_slice()),
            Some(Arc::new(move |s| b.jacobian(pos(s).as_slice()) * velocity(s))),
        )
    }
}

/// Transformation law of a Christoffel-type field under a point-dependent
/// frame change `A(x)` and a coordinate change `x ↦ x′`:
///
/// ```text
/// Γ′_{α′} = Σ_α (∂x^α/∂x′^{α′}) (A⁻¹ Γ_α A + A⁻¹ ∂_α A)
/// ```
///
/// The result lives on the target chart of `coords`. A fiber metric, when
/// present, is carried along as `Aᵀ g A`.
pub fn transform_christoffels(
    field: &ChristoffelField,
    frame_change: &PointFrameChange,
    coords: &CoordinateChange,
) -> Result<ChristoffelField> {
    frame_change.from.expect(&field.frame_id)?;
    if frame_change.dim != field.fiber_dim || frame_change.base_dim != field.base_dim() {
        return Err(Error::InvalidDimension(
            "frame change does not match the field's dimensions".into(),
        ));
    }
    if coords.target.dim() != field.base_dim() {
        return Err(Error::InvalidDimension(
            "coordinate change alters the base dimension".into(),
        ));
    }
    let n = field.fiber_dim;
    let m = field.base_dim();
    let (f, a, c) = (field.clone(), frame_change.clone(), coords.clone());
    let eval = move |xn: &[f64]| -> Result<Vec<Matrix>> {
        let x = c.to_old(xn);
        let x = x.as_slice();
        let j_inv = linalg::invert(&c.jacobian(x), &format!("coordinate Jacobian at {x:?}"))?;
        let am = a.eval(x)?;
        let a_inv = linalg::invert(&am, "frame change")?;
        let gammas = f.eval(x)?;
        let grads = a.gradient(x);
        let per_old: Vec<Matrix> = gammas
            .iter()
            .zip(&grads)
            .map(|(g, da)| &a_inv * g * &am + &a_inv * da)
            .collect();
        Ok((0..m)
            .map(|ap| {
                per_old
                    .iter()
                    .enumerate()
                    .fold(Matrix::zeros(n, n), |acc, (al, t)| acc + t * j_inv[(al, ap)])
            })
            .collect())
    };
    let eval = Arc::new(eval);
    let e2 = eval.clone();
    let mut out = ChristoffelField {
        fiber_dim: n,
        chart: coords.target.clone(),
        frame_id: frame_change.to.clone(),
        eval: Arc::new(move |x| e2(x).unwrap_or_else(|_| vec![Matrix::from_element(n, n, f64::NAN); m])),
        metric: None,
    };
    if let Some(g) = &field.metric {
        let (g, a, c) = (g.clone(), frame_change.clone(), coords.clone());
        out.metric = Some(Arc::new(move |xn| {
            let x = c.to_old(xn);
            let am = (a.eval)(x.as_slice());
            am.transpose() * g(x.as_slice()) * am
        }));
    }
    Ok(out)
}

/// Transport around a closed path.
#[derive(Debug, Clone)]
pub struct HolonomyResult {
    pub loop_path: PathSpec,
    /// `H(s_end, s_start)` in the field's frame at the base point.
    pub matrix: Matrix,
    /// `‖matrix − I‖∞`
    pub defect_norm: f64,
    /// The same map in a frame orthonormal for the fiber metric at the base
    /// point (the field's frame itself when there is no metric).
    pub orthonormal_matrix: Matrix,
    /// Rotation angle in `(-π, π]` for rank-2 fibers.
    pub angle: Option<f64>,
}

/// Cholesky factor `L` with `g = L Lᵀ`.
fn metric_factor(g: &Matrix) -> Result<Matrix> {
    g.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidArgument("fiber metric is not positive definite".into()))
}

/// Transports around `loop_path` (closed in the chart, modulo periodic
/// axes) and reports the resulting matrix.
pub fn holonomy(field: &ChristoffelField, loop_path: &PathSpec, step: f64) -> Result<HolonomyResult> {
    let (_, position, _) = chart_path_parts(loop_path)?;
    let j = loop_path.interval;
    let start = position(j.lo());
    let end = position(j.hi());
    let gap = field.chart.gap(start.as_slice(), end.as_slice());
    if gap.is_nan() || gap > LOOP_CLOSURE_TOL {
        return Err(Error::OpenLoop { gap });
    }
    let gamma = path_coefficients(field, loop_path)?;
    let sol = solve_fundamental(&gamma, j.lo(), j, step)?;
    let matrix = sol.matrix(j.hi(), j.lo())?;
    let n = field.fiber_dim;
    let orthonormal_matrix = match field.metric(start.as_slice()) {
        Some(g) => {
            let l = metric_factor(&g?)?;
            let lt = l.transpose();
            let lt_inv = linalg::invert(&lt, "metric factor")?;
            &lt * &matrix * lt_inv
        }
        None => matrix.clone(),
    };
    let angle = (n == 2).then(|| orthonormal_matrix[(1, 0)].atan2(orthonormal_matrix[(0, 0)]));
    Ok(HolonomyResult {
        loop_path: loop_path.clone(),
        defect_norm: linalg::identity_defect(&matrix),
        matrix,
        orthonormal_matrix,
        angle,
    })
}

/// Largest change of the metric inner product `g(u(s), v(s))` of two
/// vectors transported along `path` from its start.
pub fn metric_drift(
    field: &ChristoffelField,
    path: &PathSpec,
    step: f64,
    u: &Vector,
    v: &Vector,
    samples: usize,
) -> Result<f64> {
    if !field.has_metric() {
        return Err(Error::InvalidArgument("field has no fiber metric".into()));
    }
    let (_, position, _) = chart_path_parts(path)?;
    let gamma = path_coefficients(field, path)?;
    let j = path.interval;
    let sol = solve_fundamental(&gamma, j.lo(), j, step)?;
    let inner = |s: f64| -> Result<f64> {
        let g = field.metric(position(s).as_slice()).expect("metric present")?;
        let h = sol.matrix(s, j.lo())?;
        Ok(((&h * u).transpose() * g * (&h * v))[(0, 0)])
    };
    let initial = inner(j.lo())?;
    let mut worst = 0.0_f64;
    for s in j.linspace(samples.max(2)) {
        worst = worst.max((inner(s)? - initial).abs());
    }
    Ok(worst)
}

/// Named connection fields on tangent bundles.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    /// Zero Christoffel symbols in Cartesian coordinates on `ℝ^dim`.
    FlatEuclidean { dim: usize },
    /// Levi-Civita connection of the unit sphere in `(θ, φ)`, with
    /// `θ ∈ [ε, π − ε]`, `ε = 1e-3`, and `φ` periodic.
    SphereLeviCivita,
    /// Constant field `Γ_α` given by the matrices, on all of `ℝ^m`.
    ConstantCustom(Vec<Matrix>),
}

impl Preset {
    pub const NAMES: [&'static str; 3] = ["flat-euclidean", "sphere-levi-civita", "constant-custom"];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::FlatEuclidean { .. } => "flat-euclidean",
            Preset::SphereLeviCivita => "sphere-levi-civita",
            Preset::ConstantCustom(_) => "constant-custom",
        }
    }

    pub fn field(&self) -> Result<ChristoffelField> {
        match self {
            Preset::FlatEuclidean { dim } => {
                let n = *dim;
                if n == 0 {
                    return Err(Error::InvalidDimension("dimension must be >= 1".into()));
                }
                Ok(ChristoffelField::new(n, Chart::unbounded("cartesian", n)?, move |_| {
                    vec![Matrix::zeros(n, n); n]
                })
                .with_metric(move |_| Matrix::identity(n, n)))
            }
            Preset::SphereLeviCivita => {
                let chart = Chart::new(
                    "sphere(theta,phi)",
                    vec![SPHERE_POLE_MARGIN, f64::NEG_INFINITY],
                    vec![PI - SPHERE_POLE_MARGIN, f64::INFINITY],
                )?
                .with_period(1, 2.0 * PI);
                Ok(
                    ChristoffelField::new(2, chart, |x| sphere_christoffels(x[0])).with_metric(|x| {
                        let s = x[0].sin();
                        Matrix::from_diagonal(&Vector::from_vec(vec![1.0, s * s]))
                    }),
                )
            }
            Preset::ConstantCustom(mats) => {
                let Some(first) = mats.first() else {
                    return Err(Error::InvalidDimension(
                        "constant-custom needs at least one matrix".into(),
                    ));
                };
                let n = first.nrows();
                if mats.iter().any(|m| m.shape() != (n, n)) || n == 0 {
                    return Err(Error::InvalidDimension(
                        "constant-custom matrices must all be square of the same size".into(),
                    ));
                }
                let mats = mats.clone();
                let m = mats.len();
                Ok(ChristoffelField::new(n, Chart::unbounded("custom", m)?, move |_| {
                    mats.clone()
                }))
            }
        }
    }
}

/// `[Γ_θ, Γ_φ]` for the round unit sphere: the only non-zero symbols are
/// `Γ^θ_{φφ} = −sin θ cos θ` and `Γ^φ_{θφ} = Γ^φ_{φθ} = cot θ`.
pub fn sphere_christoffels(theta: f64) -> Vec<Matrix> {
    let (s, c) = theta.sin_cos();
    let cot = c / s;
    let mut g_theta = Matrix::zeros(2, 2);
    g_theta[(1, 1)] = cot;
    let mut g_phi = Matrix::zeros(2, 2);
    g_phi[(0, 1)] = -s * c;
    g_phi[(1, 0)] = cot;
    vec![g_theta, g_phi]
}

/// Looks a preset up by name. `constant-custom` requires `custom`;
/// `flat-euclidean` defaults to the plane.
pub fn tangent_bundle_preset(name: &str, custom: Option<Vec<Matrix>>) -> Result<ChristoffelField> {
    let preset = match name {
        "flat-euclidean" => Preset::FlatEuclidean { dim: 2 },
        "sphere-levi-civita" => Preset::SphereLeviCivita,
        "constant-custom" => Preset::ConstantCustom(
            custom.ok_or_else(|| Error::InvalidArgument("constant-custom requires a list of matrices".into()))?,
        ),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    preset.field()
}

/// The latitude circle `θ = θ₀` traversed once eastwards, `s ∈ [0, 2π]`,
/// `γ(s) = (θ₀, s)`.
pub fn sphere_latitude_loop(theta0: f64) -> Result<PathSpec> {
    let interval = crate::bundle::Interval::new(0.0, 2.0 * PI)?;
    PathSpec::chart(
        interval,
        2,
        move |s| Vector::from_vec(vec![theta0, s]),
        Some(Arc::new(|_| Vector::from_vec(vec![0.0, 1.0]))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::Interval;
    use crate::frame::change_frame_coeffs;
    use nalgebra::{dmatrix, dvector};

    fn wrap(a: f64) -> f64 {
        (a + PI).rem_euclid(2.0 * PI) - PI
    }

    #[test]
    fn zero_field_gives_zero_coefficients() {
        let field = tangent_bundle_preset("flat-euclidean", None).unwrap();
        let j = Interval::new(0.0, 1.0).unwrap();
        let p = PathSpec::chart(j, 2, |s| dvector![s, s * s], None).unwrap();
        let g = path_coefficients(&field, &p).unwrap();
        assert_eq!(g.eval(0.4).unwrap(), Matrix::zeros(2, 2));
    }

    #[test]
    fn constant_field_on_straight_line() {
        let g1 = dmatrix![1.0, 2.0; 3.0, 4.0];
        let g2 = dmatrix![0.0, -1.0; 1.0, 0.0];
        let field = tangent_bundle_preset("constant-custom", Some(vec![g1.clone(), g2.clone()])).unwrap();
        let j = Interval::new(0.0, 1.0).unwrap();
        let (a, b) = (0.6, 0.8);
        let p = PathSpec::chart(
            j,
            2,
            move |s| dvector![a * s, b * s],
            Some(Arc::new(move |_| dvector![a, b])),
        )
        .unwrap();
        let g = path_coefficients(&field, &p).unwrap();
        assert_eq!(g.eval(0.3).unwrap(), g1 * a + g2 * b);
    }

    #[test]
    fn sphere_latitude_coefficients() {
        let field = tangent_bundle_preset("sphere-levi-civita", None).unwrap();
        let th: f64 = 0.7;
        let g = path_coefficients(&field, &sphere_latitude_loop(th).unwrap()).unwrap();
        let expected = dmatrix![0.0, -th.sin() * th.cos(); th.cos() / th.sin(), 0.0];
        assert!(linalg::norm_inf(&(g.eval(1.3).unwrap() - expected)) < 1e-15);
    }

    #[test]
    fn sphere_equator_symbols_vanish() {
        let field = tangent_bundle_preset("sphere-levi-civita", None).unwrap();
        let mats = field.eval(&[PI / 2.0, 0.3]).unwrap();
        assert!(mats.iter().all(|m| linalg::norm_inf(m) < 1e-15));
    }

    #[test]
    fn preset_errors() {
        assert!(matches!(
            tangent_bundle_preset("torus", None),
            Err(Error::UnknownPreset(_))
        ));
        assert!(tangent_bundle_preset("constant-custom", None).is_err());
        let m = vec![dmatrix![1.0]];
        let f = tangent_bundle_preset("constant-custom", Some(m.clone())).unwrap();
        assert_eq!(f.eval(&[3.0]).unwrap(), m);
    }

    #[test]
    fn path_leaving_chart_is_rejected() {
        let field = tangent_bundle_preset("sphere-levi-civita", None).unwrap();
        let j = Interval::new(0.0, 4.0).unwrap();
        let p = PathSpec::chart(j, 2, |s| dvector![s, 0.0], None).unwrap();
        assert!(matches!(path_coefficients(&field, &p), Err(Error::OutsideChart { .. })));
    }

    #[test]
    fn doubling_velocity_doubles_coefficients() {
        let field = tangent_bundle_preset("sphere-levi-civita", None).unwrap();
        let j = Interval::new(0.0, 1.0).unwrap();
        let p1 = PathSpec::chart(
            j,
            2,
            |s| dvector![1.0 + 0.2 * s, s],
            Some(Arc::new(|_| dvector![0.2, 1.0])),
        )
        .unwrap();
        let p2 = PathSpec::chart(
            j,
            2,
            |s| dvector![1.0 + 0.2 * s, s],
            Some(Arc::new(|_| dvector![0.4, 2.0])),
        )
        .unwrap();
        let g1 = path_coefficients(&field, &p1).unwrap();
        let g2 = path_coefficients(&field, &p2).unwrap();
        for s in [0.0, 0.5, 1.0] {
            assert_eq!(g2.eval(s).unwrap(), g1.eval(s).unwrap() * 2.0);
        }
    }

    #[test]
    fn identity_transform_leaves_field() {
        let field = tangent_bundle_preset("sphere-levi-civita", None).unwrap();
        let id = PointFrameChange::identity(FrameId::canonical(), 2, 2);
        let t = transform_christoffels(&field, &id, &CoordinateChange::identity(field.chart().clone())).unwrap();
        let x = [1.1, 0.4];
        assert_eq!(t.eval(&x).unwrap(), field.eval(&x).unwrap());
    }

    #[test]
    fn constant_frame_change_is_similarity() {
        let field = tangent_bundle_preset("sphere-levi-civita", None).unwrap();
        let a = dmatrix![2.0, 1.0; 0.5, 1.0];
        let a2 = a.clone();
        let change = PointFrameChange::new(FrameId::canonical(), FrameId::new("e'"), 2, 2, move |_| a2.clone())
            .with_gradient(|_| vec![Matrix::zeros(2, 2); 2]);
        let t = transform_christoffels(&field, &change, &CoordinateChange::identity(field.chart().clone())).unwrap();
        let a_inv = linalg::invert(&a, "a").unwrap();
        let x = [0.9, 2.0];
        for (got, orig) in t.eval(&x).unwrap().iter().zip(field.eval(&x).unwrap()) {
            assert!(linalg::norm_inf(&(got - &a_inv * orig * &a)) < 1e-14);
        }
    }

    #[test]
    fn phi_shift_symmetry() {
        let field = tangent_bundle_preset("sphere-levi-civita", None).unwrap();
        let shift = 0.77;
        let coords = CoordinateChange::new(
            move |x| dvector![x[0], x[1] + shift],
            move |x| dvector![x[0], x[1] - shift],
            |_| Matrix::identity(2, 2),
            field.chart().clone(),
        );
        let id = PointFrameChange::identity(FrameId::canonical(), 2, 2);
        let t = transform_christoffels(&field, &id, &coords).unwrap();
        for x in [[0.5, 0.1], [1.5, 3.0], [2.9, -1.0]] {
            assert_eq!(t.eval(&x).unwrap(), field.eval(&x).unwrap());
        }
    }

    #[test]
    fn transform_then_contract_matches_frame_change() {
        let field = tangent_bundle_preset("sphere-levi-civita", None).unwrap();
        let change = PointFrameChange::new(
            FrameId::canonical(),
            FrameId::new("e'"),
            2,
            2,
            |x| dmatrix![1.0 + 0.3 * x[0].sin(), 0.2 * x[1].cos(); 0.1 * x[0], 2.0],
        )
        .with_gradient(|x| {
            vec![
                dmatrix![0.3 * x[0].cos(), 0.0; 0.1, 0.0],
                dmatrix![0.0, -0.2 * x[1].sin(); 0.0, 0.0],
            ]
        });
        let c = 0.1;
        let coords = CoordinateChange::new(
            move |x| dvector![x[0], x[1] + c * x[0] * x[0]],
            move |x| dvector![x[0], x[1] - c * x[0] * x[0]],
            move |x| dmatrix![1.0, 0.0; 2.0 * c * x[0], 1.0],
            field.chart().clone(),
        );
        let t = transform_christoffels(&field, &change, &coords).unwrap();
        let j = Interval::new(0.0, 1.0).unwrap();
        let path = PathSpec::chart(
            j,
            2,
            |s| dvector![0.8 + 0.5 * s * s, 2.0 * s],
            Some(Arc::new(|s| dvector![s, 2.0])),
        )
        .unwrap();
        let lhs = path_coefficients(&t, &coords.transform_path(&path).unwrap()).unwrap();
        let rhs = change_frame_coeffs(
            &path_coefficients(&field, &path).unwrap(),
            &change.along_path(&path).unwrap(),
        )
        .unwrap();
        for s in j.linspace(9) {
            assert!(linalg::norm_inf(&(lhs.eval(s).unwrap() - rhs.eval(s).unwrap())) < 1e-12);
        }
    }

    #[test]
    fn flat_holonomy_is_identity() {
        let field = tangent_bundle_preset("flat-euclidean", None).unwrap();
        let j = Interval::new(0.0, 2.0 * PI).unwrap();
        let circle = PathSpec::chart(
            j,
            2,
            |s| dvector![s.cos(), s.sin()],
            Some(Arc::new(|s| dvector![-s.sin(), s.cos()])),
        )
        .unwrap();
        let h = holonomy(&field, &circle, 1e-2).unwrap();
        assert_eq!(h.defect_norm, 0.0);
        assert_eq!(h.angle, Some(0.0));
    }

    #[test]
    fn latitude_holonomy_angle() {
        let field = tangent_bundle_preset("sphere-levi-civita", None).unwrap();
        for th in [PI / 6.0, PI / 3.0, PI / 2.0] {
            let h = holonomy(&field, &sphere_latitude_loop(th).unwrap(), 1e-3).unwrap();
            let expected = 2.0 * PI * (1.0 - th.cos());
            assert!(
                wrap(h.angle.unwrap() - expected).abs() < 1e-6,
                "θ₀ = {th}: {:?}",
                h.angle
            );
        }
    }

    #[test]
    fn reversed_loop_gives_inverse() {
        let field = tangent_bundle_preset("sphere-levi-civita", None).unwrap();
        let lp = sphere_latitude_loop(1.0).unwrap();
        let fwd = holonomy(&field, &lp, 1e-3).unwrap();
        let back = holonomy(&field, &lp.reversed(), 1e-3).unwrap();
        assert!(linalg::identity_defect(&(fwd.matrix * back.matrix)) < 1e-8);
    }

    #[test]
    fn open_loop_is_rejected() {
        let field = tangent_bundle_preset("sphere-levi-civita", None).unwrap();
        let j = Interval::new(0.0, 1.0).unwrap();
        let arc = PathSpec::chart(j, 2, |s| dvector![1.0, s], None).unwrap();
        assert!(matches!(holonomy(&field, &arc, 1e-3), Err(Error::OpenLoop { .. })));
    }

    #[test]
    fn metric_is_preserved_on_sphere() {
        let field = tangent_bundle_preset("sphere-levi-civita", None).unwrap();
        let j = Interval::new(0.0, 3.0).unwrap();
        let p = PathSpec::chart(j, 2, |s| dvector![0.6 + 0.4 * s.sin(), 1.5 * s], None).unwrap();
        let drift = metric_drift(&field, &p, 1e-3, &dvector![1.0, 0.3], &dvector![-0.2, 2.0], 31).unwrap();
        assert!(drift < 1e-6, "{drift:e}");
    }

    #[test]
    fn chart_gap_wraps_periodic_axes() {
        let chart = Chart::new("c", vec![0.0, 0.0], vec![1.0, 1.0])
            .unwrap()
            .with_period(1, 2.0 * PI);
        assert!(chart.gap(&[0.5, 0.0], &[0.5, 2.0 * PI]) < 1e-15);
        assert!((chart.gap(&[0.5, 0.0], &[0.5, 1.0]) - 1.0).abs() < 1e-15);
        assert!(chart.contains(&[0.5, 100.0]));
        assert!(!chart.contains(&[1.5, 0.0]));
    }
}
