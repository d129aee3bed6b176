//! Domain types shared by every module, plus the transports that need no
//! integration: Euclidean transports, direct sums and tensor products.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

pub(crate) type ScalarMatFn = Arc<dyn Fn(f64) -> Result<Matrix> + Send + Sync>;
pub(crate) type ScalarVecFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

/// Opaque frame identifier. Matrices and components are only meaningful
/// together with the frame they are expressed in.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FrameId(Arc<str>);

impl FrameId {
    pub fn new(name: impl AsRef<str>) -> Self {
        Self(Arc::from(name.as_ref()))
    }

    /// The default frame of freshly constructed objects.
    pub fn canonical() -> Self {
        Self::new("e")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub(crate) fn expect(&self, found: &FrameId) -> Result<()> {
        if self == found {
            Ok(())
        } else {
            Err(Error::FrameMismatch {
                expected: self.clone(),
                found: found.clone(),
            })
        }
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FrameId({})", self.0)
    }
}

impl Default for FrameId {
    fn default() -> Self {
        Self::canonical()
    }
}

/// Closed parameter interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    fn slack(&self) -> f64 {
        1e-12 * self.length().max(1.0)
    }

    pub fn contains(&self, s: f64) -> bool {
        s.is_finite() && s >= self.lo - self.slack() && s <= self.hi + self.slack()
    }

    pub fn check(&self, s: f64) -> Result<()> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(Error::OutOfInterval {
                param: s,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    /// Clamps a parameter that passed [`Interval::check`] onto `[lo, hi]`.
    pub(crate) fn clamp(&self, s: f64) -> f64 {
        s.clamp(self.lo, self.hi)
    }

    pub fn linspace(&self, count: usize) -> Vec<f64> {
        linalg::linspace(self.lo, self.hi, count)
    }
}

/// Coordinate representation of a path, when the base has a chart.
#[derive(Clone)]
pub enum PathForm {
    /// Only the parameter interval is known; coefficients are supplied
    /// directly.
    Abstract,
    Chart {
        dim_base: usize,
        position: ScalarVecFn,
        velocity: ScalarVecFn,
    },
}

/// A parameterized path `γ: J → B`.
#[derive(Clone)]
pub struct PathSpec {
    pub interval: Interval,
    pub form: PathForm,
}

impl fmt::Debug for PathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let form = match &self.form {
            PathForm::Abstract => "Abstract".to_string(),
            PathForm::Chart { dim_base, .. } => format!("Chart(m={dim_base})"),
        };
        f.debug_struct("PathSpec")
            .field("interval", &self.interval)
            .field("form", &form)
            .finish()
    }
}

impl PathSpec {
    pub fn abstract_path(interval: Interval) -> Self {
        Self {
            interval,
            form: PathForm::Abstract,
        }
    }

    /// A path in chart coordinates. Without an explicit velocity the
    /// derivative of `position` is taken by fourth-order central differences.
    pub fn chart<P>(interval: Interval, dim_base: usize, position: P, velocity: Option<ScalarVecFn>) -> Result<Self>
    where
        P: Fn(f64) -> Vector + Send + Sync + 'static,
    {
        if dim_base == 0 {
            return Err(Error::InvalidDimension("base dimension must be >= 1".into()));
        }
        let position: ScalarVecFn = Arc::new(position);
        let velocity = match velocity {
            Some(v) => v,
            None => {
                let pos = position.clone();
                let h = interval.length() * 1e-3;
                Arc::new(move |s: f64| {
                    (pos(s - 2.0 * h) - pos(s + 2.0 * h) + 8.0 * (pos(s + h) - pos(s - h))) / (12.0 * h)
                })
            }
        };
        Ok(Self {
            interval,
            form: PathForm::Chart {
                dim_base,
                position,
                velocity,
            },
        })
    }

    pub fn dim_base(&self) -> Option<usize> {
        match &self.form {
            PathForm::Abstract => None,
            PathForm::Chart { dim_base, .. } => Some(*dim_base),
        }
    }

    pub fn position(&self, s: f64) -> Option<Vector> {
        match &self.form {
            PathForm::Abstract => None,
            PathForm::Chart { position, .. } => Some(position(s)),
        }
    }

    pub fn velocity(&self, s: f64) -> Option<Vector> {
        match &self.form {
            PathForm::Abstract => None,
            PathForm::Chart { velocity, .. } => Some(velocity(s)),
        }
    }

    /// Maximum discrepancy between the declared velocity and a central
    /// difference of the position over `samples` points. Fails when it
    /// exceeds `tol`.
    pub fn validate_velocity(&self, samples: usize, tol: f64) -> Result<f64> {
        let PathForm::Chart { position, velocity, .. } = &self.form else {
            return Ok(0.0);
        };
        let h = self.interval.length() * 1e-4;
        let mut worst = 0.0_f64;
        for s in self.interval.linspace(samples.max(2)) {
            let fd = (position(s + h) - position(s - h)) / (2.0 * h);
            worst = worst.max(linalg::vec_norm_inf(&(fd - velocity(s))));
        }
        if worst > tol {
            return Err(Error::InvalidArgument(format!(
                "path velocity disagrees with the derivative of its position by {worst:e}"
            )));
        }
        Ok(worst)
    }

    /// The same image traversed backwards over the same interval.
    pub fn reversed(&self) -> Self {
        let lo = self.interval.lo;
        let hi = self.interval.hi;
        let form = match &self.form {
            PathForm::Abstract => PathForm::Abstract,
            PathForm::Chart {
                dim_base,
                position,
                velocity,
            } => {
                let p = position.clone();
                let v = velocity.clone();
                PathForm::Chart {
                    dim_base: *dim_base,
                    position: Arc::new(move |s| p(lo + hi - s)),
                    velocity: Arc::new(move |s| -v(lo + hi - s)),
                }
            }
        };
        Self {
            interval: self.interval,
            form,
        }
    }
}

/// A vector in the fiber over `γ(param)`, by its components in a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberVector {
    pub components: Vector,
    pub frame_id: FrameId,
    pub param: f64,
}

impl FiberVector {
    pub fn new(components: Vector, frame_id: FrameId, param: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDimension("fiber vector must be non-empty".into()));
        }
        if components.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                param,
                context: "fiber vector components".into(),
            });
        }
        Ok(Self {
            components,
            frame_id,
            param,
        })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }
}

/// Matrix of the transport from the fiber at `from_param` to the fiber at
/// `to_param`: `u ↦ H u` on components.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMatrix {
    pub matrix: Matrix,
    pub to_param: f64,
    pub from_param: f64,
    pub frame_id: FrameId,
}

impl TransportMatrix {
    pub fn new(matrix: Matrix, to_param: f64, from_param: f64, frame_id: FrameId) -> Result<Self> {
        if !matrix.is_square() || matrix.is_empty() {
            return Err(Error::InvalidDimension(format!(
                "transport matrix must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        linalg::ensure_invertible(&matrix, "transport matrix")?;
        Ok(Self {
            matrix,
            to_param,
            from_param,
            frame_id,
        })
    }

    pub fn identity(dim: usize, param: f64, frame_id: FrameId) -> Self {
        Self {
            matrix: Matrix::identity(dim, dim),
            to_param: param,
            from_param: param,
            frame_id,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `self ∘ earlier`: transport along `earlier` first, then along `self`.
    pub fn compose(&self, earlier: &TransportMatrix) -> Result<TransportMatrix> {
        self.frame_id.expect(&earlier.frame_id)?;
        if self.from_param != earlier.to_param {
            return Err(Error::ParamMismatch(format!(
                "cannot compose: {} -> {} after {} -> {}",
                self.from_param, self.to_param, earlier.from_param, earlier.to_param
            )));
        }
        if self.dim() != earlier.dim() {
            return Err(Error::InvalidDimension("composition of different dimensions".into()));
        }
        Ok(TransportMatrix {
            matrix: &self.matrix * &earlier.matrix,
            to_param: self.to_param,
            from_param: earlier.from_param,
            frame_id: self.frame_id.clone(),
        })
    }

    pub fn apply(&self, u: &FiberVector) -> Result<FiberVector> {
        self.frame_id.expect(&u.frame_id)?;
        if u.param != self.from_param {
            return Err(Error::ParamMismatch(format!(
                "vector lives at {}, transport starts at {}",
                u.param, self.from_param
            )));
        }
        if u.dim() != self.dim() {
            return Err(Error::InvalidDimension(format!(
                "vector of dimension {} for a rank-{} transport",
                u.dim(),
                self.dim()
            )));
        }
        Ok(FiberVector {
            components: &self.matrix * &u.components,
            frame_id: self.frame_id.clone(),
            param: self.to_param,
        })
    }
}

/// Declared continuity class of a parameter-dependent quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Continuous,
    C1,
    Smooth,
}

/// `s ↦ Γ(s)`, the coefficient matrix of a transport along a path.
#[derive(Clone)]
pub struct CoefficientField {
    dim: usize,
    frame_id: FrameId,
    smoothness: Smoothness,
    eval: ScalarMatFn,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dim", &self.dim)
            .field("frame_id", &self.frame_id)
            .field("smoothness", &self.smoothness)
            .finish_non_exhaustive()
    }
}

impl CoefficientField {
    pub fn from_fn<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64) -> Matrix + Send + Sync + 'static,
    {
        Self::try_from_fn(dim, move |s| Ok(f(s)))
    }

    pub fn try_from_fn<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64) -> Result<Matrix> + Send + Sync + 'static,
    {
        Self {
            dim,
            frame_id: FrameId::canonical(),
            smoothness: Smoothness::Smooth,
            eval: Arc::new(f),
        }
    }

    pub fn constant(m: Matrix) -> Self {
        let dim = m.nrows();
        Self::from_fn(dim, move |_| m.clone())
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_fn(dim, move |_| Matrix::zeros(dim, dim))
    }

    pub fn polynomial(p: crate::poly::PolyMatrix) -> Result<Self> {
        let (r, c) = p.shape();
        if r != c {
            return Err(Error::InvalidDimension(format!(
                "coefficient matrix must be square, got {r}x{c}"
            )));
        }
        Ok(Self::from_fn(r, move |s| p.eval(s)))
    }

    pub fn with_frame(mut self, frame_id: FrameId) -> Self {
        self.frame_id = frame_id;
        self
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = smoothness;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_id(&self) -> &FrameId {
        &self.frame_id
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn eval(&self, s: f64) -> Result<Matrix> {
        let m = (self.eval)(s)?;
        if m.shape() != (self.dim, self.dim) {
            return Err(Error::InvalidDimension(format!(
                "coefficient field returned {}x{} at s = {s}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                self.dim,
                self.dim
            )));
        }
        if !linalg::all_finite(&m) {
            return Err(Error::NonFinite {
                param: s,
                context: "coefficient evaluation".into(),
            });
        }
        Ok(m)
    }
}

/// `s ↦ F(s)`, invertible matrices factorizing a transport as
/// `H(t, s) = F(t)⁻¹ F(s)`.
#[derive(Clone)]
pub struct FrameFamily {
    dim: usize,
    frame_id: FrameId,
    eval: ScalarMatFn,
    derivative: Option<ScalarMatFn>,
}

impl fmt::Debug for FrameFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameFamily")
            .field("dim", &self.dim)
            .field("frame_id", &self.frame_id)
            .field("has_derivative", &self.derivative.is_some())
            .finish_non_exhaustive()
    }
}

impl FrameFamily {
    pub fn from_fn<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64) -> Matrix + Send + Sync + 'static,
    {
        Self {
            dim,
            frame_id: FrameId::canonical(),
            eval: Arc::new(move |s| Ok(f(s))),
            derivative: None,
        }
    }

    pub fn with_derivative<F>(mut self, df: F) -> Self
    where
        F: Fn(f64) -> Matrix + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(move |s| Ok(df(s))));
        self
    }

    pub fn with_frame(mut self, frame_id: FrameId) -> Self {
        self.frame_id = frame_id;
        self
    }

    pub fn polynomial(p: crate::poly::PolyMatrix) -> Result<Self> {
        let (r, c) = p.shape();
        if r != c {
            return Err(Error::InvalidDimension(format!(
                "frame matrix must be square, got {r}x{c}"
            )));
        }
        let dp = p.derivative();
        Ok(Self::from_fn(r, move |s| p.eval(s)).with_derivative(move |s| dp.eval(s)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_id(&self) -> &FrameId {
        &self.frame_id
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    /// `F(s)`, rejected when ill-conditioned.
    pub fn eval(&self, s: f64) -> Result<Matrix> {
        let m = (self.eval)(s)?;
        if m.shape() != (self.dim, self.dim) {
            return Err(Error::InvalidDimension(format!(
                "frame family returned {}x{} at s = {s}",
                m.nrows(),
                m.ncols()
            )));
        }
        linalg::ensure_invertible(&m, &format!("frame family at s = {s}"))?;
        Ok(m)
    }

    /// `dF/ds`, declared or by central differences with step `h`.
    pub fn derivative(&self, s: f64, h: f64) -> Result<Matrix> {
        match &self.derivative {
            Some(d) => d(s),
            None => Ok(((self.eval)(s + h)? - (self.eval)(s - h)?) / (2.0 * h)),
        }
    }

    /// `D · F(s)` for a constant matrix `D`.
    pub fn left_scaled(&self, d: Matrix) -> Self {
        let f = self.eval.clone();
        let d2 = d.clone();
        let derivative = self
            .derivative
            .clone()
            .map(|df| -> ScalarMatFn { Arc::new(move |s| Ok(&d2 * df(s)?)) });
        Self {
            dim: self.dim,
            frame_id: self.frame_id.clone(),
            eval: Arc::new(move |s| Ok(&d * f(s)?)),
            derivative,
        }
    }
}

/// How a [`Section`] obtains its parameter derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeSource {
    /// Supplied analytically by the caller.
    Declared,
    /// Central differences of the component function.
    FiniteDifference,
    /// Differentiation of a cubic spline through grid samples; reduced
    /// accuracy.
    Spline,
}

/// A section along the path, by its components `s ↦ σ(s)` in a frame.
#[derive(Clone)]
pub struct Section {
    dim: usize,
    frame_id: FrameId,
    interval: Interval,
    components: ScalarVecFn,
    derivative: Option<ScalarVecFn>,
    source: DerivativeSource,
}

impl fmt::Debug for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Section")
            .field("dim", &self.dim)
            .field("frame_id", &self.frame_id)
            .field("interval", &self.interval)
            .field("derivative", &self.source)
            .finish_non_exhaustive()
    }
}

impl Section {
    pub fn new<F>(dim: usize, interval: Interval, f: F) -> Self
    where
        F: Fn(f64) -> Vector + Send + Sync + 'static,
    {
        Self {
            dim,
            frame_id: FrameId::canonical(),
            interval,
            components: Arc::new(f),
            derivative: None,
            source: DerivativeSource::FiniteDifference,
        }
    }

    pub fn with_derivative<F>(mut self, df: F) -> Self
    where
        F: Fn(f64) -> Vector + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(df));
        self.source = DerivativeSource::Declared;
        self
    }

    pub fn with_frame(mut self, frame_id: FrameId) -> Self {
        self.frame_id = frame_id;
        self
    }

    pub fn constant(components: Vector, interval: Interval) -> Self {
        let dim = components.len();
        let c = components.clone();
        Self::new(dim, interval, move |_| c.clone()).with_derivative(move |_| Vector::zeros(dim))
    }

    /// `coeffs[i]` holds the ascending-power coefficients of component `i`.
    pub fn polynomial(coeffs: Vec<Vec<f64>>, interval: Interval) -> Self {
        let dim = coeffs.len();
        let c = coeffs.clone();
        let value =
            move |s: f64| Vector::from_iterator(dim, c.iter().map(|p| p.iter().rev().fold(0.0, |a, x| a * s + x)));
        let derivative = move |s: f64| {
            Vector::from_iterator(
                dim,
                coeffs.iter().map(|p| {
                    p.iter()
                        .enumerate()
                        .skip(1)
                        .rev()
                        .fold(0.0, |a, (k, x)| a * s + k as f64 * x)
                }),
            )
        };
        Self::new(dim, interval, value).with_derivative(derivative)
    }

    /// A section known only at grid points, interpolated per component by a
    /// natural cubic spline. The grid must cover the interval.
    pub fn from_grid(grid: &[f64], values: &[Vector], interval: Interval) -> Result<Self> {
        if grid.len() < 3 || grid.len() != values.len() {
            return Err(Error::InvalidArgument(
                "spline sections need at least three grid points with one value each".into(),
            ));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
        }
        if grid[0] > interval.lo() || grid[grid.len() - 1] < interval.hi() {
            return Err(Error::InvalidArgument("grid does not cover the interval".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidDimension("grid values differ in dimension".into()));
        }
        let splines: Arc<Vec<CubicSpline>> = Arc::new(
            (0..dim)
                .map(|i| CubicSpline::natural(grid, &values.iter().map(|v| v[i]).collect::<Vec<_>>()))
                .collect(),
        );
        let sv = splines.clone();
        let mut section = Self::new(dim, interval, move |s| {
            Vector::from_iterator(dim, sv.iter().map(|sp| sp.value(s)))
        })
        .with_derivative(move |s| Vector::from_iterator(dim, splines.iter().map(|sp| sp.slope(s))));
        section.source = DerivativeSource::Spline;
        Ok(section)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_id(&self) -> &FrameId {
        &self.frame_id
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn derivative_source(&self) -> DerivativeSource {
        self.source
    }

    pub fn value(&self, s: f64) -> Vector {
        (self.components)(s)
    }

    /// `dσ/ds`. Undeclared derivatives use fourth-order five-point stencils
    /// with `h = 1e-3 · |J|`: central in the interior, one-sided within
    /// `2h` of an end.
    pub fn derivative(&self, s: f64) -> Result<Vector> {
        self.interval.check(s)?;
        if let Some(d) = &self.derivative {
            return Ok(d(s));
        }
        let d = five_point_derivative(self.components.as_ref(), self.interval, s);
        if d.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                param: s,
                context: "section derivative".into(),
            });
        }
        Ok(d)
    }

    /// `λ₁σ₁ + λ₂σ₂`; derivatives combine linearly.
    pub fn linear_combination(l1: f64, s1: &Section, l2: f64, s2: &Section) -> Result<Section> {
        s1.frame_id.expect(&s2.frame_id)?;
        if s1.dim != s2.dim {
            return Err(Error::InvalidDimension("sections of different dimensions".into()));
        }
        let (a, b) = (s1.clone(), s2.clone());
        let (da, db) = (s1.clone(), s2.clone());
        Ok(Section {
            dim: s1.dim,
            frame_id: s1.frame_id.clone(),
            interval: s1.interval,
            components: Arc::new(move |s| a.value(s) * l1 + b.value(s) * l2),
            derivative: Some(Arc::new(move |s| {
                da.derivative(s)
                    .unwrap_or_else(|_| Vector::from_element(da.dim, f64::NAN))
                    * l1
                    + db.derivative(s)
                        .unwrap_or_else(|_| Vector::from_element(db.dim, f64::NAN))
                        * l2
            })),
            source: s1.source.max_loss(s2.source),
        })
    }

    /// `f · σ` with derivative `f′σ + fσ′`.
    pub fn scaled<F, DF>(&self, f: F, df: DF) -> Section
    where
        F: Fn(f64) -> f64 + Send + Sync + Clone + 'static,
        DF: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let a = self.clone();
        let da = self.clone();
        let f2 = f.clone();
        Section {
            dim: self.dim,
            frame_id: self.frame_id.clone(),
            interval: self.interval,
            components: Arc::new(move |s| a.value(s) * f(s)),
            derivative: Some(Arc::new(move |s| {
                let d = da
                    .derivative(s)
                    .unwrap_or_else(|_| Vector::from_element(da.dim, f64::NAN));
                da.value(s) * df(s) + d * f2(s)
            })),
            source: self.source,
        }
    }
}

impl DerivativeSource {
    fn max_loss(self, other: DerivativeSource) -> DerivativeSource {
        use DerivativeSource::*;
        match (self, other) {
            (Spline, _) | (_, Spline) => Spline,
            (FiniteDifference, _) | (_, FiniteDifference) => FiniteDifference,
            _ => Declared,
        }
    }
}

/// Fourth-order derivative of `f` at `s`, staying inside `interval`.
/// Differences are taken against `f(s)` so constants give exactly zero.
fn five_point_derivative(f: &(dyn Fn(f64) -> Vector + Send + Sync), interval: Interval, s: f64) -> Vector {
    let h = 1e-3 * interval.length();
    let f0 = f(s);
    let df = |k: f64, d: f64| f(s + k * d) - &f0;
    if s - 2.0 * h >= interval.lo() && s + 2.0 * h <= interval.hi() {
        ((df(1.0, h) - df(-1.0, h)) * 8.0 - (df(2.0, h) - df(-2.0, h))) / (12.0 * h)
    } else {
        let d = if s - 2.0 * h < interval.lo() { h } else { -h };
        (df(1.0, d) * 48.0 - df(2.0, d) * 36.0 + df(3.0, d) * 16.0 - df(4.0, d) * 3.0) / (12.0 * d)
    }
}

struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    fn natural(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        let mut m = vec![0.0; n];
        // Tridiagonal system for interior second derivatives (Thomas algorithm).
        let mut c_prime = vec![0.0; n];
        let mut d_prime = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let a = h0;
            let b = 2.0 * (h0 + h1);
            let c = h1;
            let d = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            let denom = b - a * c_prime[i - 1];
            c_prime[i] = c / denom;
            d_prime[i] = (d - a * d_prime[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = d_prime[i] - c_prime[i] * m[i + 1];
        }
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    fn segment(&self, s: f64) -> usize {
        let k = self.x.partition_point(|&g| g <= s);
        k.clamp(1, self.x.len() - 1) - 1
    }

    fn value(&self, s: f64) -> f64 {
        let k = self.segment(s);
        let h = self.x[k + 1] - self.x[k];
        let a = (self.x[k + 1] - s) / h;
        let b = (s - self.x[k]) / h;
        a * self.y[k]
            + b * self.y[k + 1]
            + ((a * a * a - a) * self.m[k] + (b * b * b - b) * self.m[k + 1]) * h * h / 6.0
    }

    fn slope(&self, s: f64) -> f64 {
        let k = self.segment(s);
        let h = self.x[k + 1] - self.x[k];
        let a = (self.x[k + 1] - s) / h;
        let b = (s - self.x[k]) / h;
        (self.y[k + 1] - self.y[k]) / h
            + (-(3.0 * a * a - 1.0) * self.m[k] + (3.0 * b * b - 1.0) * self.m[k + 1]) * h / 6.0
    }
}

/// Change of frame `e′_i(s) = A^j_i(s) e_j(s)`: column `i` of `A(s)` holds
/// the components of the new basis vector `e′_i` in the old frame.
#[derive(Clone)]
pub struct FrameChange {
    from: FrameId,
    to: FrameId,
    dim: usize,
    eval: ScalarMatFn,
    derivative: Option<ScalarMatFn>,
    fd_length: f64,
}

impl fmt::Debug for FrameChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameChange")
            .field("from", &self.from)
            .field("to", &self.to)
            .field("dim", &self.dim)
            .field("has_derivative", &self.derivative.is_some())
            .finish_non_exhaustive()
    }
}

impl FrameChange {
    pub fn new<F>(from: FrameId, to: FrameId, dim: usize, f: F) -> Self
    where
        F: Fn(f64) -> Matrix + Send + Sync + 'static,
    {
        Self::try_new(from, to, dim, move |s| Ok(f(s)))
    }

    pub(crate) fn try_new<F>(from: FrameId, to: FrameId, dim: usize, f: F) -> Self
    where
        F: Fn(f64) -> Result<Matrix> + Send + Sync + 'static,
    {
        Self {
            from,
            to,
            dim,
            eval: Arc::new(f),
            derivative: None,
            fd_length: 1.0,
        }
    }

    pub fn constant(from: FrameId, to: FrameId, a: Matrix) -> Self {
        let dim = a.nrows();
        Self::new(from, to, dim, move |_| a.clone()).with_derivative(move |_| Matrix::zeros(dim, dim))
    }

    pub fn with_derivative<F>(mut self, df: F) -> Self
    where
        F: Fn(f64) -> Matrix + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(move |s| Ok(df(s))));
        self
    }

    pub(crate) fn with_try_derivative<F>(mut self, df: F) -> Self
    where
        F: Fn(f64) -> Result<Matrix> + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(df));
        self
    }

    /// Scales the finite-difference step used when no derivative is
    /// declared: `h = length · 1e-6`.
    pub fn with_fd_interval(mut self, interval: Interval) -> Self {
        self.fd_length = interval.length();
        self
    }

    pub fn from_frame(&self) -> &FrameId {
        &self.from
    }

    pub fn to_frame(&self) -> &FrameId {
        &self.to
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    /// `A(s)`, rejected when ill-conditioned.
    pub fn eval(&self, s: f64) -> Result<Matrix> {
        let a = (self.eval)(s)?;
        if a.shape() != (self.dim, self.dim) {
            return Err(Error::InvalidDimension(format!(
                "frame change returned {}x{} at s = {s}",
                a.nrows(),
                a.ncols()
            )));
        }
        linalg::ensure_invertible(&a, &format!("frame change at s = {s}"))?;
        Ok(a)
    }

    /// `dA/ds`, declared or by central differences with `h = |J| · 1e-6`.
    pub fn derivative(&self, s: f64) -> Result<Matrix> {
        match &self.derivative {
            Some(d) => d(s),
            None => {
                let h = self.fd_length * 1e-6;
                Ok(((self.eval)(s + h)? - (self.eval)(s - h)?) / (2.0 * h))
            }
        }
    }

    /// Pointwise inverse change, from the new frame back to the old one.
    pub fn inverse(&self) -> FrameChange {
        let me = self.clone();
        let me_d = self.clone();
        FrameChange {
            from: self.to.clone(),
            to: self.from.clone(),
            dim: self.dim,
            eval: Arc::new(move |s| linalg::invert(&me.eval(s)?, "inverse frame change")),
            derivative: Some(Arc::new(move |s| {
                let inv = linalg::invert(&me_d.eval(s)?, "inverse frame change")?;
                Ok(-(&inv * me_d.derivative(s)? * &inv))
            })),
            fd_length: self.fd_length,
        }
    }

    /// Change by `self`, then by `next`: the product `A(s) B(s)`.
    pub fn then(&self, next: &FrameChange) -> Result<FrameChange> {
        self.to.expect(&next.from)?;
        if self.dim != next.dim {
            return Err(Error::InvalidDimension("frame changes of different dimensions".into()));
        }
        let (a, b) = (self.clone(), next.clone());
        let (da, db) = (self.clone(), next.clone());
        Ok(FrameChange {
            from: self.from.clone(),
            to: next.to.clone(),
            dim: self.dim,
            eval: Arc::new(move |s| Ok(a.eval(s)? * b.eval(s)?)),
            derivative: Some(Arc::new(move |s| {
                Ok(da.derivative(s)? * db.eval(s)? + da.eval(s)? * db.derivative(s)?)
            })),
            fd_length: self.fd_length.min(next.fd_length),
        })
    }

    /// Compares a declared derivative with central differences of `A`;
    /// returns the largest discrepancy or fails above `tol`.
    pub fn validate_derivative(&self, interval: Interval, samples: usize, tol: f64) -> Result<f64> {
        let Some(d) = &self.derivative else {
            return Ok(0.0);
        };
        let h = interval.length() * 1e-5;
        let mut worst = 0.0_f64;
        for s in interval.linspace(samples.max(2)) {
            let fd = ((self.eval)(s + h)? - (self.eval)(s - h)?) / (2.0 * h);
            worst = worst.max(linalg::norm_inf(&(fd - d(s)?)));
        }
        if worst > tol {
            return Err(Error::InvalidArgument(format!(
                "declared frame-change derivative disagrees with finite differences by {worst:e}"
            )));
        }
        Ok(worst)
    }
}

/// The transport generated by a frame: its matrix is the identity between
/// any two parameters.
#[derive(Debug, Clone)]
pub struct EuclideanTransport {
    dim: usize,
    frame_id: FrameId,
    interval: Interval,
}

impl EuclideanTransport {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_id(&self) -> &FrameId {
        &self.frame_id
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn with_frame(mut self, frame_id: FrameId) -> Self {
        self.frame_id = frame_id;
        self
    }

    /// Interval used when sampling parameters; the matrix itself is defined
    /// for every pair.
    pub fn with_interval(mut self, interval: Interval) -> Self {
        self.interval = interval;
        self
    }

    pub fn matrix(&self, t: f64, s: f64) -> TransportMatrix {
        TransportMatrix {
            matrix: Matrix::identity(self.dim, self.dim),
            to_param: t,
            from_param: s,
            frame_id: self.frame_id.clone(),
        }
    }
}

pub fn euclidean_transport(dim: usize) -> Result<EuclideanTransport> {
    if dim == 0 {
        return Err(Error::InvalidDimension("fiber dimension must be >= 1".into()));
    }
    Ok(EuclideanTransport {
        dim,
        frame_id: FrameId::canonical(),
        interval: Interval { lo: 0.0, hi: 1.0 },
    })
}

fn check_same_endpoints(h1: &TransportMatrix, h2: &TransportMatrix) -> Result<()> {
    if h1.to_param != h2.to_param || h1.from_param != h2.from_param {
        return Err(Error::ParamMismatch(format!(
            "({} <- {}) vs ({} <- {})",
            h1.to_param, h1.from_param, h2.to_param, h2.from_param
        )));
    }
    Ok(())
}

/// Block-diagonal `diag(H₁, H₂)` on the direct-sum bundle.
pub fn direct_sum(h1: &TransportMatrix, h2: &TransportMatrix) -> Result<TransportMatrix> {
    check_same_endpoints(h1, h2)?;
    Ok(TransportMatrix {
        matrix: linalg::block_diag(&h1.matrix, &h2.matrix),
        to_param: h1.to_param,
        from_param: h1.from_param,
        frame_id: FrameId::new(format!("({})⊕({})", h1.frame_id, h2.frame_id)),
    })
}

/// Kronecker product `H₁ ⊗ H₂` on the tensor-product bundle.
pub fn tensor_product(h1: &TransportMatrix, h2: &TransportMatrix) -> Result<TransportMatrix> {
    check_same_endpoints(h1, h2)?;
    Ok(TransportMatrix {
        matrix: linalg::kron(&h1.matrix, &h2.matrix),
        to_param: h1.to_param,
        from_param: h1.from_param,
        frame_id: FrameId::new(format!("({})⊗({})", h1.frame_id, h2.frame_id)),
    })
}
