//! Reconstruction of transports from their coefficients, application to
//! vectors, transports given by frame families, and numerical checks of the
//! transport axioms.
//!
//! The matrix of a transport with coefficients `Γ` is recovered from the
//! fundamental solution `Y(s) = Y(s, s₀; -Γ)` of
//!
//! ```text
//! dY/ds = -Γ(s) Y,   Y(s₀) = I
//! ```
//!
//! as `H(t, s) = Y(t) Y(s)⁻¹`. The result does not depend on `s₀`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundle::{
    CoefficientField, EuclideanTransport, FiberVector, FrameFamily, FrameId, Interval, TransportMatrix,
};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Integrator order of the fixed-step scheme.
pub const INTEGRATOR_ORDER: u32 = 4;

/// Default maximum integrator step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Relative tolerance for "this matrix function is constant" decisions.
pub const CONSTANCY_TOL: f64 = 1e-8;

/// Anything that can produce transport matrices `H(t, s)` in a fixed frame.
///
/// Implementations must be safe to query concurrently.
pub trait TransportSource: Send + Sync {
    fn dim(&self) -> usize;

    fn frame_id(&self) -> &FrameId;

    /// Parameters are sampled from this interval by the checks.
    fn interval(&self) -> Interval;

    /// Matrix of the transport from the fiber at `s` to the fiber at `t`.
    fn matrix(&self, t: f64, s: f64) -> Result<Matrix>;

    fn transport(&self, t: f64, s: f64) -> Result<TransportMatrix> {
        Ok(TransportMatrix {
            matrix: self.matrix(t, s)?,
            to_param: t,
            from_param: s,
            frame_id: self.frame_id().clone(),
        })
    }
}

impl TransportSource for EuclideanTransport {
    fn dim(&self) -> usize {
        EuclideanTransport::dim(self)
    }

    fn frame_id(&self) -> &FrameId {
        EuclideanTransport::frame_id(self)
    }

    fn interval(&self) -> Interval {
        EuclideanTransport::interval(self)
    }

    fn matrix(&self, t: f64, s: f64) -> Result<Matrix> {
        Ok(EuclideanTransport::matrix(self, t, s).matrix)
    }
}

/// `Y(s, s₀; -Γ)` sampled on a grid, with cubic Hermite dense output between
/// grid points.
#[derive(Clone)]
pub struct FundamentalSolution {
    base_param: f64,
    interval: Interval,
    step: f64,
    grid: Vec<f64>,
    values: Vec<Matrix>,
    slopes: Vec<Matrix>,
    coeffs: CoefficientField,
}

impl fmt::Debug for FundamentalSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FundamentalSolution")
            .field("base_param", &self.base_param)
            .field("interval", &self.interval)
            .field("step", &self.step)
            .field("grid_points", &self.grid.len())
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl FundamentalSolution {
    pub fn base_param(&self) -> f64 {
        self.base_param
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    /// Maximum step requested at construction; actual spacing is at most this.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn coefficients(&self) -> &CoefficientField {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    pub fn frame_id(&self) -> &FrameId {
        self.coeffs.frame_id()
    }

    fn locate(&self, s: f64) -> Result<Located> {
        self.interval.check(s)?;
        let s = self.interval.clamp(s);
        let k = self.grid.partition_point(|&g| g <= s);
        let k = k.clamp(1, self.grid.len() - 1) - 1;
        if s == self.grid[k] {
            return Ok(Located::Node(k));
        }
        if s == self.grid[k + 1] {
            return Ok(Located::Node(k + 1));
        }
        let h = self.grid[k + 1] - self.grid[k];
        Ok(Located::Between(k, h, (s - self.grid[k]) / h))
    }

    /// `Y(s)`; exact stored values on grid points, cubic Hermite between.
    pub fn value(&self, s: f64) -> Result<Matrix> {
        Ok(match self.locate(s)? {
            Located::Node(k) => self.values[k].clone(),
            Located::Between(k, h, tau) => {
                let t2 = tau * tau;
                let t3 = t2 * tau;
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + tau;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                &self.values[k] * h00
                    + &self.slopes[k] * (h10 * h)
                    + &self.values[k + 1] * h01
                    + &self.slopes[k + 1] * (h11 * h)
            }
        })
    }

    /// `dY/ds` of the dense output.
    pub fn slope(&self, s: f64) -> Result<Matrix> {
        Ok(match self.locate(s)? {
            Located::Node(k) => self.slopes[k].clone(),
            Located::Between(k, h, tau) => {
                let t2 = tau * tau;
                let d00 = (6.0 * t2 - 6.0 * tau) / h;
                let d10 = 3.0 * t2 - 4.0 * tau + 1.0;
                let d01 = (6.0 * tau - 6.0 * t2) / h;
                let d11 = 3.0 * t2 - 2.0 * tau;
                &self.values[k] * d00 + &self.slopes[k] * d10 + &self.values[k + 1] * d01 + &self.slopes[k + 1] * d11
            }
        })
    }

    pub(crate) fn inverse_value(&self, s: f64) -> Result<Matrix> {
        linalg::invert(&self.value(s)?, &format!("fundamental solution at s = {s}"))
    }
}

enum Located {
    Node(usize),
    Between(usize, f64, f64),
}

impl TransportSource for FundamentalSolution {
    fn dim(&self) -> usize {
        FundamentalSolution::dim(self)
    }

    fn frame_id(&self) -> &FrameId {
        FundamentalSolution::frame_id(self)
    }

    fn interval(&self) -> Interval {
        self.interval
    }

    fn matrix(&self, t: f64, s: f64) -> Result<Matrix> {
        self.interval.check(t)?;
        self.interval.check(s)?;
        if t == s {
            let n = self.dim();
            return Ok(Matrix::identity(n, n));
        }
        Ok(self.value(t)? * self.inverse_value(s)?)
    }
}

fn rk4_step(coeffs: &CoefficientField, s: f64, h: f64, y: &Matrix) -> Result<Matrix> {
    let g0 = coeffs.eval(s)?;
    let gm = coeffs.eval(s + 0.5 * h)?;
    let g1 = coeffs.eval(s + h)?;
    let k1 = -(&g0 * y);
    let k2 = -(&gm * (y + &k1 * (0.5 * h)));
    let k3 = -(&gm * (y + &k2 * (0.5 * h)));
    let k4 = -(&g1 * (y + &k3 * h));
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Integrates from `s0` to `end` in equal steps no longer than `step`.
/// Returns the nodes after `s0` in integration order.
fn integrate_leg(coeffs: &CoefficientField, s0: f64, end: f64, step: f64) -> Result<Vec<(f64, Matrix)>> {
    let span = end - s0;
    if span == 0.0 {
        return Ok(Vec::new());
    }
    let count = (span.abs() / step).ceil().max(1.0) as usize;
    let h = span / count as f64;
    let n = coeffs.dim();
    let mut y = Matrix::identity(n, n);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let s = s0 + k as f64 * h;
        y = rk4_step(coeffs, s, h, &y)?;
        if !linalg::all_finite(&y) {
            return Err(Error::NonFinite {
                param: s + h,
                context: "fundamental solution diverged".into(),
            });
        }
        let node = if k + 1 == count { end } else { s0 + (k + 1) as f64 * h };
        out.push((node, y.clone()));
    }
    Ok(out)
}

/// Solves `dY/ds = -Γ(s) Y`, `Y(s0) = I` over the whole interval with the
/// classical fixed-step fourth-order Runge–Kutta scheme.
pub fn solve_fundamental(
    coeffs: &CoefficientField,
    s0: f64,
    interval: Interval,
    step: f64,
) -> Result<FundamentalSolution> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if coeffs.dim() == 0 {
        return Err(Error::InvalidDimension("fiber dimension must be >= 1".into()));
    }
    interval.check(s0)?;
    let s0 = interval.clamp(s0);
    let n = coeffs.dim();

    let backward = integrate_leg(coeffs, s0, interval.lo(), step)?;
    let forward = integrate_leg(coeffs, s0, interval.hi(), step)?;

    let mut grid = Vec::with_capacity(backward.len() + forward.len() + 1);
    let mut values = Vec::with_capacity(grid.capacity());
    for (s, y) in backward.into_iter().rev() {
        grid.push(s);
        values.push(y);
    }
    grid.push(s0);
    values.push(Matrix::identity(n, n));
    for (s, y) in forward {
        grid.push(s);
        values.push(y);
    }

    let mut slopes = Vec::with_capacity(grid.len());
    for (s, y) in grid.iter().zip(&values) {
        linalg::ensure_invertible(y, &format!("fundamental solution at s = {s}"))?;
        slopes.push(-(coeffs.eval(*s)? * y));
    }

    Ok(FundamentalSolution {
        base_param: s0,
        interval,
        step,
        grid,
        values,
        slopes,
        coeffs: coeffs.clone(),
    })
}

/// Richardson estimate of the error in `coarse`, using `fine` computed with
/// half the step: `max ‖Y_h − Y_{h/2}‖∞ / (2^p − 1)` over the coarse grid.
pub fn richardson_estimate(coarse: &FundamentalSolution, fine: &FundamentalSolution) -> Result<f64> {
    let denom = (2u32.pow(INTEGRATOR_ORDER) - 1) as f64;
    let mut worst = 0.0_f64;
    for (s, y) in coarse.grid.iter().zip(&coarse.values) {
        worst = worst.max(linalg::norm_inf(&(y - fine.value(*s)?)));
    }
    Ok(worst / denom)
}

/// Solves with step halving until the Richardson estimate drops to `tol`.
/// Returns the finest solution and its error estimate.
pub fn solve_fundamental_refined(
    coeffs: &CoefficientField,
    s0: f64,
    interval: Interval,
    step: f64,
    tol: f64,
    max_halvings: u32,
) -> Result<(FundamentalSolution, f64)> {
    let mut coarse = solve_fundamental(coeffs, s0, interval, step)?;
    let mut h = step;
    let mut estimate = f64::INFINITY;
    for _ in 0..=max_halvings {
        h *= 0.5;
        let fine = solve_fundamental(coeffs, s0, interval, h)?;
        estimate = richardson_estimate(&coarse, &fine)?;
        coarse = fine;
        if estimate <= tol {
            break;
        }
    }
    Ok((coarse, estimate))
}

/// `H(t, s) = Y(t) Y(s)⁻¹`, the matrix carrying the fiber at `s` to the
/// fiber at `t`.
pub fn transport_matrix(sol: &FundamentalSolution, t: f64, s: f64) -> Result<TransportMatrix> {
    sol.transport(t, s)
}

/// Transports `u` from `s` to `t`.
pub fn transport_vector(sol: &FundamentalSolution, s: f64, t: f64, u: &FiberVector) -> Result<FiberVector> {
    sol.frame_id().expect(&u.frame_id)?;
    if u.param != s {
        return Err(Error::ParamMismatch(format!(
            "vector lives at {}, transport requested from {s}",
            u.param
        )));
    }
    if u.dim() != sol.dim() {
        return Err(Error::InvalidDimension(format!(
            "vector of dimension {} in a rank-{} bundle",
            u.dim(),
            sol.dim()
        )));
    }
    transport_matrix(sol, t, s)?.apply(u)
}

/// `H(t, s) = F(t)⁻¹ F(s)`.
pub fn matrix_from_frames(frames: &FrameFamily, t: f64, s: f64) -> Result<TransportMatrix> {
    let n = frames.dim();
    let matrix = if t == s {
        Matrix::identity(n, n)
    } else {
        let ft = frames.eval(t)?;
        let fs = frames.eval(s)?;
        linalg::invert(&ft, &format!("frame family at t = {t}"))? * fs
    };
    Ok(TransportMatrix {
        matrix,
        to_param: t,
        from_param: s,
        frame_id: frames.frame_id().clone(),
    })
}

/// A frame family viewed as a transport source on an interval.
#[derive(Debug, Clone)]
pub struct FrameTransport {
    frames: FrameFamily,
    interval: Interval,
}

impl FrameTransport {
    pub fn new(frames: FrameFamily, interval: Interval) -> Self {
        Self { frames, interval }
    }

    pub fn frames(&self) -> &FrameFamily {
        &self.frames
    }
}

impl TransportSource for FrameTransport {
    fn dim(&self) -> usize {
        self.frames.dim()
    }

    fn frame_id(&self) -> &FrameId {
        self.frames.frame_id()
    }

    fn interval(&self) -> Interval {
        self.interval
    }

    fn matrix(&self, t: f64, s: f64) -> Result<Matrix> {
        Ok(matrix_from_frames(&self.frames, t, s)?.matrix)
    }
}

/// Worst-case axiom residuals over sampled parameter triples.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    /// `max ‖H(r,t) H(t,s) − H(r,s)‖∞`
    pub max_composition_residual: f64,
    /// `max ‖H(s,s) − I‖∞`
    pub max_identity_residual: f64,
    /// `max ‖H(t,s) H(s,t) − I‖∞`
    pub max_inverse_residual: f64,
    pub samples: usize,
    pub seed: u64,
}

impl AxiomReport {
    pub fn max_residual(&self) -> f64 {
        self.max_composition_residual
            .max(self.max_identity_residual)
            .max(self.max_inverse_residual)
    }
}

/// Samples `samples` uniform triples `(r, s, t)` from the source's interval
/// with a seeded generator and reports the worst residual of each axiom.
pub fn check_axioms(source: &dyn TransportSource, samples: usize, seed: u64) -> Result<AxiomReport> {
    let interval = source.interval();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = source.dim();
    let eye = Matrix::identity(n, n);
    let mut report = AxiomReport {
        max_composition_residual: 0.0,
        max_identity_residual: 0.0,
        max_inverse_residual: 0.0,
        samples,
        seed,
    };
    for _ in 0..samples {
        let mut draw = || rng.random_range(interval.lo()..=interval.hi());
        let (r, s, t) = (draw(), draw(), draw());
        let h_rt = source.matrix(r, t)?;
        let h_ts = source.matrix(t, s)?;
        let h_rs = source.matrix(r, s)?;
        let h_st = source.matrix(s, t)?;
        let h_ss = source.matrix(s, s)?;
        report.max_composition_residual = report
            .max_composition_residual
            .max(linalg::norm_inf(&(&h_rt * &h_ts - &h_rs)));
        report.max_identity_residual = report.max_identity_residual.max(linalg::norm_inf(&(&h_ss - &eye)));
        report.max_inverse_residual = report
            .max_inverse_residual
            .max(linalg::norm_inf(&(&h_ts * &h_st - &eye)));
    }
    Ok(report)
}

/// Outcome of comparing two frame families.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeComparison {
    pub equivalent: bool,
    /// `D = F₂(s) F₁(s)⁻¹` at the first sample.
    pub witness: Matrix,
    /// Largest `‖D(s) − D(s₁)‖∞ / ‖D(s₁)‖∞` over the samples.
    pub max_deviation: f64,
}

pub(crate) fn constant_ratio(
    f1: &FrameFamily,
    f2: &FrameFamily,
    interval: Interval,
    samples: usize,
) -> Result<GaugeComparison> {
    if f1.dim() != f2.dim() {
        return Err(Error::InvalidDimension(format!(
            "frame families of dimension {} and {}",
            f1.dim(),
            f2.dim()
        )));
    }
    f1.frame_id().expect(f2.frame_id())?;
    let mut witness = None;
    let mut max_deviation = 0.0_f64;
    for s in interval.linspace(samples.max(2)) {
        let d = f2.eval(s)? * linalg::invert(&f1.eval(s)?, &format!("frame family at s = {s}"))?;
        match &witness {
            None => witness = Some(d),
            Some(w) => {
                let scale = linalg::norm_inf(w).max(f64::MIN_POSITIVE);
                max_deviation = max_deviation.max(linalg::norm_inf(&(&d - w)) / scale);
            }
        }
    }
    let witness = witness.expect("at least two samples");
    Ok(GaugeComparison {
        equivalent: max_deviation <= CONSTANCY_TOL,
        witness,
        max_deviation,
    })
}

/// Whether `F₂ = D F₁` for a constant `D`, i.e. both families factorize the
/// same transport.
pub fn gauge_equivalent(
    f1: &FrameFamily,
    f2: &FrameFamily,
    interval: Interval,
    samples: usize,
) -> Result<GaugeComparison> {
    constant_ratio(f1, f2, interval, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::euclidean_transport;
    use nalgebra::{dmatrix, dvector};
    use std::f64::consts::PI;

    fn rotation_coeffs() -> CoefficientField {
        CoefficientField::constant(dmatrix![0.0, -1.0; 1.0, 0.0])
    }

    fn closed_form_rotation(s: f64) -> Matrix {
        dmatrix![s.cos(), s.sin(); -s.sin(), s.cos()]
    }

    #[test]
    fn zero_coefficients_give_identity() {
        let j = Interval::new(0.0, 1.0).unwrap();
        let sol = solve_fundamental(&CoefficientField::zero(3), 0.0, j, 1e-3).unwrap();
        for s in j.linspace(17) {
            assert!(linalg::identity_defect(&sol.value(s).unwrap()) <= 1e-14);
        }
    }

    #[test]
    fn base_value_is_exact_identity() {
        let j = Interval::new(-1.0, 2.0).unwrap();
        let sol = solve_fundamental(&rotation_coeffs(), 0.37, j, 1e-2).unwrap();
        assert_eq!(sol.value(0.37).unwrap(), Matrix::identity(2, 2));
        assert_eq!(sol.grid().first().copied(), Some(-1.0));
        assert_eq!(sol.grid().last().copied(), Some(2.0));
        assert!(sol
            .grid()
            .windows(2)
            .all(|w| w[1] > w[0] && w[1] - w[0] <= 1e-2 + 1e-15));
    }

    #[test]
    fn rotation_matches_closed_form() {
        let j = Interval::new(0.0, 1.0).unwrap();
        let sol = solve_fundamental(&rotation_coeffs(), 0.0, j, 1e-3).unwrap();
        let err = linalg::norm_inf(&(sol.value(1.0).unwrap() - closed_form_rotation(1.0)));
        assert!(err <= 1e-8, "err = {err:e}");
    }

    #[test]
    fn scalar_gaussian() {
        // Oracle: -∫₀ˢ 2u du = -s², so Y(s) = exp(-s²).
        let gamma = CoefficientField::from_fn(1, |s| dmatrix![2.0 * s]);
        let j = Interval::new(0.0, 1.5).unwrap();
        let sol = solve_fundamental(&gamma, 0.0, j, 1e-3).unwrap();
        for s in [0.25, 0.5, 1.0, 1.5, 0.7777] {
            let y = sol.value(s).unwrap()[(0, 0)];
            assert!((y - (-s * s).exp()).abs() < 1e-10, "s = {s}");
        }
    }

    #[test]
    fn quarter_turn_and_half_turn() {
        let j = Interval::new(0.0, PI).unwrap();
        let sol = solve_fundamental(&rotation_coeffs(), 0.0, j, 1e-3).unwrap();
        let h = transport_matrix(&sol, PI / 2.0, 0.0).unwrap();
        assert!(linalg::norm_inf(&(h.matrix - dmatrix![0.0, 1.0; -1.0, 0.0])) < 1e-9);
        assert_eq!(transport_matrix(&sol, 0.4, 0.4).unwrap().matrix, Matrix::identity(2, 2));

        let u = FiberVector::new(dvector![1.0, 0.0], FrameId::canonical(), 0.0).unwrap();
        let v = transport_vector(&sol, 0.0, PI, &u).unwrap();
        assert_eq!(v.param, PI);
        assert!((v.components[0] + 1.0).abs() < 1e-9 && v.components[1].abs() < 1e-9);
    }

    #[test]
    fn independent_of_base_point() {
        let gamma = CoefficientField::from_fn(2, |s| dmatrix![s, -1.0; 1.0 + s * s, 0.5]);
        let j = Interval::new(0.0, 1.0).unwrap();
        let a = solve_fundamental(&gamma, 0.0, j, 1e-3).unwrap();
        let b = solve_fundamental(&gamma, 0.63, j, 1e-3).unwrap();
        for (t, s) in [(0.9, 0.1), (0.2, 0.8), (1.0, 0.0), (0.5, 0.55)] {
            let d = linalg::norm_inf(&(a.matrix(t, s).unwrap() - b.matrix(t, s).unwrap()));
            assert!(d <= 1e-9, "({t}, {s}): {d:e}");
        }
    }

    #[test]
    fn transport_vector_is_linear() {
        let j = Interval::new(0.0, 1.0).unwrap();
        let sol = solve_fundamental(&rotation_coeffs(), 0.0, j, 1e-3).unwrap();
        let f = FrameId::canonical();
        let (l, m) = (0.3, -2.7);
        let u = dvector![1.5, -0.2];
        let v = dvector![0.4, 2.0];
        let w = FiberVector::new(&u * l + &v * m, f.clone(), 0.2).unwrap();
        let tu = transport_vector(&sol, 0.2, 0.9, &FiberVector::new(u, f.clone(), 0.2).unwrap()).unwrap();
        let tv = transport_vector(&sol, 0.2, 0.9, &FiberVector::new(v, f.clone(), 0.2).unwrap()).unwrap();
        let tw = transport_vector(&sol, 0.2, 0.9, &w).unwrap();
        let diff = tw.components - (tu.components * l + tv.components * m);
        assert!(linalg::vec_norm_inf(&diff) <= 1e-12);
    }

    #[test]
    fn transport_errors() {
        let j = Interval::new(0.0, 1.0).unwrap();
        let sol = solve_fundamental(&rotation_coeffs(), 0.0, j, 1e-3).unwrap();
        assert!(matches!(
            transport_matrix(&sol, 1.5, 0.0),
            Err(Error::OutOfInterval { .. })
        ));
        let u = FiberVector::new(dvector![1.0, 0.0], FrameId::new("f"), 0.0).unwrap();
        assert!(matches!(
            transport_vector(&sol, 0.0, 1.0, &u),
            Err(Error::FrameMismatch { .. })
        ));
        let u = FiberVector::new(dvector![1.0, 0.0], FrameId::canonical(), 0.3).unwrap();
        assert!(matches!(
            transport_vector(&sol, 0.0, 1.0, &u),
            Err(Error::ParamMismatch(_))
        ));
    }

    #[test]
    fn non_finite_coefficients_abort_with_parameter() {
        let gamma = CoefficientField::from_fn(1, |s| if s > 0.5 { dmatrix![f64::NAN] } else { dmatrix![0.0] });
        let j = Interval::new(0.0, 1.0).unwrap();
        match solve_fundamental(&gamma, 0.0, j, 0.1) {
            Err(Error::NonFinite { param, .. }) => assert!(param > 0.5 && param <= 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blow_up_is_a_conditioning_error() {
        let gamma = CoefficientField::constant(dmatrix![40.0, 0.0; 0.0, -40.0]);
        let j = Interval::new(0.0, 1.0).unwrap();
        assert!(matches!(
            solve_fundamental(&gamma, 0.0, j, 1e-3),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        let j = Interval::new(0.0, 1.0).unwrap();
        assert!(solve_fundamental(&rotation_coeffs(), 0.0, j, 0.0).is_err());
        assert!(solve_fundamental(&rotation_coeffs(), 2.0, j, 1e-3).is_err());
    }

    #[test]
    fn frames_examples() {
        let f = FrameFamily::from_fn(2, |s| dmatrix![s.exp(), 0.0; 0.0, (2.0 * s).exp()]);
        let h = matrix_from_frames(&f, 1.0, 0.0).unwrap();
        let expected = dmatrix![(-1.0f64).exp(), 0.0; 0.0, (-2.0f64).exp()];
        assert!(linalg::norm_inf(&(h.matrix.clone() - expected)) < 1e-15);

        let scaled = f.left_scaled(dmatrix![2.0, 1.0; 0.0, 3.0]);
        let h2 = matrix_from_frames(&scaled, 1.0, 0.0).unwrap();
        assert!(linalg::norm_inf(&(h2.matrix - h.matrix)) < 1e-14);

        let unit = FrameFamily::from_fn(3, |_| Matrix::identity(3, 3));
        assert_eq!(
            matrix_from_frames(&unit, 0.7, 0.1).unwrap().matrix,
            Matrix::identity(3, 3)
        );

        let singular = FrameFamily::from_fn(2, |s| dmatrix![1.0, s; 1.0, s]);
        assert!(matches!(
            matrix_from_frames(&singular, 1.0, 0.0),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn axioms_of_euclidean_and_rotation() {
        let e = euclidean_transport(3).unwrap();
        let r = check_axioms(&e, 100, 7).unwrap();
        assert_eq!(r.max_residual(), 0.0);
        assert_eq!((r.samples, r.seed), (100, 7));

        let j = Interval::new(0.0, 1.0).unwrap();
        let sol = solve_fundamental(&rotation_coeffs(), 0.0, j, 1e-3).unwrap();
        let r = check_axioms(&sol, 100, 7).unwrap();
        assert!(r.max_residual() <= 1e-8, "{r:?}");
        assert_eq!(r, check_axioms(&sol, 100, 7).unwrap());
    }

    struct Corrupted(FundamentalSolution);

    impl TransportSource for Corrupted {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn frame_id(&self) -> &FrameId {
            self.0.frame_id()
        }
        fn interval(&self) -> Interval {
            self.0.interval()
        }
        fn matrix(&self, t: f64, s: f64) -> Result<Matrix> {
            let mut m = self.0.matrix(t, s)?;
            if t != s {
                m[(0, 1)] += 1e-3;
            }
            Ok(m)
        }
    }

    #[test]
    fn corrupted_transport_is_detected() {
        let j = Interval::new(0.0, 1.0).unwrap();
        let sol = solve_fundamental(&rotation_coeffs(), 0.0, j, 1e-3).unwrap();
        let r = check_axioms(&Corrupted(sol), 100, 1).unwrap();
        assert!(r.max_composition_residual >= 1e-4, "{r:?}");
    }

    #[test]
    fn gauge_examples() {
        let j = Interval::new(0.0, 1.0).unwrap();
        let f1 = FrameFamily::from_fn(2, |s| dmatrix![1.0 + s, s; -s, 2.0 + s * s]);
        let r = f1.left_scaled(Matrix::identity(2, 2) * 3.0);
        let g = gauge_equivalent(&f1, &r, j, 20).unwrap();
        assert!(g.equivalent);
        assert!(linalg::norm_inf(&(g.witness - Matrix::identity(2, 2) * 3.0)) < 1e-12);

        let f1c = f1.clone();
        let varying = FrameFamily::from_fn(2, move |s| (f1c.eval(s).unwrap()) * (1.0 + s));
        assert!(!gauge_equivalent(&f1, &varying, j, 20).unwrap().equivalent);

        let rot = dmatrix![0.6, -0.8; 0.8, 0.6];
        let g = gauge_equivalent(&f1, &f1.left_scaled(rot.clone()), j, 20).unwrap();
        assert!(g.equivalent);
        assert!(linalg::norm_inf(&(g.witness - rot)) <= 1e-12);
    }

    #[test]
    fn refinement_reaches_tolerance() {
        let j = Interval::new(0.0, 1.0).unwrap();
        let (sol, est) = solve_fundamental_refined(&rotation_coeffs(), 0.0, j, 0.2, 1e-10, 8).unwrap();
        assert!(est <= 1e-10);
        assert!(sol.step() < 0.2);
        let err = linalg::norm_inf(&(sol.value(1.0).unwrap() - closed_form_rotation(1.0)));
        assert!(err <= 1e-9);
    }

    #[test]
    fn dense_output_slope_matches_ode() {
        let gamma = CoefficientField::from_fn(2, |s| dmatrix![0.0, -s; 1.0, 0.2]);
        let j = Interval::new(0.0, 1.0).unwrap();
        let sol = solve_fundamental(&gamma, 0.0, j, 1e-2).unwrap();
        for s in [0.123, 0.5055, 0.987] {
            let expected = -(gamma.eval(s).unwrap() * sol.value(s).unwrap());
            assert!(linalg::norm_inf(&(sol.slope(s).unwrap() - expected)) < 1e-6);
        }
    }
}
