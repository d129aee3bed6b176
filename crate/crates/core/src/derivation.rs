//! Derivations along a path and their equivalence with transports.
//!
//! The derivation generated by a transport with coefficients `Γ` acts on
//! sections by `(Dσ)(s) = dσ/ds + Γ(s) σ(s)`. Conversely a linear map
//! satisfying the Leibniz rule is determined by its action on the frame
//! sections, `D e_j = Γ^i_j e_i`, and generates a unique transport.
//!
//! Black-box [`Derivation`] implementations are evaluated repeatedly and
//! possibly from several threads, so they must be pure.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundle::{CoefficientField, FiberVector, FrameFamily, FrameId, Interval, Section};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::transport::{solve_fundamental, FundamentalSolution, TransportSource};

/// A map taking a `C¹` section to the value of its derivative at `s`.
pub trait Derivation: Send + Sync {
    fn dim(&self) -> usize;

    fn frame_id(&self) -> &FrameId;

    /// Components of `(Dσ)(s)`.
    fn apply(&self, section: &Section, s: f64) -> Result<Vector>;
}

fn check_section(d: &dyn Derivation, section: &Section) -> Result<()> {
    d.frame_id().expect(section.frame_id())?;
    if d.dim() != section.dim() {
        return Err(Error::InvalidDimension(format!(
            "rank-{} derivation applied to a section of dimension {}",
            d.dim(),
            section.dim()
        )));
    }
    Ok(())
}

/// The derivation generated by a coefficient field.
#[derive(Debug, Clone)]
pub struct DerivationOperator {
    coefficients: CoefficientField,
}

impl DerivationOperator {
    pub fn new(coefficients: CoefficientField) -> Self {
        Self { coefficients }
    }

    pub fn coefficients(&self) -> &CoefficientField {
        &self.coefficients
    }
}

impl Derivation for DerivationOperator {
    fn dim(&self) -> usize {
        self.coefficients.dim()
    }

    fn frame_id(&self) -> &FrameId {
        self.coefficients.frame_id()
    }

    fn apply(&self, section: &Section, s: f64) -> Result<Vector> {
        check_section(self, section)?;
        Ok(section.derivative(s)? + self.coefficients.eval(s)? * section.value(s))
    }
}

/// Plain componentwise `d/ds`; its coefficients vanish.
#[derive(Debug, Clone)]
pub struct ComponentDerivative {
    dim: usize,
    frame_id: FrameId,
}

impl ComponentDerivative {
    pub fn new(dim: usize, frame_id: FrameId) -> Self {
        Self { dim, frame_id }
    }
}

impl Derivation for ComponentDerivative {
    fn dim(&self) -> usize {
        self.dim
    }

    fn frame_id(&self) -> &FrameId {
        &self.frame_id
    }

    fn apply(&self, section: &Section, s: f64) -> Result<Vector> {
        check_section(self, section)?;
        section.derivative(s)
    }
}

/// `Dσ = F⁻¹ d(Fσ)/ds`: differentiate the components with respect to the
/// frame that the transport keeps fixed. The outer derivative is a central
/// difference with step `h`.
#[derive(Debug, Clone)]
pub struct FrameDerivation {
    frames: FrameFamily,
    h: f64,
}

impl FrameDerivation {
    pub fn new(frames: FrameFamily, h: f64) -> Self {
        Self { frames, h }
    }
}

impl Derivation for FrameDerivation {
    fn dim(&self) -> usize {
        self.frames.dim()
    }

    fn frame_id(&self) -> &FrameId {
        self.frames.frame_id()
    }

    fn apply(&self, section: &Section, s: f64) -> Result<Vector> {
        check_section(self, section)?;
        let h = self.h;
        let ahead = self.frames.eval(s + h)? * section.value(s + h);
        let behind = self.frames.eval(s - h)? * section.value(s - h);
        let inv = linalg::invert(&self.frames.eval(s)?, "frame family")?;
        Ok(inv * (ahead - behind) / (2.0 * h))
    }
}

/// `(Dσ)(s)` from the explicit coefficient form `dσ/ds + Γ(s) σ(s)`.
pub fn derive_section(d: &DerivationOperator, section: &Section, s: f64) -> Result<FiberVector> {
    section.interval().check(s)?;
    let components = d.apply(section, s)?;
    FiberVector::new(components, d.frame_id().clone(), s)
}

/// The one-sided difference quotient `(H(s, s+ε) σ(s+ε) − σ(s)) / ε`,
/// which tends to `(Dσ)(s)` as `ε → 0`.
pub fn derive_via_limit(sol: &FundamentalSolution, section: &Section, s: f64, eps: f64) -> Result<FiberVector> {
    if eps == 0.0 || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ε must be finite and non-zero, got {eps}"
        )));
    }
    sol.frame_id().expect(section.frame_id())?;
    sol.interval().check(s)?;
    sol.interval().check(s + eps)?;
    let pulled = sol.matrix(s, s + eps)? * section.value(s + eps);
    FiberVector::new((pulled - section.value(s)) / eps, sol.frame_id().clone(), s)
}

/// `Γ(s) = ∂H(s, t)/∂t |_{t=s}` by a central difference with step `h`.
pub fn coefficients_from_matrix(source: &dyn TransportSource, s: f64, h: f64) -> Result<Matrix> {
    fd_check(source, s, h)?;
    Ok((source.matrix(s, s + h)? - source.matrix(s, s - h)?) / (2.0 * h))
}

/// The second form, `Γ(s) = −∂H(t, s)/∂t |_{t=s}`.
pub fn coefficients_from_matrix_reverse(source: &dyn TransportSource, s: f64, h: f64) -> Result<Matrix> {
    fd_check(source, s, h)?;
    Ok((source.matrix(s - h, s)? - source.matrix(s + h, s)?) / (2.0 * h))
}

fn fd_check(source: &dyn TransportSource, s: f64, h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("h must be positive, got {h}")));
    }
    let j = source.interval();
    j.check(s - h)?;
    j.check(s + h)
}

const LINEARITY_PROBES: usize = 10;
const LINEARITY_SEED: u64 = 0x4c49_4e45;

fn random_section(rng: &mut ChaCha8Rng, dim: usize, interval: Interval, frame: &FrameId) -> Section {
    let coeffs = (0..dim)
        .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    Section::polynomial(coeffs, interval).with_frame(frame.clone())
}

/// Recovers the coefficients of a derivation from its action on the frame
/// sections: column `j` of `Γ(s)` is `(D e_j)(s)`.
///
/// Linearity is spot-checked first on random polynomial sections; a map
/// that fails the check is rejected.
pub fn coefficients_from_derivation(d: Arc<dyn Derivation>, interval: Interval) -> Result<CoefficientField> {
    let n = d.dim();
    let frame = d.frame_id().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(LINEARITY_SEED);
    let tolerance = 1e-8;
    let mut worst = 0.0_f64;
    for _ in 0..LINEARITY_PROBES {
        let s1 = random_section(&mut rng, n, interval, &frame);
        let s2 = random_section(&mut rng, n, interval, &frame);
        let l1 = rng.random_range(-2.0..2.0);
        let l2 = rng.random_range(-2.0..2.0);
        let s = rng.random_range(interval.lo()..=interval.hi());
        let r = linearity_at(d.as_ref(), l1, &s1, l2, &s2, s)?;
        worst = worst.max(r);
    }
    if worst > tolerance {
        return Err(Error::NotLinear {
            residual: worst,
            tolerance,
        });
    }

    let basis: Vec<Section> = (0..n)
        .map(|j| {
            let mut v = Vector::zeros(n);
            v[j] = 1.0;
            Section::constant(v, interval).with_frame(frame.clone())
        })
        .collect();
    Ok(CoefficientField::try_from_fn(n, move |s| {
        let mut gamma = Matrix::zeros(n, n);
        for (j, e_j) in basis.iter().enumerate() {
            gamma.set_column(j, &d.apply(e_j, s)?);
        }
        Ok(gamma)
    })
    .with_frame(frame))
}

fn linearity_at(d: &dyn Derivation, l1: f64, s1: &Section, l2: f64, s2: &Section, s: f64) -> Result<f64> {
    let combo = Section::linear_combination(l1, s1, l2, s2)?;
    let lhs = d.apply(&combo, s)?;
    let rhs = d.apply(s1, s)? * l1 + d.apply(s2, s)? * l2;
    let scale = linalg::vec_norm_inf(&rhs).max(1.0);
    Ok(linalg::vec_norm_inf(&(lhs - rhs)) / scale)
}

/// `max ‖D(λ₁σ₁ + λ₂σ₂) − λ₁Dσ₁ − λ₂Dσ₂‖∞` over evenly spaced samples.
pub fn linearity_residual(
    d: &dyn Derivation,
    l1: f64,
    s1: &Section,
    l2: f64,
    s2: &Section,
    samples: usize,
) -> Result<f64> {
    let combo = Section::linear_combination(l1, s1, l2, s2)?;
    let mut worst = 0.0_f64;
    for s in s1.interval().linspace(samples.max(1)) {
        let lhs = d.apply(&combo, s)?;
        let rhs = d.apply(s1, s)? * l1 + d.apply(s2, s)? * l2;
        worst = worst.max(linalg::vec_norm_inf(&(lhs - rhs)));
    }
    Ok(worst)
}

/// A `C¹` scalar function together with its derivative.
#[derive(Clone)]
pub struct ScalarFunction {
    value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ScalarFunction")
    }
}

impl ScalarFunction {
    pub fn new<F, DF>(value: F, derivative: DF) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        DF: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }

    /// Ascending-power coefficients.
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        let c = coeffs.clone();
        Self::new(
            move |s| c.iter().rev().fold(0.0, |a, x| a * s + x),
            move |s| {
                coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |a, (k, x)| a * s + k as f64 * x)
            },
        )
    }

    pub fn value(&self, s: f64) -> f64 {
        (self.value)(s)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        (self.derivative)(s)
    }
}

/// `max ‖D(fσ) − f′σ − f Dσ‖∞` over evenly spaced samples.
pub fn leibniz_residual(d: &dyn Derivation, f: &ScalarFunction, section: &Section, samples: usize) -> Result<f64> {
    let fv = f.value.clone();
    let fd = f.derivative.clone();
    let product = section.scaled(move |s| fv(s), move |s| fd(s));
    let mut worst = 0.0_f64;
    for s in section.interval().linspace(samples.max(1)) {
        let lhs = d.apply(&product, s)?;
        let rhs = section.value(s) * f.derivative(s) + d.apply(section, s)? * f.value(s);
        worst = worst.max(linalg::vec_norm_inf(&(lhs - rhs)));
    }
    Ok(worst)
}

/// The section `s ↦ H(s, s_u) u` obtained by transporting `u`. Its
/// derivative is taken by finite differences.
pub fn transported_section(sol: &FundamentalSolution, u: &FiberVector) -> Result<Section> {
    sol.frame_id().expect(&u.frame_id)?;
    sol.interval().check(u.param)?;
    let sol2 = sol.clone();
    let from = u.param;
    let comps = u.components.clone();
    let n = sol.dim();
    Ok(Section::new(n, sol.interval(), move |s| {
        sol2.matrix(s, from)
            .map(|h| h * &comps)
            .unwrap_or_else(|_| Vector::from_element(n, f64::NAN))
    })
    .with_frame(sol.frame_id().clone()))
}

/// Largest `‖(D σ)(s)‖∞` over evenly spaced samples for the section obtained
/// by transporting `u`; zero in exact arithmetic.
pub fn annihilation_residual(
    d: &dyn Derivation,
    sol: &FundamentalSolution,
    u: &FiberVector,
    samples: usize,
) -> Result<f64> {
    let section = transported_section(sol, u)?;
    let mut worst = 0.0_f64;
    for s in sol.interval().linspace(samples.max(1)) {
        worst = worst.max(linalg::vec_norm_inf(&d.apply(&section, s)?));
    }
    Ok(worst)
}

/// Reconstructs the transport from `Γ`, extracts the coefficients again by
/// central differences with step `h`, and reports the largest discrepancy
/// over `samples` interior points.
pub fn roundtrip_coefficients(
    gamma: &CoefficientField,
    interval: Interval,
    step: f64,
    h: f64,
    samples: usize,
) -> Result<f64> {
    let sol = solve_fundamental(gamma, interval.lo(), interval, step)?;
    let inner = Interval::new(interval.lo() + h, interval.hi() - h)?;
    let mut worst = 0.0_f64;
    for s in inner.linspace(samples.max(1)) {
        let extracted = coefficients_from_matrix(&sol, s, h)?;
        worst = worst.max(linalg::norm_inf(&(extracted - gamma.eval(s)?)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::euclidean_transport;
    use crate::transport::FrameTransport;
    use nalgebra::{dmatrix, dvector};

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    fn rotation() -> CoefficientField {
        CoefficientField::constant(dmatrix![0.0, -1.0; 1.0, 0.0])
    }

    #[test]
    fn constant_section_in_zero_field() {
        let d = DerivationOperator::new(CoefficientField::zero(2));
        let sec = Section::constant(dvector![1.0, -3.0], unit());
        let v = derive_section(&d, &sec, 0.4).unwrap();
        assert_eq!(v.components, dvector![0.0, 0.0]);
    }

    #[test]
    fn exponential_is_annihilated() {
        // d/ds e^{-as} + a e^{-as} = 0.
        let a = 1.7;
        let d = DerivationOperator::new(CoefficientField::constant(dmatrix![a]));
        let sec = Section::new(1, unit(), move |s| dvector![(-a * s).exp()])
            .with_derivative(move |s| dvector![-a * (-a * s).exp()]);
        for s in [0.0, 0.5, 1.0] {
            assert!(derive_section(&d, &sec, s).unwrap().components[0].abs() < 1e-15);
        }
    }

    #[test]
    fn transported_section_is_annihilated() {
        let sol = solve_fundamental(&rotation(), 0.0, unit(), 1e-3).unwrap();
        let d = DerivationOperator::new(rotation());
        let u = FiberVector::new(dvector![0.3, 1.2], FrameId::canonical(), 0.25).unwrap();
        assert!(annihilation_residual(&d, &sol, &u, 21).unwrap() <= 1e-7);
    }

    #[test]
    fn frame_mismatch_is_rejected() {
        let d = DerivationOperator::new(CoefficientField::zero(1));
        let sec = Section::constant(dvector![1.0], unit()).with_frame(FrameId::new("other"));
        assert!(matches!(
            derive_section(&d, &sec, 0.5),
            Err(Error::FrameMismatch { .. })
        ));
    }

    #[test]
    fn limit_quotient_in_zero_field() {
        let sol = solve_fundamental(&CoefficientField::zero(2), 0.0, unit(), 1e-3).unwrap();
        let sec = Section::new(2, unit(), |s| dvector![s, 1.0]);
        let v = derive_via_limit(&sol, &sec, 0.5, 1e-4).unwrap();
        assert!((v.components[0] - 1.0).abs() < 1e-8 && v.components[1].abs() < 1e-12);
        assert!(derive_via_limit(&sol, &sec, 0.99, 0.1).is_err());
        assert!(derive_via_limit(&sol, &sec, 0.5, 0.0).is_err());
    }

    #[test]
    fn limit_converges_at_first_order() {
        let gamma = CoefficientField::from_fn(2, |s| dmatrix![s, -1.0; 1.0, 0.5]);
        let sol = solve_fundamental(&gamma, 0.0, unit(), 1e-3).unwrap();
        let d = DerivationOperator::new(gamma);
        let sec = Section::polynomial(vec![vec![0.2, 1.0, -2.0], vec![1.0, 0.0, 3.0]], unit());
        let exact = derive_section(&d, &sec, 0.3).unwrap().components;
        let err = |eps: f64| {
            let v = derive_via_limit(&sol, &sec, 0.3, eps).unwrap().components;
            linalg::vec_norm_inf(&(v - &exact))
        };
        let ratio = err(1e-3) / err(5e-4);
        assert!((ratio - 2.0).abs() < 0.1, "ratio = {ratio}");
    }

    #[test]
    fn coefficients_from_euclidean_and_rotation() {
        let e = euclidean_transport(3).unwrap();
        assert_eq!(coefficients_from_matrix(&e, 0.5, 1e-4).unwrap(), Matrix::zeros(3, 3));

        let sol = solve_fundamental(&rotation(), 0.0, unit(), 1e-3).unwrap();
        for s in [0.1, 0.5, 0.77] {
            let g = coefficients_from_matrix(&sol, s, 1e-4).unwrap();
            assert!(linalg::norm_inf(&(g - dmatrix![0.0, -1.0; 1.0, 0.0])) < 1e-6);
            let g2 = coefficients_from_matrix_reverse(&sol, s, 1e-4).unwrap();
            assert!(linalg::norm_inf(&(g2 - dmatrix![0.0, -1.0; 1.0, 0.0])) < 1e-6);
        }
        assert!(matches!(
            coefficients_from_matrix(&sol, 0.0, 1e-4),
            Err(Error::OutOfInterval { .. })
        ));
    }

    #[test]
    fn coefficients_from_frame_family() {
        // Oracle: F⁻¹ dF/ds = diag(1, 2) for F = diag(e^s, e^{2s}).
        let f = FrameFamily::from_fn(2, |s| dmatrix![s.exp(), 0.0; 0.0, (2.0 * s).exp()]);
        let src = FrameTransport::new(f, unit());
        let g = coefficients_from_matrix(&src, 0.5, 1e-4).unwrap();
        assert!(linalg::norm_inf(&(g - dmatrix![1.0, 0.0; 0.0, 2.0])) < 1e-7);
    }

    #[test]
    fn coefficients_from_derivations() {
        let gamma = CoefficientField::from_fn(2, |s| dmatrix![s, -1.0; 2.0, s * s]);
        let d: Arc<dyn Derivation> = Arc::new(DerivationOperator::new(gamma.clone()));
        let recovered = coefficients_from_derivation(d, unit()).unwrap();
        for s in [0.0, 0.3, 1.0] {
            assert_eq!(recovered.eval(s).unwrap(), gamma.eval(s).unwrap());
        }

        let plain: Arc<dyn Derivation> = Arc::new(ComponentDerivative::new(3, FrameId::canonical()));
        let zero = coefficients_from_derivation(plain, unit()).unwrap();
        assert_eq!(zero.eval(0.5).unwrap(), Matrix::zeros(3, 3));

        let f = FrameFamily::from_fn(2, |s| dmatrix![1.0 + s, s * s; -s, 2.0 + s.sin()]);
        let fd: Arc<dyn Derivation> = Arc::new(FrameDerivation::new(f.clone(), 1e-4));
        let via_frames = coefficients_from_derivation(fd, unit()).unwrap();
        for s in [0.2_f64, 0.6] {
            // Oracle: F⁻¹ dF/ds with the analytic derivative.
            let df = dmatrix![1.0, 2.0 * s; -1.0, s.cos()];
            let expected = linalg::invert(&f.eval(s).unwrap(), "f").unwrap() * df;
            assert!(linalg::norm_inf(&(via_frames.eval(s).unwrap() - expected)) < 1e-6);
        }
    }

    struct Squaring;

    impl Derivation for Squaring {
        fn dim(&self) -> usize {
            1
        }
        fn frame_id(&self) -> &FrameId {
            static F: std::sync::OnceLock<FrameId> = std::sync::OnceLock::new();
            F.get_or_init(FrameId::canonical)
        }
        fn apply(&self, section: &Section, s: f64) -> Result<Vector> {
            Ok(section.value(s).map(|x| x * x))
        }
    }

    #[test]
    fn nonlinear_map_is_rejected() {
        assert!(matches!(
            coefficients_from_derivation(Arc::new(Squaring), unit()),
            Err(Error::NotLinear { .. })
        ));
    }

    #[test]
    fn leibniz_examples() {
        let d = DerivationOperator::new(CoefficientField::zero(2));
        let sec = Section::constant(dvector![1.0, 2.0], unit());
        let one = ScalarFunction::polynomial(vec![1.0]);
        assert_eq!(leibniz_residual(&d, &one, &sec, 11).unwrap(), 0.0);
        let id = ScalarFunction::polynomial(vec![0.0, 1.0]);
        assert_eq!(leibniz_residual(&d, &id, &sec, 11).unwrap(), 0.0);
    }

    #[test]
    fn roundtrip_examples() {
        assert_eq!(
            roundtrip_coefficients(&CoefficientField::zero(2), unit(), 1e-3, 1e-4, 20).unwrap(),
            0.0
        );
        let err = roundtrip_coefficients(&rotation(), unit(), 1e-3, 1e-4, 20).unwrap();
        assert!(err <= 1e-6, "{err:e}");
    }
}
