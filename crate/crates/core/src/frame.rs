//! Frame changes of transport matrices and coefficients, special frames in
//! which a transport is the identity, and Euclidean-transport predicates.

use std::sync::Arc;

use crate::bundle::{CoefficientField, FrameChange, FrameFamily, FrameId, Interval, TransportMatrix};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::transport::{constant_ratio, FundamentalSolution, TransportSource};

/// Default threshold for "the transport matrix is the identity".
pub const EUCLIDEAN_TOL: f64 = 1e-8;

/// `H′(t, s) = A(t)⁻¹ H(t, s) A(s)`.
pub fn change_frame_matrix(h: &TransportMatrix, a: &FrameChange) -> Result<TransportMatrix> {
    a.from_frame().expect(&h.frame_id)?;
    if a.dim() != h.dim() {
        return Err(Error::InvalidDimension(format!(
            "frame change of dimension {} for a rank-{} transport",
            a.dim(),
            h.dim()
        )));
    }
    let a_to = a.eval(h.to_param)?;
    let a_from = a.eval(h.from_param)?;
    let inv = linalg::invert(&a_to, &format!("frame change at s = {}", h.to_param))?;
    Ok(TransportMatrix {
        matrix: inv * &h.matrix * a_from,
        to_param: h.to_param,
        from_param: h.from_param,
        frame_id: a.to_frame().clone(),
    })
}

/// `Γ′(s) = A(s)⁻¹ Γ(s) A(s) + A(s)⁻¹ dA/ds`. Frame changes without a
/// declared derivative fall back to central differences.
pub fn change_frame_coeffs(gamma: &CoefficientField, a: &FrameChange) -> Result<CoefficientField> {
    a.from_frame().expect(gamma.frame_id())?;
    if a.dim() != gamma.dim() {
        return Err(Error::InvalidDimension(format!(
            "frame change of dimension {} for a rank-{} coefficient field",
            a.dim(),
            gamma.dim()
        )));
    }
    let g = gamma.clone();
    let a2 = a.clone();
    Ok(CoefficientField::try_from_fn(gamma.dim(), move |s| {
        let am = a2.eval(s)?;
        let inv = linalg::invert(&am, &format!("frame change at s = {s}"))?;
        Ok(&inv * g.eval(s)? * &am + inv * a2.derivative(s)?)
    })
    .with_frame(a.to_frame().clone())
    .with_smoothness(gamma.smoothness()))
}

/// Frame along the path obtained by transporting a fixed basis of the fiber
/// at `s₀`: `e′_i(s) = L_{s₀→s} f_i`.
#[derive(Debug, Clone)]
pub struct SpecialFrame {
    base_param: f64,
    anchor_basis: Matrix,
    frame_id: FrameId,
    sol: Arc<FundamentalSolution>,
    anchor_image: Matrix,
}

impl SpecialFrame {
    pub fn base_param(&self) -> f64 {
        self.base_param
    }

    /// Columns are the anchor vectors `f_i` in the original frame.
    pub fn anchor_basis(&self) -> &Matrix {
        &self.anchor_basis
    }

    pub fn frame_id(&self) -> &FrameId {
        &self.frame_id
    }

    pub fn original_frame(&self) -> &FrameId {
        self.sol.frame_id()
    }

    /// Components of `e′_i(s)` in the original frame, as columns:
    /// `H(s, s₀) B = Y(s) Y(s₀)⁻¹ B`.
    pub fn frame_matrix(&self, s: f64) -> Result<Matrix> {
        if s == self.base_param {
            return Ok(self.anchor_basis.clone());
        }
        Ok(self.sol.value(s)? * &self.anchor_image)
    }

    /// The special frame as a change of frame from the original one. The
    /// derivative is that of the dense output.
    pub fn frame_change(&self) -> FrameChange {
        let me = self.clone();
        let me_d = self.clone();
        FrameChange::try_new(
            self.original_frame().clone(),
            self.frame_id.clone(),
            self.anchor_basis.nrows(),
            move |s| me.frame_matrix(s),
        )
        .with_try_derivative(move |s| Ok(me_d.sol.slope(s)? * &me_d.anchor_image))
        .with_fd_interval(self.sol.interval())
    }

    /// Builds the same frame from the factorizing family `F(s) = Y(s)⁻¹` of
    /// the transport, as `F(s)⁻¹ F(s₀) B`, and returns the largest
    /// deviation from [`SpecialFrame::frame_matrix`] over `samples` points.
    pub fn cross_check(&self, samples: usize) -> Result<f64> {
        let sol = self.sol.clone();
        let factor = FrameFamily::from_fn(self.anchor_basis.nrows(), move |s| {
            sol.value(s)
                .and_then(|y| linalg::invert(&y, "fundamental solution"))
                .unwrap_or_else(|_| Matrix::from_element(y_dim(&sol), y_dim(&sol), f64::NAN))
        });
        let via_factor = special_frame_from_family(&factor, self.base_param, &self.anchor_basis)?;
        let mut worst = 0.0_f64;
        for s in self.sol.interval().linspace(samples.max(2)) {
            let d = via_factor.eval(s)? - self.frame_matrix(s)?;
            worst = worst.max(linalg::norm_inf(&d));
        }
        Ok(worst)
    }
}

fn y_dim(sol: &FundamentalSolution) -> usize {
    sol.dim()
}

/// Special frame built from a factorization `H(t, s) = F(t)⁻¹ F(s)`: the
/// frame with basis matrix `F(s)⁻¹` makes the transport the identity; it is
/// normalized to equal `anchor` at `s0`.
pub fn special_frame_from_family(frames: &FrameFamily, s0: f64, anchor: &Matrix) -> Result<FrameChange> {
    linalg::ensure_invertible(anchor, "special-frame anchor")?;
    let f0 = frames.eval(s0)?;
    let fixed = f0 * anchor;
    let f = frames.clone();
    Ok(FrameChange::try_new(
        frames.frame_id().clone(),
        FrameId::new(format!("{}'factor@{s0}", frames.frame_id())),
        frames.dim(),
        move |s| Ok(linalg::invert(&f.eval(s)?, &format!("frame family at s = {s}"))? * &fixed),
    ))
}

/// Transports the columns of `anchor` (a basis of the fiber at `s0`) along
/// the path. In the resulting frame the transport matrix is the identity
/// and the coefficients vanish.
pub fn special_frame(sol: &FundamentalSolution, s0: f64, anchor: &Matrix) -> Result<SpecialFrame> {
    sol.interval().check(s0)?;
    let n = sol.dim();
    if anchor.shape() != (n, n) {
        return Err(Error::InvalidDimension(format!(
            "anchor must be {n}x{n}, got {}x{}",
            anchor.nrows(),
            anchor.ncols()
        )));
    }
    linalg::ensure_invertible(anchor, "special-frame anchor")?;
    let anchor_image = sol.inverse_value(s0)? * anchor;
    Ok(SpecialFrame {
        base_param: s0,
        anchor_basis: anchor.clone(),
        frame_id: FrameId::new(format!("{}'special@{s0}", sol.frame_id())),
        sol: Arc::new(sol.clone()),
        anchor_image,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanCheck {
    pub euclidean: bool,
    /// Largest `‖H′(t, s) − I‖∞` over the sampled pairs.
    pub max_residual: f64,
}

/// Whether the transport's matrix in the frame given by `frame` (basis
/// matrices, as for [`change_frame_matrix`]) is the identity for every pair
/// of `samples` evenly spaced parameters, endpoints included.
pub fn is_euclidean_over_path(
    source: &dyn TransportSource,
    frame: &FrameChange,
    samples: usize,
    tol: f64,
) -> Result<EuclideanCheck> {
    frame.from_frame().expect(source.frame_id())?;
    if frame.dim() != source.dim() {
        return Err(Error::InvalidDimension("frame and transport dimensions differ".into()));
    }
    let params = source.interval().linspace(samples.max(2));
    let bases = params.iter().map(|&s| frame.eval(s)).collect::<Result<Vec<_>>>()?;
    let inverses = bases
        .iter()
        .map(|b| linalg::invert(b, "frame"))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0_f64;
    for (i, &t) in params.iter().enumerate() {
        for (j, &s) in params.iter().enumerate() {
            let h = &inverses[i] * source.matrix(t, s)? * &bases[j];
            worst = worst.max(linalg::identity_defect(&h));
        }
    }
    Ok(EuclideanCheck {
        euclidean: worst <= tol,
        max_residual: worst,
    })
}

/// Whether two frame families generate the same Euclidean transport, i.e.
/// `frame2(s) frame1(s)⁻¹` is constant.
pub fn same_euclidean_generator(
    frame1: &FrameFamily,
    frame2: &FrameFamily,
    interval: Interval,
    samples: usize,
) -> Result<bool> {
    Ok(constant_ratio(frame1, frame2, interval, samples)?.equivalent)
}
