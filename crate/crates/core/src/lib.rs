//! Linear transports along paths in finite-dimensional real vector bundles.
//!
//! A transport along a path `γ: J → B` is described in a chosen frame by its
//! matrix `H(t, s)`, which carries fiber components at `s` to fiber
//! components at `t`. This crate reconstructs `H` from its coefficient field
//! `Γ(s)` through the fundamental-matrix ODE `dY/ds = -Γ(s) Y`, verifies the
//! transport axioms numerically, builds frames in which the transport is the
//! identity, implements the equivalent derivation-along-paths operator, and
//! specializes everything to linear connections given by Christoffel-type
//! fields on a coordinate chart (including holonomy around loops).
//!
//! Matrices are dense `nalgebra::DMatrix<f64>` with the upper (fiber) index
//! as the row index. Every matrix-valued object carries a [`FrameId`]; mixing
//! objects expressed in different frames is an error.
//!
//! ```
//! use ltransport::{CoefficientField, Interval, solve_fundamental, transport_matrix};
//! use nalgebra::dmatrix;
//!
//! let gamma = CoefficientField::constant(dmatrix![0.0, -1.0; 1.0, 0.0]);
//! let interval = Interval::new(0.0, 4.0).unwrap();
//! let sol = solve_fundamental(&gamma, 0.0, interval, 1e-3).unwrap();
//! let h = transport_matrix(&sol, std::f64::consts::FRAC_PI_2, 0.0).unwrap();
//! assert!((h.matrix[(0, 1)] - 1.0).abs() < 1e-9);
//! ```

pub mod bundle;
pub mod connection;
pub mod derivation;
mod error;
pub mod frame;
pub mod linalg;
pub mod poly;
pub mod transport;

pub use bundle::{
    direct_sum, euclidean_transport, tensor_product, CoefficientField, EuclideanTransport, FiberVector, FrameChange,
    FrameFamily, FrameId, Interval, PathForm, PathSpec, Section, Smoothness, TransportMatrix,
};
pub use connection::{
    holonomy, metric_drift, path_coefficients, sphere_christoffels, sphere_latitude_loop, tangent_bundle_preset,
    transform_christoffels, Chart, ChristoffelField, CoordinateChange, HolonomyResult, PointFrameChange, Preset,
};
pub use derivation::{
    coefficients_from_derivation, coefficients_from_matrix, derive_section, derive_via_limit, leibniz_residual,
    roundtrip_coefficients, Derivation, DerivationOperator, ScalarFunction,
};
pub use error::{Error, Result};
pub use frame::{
    change_frame_coeffs, change_frame_matrix, is_euclidean_over_path, same_euclidean_generator, special_frame,
    EuclideanCheck, SpecialFrame,
};
pub use linalg::Matrix;
pub use poly::PolyMatrix;
pub use transport::{
    check_axioms, gauge_equivalent, matrix_from_frames, solve_fundamental, solve_fundamental_refined, transport_matrix,
    transport_vector, AxiomReport, FrameTransport, FundamentalSolution, GaugeComparison, TransportSource,
};
