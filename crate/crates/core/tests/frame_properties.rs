use ltransport::linalg::{identity_defect, norm_inf};
use ltransport::{
    change_frame_coeffs, change_frame_matrix, solve_fundamental, special_frame, transport_matrix, CoefficientField,
    FrameChange, FrameId, Interval, Matrix, PolyMatrix,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn unit() -> Interval {
    Interval::new(0.0, 1.0).unwrap()
}

fn field(n: usize, coeffs: &[f64]) -> CoefficientField {
    let entries = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| coeffs[3 * (i * n + j)..3 * (i * n + j) + 3].to_vec())
                .collect()
        })
        .collect();
    CoefficientField::polynomial(PolyMatrix::new(entries).unwrap()).unwrap()
}

/// `A(s) = I + 0.15 (B₁ sin(ws) + B₂ s²)` with its analytic derivative.
fn frame_change(n: usize, b: &[f64], w: f64) -> FrameChange {
    let m1 = DMatrix::from_row_slice(n, n, &b[..n * n]);
    let m2 = DMatrix::from_row_slice(n, n, &b[n * n..2 * n * n]);
    let (d1, d2) = (m1.clone(), m2.clone());
    FrameChange::new(FrameId::canonical(), FrameId::new("e'"), n, move |s| {
        Matrix::identity(n, n) + (&m1 * (w * s).sin() + &m2 * (s * s)) * 0.15
    })
    .with_derivative(move |s| (&d1 * (w * (w * s).cos()) + &d2 * (2.0 * s)) * 0.15)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reconstruct_then_transform_commutes(
        n in 1usize..=3,
        coeffs in proptest::collection::vec(-1.0..=1.0_f64, 27),
        b in proptest::collection::vec(-1.0..=1.0_f64, 18),
        w in 0.5..=3.0_f64,
        pairs in proptest::collection::vec((0.0..=1.0_f64, 0.0..=1.0_f64), 8),
    ) {
        let g = field(n, &coeffs);
        let a = frame_change(n, &b, w);
        let sol = solve_fundamental(&g, 0.0, unit(), 1e-3).unwrap();
        let sol_prime = solve_fundamental(&change_frame_coeffs(&g, &a).unwrap(), 0.0, unit(), 1e-3).unwrap();
        for (t, s) in pairs {
            let lhs = change_frame_matrix(&transport_matrix(&sol, t, s).unwrap(), &a).unwrap();
            let rhs = transport_matrix(&sol_prime, t, s).unwrap();
            prop_assert_eq!(&lhs.frame_id, &rhs.frame_id);
            prop_assert!(norm_inf(&(lhs.matrix - rhs.matrix)) <= 5e-7);
        }
    }

    #[test]
    fn special_frames_trivialize_transport(
        n in 1usize..=3,
        coeffs in proptest::collection::vec(-1.0..=1.0_f64, 27),
        s0 in 0.0..=1.0_f64,
        pairs in proptest::collection::vec((0.0..=1.0_f64, 0.0..=1.0_f64), 8),
    ) {
        let g = field(n, &coeffs);
        let sol = solve_fundamental(&g, 0.0, unit(), 1e-3).unwrap();
        let sf = special_frame(&sol, s0, &Matrix::identity(n, n)).unwrap();
        let change = sf.frame_change();
        for (t, s) in pairs {
            let hp = change_frame_matrix(&transport_matrix(&sol, t, s).unwrap(), &change).unwrap();
            prop_assert!(identity_defect(&hp.matrix) <= 1e-8);
        }
        let gp = change_frame_coeffs(&g, &change).unwrap();
        for s in unit().linspace(21) {
            prop_assert!(norm_inf(&gp.eval(s).unwrap()) <= 1e-6);
        }
        prop_assert!(sf.cross_check(11).unwrap() <= 1e-9);
    }

    #[test]
    fn frame_change_round_trip_restores_matrix(
        n in 1usize..=3,
        coeffs in proptest::collection::vec(-1.0..=1.0_f64, 27),
        b in proptest::collection::vec(-1.0..=1.0_f64, 18),
        t in 0.0..=1.0_f64,
        s in 0.0..=1.0_f64,
    ) {
        let sol = solve_fundamental(&field(n, &coeffs), 0.0, unit(), 1e-3).unwrap();
        let a = frame_change(n, &b, 1.3);
        let h = transport_matrix(&sol, t, s).unwrap();
        let there = change_frame_matrix(&h, &a).unwrap();
        let back = change_frame_matrix(&there, &a.inverse()).unwrap();
        prop_assert!(norm_inf(&(back.matrix - h.matrix)) <= 1e-12);
    }
}

#[test]
fn mismatched_frames_are_rejected() {
    let sol = solve_fundamental(&CoefficientField::zero(2), 0.0, unit(), 1e-2).unwrap();
    let h = transport_matrix(&sol, 1.0, 0.0).unwrap();
    let a = FrameChange::constant(FrameId::new("other"), FrameId::new("x"), Matrix::identity(2, 2));
    assert!(change_frame_matrix(&h, &a).is_err());
}
