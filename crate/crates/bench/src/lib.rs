//! Deterministic workloads shared by the benchmarks.

use ltransport::{CoefficientField, Interval, PolyMatrix};

/// A dense `n×n` cubic coefficient field whose entries are fixed
/// trigonometric samples in `[-1, 1]`.
pub fn cubic_field(n: usize) -> CoefficientField {
    let entries = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..4).map(|k| ((i * 7 + j * 3 + k) as f64 * 0.731).sin()).collect())
                .collect()
        })
        .collect();
    CoefficientField::polynomial(PolyMatrix::new(entries).expect("valid shape")).expect("square")
}

pub fn unit_interval() -> Interval {
    Interval::new(0.0, 1.0).expect("valid interval")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_well_formed() {
        let g = cubic_field(3);
        assert_eq!(g.dim(), 3);
        assert!(g.eval(0.5).unwrap().iter().all(|x| x.abs() <= 4.0));
    }
}
