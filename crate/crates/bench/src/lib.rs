//! Fixtures shared by the criterion benchmarks.

use mgame_core::geometry::BoxBounds;
use mgame_core::{generate, DenseMatrix, Generator, InstanceSpec, Kind};

/// Seeded square instance with the default generator of its kind.
pub fn instance(kind: Kind, m: usize, seed: u64) -> DenseMatrix {
    let generator = match kind {
        Kind::L1L1 => Generator::Rademacher,
        Kind::L2L1 => Generator::GaussianRownorm,
    };
    generate(&InstanceSpec { kind, m, n: m, generator, seed }).expect("valid instance spec")
}

/// Exponent vector and box bounds for a `k`-coordinate box-simplex projection
/// whose bounds are active on a third of the coordinates.
pub fn box_simplex_case(k: usize) -> (Vec<f64>, BoxBounds) {
    let s: Vec<f64> = (0..k).map(|i| ((i * 7919) % 97) as f64 / 10.0 - 4.0).collect();
    let lo: Vec<f64> = (0..k).map(|i| if i % 3 == 0 { 0.5 / k as f64 } else { 0.1 / k as f64 }).collect();
    let hi: Vec<f64> = (0..k).map(|i| if i % 3 == 1 { 1.5 / k as f64 } else { 1.0 }).collect();
    (s, BoxBounds::new(lo, hi).expect("feasible bounds"))
}
