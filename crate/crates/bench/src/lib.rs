//! Shared fixtures for the kernel benchmarks.

use tempogeo_core::fields::{MatrixField, VectorField};
use tempogeo_core::geometry::{Domain, MetricFamily};
use tempogeo_core::sde::{integrate_sde, BrownianDriver, Convention, SemimartingalePath, TimeGrid};

/// Round 2-sphere in stereographic coordinates, shrinking by Ricci flow.
pub fn shrinking_sphere() -> MetricFamily {
    let c = "(4 - 2*t)*4/((1 + x1^2 + x2^2)^2)";
    MetricFamily::parse(
        &[
            vec![c.to_string(), "0".to_string()],
            vec!["0".to_string(), c.to_string()],
        ],
        Domain::Euclidean,
    )
    .expect("sphere metric parses")
}

/// Conformally flat 1-d family with both time and space dependence.
pub fn conformal_line() -> MetricFamily {
    MetricFamily::parse(&[vec!["exp(t + x1)".to_string()]], Domain::Euclidean)
        .expect("conformal metric parses")
}

/// A planar Brownian path to lift.
pub fn planar_brownian(steps: usize) -> SemimartingalePath {
    let drift = VectorField::parse(&["0".into(), "0".into()], 2).unwrap();
    let diff = MatrixField::parse(
        &[vec!["1".into(), "0".into()], vec!["0".into(), "1".into()]],
        2,
    )
    .unwrap();
    let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
    let driver = BrownianDriver::new(42, 2, grid);
    integrate_sde(
        &drift,
        &diff,
        &[0.1, -0.2],
        &driver,
        0,
        Convention::Stratonovich,
    )
    .unwrap()
}
