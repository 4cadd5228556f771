//! Simulation toolkit for stochastic processes on manifolds whose metric or
//! connection depends on time.
//!
//! The crate is organised around a single coordinate chart:
//!
//! * [`fields`] — a small expression DSL for scalar fields of `(t, x1..xd)`
//!   with exact derivatives via forward-mode dual numbers,
//! * [`geometry`] — time-dependent metrics and connections, Christoffel
//!   symbols, curvature, Ricci and Hessians derived from the fields,
//! * [`sde`] — time grids, a counter-based Brownian driver, Itô and
//!   Stratonovich (Heun) integrators and discrete quadratic covariation,
//! * [`frame`] — frame-bundle lifts (connection-horizontal and
//!   Riemann-horizontal), antidevelopment, development, parallel and damped
//!   parallel transport,
//! * [`martingale`] — Monte Carlo drift tests for the martingale property and
//!   intrinsic quadratic-variation functionals,
//! * [`heatlab`] — `g(t)`-Brownian motion, a periodic 1-d heat solver, the
//!   stochastic representation formula and the gradient-decay experiment,
//! * [`scenario`] — declarative experiment descriptions, the built-in
//!   catalog, the ensemble runner and CSV reporting.

pub mod fields;
pub mod frame;
pub mod geometry;
pub mod heatlab;
pub mod linalg;
pub mod martingale;
pub mod scenario;
pub mod sde;

pub use fields::{Expression, ScalarField};
pub use frame::{Frame, LiftFlavor, LiftPath, TransportKind, TransportOperator};
pub use geometry::{ConnectionFamily, Domain, MetricFamily, SymmetricBilinearField};
pub use martingale::{Decision, DriftStatistic, EnsembleSpec};
pub use scenario::{RunOptions, RunReport, ScenarioSpec};
pub use sde::{BrownianDriver, SemimartingalePath, TimeGrid};
