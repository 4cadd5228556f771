//! Time grids, reproducible Brownian drivers, Itô (Euler–Maruyama) and
//! Stratonovich (Heun predictor–corrector) integrators, and discrete
//! quadratic covariation.
//!
//! The Brownian driver is counter-based: the increment `ΔW_k` for
//! `(seed, path_id, step, component)` is a pure function of its key, so
//! simulations are bit-identical across runs, platforms and worker counts
//! without any stream bookkeeping.

use crate::fields::{EvalError, MatrixField, VectorField};
use crate::linalg::MatrixF;

/// Paths whose state norm exceeds this are truncated and flagged as
/// diverged rather than reported as an error; divergence is a measured
/// outcome in the counterexample scenarios.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Hashing and uniform-variate helpers shared by the driver and by
/// deterministic sampling in tests.
pub mod rng {
    /// Final mixing step of splitmix64; a strong 64-bit bijection.
    #[inline]
    pub fn mix64(mut z: u64) -> u64 {
        z ^= z >> 30;
        z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z ^= z >> 27;
        z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        z
    }

    /// Map a hash to `(0, 1]` (never zero, so `ln` is safe).
    #[inline]
    pub fn unit_f64(v: u64) -> f64 {
        ((v >> 11) as f64 + 1.0) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Map a hash to `[0, 1)`.
    #[inline]
    pub fn unit_f64_half_open(v: u64) -> f64 {
        (v >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

    /// Hash of a `(seed, path, step, component)` counter.
    #[inline]
    pub fn counter_hash(seed: u64, path: u64, step: u64, lane: u64) -> u64 {
        let mut h = mix64(seed ^ GOLDEN);
        h = mix64(h ^ path.wrapping_mul(GOLDEN));
        h = mix64(h ^ step.wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
        h = mix64(h ^ lane.wrapping_mul(0x1656_67B1_9E37_79F9));
        h
    }

    /// Standard normal from a counter via Box–Muller.
    #[inline]
    pub fn counter_normal(seed: u64, path: u64, step: u64, lane: u64) -> f64 {
        let h = counter_hash(seed, path, step, lane);
        let u1 = unit_f64(mix64(h ^ 0xA5A5_A5A5_A5A5_A5A5));
        let u2 = unit_f64_half_open(mix64(h ^ 0x5A5A_5A5A_5A5A_5A5A));
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdeError {
    #[error("path {path_id}: field domain error at step {step} (t={t}): {source}")]
    Field {
        path_id: u64,
        step: usize,
        t: f64,
        source: EvalError,
    },
    #[error("path {path_id}: non-finite state at step {step} (t={t})")]
    NonFinite { path_id: u64, step: usize, t: f64 },
    #[error("drift has {drift} components but diffusion has {rows} rows (dimension {dim})")]
    Shape {
        drift: usize,
        rows: usize,
        dim: usize,
    },
    #[error("time grid requires t_end > t0 and n >= 1")]
    BadGrid,
}

/// Uniform time grid; node `k` is `t0 + k·h` (computed directly from `k`,
/// never by cumulative summation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n: usize) -> Result<Self, SdeError> {
        if t_end.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater) || n == 0 {
            return Err(SdeError::BadGrid);
        }
        Ok(TimeGrid { t0, t_end, n })
    }

    #[inline]
    pub fn t0(&self) -> f64 {
        self.t0
    }

    #[inline]
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        (self.t_end - self.t0) / self.n as f64
    }

    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.h()
    }

    /// Same span with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> TimeGrid {
        TimeGrid {
            t0: self.t0,
            t_end: self.t_end,
            n: self.n * factor,
        }
    }
}

/// Counter-based Brownian driver on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianDriver {
    pub seed: u64,
    pub dim: usize,
    pub grid: TimeGrid,
}

impl BrownianDriver {
    pub fn new(seed: u64, dim: usize, grid: TimeGrid) -> Self {
        BrownianDriver { seed, dim, grid }
    }

    /// Write `ΔW_k ~ N(0, h·I)` for the given path into `out`.
    #[inline]
    pub fn increment_into(&self, path_id: u64, step: usize, out: &mut [f64]) {
        let sqrt_h = self.grid.h().sqrt();
        for (j, slot) in out.iter_mut().enumerate().take(self.dim) {
            *slot = sqrt_h * rng::counter_normal(self.seed, path_id, step as u64, j as u64);
        }
    }

    /// All increments of one path (convenience; the integrators stream).
    pub fn increments(&self, path_id: u64) -> Vec<Vec<f64>> {
        (0..self.grid.steps())
            .map(|k| {
                let mut dw = vec![0.0; self.dim];
                self.increment_into(path_id, k, &mut dw);
                dw
            })
            .collect()
    }
}

/// Integration convention for [`integrate_sde`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    Ito,
    Stratonovich,
}

/// Discretized state path on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SemimartingalePath {
    pub grid: TimeGrid,
    pub dim: usize,
    /// `(n+1) × dim`, row-major.
    states: Vec<f64>,
    /// Driving increments when the path came from a driver: `n × m`.
    pub driver_increments: Option<Vec<f64>>,
    pub driver_dim: usize,
    /// Step at which the path crossed the divergence threshold, if any;
    /// states are frozen from there on.
    pub diverged: Option<usize>,
}

impl SemimartingalePath {
    /// Build from explicit states (used by tests and the development map).
    pub fn from_states(grid: TimeGrid, dim: usize, states: Vec<f64>) -> Self {
        assert_eq!(states.len(), (grid.steps() + 1) * dim);
        SemimartingalePath {
            grid,
            dim,
            states,
            driver_increments: None,
            driver_dim: 0,
            diverged: None,
        }
    }

    /// Attach the driving increments that produced the states.
    pub fn with_driver(mut self, increments: Vec<f64>, driver_dim: usize) -> Self {
        assert_eq!(increments.len(), self.grid.steps() * driver_dim);
        self.driver_increments = Some(increments);
        self.driver_dim = driver_dim;
        self
    }

    #[inline]
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    #[inline]
    pub fn increment_into(&self, k: usize, out: &mut [f64]) {
        let a = self.state(k);
        let b = &self.states[(k + 1) * self.dim..(k + 2) * self.dim];
        for ((o, &xa), &xb) in out.iter_mut().zip(a).zip(b) {
            *o = xb - xa;
        }
    }

    pub fn increment(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.increment_into(k, &mut out);
        out
    }

    /// Realized covariation increment `Δx_k Δx_kᵀ`.
    pub fn qv_step(&self, k: usize) -> MatrixF {
        let dx = self.increment(k);
        MatrixF::from_fn(self.dim, self.dim, |i, j| dx[i] * dx[j])
    }

    /// Cumulative realized covariation over the whole path.
    pub fn qv_total(&self) -> MatrixF {
        let mut acc = MatrixF::zeros(self.dim, self.dim);
        let mut dx = vec![0.0; self.dim];
        for k in 0..self.grid.steps() {
            self.increment_into(k, &mut dx);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    acc[(i, j)] += dx[i] * dx[j];
                }
            }
        }
        acc
    }

    /// Running covariation after each step (`n` matrices).
    pub fn qv_cumulative(&self) -> Vec<MatrixF> {
        let mut acc = MatrixF::zeros(self.dim, self.dim);
        let mut out = Vec::with_capacity(self.grid.steps());
        let mut dx = vec![0.0; self.dim];
        for k in 0..self.grid.steps() {
            self.increment_into(k, &mut dx);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    acc[(i, j)] += dx[i] * dx[j];
                }
            }
            out.push(acc.clone());
        }
        out
    }
}

/// Integrate `dX = b(t,X) dt + σ(t,X) dW` (Itô) or `∘dW` (Stratonovich).
///
/// Itô uses Euler–Maruyama; Stratonovich uses the Heun predictor–corrector
/// (Euler predictor, coefficients averaged between the start state and the
/// predictor at the end time, same `ΔW` in both stages).
pub fn integrate_sde(
    drift: &VectorField,
    diffusion: &MatrixField,
    x0: &[f64],
    driver: &BrownianDriver,
    path_id: u64,
    convention: Convention,
) -> Result<SemimartingalePath, SdeError> {
    let d = x0.len();
    let m = driver.dim;
    if drift.len() != d || diffusion.rows != d || diffusion.cols != m {
        return Err(SdeError::Shape {
            drift: drift.len(),
            rows: diffusion.rows,
            dim: d,
        });
    }
    let grid = driver.grid;
    let n = grid.steps();
    let h = grid.h();
    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(x0);
    let mut incs = Vec::with_capacity(n * m);
    let mut diverged = None;

    let mut x = x0.to_vec();
    let mut dw = vec![0.0; m];
    let mut b0 = vec![0.0; d];
    let mut b1 = vec![0.0; d];
    let mut s0 = vec![0.0; d * m];
    let mut s1 = vec![0.0; d * m];
    let mut xp = vec![0.0; d];

    let field_err = |step: usize, t: f64, source: EvalError| SdeError::Field {
        path_id,
        step,
        t,
        source,
    };

    for k in 0..n {
        if diverged.is_some() {
            // frozen tail keeps the grid aligned for ensemble statistics
            states.extend_from_slice(&x);
            incs.extend(std::iter::repeat(0.0).take(m));
            continue;
        }
        let t = grid.node(k);
        let t1 = grid.node(k + 1);
        driver.increment_into(path_id, k, &mut dw);
        drift
            .value_into(t, &x, &mut b0)
            .map_err(|e| field_err(k, t, e))?;
        diffusion
            .value_into(t, &x, &mut s0)
            .map_err(|e| field_err(k, t, e))?;

        match convention {
            Convention::Ito => {
                for i in 0..d {
                    let mut dx = b0[i] * h;
                    for j in 0..m {
                        dx += s0[i * m + j] * dw[j];
                    }
                    x[i] += dx;
                }
            }
            Convention::Stratonovich => {
                // predictor
                for i in 0..d {
                    let mut dx = b0[i] * h;
                    for j in 0..m {
                        dx += s0[i * m + j] * dw[j];
                    }
                    xp[i] = x[i] + dx;
                }
                drift
                    .value_into(t1, &xp, &mut b1)
                    .map_err(|e| field_err(k, t1, e))?;
                diffusion
                    .value_into(t1, &xp, &mut s1)
                    .map_err(|e| field_err(k, t1, e))?;
                for i in 0..d {
                    let mut dx = 0.5 * (b0[i] + b1[i]) * h;
                    for j in 0..m {
                        dx += 0.5 * (s0[i * m + j] + s1[i * m + j]) * dw[j];
                    }
                    x[i] += dx;
                }
            }
        }

        if x.iter().any(|v| !v.is_finite()) {
            return Err(SdeError::NonFinite {
                path_id,
                step: k,
                t: t1,
            });
        }
        if crate::linalg::norm(&x) > DIVERGENCE_THRESHOLD {
            diverged = Some(k);
        }
        states.extend_from_slice(&x);
        incs.extend_from_slice(&dw);
    }

    Ok(SemimartingalePath {
        grid,
        dim: d,
        states,
        driver_increments: Some(incs),
        driver_dim: m,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{MatrixField, VectorField};

    fn grid(t_end: f64, n: usize) -> TimeGrid {
        TimeGrid::new(0.0, t_end, n).unwrap()
    }

    fn fields_1d(drift: &str, diffusion: &str) -> (VectorField, MatrixField) {
        (
            VectorField::parse(&[drift.to_string()], 1).unwrap(),
            MatrixField::parse(&[vec![diffusion.to_string()]], 1).unwrap(),
        )
    }

    #[test]
    fn driver_is_deterministic_per_counter() {
        let d = BrownianDriver::new(99, 2, grid(1.0, 50));
        let a = d.increments(7);
        let b = d.increments(7);
        assert_eq!(a, b);
        let c = d.increments(8);
        assert_ne!(a, c);
    }

    #[test]
    fn driver_moments_match_n_0_h() {
        let n_draws = 100_000usize;
        let g = grid(0.01, 1); // h = 0.01 with a single step
        let d = BrownianDriver::new(4242, 1, g);
        let h = g.h();
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut dw = [0.0];
        for p in 0..n_draws {
            d.increment_into(p as u64, 0, &mut dw);
            sum += dw[0];
            sum2 += dw[0] * dw[0];
        }
        let mean = sum / n_draws as f64;
        let var = sum2 / n_draws as f64 - mean * mean;
        let mean_bound = 4.0 * (h / n_draws as f64).sqrt();
        assert!(
            mean.abs() <= mean_bound,
            "mean {mean:.3e} exceeds CLT bound {mean_bound:.3e}"
        );
        assert!(
            (var / h - 1.0).abs() <= 0.05,
            "variance {var:.5e} vs h {h:.5e}"
        );
    }

    #[test]
    fn zero_coefficients_give_constant_path() {
        let (b, s) = fields_1d("0", "0");
        let d = BrownianDriver::new(1, 1, grid(1.0, 100));
        let p = integrate_sde(&b, &s, &[0.7], &d, 0, Convention::Ito).unwrap();
        for k in 0..=100 {
            assert_eq!(p.state(k)[0], 0.7);
        }
    }

    #[test]
    fn euler_maruyama_ensemble_mean_matches_drift() {
        let (b, s) = fields_1d("-0.25", "1");
        let d = BrownianDriver::new(2024, 1, grid(1.0, 100));
        let n_paths = 10_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for p in 0..n_paths {
            let path = integrate_sde(&b, &s, &[0.0], &d, p, Convention::Ito).unwrap();
            let xt = path.state(100)[0];
            sum += xt;
            sum2 += xt * xt;
        }
        let mean = sum / n_paths as f64;
        let var = sum2 / n_paths as f64 - mean * mean;
        let stderr = (var / n_paths as f64).sqrt();
        assert!(
            (mean + 0.25).abs() <= 3.0 * stderr,
            "mean {mean} vs -0.25 (stderr {stderr:.2e})"
        );
    }

    #[test]
    fn stratonovich_geometric_bm_tracks_exact_solution() {
        // dX = X ∘ dW has the pathwise solution X_T = exp(W_T)
        let (b, s) = fields_1d("0", "x1");
        let g = grid(1.0, 1000);
        let d = BrownianDriver::new(77, 1, g);
        let mut err_sum = 0.0;
        for p in 0..100 {
            let path = integrate_sde(&b, &s, &[1.0], &d, p, Convention::Stratonovich).unwrap();
            let w_t: f64 = path.driver_increments.as_ref().unwrap().iter().sum();
            err_sum += (path.state(1000)[0] - w_t.exp()).abs();
        }
        let mean_err = err_sum / 100.0;
        assert!(mean_err <= 5e-2, "strong error {mean_err}");
    }

    #[test]
    fn qv_of_smooth_path_vanishes_linearly_in_h() {
        let (b, s) = fields_1d("1", "0");
        let qv_at = |n: usize| {
            let d = BrownianDriver::new(5, 1, grid(1.0, n));
            let p = integrate_sde(&b, &s, &[0.0], &d, 0, Convention::Ito).unwrap();
            p.qv_total()[(0, 0)]
        };
        let q1 = qv_at(500);
        let q2 = qv_at(1000);
        assert!((q1 / q2 - 2.0).abs() < 1e-9, "q1={q1}, q2={q2}");
    }

    #[test]
    fn qv_of_brownian_motion_accumulates_time() {
        let (b, s) = fields_1d("0", "1");
        let d = BrownianDriver::new(31, 1, grid(1.0, 1000));
        let mut total = 0.0;
        for p in 0..100 {
            let path = integrate_sde(&b, &s, &[0.0], &d, p, Convention::Ito).unwrap();
            total += path.qv_total()[(0, 0)];
        }
        let mean = total / 100.0;
        assert!((mean - 1.0).abs() <= 0.05, "mean qv {mean}");
    }

    #[test]
    fn qv_cross_terms_of_independent_components_vanish() {
        let b = VectorField::parse(&["0".into(), "0".into()], 2).unwrap();
        let s = MatrixField::parse(
            &[vec!["1".into(), "0".into()], vec!["0".into(), "1".into()]],
            2,
        )
        .unwrap();
        let d = BrownianDriver::new(13, 2, grid(1.0, 1000));
        let mut total = 0.0;
        for p in 0..100 {
            let path = integrate_sde(&b, &s, &[0.0, 0.0], &d, p, Convention::Ito).unwrap();
            total += path.qv_total()[(0, 1)];
        }
        let mean = total / 100.0;
        assert!(mean.abs() <= 0.05, "mean cross qv {mean}");
    }

    #[test]
    fn field_domain_error_reports_position() {
        let (b, s) = fields_1d("log(x1)", "0");
        let d = BrownianDriver::new(3, 1, grid(1.0, 10));
        match integrate_sde(&b, &s, &[-1.0], &d, 9, Convention::Ito) {
            Err(SdeError::Field { path_id, step, .. }) => {
                assert_eq!((path_id, step), (9, 0));
            }
            other => panic!("expected field error, got {other:?}"),
        }
    }

    #[test]
    fn divergent_path_is_truncated_and_flagged() {
        // explosive deterministic growth: dX = 3 X^3 dt from x0 = 1
        let (b, s) = fields_1d("3*x1^3", "0");
        let d = BrownianDriver::new(3, 1, grid(4.0, 2000));
        let p = integrate_sde(&b, &s, &[1.0], &d, 0, Convention::Ito).unwrap();
        let k = p.diverged.expect("path should diverge");
        // frozen after divergence
        let frozen = p.state(k + 1)[0];
        assert_eq!(p.state(2000)[0], frozen);
        assert!(frozen.is_finite());
    }

    #[test]
    fn grid_nodes_use_fused_form() {
        let g = grid(1.0, 3);
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(2), 2.0 * g.h());
        assert!((g.node(3) - 1.0).abs() < 1e-15);
    }
}
