//! Monte Carlo tests for the martingale property of manifold-valued paths,
//! and the intrinsic quadratic-variation / 1-form functionals that contract
//! realized brackets through a lift.
//!
//! "Local martingale" is operationalized as "no detectable drift in any time
//! bucket": per bucket and component the ensemble mean increment is divided
//! by its standard error, and the maximum standardized statistic is compared
//! against a Bonferroni-style threshold. True local/strict distinctions are
//! not decidable by finite Monte Carlo and are out of scope.

use rayon::prelude::*;

use crate::frame::LiftPath;
use crate::geometry::{Christoffel, ConnectionFamily, GeometryError};
use crate::linalg::MatrixF;
use crate::sde::{SemimartingalePath, TimeGrid};

/// Default bucket count for drift tests.
pub const DEFAULT_BUCKETS: usize = 8;
/// Default rejection threshold for the max standardized bucket statistic;
/// with 8·d comparisons this keeps the family-wise false-rejection rate
/// around the percent level.
pub const DEFAULT_THRESHOLD: f64 = 3.3;
/// Minimum fraction of paths that must survive simulation.
pub const MIN_SURVIVAL: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MartingaleError {
    #[error("ensemble needs at least 2 paths, got {0}")]
    TooFewPaths(usize),
    #[error("{failed} of {total} paths aborted (first failure: path {first_path}: {first_error}); need ≥ 90% survivors")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first_path: u64,
        first_error: String,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("lift and path disagree in length or dimension")]
    Shape,
}

/// Ensemble description for a drift test.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub paths: usize,
    pub seed: u64,
    pub grid: TimeGrid,
    pub buckets: usize,
    pub threshold: f64,
}

impl EnsembleSpec {
    pub fn new(paths: usize, seed: u64, grid: TimeGrid) -> Self {
        EnsembleSpec {
            paths,
            seed,
            grid,
            buckets: DEFAULT_BUCKETS,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Test outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Consistent,
    Rejected,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::Consistent => write!(f, "consistent"),
            Decision::Rejected => write!(f, "rejected"),
        }
    }
}

/// One `(bucket, component)` cell of the drift statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketRow {
    pub bucket: usize,
    pub component: usize,
    pub mean: f64,
    pub stderr: f64,
    pub z: f64,
}

/// Result of a bucketed zero-drift test.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftStatistic {
    /// Ensemble mean of the terminal functional, per component.
    pub terminal_means: Vec<f64>,
    /// Standard error of the terminal functional, per component.
    pub terminal_stderrs: Vec<f64>,
    pub buckets: usize,
    pub rows: Vec<BucketRow>,
    pub max_statistic: f64,
    pub threshold: f64,
    pub decision: Decision,
    pub paths_used: usize,
    pub paths_failed: usize,
}

/// Per-path input to the statistic: bucket increments (`buckets × d`,
/// bucket-major) and the terminal value (`d`).
#[derive(Debug, Clone)]
pub struct PathSample {
    pub bucket_increments: Vec<f64>,
    pub terminal: Vec<f64>,
}

/// Aggregate per-path samples into the bucketed drift statistic. The
/// reduction runs in path order, so results do not depend on how the
/// samples were produced.
pub fn bucket_statistic(
    samples: &[PathSample],
    d: usize,
    buckets: usize,
    threshold: f64,
    paths_failed: usize,
) -> Result<DriftStatistic, MartingaleError> {
    let n = samples.len();
    if n < 2 {
        return Err(MartingaleError::TooFewPaths(n));
    }
    let nf = n as f64;
    let cells = buckets * d;
    let mut mean = vec![0.0; cells];
    let mut m2 = vec![0.0; cells];
    let mut tmean = vec![0.0; d];
    let mut tm2 = vec![0.0; d];
    for (idx, s) in samples.iter().enumerate() {
        debug_assert_eq!(s.bucket_increments.len(), cells);
        let count = (idx + 1) as f64;
        for (c, &v) in s.bucket_increments.iter().enumerate() {
            let delta = v - mean[c];
            mean[c] += delta / count;
            m2[c] += delta * (v - mean[c]);
        }
        for (c, &v) in s.terminal.iter().enumerate() {
            let delta = v - tmean[c];
            tmean[c] += delta / count;
            tm2[c] += delta * (v - tmean[c]);
        }
    }
    let mut rows = Vec::with_capacity(cells);
    let mut max_stat = 0.0f64;
    for b in 0..buckets {
        for c in 0..d {
            let idx = b * d + c;
            let var = m2[idx] / (nf - 1.0);
            let stderr = (var / nf).sqrt();
            let z = if stderr > 0.0 {
                mean[idx] / stderr
            } else {
                0.0
            };
            max_stat = max_stat.max(z.abs());
            rows.push(BucketRow {
                bucket: b,
                component: c,
                mean: mean[idx],
                stderr,
                z,
            });
        }
    }
    let terminal_stderrs = tm2.iter().map(|&v| (v / (nf - 1.0) / nf).sqrt()).collect();
    let decision = if max_stat > threshold {
        Decision::Rejected
    } else {
        Decision::Consistent
    };
    Ok(DriftStatistic {
        terminal_means: tmean,
        terminal_stderrs,
        buckets,
        rows,
        max_statistic: max_stat,
        threshold,
        decision,
        paths_used: n,
        paths_failed,
    })
}

/// Bucket boundaries: bucket `b` covers steps `[b·n/M, (b+1)·n/M)`.
fn bucket_of(step: usize, n: usize, buckets: usize) -> usize {
    ((step * buckets) / n).min(buckets - 1)
}

fn run_ensemble<T: Send>(
    paths: usize,
    produce: impl Fn(u64) -> Result<T, String> + Sync,
) -> (Vec<T>, usize, Option<(u64, String)>) {
    let results: Vec<Result<T, String>> = (0..paths as u64).into_par_iter().map(&produce).collect();
    let mut ok = Vec::with_capacity(paths);
    let mut failed = 0;
    let mut first_failure = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                failed += 1;
                if first_failure.is_none() {
                    first_failure = Some((i as u64, e));
                }
            }
        }
    }
    (ok, failed, first_failure)
}

fn check_survival(
    ok: usize,
    failed: usize,
    total: usize,
    first: Option<(u64, String)>,
) -> Result<(), MartingaleError> {
    if (ok as f64) < MIN_SURVIVAL * total as f64 || ok < 2 {
        let (first_path, first_error) = first.unwrap_or((0, "no failure recorded".to_string()));
        return Err(MartingaleError::TooManyFailures {
            failed,
            total,
            first_path,
            first_error,
        });
    }
    Ok(())
}

/// Drift-corrected increments `m_k^i = Δx_k^i + ½ Σ_jl Γ^i_jl Δx^j Δx^l`;
/// their sum is a zero-drift sample when the path is a martingale for the
/// connection.
pub fn drift_increments(
    path: &SemimartingalePath,
    conn: &ConnectionFamily,
) -> Result<Vec<f64>, MartingaleError> {
    let d = path.dim;
    let n = path.grid.steps();
    let mut out = Vec::with_capacity(n * d);
    let mut dx = vec![0.0; d];
    for k in 0..n {
        let t = path.grid.node(k);
        path.increment_into(k, &mut dx);
        let gamma = conn.christoffel(t, path.state(k))?;
        let corr = gamma.contract_quadratic(&dx, &dx);
        for i in 0..d {
            out.push(dx[i] + 0.5 * corr[i]);
        }
    }
    Ok(out)
}

/// Bucketed zero-drift test on the antidevelopment `Z` of simulated lifts.
pub fn test_antidevelopment(
    ens: &EnsembleSpec,
    lift_path: impl Fn(u64) -> Result<LiftPath, String> + Sync,
) -> Result<DriftStatistic, MartingaleError> {
    if ens.paths < 2 {
        return Err(MartingaleError::TooFewPaths(ens.paths));
    }
    let buckets = ens.buckets;
    let (samples, failed, first) = run_ensemble(ens.paths, |pid| {
        let lift = lift_path(pid)?;
        let d = lift.dim;
        let n = lift.grid.steps();
        let mut inc = vec![0.0; buckets * d];
        for k in 0..n {
            let b = bucket_of(k, n, buckets);
            for i in 0..d {
                inc[b * d + i] += lift.dz(k)[i];
            }
        }
        let mut terminal = vec![0.0; d];
        for b in 0..buckets {
            for i in 0..d {
                terminal[i] += inc[b * d + i];
            }
        }
        Ok(PathSample {
            bucket_increments: inc,
            terminal,
        })
    });
    check_survival(samples.len(), failed, ens.paths, first)?;
    let d = samples[0].terminal.len();
    bucket_statistic(&samples, d, buckets, ens.threshold, failed)
}

/// Compensated functional `f(X_t) − f(X_0) − ½ Σ_k Hess f (Δx_k, Δx_k)`
/// per test function, with the same bucketed statistic (components = test
/// functions).
pub fn test_hessian_functional(
    ens: &EnsembleSpec,
    path: impl Fn(u64) -> Result<SemimartingalePath, String> + Sync,
    conn: &ConnectionFamily,
    functions: &[crate::fields::ScalarField],
) -> Result<DriftStatistic, MartingaleError> {
    if ens.paths < 2 {
        return Err(MartingaleError::TooFewPaths(ens.paths));
    }
    let buckets = ens.buckets;
    let nf = functions.len();
    let (samples, failed, first) = run_ensemble(ens.paths, |pid| {
        let x = path(pid)?;
        let d = x.dim;
        let n = x.grid.steps();
        let mut inc = vec![0.0; buckets * nf];
        let mut dx = vec![0.0; d];
        let mut grad = vec![0.0; d];
        for k in 0..n {
            let t = x.grid.node(k);
            let xs = x.state(k);
            x.increment_into(k, &mut dx);
            let gamma = conn.christoffel(t, xs).map_err(|e| e.to_string())?;
            let b = bucket_of(k, n, buckets);
            for (fi, f) in functions.iter().enumerate() {
                // dY = Δf − ½ Hess f(Δx, Δx)
                let delta_f = f
                    .value(x.grid.node(k + 1), x.state(k + 1))
                    .map_err(|e| e.to_string())?
                    - f.value(t, xs).map_err(|e| e.to_string())?;
                let hess = hessian_quadratic(f, &gamma, t, xs, &dx, &mut grad)
                    .map_err(|e| e.to_string())?;
                inc[b * nf + fi] += delta_f - 0.5 * hess;
            }
        }
        let mut terminal = vec![0.0; nf];
        for b in 0..buckets {
            for i in 0..nf {
                terminal[i] += inc[b * nf + i];
            }
        }
        Ok(PathSample {
            bucket_increments: inc,
            terminal,
        })
    });
    check_survival(samples.len(), failed, ens.paths, first)?;
    bucket_statistic(&samples, nf, buckets, ens.threshold, failed)
}

/// `Σ_ij Hess f_ij v^i v^j` with a precomputed Christoffel evaluation.
fn hessian_quadratic(
    f: &crate::fields::ScalarField,
    gamma: &Christoffel,
    t: f64,
    x: &[f64],
    v: &[f64],
    grad: &mut [f64],
) -> Result<f64, crate::fields::EvalError> {
    let d = v.len();
    for (k, g) in grad.iter_mut().enumerate() {
        *g = f.dx(k, t, x)?;
    }
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut h = f.d2x(i, j, t, x)?;
            for (k, &gk) in grad.iter().enumerate() {
                h -= gamma.get(k, i, j) * gk;
            }
            acc += h * v[i] * v[j];
        }
    }
    Ok(acc)
}

/// Default test-function battery for dimension `d`: coordinates, squares,
/// and `exp(±x_i)`. Any finite battery is a heuristic stand-in for "all
/// smooth f".
pub fn default_test_functions(d: usize) -> Vec<crate::fields::ScalarField> {
    let mut out = Vec::new();
    for i in 1..=d {
        for src in [
            format!("x{i}"),
            format!("x{i}^2"),
            format!("exp(x{i})"),
            format!("exp(-x{i})"),
        ] {
            out.push(crate::fields::ScalarField::parse(&src, d).expect("battery parses"));
        }
    }
    out
}

/// The two evaluations of `∫ B(dX, dX)`: directly from realized increments
/// and through the lift (`Σ_ij B(u e_i, u e_j) ΔZ^i ΔZ^j` at the midpoint
/// frames). Both returned as cumulative paths of length `n+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QvPair {
    pub direct: Vec<f64>,
    pub frame_side: Vec<f64>,
}

pub fn intrinsic_qv(
    lift: &LiftPath,
    b_at: impl Fn(f64, &[f64]) -> Result<MatrixF, GeometryError>,
) -> Result<QvPair, MartingaleError> {
    let n = lift.grid.steps();
    let mut direct = Vec::with_capacity(n + 1);
    let mut frame_side = Vec::with_capacity(n + 1);
    direct.push(0.0);
    frame_side.push(0.0);
    let mut acc_d = 0.0;
    let mut acc_f = 0.0;
    for k in 0..n {
        let t = lift.grid.node(k);
        let xs = lift.x(k);
        let b = b_at(t, xs)?;
        let dx = lift.dx(k);
        acc_d += crate::linalg::dot(&b.matvec(&dx), &dx);
        // u = e_mid: Σ_ij B(u e_i, u e_j) ΔZ^i ΔZ^j = (u ΔZ)ᵀ B (u ΔZ)
        let u_dz = lift.mid_frame(k).matvec(lift.dz(k));
        acc_f += crate::linalg::dot(&b.matvec(&u_dz), &u_dz);
        direct.push(acc_d);
        frame_side.push(acc_f);
    }
    Ok(QvPair { direct, frame_side })
}

/// Midpoint-rule Stratonovich integral of a covector field along the path,
/// directly (`Ψ(∘dX)`) and through the frame (`Σ_i Ψ(u e_i) ∘dZ^i`).
pub fn integrate_one_form(
    lift: &LiftPath,
    psi_at: impl Fn(f64, &[f64]) -> Result<Vec<f64>, GeometryError>,
) -> Result<QvPair, MartingaleError> {
    let d = lift.dim;
    let n = lift.grid.steps();
    let mut direct = Vec::with_capacity(n + 1);
    let mut frame_side = Vec::with_capacity(n + 1);
    direct.push(0.0);
    frame_side.push(0.0);
    let mut acc_d = 0.0;
    let mut acc_f = 0.0;
    for k in 0..n {
        let t_mid = 0.5 * (lift.grid.node(k) + lift.grid.node(k + 1));
        let x_mid: Vec<f64> = (0..d)
            .map(|i| 0.5 * (lift.x(k)[i] + lift.x(k + 1)[i]))
            .collect();
        let psi = psi_at(t_mid, &x_mid)?;
        let dx = lift.dx(k);
        acc_d += crate::linalg::dot(&psi, &dx);
        let u_dz = lift.mid_frame(k).matvec(lift.dz(k));
        acc_f += crate::linalg::dot(&psi, &u_dz);
        direct.push(acc_d);
        frame_side.push(acc_f);
    }
    Ok(QvPair { direct, frame_side })
}
