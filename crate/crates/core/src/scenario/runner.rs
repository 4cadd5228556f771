//! Execution engine: turns a validated scenario into per-analysis outcomes
//! and CSV files. Path simulation is parallel per path id; every reduction
//! runs in path order, so reports are byte-identical for any worker count.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use super::report::{fmt_float, write_csv};
use super::{
    build_geometry, config_hash, validate, AnalysisSpec, BuiltGeometry, ConventionSpec, Diagnostic,
    ExpectDecision, HeatOracle, ProcessSpec, ScenarioSpec,
};
use crate::fields::{MatrixField, ScalarField, VectorField};
use crate::frame::{
    damped_transport_brownian, damped_transport_general, g_operator_norm, g_process_lift,
    gram_schmidt_frame, horizontal_lift, lift_relation_residuals, orthonormality_defect,
    parallel_transport, riemann_horizontal_lift, Frame, LiftGeometry, LiftPath,
};
use crate::geometry::MetricFamily;
use crate::heatlab::{
    gradient_decay_check, gt_brownian_motion, representation_check, solve_heat_1d, HeatSolution,
};
use crate::linalg::MatrixF;
use crate::martingale::{
    default_test_functions, intrinsic_qv, test_antidevelopment, test_hessian_functional, Decision,
    DriftStatistic, EnsembleSpec,
};
use crate::sde::{integrate_sde, BrownianDriver, Convention, SemimartingalePath, TimeGrid};

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("invalid scenario:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error("numeric abort in analysis `{analysis}`: {message}")]
    Numeric { analysis: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Options that do not live in the spec file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed_override: Option<u64>,
    /// Worker threads; `None` uses the process default. Never affects
    /// results, only wall time.
    pub workers: Option<usize>,
    /// Where CSVs go; `None` skips file output.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Reject,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Status::Pass => write!(f, "pass"),
            Status::Reject => write!(f, "reject"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisOutcome {
    pub analysis: String,
    pub status: Status,
    pub summary: String,
}

#[derive(Debug)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    pub outcomes: Vec<AnalysisOutcome>,
    pub wall_seconds: f64,
    pub output_dir: Option<PathBuf>,
}

impl RunReport {
    pub fn any_rejected(&self) -> bool {
        self.outcomes.iter().any(|o| o.status == Status::Reject)
    }

    /// Stdout table.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "scenario {} (seed {}, config {})\n",
            self.scenario, self.seed, self.config_hash
        ));
        for o in &self.outcomes {
            s.push_str(&format!(
                "  {:<22} {:<6} {}\n",
                o.analysis,
                o.status.to_string(),
                o.summary
            ));
        }
        s.push_str(&format!("  wall time: {:.2} s\n", self.wall_seconds));
        s
    }
}

/// Execute every analysis of the scenario.
pub fn run(spec: &ScenarioSpec, opts: &RunOptions) -> Result<RunReport, RunnerError> {
    let diags = validate(spec);
    if !diags.is_empty() {
        return Err(RunnerError::Invalid(diags));
    }
    let seed = opts.seed_override.unwrap_or(spec.ensemble.seed);
    match opts.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| RunnerError::Numeric {
                    analysis: "setup".into(),
                    message: e.to_string(),
                })?;
            pool.install(|| run_inner(spec, seed, opts))
        }
        None => run_inner(spec, seed, opts),
    }
}

fn run_inner(spec: &ScenarioSpec, seed: u64, opts: &RunOptions) -> Result<RunReport, RunnerError> {
    let start = Instant::now();
    let geom = build_geometry(spec).map_err(|e| RunnerError::Numeric {
        analysis: "geometry".into(),
        message: e.to_string(),
    })?;
    let out_dir = opts.output_dir.as_ref().map(|base| base.join(&spec.name));

    let mut outcomes = Vec::new();
    let mut summary_rows: Vec<Vec<String>> = Vec::new();
    for analysis in &spec.analysis {
        let ctx = Ctx {
            spec,
            seed,
            geom: &geom,
            out_dir: out_dir.as_deref(),
        };
        let outcome = execute(&ctx, analysis).map_err(|message| RunnerError::Numeric {
            analysis: analysis.kind_name().into(),
            message,
        })?;
        summary_rows.push(vec![
            outcome.analysis.clone(),
            outcome.status.to_string(),
            outcome.summary.clone(),
        ]);
        outcomes.push(outcome);
    }
    if let Some(dir) = &out_dir {
        write_csv(
            dir.join("summary.csv"),
            &["analysis", "status", "summary"],
            &summary_rows,
        )?;
    }
    Ok(RunReport {
        scenario: spec.name.clone(),
        seed,
        config_hash: config_hash(spec, seed),
        outcomes,
        wall_seconds: start.elapsed().as_secs_f64(),
        output_dir: out_dir,
    })
}

struct Ctx<'a> {
    spec: &'a ScenarioSpec,
    seed: u64,
    geom: &'a BuiltGeometry,
    out_dir: Option<&'a std::path::Path>,
}

impl<'a> Ctx<'a> {
    fn grid(&self) -> TimeGrid {
        TimeGrid::new(
            self.spec.grid.t0,
            self.spec.grid.t_end,
            self.spec.grid.steps,
        )
        .expect("validated grid")
    }

    fn dim(&self) -> usize {
        self.spec.manifold.dim
    }

    fn metric(&self) -> Result<&MetricFamily, String> {
        self.geom
            .metric
            .as_ref()
            .ok_or_else(|| "analysis requires a metric".to_string())
    }

    /// Simulate the scenario's base path for one path id on a grid.
    fn simulate(
        &self,
        grid: TimeGrid,
        pid: u64,
    ) -> Result<(SemimartingalePath, Option<LiftPath>), String> {
        match &self.spec.process {
            ProcessSpec::Sde {
                drift,
                diffusion,
                x0,
                convention,
            } => {
                let d = self.dim();
                let b = VectorField::parse(drift, d).map_err(|e| e.to_string())?;
                let s = MatrixField::parse(diffusion, d).map_err(|e| e.to_string())?;
                let m = s.cols;
                let driver = BrownianDriver::new(self.seed, m, grid);
                let conv = match convention {
                    ConventionSpec::Ito => Convention::Ito,
                    ConventionSpec::Stratonovich => Convention::Stratonovich,
                };
                let path =
                    integrate_sde(&b, &s, x0, &driver, pid, conv).map_err(|e| e.to_string())?;
                Ok((path, None))
            }
            ProcessSpec::GtBrownian { x0 } => {
                let metric = self.metric()?;
                let driver = BrownianDriver::new(self.seed, self.dim(), grid);
                let gtb = gt_brownian_motion(metric, x0, &driver, pid, None)
                    .map_err(|e| e.to_string())?;
                Ok((gtb.path, Some(gtb.lift)))
            }
        }
    }

    /// Connection-horizontal lift of a path (identity initial frame).
    fn connection_lift(&self, path: &SemimartingalePath) -> Result<LiftPath, String> {
        let e0 = Frame::identity(path.state(0).to_vec());
        horizontal_lift(path, &self.geom.connection, &e0).map_err(|e| e.to_string())
    }

    /// Riemann-horizontal lift (Gram–Schmidt initial frame), reusing an
    /// already-produced lift when the process is a metric Brownian motion.
    fn riemann_lift(
        &self,
        path: &SemimartingalePath,
        ready: Option<LiftPath>,
    ) -> Result<LiftPath, String> {
        if let Some(l) = ready {
            return Ok(l);
        }
        let metric = self.metric()?;
        let x0 = path.state(0);
        let e0 = Frame {
            basepoint: x0.to_vec(),
            matrix: gram_schmidt_frame(metric, path.grid.t0(), x0).map_err(|e| e.to_string())?,
        };
        riemann_horizontal_lift(path, metric, &e0).map_err(|e| e.to_string())
    }

    fn write(&self, file: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), String> {
        if let Some(dir) = self.out_dir {
            write_csv(dir.join(file), header, rows).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

fn execute(ctx: &Ctx<'_>, analysis: &AnalysisSpec) -> Result<AnalysisOutcome, String> {
    match analysis {
        AnalysisSpec::TestAntidevelopment { expect } => {
            let ens = EnsembleSpec::new(ctx.spec.ensemble.paths, ctx.seed, ctx.grid());
            let grid = ctx.grid();
            let stat = test_antidevelopment(&ens, |pid| {
                let (path, ready) = ctx.simulate(grid, pid)?;
                match ready {
                    Some(l) => Ok(l),
                    None => ctx.connection_lift(&path),
                }
            })
            .map_err(|e| e.to_string())?;
            write_drift_statistic(ctx, "test_antidevelopment.csv", &stat)?;
            Ok(decision_outcome("test_antidevelopment", &stat, *expect))
        }
        AnalysisSpec::TestHessian { functions, expect } => {
            let d = ctx.dim();
            let fs = match functions {
                Some(srcs) => srcs
                    .iter()
                    .map(|s| ScalarField::parse(s, d).map_err(|e| e.to_string()))
                    .collect::<Result<Vec<_>, _>>()?,
                None => default_test_functions(d),
            };
            let ens = EnsembleSpec::new(ctx.spec.ensemble.paths, ctx.seed, ctx.grid());
            let grid = ctx.grid();
            let stat = test_hessian_functional(
                &ens,
                |pid| ctx.simulate(grid, pid).map(|(p, _)| p),
                &ctx.geom.connection,
                &fs,
            )
            .map_err(|e| e.to_string())?;
            write_drift_statistic(ctx, "test_hessian.csv", &stat)?;
            Ok(decision_outcome("test_hessian", &stat, *expect))
        }
        AnalysisSpec::CounterexampleQv {
            flat_window,
            riemannian_window,
            max_mean_displacement,
        } => {
            let grid = ctx.grid();
            let want_riem = riemannian_window.is_some();
            let metric = if want_riem {
                Some(ctx.metric()?.clone())
            } else {
                None
            };
            let rows: Vec<Result<(f64, f64, f64, bool), String>> = (0..ctx.spec.ensemble.paths
                as u64)
                .into_par_iter()
                .map(|pid| {
                    let (path, _) = ctx.simulate(grid, pid)?;
                    let d = path.dim;
                    let mut flat = 0.0;
                    let mut riem = 0.0;
                    let mut dx = vec![0.0; d];
                    for k in 0..grid.steps() {
                        path.increment_into(k, &mut dx);
                        let q: f64 = dx.iter().map(|v| v * v).sum();
                        flat += q;
                        if let Some(m) = &metric {
                            let g = m
                                .matrix(grid.node(k), path.state(k))
                                .map_err(|e| e.to_string())?;
                            riem += crate::linalg::dot(&g.matvec(&dx), &dx);
                        }
                    }
                    let displacement = path.state(grid.steps())[0] - path.state(0)[0];
                    Ok((flat, riem, displacement, path.diverged.is_some()))
                })
                .collect();
            let mut csv = Vec::new();
            let (mut sf, mut sr, mut sd, mut diverged) = (0.0, 0.0, 0.0, 0usize);
            let total = rows.len();
            for (pid, r) in rows.into_iter().enumerate() {
                let (flat, riem, disp, div) = r?;
                sf += flat;
                sr += riem;
                sd += disp;
                diverged += div as usize;
                csv.push(vec![
                    pid.to_string(),
                    fmt_float(flat),
                    fmt_float(riem),
                    fmt_float(disp),
                    div.to_string(),
                ]);
            }
            let n = total as f64;
            let (mf, mr, md) = (sf / n, sr / n, sd / n);
            ctx.write(
                "counterexample_qv.csv",
                &[
                    "path",
                    "flat_qv",
                    "riemannian_qv",
                    "displacement",
                    "diverged",
                ],
                &csv,
            )?;
            let mut ok = true;
            let mut parts = Vec::new();
            if let Some([lo, hi]) = flat_window {
                let inside = (*lo..=*hi).contains(&mf);
                ok &= inside;
                parts.push(format!("flat QV mean {mf:.4} in [{lo}, {hi}]: {inside}"));
            }
            if let Some([lo, hi]) = riemannian_window {
                let inside = (*lo..=*hi).contains(&mr);
                ok &= inside;
                parts.push(format!("riem QV mean {mr:.4} in [{lo}, {hi}]: {inside}"));
            }
            if let Some(bound) = max_mean_displacement {
                let inside = md <= *bound;
                ok &= inside;
                parts.push(format!("mean displacement {md:.2} <= {bound}: {inside}"));
            }
            if diverged > 0 {
                parts.push(format!(
                    "{diverged}/{total} paths truncated at the divergence guard"
                ));
            }
            Ok(AnalysisOutcome {
                analysis: "counterexample_qv".into(),
                status: if ok { Status::Pass } else { Status::Reject },
                summary: parts.join("; "),
            })
        }
        AnalysisSpec::IntrinsicQv {
            agreement_tolerance,
        } => {
            let grid = ctx.grid();
            let metric = ctx.metric()?.clone();
            let rows: Vec<Result<(f64, f64, f64), String>> = (0..ctx.spec.ensemble.paths as u64)
                .into_par_iter()
                .map(|pid| {
                    let (path, ready) = ctx.simulate(grid, pid)?;
                    let lift = match ready {
                        Some(l) => l,
                        None => ctx.connection_lift(&path)?,
                    };
                    let pair = intrinsic_qv(&lift, |t, xs| metric.matrix(t, xs))
                        .map_err(|e| e.to_string())?;
                    let direct = *pair.direct.last().unwrap();
                    let frame = *pair.frame_side.last().unwrap();
                    let rel = if direct.abs() > 1e-300 {
                        ((direct - frame) / direct).abs()
                    } else {
                        (direct - frame).abs()
                    };
                    Ok((direct, frame, rel))
                })
                .collect();
            let mut csv = Vec::new();
            let mut worst = 0.0f64;
            let mut mean_direct = 0.0;
            let total = rows.len();
            for (pid, r) in rows.into_iter().enumerate() {
                let (direct, frame, rel) = r?;
                worst = worst.max(rel);
                mean_direct += direct / total as f64;
                csv.push(vec![
                    pid.to_string(),
                    fmt_float(direct),
                    fmt_float(frame),
                    fmt_float(rel),
                ]);
            }
            ctx.write(
                "intrinsic_qv.csv",
                &["path", "direct", "frame_side", "relative_gap"],
                &csv,
            )?;
            let ok = worst <= *agreement_tolerance;
            Ok(AnalysisOutcome {
                analysis: "intrinsic_qv".into(),
                status: if ok { Status::Pass } else { Status::Reject },
                summary: format!(
                    "mean ∫g(dX,dX) = {mean_direct:.4}; worst route gap {worst:.2e} (tol {agreement_tolerance:.0e})"
                ),
            })
        }
        AnalysisSpec::Orthonormality {
            halvings,
            max_defect,
        } => {
            let metric = ctx.metric()?.clone();
            let n_paths = ctx.spec.ensemble.paths.clamp(1, 8) as u64;
            let mut defects = Vec::new();
            for level in 0..=*halvings {
                let grid = ctx.grid().refined(1 << level);
                let level_defect: Vec<Result<f64, String>> = (0..n_paths)
                    .into_par_iter()
                    .map(|pid| {
                        let (path, ready) = ctx.simulate(grid, pid)?;
                        let lift = ctx.riemann_lift(&path, ready)?;
                        orthonormality_defect(&lift, &metric).map_err(|e| e.to_string())
                    })
                    .collect();
                let mut worst = 0.0f64;
                for r in level_defect {
                    worst = worst.max(r?);
                }
                defects.push((grid.steps(), grid.h(), worst));
            }
            let mut csv = Vec::new();
            let mut ratios_ok = true;
            let mut ratio_text = Vec::new();
            for (i, (steps, h, defect)) in defects.iter().enumerate() {
                let ratio = if i > 0 {
                    let r = defect / defects[i - 1].2;
                    ratios_ok &= (1.0 / 3.0..=2.0 / 3.0).contains(&r);
                    ratio_text.push(format!("{r:.3}"));
                    fmt_float(r)
                } else {
                    String::new()
                };
                csv.push(vec![
                    steps.to_string(),
                    fmt_float(*h),
                    fmt_float(*defect),
                    ratio,
                ]);
            }
            ctx.write(
                "orthonormality.csv",
                &["steps", "h", "defect", "ratio_to_previous"],
                &csv,
            )?;
            let base_ok = defects[0].2 <= *max_defect;
            Ok(AnalysisOutcome {
                analysis: "orthonormality".into(),
                status: if base_ok && ratios_ok {
                    Status::Pass
                } else {
                    Status::Reject
                },
                summary: format!(
                    "defect {:.3e} (max {max_defect}); halving ratios [{}] within [0.33, 0.67]: {ratios_ok}",
                    defects[0].2,
                    ratio_text.join(", ")
                ),
            })
        }
        AnalysisSpec::TransportOracle { tolerance } => {
            let grid = ctx.grid();
            let metric = ctx.metric()?.clone();
            let rows: Vec<Result<(f64, f64, f64), String>> = (0..ctx.spec.ensemble.paths as u64)
                .into_par_iter()
                .map(|pid| {
                    let (path, _) = ctx.simulate(grid, pid)?;
                    let lift = ctx.connection_lift(&path)?;
                    let p =
                        parallel_transport(&lift, 0, grid.steps()).map_err(|e| e.to_string())?;
                    let u0 = metric
                        .matrix(grid.t0(), path.state(0))
                        .map_err(|e| e.to_string())?[(0, 0)];
                    let ut = metric
                        .matrix(grid.t0(), path.state(grid.steps()))
                        .map_err(|e| e.to_string())?[(0, 0)];
                    let expected = (u0 / ut).sqrt();
                    let rel = ((p.matrix[(0, 0)] - expected) / expected).abs();
                    Ok((p.matrix[(0, 0)], expected, rel))
                })
                .collect();
            let mut csv = Vec::new();
            let mut worst = 0.0f64;
            for (pid, r) in rows.into_iter().enumerate() {
                let (got, expected, rel) = r?;
                worst = worst.max(rel);
                csv.push(vec![
                    pid.to_string(),
                    fmt_float(got),
                    fmt_float(expected),
                    fmt_float(rel),
                ]);
            }
            ctx.write(
                "transport_oracle.csv",
                &["path", "transport", "oracle", "relative_error"],
                &csv,
            )?;
            let ok = worst <= *tolerance;
            Ok(AnalysisOutcome {
                analysis: "transport_oracle".into(),
                status: if ok { Status::Pass } else { Status::Reject },
                summary: format!("worst relative error {worst:.2e} (tol {tolerance:.0e})"),
            })
        }
        AnalysisSpec::LiftRelation { halvings } => {
            let metric = ctx.metric()?.clone();
            let mut maxima = Vec::new();
            for level in 0..=*halvings {
                let grid = ctx.grid().refined(1 << level);
                let (path, _) = ctx.simulate(grid, 0)?;
                let x0 = path.state(0).to_vec();
                let e0 = Frame {
                    basepoint: x0.clone(),
                    matrix: gram_schmidt_frame(&metric, grid.t0(), &x0)
                        .map_err(|e| e.to_string())?,
                };
                let lc =
                    horizontal_lift(&path, &ctx.geom.connection, &e0).map_err(|e| e.to_string())?;
                let lr = riemann_horizontal_lift(&path, &metric, &e0).map_err(|e| e.to_string())?;
                let res = lift_relation_residuals(&lc, &lr, &metric).map_err(|e| e.to_string())?;
                maxima.push((
                    grid.steps(),
                    grid.h(),
                    res.into_iter().fold(0.0f64, f64::max),
                ));
            }
            let mut csv = Vec::new();
            let mut ok = true;
            let mut factors = Vec::new();
            for (i, (steps, h, r)) in maxima.iter().enumerate() {
                let factor = if i > 0 {
                    let f = maxima[i - 1].2 / r;
                    ok &= (2.5..=6.0).contains(&f);
                    factors.push(format!("{f:.2}"));
                    fmt_float(f)
                } else {
                    String::new()
                };
                csv.push(vec![
                    steps.to_string(),
                    fmt_float(*h),
                    fmt_float(*r),
                    factor,
                ]);
            }
            ctx.write(
                "lift_relation.csv",
                &["steps", "h", "max_residual", "decay_factor"],
                &csv,
            )?;
            Ok(AnalysisOutcome {
                analysis: "lift_relation".into(),
                status: if ok { Status::Pass } else { Status::Reject },
                summary: format!(
                    "max residual {:.3e}; halving factors [{}] within [2.5, 6]: {ok}",
                    maxima[0].2,
                    factors.join(", ")
                ),
            })
        }
        AnalysisSpec::GprocessCrosscheck { tolerance } => {
            let grid = ctx.grid();
            let d = ctx.dim();
            let n_paths = ctx.spec.ensemble.paths.clamp(1, 4) as u64;
            let mut csv = Vec::new();
            let mut worst = 0.0f64;
            for pid in 0..n_paths {
                let (path, _) = ctx.simulate(grid, pid)?;
                let tilde = wobble_frames(&grid, d);
                // connection flavor
                let e0 = Frame {
                    basepoint: path.state(0).to_vec(),
                    matrix: tilde[0].clone(),
                };
                let direct =
                    horizontal_lift(&path, &ctx.geom.connection, &e0).map_err(|e| e.to_string())?;
                let via = g_process_lift(
                    &path,
                    LiftGeometry::Connection(&ctx.geom.connection),
                    &tilde,
                )
                .map_err(|e| e.to_string())?;
                let (df, dz) = lift_disagreement(&direct, &via.lift);
                worst = worst.max(df.max(dz));
                csv.push(vec![
                    pid.to_string(),
                    "connection".into(),
                    fmt_float(df),
                    fmt_float(dz),
                ]);
                if pid == 0 {
                    write_lift_csv(ctx, "lift_path.csv", &direct)?;
                }
                // Riemann flavor when a metric is available
                if let Ok(metric) = ctx.metric() {
                    let mut tilde_r = tilde.clone();
                    tilde_r[0] = gram_schmidt_frame(metric, grid.t0(), path.state(0))
                        .map_err(|e| e.to_string())?;
                    let e0r = Frame {
                        basepoint: path.state(0).to_vec(),
                        matrix: tilde_r[0].clone(),
                    };
                    let direct_r =
                        riemann_horizontal_lift(&path, metric, &e0r).map_err(|e| e.to_string())?;
                    let via_r = g_process_lift(&path, LiftGeometry::Riemann(metric), &tilde_r)
                        .map_err(|e| e.to_string())?;
                    let (df, dz) = lift_disagreement(&direct_r, &via_r.lift);
                    worst = worst.max(df.max(dz));
                    csv.push(vec![
                        pid.to_string(),
                        "riemann".into(),
                        fmt_float(df),
                        fmt_float(dz),
                    ]);
                }
            }
            ctx.write(
                "gprocess_crosscheck.csv",
                &["path", "flavor", "max_frame_gap", "max_z_gap"],
                &csv,
            )?;
            let ok = worst <= *tolerance;
            Ok(AnalysisOutcome {
                analysis: "gprocess_crosscheck".into(),
                status: if ok { Status::Pass } else { Status::Reject },
                summary: format!("worst node gap {worst:.2e} (tol {tolerance:.0e})"),
            })
        }
        AnalysisSpec::DampedTransport {
            k,
            norm_tolerance,
            forms_tolerance,
        } => {
            let grid = ctx.grid();
            let metric = ctx.metric()?.clone();
            let conn = metric.levi_civita();
            let expected = (-k * (grid.t_end() - grid.t0()) / 2.0).exp();
            let rows: Vec<Result<(f64, f64), String>> = (0..ctx.spec.ensemble.paths as u64)
                .into_par_iter()
                .map(|pid| {
                    let (path, ready) = ctx.simulate(grid, pid)?;
                    let rlift = ctx.riemann_lift(&path, ready)?;
                    let thetas =
                        damped_transport_brownian(&rlift, &metric).map_err(|e| e.to_string())?;
                    let theta = &thetas[grid.steps()];
                    let norm = g_operator_norm(
                        &metric,
                        grid.t0(),
                        rlift.x(0),
                        grid.t_end(),
                        rlift.x(grid.steps()),
                        &theta.matrix,
                    )
                    .map_err(|e| e.to_string())?;
                    let e0 = Frame {
                        basepoint: path.state(0).to_vec(),
                        matrix: rlift.frame(0).clone(),
                    };
                    let clift = horizontal_lift(&path, &conn, &e0).map_err(|e| e.to_string())?;
                    let general =
                        damped_transport_general(&clift, &conn).map_err(|e| e.to_string())?;
                    let gap = general[grid.steps()].matrix.sub(&theta.matrix).max_abs();
                    Ok((norm, gap))
                })
                .collect();
            let mut csv = Vec::new();
            let mut worst_norm = 0.0f64;
            let mut worst_gap = 0.0f64;
            for (pid, r) in rows.into_iter().enumerate() {
                let (norm, gap) = r?;
                worst_norm = worst_norm.max((norm - expected).abs());
                worst_gap = worst_gap.max(gap);
                csv.push(vec![
                    pid.to_string(),
                    fmt_float(norm),
                    fmt_float(expected),
                    fmt_float(gap),
                ]);
            }
            ctx.write(
                "damped_transport.csv",
                &["path", "operator_norm", "expected", "forms_gap"],
                &csv,
            )?;
            let ok = worst_norm <= *norm_tolerance && worst_gap <= *forms_tolerance;
            Ok(AnalysisOutcome {
                analysis: "damped_transport".into(),
                status: if ok { Status::Pass } else { Status::Reject },
                summary: format!(
                    "‖Θ‖ within {worst_norm:.2e} of {expected:.6}; forms gap {worst_gap:.2e}"
                ),
            })
        }
        AnalysisSpec::Heat {
            u_init,
            j,
            time_steps,
            oracle,
            max_error,
        } => {
            let metric = ctx.metric()?.clone();
            let init = ScalarField::parse(u_init, ctx.dim()).map_err(|e| e.to_string())?;
            let sol = solve_heat_1d(
                &metric,
                &init,
                ctx.spec.grid.t0,
                ctx.spec.grid.t_end,
                *j,
                *time_steps,
            )
            .map_err(|e| e.to_string())?;
            write_heat_csv(ctx, "heat.csv", &sol)?;
            let (status, summary) = match oracle {
                Some(HeatOracle::SeparableSin) => {
                    let err = separable_sin_error(&metric, &sol)?;
                    let bound = max_error.unwrap_or(1e-3);
                    (
                        if err <= bound {
                            Status::Pass
                        } else {
                            Status::Reject
                        },
                        format!("max error vs separable solution {err:.2e} (tol {bound:.0e})"),
                    )
                }
                None => (
                    Status::Pass,
                    format!("solved {} steps on {} nodes", time_steps, j),
                ),
            };
            Ok(AnalysisOutcome {
                analysis: "heat".into(),
                status,
                summary,
            })
        }
        AnalysisSpec::Representation {
            u_init,
            j,
            heat_steps,
            mc_paths,
            mc_steps,
            v,
            bias_allowance,
        } => {
            let metric = ctx.metric()?.clone();
            let init = ScalarField::parse(u_init, ctx.dim()).map_err(|e| e.to_string())?;
            let sol = solve_heat_1d(
                &metric,
                &init,
                ctx.spec.grid.t0,
                ctx.spec.grid.t_end,
                *j,
                *heat_steps,
            )
            .map_err(|e| e.to_string())?;
            let x = ctx.spec.process.x0()[0];
            let check = representation_check(&metric, &sol, x, *v, *mc_paths, ctx.seed, *mc_steps)
                .map_err(|e| e.to_string())?;
            let ok = check.within(*bias_allowance);
            ctx.write(
                "representation.csv",
                &["lhs", "rhs", "stderr", "paths", "decision"],
                &[vec![
                    fmt_float(check.lhs),
                    fmt_float(check.rhs),
                    fmt_float(check.stderr),
                    check.n_paths.to_string(),
                    if ok { "pass".into() } else { "reject".into() },
                ]],
            )?;
            Ok(AnalysisOutcome {
                analysis: "representation".into(),
                status: if ok { Status::Pass } else { Status::Reject },
                summary: format!(
                    "lhs {:.6} vs rhs {:.6} ± {:.1e} (allowance {:.0e})",
                    check.lhs, check.rhs, check.stderr, bias_allowance
                ),
            })
        }
        AnalysisSpec::Liouville {
            u_init,
            j,
            heat_steps,
            k,
            slack,
        } => {
            let metric = ctx.metric()?.clone();
            let init = ScalarField::parse(u_init, ctx.dim()).map_err(|e| e.to_string())?;
            let sol = solve_heat_1d(
                &metric,
                &init,
                ctx.spec.grid.t0,
                ctx.spec.grid.t_end,
                *j,
                *heat_steps,
            )
            .map_err(|e| e.to_string())?;
            let check = gradient_decay_check(&metric, &sol, *k).map_err(|e| e.to_string())?;
            let ok = check.satisfied(*slack);
            ctx.write(
                "liouville.csv",
                &[
                    "sup_initial",
                    "sup_final",
                    "observed_ratio",
                    "bound",
                    "decision",
                ],
                &[vec![
                    fmt_float(check.sup_initial),
                    fmt_float(check.sup_final),
                    fmt_float(check.observed_ratio),
                    fmt_float(check.bound),
                    if ok { "pass".into() } else { "reject".into() },
                ]],
            )?;
            Ok(AnalysisOutcome {
                analysis: "liouville".into(),
                status: if ok { Status::Pass } else { Status::Reject },
                summary: format!(
                    "sup-gradient ratio {:.6} vs bound {:.6}",
                    check.observed_ratio, check.bound
                ),
            })
        }
    }
}

fn decision_outcome(
    name: &str,
    stat: &DriftStatistic,
    expect: Option<ExpectDecision>,
) -> AnalysisOutcome {
    let expected = match expect.unwrap_or(ExpectDecision::Consistent) {
        ExpectDecision::Consistent => Decision::Consistent,
        ExpectDecision::Rejected => Decision::Rejected,
    };
    let status = if stat.decision == expected {
        Status::Pass
    } else {
        Status::Reject
    };
    AnalysisOutcome {
        analysis: name.into(),
        status,
        summary: format!(
            "{} (max |z| = {:.2}, threshold {}, {} paths, {} failed)",
            stat.decision, stat.max_statistic, stat.threshold, stat.paths_used, stat.paths_failed
        ),
    }
}

fn write_drift_statistic(ctx: &Ctx<'_>, file: &str, stat: &DriftStatistic) -> Result<(), String> {
    let mut rows = Vec::with_capacity(stat.rows.len() + 1);
    for r in &stat.rows {
        rows.push(vec![
            "bucket".into(),
            r.bucket.to_string(),
            r.component.to_string(),
            fmt_float(r.mean),
            fmt_float(r.stderr),
            fmt_float(r.z),
            String::new(),
            String::new(),
            String::new(),
        ]);
    }
    rows.push(vec![
        "summary".into(),
        String::new(),
        String::new(),
        fmt_float(stat.terminal_means[0]),
        fmt_float(stat.terminal_stderrs[0]),
        String::new(),
        fmt_float(stat.max_statistic),
        fmt_float(stat.threshold),
        stat.decision.to_string(),
    ]);
    ctx.write(
        file,
        &[
            "kind",
            "bucket",
            "component",
            "mean",
            "stderr",
            "z",
            "max_statistic",
            "threshold",
            "decision",
        ],
        &rows,
    )
}

/// Deliberately non-horizontal frames above a path: rotation blocks plus a
/// breathing scale, deterministic in time.
fn wobble_frames(grid: &TimeGrid, d: usize) -> Vec<MatrixF> {
    (0..=grid.steps())
        .map(|k| {
            let t = grid.node(k);
            let scale = 1.0 + 0.3 * (3.0 * t).sin();
            let mut m = MatrixF::identity(d).scale(scale);
            let (s, c) = (2.0 * t).sin_cos();
            let mut pair = 0;
            while pair + 1 < d {
                m[(pair, pair)] = scale * c;
                m[(pair, pair + 1)] = -scale * s;
                m[(pair + 1, pair)] = scale * s;
                m[(pair + 1, pair + 1)] = scale * c;
                pair += 2;
            }
            m
        })
        .collect()
}

fn lift_disagreement(a: &LiftPath, b: &LiftPath) -> (f64, f64) {
    let n = a.grid.steps();
    let mut frame_gap = 0.0f64;
    for k in 0..=n {
        frame_gap = frame_gap.max(a.frame(k).sub(b.frame(k)).max_abs());
    }
    let za = a.z_cumulative();
    let zb = b.z_cumulative();
    let z_gap = za
        .iter()
        .zip(&zb)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    (frame_gap, z_gap)
}

/// Lift-path CSV with the columns `t, x1..xd, e11..edd (row-major), z1..zd`.
fn write_lift_csv(ctx: &Ctx<'_>, file: &str, lift: &LiftPath) -> Result<(), String> {
    let d = lift.dim;
    let mut header: Vec<String> = vec!["t".into()];
    for i in 1..=d {
        header.push(format!("x{i}"));
    }
    for i in 1..=d {
        for j in 1..=d {
            header.push(format!("e{i}{j}"));
        }
    }
    for i in 1..=d {
        header.push(format!("z{i}"));
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let z = lift.z_cumulative();
    let mut rows = Vec::with_capacity(lift.grid.steps() + 1);
    for k in 0..=lift.grid.steps() {
        let mut row = vec![fmt_float(lift.grid.node(k))];
        for v in lift.x(k) {
            row.push(fmt_float(*v));
        }
        let e = lift.frame(k);
        for i in 0..d {
            for j in 0..d {
                row.push(fmt_float(e[(i, j)]));
            }
        }
        for i in 0..d {
            row.push(fmt_float(z[k * d + i]));
        }
        rows.push(row);
    }
    ctx.write(file, &header_refs, &rows)
}

/// Rows `(t, θ, u)` thinned to at most 65 time slices.
fn write_heat_csv(ctx: &Ctx<'_>, file: &str, sol: &HeatSolution) -> Result<(), String> {
    let stride = (sol.nt / 64).max(1);
    let mut rows = Vec::new();
    let mut step = 0;
    while step <= sol.nt {
        for i in 0..sol.j_nodes {
            rows.push(vec![
                fmt_float(sol.time(step)),
                fmt_float(sol.theta(i)),
                fmt_float(sol.value(step, i)),
            ]);
        }
        if step == sol.nt {
            break;
        }
        step = (step + stride).min(sol.nt);
    }
    ctx.write(file, &["t", "theta", "u"], &rows)
}

/// Reference amplitude for a spatially constant conformal circle metric:
/// `u(t,θ) = exp(−½ ∫ g^{11}(s) ds) sin θ`.
fn separable_sin_error(metric: &MetricFamily, sol: &HeatSolution) -> Result<f64, String> {
    let g_entry = metric.form().entry(0, 0);
    if g_entry.expression().max_coord() > 0 {
        return Err("separable_sin oracle needs a spatially constant metric".into());
    }
    // Simpson integral of g^{11}(s) over [t1, t2]
    let panels = 2048;
    let h = (sol.t2 - sol.t1) / panels as f64;
    let g_inv = |t: f64| -> Result<f64, String> {
        let v = g_entry.value(t, &[0.0]).map_err(|e| e.to_string())?;
        Ok(1.0 / v)
    };
    let mut integral = g_inv(sol.t1)? + g_inv(sol.t2)?;
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        integral += w * g_inv(sol.t1 + i as f64 * h)?;
    }
    integral *= h / 3.0;
    let amp = (-0.5 * integral).exp();
    let mut worst = 0.0f64;
    for i in 0..sol.j_nodes {
        let expect = amp * sol.theta(i).sin();
        worst = worst.max((sol.value(sol.nt, i) - expect).abs());
    }
    Ok(worst)
}
