//! Frame-bundle constructions over a chart: horizontal and
//! Riemann-horizontal lifts, the alternative lift through the gauge process
//! `G`, antidevelopment and development, and the parallel / damped-parallel
//! transports.
//!
//! A frame is a `d×d` invertible matrix whose column `i` holds the chart
//! coordinates of `u e_i`. Horizontality is enforced by the coordinate SDE
//!
//! ```text
//! de = −Γ(∘dx) e                        (connection-horizontal)
//! de = −Γ(∘dx) e − ½ e (eᵀ ∂g/∂t e) dt  (Riemann-horizontal)
//! ```
//!
//! and the antidevelopment increments by `ΔZ_k = e_mid^{-1} Δx_k` with
//! `e_mid = ½(e_k + e*_k)`, `e*` the Euler predictor. Every Stratonovich
//! integral in this module uses that same predictor-midpoint convention, so
//! development and antidevelopment are exact mutual inverses at the step
//! level, and the gauge-process route reproduces the direct lift node-wise
//! instead of merely converging to it.
//!
//! dt-drift terms (the vertical correction and the damped-transport
//! equations) are integrated with the plain Euler rule: the frame
//! orthonormality defect then decays at first order in the step size, which
//! is what the measured-invariant contracts expect.

use crate::geometry::{Christoffel, ConnectionFamily, GeometryError, MetricFamily};
use crate::linalg::{LinalgError, MatrixF, SINGULAR_EPS};
use crate::sde::{SemimartingalePath, TimeGrid};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FrameError {
    #[error("frame is degenerate at step {step} (|det| < {SINGULAR_EPS})")]
    DegenerateFrame { step: usize },
    #[error("initial frame is not orthonormal for g(t0, x0): defect {defect:.3e} > 1e-10")]
    NotOrthonormal { defect: f64 },
    #[error("lift does not project onto the given path (node {step})")]
    PathMismatch { step: usize },
    #[error("lifts live on different grids or dimensions")]
    GridMismatch,
    #[error("expected a {expected:?} lift, got {got:?}")]
    FlavorMismatch {
        expected: LiftFlavor,
        got: LiftFlavor,
    },
    #[error("gauge process is degenerate at step {step}")]
    DegenerateGauge { step: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which horizontality the lift realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftFlavor {
    ConnectionHorizontal,
    RiemannHorizontal,
}

/// A frame at a point: basis of the tangent space as matrix columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub basepoint: Vec<f64>,
    pub matrix: MatrixF,
}

impl Frame {
    pub fn new(basepoint: Vec<f64>, matrix: MatrixF) -> Result<Self, FrameError> {
        if matrix.det()?.abs() < SINGULAR_EPS {
            return Err(FrameError::DegenerateFrame { step: 0 });
        }
        Ok(Frame { basepoint, matrix })
    }

    pub fn identity(basepoint: Vec<f64>) -> Self {
        let d = basepoint.len();
        Frame {
            basepoint,
            matrix: MatrixF::identity(d),
        }
    }
}

/// Discretized frame-bundle path above a base path, with its
/// antidevelopment increments.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftPath {
    pub grid: TimeGrid,
    pub dim: usize,
    pub flavor: LiftFlavor,
    /// Base-path nodes, `(n+1) × d` (copied, π-compatible by construction).
    states: Vec<f64>,
    /// Frames at the nodes, `n+1`.
    frames: Vec<MatrixF>,
    /// Midpoint frames `½(e_k + e*_k)` used for every ϑ-type integral, `n`.
    mid_frames: Vec<MatrixF>,
    /// Antidevelopment increments, `n × d`.
    dz: Vec<f64>,
}

impl LiftPath {
    /// Assembly from raw parts; used by the joint Brownian-motion
    /// integrator, which produces its lift alongside the path.
    pub(crate) fn from_parts(
        grid: TimeGrid,
        dim: usize,
        flavor: LiftFlavor,
        states: Vec<f64>,
        frames: Vec<MatrixF>,
        mid_frames: Vec<MatrixF>,
        dz: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(states.len(), (grid.steps() + 1) * dim);
        debug_assert_eq!(frames.len(), grid.steps() + 1);
        debug_assert_eq!(mid_frames.len(), grid.steps());
        debug_assert_eq!(dz.len(), grid.steps() * dim);
        LiftPath {
            grid,
            dim,
            flavor,
            states,
            frames,
            mid_frames,
            dz,
        }
    }

    #[inline]
    pub fn x(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    #[inline]
    pub fn frame(&self, k: usize) -> &MatrixF {
        &self.frames[k]
    }

    #[inline]
    pub fn mid_frame(&self, k: usize) -> &MatrixF {
        &self.mid_frames[k]
    }

    #[inline]
    pub fn dz(&self, k: usize) -> &[f64] {
        &self.dz[k * self.dim..(k + 1) * self.dim]
    }

    /// Cumulative antidevelopment `Z_k = Σ_{j<k} ΔZ_j`, `(n+1) × d`
    /// (so `Z_0 = 0`).
    pub fn z_cumulative(&self) -> Vec<f64> {
        let d = self.dim;
        let n = self.grid.steps();
        let mut z = vec![0.0; (n + 1) * d];
        for k in 0..n {
            for i in 0..d {
                z[(k + 1) * d + i] = z[k * d + i] + self.dz[k * d + i];
            }
        }
        z
    }

    /// Base-path increment `Δx_k`.
    pub fn dx(&self, k: usize) -> Vec<f64> {
        let d = self.dim;
        let a = self.x(k);
        let b = self.x(k + 1);
        (0..d).map(|i| b[i] - a[i]).collect()
    }
}

/// Geometry a lift integrates against.
#[derive(Clone)]
pub enum LiftGeometry<'a> {
    Connection(&'a ConnectionFamily),
    Riemann(&'a MetricFamily),
}

impl<'a> LiftGeometry<'a> {
    pub fn flavor(&self) -> LiftFlavor {
        match self {
            LiftGeometry::Connection(_) => LiftFlavor::ConnectionHorizontal,
            LiftGeometry::Riemann(_) => LiftFlavor::RiemannHorizontal,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LiftGeometry::Connection(c) => c.dim(),
            LiftGeometry::Riemann(m) => m.dim(),
        }
    }
}

/// Owned per-lift stepping context (the Levi-Civita connection of a metric
/// is materialized once per lift, not once per step).
struct Stepper<'a> {
    conn: ConnectionOrRef<'a>,
    metric: Option<&'a MetricFamily>,
}

enum ConnectionOrRef<'a> {
    Ref(&'a ConnectionFamily),
    Owned(ConnectionFamily),
}

impl<'a> Stepper<'a> {
    fn new(geom: &LiftGeometry<'a>) -> Self {
        match geom {
            LiftGeometry::Connection(c) => Stepper {
                conn: ConnectionOrRef::Ref(c),
                metric: None,
            },
            LiftGeometry::Riemann(m) => Stepper {
                conn: ConnectionOrRef::Owned(m.levi_civita()),
                metric: Some(m),
            },
        }
    }

    fn christoffel(&self, t: f64, x: &[f64]) -> Result<Christoffel, GeometryError> {
        match &self.conn {
            ConnectionOrRef::Ref(c) => c.christoffel(t, x),
            ConnectionOrRef::Owned(c) => c.christoffel(t, x),
        }
    }

    /// Euler drift `−½ e (eᵀ ∂g/∂t e) h` of the Riemann-horizontal lift,
    /// evaluated at the step start; `None` for connection lifts.
    fn vertical_drift(
        &self,
        t: f64,
        x: &[f64],
        e: &MatrixF,
        h: f64,
    ) -> Result<Option<MatrixF>, GeometryError> {
        match self.metric {
            None => Ok(None),
            Some(m) => {
                let gdot = m.metric_dt(t, x)?;
                let p = e.transpose().matmul(&gdot).matmul(e);
                Ok(Some(e.matmul(&p).scale(-0.5 * h)))
            }
        }
    }
}

struct StepOutput {
    e_next: MatrixF,
    e_mid: MatrixF,
}

/// One Heun step of the frame equation along a known base increment.
/// `include_vertical` distinguishes the full step from the connection-only
/// step used to measure the gauge defect.
fn frame_step(
    stepper: &Stepper<'_>,
    t0: f64,
    t1: f64,
    x0: &[f64],
    x1: &[f64],
    e: &MatrixF,
    include_vertical: bool,
) -> Result<StepOutput, FrameError> {
    let d = e.rows();
    let dx: Vec<f64> = (0..d).map(|i| x1[i] - x0[i]).collect();
    let h = t1 - t0;
    let gamma0 = stepper.christoffel(t0, x0)?;
    let a0e = gamma0.contract_direction(&dx).matmul(e);
    let drift = if include_vertical {
        stepper.vertical_drift(t0, x0, e, h)?
    } else {
        None
    };
    let mut e_pred = e.sub(&a0e);
    if let Some(dr) = &drift {
        e_pred = e_pred.add(dr);
    }
    let gamma1 = stepper.christoffel(t1, x1)?;
    let a1ep = gamma1.contract_direction(&dx).matmul(&e_pred);
    let mut e_next = e.sub(&a0e.add(&a1ep).scale(0.5));
    if let Some(dr) = &drift {
        e_next = e_next.add(dr);
    }
    let e_mid = e.average(&e_pred);
    Ok(StepOutput { e_next, e_mid })
}

fn lift_with(
    x: &SemimartingalePath,
    geom: &LiftGeometry<'_>,
    e0: &Frame,
) -> Result<LiftPath, FrameError> {
    let d = x.dim;
    let n = x.grid.steps();
    let stepper = Stepper::new(geom);
    let mut frames = Vec::with_capacity(n + 1);
    let mut mids = Vec::with_capacity(n);
    let mut dz = Vec::with_capacity(n * d);
    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(x.state(0));
    let mut e = e0.matrix.clone();
    if e.det()?.abs() < SINGULAR_EPS {
        return Err(FrameError::DegenerateFrame { step: 0 });
    }
    frames.push(e.clone());
    for k in 0..n {
        let t0 = x.grid.node(k);
        let t1 = x.grid.node(k + 1);
        let x0 = x.state(k);
        let x1 = x.state(k + 1);
        let out = frame_step(&stepper, t0, t1, x0, x1, &e, true)?;
        let dx: Vec<f64> = (0..d).map(|i| x1[i] - x0[i]).collect();
        let zinc = out
            .e_mid
            .solve(&dx)
            .map_err(|_| FrameError::DegenerateFrame { step: k })?;
        if out.e_next.det()?.abs() < SINGULAR_EPS {
            return Err(FrameError::DegenerateFrame { step: k + 1 });
        }
        dz.extend_from_slice(&zinc);
        mids.push(out.e_mid);
        e = out.e_next;
        frames.push(e.clone());
        states.extend_from_slice(x1);
    }
    Ok(LiftPath {
        grid: x.grid,
        dim: d,
        flavor: geom.flavor(),
        states,
        frames,
        mid_frames: mids,
        dz,
    })
}

/// Horizontal lift of `x` for the connection family, starting at `e0`.
pub fn horizontal_lift(
    x: &SemimartingalePath,
    conn: &ConnectionFamily,
    e0: &Frame,
) -> Result<LiftPath, FrameError> {
    lift_with(x, &LiftGeometry::Connection(conn), e0)
}

/// Riemann-horizontal lift; `e0` must be orthonormal for `g(t0, x0)`.
pub fn riemann_horizontal_lift(
    x: &SemimartingalePath,
    metric: &MetricFamily,
    e0: &Frame,
) -> Result<LiftPath, FrameError> {
    let t0 = x.grid.t0();
    let x0 = x.state(0);
    let g = metric.matrix(t0, x0)?;
    let gram = e0.matrix.transpose().matmul(&g).matmul(&e0.matrix);
    let defect = gram.sub(&MatrixF::identity(metric.dim())).max_abs();
    if defect > 1e-10 {
        return Err(FrameError::NotOrthonormal { defect });
    }
    lift_with(x, &LiftGeometry::Riemann(metric), e0)
}

/// Default initial frame for a Riemann lift: Gram–Schmidt of the coordinate
/// basis under `g(t, x)`.
pub fn gram_schmidt_frame(metric: &MetricFamily, t: f64, x: &[f64]) -> Result<MatrixF, FrameError> {
    let d = metric.dim();
    let g = metric.matrix(t, x)?;
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for i in 0..d {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        for u in &cols {
            let proj = crate::linalg::dot(&g.matvec(u), &v);
            for (vj, uj) in v.iter_mut().zip(u) {
                *vj -= proj * uj;
            }
        }
        let norm = crate::linalg::dot(&g.matvec(&v), &v).sqrt();
        for vj in v.iter_mut() {
            *vj /= norm;
        }
        cols.push(v);
    }
    Ok(MatrixF::from_fn(d, d, |i, j| cols[j][i]))
}

/// Result of the gauge-process construction.
pub struct GProcessLift {
    pub lift: LiftPath,
    /// Gauge matrices `G_k`, `n+1`.
    pub gauge: Vec<MatrixF>,
    /// Discrete increments of `γ = ∫ω(∘dŨ)` along the input lift, `n`.
    pub gamma_increments: Vec<MatrixF>,
}

/// Build the horizontal (or Riemann-horizontal) lift from an arbitrary lift
/// `ẽ` of the same base path, via the gauge process `G` solving
/// `dG = −(∘dγ) G` (with the `∂g/∂t` drift in the Riemann flavor) and
/// `U = Ũ G`; the antidevelopment comes from `dZ = G^{-1} ∘dZ̃`.
///
/// The discrete γ, G and Z̃ steps reuse the exact step maps of the direct
/// lift, so the output agrees with [`horizontal_lift`] /
/// [`riemann_horizontal_lift`] node-wise up to rounding — with a horizontal
/// input the gauge defect γ vanishes identically and `G ≡ I`.
pub fn g_process_lift(
    x: &SemimartingalePath,
    geom: LiftGeometry<'_>,
    tilde_frames: &[MatrixF],
) -> Result<GProcessLift, FrameError> {
    let d = x.dim;
    let n = x.grid.steps();
    if tilde_frames.len() != n + 1 {
        return Err(FrameError::GridMismatch);
    }
    let stepper = Stepper::new(&geom);
    let mut gauge = Vec::with_capacity(n + 1);
    let mut gammas = Vec::with_capacity(n);
    let mut frames = Vec::with_capacity(n + 1);
    let mut mids = Vec::with_capacity(n);
    let mut dz = Vec::with_capacity(n * d);
    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(x.state(0));

    let mut g = MatrixF::identity(d);
    gauge.push(g.clone());
    let mut e = tilde_frames[0].clone(); // U_0 = Ũ_0
    frames.push(e.clone());

    for k in 0..n {
        let t0 = x.grid.node(k);
        let t1 = x.grid.node(k + 1);
        let x0 = x.state(k);
        let x1 = x.state(k + 1);
        let tilde0 = &tilde_frames[k];
        let tilde1 = &tilde_frames[k + 1];

        // γ-increment: trapezoidal defect of ẽ against the connection-only
        // step, referenced to the predictor midpoint of ẽ.
        let conn_step = frame_step(&stepper, t0, t1, x0, x1, tilde0, false)?;
        let defect = tilde1.sub(&conn_step.e_next);
        let dgamma = conn_step
            .e_mid
            .solve_matrix(&defect)
            .map_err(|_| FrameError::DegenerateGauge { step: k })?;
        gammas.push(dgamma);

        // Full step applied to the current U-frame e = ẽ G.
        let out = frame_step(&stepper, t0, t1, x0, x1, &e, true)?;

        // G_{k+1} = ẽ_{k+1}^{-1} U_{k+1}
        g = tilde1
            .solve_matrix(&out.e_next)
            .map_err(|_| FrameError::DegenerateGauge { step: k + 1 })?;
        gauge.push(g.clone());

        // dZ = G^{-1} ∘ dZ̃ at matching midpoints: Z̃ through the midpoint of
        // the given lift, G at the compatible midpoint m̃^{-1} e_mid.
        let dx: Vec<f64> = (0..d).map(|i| x1[i] - x0[i]).collect();
        let tilde_mid = tilde0.average(tilde1);
        let dz_tilde = tilde_mid
            .solve(&dx)
            .map_err(|_| FrameError::DegenerateFrame { step: k })?;
        let g_mid = tilde_mid
            .solve_matrix(&out.e_mid)
            .map_err(|_| FrameError::DegenerateGauge { step: k })?;
        let zinc = g_mid
            .solve(&dz_tilde)
            .map_err(|_| FrameError::DegenerateGauge { step: k })?;
        dz.extend_from_slice(&zinc);

        mids.push(out.e_mid);
        e = out.e_next;
        frames.push(e.clone());
        states.extend_from_slice(x1);
    }

    Ok(GProcessLift {
        lift: LiftPath {
            grid: x.grid,
            dim: d,
            flavor: geom.flavor(),
            states,
            frames,
            mid_frames: mids,
            dz,
        },
        gauge,
        gamma_increments: gammas,
    })
}

/// Develop a flat path `Z` into the manifold: solves `dx = e ∘dZ`,
/// `de = −Γ(∘dx) e` (plus the vertical drift in the Riemann flavor) with the
/// same midpoint convention as the lifts, so developing an antidevelopment
/// reproduces the original lift node-wise.
pub fn develop(
    grid: TimeGrid,
    dz: &[f64],
    e0: &Frame,
    geom: LiftGeometry<'_>,
) -> Result<LiftPath, FrameError> {
    let d = geom.dim();
    let n = grid.steps();
    assert_eq!(dz.len(), n * d, "dz must hold n*d increments");
    let stepper = Stepper::new(&geom);
    let mut frames = Vec::with_capacity(n + 1);
    let mut mids = Vec::with_capacity(n);
    let mut states = Vec::with_capacity((n + 1) * d);
    let mut x = e0.basepoint.clone();
    states.extend_from_slice(&x);
    let mut e = e0.matrix.clone();
    frames.push(e.clone());

    for k in 0..n {
        let t0 = grid.node(k);
        let t1 = grid.node(k + 1);
        let h = t1 - t0;
        let dzk = &dz[k * d..(k + 1) * d];

        // Δx solves Δx = e_mid(Δx) ΔZ; with Γ frozen at the step start this
        // is affine in Δx, so invert it exactly:
        //   e_mid(Δx) = e − ½ Γ[Δx] e + ½ drift,
        //   (I + L) Δx = (e + ½ drift) ΔZ,  L_{il} = ½ Σ_m Γ^i_{lm} (eΔZ)_m.
        let gamma0 = stepper.christoffel(t0, &x)?;
        let drift = stepper.vertical_drift(t0, &x, &e, h)?;
        let edz = e.matvec(dzk);
        let mut base = edz.clone();
        if let Some(dr) = &drift {
            let extra = dr.scale(0.5).matvec(dzk);
            for (b, ex) in base.iter_mut().zip(&extra) {
                *b += ex;
            }
        }
        let mut system = MatrixF::identity(d);
        for i in 0..d {
            for l in 0..d {
                let mut acc = 0.0;
                for (m_idx, &em) in edz.iter().enumerate() {
                    acc += gamma0.get(i, l, m_idx) * em;
                }
                system[(i, l)] += 0.5 * acc;
            }
        }
        let dx = system
            .solve(&base)
            .map_err(|_| FrameError::DegenerateFrame { step: k })?;
        let x1: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();

        let out = frame_step(&stepper, t0, t1, &x, &x1, &e, true)?;
        if out.e_next.det()?.abs() < SINGULAR_EPS {
            return Err(FrameError::DegenerateFrame { step: k + 1 });
        }
        mids.push(out.e_mid);
        e = out.e_next;
        frames.push(e.clone());
        x = x1;
        states.extend_from_slice(&x);
    }

    Ok(LiftPath {
        grid,
        dim: d,
        flavor: geom.flavor(),
        states,
        frames,
        mid_frames: mids,
        dz: dz.to_vec(),
    })
}

/// Kind of transport operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Parallel,
    RiemannParallel,
    Damped,
}

/// A linear map between tangent fibres along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportOperator {
    pub matrix: MatrixF,
    pub from_index: usize,
    pub to_index: usize,
    pub kind: TransportKind,
}

/// Parallel transport `//_{s,t} = e_t e_s^{-1}` read off a lift.
pub fn parallel_transport(
    lift: &LiftPath,
    s: usize,
    t: usize,
) -> Result<TransportOperator, FrameError> {
    let es_inv = lift
        .frame(s)
        .inverse()
        .map_err(|_| FrameError::DegenerateFrame { step: s })?;
    let kind = match lift.flavor {
        LiftFlavor::ConnectionHorizontal => TransportKind::Parallel,
        LiftFlavor::RiemannHorizontal => TransportKind::RiemannParallel,
    };
    Ok(TransportOperator {
        matrix: lift.frame(t).matmul(&es_inv),
        from_index: s,
        to_index: t,
        kind,
    })
}

/// Damped parallel transport from the curvature equation
/// `Δ(//^{-1}Θ) = −½ //^{-1} R(Θ, Δx) Δx` (realized brackets), along a
/// connection-horizontal lift.
pub fn damped_transport_general(
    lift: &LiftPath,
    conn: &ConnectionFamily,
) -> Result<Vec<TransportOperator>, FrameError> {
    if lift.flavor != LiftFlavor::ConnectionHorizontal {
        return Err(FrameError::FlavorMismatch {
            expected: LiftFlavor::ConnectionHorizontal,
            got: lift.flavor,
        });
    }
    damped_walk(lift, |t, x, dx, _h, par, theta| {
        let riem = conn.curvature(t, x)?;
        let m = riem.contract_bracket(dx, dx);
        Ok(par.solve_matrix(&m.matmul(theta)).map(|v| v.scale(-0.5))?)
    })
}

/// Damped parallel transport in the Brownian form
/// `ΔA = ½ (//^{Riem})^{-1} ((∂g/∂t)^# − Ric^#) Θ h`, along the
/// Riemann-horizontal lift of a `g(t)`-Brownian motion.
pub fn damped_transport_brownian(
    lift: &LiftPath,
    metric: &MetricFamily,
) -> Result<Vec<TransportOperator>, FrameError> {
    if lift.flavor != LiftFlavor::RiemannHorizontal {
        return Err(FrameError::FlavorMismatch {
            expected: LiftFlavor::RiemannHorizontal,
            got: lift.flavor,
        });
    }
    damped_walk(lift, |t, x, _dx, h, par, theta| {
        let dg_sharp = metric.metric_dt_sharp(t, x)?;
        let ric_sharp = metric.ricci_sharp(t, x)?;
        let gen = dg_sharp.sub(&ric_sharp);
        Ok(par
            .solve_matrix(&gen.matmul(theta))
            .map(|v| v.scale(0.5 * h))?)
    })
}

/// Shared integration loop: `A_{k+1} = A_k + ΔA_k`, `Θ_k = //_{0,k} A_k`.
fn damped_walk(
    lift: &LiftPath,
    delta_a: impl Fn(f64, &[f64], &[f64], f64, &MatrixF, &MatrixF) -> Result<MatrixF, FrameError>,
) -> Result<Vec<TransportOperator>, FrameError> {
    let d = lift.dim;
    let n = lift.grid.steps();
    let h = lift.grid.h();
    let e0_inv = lift
        .frame(0)
        .inverse()
        .map_err(|_| FrameError::DegenerateFrame { step: 0 })?;
    let mut a = MatrixF::identity(d);
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let par = lift.frame(k).matmul(&e0_inv);
        let theta = par.matmul(&a);
        out.push(TransportOperator {
            matrix: theta.clone(),
            from_index: 0,
            to_index: k,
            kind: TransportKind::Damped,
        });
        if k == n {
            break;
        }
        let t = lift.grid.node(k);
        let dx = lift.dx(k);
        let da = delta_a(t, lift.x(k), &dx, h, &par, &theta)?;
        a = a.add(&da);
    }
    Ok(out)
}

/// Per-step residual of the gauge relation between the connection lift and
/// the Riemann lift of the same path:
/// `r_k = ‖Q_{k+1} − Q_k + (h/4)(F_k + F_{k+1})‖` with `Q = e^{-1} e^{Riem}`
/// and `F = e^{-1} (∂g/∂t)^# e^{Riem}` (trapezoidal form).
pub fn lift_relation_residuals(
    conn_lift: &LiftPath,
    riem_lift: &LiftPath,
    metric: &MetricFamily,
) -> Result<Vec<f64>, FrameError> {
    if conn_lift.grid != riem_lift.grid || conn_lift.dim != riem_lift.dim {
        return Err(FrameError::GridMismatch);
    }
    let n = conn_lift.grid.steps();
    for k in 0..=n {
        if conn_lift
            .x(k)
            .iter()
            .zip(riem_lift.x(k))
            .any(|(a, b)| a != b)
        {
            return Err(FrameError::PathMismatch { step: k });
        }
    }
    let h = conn_lift.grid.h();
    let node = |k: usize| -> Result<(MatrixF, MatrixF), FrameError> {
        let t = conn_lift.grid.node(k);
        let x = conn_lift.x(k);
        let e_inv = conn_lift
            .frame(k)
            .inverse()
            .map_err(|_| FrameError::DegenerateFrame { step: k })?;
        let q = e_inv.matmul(riem_lift.frame(k));
        let sharp = metric.metric_dt_sharp(t, x)?;
        let f = e_inv.matmul(&sharp).matmul(riem_lift.frame(k));
        Ok((q, f))
    };
    let mut residuals = Vec::with_capacity(n);
    let (mut q_prev, mut f_prev) = node(0)?;
    for k in 0..n {
        let (q_next, f_next) = node(k + 1)?;
        let r = q_next.sub(&q_prev).add(&f_prev.add(&f_next).scale(h / 4.0));
        residuals.push(r.max_abs());
        q_prev = q_next;
        f_prev = f_next;
    }
    Ok(residuals)
}

/// Worst frame-orthonormality defect along a lift:
/// `max_k max_ij |⟨e_k e_i, e_k e_j⟩_{g(t_k, x_k)} − δ_ij|`.
pub fn orthonormality_defect(lift: &LiftPath, metric: &MetricFamily) -> Result<f64, FrameError> {
    let d = lift.dim;
    let mut worst = 0.0f64;
    for k in 0..=lift.grid.steps() {
        let g = metric.matrix(lift.grid.node(k), lift.x(k))?;
        let gram = lift.frame(k).transpose().matmul(&g).matmul(lift.frame(k));
        let defect = gram.sub(&MatrixF::identity(d)).max_abs();
        worst = worst.max(defect);
    }
    Ok(worst)
}

/// Operator norm of a fibre map `T_{(t_from, x_from)} → T_{(t_to, x_to)}`
/// measured in the corresponding metrics: `‖G_to^{1/2} A G_from^{-1/2}‖₂`.
pub fn g_operator_norm(
    metric: &MetricFamily,
    t_from: f64,
    x_from: &[f64],
    t_to: f64,
    x_to: &[f64],
    a: &MatrixF,
) -> Result<f64, FrameError> {
    let g_from = metric.matrix(t_from, x_from)?;
    let g_to = metric.matrix(t_to, x_to)?;
    let s_to = g_to.sym_sqrt();
    let s_from_inv = g_from.sym_sqrt().inverse()?;
    Ok(s_to.matmul(a).matmul(&s_from_inv).op_norm())
}
