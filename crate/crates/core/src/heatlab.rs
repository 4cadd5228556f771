//! `g(t)`-Brownian motion, the image-antidevelopment identity for maps,
//! a periodic 1-d heat solver, the stochastic representation formula for
//! gradients of heat solutions, and the gradient-decay bound under a
//! uniformly strict super Ricci flow.
//!
//! The target manifold is flat `ℝ^n` here (the damped transport on the
//! target is then exactly the identity); an explicit target connection is
//! still accepted by the image-antidevelopment check so the mixed-Hessian
//! formula gets exercised.

use rayon::prelude::*;

use crate::fields::{EvalError, ScalarField};
use crate::frame::{
    damped_transport_brownian, horizontal_lift, Frame, FrameError, LiftFlavor, LiftPath,
};
use crate::geometry::{ConnectionFamily, Domain, GeometryError, MetricFamily};
use crate::linalg::MatrixF;
use crate::sde::{BrownianDriver, SdeError, SemimartingalePath};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HeatlabError {
    #[error("CFL violated: ½ max(g^11) Δt/Δθ² = {lambda:.4} > 0.5 (refine the time grid)")]
    Cfl { lambda: f64 },
    #[error("super-Ricci condition violated: min eigenvalue of ∂g/∂t + Ric − K·g is {min_eig:.3e} at t={t}, x={x:?}")]
    SuperRicciViolated { min_eig: f64, t: f64, x: Vec<f64> },
    #[error("the heat solver needs a 1-d metric on a torus chart")]
    NotACircle,
    #[error("map has {got} components, target dimension is {expected}")]
    TargetShape { expected: usize, got: usize },
    #[error("path {path_id}: {message}")]
    Path { path_id: u64, message: String },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] EvalError),
    #[error(transparent)]
    Sde(#[from] SdeError),
}

/// A `g(t)`-Brownian motion together with its Riemann-horizontal lift.
/// By construction the Riemann-antidevelopment of the output equals the
/// driving Euclidean increments.
pub struct GtBrownian {
    pub path: SemimartingalePath,
    pub lift: LiftPath,
}

/// Integrate the joint system `dx = e ∘dW`,
/// `de = −Γ(∘dx) e − ½ e (eᵀ ∂g/∂t e) dt` from a `g(t0, x0)`-orthonormal
/// frame (Gram–Schmidt of the coordinate basis when `e0` is `None`).
pub fn gt_brownian_motion(
    metric: &MetricFamily,
    x0: &[f64],
    driver: &BrownianDriver,
    path_id: u64,
    e0: Option<MatrixF>,
) -> Result<GtBrownian, HeatlabError> {
    let d = metric.dim();
    let grid = driver.grid;
    let n = grid.steps();
    let conn = metric.levi_civita();
    let e0 = match e0 {
        Some(m) => m,
        None => crate::frame::gram_schmidt_frame(metric, grid.t0(), x0)?,
    };

    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(x0);
    let mut frames = Vec::with_capacity(n + 1);
    let mut mids = Vec::with_capacity(n);
    let mut dz = Vec::with_capacity(n * d);
    let mut incs = Vec::with_capacity(n * d);

    let mut x = x0.to_vec();
    let mut e = e0;
    frames.push(e.clone());
    let mut dw = vec![0.0; d];

    for k in 0..n {
        let t0 = grid.node(k);
        let t1 = grid.node(k + 1);
        let h = t1 - t0;
        driver.increment_into(path_id, k, &mut dw);

        let gamma0 = conn.christoffel(t0, &x)?;
        let gdot = metric.metric_dt(t0, &x)?;
        let p0 = e.transpose().matmul(&gdot).matmul(&e);
        let drift = e.matmul(&p0).scale(-0.5 * h);

        // predictor uses the predictor displacement e ΔW
        let dx_pred = e.matvec(&dw);
        let e_pred = e
            .sub(&gamma0.contract_direction(&dx_pred).matmul(&e))
            .add(&drift);
        let e_mid = e.average(&e_pred);

        // corrected displacement: Δx = e_mid ΔW, so ΔZ = e_mid^{-1} Δx = ΔW
        let dx = e_mid.matvec(&dw);
        let x1: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        if x1.iter().any(|v| !v.is_finite()) {
            return Err(HeatlabError::Path {
                path_id,
                message: format!("non-finite state at step {k}"),
            });
        }
        let gamma1 = conn.christoffel(t1, &x1)?;
        let a0 = gamma0.contract_direction(&dx).matmul(&e);
        let a1 = gamma1.contract_direction(&dx).matmul(&e_pred);
        let e_next = e.sub(&a0.add(&a1).scale(0.5)).add(&drift);

        dz.extend_from_slice(&dw);
        incs.extend_from_slice(&dw);
        mids.push(e_mid);
        states.extend_from_slice(&x1);
        x = x1;
        e = e_next;
        frames.push(e.clone());
    }

    let path = SemimartingalePath::from_states(grid, d, states.clone()).with_driver(incs, d);
    let lift = LiftPath::from_parts(
        grid,
        d,
        LiftFlavor::RiemannHorizontal,
        states,
        frames,
        mids,
        dz,
    );
    Ok(GtBrownian { path, lift })
}

/// Map `f: ℝ₊ × M → ℝ^n` given componentwise, with an optional non-flat
/// target connection.
pub struct ImageCheck {
    /// `sup_k |Z̃^{image}_k − Z̃^{formula}_k|` over components.
    pub sup_discrepancy: f64,
    /// Antidevelopment of the image path lifted on the target, `(n+1) × dn`.
    pub z_image: Vec<f64>,
    /// Right-hand side of the image-antidevelopment identity, `(n+1) × dn`.
    pub z_formula: Vec<f64>,
}

/// Compare the antidevelopment of the image path `f(t, X_t)` computed two
/// ways: (a) lifting the image path on the target, (b) the pushforward
/// identity
///
/// ```text
/// dZ̃ = Ũ^{-1} ∂f/∂t dt + Ũ^{-1} df U dZ + ½ Ũ^{-1} Hess f (dX, dX)
/// ```
///
/// with realized brackets, where the mixed Hessian is
/// `Hess f^a_ij = ∂_i∂_j f^a − Γ^k_ij ∂_k f^a + Γ̃^a_bc ∂_i f^b ∂_j f^c`.
pub fn image_antidevelopment_check(
    f_comps: &[ScalarField],
    lift: &LiftPath,
    m_conn: &ConnectionFamily,
    target: &ConnectionFamily,
) -> Result<ImageCheck, HeatlabError> {
    let d = lift.dim;
    let dn = target.dim();
    if f_comps.len() != dn {
        return Err(HeatlabError::TargetShape {
            expected: dn,
            got: f_comps.len(),
        });
    }
    let n = lift.grid.steps();

    // route (a): image path lifted on the target from the identity frame
    let mut image_states = Vec::with_capacity((n + 1) * dn);
    for k in 0..=n {
        let t = lift.grid.node(k);
        for f in f_comps {
            image_states.push(f.value(t, lift.x(k))?);
        }
    }
    let image_path = SemimartingalePath::from_states(lift.grid, dn, image_states);
    let y0 = image_path.state(0).to_vec();
    let image_lift = horizontal_lift(&image_path, target, &Frame::identity(y0))?;
    let z_image = image_lift.z_cumulative();

    // route (b): the identity with all factors at the step start
    let mut z_formula = vec![0.0; (n + 1) * dn];
    for k in 0..n {
        let t = lift.grid.node(k);
        let h = lift.grid.node(k + 1) - t;
        let xs = lift.x(k);
        let dx = lift.dx(k);
        let gamma = m_conn.christoffel(t, xs)?;
        let y: Vec<f64> = f_comps
            .iter()
            .map(|f| f.value(t, xs))
            .collect::<Result<_, _>>()?;
        let gamma_t = target.christoffel(t, &y)?;

        // Jacobian and gradients
        let mut jac = MatrixF::zeros(dn, d);
        for (a, f) in f_comps.iter().enumerate() {
            for i in 0..d {
                jac[(a, i)] = f.dx(i, t, xs)?;
            }
        }
        // term 1: ∂f/∂t h
        let mut rhs = vec![0.0; dn];
        for (a, f) in f_comps.iter().enumerate() {
            rhs[a] = f.dt(t, xs)? * h;
        }
        // term 2: df · (U ΔZ)
        let u_dz = lift.frame(k).matvec(lift.dz(k));
        let j_udz = jac.matvec(&u_dz);
        for a in 0..dn {
            rhs[a] += j_udz[a];
        }
        // term 3: ½ Hess f (Δx, Δx)
        for (a, f) in f_comps.iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let mut hess = f.d2x(i, j, t, xs)?;
                    for kk in 0..d {
                        hess -= gamma.get(kk, i, j) * jac[(a, kk)];
                    }
                    // target quadratic term Γ̃^a_bc ∂_i f^b ∂_j f^c
                    for bb in 0..dn {
                        for cc in 0..dn {
                            hess += gamma_t.get(a, bb, cc) * jac[(bb, i)] * jac[(cc, j)];
                        }
                    }
                    acc += hess * dx[i] * dx[j];
                }
            }
            rhs[a] += 0.5 * acc;
        }
        // Ũ_k^{-1} applied to the whole right-hand side
        let zinc = image_lift.frame(k).solve(&rhs).map_err(FrameError::from)?;
        for a in 0..dn {
            z_formula[(k + 1) * dn + a] = z_formula[k * dn + a] + zinc[a];
        }
    }

    let sup = z_image
        .iter()
        .zip(&z_formula)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok(ImageCheck {
        sup_discrepancy: sup,
        z_image,
        z_formula,
    })
}

/// Explicit finite-difference solution of `∂u/∂t = ½ Δ_{g(t)} u` on a
/// periodic 1-d chart, in conservative form
/// `Δ_g u = (1/√g) ∂_θ(√g g^{11} ∂_θ u)`.
#[derive(Debug, Clone)]
pub struct HeatSolution {
    pub period: f64,
    pub j_nodes: usize,
    pub t1: f64,
    pub t2: f64,
    pub nt: usize,
    /// `(nt+1) × j` values.
    values: Vec<f64>,
}

impl HeatSolution {
    #[inline]
    pub fn theta(&self, j: usize) -> f64 {
        self.period * j as f64 / self.j_nodes as f64
    }

    #[inline]
    pub fn time(&self, step: usize) -> f64 {
        self.t1 + (self.t2 - self.t1) * step as f64 / self.nt as f64
    }

    #[inline]
    pub fn value(&self, step: usize, j: usize) -> f64 {
        self.values[step * self.j_nodes + j]
    }

    pub fn row(&self, step: usize) -> &[f64] {
        &self.values[step * self.j_nodes..(step + 1) * self.j_nodes]
    }

    /// `∂u/∂θ` at the grid nodes of one time slice, 4th-order central.
    pub fn du_nodes(&self, step: usize) -> Vec<f64> {
        let j = self.j_nodes;
        let row = self.row(step);
        let dtheta = self.period / j as f64;
        (0..j)
            .map(|i| {
                let um2 = row[(i + j - 2) % j];
                let um1 = row[(i + j - 1) % j];
                let up1 = row[(i + 1) % j];
                let up2 = row[(i + 2) % j];
                (um2 - 8.0 * um1 + 8.0 * up1 - up2) / (12.0 * dtheta)
            })
            .collect()
    }

    /// `∂u/∂θ` at an arbitrary angle by 4-point Lagrange interpolation of
    /// the node derivatives.
    pub fn du_at(&self, step: usize, theta: f64) -> f64 {
        let j = self.j_nodes;
        let du = self.du_nodes(step);
        let dtheta = self.period / j as f64;
        let pos = (theta / dtheta).rem_euclid(j as f64);
        let base = pos.floor() as usize % j;
        let s = pos - pos.floor();
        // nodes at offsets −1, 0, 1, 2 around the cell
        let y: Vec<f64> = (0..4).map(|o| du[(base + j + o - 1) % j]).collect();
        // Lagrange weights on ξ ∈ {−1, 0, 1, 2}
        let w0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
        let w1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        let w2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
        let w3 = (s + 1.0) * s * (s - 1.0) / 6.0;
        w0 * y[0] + w1 * y[1] + w2 * y[2] + w3 * y[3]
    }

    /// `sup_θ ‖du‖_{g(t)}` over one time slice: `|∂u/∂θ| / √g11`.
    pub fn sup_dual_norm(&self, metric: &MetricFamily, step: usize) -> Result<f64, HeatlabError> {
        let t = self.time(step);
        let du = self.du_nodes(step);
        let mut sup = 0.0f64;
        for (i, &d) in du.iter().enumerate() {
            let g = metric.matrix(t, &[self.theta(i)])?;
            sup = sup.max(d.abs() / g[(0, 0)].sqrt());
        }
        Ok(sup)
    }

    /// Discrete mass `Σ_j u_j √g_j Δθ` (conserved for static metrics).
    pub fn mass(&self, metric: &MetricFamily, step: usize) -> Result<f64, HeatlabError> {
        let t = self.time(step);
        let dtheta = self.period / self.j_nodes as f64;
        let mut acc = 0.0;
        for i in 0..self.j_nodes {
            let g = metric.matrix(t, &[self.theta(i)])?;
            acc += self.value(step, i) * g[(0, 0)].sqrt() * dtheta;
        }
        Ok(acc)
    }
}

/// Solve the heat equation on the circle from `u(t1, ·) = u_init` up to
/// `t2`, with `j` spatial nodes and `nt` time steps. The CFL number
/// `½ max(g^{11}) Δt/Δθ²` is checked at construction over a sampled
/// `(t, θ)` lattice and again at every step.
pub fn solve_heat_1d(
    metric: &MetricFamily,
    u_init: &ScalarField,
    t1: f64,
    t2: f64,
    j: usize,
    nt: usize,
) -> Result<HeatSolution, HeatlabError> {
    let period = match metric.domain() {
        Domain::Torus { period } if metric.dim() == 1 => period[0],
        _ => return Err(HeatlabError::NotACircle),
    };
    let dtheta = period / j as f64;
    let dt = (t2 - t1) / nt as f64;

    let lambda_at = |t: f64, theta: f64| -> Result<f64, HeatlabError> {
        let g = metric.matrix(t, &[theta])?;
        Ok(0.5 * (1.0 / g[(0, 0)]) * dt / (dtheta * dtheta))
    };
    // pre-scan the CFL number
    let t_samples = 64.min(nt);
    for ti in 0..=t_samples {
        let t = t1 + (t2 - t1) * ti as f64 / t_samples as f64;
        for i in 0..j {
            let lambda = lambda_at(t, i as f64 * dtheta)?;
            if lambda > 0.5 {
                return Err(HeatlabError::Cfl { lambda });
            }
        }
    }

    let mut values = Vec::with_capacity((nt + 1) * j);
    for i in 0..j {
        values.push(u_init.value(t1, &[i as f64 * dtheta])?);
    }
    let mut sqrt_g = vec![0.0; j];
    let mut flux_coeff = vec![0.0; j]; // (√g g^{11}) at θ_{i+1/2}
    for step in 0..nt {
        let t = t1 + dt * step as f64;
        for i in 0..j {
            let g = metric.matrix(t, &[i as f64 * dtheta])?;
            if 0.5 * (1.0 / g[(0, 0)]) * dt / (dtheta * dtheta) > 0.5 + 1e-12 {
                return Err(HeatlabError::Cfl {
                    lambda: 0.5 * (1.0 / g[(0, 0)]) * dt / (dtheta * dtheta),
                });
            }
            sqrt_g[i] = g[(0, 0)].sqrt();
            let gh = metric.matrix(t, &[(i as f64 + 0.5) * dtheta])?;
            // √g g^{11} = g^{-1/2} in one dimension
            flux_coeff[i] = 1.0 / gh[(0, 0)].sqrt();
        }
        let prev = &values[step * j..(step + 1) * j];
        let mut next = Vec::with_capacity(j);
        for i in 0..j {
            let up = prev[(i + 1) % j];
            let um = prev[(i + j - 1) % j];
            let flux_right = flux_coeff[i] * (up - prev[i]) / dtheta;
            let flux_left = flux_coeff[(i + j - 1) % j] * (prev[i] - um) / dtheta;
            next.push(prev[i] + 0.5 * dt / sqrt_g[i] * (flux_right - flux_left) / dtheta);
        }
        values.extend_from_slice(&next);
    }
    Ok(HeatSolution {
        period,
        j_nodes: j,
        t1,
        t2,
        nt,
        values,
    })
}

/// Outcome of the stochastic representation check for `du`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

impl RepresentationCheck {
    /// Acceptance gate `|lhs − rhs| ≤ 3·stderr + bias_allowance`.
    pub fn within(&self, bias_allowance: f64) -> bool {
        (self.lhs - self.rhs).abs() <= 3.0 * self.stderr + bias_allowance
    }
}

/// Monte Carlo check of the gradient representation: simulate Brownian
/// motions for the reversed family `ĝ(t) = g(t2 − t)` from `x`, carry the
/// damped transport `Θ` along each path, and compare
///
/// ```text
/// lhs = du(t2, x)·v    vs    rhs = E[ du(t1, X_S) Θ_{0,S} v ],  S = t2 − t1
/// ```
///
/// with `du` read from the grid solution (the target side is flat, so its
/// damped transport is the identity).
pub fn representation_check(
    metric: &MetricFamily,
    u: &HeatSolution,
    x: f64,
    v: f64,
    n_paths: usize,
    seed: u64,
    steps: usize,
) -> Result<RepresentationCheck, HeatlabError> {
    let span = u.t2 - u.t1;
    let reversed = metric.time_reversed(u.t2);
    let grid = crate::sde::TimeGrid::new(0.0, span, steps).map_err(HeatlabError::Sde)?;
    let driver = BrownianDriver::new(seed, 1, grid);
    let du_initial = |theta: f64| u.du_at(0, theta);
    let lhs = u.du_at(u.nt, x) * v;

    let samples: Vec<Result<f64, HeatlabError>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|pid| {
            let gtb = gt_brownian_motion(&reversed, &[x], &driver, pid, None)?;
            let thetas = damped_transport_brownian(&gtb.lift, &reversed)?;
            let theta_final = thetas.last().expect("nonempty").matrix[(0, 0)];
            let x_final = gtb.path.state(steps)[0];
            Ok(du_initial(x_final) * theta_final * v)
        })
        .collect();
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut count = 0usize;
    for s in samples {
        let val = s?;
        sum += val;
        sum2 += val * val;
        count += 1;
    }
    let mean = sum / count as f64;
    let var = (sum2 / count as f64 - mean * mean).max(0.0);
    let stderr = (var / count as f64).sqrt();
    Ok(RepresentationCheck {
        lhs,
        rhs: mean,
        stderr,
        n_paths: count,
    })
}

/// Outcome of the sup-gradient decay check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientDecayCheck {
    pub observed_ratio: f64,
    pub bound: f64,
    pub sup_initial: f64,
    pub sup_final: f64,
}

impl GradientDecayCheck {
    pub fn satisfied(&self, slack: f64) -> bool {
        self.observed_ratio <= self.bound * (1.0 + slack)
    }
}

/// Verify `∂g/∂t + Ric − K·g ⪰ 0` at deterministic sample points (min
/// eigenvalue ≥ −1e-9), then compare the decay of `sup ‖du‖_{g(t)}` against
/// the bound `e^{−K (t2 − t1)/2}`.
pub fn gradient_decay_check(
    metric: &MetricFamily,
    u: &HeatSolution,
    k_const: f64,
) -> Result<GradientDecayCheck, HeatlabError> {
    if k_const <= 0.0 {
        return Err(HeatlabError::SuperRicciViolated {
            min_eig: f64::NEG_INFINITY,
            t: u.t1,
            x: vec![],
        });
    }
    let d = metric.dim();
    for (mut t, x) in crate::geometry::sample_points(d, metric.domain(), 50, 23) {
        // map sample times into [t1, t2]
        t = u.t1 + (u.t2 - u.t1) * (t / 2.0);
        let dg = metric.metric_dt(t, &x)?;
        let ric = metric.ricci(t, &x)?;
        let g = metric.matrix(t, &x)?;
        let m = dg.add(&ric).sub(&g.scale(k_const));
        let min_eig = m
            .sym_eigenvalues()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-9 {
            return Err(HeatlabError::SuperRicciViolated { min_eig, t, x });
        }
    }
    let sup_initial = u.sup_dual_norm(metric, 0)?;
    let sup_final = u.sup_dual_norm(metric, u.nt)?;
    Ok(GradientDecayCheck {
        observed_ratio: sup_final / sup_initial,
        bound: (-k_const * (u.t2 - u.t1) / 2.0).exp(),
        sup_initial,
        sup_final,
    })
}
