//! Time-dependent metrics and connections on a single coordinate chart.
//!
//! A metric family `g(t,x)` is a symmetric matrix of [`ScalarField`]s; its
//! Levi-Civita connection, time derivative, sharps, Hessians, curvature and
//! Ricci tensor are all derived on demand through dual-number derivatives of
//! the entries:
//!
//! ```text
//! Γ^i_jk  = ½ g^{il} (∂_j g_lk + ∂_k g_jl − ∂_l g_jk)
//! R^i_jkl = ∂_k Γ^i_lj − ∂_l Γ^i_kj + Γ^i_km Γ^m_lj − Γ^i_lm Γ^m_kj
//! Ric_jl  = R^i_jil
//! Hess f  = ∂_i ∂_j f − Γ^k_ij ∂_k f
//! ```
//!
//! The chart is either all of `ℝ^d` or a flat torus; on the torus,
//! coordinates are wrapped modulo the period for field evaluation while
//! paths are stored unwrapped.

use crate::fields::{Dual, EvalError, Scalar, ScalarField};
use crate::linalg::{LinalgError, Matrix, MatrixF};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("metric is not positive definite at t={t}, x={x:?}")]
    NotPositiveDefinite { t: f64, x: Vec<f64> },
    #[error("metric entries are not symmetric: g[{i}][{j}] != g[{j}][{i}]")]
    NotSymmetric { i: usize, j: usize },
    #[error("explicit connection is not symmetric in its lower indices at t={t}, x={x:?} (i={i}, j={j}, k={k})")]
    ConnectionNotSymmetric {
        t: f64,
        x: Vec<f64>,
        i: usize,
        j: usize,
        k: usize,
    },
    #[error("expected {expected} entries, got {got}")]
    EntryCount { expected: usize, got: usize },
    #[error("dimension {0} is out of the supported range 1..=8")]
    BadDimension(usize),
    #[error("field error: {0}")]
    BadField(String),
    #[error(transparent)]
    Field(#[from] EvalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Chart domain. Fields are evaluated on wrapped coordinates for the torus.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Euclidean,
    Torus { period: Vec<f64> },
}

impl Domain {
    /// Wrap a single coordinate into the fundamental domain.
    #[inline]
    fn wrap_coord<S: Scalar>(&self, i: usize, v: S) -> S {
        match self {
            Domain::Euclidean => v,
            Domain::Torus { period } => {
                let l = period[i];
                let shift = (v.value() / l).floor() * l;
                v - S::constant(shift)
            }
        }
    }

    /// Wrap all coordinates (stack buffer, d ≤ 8).
    #[inline]
    pub fn wrap<S: Scalar>(&self, x: &[S]) -> WrappedCoords<S> {
        let mut buf = [S::constant(0.0); 8];
        for (i, &v) in x.iter().enumerate() {
            buf[i] = self.wrap_coord(i, v);
        }
        WrappedCoords { buf, len: x.len() }
    }
}

/// Stack-held wrapped coordinates.
pub struct WrappedCoords<S> {
    buf: [S; 8],
    len: usize,
}

impl<S: Scalar> WrappedCoords<S> {
    #[inline]
    pub fn as_slice(&self) -> &[S] {
        &self.buf[..self.len]
    }
}

/// Symmetric matrix of scalar fields; entries stored once for `i ≤ j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricBilinearField {
    d: usize,
    entries: Vec<ScalarField>, // upper triangle, row-major
}

impl SymmetricBilinearField {
    /// Build from a full `d×d` grid of expressions; entries must be
    /// structurally symmetric.
    pub fn from_grid(grid: Vec<Vec<ScalarField>>) -> Result<Self, GeometryError> {
        let d = grid.len();
        if !(1..=8).contains(&d) {
            return Err(GeometryError::BadDimension(d));
        }
        for (i, row) in grid.iter().enumerate() {
            if row.len() != d {
                return Err(GeometryError::EntryCount {
                    expected: d,
                    got: row.len(),
                });
            }
            for j in 0..i {
                if grid[i][j].expression() != grid[j][i].expression() {
                    return Err(GeometryError::NotSymmetric { i, j });
                }
            }
        }
        let mut entries = Vec::with_capacity(d * (d + 1) / 2);
        for (i, row) in grid.iter().enumerate() {
            for e in row.iter().skip(i) {
                entries.push(e.clone());
            }
        }
        Ok(SymmetricBilinearField { d, entries })
    }

    pub fn from_upper(d: usize, entries: Vec<ScalarField>) -> Result<Self, GeometryError> {
        if !(1..=8).contains(&d) {
            return Err(GeometryError::BadDimension(d));
        }
        let expected = d * (d + 1) / 2;
        if entries.len() != expected {
            return Err(GeometryError::EntryCount {
                expected,
                got: entries.len(),
            });
        }
        Ok(SymmetricBilinearField { d, entries })
    }

    /// Identity form.
    pub fn identity(d: usize) -> Self {
        let mut entries = Vec::new();
        for i in 0..d {
            for j in i..d {
                entries.push(ScalarField::constant(if i == j { 1.0 } else { 0.0 }, d));
            }
        }
        SymmetricBilinearField { d, entries }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    fn upper_index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        a * self.d - a * (a + 1) / 2 + b
    }

    pub fn entry(&self, i: usize, j: usize) -> &ScalarField {
        &self.entries[self.upper_index(i, j)]
    }

    pub fn entries(&self) -> &[ScalarField] {
        &self.entries
    }

    /// Assemble the matrix at `(t, x)` on raw (already wrapped) coordinates.
    pub fn matrix_raw<S: Scalar>(&self, t: S, x: &[S]) -> Result<Matrix<S>, EvalError> {
        let d = self.d;
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = self.entries[self.upper_index(i, j)].eval_scalar(t, x)?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    fn map_entries(&self, f: impl Fn(&ScalarField) -> ScalarField) -> Self {
        SymmetricBilinearField {
            d: self.d,
            entries: self.entries.iter().map(f).collect(),
        }
    }
}

/// Time-dependent Riemannian metric on the chart.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricFamily {
    form: SymmetricBilinearField,
    domain: Domain,
}

impl MetricFamily {
    pub fn new(form: SymmetricBilinearField, domain: Domain) -> Result<Self, GeometryError> {
        if let Domain::Torus { period } = &domain {
            if period.len() != form.dim() || period.iter().any(|&l| l <= 0.0) {
                return Err(GeometryError::BadDimension(period.len()));
            }
        }
        Ok(MetricFamily { form, domain })
    }

    /// Parse a full `d×d` grid of DSL strings.
    pub fn parse(entries: &[Vec<String>], domain: Domain) -> Result<Self, GeometryError> {
        let d = entries.len();
        let mut grid = Vec::with_capacity(d);
        for row in entries {
            let parsed: Result<Vec<_>, _> = row.iter().map(|s| ScalarField::parse(s, d)).collect();
            grid.push(parsed.map_err(|e| GeometryError::BadField(e.to_string()))?);
        }
        Self::new(SymmetricBilinearField::from_grid(grid)?, domain)
    }

    /// Euclidean metric on `ℝ^d`.
    pub fn euclidean(d: usize) -> Self {
        MetricFamily {
            form: SymmetricBilinearField::identity(d),
            domain: Domain::Euclidean,
        }
    }

    pub fn dim(&self) -> usize {
        self.form.dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn form(&self) -> &SymmetricBilinearField {
        &self.form
    }

    /// Metric matrix on a generic scalar (no positive-definiteness check).
    pub fn matrix_scalar<S: Scalar>(&self, t: S, x: &[S]) -> Result<Matrix<S>, EvalError> {
        let w = self.domain.wrap(x);
        self.form.matrix_raw(t, w.as_slice())
    }

    /// Metric matrix at `(t, x)`; errors when not positive definite.
    pub fn matrix(&self, t: f64, x: &[f64]) -> Result<MatrixF, GeometryError> {
        let g = self.matrix_scalar(t, x)?;
        if g.cholesky().is_err() {
            return Err(GeometryError::NotPositiveDefinite { t, x: x.to_vec() });
        }
        Ok(g)
    }

    /// Entrywise exact `∂g/∂t`.
    pub fn metric_dt(&self, t: f64, x: &[f64]) -> Result<MatrixF, GeometryError> {
        let w = self.domain.wrap(x);
        let xs = w.as_slice();
        let d = self.dim();
        let mut m = MatrixF::zeros(d, d);
        let xd: Vec<Dual<f64>> = xs.iter().map(|&v| Dual::lift(v)).collect();
        for i in 0..d {
            for j in i..d {
                let v = self.form.entry(i, j).eval_scalar(Dual::seed(t), &xd)?.dot;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// Raise the first index of a bilinear form: `g^{-1} B`.
    pub fn sharp(&self, t: f64, x: &[f64], b: &MatrixF) -> Result<MatrixF, GeometryError> {
        let g = self.matrix(t, x)?;
        Ok(g.solve_matrix(b)?)
    }

    /// `(∂g/∂t)^#` at `(t, x)`.
    pub fn metric_dt_sharp(&self, t: f64, x: &[f64]) -> Result<MatrixF, GeometryError> {
        let dt = self.metric_dt(t, x)?;
        self.sharp(t, x, &dt)
    }

    /// Inner product `⟨u, v⟩_{g(t,x)}`.
    pub fn inner(&self, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> Result<f64, GeometryError> {
        let g = self.matrix(t, x)?;
        Ok(crate::linalg::dot(&g.matvec(u), v))
    }

    /// The reversed family `ĝ(t) = g(horizon − t)`, realized by substituting
    /// `t := horizon − t` into every entry so that all derivatives (including
    /// the sign of `∂ĝ/∂t`) flow through the dual numbers.
    pub fn time_reversed(&self, horizon: f64) -> MetricFamily {
        MetricFamily {
            form: self.form.map_entries(|e| e.reverse_time(horizon)),
            domain: self.domain.clone(),
        }
    }

    /// Levi-Civita connection of this family.
    pub fn levi_civita(&self) -> ConnectionFamily {
        ConnectionFamily {
            d: self.dim(),
            domain: self.domain.clone(),
            source: ConnectionSource::LeviCivita(self.form.clone()),
        }
    }

    /// Ricci tensor `Ric_jl = R^i_jil` of the Levi-Civita connection.
    pub fn ricci(&self, t: f64, x: &[f64]) -> Result<MatrixF, GeometryError> {
        let conn = self.levi_civita();
        let r = conn.curvature(t, x)?;
        let d = self.dim();
        let mut ric = MatrixF::zeros(d, d);
        for j in 0..d {
            for l in 0..d {
                let mut acc = 0.0;
                for i in 0..d {
                    acc += r.get(i, j, i, l);
                }
                ric[(j, l)] = acc;
            }
        }
        Ok(ric)
    }

    /// `(Ric)^#` at `(t, x)`.
    pub fn ricci_sharp(&self, t: f64, x: &[f64]) -> Result<MatrixF, GeometryError> {
        let ric = self.ricci(t, x)?;
        self.sharp(t, x, &ric)
    }
}

/// Christoffel symbols `Γ^i_jk` at a point, index `(i, j, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    d: usize,
    v: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(d: usize) -> Self {
        Christoffel {
            d,
            v: vec![0.0; d * d * d],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.v[(i * self.d + j) * self.d + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, val: f64) {
        self.v[(i * self.d + j) * self.d + k] = val;
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn max_abs(&self) -> f64 {
        self.v.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Matrix `(Γ[v])^i_m = Σ_l Γ^i_lm v^l`, the frame-equation coefficient.
    pub fn contract_direction(&self, v: &[f64]) -> MatrixF {
        let d = self.d;
        MatrixF::from_fn(d, d, |i, m| {
            let mut acc = 0.0;
            for (l, &vl) in v.iter().enumerate() {
                acc += self.get(i, l, m) * vl;
            }
            acc
        })
    }

    /// Vector `m^i = Σ_jl Γ^i_jl a^j b^l`.
    pub fn contract_quadratic(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let d = self.d;
        (0..d)
            .map(|i| {
                let mut acc = 0.0;
                for (j, &aj) in a.iter().enumerate() {
                    for (l, &bl) in b.iter().enumerate() {
                        acc += self.get(i, j, l) * aj * bl;
                    }
                }
                acc
            })
            .collect()
    }
}

/// Riemann tensor `R^i_jkl` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Riemann {
    d: usize,
    v: Vec<f64>,
}

impl Riemann {
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.v[((i * self.d + j) * self.d + k) * self.d + l]
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Matrix `M^i_m = Σ_jl R^i_jml a^j b^l`, so that `R(w, a) b = M w`
    /// for the curvature term of the damped transport equation.
    pub fn contract_bracket(&self, a: &[f64], b: &[f64]) -> MatrixF {
        let d = self.d;
        MatrixF::from_fn(d, d, |i, m| {
            let mut acc = 0.0;
            for (j, &aj) in a.iter().enumerate() {
                for (l, &bl) in b.iter().enumerate() {
                    acc += self.get(i, j, m, l) * aj * bl;
                }
            }
            acc
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ConnectionSource {
    LeviCivita(SymmetricBilinearField),
    /// Γ^i_jk as `d³` fields, index `(i*d + j)*d + k`, symmetric in `(j,k)`.
    Explicit(Vec<ScalarField>),
}

/// Time-dependent linear connection on the chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionFamily {
    d: usize,
    domain: Domain,
    source: ConnectionSource,
}

impl ConnectionFamily {
    /// Flat connection (all symbols zero).
    pub fn flat(d: usize) -> Self {
        ConnectionFamily {
            d,
            domain: Domain::Euclidean,
            source: ConnectionSource::Explicit(vec![ScalarField::constant(0.0, d); d * d * d]),
        }
    }

    /// Explicit symbols; symmetry in the lower indices is verified at
    /// deterministic sample points.
    pub fn explicit(
        d: usize,
        domain: Domain,
        gamma: Vec<ScalarField>,
        sample_points: &[(f64, Vec<f64>)],
    ) -> Result<Self, GeometryError> {
        if gamma.len() != d * d * d {
            return Err(GeometryError::EntryCount {
                expected: d * d * d,
                got: gamma.len(),
            });
        }
        let conn = ConnectionFamily {
            d,
            domain,
            source: ConnectionSource::Explicit(gamma),
        };
        for (t, x) in sample_points {
            let g = conn.christoffel(*t, x)?;
            for i in 0..d {
                for j in 0..d {
                    for k in 0..j {
                        if (g.get(i, j, k) - g.get(i, k, j)).abs() > 1e-9 {
                            return Err(GeometryError::ConnectionNotSymmetric {
                                t: *t,
                                x: x.clone(),
                                i,
                                j,
                                k,
                            });
                        }
                    }
                }
            }
        }
        Ok(conn)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Christoffel symbols on a generic scalar. For a Levi-Civita source the
    /// metric derivatives come from dual numbers one level up, so this
    /// function itself stays differentiable.
    pub fn christoffel_scalar<S: Scalar>(&self, t: S, x: &[S]) -> Result<Vec<S>, GeometryError> {
        let d = self.d;
        let w = self.domain.wrap(x);
        let xs = w.as_slice();
        match &self.source {
            ConnectionSource::Explicit(gamma) => {
                let mut out = Vec::with_capacity(d * d * d);
                for field in gamma {
                    out.push(field.eval_scalar(t, xs)?);
                }
                Ok(out)
            }
            ConnectionSource::LeviCivita(form) => {
                let g = form.matrix_raw(t, xs)?;
                // primal positive-definiteness check
                let gp = MatrixF::from_fn(d, d, |i, j| g[(i, j)].value());
                if gp.cholesky().is_err() {
                    return Err(GeometryError::NotPositiveDefinite {
                        t: t.value(),
                        x: xs.iter().map(|v| v.value()).collect(),
                    });
                }
                // ∂_l g for every direction l
                let td = Dual::lift(t);
                let mut dg: Vec<Matrix<S>> = Vec::with_capacity(d);
                let mut xd = [Dual::lift(S::constant(0.0)); 8];
                for (slot, &v) in xd.iter_mut().zip(xs) {
                    *slot = Dual::lift(v);
                }
                for l in 0..d {
                    xd[l].dot = S::constant(1.0);
                    let gm = form.matrix_raw(td, &xd[..d])?;
                    xd[l].dot = S::constant(0.0);
                    dg.push(Matrix::from_fn(d, d, |i, j| gm[(i, j)].dot));
                }
                // right-hand sides c_{jk,l} = ½(∂_j g_lk + ∂_k g_jl − ∂_l g_jk)
                let lu = g.lu()?;
                let mut out = vec![S::constant(0.0); d * d * d];
                let mut rhs = vec![S::constant(0.0); d];
                let half = S::constant(0.5);
                for j in 0..d {
                    for k in j..d {
                        for (l, r) in rhs.iter_mut().enumerate() {
                            *r = half * (dg[j][(l, k)] + dg[k][(j, l)] - dg[l][(j, k)]);
                        }
                        let col = lu.solve(&rhs);
                        for i in 0..d {
                            out[(i * d + j) * d + k] = col[i];
                            out[(i * d + k) * d + j] = col[i];
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Christoffel symbols at `(t, x)`.
    pub fn christoffel(&self, t: f64, x: &[f64]) -> Result<Christoffel, GeometryError> {
        Ok(Christoffel {
            d: self.d,
            v: self.christoffel_scalar(t, x)?,
        })
    }

    /// Riemann tensor; spatial derivatives of Γ are dual-number derivatives
    /// through the whole Christoffel computation.
    pub fn curvature(&self, t: f64, x: &[f64]) -> Result<Riemann, GeometryError> {
        let d = self.d;
        if d == 1 {
            // antisymmetry in the derivative indices forces R ≡ 0 when
            // there is only one of them
            return Ok(Riemann { d, v: vec![0.0] });
        }
        let g0 = self.christoffel_scalar(t, x)?;
        // dΓ[k][(i,j,l)] = ∂_k Γ^i_jl
        let mut dgamma: Vec<Vec<f64>> = Vec::with_capacity(d);
        let td = Dual::lift(t);
        let mut xd = [Dual::<f64>::lift(0.0); 8];
        for (slot, &v) in xd.iter_mut().zip(x) {
            *slot = Dual::lift(v);
        }
        for k in 0..d {
            xd[k].dot = 1.0;
            let gk = self.christoffel_scalar(td, &xd[..d])?;
            xd[k].dot = 0.0;
            dgamma.push(gk.into_iter().map(|v| v.dot).collect());
        }
        let gamma = |i: usize, j: usize, k: usize| g0[(i * d + j) * d + k];
        let dg = |kdir: usize, i: usize, j: usize, k: usize| dgamma[kdir][(i * d + j) * d + k];
        let mut v = vec![0.0; d * d * d * d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut r = dg(k, i, l, j) - dg(l, i, k, j);
                        for m in 0..d {
                            r += gamma(i, k, m) * gamma(m, l, j) - gamma(i, l, m) * gamma(m, k, j);
                        }
                        v[((i * d + j) * d + k) * d + l] = r;
                    }
                }
            }
        }
        Ok(Riemann { d, v })
    }

    /// Spatial Hessian of `f` at frozen `t`:
    /// `H_ij = ∂_i ∂_j f − Σ_k Γ^k_ij ∂_k f`.
    pub fn hessian(&self, f: &ScalarField, t: f64, x: &[f64]) -> Result<MatrixF, GeometryError> {
        let d = self.d;
        let w = self.domain.wrap(x);
        let xs = w.as_slice();
        let gamma = self.christoffel(t, x)?;
        let mut grad = vec![0.0; d];
        for (k, gk) in grad.iter_mut().enumerate() {
            *gk = f.dx_scalar(k, t, xs)?;
        }
        let mut h = MatrixF::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let mut v = f.d2x(i, j, t, xs)?;
                for (k, &gk) in grad.iter().enumerate() {
                    v -= gamma.get(k, i, j) * gk;
                }
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    }
}

/// Deterministic sample points for symmetry/identity checks.
pub fn sample_points(d: usize, domain: &Domain, count: usize, seed: u64) -> Vec<(f64, Vec<f64>)> {
    let mut pts = Vec::with_capacity(count);
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03;
    let mut next_unit = move || {
        state = crate::sde::rng::mix64(state.wrapping_add(0x9E37_79B9_7F4A_7C15));
        crate::sde::rng::unit_f64(state)
    };
    for _ in 0..count {
        let t = 2.0 * next_unit();
        let x: Vec<f64> = (0..d)
            .map(|i| match domain {
                Domain::Euclidean => 3.0 * next_unit() - 1.5,
                Domain::Torus { period } => period[i] * next_unit(),
            })
            .collect();
        pts.push((t, x));
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metric_1d(src: &str) -> MetricFamily {
        MetricFamily::parse(&[vec![src.to_string()]], Domain::Euclidean).unwrap()
    }

    fn sphere_metric() -> MetricFamily {
        // round 2-sphere of radius 1 in stereographic coordinates
        let c = "4/((1 + x1^2 + x2^2)^2)";
        MetricFamily::parse(
            &[
                vec![c.to_string(), "0".to_string()],
                vec!["0".to_string(), c.to_string()],
            ],
            Domain::Euclidean,
        )
        .unwrap()
    }

    #[test]
    fn euclidean_christoffel_is_zero() {
        for d in 1..=3 {
            let m = MetricFamily::euclidean(d);
            let g = m.levi_civita().christoffel(0.3, &vec![0.4; d]).unwrap();
            assert_eq!(g.max_abs(), 0.0);
        }
    }

    #[test]
    fn conformal_1d_christoffel_is_half_log_derivative() {
        // g = e^x dx²: Γ = u'/(2u) = 1/2 everywhere
        let m = metric_1d("exp(x1)");
        let conn = m.levi_civita();
        for x in [-1.0, 0.0, 2.0] {
            let g = conn.christoffel(0.7, &[x]).unwrap();
            assert!((g.get(0, 0, 0) - 0.5).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn spatially_constant_metric_has_zero_christoffel() {
        let m = MetricFamily::parse(
            &[
                vec!["exp(2*t)".into(), "0".into()],
                vec!["0".into(), "exp(2*t)".into()],
            ],
            Domain::Euclidean,
        )
        .unwrap();
        let g = m.levi_civita().christoffel(0.5, &[1.0, -2.0]).unwrap();
        assert!(g.max_abs() < 1e-14);
    }

    #[test]
    fn metric_dt_examples() {
        let m = MetricFamily::euclidean(2);
        assert_eq!(m.metric_dt(0.1, &[0.0, 0.0]).unwrap().max_abs(), 0.0);

        let m = metric_1d("exp(t*x1)");
        let dt = m.metric_dt(0.0, &[1.0]).unwrap();
        assert!((dt[(0, 0)] - 1.0).abs() < 1e-12);

        let m = MetricFamily::parse(
            &[
                vec!["exp(2*t)".into(), "0".into()],
                vec!["0".into(), "exp(2*t)".into()],
            ],
            Domain::Euclidean,
        )
        .unwrap();
        let dt = m.metric_dt(0.0, &[0.3, 0.4]).unwrap();
        assert!((dt[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((dt[(1, 1)] - 2.0).abs() < 1e-12);
        assert!(dt[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn sharp_examples() {
        // B = g -> identity
        let m = sphere_metric();
        let (t, x) = (0.2, [0.3, -0.1]);
        let g = m.matrix(t, &x).unwrap();
        let sharp = m.sharp(t, &x, &g).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((sharp[(i, j)] - expect).abs() < 1e-12);
            }
        }
        // d=1 scalar division
        let m = metric_1d("exp(x1)");
        let b = MatrixF::from_rows(vec![vec![3.0]]);
        let s = m.sharp(0.0, &[1.0], &b).unwrap();
        assert!((s[(0, 0)] - 3.0 / 1.0f64.exp()).abs() < 1e-12);
        // d=2 diagonal solve
        let m = MetricFamily::parse(
            &[vec!["1".into(), "0".into()], vec!["0".into(), "4".into()]],
            Domain::Euclidean,
        )
        .unwrap();
        let b = MatrixF::from_rows(vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
        let s = m.sharp(0.0, &[0.0, 0.0], &b).unwrap();
        assert!((s[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((s[(1, 1)] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn hessian_examples() {
        let flat = ConnectionFamily::flat(1);
        let f = ScalarField::parse("x1^2", 1).unwrap();
        let h = flat.hessian(&f, 0.0, &[0.7]).unwrap();
        assert!((h[(0, 0)] - 2.0).abs() < 1e-12);

        let linear = ScalarField::parse("3*x1", 1).unwrap();
        let h = flat.hessian(&linear, 0.0, &[0.7]).unwrap();
        assert!(h[(0, 0)].abs() < 1e-13);

        // f = x1 on g = e^x dx²: H = -Γ = -1/2
        let m = metric_1d("exp(x1)");
        let f = ScalarField::parse("x1", 1).unwrap();
        let h = m.levi_civita().hessian(&f, 0.0, &[0.2]).unwrap();
        assert!((h[(0, 0)] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn curvature_trivial_cases() {
        let m = MetricFamily::euclidean(2);
        let r = m.levi_civita().curvature(0.0, &[0.1, 0.2]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        assert!(r.get(i, j, k, l).abs() < 1e-12);
                    }
                }
            }
        }
        // any 1-d metric is flat
        let m = metric_1d("exp(t + x1)");
        let r = m.levi_civita().curvature(0.4, &[0.3]).unwrap();
        assert!(r.get(0, 0, 0, 0).abs() < 1e-10);
    }

    #[test]
    fn sphere_sectional_curvature_and_ricci() {
        let m = sphere_metric();
        let conn = m.levi_civita();
        let (t, x) = (0.0, [0.0, 0.0]);
        let r = conn.curvature(t, &x).unwrap();
        let g = m.matrix(t, &x).unwrap();
        // sectional curvature K = R_1212 / (g11 g22 - g12²), R_1212 = g_1i R^i_212
        let r_1212 = g[(0, 0)] * r.get(0, 1, 0, 1) + g[(0, 1)] * r.get(1, 1, 0, 1);
        let denom = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(0, 1)];
        let k = r_1212 / denom;
        assert!((k - 1.0).abs() < 1e-9, "K = {k}");
        // Einstein: Ric = g for the unit 2-sphere
        let ric = m.ricci(t, &x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((ric[(i, j)] - g[(i, j)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn finite_difference_oracle_confirms_sphere_curvature() {
        // independent route: second-order finite differences of g build Γ and
        // R without any dual numbers
        let c = |x: &[f64]| 4.0 / (1.0 + x[0] * x[0] + x[1] * x[1]).powi(2);
        let g = |x: &[f64]| MatrixF::from_fn(2, 2, |i, j| if i == j { c(x) } else { 0.0 });
        let h = 1e-5;
        let dg = |x: &[f64], l: usize| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[l] += h;
            xm[l] -= h;
            g(&xp).sub(&g(&xm)).scale(1.0 / (2.0 * h))
        };
        let christ = |x: &[f64]| {
            let ginv = g(x).inverse().unwrap();
            let mut out = vec![0.0; 8];
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        let mut acc = 0.0;
                        for l in 0..2 {
                            acc += 0.5
                                * ginv[(i, l)]
                                * (dg(x, j)[(l, k)] + dg(x, k)[(j, l)] - dg(x, l)[(j, k)]);
                        }
                        out[(i * 2 + j) * 2 + k] = acc;
                    }
                }
            }
            out
        };
        let x0 = [0.0, 0.0];
        let gamma0 = christ(&x0);
        let hh = 1e-4;
        let dgamma = |kdir: usize| {
            let mut xp = x0.to_vec();
            let mut xm = x0.to_vec();
            xp[kdir] += hh;
            xm[kdir] -= hh;
            let gp = christ(&xp);
            let gm = christ(&xm);
            gp.iter()
                .zip(gm.iter())
                .map(|(a, b)| (a - b) / (2.0 * hh))
                .collect::<Vec<_>>()
        };
        let dg0 = dgamma(0);
        let dg1 = dgamma(1);
        let idx = |i: usize, j: usize, k: usize| (i * 2 + j) * 2 + k;
        let dgam = |kdir: usize, i: usize, j: usize, k: usize| {
            if kdir == 0 {
                dg0[idx(i, j, k)]
            } else {
                dg1[idx(i, j, k)]
            }
        };
        // R^1_212 = ∂_1 Γ^1_22 − ∂_2 Γ^1_12 + Γ^1_1m Γ^m_22 − Γ^1_2m Γ^m_12
        let mut r_fd = dgam(0, 0, 1, 1) - dgam(1, 0, 0, 1);
        for m in 0..2 {
            r_fd += gamma0[idx(0, 0, m)] * gamma0[idx(m, 1, 1)]
                - gamma0[idx(0, 1, m)] * gamma0[idx(m, 0, 1)];
        }
        let m = sphere_metric();
        let r_ad = m.levi_civita().curvature(0.0, &x0).unwrap().get(0, 1, 0, 1);
        assert!(
            (r_fd - r_ad).abs() < 1e-5,
            "finite differences {r_fd} vs duals {r_ad}"
        );
    }

    #[test]
    fn levi_civita_compatibility_bianchi_and_sharp_identities() {
        let metrics: Vec<MetricFamily> = vec![
            metric_1d("exp(x1)"),
            metric_1d("exp(t + x1)"),
            sphere_metric(),
            MetricFamily::parse(
                &[
                    vec!["exp(2*t)".into(), "0".into()],
                    vec!["0".into(), "exp(x1)".into()],
                ],
                Domain::Euclidean,
            )
            .unwrap(),
        ];
        for m in &metrics {
            let d = m.dim();
            let conn = m.levi_civita();
            for (t, x) in sample_points(d, m.domain(), 100, 7) {
                let g = m.matrix(t, &x).unwrap();
                let gamma = conn.christoffel(t, &x).unwrap();
                // ∂_k g_ij = Γ^l_ki g_lj + Γ^l_kj g_il
                for k in 0..d {
                    let mut dgk = MatrixF::zeros(d, d);
                    for i in 0..d {
                        for j in 0..d {
                            dgk[(i, j)] = m
                                .form()
                                .entry(i, j)
                                .dx_scalar(k, t, m.domain().wrap(&x).as_slice())
                                .unwrap();
                        }
                    }
                    for i in 0..d {
                        for j in 0..d {
                            let mut rhs = 0.0;
                            for l in 0..d {
                                rhs +=
                                    gamma.get(l, k, i) * g[(l, j)] + gamma.get(l, k, j) * g[(i, l)];
                            }
                            assert!(
                                (dgk[(i, j)] - rhs).abs() <= 1e-9,
                                "compatibility failed at t={t}, x={x:?}"
                            );
                        }
                    }
                }
                // first Bianchi
                let r = conn.curvature(t, &x).unwrap();
                for i in 0..d {
                    for j in 0..d {
                        for k in 0..d {
                            for l in 0..d {
                                let s = r.get(i, j, k, l) + r.get(i, k, l, j) + r.get(i, l, j, k);
                                assert!(s.abs() <= 1e-9, "bianchi failed at t={t}, x={x:?}");
                            }
                        }
                    }
                }
                // sharp(g) = identity
                let sharp = m.sharp(t, &x, &g).unwrap();
                for i in 0..d {
                    for j in 0..d {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!((sharp[(i, j)] - expect).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn flat_torus_has_zero_ricci() {
        let m = MetricFamily::parse(
            &[vec!["2".into(), "0".into()], vec!["0".into(), "3".into()]],
            Domain::Torus {
                period: vec![1.0, 2.0],
            },
        )
        .unwrap();
        let ric = m.ricci(0.4, &[0.3, 1.7]).unwrap();
        assert!(ric.max_abs() < 1e-12);
        // d=1 is flat for any metric
        let m1 = metric_1d("exp(t + x1)");
        assert_eq!(m1.ricci(0.2, &[0.5]).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn non_positive_definite_metric_is_reported() {
        let m = metric_1d("x1"); // g = x dx², invalid for x <= 0
        assert!(matches!(
            m.matrix(0.0, &[-1.0]),
            Err(GeometryError::NotPositiveDefinite { .. })
        ));
        assert!(m.matrix(0.0, &[1.0]).is_ok());
    }

    #[test]
    fn asymmetric_metric_entries_are_rejected() {
        let err = MetricFamily::parse(
            &[vec!["1".into(), "x1".into()], vec!["x2".into(), "1".into()]],
            Domain::Euclidean,
        );
        assert!(matches!(err, Err(GeometryError::NotSymmetric { .. })));
    }

    #[test]
    fn explicit_connection_symmetry_is_verified() {
        // Γ^1_12 = x2, Γ^1_21 = 0: not symmetric
        let d = 2;
        let idx = |i: usize, j: usize, k: usize| (i * d + j) * d + k;
        let mut gamma = vec![ScalarField::constant(0.0, d); d * d * d];
        gamma[idx(0, 0, 1)] = ScalarField::parse("x2", d).unwrap();
        let pts = sample_points(d, &Domain::Euclidean, 16, 3);
        assert!(matches!(
            ConnectionFamily::explicit(d, Domain::Euclidean, gamma.clone(), &pts),
            Err(GeometryError::ConnectionNotSymmetric { .. })
        ));
        // symmetrized version passes
        gamma[idx(0, 1, 0)] = ScalarField::parse("x2", d).unwrap();
        assert!(ConnectionFamily::explicit(d, Domain::Euclidean, gamma, &pts).is_ok());
    }

    #[test]
    fn torus_wrapping_only_affects_field_arguments() {
        let m = MetricFamily::parse(
            &[vec!["2 + sin(x1)".into()]],
            Domain::Torus {
                period: vec![std::f64::consts::TAU],
            },
        )
        .unwrap();
        let a = m.matrix(0.0, &[0.5]).unwrap();
        let b = m.matrix(0.0, &[0.5 + 3.0 * std::f64::consts::TAU]).unwrap();
        assert!((a[(0, 0)] - b[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn time_reversed_metric_negates_time_derivative() {
        let m = metric_1d("exp(2*t)*(2 + sin(x1))");
        let horizon = 1.5;
        let rev = m.time_reversed(horizon);
        for (t, x) in sample_points(1, &Domain::Euclidean, 20, 11) {
            let fwd = m.metric_dt(horizon - t, &x).unwrap();
            let bwd = rev.metric_dt(t, &x).unwrap();
            assert!(
                (bwd[(0, 0)] + fwd[(0, 0)]).abs() < 1e-9,
                "t={t}: {} vs {}",
                bwd[(0, 0)],
                fwd[(0, 0)]
            );
        }
    }
}
