//! Declarative experiment descriptions, validation, the built-in catalog,
//! and the orchestration that turns a spec into CSV reports.
//!
//! Specs are flat JSON documents; every DSL string inside them is parsed
//! during validation so a bad field is reported with its path into the
//! document instead of failing mid-simulation.

mod catalog;
mod report;
mod runner;

pub use catalog::{builtin, builtin_names, catalog};
pub use report::{fmt_float, write_csv};
pub use runner::{run, AnalysisOutcome, RunOptions, RunReport, RunnerError, Status};

use serde::{Deserialize, Serialize};

use crate::fields::ScalarField;
use crate::geometry::{ConnectionFamily, Domain, GeometryError, MetricFamily};

/// Chart description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub dim: usize,
    #[serde(default)]
    pub domain: DomainSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DomainSpec {
    #[default]
    Euclidean,
    Torus {
        period: Vec<f64>,
    },
}

/// Geometry: a metric (full `d×d` grid of DSL strings) or explicit
/// Christoffel symbols `gamma[i][j][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection: Option<Vec<Vec<Vec<String>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    /// `dX = b dt + σ dW` with DSL coefficient fields.
    Sde {
        drift: Vec<String>,
        diffusion: Vec<Vec<String>>,
        x0: Vec<f64>,
        #[serde(default)]
        convention: ConventionSpec,
    },
    /// Brownian motion for the metric family (needs `geometry.metric`).
    GtBrownian { x0: Vec<f64> },
}

impl ProcessSpec {
    pub fn x0(&self) -> &[f64] {
        match self {
            ProcessSpec::Sde { x0, .. } => x0,
            ProcessSpec::GtBrownian { x0 } => x0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConventionSpec {
    Ito,
    #[default]
    Stratonovich,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSettings {
    pub paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectDecision {
    Consistent,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisSpec {
    /// Bucketed zero-drift test on the antidevelopment.
    TestAntidevelopment {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect: Option<ExpectDecision>,
    },
    /// Bucketed zero-drift test on compensated functionals.
    TestHessian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        functions: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect: Option<ExpectDecision>,
    },
    /// Ensemble windows on realized quadratic variations and displacement.
    CounterexampleQv {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        flat_window: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        riemannian_window: Option<[f64; 2]>,
        /// Mean terminal displacement must stay at or below this value.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_mean_displacement: Option<f64>,
    },
    /// Direct vs frame-side evaluation of `∫ g(s)(dX, dX)`.
    IntrinsicQv {
        #[serde(default = "default_qv_tolerance")]
        agreement_tolerance: f64,
    },
    /// Frame-orthonormality defect and its decay under grid refinement.
    Orthonormality {
        #[serde(default = "default_halvings")]
        halvings: usize,
        #[serde(default = "default_max_defect")]
        max_defect: f64,
    },
    /// Static 1-d conformal transport against the square-root oracle.
    TransportOracle {
        #[serde(default = "default_transport_tolerance")]
        tolerance: f64,
    },
    /// Residual of the connection-vs-Riemann lift relation under refinement.
    LiftRelation {
        #[serde(default = "default_relation_halvings")]
        halvings: usize,
    },
    /// Gauge-process lift against the direct lift from wobbled frames.
    GprocessCrosscheck {
        #[serde(default = "default_gprocess_tolerance")]
        tolerance: f64,
    },
    /// Damped-transport decay and agreement of its two forms.
    DampedTransport {
        k: f64,
        #[serde(default = "default_transport_tolerance")]
        norm_tolerance: f64,
        #[serde(default = "default_forms_tolerance")]
        forms_tolerance: f64,
    },
    /// Periodic heat solve over the scenario time span.
    Heat {
        u_init: String,
        j: usize,
        time_steps: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        oracle: Option<HeatOracle>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_error: Option<f64>,
    },
    /// Monte Carlo check of the gradient representation formula.
    Representation {
        u_init: String,
        j: usize,
        heat_steps: usize,
        mc_paths: usize,
        mc_steps: usize,
        #[serde(default = "default_direction")]
        v: f64,
        #[serde(default = "default_bias_allowance")]
        bias_allowance: f64,
    },
    /// Sup-gradient decay bound under a strict super Ricci flow.
    Liouville {
        u_init: String,
        j: usize,
        heat_steps: usize,
        k: f64,
        #[serde(default = "default_liouville_slack")]
        slack: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatOracle {
    /// `u(t,θ) = exp(−½ ∫ g^{11} ds) sin θ`, valid when `g11` depends only
    /// on `t` and the initial datum is `sin(x1)`.
    SeparableSin,
}

fn default_halvings() -> usize {
    3
}
fn default_relation_halvings() -> usize {
    2
}
fn default_max_defect() -> f64 {
    0.02
}
fn default_qv_tolerance() -> f64 {
    1e-6
}
fn default_transport_tolerance() -> f64 {
    1e-3
}
fn default_gprocess_tolerance() -> f64 {
    1e-6
}
fn default_forms_tolerance() -> f64 {
    5e-3
}
fn default_bias_allowance() -> f64 {
    2e-3
}
fn default_liouville_slack() -> f64 {
    5e-3
}
fn default_direction() -> f64 {
    1.0
}

impl AnalysisSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AnalysisSpec::TestAntidevelopment { .. } => "test_antidevelopment",
            AnalysisSpec::TestHessian { .. } => "test_hessian",
            AnalysisSpec::CounterexampleQv { .. } => "counterexample_qv",
            AnalysisSpec::IntrinsicQv { .. } => "intrinsic_qv",
            AnalysisSpec::Orthonormality { .. } => "orthonormality",
            AnalysisSpec::TransportOracle { .. } => "transport_oracle",
            AnalysisSpec::LiftRelation { .. } => "lift_relation",
            AnalysisSpec::GprocessCrosscheck { .. } => "gprocess_crosscheck",
            AnalysisSpec::DampedTransport { .. } => "damped_transport",
            AnalysisSpec::Heat { .. } => "heat",
            AnalysisSpec::Representation { .. } => "representation",
            AnalysisSpec::Liouville { .. } => "liouville",
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub manifold: ManifoldSpec,
    pub geometry: GeometrySpec,
    pub process: ProcessSpec,
    pub grid: GridSpec,
    pub ensemble: EnsembleSettings,
    pub analysis: Vec<AnalysisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

/// One validation problem, with a path into the document where possible.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Parse a JSON document into a spec; schema violations carry the JSON path.
pub fn parse_spec(json: &str) -> Result<ScenarioSpec, Vec<Diagnostic>> {
    let de = &mut serde_json::Deserializer::from_str(json);
    match serde_path_to_error::deserialize::<_, ScenarioSpec>(de) {
        Ok(spec) => Ok(spec),
        Err(err) => Err(vec![Diagnostic {
            path: err.path().to_string(),
            message: err.inner().to_string(),
        }]),
    }
}

/// Full validation: schema-level fields plus every DSL string, dimension
/// and cross-field consistency. Returns all problems found.
pub fn validate(spec: &ScenarioSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let d = spec.manifold.dim;
    let push = |out: &mut Vec<Diagnostic>, path: String, message: String| {
        out.push(Diagnostic { path, message });
    };

    if d == 0 || d > 8 {
        push(
            &mut out,
            "manifold.dim".into(),
            format!("dimension {d} outside 1..=8"),
        );
        return out;
    }
    if let DomainSpec::Torus { period } = &spec.manifold.domain {
        if period.len() != d {
            push(
                &mut out,
                "manifold.domain.period".into(),
                format!("expected {d} periods, got {}", period.len()),
            );
        }
        if period.iter().any(|&p| p <= 0.0) {
            push(
                &mut out,
                "manifold.domain.period".into(),
                "periods must be positive".into(),
            );
        }
    }

    match (&spec.geometry.metric, &spec.geometry.connection) {
        (None, None) => push(
            &mut out,
            "geometry".into(),
            "either `metric` or `connection` is required".into(),
        ),
        (Some(_), Some(_)) => push(
            &mut out,
            "geometry".into(),
            "give `metric` or `connection`, not both".into(),
        ),
        (Some(metric), None) => {
            if metric.len() != d || metric.iter().any(|row| row.len() != d) {
                push(
                    &mut out,
                    "geometry.metric".into(),
                    format!("expected a {d}×{d} grid of expressions"),
                );
            } else {
                for (i, row) in metric.iter().enumerate() {
                    for (j, src) in row.iter().enumerate() {
                        if let Err(e) = ScalarField::parse(src, d) {
                            push(
                                &mut out,
                                format!("geometry.metric[{i}][{j}]"),
                                e.to_string(),
                            );
                        }
                    }
                }
            }
        }
        (None, Some(gamma)) => {
            let shape_ok = gamma.len() == d
                && gamma.iter().all(|j| j.len() == d)
                && gamma.iter().all(|j| j.iter().all(|k| k.len() == d));
            if !shape_ok {
                push(
                    &mut out,
                    "geometry.connection".into(),
                    format!("expected a {d}×{d}×{d} grid of expressions"),
                );
            } else {
                for (i, pj) in gamma.iter().enumerate() {
                    for (j, pk) in pj.iter().enumerate() {
                        for (k, src) in pk.iter().enumerate() {
                            if let Err(e) = ScalarField::parse(src, d) {
                                push(
                                    &mut out,
                                    format!("geometry.connection[{i}][{j}][{k}]"),
                                    e.to_string(),
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    match &spec.process {
        ProcessSpec::Sde {
            drift,
            diffusion,
            x0,
            ..
        } => {
            if drift.len() != d {
                push(
                    &mut out,
                    "process.drift".into(),
                    format!("expected {d} components, got {}", drift.len()),
                );
            }
            for (i, src) in drift.iter().enumerate() {
                if let Err(e) = ScalarField::parse(src, d) {
                    push(&mut out, format!("process.drift[{i}]"), e.to_string());
                }
            }
            if diffusion.len() != d {
                push(
                    &mut out,
                    "process.diffusion".into(),
                    format!("expected {d} rows, got {}", diffusion.len()),
                );
            }
            let m = diffusion.first().map_or(0, |r| r.len());
            for (i, row) in diffusion.iter().enumerate() {
                if row.len() != m {
                    push(
                        &mut out,
                        format!("process.diffusion[{i}]"),
                        "ragged diffusion rows".into(),
                    );
                }
                for (j, src) in row.iter().enumerate() {
                    if let Err(e) = ScalarField::parse(src, d) {
                        push(
                            &mut out,
                            format!("process.diffusion[{i}][{j}]"),
                            e.to_string(),
                        );
                    }
                }
            }
            if x0.len() != d {
                push(
                    &mut out,
                    "process.x0".into(),
                    format!("expected {d} coordinates, got {}", x0.len()),
                );
            }
        }
        ProcessSpec::GtBrownian { x0 } => {
            if x0.len() != d {
                push(
                    &mut out,
                    "process.x0".into(),
                    format!("expected {d} coordinates, got {}", x0.len()),
                );
            }
            if spec.geometry.metric.is_none() {
                push(
                    &mut out,
                    "process".into(),
                    "gt_brownian requires geometry.metric".into(),
                );
            }
        }
    }

    if spec.grid.t_end.partial_cmp(&spec.grid.t0) != Some(std::cmp::Ordering::Greater)
        || spec.grid.steps == 0
    {
        push(
            &mut out,
            "grid".into(),
            "need t_end > t0 and steps >= 1".into(),
        );
    }
    if spec.ensemble.paths < 1 {
        push(&mut out, "ensemble.paths".into(), "at least 1 path".into());
    }
    if spec.analysis.is_empty() {
        push(
            &mut out,
            "analysis".into(),
            "analysis list must be non-empty".into(),
        );
    }

    for (idx, a) in spec.analysis.iter().enumerate() {
        let base = format!("analysis[{idx}]");
        let needs_metric = matches!(
            a,
            AnalysisSpec::Orthonormality { .. }
                | AnalysisSpec::IntrinsicQv { .. }
                | AnalysisSpec::DampedTransport { .. }
                | AnalysisSpec::LiftRelation { .. }
                | AnalysisSpec::Heat { .. }
                | AnalysisSpec::Representation { .. }
                | AnalysisSpec::Liouville { .. }
                | AnalysisSpec::TransportOracle { .. }
        );
        if needs_metric && spec.geometry.metric.is_none() {
            push(
                &mut out,
                base.clone(),
                format!("{} requires geometry.metric", a.kind_name()),
            );
        }
        match a {
            AnalysisSpec::TestHessian {
                functions: Some(fs),
                ..
            } => {
                for (i, src) in fs.iter().enumerate() {
                    if let Err(e) = ScalarField::parse(src, d) {
                        push(&mut out, format!("{base}.functions[{i}]"), e.to_string());
                    }
                }
            }
            AnalysisSpec::DampedTransport { .. } => {
                if !matches!(spec.process, ProcessSpec::GtBrownian { .. }) {
                    push(
                        &mut out,
                        base.clone(),
                        "damped_transport needs a gt_brownian process (the Ricci form assumes \
                         the Brownian bracket)"
                            .into(),
                    );
                }
            }
            AnalysisSpec::TransportOracle { .. } => {
                if d != 1 {
                    push(
                        &mut out,
                        base.clone(),
                        "transport_oracle needs a 1-d chart".into(),
                    );
                }
                if let Some(metric) = &spec.geometry.metric {
                    if let Ok(f) = ScalarField::parse(&metric[0][0], 1) {
                        if f.expression().uses_time() {
                            push(
                                &mut out,
                                base.clone(),
                                "transport_oracle needs a static (t-independent) metric".into(),
                            );
                        }
                    }
                }
            }
            AnalysisSpec::Heat {
                u_init,
                j,
                time_steps,
                ..
            }
            | AnalysisSpec::Representation {
                u_init,
                j,
                heat_steps: time_steps,
                ..
            }
            | AnalysisSpec::Liouville {
                u_init,
                j,
                heat_steps: time_steps,
                ..
            } => {
                if let Err(e) = ScalarField::parse(u_init, d) {
                    push(&mut out, format!("{base}.u_init"), e.to_string());
                }
                if *j < 8 || *time_steps == 0 {
                    push(
                        &mut out,
                        base.clone(),
                        "need j >= 8 and time steps >= 1".into(),
                    );
                }
                if d != 1 || !matches!(spec.manifold.domain, DomainSpec::Torus { .. }) {
                    push(
                        &mut out,
                        base.clone(),
                        format!("{} needs a 1-d torus chart", a.kind_name()),
                    );
                }
            }
            _ => {}
        }
    }

    // construction-level checks (symmetry, positive definiteness at x0)
    if out.is_empty() {
        if let Err(e) = build_geometry(spec) {
            push(&mut out, "geometry".into(), e.to_string());
        }
    }
    out
}

/// Built geometric objects for a validated spec.
pub struct BuiltGeometry {
    pub metric: Option<MetricFamily>,
    pub connection: ConnectionFamily,
}

pub(crate) fn domain_of(spec: &ScenarioSpec) -> Domain {
    match &spec.manifold.domain {
        DomainSpec::Euclidean => Domain::Euclidean,
        DomainSpec::Torus { period } => Domain::Torus {
            period: period.clone(),
        },
    }
}

/// Materialize the metric/connection from a spec.
pub fn build_geometry(spec: &ScenarioSpec) -> Result<BuiltGeometry, GeometryError> {
    let d = spec.manifold.dim;
    let domain = domain_of(spec);
    if let Some(metric) = &spec.geometry.metric {
        let m = MetricFamily::parse(metric, domain)?;
        let conn = m.levi_civita();
        // reject metrics that are degenerate where the scenario starts
        m.matrix(spec.grid.t0, spec.process.x0())?;
        Ok(BuiltGeometry {
            metric: Some(m),
            connection: conn,
        })
    } else {
        let gamma_src = spec.geometry.connection.as_ref().expect("validated");
        let mut gamma = Vec::with_capacity(d * d * d);
        for pj in gamma_src {
            for pk in pj {
                for src in pk {
                    gamma.push(
                        ScalarField::parse(src, d)
                            .map_err(|e| GeometryError::BadField(e.to_string()))?,
                    );
                }
            }
        }
        let pts = crate::geometry::sample_points(d, &domain, 16, 5);
        let conn = ConnectionFamily::explicit(d, domain, gamma, &pts)?;
        Ok(BuiltGeometry {
            metric: None,
            connection: conn,
        })
    }
}

/// FNV-1a hash of the canonical JSON encoding, as a short config fingerprint.
pub fn config_hash(spec: &ScenarioSpec, seed: u64) -> String {
    let json = serde_json::to_string(spec).expect("spec serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.as_bytes().iter().chain(seed.to_le_bytes().iter()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    format!("{h:016x}")
}
