//! Built-in scenario catalog.

use super::*;

const TAU: f64 = std::f64::consts::TAU;

fn metric_1d(entry: &str) -> GeometrySpec {
    GeometrySpec {
        metric: Some(vec![vec![entry.to_string()]]),
        connection: None,
    }
}

fn sde_1d(drift: &str, diffusion: &str, x0: f64) -> ProcessSpec {
    ProcessSpec::Sde {
        drift: vec![drift.to_string()],
        diffusion: vec![vec![diffusion.to_string()]],
        x0: vec![x0],
        convention: ConventionSpec::Stratonovich,
    }
}

fn euclidean(dim: usize) -> ManifoldSpec {
    ManifoldSpec {
        dim,
        domain: DomainSpec::Euclidean,
    }
}

fn circle() -> ManifoldSpec {
    ManifoldSpec {
        dim: 1,
        domain: DomainSpec::Torus { period: vec![TAU] },
    }
}

/// All built-in scenario names, in catalog order.
pub fn builtin_names() -> Vec<&'static str> {
    vec![
        "example55",
        "example55_wrongdrift",
        "counterexample62",
        "counterexample63",
        "orthonormality2d",
        "transport1d",
        "lift_relation",
        "gprocess_crosscheck",
        "damped_circle",
        "heat_circle",
        "representation_circle",
        "liouville_circle",
    ]
}

/// Names with their one-line descriptions.
pub fn catalog() -> Vec<(&'static str, String)> {
    builtin_names()
        .into_iter()
        .map(|n| {
            (
                n,
                builtin(n)
                    .expect("builtin exists")
                    .description
                    .unwrap_or_default(),
            )
        })
        .collect()
}

/// Look up a built-in scenario by name.
pub fn builtin(name: &str) -> Option<ScenarioSpec> {
    let spec = match name {
        "example55" => ScenarioSpec {
            name: name.into(),
            description: Some(
                "conformal metric g = e^x dx^2 with compensated drift b = -u'sigma^2/(4u) = -1/4: \
                 the SDE solution is a martingale for the moving connection; both drift tests \
                 must return `consistent`"
                    .into(),
            ),
            manifold: euclidean(1),
            geometry: metric_1d("exp(x1)"),
            process: sde_1d("-0.25", "1", 0.0),
            grid: GridSpec {
                t0: 0.0,
                t_end: 1.0,
                steps: 1000,
            },
            ensemble: EnsembleSettings {
                paths: 10_000,
                seed: 55,
            },
            analysis: vec![
                AnalysisSpec::TestAntidevelopment {
                    expect: Some(ExpectDecision::Consistent),
                },
                AnalysisSpec::TestHessian {
                    functions: None,
                    expect: Some(ExpectDecision::Consistent),
                },
            ],
            output_dir: None,
        },
        "example55_wrongdrift" => ScenarioSpec {
            name: name.into(),
            description: Some(
                "same geometry as example55 but with b = 0: the drift no longer cancels the \
                 Christoffel correction and both tests must reject"
                    .into(),
            ),
            manifold: euclidean(1),
            geometry: metric_1d("exp(x1)"),
            process: sde_1d("0", "1", 0.0),
            grid: GridSpec {
                t0: 0.0,
                t_end: 1.0,
                steps: 1000,
            },
            ensemble: EnsembleSettings {
                paths: 10_000,
                seed: 56,
            },
            analysis: vec![
                AnalysisSpec::TestAntidevelopment {
                    expect: Some(ExpectDecision::Rejected),
                },
                AnalysisSpec::TestHessian {
                    functions: None,
                    expect: Some(ExpectDecision::Rejected),
                },
            ],
            output_dir: None,
        },
        "counterexample62" => ScenarioSpec {
            name: name.into(),
            description: Some(
                "u(t,x) = exp(a(t)x) with a = e^{2t}, sigma = e^{-t/2}: flat quadratic variation \
                 integral sigma^2 stays near 1 while the martingale itself drifts to -infinity \
                 (finite flat QV does not force convergence)"
                    .into(),
            ),
            manifold: euclidean(1),
            geometry: metric_1d("exp(exp(2*t)*x1)"),
            process: sde_1d("-0.25*exp(t)", "exp(-0.5*t)", 0.0),
            // the drift reaches e^5/4 by the horizon, so the step must be
            // small enough that the discrete drift² term h·∫b² (absent from
            // the continuous bracket) stays inside the QV window
            grid: GridSpec {
                t0: 0.0,
                t_end: 5.0,
                steps: 100_000,
            },
            ensemble: EnsembleSettings {
                paths: 1000,
                seed: 62,
            },
            analysis: vec![AnalysisSpec::CounterexampleQv {
                flat_window: Some([0.9, 1.05]),
                riemannian_window: None,
                max_mean_displacement: Some(-30.0),
            }],
            output_dir: None,
        },
        "counterexample63" => ScenarioSpec {
            name: name.into(),
            description: Some(
                "time-only conformal factor u(t) = e^{-t} with X a standard Brownian motion: \
                 the moving-metric quadratic variation int g(s)(dX,dX) = int u(s) ds stays near 1 \
                 while the flat QV grows like T (finite moving QV does not force convergence \
                 either)"
                    .into(),
            ),
            manifold: euclidean(1),
            geometry: metric_1d("exp(-t)"),
            process: sde_1d("0", "1", 0.0),
            grid: GridSpec {
                t0: 0.0,
                t_end: 10.0,
                steps: 10_000,
            },
            ensemble: EnsembleSettings {
                paths: 1000,
                seed: 63,
            },
            analysis: vec![
                AnalysisSpec::CounterexampleQv {
                    flat_window: Some([9.5, 10.5]),
                    riemannian_window: Some([0.9, 1.05]),
                    max_mean_displacement: None,
                },
                AnalysisSpec::IntrinsicQv {
                    agreement_tolerance: 1e-6,
                },
            ],
            output_dir: None,
        },
        "orthonormality2d" => ScenarioSpec {
            name: name.into(),
            description: Some(
                "g(t) = e^{2t} I on R^2: frames of the Riemann-horizontal lift must stay \
                 g(t)-orthonormal up to O(h), and the defect must halve with the step"
                    .into(),
            ),
            manifold: euclidean(2),
            geometry: GeometrySpec {
                metric: Some(vec![
                    vec!["exp(2*t)".into(), "0".into()],
                    vec!["0".into(), "exp(2*t)".into()],
                ]),
                connection: None,
            },
            process: ProcessSpec::GtBrownian { x0: vec![0.0, 0.0] },
            grid: GridSpec {
                t0: 0.0,
                t_end: 1.0,
                steps: 1000,
            },
            ensemble: EnsembleSettings { paths: 4, seed: 71 },
            analysis: vec![AnalysisSpec::Orthonormality {
                halvings: 3,
                max_defect: 0.02,
            }],
            output_dir: None,
        },
        "transport1d" => ScenarioSpec {
            name: name.into(),
            description: Some(
                "static metric u = e^x on R: parallel transport along any path equals \
                 sqrt(u(X_0)/u(X_T)), checked per path to 1e-3 relative"
                    .into(),
            ),
            manifold: euclidean(1),
            geometry: metric_1d("exp(x1)"),
            process: sde_1d("0", "1", 0.0),
            grid: GridSpec {
                t0: 0.0,
                t_end: 1.0,
                steps: 1000,
            },
            ensemble: EnsembleSettings {
                paths: 100,
                seed: 72,
            },
            analysis: vec![AnalysisSpec::TransportOracle { tolerance: 1e-3 }],
            output_dir: None,
        },
        "lift_relation" => ScenarioSpec {
            name: name.into(),
            description: Some(
                "g = e^{t+x} dx^2 along a smooth path: the gauge between the plain and \
                 Riemann-horizontal lifts satisfies d(U^{-1}U^R) = -1/2 U^{-1}(dg/dt)# U^R dt; \
                 the trapezoidal residual must shrink at second order"
                    .into(),
            ),
            manifold: euclidean(1),
            geometry: metric_1d("exp(t + x1)"),
            process: sde_1d("0.5", "0", 0.1),
            grid: GridSpec {
                t0: 0.0,
                t_end: 1.0,
                steps: 500,
            },
            ensemble: EnsembleSettings { paths: 1, seed: 73 },
            analysis: vec![AnalysisSpec::LiftRelation { halvings: 2 }],
            output_dir: None,
        },
        "gprocess_crosscheck" => ScenarioSpec {
            name: name.into(),
            description: Some(
                "solving dG = -omega(dU~) G along a deliberately rotating, breathing frame path \
                 must reproduce the directly integrated horizontal lift node-for-node"
                    .into(),
            ),
            manifold: euclidean(2),
            geometry: GeometrySpec {
                metric: Some(vec![
                    vec!["exp(2*t)".into(), "0".into()],
                    vec!["0".into(), "exp(x1)".into()],
                ]),
                connection: None,
            },
            process: ProcessSpec::Sde {
                drift: vec!["0".into(), "0".into()],
                diffusion: vec![vec!["1".into(), "0".into()], vec!["0".into(), "1".into()]],
                x0: vec![0.0, 0.0],
                convention: ConventionSpec::Stratonovich,
            },
            grid: GridSpec {
                t0: 0.0,
                t_end: 1.0,
                steps: 1000,
            },
            ensemble: EnsembleSettings { paths: 3, seed: 74 },
            analysis: vec![AnalysisSpec::GprocessCrosscheck { tolerance: 1e-6 }],
            output_dir: None,
        },
        "damped_circle" => ScenarioSpec {
            name: name.into(),
            description: Some(
                "shrinking circle g(t) = e^{-Kt} dtheta^2, K = 1: the damped transport contracts \
                 operator norms like e^{-Kt/2}, and its curvature form agrees with the \
                 (dg/dt)# - Ric# form"
                    .into(),
            ),
            manifold: circle(),
            geometry: metric_1d("exp(-t)"),
            process: ProcessSpec::GtBrownian { x0: vec![1.0] },
            grid: GridSpec {
                t0: 0.0,
                t_end: 1.0,
                steps: 1000,
            },
            ensemble: EnsembleSettings {
                paths: 10,
                seed: 75,
            },
            analysis: vec![AnalysisSpec::DampedTransport {
                k: 1.0,
                norm_tolerance: 1e-3,
                forms_tolerance: 5e-3,
            }],
            output_dir: None,
        },
        "heat_circle" => ScenarioSpec {
            name: name.into(),
            description: Some(
                "heat flow du/dt = 1/2 Lap_{g(t)} u on the circle with g(t) = e^t dtheta^2 and \
                 u(0) = sin theta: matches exp(-1/2 int e^{-s} ds) sin theta to 1e-3 at J = 256"
                    .into(),
            ),
            manifold: circle(),
            geometry: metric_1d("exp(t)"),
            process: ProcessSpec::GtBrownian { x0: vec![0.7] },
            grid: GridSpec {
                t0: 0.0,
                t_end: 1.0,
                steps: 1000,
            },
            ensemble: EnsembleSettings { paths: 1, seed: 76 },
            analysis: vec![AnalysisSpec::Heat {
                u_init: "sin(x1)".into(),
                j: 256,
                time_steps: 4000,
                oracle: Some(HeatOracle::SeparableSin),
                max_error: Some(1e-3),
            }],
            output_dir: None,
        },
        "representation_circle" => ScenarioSpec {
            name: name.into(),
            description: Some(
                "gradient representation du(T2,x)v = E[du(T1, X_S) Theta_{0,S} v] for the heat \
                 flow on the growing circle, with X a Brownian motion of the time-reversed \
                 family and Theta its damped transport"
                    .into(),
            ),
            manifold: circle(),
            geometry: metric_1d("exp(t)"),
            process: ProcessSpec::GtBrownian { x0: vec![0.7] },
            grid: GridSpec {
                t0: 0.0,
                t_end: 1.0,
                steps: 1000,
            },
            ensemble: EnsembleSettings {
                paths: 10_000,
                seed: 77,
            },
            analysis: vec![AnalysisSpec::Representation {
                u_init: "sin(x1)".into(),
                j: 256,
                heat_steps: 4000,
                mc_paths: 10_000,
                mc_steps: 1000,
                v: 1.0,
                bias_allowance: 2e-3,
            }],
            output_dir: None,
        },
        "liouville_circle" => ScenarioSpec {
            name: name.into(),
            description: Some(
                "strict super Ricci flow dg/dt + Ric >= K g with K = 1 (g = e^t dtheta^2): the \
                 sup of the moving-metric gradient norm of a heat solution must contract at \
                 least like e^{-K(T2-T1)/2} over horizon 2"
                    .into(),
            ),
            manifold: circle(),
            geometry: metric_1d("exp(t)"),
            process: ProcessSpec::GtBrownian { x0: vec![0.7] },
            grid: GridSpec {
                t0: 0.0,
                t_end: 2.0,
                steps: 2000,
            },
            ensemble: EnsembleSettings { paths: 1, seed: 78 },
            analysis: vec![AnalysisSpec::Liouville {
                u_init: "sin(x1)".into(),
                j: 256,
                heat_steps: 12_000,
                k: 1.0,
                slack: 5e-3,
            }],
            output_dir: None,
        },
        _ => return None,
    };
    Some(spec)
}
