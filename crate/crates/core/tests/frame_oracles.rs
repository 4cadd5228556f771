//! Closed-form and cross-validation oracles for the frame-bundle layer.

use tempogeo_core::fields::{Dual, MatrixField, Scalar, VectorField};
use tempogeo_core::frame::{
    develop, g_process_lift, gram_schmidt_frame, horizontal_lift, lift_relation_residuals,
    orthonormality_defect, parallel_transport, riemann_horizontal_lift, Frame, LiftGeometry,
};
use tempogeo_core::geometry::{ConnectionFamily, Domain, MetricFamily};
use tempogeo_core::linalg::MatrixF;
use tempogeo_core::sde::{integrate_sde, BrownianDriver, Convention, TimeGrid};

fn metric_1d(src: &str) -> MetricFamily {
    MetricFamily::parse(&[vec![src.to_string()]], Domain::Euclidean).unwrap()
}

fn brownian_path_1d(seed: u64, n: usize, path_id: u64) -> tempogeo_core::SemimartingalePath {
    let drift = VectorField::parse(&["0".into()], 1).unwrap();
    let diff = MatrixField::parse(&[vec!["1".into()]], 1).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
    let driver = BrownianDriver::new(seed, 1, grid);
    integrate_sde(
        &drift,
        &diff,
        &[0.0],
        &driver,
        path_id,
        Convention::Stratonovich,
    )
    .unwrap()
}

fn example55_path(seed: u64, n: usize, path_id: u64) -> tempogeo_core::SemimartingalePath {
    let drift = VectorField::parse(&["-0.25".into()], 1).unwrap();
    let diff = MatrixField::parse(&[vec!["1".into()]], 1).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
    let driver = BrownianDriver::new(seed, 1, grid);
    integrate_sde(
        &drift,
        &diff,
        &[0.0],
        &driver,
        path_id,
        Convention::Stratonovich,
    )
    .unwrap()
}

#[test]
fn euclidean_lift_keeps_the_frame_and_flattens_increments() {
    let x = brownian_path_1d(11, 200, 0);
    let conn = ConnectionFamily::flat(1);
    let e0 = Frame {
        basepoint: x.state(0).to_vec(),
        matrix: MatrixF::from_rows(vec![vec![2.0]]),
    };
    let lift = horizontal_lift(&x, &conn, &e0).unwrap();
    for k in 0..=200 {
        assert_eq!(lift.frame(k)[(0, 0)], 2.0);
    }
    for k in 0..200 {
        let dx = x.state(k + 1)[0] - x.state(k)[0];
        assert!((lift.dz(k)[0] - dx / 2.0).abs() < 1e-15);
    }
}

#[test]
fn static_conformal_metric_frame_has_closed_form() {
    // g = e^x dx², Γ = 1/2: de = −½ e ∘dX, so e_T = e_0 exp(−(X_T − X_0)/2)
    let m = metric_1d("exp(x1)");
    let conn = m.levi_civita();
    for path_id in 0..20 {
        let x = brownian_path_1d(42, 1000, path_id);
        let e0 = Frame::identity(x.state(0).to_vec());
        let lift = horizontal_lift(&x, &conn, &e0).unwrap();
        let xt = x.state(1000)[0];
        let expected = (-(xt - 0.0) / 2.0).exp();
        let got = lift.frame(1000)[(0, 0)];
        let rel = ((got - expected) / expected).abs();
        assert!(rel <= 1e-3, "path {path_id}: rel err {rel:.2e}");
    }
}

#[test]
fn example55_antidevelopment_matches_exponential_martingale() {
    // Z_T = 2 (exp(W_T/2 − T/8) − 1) pathwise
    let m = metric_1d("exp(x1)");
    let conn = m.levi_civita();
    let mut ok = 0;
    let total = 100;
    for path_id in 0..total {
        let x = example55_path(5, 1000, path_id);
        let e0 = Frame::identity(vec![0.0]);
        let lift = horizontal_lift(&x, &conn, &e0).unwrap();
        let z = lift.z_cumulative();
        let w_t: f64 = x.driver_increments.as_ref().unwrap().iter().sum();
        let expected = 2.0 * ((w_t / 2.0 - 1.0 / 8.0).exp() - 1.0);
        if (z[1000] - expected).abs() <= 1e-2 {
            ok += 1;
        }
    }
    assert!(ok >= 99, "only {ok}/{total} paths within 1e-2");
}

#[test]
fn riemann_lift_of_static_metric_equals_connection_lift() {
    let m = metric_1d("exp(x1)");
    let conn = m.levi_civita();
    let x = brownian_path_1d(3, 300, 1);
    let e0m = gram_schmidt_frame(&m, 0.0, x.state(0)).unwrap();
    let e0 = Frame {
        basepoint: x.state(0).to_vec(),
        matrix: e0m,
    };
    let a = horizontal_lift(&x, &conn, &e0).unwrap();
    let b = riemann_horizontal_lift(&x, &m, &e0).unwrap();
    for k in 0..=300 {
        assert_eq!(a.frame(k)[(0, 0)], b.frame(k)[(0, 0)], "node {k}");
    }
    for k in 0..300 {
        assert_eq!(a.dz(k)[0], b.dz(k)[0]);
    }
}

#[test]
fn riemann_lift_tracks_shrinking_frame_for_exponential_metric() {
    // g(t) = e^{2t} I on ℝ²: e(t) = e^{−t} I independent of the path
    let m = MetricFamily::parse(
        &[
            vec!["exp(2*t)".into(), "0".into()],
            vec!["0".into(), "exp(2*t)".into()],
        ],
        Domain::Euclidean,
    )
    .unwrap();
    let drift = VectorField::parse(&["0".into(), "0".into()], 2).unwrap();
    let diff = MatrixField::parse(
        &[vec!["1".into(), "0".into()], vec!["0".into(), "1".into()]],
        2,
    )
    .unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
    let driver = BrownianDriver::new(8, 2, grid);
    let x = integrate_sde(
        &drift,
        &diff,
        &[0.0, 0.0],
        &driver,
        0,
        Convention::Stratonovich,
    )
    .unwrap();
    let e0 = Frame::identity(vec![0.0, 0.0]);
    let lift = riemann_horizontal_lift(&x, &m, &e0).unwrap();
    for k in [0, 250, 500, 1000] {
        let expected = (-grid.node(k)).exp();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { expected } else { 0.0 };
                assert!(
                    (lift.frame(k)[(i, j)] - want).abs() < 5e-3,
                    "node {k} entry ({i},{j})"
                );
            }
        }
    }
    let defect = orthonormality_defect(&lift, &m).unwrap();
    assert!(defect <= 0.02, "defect {defect}");
}

#[test]
fn riemann_1d_frame_is_inverse_root_of_conformal_factor() {
    // g = u(t,x) dx² with u = e^{t + x}: orthonormality forces e = u^{-1/2}
    let m = metric_1d("exp(t + x1)");
    let x = brownian_path_1d(17, 1000, 2);
    let u0: f64 = 1.0; // u(0, 0)
    let e0 = Frame {
        basepoint: vec![0.0],
        matrix: MatrixF::from_rows(vec![vec![u0.powf(-0.5)]]),
    };
    let lift = riemann_horizontal_lift(&x, &m, &e0).unwrap();
    for k in [100, 500, 1000] {
        let t = lift.grid.node(k);
        let u = (t + lift.x(k)[0]).exp();
        let expected = u.powf(-0.5);
        let got = lift.frame(k)[(0, 0)];
        assert!(
            ((got - expected) / expected).abs() < 1e-2,
            "node {k}: {got} vs {expected}"
        );
    }
}

#[test]
fn orthonormality_defect_halves_with_the_step() {
    // coarsening the same driving noise keeps the underlying path fixed
    let m = MetricFamily::parse(
        &[
            vec!["exp(2*t)".into(), "0".into()],
            vec!["0".into(), "exp(2*t)".into()],
        ],
        Domain::Euclidean,
    )
    .unwrap();
    let defect_at = |n: usize| {
        let drift = VectorField::parse(&["0".into(), "0".into()], 2).unwrap();
        let diff = MatrixField::parse(
            &[vec!["1".into(), "0".into()], vec!["0".into(), "1".into()]],
            2,
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
        let driver = BrownianDriver::new(23, 2, grid);
        let x = integrate_sde(
            &drift,
            &diff,
            &[0.0, 0.0],
            &driver,
            0,
            Convention::Stratonovich,
        )
        .unwrap();
        let lift = riemann_horizontal_lift(&x, &m, &Frame::identity(vec![0.0, 0.0])).unwrap();
        orthonormality_defect(&lift, &m).unwrap()
    };
    let d1 = defect_at(1000);
    let d2 = defect_at(2000);
    let ratio = d2 / d1;
    assert!(
        (1.0 / 3.0..=2.0 / 3.0).contains(&ratio),
        "defects {d1:.3e} -> {d2:.3e}, ratio {ratio:.3}"
    );
}

#[test]
fn gauge_process_is_identity_on_horizontal_input() {
    let m = metric_1d("exp(t + x1)");
    let conn = m.levi_civita();
    let x = brownian_path_1d(29, 500, 0);
    let e0 = Frame::identity(vec![0.0]);
    let direct = horizontal_lift(&x, &conn, &e0).unwrap();
    let frames: Vec<MatrixF> = (0..=500).map(|k| direct.frame(k).clone()).collect();
    let g = g_process_lift(&x, LiftGeometry::Connection(&conn), &frames).unwrap();
    for (k, gk) in g.gauge.iter().enumerate() {
        assert!(
            gk.sub(&MatrixF::identity(1)).max_abs() < 1e-12,
            "G at node {k} drifted"
        );
    }
    for dg in &g.gamma_increments {
        assert!(dg.max_abs() < 1e-12);
    }
}

#[test]
fn gauge_process_reproduces_direct_lift_from_arbitrary_frames() {
    // d=2, time- and space-dependent metric, deliberately non-horizontal ẽ
    let m = MetricFamily::parse(
        &[
            vec!["exp(2*t)".into(), "0".into()],
            vec!["0".into(), "exp(x1)".into()],
        ],
        Domain::Euclidean,
    )
    .unwrap();
    let conn = m.levi_civita();
    let drift = VectorField::parse(&["0".into(), "0".into()], 2).unwrap();
    let diff = MatrixField::parse(
        &[vec!["1".into(), "0".into()], vec!["0".into(), "1".into()]],
        2,
    )
    .unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
    let driver = BrownianDriver::new(37, 2, grid);
    let x = integrate_sde(
        &drift,
        &diff,
        &[0.0, 0.0],
        &driver,
        0,
        Convention::Stratonovich,
    )
    .unwrap();

    // ẽ_k: rotating, breathing frames above the same path
    let tilde: Vec<MatrixF> = (0..=1000)
        .map(|k| {
            let t = grid.node(k);
            let (s, c) = (2.0 * t).sin_cos();
            let scale = 1.0 + 0.3 * (3.0 * t).sin();
            MatrixF::from_rows(vec![
                vec![scale * c, -scale * s],
                vec![scale * s, scale * c],
            ])
        })
        .collect();

    // connection flavor
    let e0 = Frame {
        basepoint: vec![0.0, 0.0],
        matrix: tilde[0].clone(),
    };
    let direct = horizontal_lift(&x, &conn, &e0).unwrap();
    let via_g = g_process_lift(&x, LiftGeometry::Connection(&conn), &tilde).unwrap();
    let mut worst = 0.0f64;
    for k in 0..=1000 {
        worst = worst.max(direct.frame(k).sub(via_g.lift.frame(k)).max_abs());
    }
    let dz = direct.z_cumulative();
    let gz = via_g.lift.z_cumulative();
    let worst_z = dz
        .iter()
        .zip(&gz)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(worst <= 1e-6, "frame disagreement {worst:.3e}");
    assert!(
        worst_z <= 1e-6,
        "antidevelopment disagreement {worst_z:.3e}"
    );

    // Riemann flavor from an orthonormal start
    let e0m = gram_schmidt_frame(&m, 0.0, &[0.0, 0.0]).unwrap();
    let mut tilde_r = tilde.clone();
    tilde_r[0] = e0m.clone();
    let e0r = Frame {
        basepoint: vec![0.0, 0.0],
        matrix: e0m,
    };
    let direct_r = riemann_horizontal_lift(&x, &m, &e0r).unwrap();
    let via_gr = g_process_lift(&x, LiftGeometry::Riemann(&m), &tilde_r).unwrap();
    let mut worst_r = 0.0f64;
    for k in 0..=1000 {
        worst_r = worst_r.max(direct_r.frame(k).sub(via_gr.lift.frame(k)).max_abs());
    }
    assert!(worst_r <= 1e-6, "riemann frame disagreement {worst_r:.3e}");
}

#[test]
fn develop_of_zero_is_constant_and_euclidean_develop_is_affine() {
    let conn = ConnectionFamily::flat(2);
    let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
    let e0 = Frame {
        basepoint: vec![1.0, -2.0],
        matrix: MatrixF::from_rows(vec![vec![2.0, 0.0], vec![0.0, 0.5]]),
    };
    let zeros = vec![0.0; 200];
    let l = develop(grid, &zeros, &e0, LiftGeometry::Connection(&conn)).unwrap();
    for k in 0..=100 {
        assert_eq!(l.x(k), &[1.0, -2.0]);
    }

    // x_k = x_0 + e_0 Z_k for the flat connection
    let dz: Vec<f64> = (0..200).map(|i| ((i as f64) * 0.1).sin() * 0.01).collect();
    let l = develop(grid, &dz, &e0, LiftGeometry::Connection(&conn)).unwrap();
    let mut z = [0.0f64; 2];
    for k in 0..100 {
        z[0] += dz[2 * k];
        z[1] += dz[2 * k + 1];
        let expect = [1.0 + 2.0 * z[0], -2.0 + 0.5 * z[1]];
        assert!((l.x(k + 1)[0] - expect[0]).abs() < 1e-12);
        assert!((l.x(k + 1)[1] - expect[1]).abs() < 1e-12);
    }
}

#[test]
fn develop_inverts_antidevelopment_at_the_step_level() {
    let m = metric_1d("exp(x1)");
    let conn = m.levi_civita();
    let x = example55_path(7, 1000, 4);
    let e0 = Frame::identity(vec![0.0]);
    let lift = horizontal_lift(&x, &conn, &e0).unwrap();
    let dz: Vec<f64> = (0..1000).flat_map(|k| lift.dz(k).to_vec()).collect();
    let rebuilt = develop(lift.grid, &dz, &e0, LiftGeometry::Connection(&conn)).unwrap();
    let mut worst = 0.0f64;
    for k in 0..=1000 {
        worst = worst.max((rebuilt.x(k)[0] - lift.x(k)[0]).abs());
        worst = worst.max(rebuilt.frame(k).sub(lift.frame(k)).max_abs());
    }
    assert!(worst <= 1e-9, "roundtrip error {worst:.3e}");

    // Riemann flavor roundtrip as well
    let e0r = Frame {
        basepoint: vec![0.0],
        matrix: gram_schmidt_frame(&m, 0.0, &[0.0]).unwrap(),
    };
    let rlift = riemann_horizontal_lift(&x, &m, &e0r).unwrap();
    let rdz: Vec<f64> = (0..1000).flat_map(|k| rlift.dz(k).to_vec()).collect();
    let rrebuilt = develop(rlift.grid, &rdz, &e0r, LiftGeometry::Riemann(&m)).unwrap();
    let mut worst_r = 0.0f64;
    for k in 0..=1000 {
        worst_r = worst_r.max((rrebuilt.x(k)[0] - rlift.x(k)[0]).abs());
        worst_r = worst_r.max(rrebuilt.frame(k).sub(rlift.frame(k)).max_abs());
    }
    assert!(worst_r <= 1e-9, "riemann roundtrip error {worst_r:.3e}");
}

#[test]
fn lifting_twice_is_bit_identical() {
    let m = metric_1d("exp(t + x1)");
    let conn = m.levi_civita();
    let x = brownian_path_1d(97, 300, 5);
    let e0 = Frame::identity(vec![0.0]);
    let a = horizontal_lift(&x, &conn, &e0).unwrap();
    let b = horizontal_lift(&x, &conn, &e0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn damped_transport_on_flat_static_space_is_the_constant_frame_transport() {
    use tempogeo_core::frame::{damped_transport_brownian, damped_transport_general};
    let m = MetricFamily::euclidean(2);
    let conn = m.levi_civita();
    let drift = VectorField::parse(&["0".into(), "0".into()], 2).unwrap();
    let diff = MatrixField::parse(
        &[vec!["1".into(), "0".into()], vec!["0".into(), "1".into()]],
        2,
    )
    .unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
    let driver = BrownianDriver::new(3, 2, grid);
    let x = integrate_sde(
        &drift,
        &diff,
        &[0.0, 0.0],
        &driver,
        0,
        Convention::Stratonovich,
    )
    .unwrap();
    let e0 = Frame::identity(vec![0.0, 0.0]);
    let clift = horizontal_lift(&x, &conn, &e0).unwrap();
    let general = damped_transport_general(&clift, &conn).unwrap();
    let rlift = riemann_horizontal_lift(&x, &m, &e0).unwrap();
    let brown = damped_transport_brownian(&rlift, &m).unwrap();
    let id = MatrixF::identity(2);
    for k in [0, 100, 200] {
        assert!(general[k].matrix.sub(&id).max_abs() < 1e-12);
        assert!(brown[k].matrix.sub(&id).max_abs() < 1e-12);
    }
}

#[test]
fn transport_is_identity_at_equal_times_and_frame_independent() {
    let m = metric_1d("exp(x1)");
    let conn = m.levi_civita();
    let x = brownian_path_1d(41, 500, 3);
    let a = horizontal_lift(&x, &conn, &Frame::identity(vec![0.0])).unwrap();
    let b = horizontal_lift(
        &x,
        &conn,
        &Frame {
            basepoint: vec![0.0],
            matrix: MatrixF::from_rows(vec![vec![-3.7]]),
        },
    )
    .unwrap();
    let same = parallel_transport(&a, 123, 123).unwrap();
    assert!((same.matrix[(0, 0)] - 1.0).abs() < 1e-14);
    let pa = parallel_transport(&a, 100, 400).unwrap();
    let pb = parallel_transport(&b, 100, 400).unwrap();
    assert!(
        (pa.matrix[(0, 0)] - pb.matrix[(0, 0)]).abs() <= 1e-9,
        "transport depends on the initial frame"
    );
}

#[test]
fn transport_matches_conformal_square_root_oracle() {
    // static u = e^x: //_{0,T} = √(u(X_0)/u(X_T)) = exp(−(X_T − X_0)/2)
    let m = metric_1d("exp(x1)");
    let conn = m.levi_civita();
    for path_id in 0..100 {
        let x = brownian_path_1d(53, 1000, path_id);
        let lift = horizontal_lift(&x, &conn, &Frame::identity(vec![0.0])).unwrap();
        let p = parallel_transport(&lift, 0, 1000).unwrap();
        let expected = (-(x.state(1000)[0]) / 2.0).exp();
        let rel = ((p.matrix[(0, 0)] - expected) / expected).abs();
        assert!(rel <= 1e-3, "path {path_id}: rel err {rel:.2e}");
    }
}

#[test]
fn riemann_transport_preserves_the_moving_norm() {
    let m = MetricFamily::parse(
        &[
            vec!["exp(2*t)".into(), "0".into()],
            vec!["0".into(), "exp(x1)".into()],
        ],
        Domain::Euclidean,
    )
    .unwrap();
    let drift = VectorField::parse(&["0".into(), "0".into()], 2).unwrap();
    let diff = MatrixField::parse(
        &[vec!["1".into(), "0".into()], vec!["0".into(), "1".into()]],
        2,
    )
    .unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
    let driver = BrownianDriver::new(61, 2, grid);
    let x = integrate_sde(
        &drift,
        &diff,
        &[0.0, 0.0],
        &driver,
        1,
        Convention::Stratonovich,
    )
    .unwrap();
    let e0 = Frame {
        basepoint: vec![0.0, 0.0],
        matrix: gram_schmidt_frame(&m, 0.0, &[0.0, 0.0]).unwrap(),
    };
    let lift = riemann_horizontal_lift(&x, &m, &e0).unwrap();
    let p = parallel_transport(&lift, 0, 1000).unwrap();
    let v = [0.6, -0.8];
    let pv = p.matrix.matvec(&v);
    let from = m.inner(0.0, lift.x(0), &v, &v).unwrap().sqrt();
    let to = m.inner(1.0, lift.x(1000), &pv, &pv).unwrap().sqrt();
    assert!(
        ((to - from) / from).abs() < 2e-2,
        "norms {from} -> {to} under Riemann transport"
    );
}

#[test]
fn lift_relation_residual_vanishes_for_static_metrics() {
    let m = metric_1d("exp(x1)");
    let conn = m.levi_civita();
    let x = brownian_path_1d(71, 400, 0);
    let e0 = Frame {
        basepoint: vec![0.0],
        matrix: gram_schmidt_frame(&m, 0.0, &[0.0]).unwrap(),
    };
    let lc = horizontal_lift(&x, &conn, &e0).unwrap();
    let lr = riemann_horizontal_lift(&x, &m, &e0).unwrap();
    let res = lift_relation_residuals(&lc, &lr, &m).unwrap();
    let max = res.iter().copied().fold(0.0f64, f64::max);
    assert!(max <= 1e-10, "static residual {max:.3e}");
}

#[test]
fn lift_relation_residual_decays_quadratically() {
    // deterministic drift-only path keeps the truncation analysis clean
    let run = |n: usize, metric: &MetricFamily| {
        let d = metric.dim();
        let drift_exprs: Vec<String> = (0..d).map(|_| "0.5".to_string()).collect();
        let diff_exprs: Vec<Vec<String>> = (0..d)
            .map(|_| (0..d).map(|_| "0".to_string()).collect())
            .collect();
        let drift = VectorField::parse(&drift_exprs, d).unwrap();
        let diff = MatrixField::parse(&diff_exprs, d).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
        let driver = BrownianDriver::new(1, d, grid);
        let x0 = vec![0.1; d];
        let x = integrate_sde(&drift, &diff, &x0, &driver, 0, Convention::Stratonovich).unwrap();
        let conn = metric.levi_civita();
        let e0 = Frame {
            basepoint: x0.clone(),
            matrix: gram_schmidt_frame(metric, 0.0, &x0).unwrap(),
        };
        let lc = horizontal_lift(&x, &conn, &e0).unwrap();
        let lr = riemann_horizontal_lift(&x, metric, &e0).unwrap();
        lift_relation_residuals(&lc, &lr, metric)
            .unwrap()
            .into_iter()
            .fold(0.0f64, f64::max)
    };
    let m2 = MetricFamily::parse(
        &[
            vec!["exp(2*t)".into(), "0".into()],
            vec!["0".into(), "exp(2*t)".into()],
        ],
        Domain::Euclidean,
    )
    .unwrap();
    let m1 = metric_1d("exp(t + x1)");
    for m in [&m2, &m1] {
        let r1 = run(250, m);
        let r2 = run(500, m);
        let factor = r1 / r2;
        assert!(
            (2.5..=6.0).contains(&factor),
            "residuals {r1:.3e} -> {r2:.3e}, factor {factor:.2}"
        );
    }
}

#[test]
fn vertical_action_on_frame_inner_products_follows_the_case_table() {
    // dφ/ds at s=0 for φ(s) = ⟨u(I+sE_{αβ}) e_i, u(I+sE_{αβ}) e_j⟩_{g}
    // on a g-orthonormal frame u: 2 if α=β=i=j, 1 if i≠j and
    // (α,β) ∈ {(i,j),(j,i)}, else 0.
    let m = MetricFamily::parse(
        &[
            vec!["exp(x1)".into(), "0".into()],
            vec!["0".into(), "4/((1 + x1^2 + x2^2)^2)".into()],
        ],
        Domain::Euclidean,
    )
    .unwrap();
    for (t, x) in tempogeo_core::geometry::sample_points(2, &Domain::Euclidean, 10, 19) {
        let g = m.matrix(t, &x).unwrap();
        let u = gram_schmidt_frame(&m, t, &x).unwrap();
        for alpha in 0..2 {
            for beta in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        // columns of u(I + sE_{αβ}): col_i + s δ_{βi} col_α
                        let col = |idx: usize, s: Dual<f64>| -> Vec<Dual<f64>> {
                            (0..2)
                                .map(|r| {
                                    let mut v = Dual::constant(u[(r, idx)]);
                                    if beta == idx {
                                        v = v + s * Dual::constant(u[(r, alpha)]);
                                    }
                                    v
                                })
                                .collect()
                        };
                        let s = Dual::<f64>::seed(0.0);
                        let vi = col(i, s);
                        let vj = col(j, s);
                        let mut phi = Dual::constant(0.0);
                        for a in 0..2 {
                            for b in 0..2 {
                                phi = phi + Dual::constant(g[(a, b)]) * vi[a] * vj[b];
                            }
                        }
                        let expected = if alpha == beta && beta == i && i == j {
                            2.0
                        } else if i != j && ((alpha == i && beta == j) || (alpha == j && beta == i))
                        {
                            1.0
                        } else {
                            0.0
                        };
                        assert!(
                            (phi.dot - expected).abs() < 1e-9,
                            "α={alpha} β={beta} i={i} j={j}: {} vs {expected}",
                            phi.dot
                        );
                    }
                }
            }
        }
    }
}
