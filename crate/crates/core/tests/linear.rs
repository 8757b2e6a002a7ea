use couette_core::linear::*;
use couette_core::spectral::{leray_project, shear_wavevector};
use num_complex::Complex64 as C64;

fn projected_mode(k: i64, eta: f64, l: i64, u: [C64; 3], nu: f64) -> LinearMode {
    let uhat = leray_project(u, &shear_wavevector(k, eta, l, 0.0));
    LinearMode { k, eta, l, uhat, nu, t: 0.0 }
}

fn generic() -> [C64; 3] {
    [C64::new(0.3, -0.2), C64::new(1.0, 0.5), C64::new(-0.7, 0.1)]
}

#[test]
fn euler_q2_is_conserved() {
    for &(k, eta, l) in &[(1, 0.0, 0), (1, 10.0, 1), (2, -3.0, 2), (3, 25.0, -1)] {
        let m = projected_mode(k, eta, l, generic(), 0.0);
        let q0 = m.q2();
        let dt = default_dt(eta);
        let mut worst = 0.0f64;
        evolve_with(&m, 50.0, dt, |s| {
            worst = worst.max((s.q2() - q0).norm() / q0.norm());
            true
        })
        .unwrap();
        assert!(worst < 1e-8, "({k},{eta},{l}): {worst}");
    }
}

#[test]
fn viscous_q2_matches_closed_form() {
    let nu = 0.01;
    let m = projected_mode(1, 0.0, 0, [C64::default(), C64::new(1.0, 0.0), C64::default()], nu);
    let q0 = m.q2();
    let mut worst = 0.0f64;
    evolve_with(&m, 10.0, 0.01, |s| {
        let exact = q0 * (-nu * (s.t + s.t.powi(3) / 3.0)).exp();
        worst = worst.max((s.q2() - exact).norm());
        true
    })
    .unwrap();
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn fourth_order_refinement() {
    let m = projected_mode(1, 4.0, 1, generic(), 0.02);
    let reference = evolve_linear_mode(&m, 6.0, 0.4 / 16.0).unwrap();
    let err = |dt: f64| {
        let out = evolve_linear_mode(&m, 6.0, dt).unwrap();
        (0..3).map(|i| (out.uhat[i] - reference.uhat[i]).norm()).fold(0.0, f64::max)
    };
    let ratio = err(0.4) / err(0.2);
    assert!(ratio > 12.0 && ratio < 20.0, "{ratio}");
}

#[test]
fn divergence_is_maintained() {
    let m = projected_mode(2, 7.0, -3, generic(), 1e-3);
    evolve_with(&m, 30.0, 0.01, |s| {
        assert!(s.divergence_residual() <= 1e-9 * s.amplitude());
        true
    })
    .unwrap();
}

#[test]
fn inviscid_damping_and_convergence() {
    let m = projected_mode(1, 2.0, 1, generic(), 0.0);
    let mut samples = Vec::new();
    evolve_with(&m, 400.0, 0.01, |s| {
        let t = s.t;
        if [25.0, 50.0, 100.0, 200.0, 400.0].iter().any(|&x| (t - x).abs() < 1e-9) {
            samples.push(*s);
        }
        true
    })
    .unwrap();
    assert_eq!(samples.len(), 5);
    for s in &samples {
        assert!(s.uhat[1].norm() * (1.0 + s.t * s.t) < 10.0 * m.q2().norm());
    }
    for c in [0, 2] {
        let d: Vec<f64> = samples.windows(2).map(|w| (w[1].uhat[c] - w[0].uhat[c]).norm()).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "component {c}: {d:?}");
    }
}

#[test]
fn zero_mode_lift_up_matches_closed_form() {
    let u = [C64::new(0.4, 0.0), C64::new(0.3, -0.1), C64::new(0.2, 0.5)];
    let m = projected_mode(0, 1.5, 2, u, 0.03);
    let out = evolve_linear_mode(&m, 7.0, 0.01).unwrap();
    let exact = zero_mode_closed_form(1.5, 2, m.uhat, 7.0, 0.03);
    for i in 0..3 {
        assert!((out.uhat[i] - exact[i]).norm() < 1e-12);
    }
}

#[test]
fn trajectory_samples_on_output_grid() {
    let m = projected_mode(1, 0.0, 0, generic(), 0.0);
    let traj = linear_trajectory(&m, 2.0, 0.01, 0.5).unwrap();
    let ts: Vec<f64> = traj.iter().map(|s| s.t).collect();
    assert_eq!(ts.len(), 5);
    assert!((ts[4] - 2.0).abs() < 1e-12 && (ts[2] - 1.0).abs() < 1e-9);
}
