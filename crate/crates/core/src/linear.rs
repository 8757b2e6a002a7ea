//! Single-mode linearized Euler / Navier-Stokes in the shear frame.
//!
//! For a mode `(k, eta, l)` the shear-frame velocity obeys
//!
//! ```text
//! dU/dt = (-U2, 0, 0) + 2k K U2 / |K|^2 - nu |K|^2 U,   K = (k, eta - kt, l)
//! ```
//!
//! where the middle term is `-i K p^L` with `|K|^2 p^L = 2ik U2`. Viscosity is
//! removed exactly by the integrating factor `exp(-nu int |K|^2)`, whose
//! integral is a cubic in time.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{leray_project, shear_wavevector, ShearWavevector};

/// `int_a^b (k^2 + (eta - k tau)^2 + l^2) d tau`.
#[inline]
pub fn viscous_integral(k: f64, eta: f64, l: f64, a: f64, b: f64) -> f64 {
    let h = b - a;
    let c = eta - k * a;
    (k * k + l * l) * h + c * c * h - c * k * h * h + k * k * h * h * h / 3.0
}

/// Exact `Q2(t) = exp(-nu int_0^t |K|^2) Q2(0)`.
pub fn q2_closed_form(k: i64, eta: f64, l: i64, q2_init: C64, t: f64, nu: f64) -> C64 {
    if nu == 0.0 {
        return q2_init;
    }
    q2_init * (-nu * viscous_integral(k as f64, eta, l as f64, 0.0, t)).exp()
}

/// `U2 = Delta_L^{-1} Q2 = -Q2 / |K|^2`.
pub fn u2_from_q2(k: i64, eta: f64, l: i64, t: f64, q2: C64) -> Result<C64> {
    let kv = shear_wavevector(k, eta, l, t);
    if kv.is_zero() {
        return Err(Error::ZeroWavevector { k, eta, l });
    }
    Ok(-q2 / kv.norm2())
}

/// One Fourier mode of the linearized problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearMode {
    pub k: i64,
    pub eta: f64,
    pub l: i64,
    pub uhat: [C64; 3],
    pub nu: f64,
    pub t: f64,
}

impl LinearMode {
    pub fn wavevector(&self) -> ShearWavevector {
        shear_wavevector(self.k, self.eta, self.l, self.t)
    }

    /// `|K . U|`.
    pub fn divergence_residual(&self) -> f64 {
        dot(&self.wavevector(), &self.uhat).norm()
    }

    /// `Q2 = -|K|^2 U2`.
    pub fn q2(&self) -> C64 {
        -self.uhat[1] * self.wavevector().norm2()
    }

    pub fn amplitude(&self) -> f64 {
        self.uhat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

#[inline]
fn dot(kv: &ShearWavevector, u: &[C64; 3]) -> C64 {
    let a = kv.as_array();
    u[0] * a[0] + u[1] * a[1] + u[2] * a[2]
}

/// Linear (non-viscous) tendency at shear wavevector `kv`.
#[inline]
pub fn linear_tendency(kv: &ShearWavevector, u: &[C64; 3]) -> [C64; 3] {
    let n2 = kv.norm2();
    let mut out = [-u[1], C64::default(), C64::default()];
    if n2 > 0.0 {
        let c = u[1] * (2.0 * kv.k as f64 / n2);
        let a = kv.as_array();
        for i in 0..3 {
            out[i] += c * a[i];
        }
    }
    out
}

/// Default step `min(0.01, 0.1 / (1 + |eta|))`.
pub fn default_dt(eta: f64) -> f64 {
    0.01f64.min(0.1 / (1.0 + eta.abs()))
}

/// Integrating-factor RK4 step of size `h` from `t`.
///
/// Factors are written so that each one is `<= 1`:
/// `d1 = e^{-nu int_t^{t+h/2}}`, `dh = e^{-nu int_t^{t+h}}`,
/// `e2 = e^{-nu int_{t+h/2}^{t+h}}`.
pub fn if_rk4_step<F>(u: &[C64; 3], t: f64, h: f64, decay: (f64, f64, f64), rhs: F) -> [C64; 3]
where
    F: Fn(f64, &[C64; 3]) -> [C64; 3],
{
    let (d1, dh, e2) = decay;
    let comb = |a: &[C64; 3], fa: f64, b: &[C64; 3], fb: f64| -> [C64; 3] {
        std::array::from_fn(|i| a[i] * fa + b[i] * fb)
    };
    let n1 = rhs(t, u);
    let u2: [C64; 3] = std::array::from_fn(|i| (u[i] + n1[i] * (0.5 * h)) * d1);
    let n2 = rhs(t + 0.5 * h, &u2);
    let u3 = comb(u, d1, &n2, 0.5 * h);
    let n3 = rhs(t + 0.5 * h, &u3);
    let u4 = comb(u, dh, &n3, h * e2);
    let n4 = rhs(t + h, &u4);
    std::array::from_fn(|i| {
        u[i] * dh + (n1[i] * dh + (n2[i] + n3[i]) * (2.0 * e2) + n4[i]) * (h / 6.0)
    })
}

/// Integrating factors `(d1, dh, e2)` for a step `[t, t+h]`.
#[inline]
pub fn step_factors(k: f64, eta: f64, l: f64, nu: f64, t: f64, h: f64) -> (f64, f64, f64) {
    if nu == 0.0 {
        return (1.0, 1.0, 1.0);
    }
    let a = viscous_integral(k, eta, l, t, t + 0.5 * h);
    let b = viscous_integral(k, eta, l, t + 0.5 * h, t + h);
    ((-nu * a).exp(), (-nu * (a + b)).exp(), (-nu * b).exp())
}

/// Advances `mode` to `t1` with steps of at most `dt`.
pub fn evolve_linear_mode(mode: &LinearMode, t1: f64, dt: f64) -> Result<LinearMode> {
    evolve_with(mode, t1, dt, |_| true)
}

/// As [`evolve_linear_mode`], calling `visit` after every step.
pub fn evolve_with<V: FnMut(&LinearMode) -> bool>(mode: &LinearMode, t1: f64, dt: f64, mut visit: V) -> Result<LinearMode> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    if !(t1 >= mode.t && mode.t >= 0.0) {
        return Err(Error::InvalidParameter(format!("need t1 >= t0 >= 0 (got {}, {t1})", mode.t)));
    }
    let kv = mode.wavevector();
    let tol = 1e-9 * mode.amplitude() * kv.norm2().sqrt().max(1.0);
    let res = mode.divergence_residual();
    if res > tol {
        return Err(Error::NotDivergenceFree { residual: res });
    }
    let (k, eta, l) = (mode.k as f64, mode.eta, mode.l as f64);
    let n = ((t1 - mode.t) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut m = *mode;
    let t0 = mode.t;
    for i in 0..n {
        let t = m.t;
        let t_next = if i + 1 == n { t1 } else { t0 + (i + 1) as f64 * dt };
        let h = t_next - t;
        let fac = step_factors(k, eta, l, mode.nu, t, h);
        let u = if_rk4_step(&m.uhat, t, h, fac, |s, u| {
            linear_tendency(&shear_wavevector(mode.k, eta, mode.l, s), u)
        });
        m.uhat = leray_project(u, &shear_wavevector(mode.k, eta, mode.l, t_next));
        m.t = t_next;
        if !visit(&m) {
            break;
        }
    }
    Ok(m)
}

/// Lift-up closed form of a `k = 0` mode:
/// `(e^{-nu|eta,l|^2 t}(u1 - t u2), e^{..} u2, e^{..} u3)`.
pub fn zero_mode_closed_form(eta: f64, l: i64, u_in: [C64; 3], t: f64, nu: f64) -> [C64; 3] {
    let decay = (-nu * (eta * eta + (l * l) as f64) * t).exp();
    [(u_in[0] - u_in[1] * t) * decay, u_in[1] * decay, u_in[2] * decay]
}

/// Reference envelopes `<t>^{-2} e^{-c nu t^3}` (component 2) and
/// `e^{-c nu t^3}` (components 1, 3).
pub fn damping_envelope(component: u8, t: f64, nu: f64, c: f64) -> Result<f64> {
    if !(c > 0.0 && c < 1.0 / 3.0 + 1e-15) {
        return Err(Error::InvalidParameter(format!("c = {c} must lie in (0, 1/3)")));
    }
    if t < 1.0 {
        return Err(Error::InvalidParameter(format!("t = {t} must be >= 1")));
    }
    let e = (-c * nu * t.powi(3)).exp();
    match component {
        2 => Ok(e / (1.0 + t * t)),
        1 | 3 => Ok(e),
        _ => Err(Error::InvalidParameter(format!("component {component} not in 1..=3"))),
    }
}

/// One row of the per-mode time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSample {
    pub t: f64,
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub q2: f64,
    pub div_residual: f64,
}

impl LinearSample {
    pub fn of(m: &LinearMode) -> Self {
        Self {
            t: m.t,
            u1: m.uhat[0].norm(),
            u2: m.uhat[1].norm(),
            u3: m.uhat[2].norm(),
            q2: m.q2().norm(),
            div_residual: m.divergence_residual(),
        }
    }
}

/// Samples every `dt_out` (rounded to whole steps) including both ends.
pub fn linear_trajectory(mode: &LinearMode, t1: f64, dt: f64, dt_out: f64) -> Result<Vec<LinearSample>> {
    let every = (dt_out / dt).round().max(1.0) as usize;
    let mut out = vec![LinearSample::of(mode)];
    let mut count = 0usize;
    let last = evolve_with(mode, t1, dt, |m| {
        count += 1;
        if count % every == 0 {
            out.push(LinearSample::of(m));
        }
        true
    })?;
    if out.last().map(|s| s.t) != Some(last.t) {
        out.push(LinearSample::of(&last));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn q2_examples() {
        let v = q2_closed_form(1, 0.0, 0, c(1.0), 10.0, 0.01);
        assert!((v.re - (-0.01f64 * (10.0 + 1000.0 / 3.0)).exp()).abs() < 1e-15);
        assert!((v.re - 0.03226).abs() < 1e-4);
        assert_eq!(q2_closed_form(3, 2.0, 1, C64::new(0.3, -2.0), 7.0, 0.0), C64::new(0.3, -2.0));
        let v = q2_closed_form(0, 2.0, 0, c(1.0), 1.0, 0.1);
        assert!((v.re - (-0.4f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn u2_examples() {
        for t in [0.0, 1.0, 5.0] {
            let u = u2_from_q2(1, 0.0, 0, t, c(2.0)).unwrap();
            assert!((u.norm() - 2.0 / (1.0 + t * t)).abs() < 1e-15);
        }
        assert!((u2_from_q2(1, 10.0, 0, 10.0, c(3.0)).unwrap().norm() - 3.0).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for l in 0..20 {
            let u = u2_from_q2(1, 4.0, l, 2.0, c(1.0)).unwrap().norm();
            assert!(u < prev);
            prev = u;
        }
        assert!(u2_from_q2(0, 0.0, 0, 3.0, c(1.0)).is_err());
    }

    #[test]
    fn lift_up_example() {
        let m = LinearMode { k: 0, eta: 1.0, l: -1, uhat: [c(1.0); 3], nu: 0.0, t: 0.0 };
        let out = evolve_linear_mode(&m, 3.0, 0.01).unwrap();
        for (z, e) in out.uhat.iter().zip([-2.0, 1.0, 1.0]) {
            assert!((z - c(e)).norm() < 1e-12);
        }
        let bad = LinearMode { l: 1, ..m };
        assert!(matches!(evolve_linear_mode(&bad, 3.0, 0.01), Err(Error::NotDivergenceFree { .. })));
    }

    #[test]
    fn viscous_zero_mode_is_heat_decay() {
        let u_in = [c(0.7), C64::new(0.2, 0.1), C64::new(-0.4, -0.2)];
        let m = LinearMode { k: 0, eta: 2.0, l: 1, uhat: u_in, nu: 0.05, t: 0.0 };
        let out = evolve_linear_mode(&m, 4.0, 0.01).unwrap();
        let exact = zero_mode_closed_form(2.0, 1, u_in, 4.0, 0.05);
        for i in 0..3 {
            assert!((out.uhat[i] - exact[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn envelope_examples() {
        assert!((damping_envelope(2, 1.0, 0.0, 0.1).unwrap() - 0.5).abs() < 1e-15);
        let v = damping_envelope(3, 10.0, 1e-3, 1.0 / 3.0).unwrap();
        assert!((v - (-1.0f64 / 3.0).exp()).abs() < 1e-15);
        assert!(damping_envelope(1, 2.0, 1e-3, 0.5).is_err());
        assert!(damping_envelope(1, 2.0, 1e-3, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_step() {
        let m = LinearMode { k: 1, eta: 0.0, l: 0, uhat: [C64::default(), c(1.0), C64::default()], nu: 0.0, t: 0.0 };
        assert!(evolve_linear_mode(&m, 1.0, 0.0).is_err());
        assert!(evolve_linear_mode(&m, 1.0, -0.1).is_err());
    }
}
