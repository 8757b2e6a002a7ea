//! Auxiliary fields of the nonlinear coordinate change
//! `X = x - t y - t psi`, `Y = y + psi`, `Z = z`.
//!
//! `C(t, Y, Z) = psi(t, y, z)` and `g = (U_0^1 - C) / t` obey
//!
//! ```text
//! d_t C + U~_0 . grad C = g - U_0^2 + nu Delta~_t C
//! d_t g + U~_0 . grad g = -2g/t + F + nu Delta~_t g,   U~_0 = (g, U_0^3)
//! ```
//!
//! with `F = -(1/t)(U_{!=} . grad^t U^1_{!=})_0` supplied by the caller.
//! All fields are `x`-independent and live on the `(eta, l)` lattice.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::spectral::{Fft2, GridSpec};

/// Largest admissible `sup |d_Y C|`.
pub const JACOBIAN_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct CoordState {
    pub grid: GridSpec,
    pub c: Vec<C64>,
    pub g: Vec<C64>,
    pub time: f64,
    pub nu: f64,
}

/// Physical-space Jacobian factors.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianFactors {
    pub psi_y: Vec<f64>,
    pub psi_z: Vec<f64>,
    /// `(1 + psi_y)^2 + psi_z^2 - 1`.
    pub g_metric: Vec<f64>,
    /// `d_Y C` on the grid.
    pub dyc: Vec<f64>,
    pub sup_dyc: f64,
}

/// Time-dependent inputs of the `(C, g)` system at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CgInput {
    pub u0_2: Vec<C64>,
    pub u0_3: Vec<C64>,
    pub force: Vec<C64>,
}

impl CgInput {
    pub fn zeros(n: usize) -> Self {
        Self { u0_2: vec![C64::default(); n], u0_3: vec![C64::default(); n], force: vec![C64::default(); n] }
    }
}

fn lattice(grid: &GridSpec, idx: usize) -> (f64, f64) {
    (grid.eta(idx / grid.nz), grid.lz(idx % grid.nz) as f64)
}

fn deriv(grid: &GridSpec, f: &[C64], dy: usize, dz: usize) -> Vec<C64> {
    let iu = C64::new(0.0, 1.0);
    f.iter()
        .enumerate()
        .map(|(idx, &v)| {
            let (eta, l) = lattice(grid, idx);
            v * (iu * eta).powu(dy as u32) * (iu * l).powu(dz as u32)
        })
        .collect()
}

fn dealias(grid: &GridSpec, f: &mut [C64]) {
    for (idx, z) in f.iter_mut().enumerate() {
        if !grid.dealias_keep(0, idx / grid.nz, idx % grid.nz) {
            *z = C64::default();
        }
    }
}

/// `L^2` norm of a 2D spectrum (normalized like the `k = 0` plane).
pub fn norm_2d(grid: &GridSpec, f: &[C64]) -> f64 {
    (grid.d_eta() * f.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
}

/// Pointwise Jacobian factors from `C`; rejects `sup |d_Y C| >= 1/2`.
pub fn jacobians_from_c(grid: &GridSpec, c: &[C64], t: f64) -> Result<JacobianFactors> {
    let fft = Fft2::new(grid);
    jacobians_with(&fft, grid, c, t)
}

fn jacobians_with(fft: &Fft2, grid: &GridSpec, c: &[C64], t: f64) -> Result<JacobianFactors> {
    let dyc = fft.inverse(&deriv(grid, c, 1, 0));
    let dzc = fft.inverse(&deriv(grid, c, 0, 1));
    let sup_dyc = dyc.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(sup_dyc < JACOBIAN_LIMIT) {
        return Err(Error::Jacobian { t, sup: sup_dyc });
    }
    let psi_y: Vec<f64> = dyc.iter().map(|d| d / (1.0 - d)).collect();
    let psi_z: Vec<f64> = dyc.iter().zip(&dzc).map(|(d, z)| z / (1.0 - d)).collect();
    let g_metric = psi_y.iter().zip(&psi_z).map(|(a, b)| (1.0 + a).powi(2) + b * b - 1.0).collect();
    Ok(JacobianFactors { psi_y, psi_z, g_metric, dyc, sup_dyc })
}

/// Planned `(C, g)` integrator.
pub struct CoordSolver {
    pub grid: GridSpec,
    fft: Fft2,
}

struct Pair {
    c: Vec<C64>,
    g: Vec<C64>,
}

impl CoordSolver {
    pub fn new(grid: GridSpec) -> Self {
        Self { grid, fft: Fft2::new(&grid) }
    }

    pub fn jacobians(&self, c: &[C64], t: f64) -> Result<JacobianFactors> {
        jacobians_with(&self.fft, &self.grid, c, t)
    }

    /// `Delta~_t f - Delta f = G d_YY f + 2 psi_z d_YZ f`.
    fn metric_remainder(&self, jac: &JacobianFactors, f: &[C64]) -> Vec<f64> {
        let fyy = self.fft.inverse(&deriv(&self.grid, f, 2, 0));
        let fyz = self.fft.inverse(&deriv(&self.grid, f, 1, 1));
        (0..fyy.len()).map(|p| jac.g_metric[p] * fyy[p] + 2.0 * jac.psi_z[p] * fyz[p]).collect()
    }

    /// `Delta~_t f` in physical space.
    pub fn tilde_laplacian(&self, jac: &JacobianFactors, f: &[C64]) -> Vec<f64> {
        let lap: Vec<C64> = f
            .iter()
            .enumerate()
            .map(|(idx, &v)| {
                let (eta, l) = lattice(&self.grid, idx);
                -v * (eta * eta + l * l)
            })
            .collect();
        let lap = self.fft.inverse(&lap);
        let rem = self.metric_remainder(jac, f);
        lap.iter().zip(&rem).map(|(a, b)| a + b).collect()
    }

    /// Explicit tendency: everything except `nu Delta`.
    fn tendency(&self, s: &Pair, inp: &CgInput, t: f64, nu: f64) -> Result<Pair> {
        let grid = &self.grid;
        let jac = self.jacobians(&s.c, t)?;
        let gp = self.fft.inverse(&s.g);
        let u3 = self.fft.inverse(&inp.u0_3);
        let adv = |f: &[C64]| -> Vec<f64> {
            let fy = self.fft.inverse(&deriv(grid, f, 1, 0));
            let fz = self.fft.inverse(&deriv(grid, f, 0, 1));
            (0..fy.len()).map(|p| -(gp[p] * fy[p] + u3[p] * fz[p])).collect()
        };
        let mut nc_phys = adv(&s.c);
        let mut ng_phys = adv(&s.g);
        if nu != 0.0 {
            let rc = self.metric_remainder(&jac, &s.c);
            let rg = self.metric_remainder(&jac, &s.g);
            for p in 0..nc_phys.len() {
                nc_phys[p] += nu * rc[p];
                ng_phys[p] += nu * rg[p];
            }
        }
        let mut nc = self.fft.forward(&nc_phys);
        let mut ng = self.fft.forward(&ng_phys);
        for idx in 0..nc.len() {
            nc[idx] += s.g[idx] - inp.u0_2[idx];
            ng[idx] += -2.0 / t * s.g[idx] + inp.force[idx];
        }
        dealias(grid, &mut nc);
        dealias(grid, &mut ng);
        Ok(Pair { c: nc, g: ng })
    }

    /// One integrating-factor RK4 step; `inputs` are sampled at
    /// `t`, `t + dt/2` and `t + dt`.
    pub fn step(&self, state: &CoordState, inputs: [&CgInput; 3], dt: f64) -> Result<CoordState> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        if state.time < 1.0 - 1e-12 {
            return Err(Error::InvalidParameter(format!("coordinate system starts at t = 1, got {}", state.time)));
        }
        let n = self.grid.plane_len();
        for inp in inputs {
            if inp.u0_2.len() != n || inp.u0_3.len() != n || inp.force.len() != n {
                return Err(Error::DimensionMismatch { expected: format!("{n} modes"), got: format!("{}", inp.u0_2.len()) });
            }
        }
        let (t, h, nu) = (state.time, dt, state.nu);
        let d: Vec<f64> = (0..n)
            .map(|idx| {
                let (eta, l) = lattice(&self.grid, idx);
                (-nu * (eta * eta + l * l) * 0.5 * h).exp()
            })
            .collect();
        let u = Pair { c: state.c.clone(), g: state.g.clone() };
        let comb = |x: &Pair, fx: &dyn Fn(usize) -> f64, y: &Pair, fy: &dyn Fn(usize) -> f64| Pair {
            c: (0..n).map(|i| x.c[i] * fx(i) + y.c[i] * fy(i)).collect(),
            g: (0..n).map(|i| x.g[i] * fx(i) + y.g[i] * fy(i)).collect(),
        };
        let n1 = self.tendency(&u, inputs[0], t, nu)?;
        let s2 = comb(&u, &|i| d[i], &n1, &|i| 0.5 * h * d[i]);
        let n2 = self.tendency(&s2, inputs[1], t + 0.5 * h, nu)?;
        let s3 = comb(&u, &|i| d[i], &n2, &|_| 0.5 * h);
        let n3 = self.tendency(&s3, inputs[1], t + 0.5 * h, nu)?;
        let s4 = comb(&u, &|i| d[i] * d[i], &n3, &|i| h * d[i]);
        let n4 = self.tendency(&s4, inputs[2], t + h, nu)?;
        let fin = |x: &[C64], a: &[C64], b: &[C64], c: &[C64], e: &[C64]| -> Vec<C64> {
            (0..n)
                .map(|i| {
                    let di = d[i];
                    x[i] * (di * di) + (a[i] * (di * di) + (b[i] + c[i]) * (2.0 * di) + e[i]) * (h / 6.0)
                })
                .collect()
        };
        let out = CoordState {
            grid: state.grid,
            c: fin(&u.c, &n1.c, &n2.c, &n3.c, &n4.c),
            g: fin(&u.g, &n1.g, &n2.g, &n3.g, &n4.g),
            time: t + h,
            nu,
        };
        self.jacobians(&out.c, out.time)?;
        Ok(out)
    }

    /// `(1 + psi_y) U_0^2 + psi_z U_0^3 + psi_t - nu Delta_t C` on the grid,
    /// which equals `g` identically when `C` obeys its equation.
    pub fn relative_velocity_y(&self, state: &CoordState, inp: &CgInput) -> Result<Vec<f64>> {
        let jac = self.jacobians(&state.c, state.time)?;
        let mut dtc = self.tendency(&Pair { c: state.c.clone(), g: state.g.clone() }, inp, state.time, state.nu)?.c;
        for (idx, z) in dtc.iter_mut().enumerate() {
            let (eta, l) = lattice(&self.grid, idx);
            *z -= state.c[idx] * (state.nu * (eta * eta + l * l));
        }
        let dtc = self.fft.inverse(&dtc);
        let tl = self.tilde_laplacian(&jac, &state.c);
        let u2 = self.fft.inverse(&inp.u0_2);
        let u3 = self.fft.inverse(&inp.u0_3);
        Ok((0..u2.len())
            .map(|p| {
                let a = 1.0 - jac.dyc[p];
                // psi_t = d_t C / (1 - d_Y C), Delta_t C = Delta~_t C / (1 - d_Y C)
                (1.0 + jac.psi_y[p]) * u2[p] + jac.psi_z[p] * u3[p] + dtc[p] / a - state.nu * tl[p] / a
            })
            .collect())
    }
}

impl CoordState {
    /// State at time `t` from `U_0^1(t)` and `C(t)`, with `g = (U_0^1 - C)/t`.
    pub fn from_u01(grid: GridSpec, u0_1: &[C64], c: Vec<C64>, t: f64, nu: f64) -> Self {
        let g = u0_1.iter().zip(&c).map(|(u, c)| (u - c) / t).collect();
        Self { grid, c, g, time: t, nu }
    }
}

/// One step with frozen inputs.
pub fn step_cg(state: &CoordState, u0_2: &[C64], u0_3: &[C64], force: &[C64], dt: f64) -> Result<CoordState> {
    let inp = CgInput { u0_2: u0_2.to_vec(), u0_3: u0_3.to_vec(), force: force.to_vec() };
    CoordSolver::new(state.grid).step(state, [&inp, &inp, &inp], dt)
}

/// One sample of an `x`-averaged velocity history: `(t, [u0^1, u0^2, u0^3])`.
pub type U0Sample = (f64, [Vec<C64>; 3]);

/// Integrates `d(t psi)/dt = u0^1 - t(1 + d_y psi) u0^2 - t d_z psi u0^3 + nu t Delta psi`
/// from `t = 1` with steps of twice the sampling interval.
///
/// `t psi(1)` is `int_0^1 u0^1` when the history starts at `t = 0`, and
/// `u0^1(1)` otherwise. Returns `(t, psi)` at every other sample from `t = 1`.
pub fn psi_from_history(grid: &GridSpec, series: &[U0Sample], nu: f64) -> Result<Vec<(f64, Vec<C64>)>> {
    if series.len() < 3 {
        return Err(Error::Cadence("history needs at least three samples".into()));
    }
    let dt = series[1].0 - series[0].0;
    if !(dt > 0.0) {
        return Err(Error::Cadence(format!("non-increasing sample times ({dt})")));
    }
    for (i, s) in series.iter().enumerate() {
        let expect = series[0].0 + i as f64 * dt;
        if (s.0 - expect).abs() > 1e-9 * expect.abs().max(1.0) {
            return Err(Error::Cadence(format!("sample {i} at t = {} breaks uniform spacing {dt}", s.0)));
        }
        if s.1.iter().any(|c| c.len() != grid.plane_len()) {
            return Err(Error::DimensionMismatch { expected: grid.describe(), got: format!("{} modes", s.1[0].len()) });
        }
    }
    let one = ((1.0 - series[0].0) / dt).round();
    if one < 0.0 || ((series[0].0 + one * dt) - 1.0).abs() > 1e-9 {
        return Err(Error::Cadence("history must contain t = 1".into()));
    }
    let i1 = one as usize;
    if i1 >= series.len() {
        return Err(Error::Cadence("history ends before t = 1".into()));
    }
    let n = grid.plane_len();
    let mut phi: Vec<C64> = if series[0].0.abs() < 1e-12 && i1 >= 1 {
        // composite trapezoid with Simpson where the sample count allows
        let w = quadrature_weights(i1, dt);
        (0..n).map(|idx| (0..=i1).map(|s| series[s].1[0][idx] * w[s]).sum()).collect()
    } else {
        series[i1].1[0].clone()
    };
    let fft = Fft2::new(grid);
    let iu = C64::new(0.0, 1.0);
    let lap: Vec<f64> = (0..n)
        .map(|idx| {
            let (eta, l) = lattice(grid, idx);
            -(eta * eta + l * l)
        })
        .collect();
    let rhs = |phi: &[C64], s: &U0Sample| -> Vec<C64> {
        let t = s.0;
        let dy = fft.inverse(&phi.iter().enumerate().map(|(i, v)| iu * lattice(grid, i).0 * v).collect::<Vec<_>>());
        let dz = fft.inverse(&phi.iter().enumerate().map(|(i, v)| iu * lattice(grid, i).1 * v).collect::<Vec<_>>());
        let u2 = fft.inverse(&s.1[1]);
        let u3 = fft.inverse(&s.1[2]);
        let prod: Vec<f64> = (0..u2.len()).map(|p| -(dy[p] * u2[p] + dz[p] * u3[p])).collect();
        let mut out = fft.forward(&prod);
        dealias(grid, &mut out);
        for idx in 0..n {
            out[idx] += s.1[0][idx] - s.1[1][idx] * t + phi[idx] * (nu * lap[idx]);
        }
        out
    };
    let mut out = vec![(1.0, phi.clone())];
    let h = 2.0 * dt;
    let mut i = i1;
    while i + 2 < series.len() {
        let (a, b, c) = (&series[i], &series[i + 1], &series[i + 2]);
        let k1 = rhs(&phi, a);
        let y2: Vec<C64> = (0..n).map(|j| phi[j] + k1[j] * (0.5 * h)).collect();
        let k2 = rhs(&y2, b);
        let y3: Vec<C64> = (0..n).map(|j| phi[j] + k2[j] * (0.5 * h)).collect();
        let k3 = rhs(&y3, b);
        let y4: Vec<C64> = (0..n).map(|j| phi[j] + k3[j] * h).collect();
        let k4 = rhs(&y4, c);
        for j in 0..n {
            phi[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
        }
        let t = c.0;
        out.push((t, phi.iter().map(|v| v / t).collect()));
        i += 2;
    }
    Ok(out)
}

/// Weights for `int_0^{m dt}` on `m + 1` uniform samples: Simpson when `m`
/// is even, Simpson plus a closing 3/8 panel when odd (trapezoid for `m = 1`).
pub fn quadrature_weights(m: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![0.0; m + 1];
    if m == 1 {
        w[0] = 0.5 * dt;
        w[1] = 0.5 * dt;
        return w;
    }
    let simpson_end = if m % 2 == 0 { m } else { m - 3 };
    let mut i = 0;
    while i < simpson_end {
        w[i] += dt / 3.0;
        w[i + 1] += 4.0 * dt / 3.0;
        w[i + 2] += dt / 3.0;
        i += 2;
    }
    if m % 2 == 1 {
        for (o, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
            w[simpson_end + o] += 3.0 * dt / 8.0 * c;
        }
    }
    w
}
