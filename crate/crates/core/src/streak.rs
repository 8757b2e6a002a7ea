//! `x`-independent ("streak") dynamics.
//!
//! For fields independent of `x` the pair `(u2, u3)` solves 2D Navier-Stokes
//! in `(y, z)` and `u1` is a passive scalar forced by `-u2`. The pair is
//! advanced as vorticity `omega = d_y u3 - d_z u2` with streamfunction
//! `u2 = d_z psi`, `u3 = -d_y psi`, so the divergence vanishes identically.
//! The `(0, 0)` mode of `(u2, u3)` is a conserved uniform drift.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{Fft2, Frame, GridSpec, SpectralVectorField};

/// 2D spectral fields on the `(eta, l)` lattice, layout `j * nz + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct StreakState {
    pub grid: GridSpec,
    pub u1: Vec<C64>,
    pub u2: Vec<C64>,
    pub u3: Vec<C64>,
    pub time: f64,
    pub nu: f64,
}

/// Squared `L^2` norm of a 2D spectrum, normalized like the `k = 0` plane.
pub fn norm2_2d(grid: &GridSpec, f: &[C64]) -> f64 {
    grid.d_eta() * f.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

fn lattice(grid: &GridSpec, idx: usize) -> (f64, f64) {
    (grid.eta(idx / grid.nz), grid.lz(idx % grid.nz) as f64)
}

impl StreakState {
    pub fn zeros(ny: usize, nz: usize, ly: f64, nu: f64) -> Result<Self> {
        let grid = GridSpec::new(8, ny, nz, ly)?;
        Ok(Self::zeros_on(grid, nu))
    }

    pub fn zeros_on(grid: GridSpec, nu: f64) -> Self {
        let n = grid.plane_len();
        Self { grid, u1: vec![C64::default(); n], u2: vec![C64::default(); n], u3: vec![C64::default(); n], time: 0.0, nu }
    }

    /// Builds a state from physical samples (layout `iy * nz + iz`).
    pub fn from_physical(grid: GridSpec, u: [&[f64]; 3], nu: f64) -> Self {
        let fft = Fft2::new(&grid);
        let mut s = Self {
            grid,
            u1: fft.forward(u[0]),
            u2: fft.forward(u[1]),
            u3: fft.forward(u[2]),
            time: 0.0,
            nu,
        };
        s.project();
        s
    }

    pub fn to_physical(&self) -> [Vec<f64>; 3] {
        let fft = Fft2::new(&self.grid);
        [fft.inverse(&self.u1), fft.inverse(&self.u2), fft.inverse(&self.u3)]
    }

    /// Removes the `(eta, l)`-parallel part of `(u2, u3)`.
    pub fn project(&mut self) {
        for idx in 0..self.u2.len() {
            let (eta, l) = lattice(&self.grid, idx);
            let n2 = eta * eta + l * l;
            if n2 > 0.0 {
                let d = (self.u2[idx] * eta + self.u3[idx] * l) / n2;
                self.u2[idx] -= d * eta;
                self.u3[idx] -= d * l;
            }
        }
    }

    /// `max |eta u2 + l u3|` relative to the largest coefficient.
    pub fn divergence_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for idx in 0..self.u2.len() {
            let (eta, l) = lattice(&self.grid, idx);
            worst = worst.max((self.u2[idx] * eta + self.u3[idx] * l).norm());
            scale = scale.max(self.u2[idx].norm().max(self.u3[idx].norm()) * eta.abs().max(l.abs()));
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    pub fn energy1(&self) -> f64 {
        norm2_2d(&self.grid, &self.u1)
    }

    pub fn energy23(&self) -> f64 {
        norm2_2d(&self.grid, &self.u2) + norm2_2d(&self.grid, &self.u3)
    }

    /// `||grad (u2, u3)||^2`.
    pub fn enstrophy23(&self) -> f64 {
        let g = &self.grid;
        g.d_eta()
            * (0..self.u2.len())
                .map(|idx| {
                    let (eta, l) = lattice(g, idx);
                    (eta * eta + l * l) * (self.u2[idx].norm_sqr() + self.u3[idx].norm_sqr())
                })
                .sum::<f64>()
    }
}

/// Planned stepper for one 2D lattice.
pub struct StreakSolver {
    pub grid: GridSpec,
    fft: Fft2,
    /// Steps with a larger Courant number are rejected.
    pub cfl_limit: f64,
}

struct Stage {
    omega: Vec<C64>,
    u1: Vec<C64>,
}

impl StreakSolver {
    pub fn new(grid: GridSpec) -> Self {
        Self { grid, fft: Fft2::new(&grid), cfl_limit: 1.0 }
    }

    fn keep(&self, idx: usize) -> bool {
        self.grid.dealias_keep(0, idx / self.grid.nz, idx % self.grid.nz)
    }

    fn velocity(&self, omega: &[C64], mean: (C64, C64)) -> (Vec<C64>, Vec<C64>) {
        let n = omega.len();
        let mut u2 = vec![C64::default(); n];
        let mut u3 = vec![C64::default(); n];
        let iu = C64::new(0.0, 1.0);
        for idx in 0..n {
            let (eta, l) = lattice(&self.grid, idx);
            let n2 = eta * eta + l * l;
            if n2 == 0.0 {
                u2[idx] = mean.0;
                u3[idx] = mean.1;
            } else {
                let psi = omega[idx] / n2;
                u2[idx] = iu * l * psi;
                u3[idx] = -iu * eta * psi;
            }
        }
        (u2, u3)
    }

    /// Tendencies of `omega` and `u1` (without viscosity), plus the
    /// dt-free Courant sum.
    fn tendency(&self, s: &Stage, mean: (C64, C64)) -> (Stage, f64) {
        let g = &self.grid;
        let n = s.omega.len();
        let iu = C64::new(0.0, 1.0);
        let (u2, u3) = self.velocity(&s.omega, mean);
        let deriv = |f: &[C64], dir: usize| -> Vec<f64> {
            let d: Vec<C64> = (0..n)
                .map(|idx| {
                    let (eta, l) = lattice(g, idx);
                    iu * if dir == 0 { eta } else { l } * f[idx]
                })
                .collect();
            self.fft.inverse(&d)
        };
        let v2 = self.fft.inverse(&u2);
        let v3 = self.fft.inverse(&u3);
        let (wy, wz) = (deriv(&s.omega, 0), deriv(&s.omega, 1));
        let (ay, az) = (deriv(&s.u1, 0), deriv(&s.u1, 1));
        let adv_w: Vec<f64> = (0..v2.len()).map(|p| -(v2[p] * wy[p] + v3[p] * wz[p])).collect();
        let adv_1: Vec<f64> = (0..v2.len()).map(|p| -(v2[p] * ay[p] + v3[p] * az[p])).collect();
        let (dy, dz) = (g.ly / g.ny as f64, crate::spectral::TWO_PI / g.nz as f64);
        let speed = (0..v2.len()).map(|p| v2[p].abs() / dy + v3[p].abs() / dz).fold(0.0, f64::max);
        let mut nw = self.fft.forward(&adv_w);
        let mut n1 = self.fft.forward(&adv_1);
        for idx in 0..n {
            if self.keep(idx) {
                n1[idx] -= u2[idx];
            } else {
                nw[idx] = C64::default();
                n1[idx] = C64::default();
            }
        }
        (Stage { omega: nw, u1: n1 }, speed)
    }

    /// One integrating-factor RK4 step of size `dt`.
    pub fn step(&self, state: &StreakState, dt: f64) -> Result<StreakState> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        if state.grid.ny != self.grid.ny || state.grid.nz != self.grid.nz || state.grid.ly != self.grid.ly {
            return Err(Error::DimensionMismatch { expected: self.grid.describe(), got: state.grid.describe() });
        }
        let g = &self.grid;
        let n = g.plane_len();
        let iu = C64::new(0.0, 1.0);
        let omega: Vec<C64> = (0..n)
            .map(|idx| {
                let (eta, l) = lattice(g, idx);
                iu * (eta * state.u3[idx] - l * state.u2[idx])
            })
            .collect();
        let mean = (state.u2[0], state.u3[0]);
        let u = Stage { omega, u1: state.u1.clone() };
        let h = dt;
        let d: Vec<f64> = (0..n)
            .map(|idx| {
                let (eta, l) = lattice(g, idx);
                (-state.nu * (eta * eta + l * l) * 0.5 * h).exp()
            })
            .collect();
        let lin = |a: &Stage, fa: f64, da: bool, b: &Stage, fb: f64, db: bool| -> Stage {
            let f = |x: &[C64], y: &[C64]| -> Vec<C64> {
                (0..n)
                    .map(|i| {
                        let dx = if da { d[i] } else { 1.0 };
                        let dy = if db { d[i] } else { 1.0 };
                        x[i] * (fa * dx) + y[i] * (fb * dy)
                    })
                    .collect()
            };
            Stage { omega: f(&a.omega, &b.omega), u1: f(&a.u1, &b.u1) }
        };
        let (n1, speed) = self.tendency(&u, mean);
        let courant = speed * h;
        if courant > self.cfl_limit {
            return Err(Error::Cfl { t: state.time, courant, limit: self.cfl_limit });
        }
        // U2 = d (U + h/2 n1)
        let u2s = lin(&u, 1.0, true, &n1, 0.5 * h, true);
        let (n2, _) = self.tendency(&u2s, mean);
        let u3s = lin(&u, 1.0, true, &n2, 0.5 * h, false);
        let (n3, _) = self.tendency(&u3s, mean);
        // U4 = d^2 U + h d n3
        let dd = |x: &[C64], y: &[C64]| -> Vec<C64> { (0..n).map(|i| x[i] * (d[i] * d[i]) + y[i] * (h * d[i])).collect() };
        let u4s = Stage { omega: dd(&u.omega, &n3.omega), u1: dd(&u.u1, &n3.u1) };
        let (n4, _) = self.tendency(&u4s, mean);
        let fin = |x: &[C64], a: &[C64], b: &[C64], c: &[C64], e: &[C64]| -> Vec<C64> {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let di = d[i];
                    x[i] * (di * di) + (a[i] * (di * di) + (b[i] + c[i]) * (2.0 * di) + e[i]) * (h / 6.0)
                })
                .collect()
        };
        let omega = fin(&u.omega, &n1.omega, &n2.omega, &n3.omega, &n4.omega);
        let mut u1 = fin(&u.u1, &n1.u1, &n2.u1, &n3.u1, &n4.u1);
        let (mut u2, mut u3) = self.velocity(&omega, mean);
        for idx in 0..n {
            if !self.keep(idx) {
                u1[idx] = C64::default();
                u2[idx] = C64::default();
                u3[idx] = C64::default();
            }
        }
        // the (0,0) mode of u1 evolves by its forcing alone
        let out = StreakState { grid: state.grid, u1, u2, u3, time: state.time + h, nu: state.nu };
        if ![&out.u1, &out.u2, &out.u3].iter().all(|f| f.iter().all(|z| z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite { t: out.time, what: "streak coefficients".into() });
        }
        Ok(out)
    }

    /// Steps to `t_end` with steps of at most `dt`.
    pub fn advance(&self, state: &StreakState, t_end: f64, dt: f64) -> Result<StreakState> {
        let mut s = state.clone();
        let t0 = s.time;
        let n = ((t_end - t0) / dt - 1e-9).ceil().max(0.0) as usize;
        for i in 0..n {
            let target = if i + 1 == n { t_end } else { t0 + (i + 1) as f64 * dt };
            s = self.step(&s, target - s.time)?;
        }
        Ok(s)
    }
}

/// One step with a freshly planned solver.
pub fn step_streak(state: &StreakState, dt: f64) -> Result<StreakState> {
    StreakSolver::new(state.grid).step(state, dt)
}

/// `exp(nu t Delta)(u1_in - t u2_in)` as a 2D spectrum.
pub fn lift_up_reference(u_in: &StreakState, t: f64, nu: f64) -> Vec<C64> {
    (0..u_in.u1.len())
        .map(|idx| {
            let (eta, l) = lattice(&u_in.grid, idx);
            (u_in.u1[idx] - u_in.u2[idx] * t) * (-nu * (eta * eta + l * l) * t).exp()
        })
        .collect()
}

/// The `x`-average (`k = 0` plane) of a 3D field.
pub fn streak_from_3d(field: &SpectralVectorField, nu: f64) -> StreakState {
    let g = field.grid;
    let n = g.plane_len();
    let grid = GridSpec { nx: 8, ..g };
    StreakState {
        grid,
        u1: field.comps[0][..n].to_vec(),
        u2: field.comps[1][..n].to_vec(),
        u3: field.comps[2][..n].to_vec(),
        time: field.time,
        nu,
    }
}

/// Embeds a streak state as an `x`-independent 3D field on `grid`.
pub fn embed_in_3d(s: &StreakState, grid: GridSpec) -> Result<SpectralVectorField> {
    if grid.ny != s.grid.ny || grid.nz != s.grid.nz || grid.ly != s.grid.ly {
        return Err(Error::DimensionMismatch { expected: s.grid.describe(), got: grid.describe() });
    }
    let mut f = SpectralVectorField::zeros(grid, Frame::Shear { origin: s.time }, s.time);
    let n = grid.plane_len();
    f.comps[0][..n].copy_from_slice(&s.u1);
    f.comps[1][..n].copy_from_slice(&s.u2);
    f.comps[2][..n].copy_from_slice(&s.u3);
    Ok(f)
}
