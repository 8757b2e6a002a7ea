//! Nonlinear perturbation dynamics of plane Couette flow in the shear frame.
//!
//! The disturbance obeys, in shearing coordinates `X = x - t y`,
//!
//! ```text
//! d_t U + U . grad^L U = (-U2, 0, 0) - grad^L (p^L + p^NL) + nu Delta_L U
//! Delta_L p^L = -2 d_X U2,   Delta_L p^NL = -d_i^L U^j d_j^L U^i
//! ```
//!
//! Per mode the linear part is `(-U2, 0, 0) + 2k K U2 / |K|^2`. The
//! quadratic part is evaluated pseudospectrally in rotational form: `U x omega`
//! differs from `-U . grad U` by a gradient, which the Leray projection onto
//! `K(t)` removes together with `p^NL`. Viscosity enters through the exact
//! integrating factor `exp(-nu int |K|^2)`.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::{linear_tendency, viscous_integral};
use crate::spectral::{
    dealias_scalar, leray_project, wavevector_at, Fft3, Frame, GridSpec, SpectralVectorField, TWO_PI,
};

type Vec3 = [Vec<C64>; 3];

/// Solution state: shear-frame spectral velocity plus physical parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub uhat: SpectralVectorField,
    pub nu: f64,
    /// Nominal initial amplitude; metadata only.
    pub eps_label: f64,
}

impl SimState {
    pub fn new(uhat: SpectralVectorField, nu: f64, eps_label: f64) -> Self {
        Self { uhat, nu, eps_label }
    }

    pub fn t(&self) -> f64 {
        self.uhat.time
    }

    pub fn grid(&self) -> &GridSpec {
        &self.uhat.grid
    }
}

/// `p^L` and `p^NL` on the spectral lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureFields {
    pub p_lin: Vec<C64>,
    pub p_nl: Vec<C64>,
}

/// `q^i = Delta_L u^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct QFields {
    pub q: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Include the quadratic terms.
    pub nonlinear: bool,
    /// Steps with a larger Courant number are rejected.
    pub cfl_limit: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { nonlinear: true, cfl_limit: 1.0 }
    }
}

/// Planned solver for one grid.
pub struct Solver {
    pub grid: GridSpec,
    pub fft: Fft3,
    pub options: SolverOptions,
}

fn shear_origin(f: &SpectralVectorField) -> Result<f64> {
    match f.frame {
        Frame::Shear { origin } => Ok(origin),
        Frame::Lab => Err(Error::InvalidParameter("solver needs a shear-frame field".into())),
    }
}

fn zeros3(n: usize) -> Vec3 {
    [vec![C64::default(); n], vec![C64::default(); n], vec![C64::default(); n]]
}

impl Solver {
    pub fn new(grid: GridSpec, options: SolverOptions) -> Self {
        Self { grid, fft: Fft3::new(grid), options }
    }

    fn field(&self, comps: Vec3, t: f64, origin: f64) -> SpectralVectorField {
        SpectralVectorField { grid: self.grid, comps, frame: Frame::Shear { origin }, time: t }
    }

    /// Projected quadratic tendency `P_K FT(U x omega)` and the Courant
    /// number `dt`-free speed sum `max(|U1 - tau U2|/dX + |U2|/dY + |U3|/dZ)`.
    pub fn quadratic_tendency(&self, u: &Vec3, t: f64, origin: f64) -> Result<(Vec3, f64)> {
        let g = self.grid;
        let n = g.spectral_len();
        let tau = t - origin;
        let frame = Frame::Shear { origin };
        let mut omega = zeros3(n);
        {
            let [o1, o2, o3] = &mut omega;
            o1.par_iter_mut()
                .zip(o2.par_iter_mut())
                .zip(o3.par_iter_mut())
                .enumerate()
                .for_each(|(idx, ((a, b), c))| {
                    let (i, j, m) = g.unindex(idx);
                    let kv = wavevector_at(&g, frame, t, i, j, m).as_array();
                    let iu = C64::new(0.0, 1.0);
                    let (u1, u2, u3) = (u[0][idx], u[1][idx], u[2][idx]);
                    *a = iu * (u3 * kv[1] - u2 * kv[2]);
                    *b = iu * (u1 * kv[2] - u3 * kv[0]);
                    *c = iu * (u2 * kv[0] - u1 * kv[1]);
                });
        }
        let up: Vec<Vec<f64>> = u.iter().map(|c| self.fft.inverse(c)).collect::<Result<_>>()?;
        let wp: Vec<Vec<f64>> = omega.iter().map(|c| self.fft.inverse(c)).collect::<Result<_>>()?;
        let np = g.physical_len();
        let mut cross = [vec![0.0; np], vec![0.0; np], vec![0.0; np]];
        {
            let [c1, c2, c3] = &mut cross;
            c1.par_iter_mut()
                .zip(c2.par_iter_mut())
                .zip(c3.par_iter_mut())
                .enumerate()
                .for_each(|(p, ((a, b), c))| {
                    let (u1, u2, u3) = (up[0][p], up[1][p], up[2][p]);
                    let (w1, w2, w3) = (wp[0][p], wp[1][p], wp[2][p]);
                    *a = u2 * w3 - u3 * w2;
                    *b = u3 * w1 - u1 * w3;
                    *c = u1 * w2 - u2 * w1;
                });
        }
        let (dx, dy, dz) = (TWO_PI / g.nx as f64, g.ly / g.ny as f64, TWO_PI / g.nz as f64);
        let speed = (0..np)
            .into_par_iter()
            .map(|p| {
                (up[0][p] - tau * up[1][p]).abs() / dx + up[1][p].abs() / dy + up[2][p].abs() / dz
            })
            .reduce(|| 0.0, f64::max);
        let mut out: Vec3 = [
            self.fft.forward(&cross[0])?,
            self.fft.forward(&cross[1])?,
            self.fft.forward(&cross[2])?,
        ];
        for c in out.iter_mut() {
            dealias_scalar(&g, c);
        }
        {
            let [a, b, c] = &mut out;
            a.par_iter_mut()
                .zip(b.par_iter_mut())
                .zip(c.par_iter_mut())
                .enumerate()
                .for_each(|(idx, ((x, y), z))| {
                    let (i, j, m) = g.unindex(idx);
                    let kv = wavevector_at(&g, frame, t, i, j, m);
                    let p = leray_project([*x, *y, *z], &kv);
                    *x = p[0];
                    *y = p[1];
                    *z = p[2];
                });
        }
        Ok((out, speed))
    }

    fn add_linear(&self, u: &Vec3, t: f64, origin: f64, out: &mut Vec3) {
        let g = self.grid;
        let frame = Frame::Shear { origin };
        let [a, b, c] = out;
        a.par_iter_mut()
            .zip(b.par_iter_mut())
            .zip(c.par_iter_mut())
            .enumerate()
            .for_each(|(idx, ((x, y), z))| {
                let (i, j, m) = g.unindex(idx);
                let kv = wavevector_at(&g, frame, t, i, j, m);
                let lt = linear_tendency(&kv, &[u[0][idx], u[1][idx], u[2][idx]]);
                *x += lt[0];
                *y += lt[1];
                *z += lt[2];
            });
    }

    /// Full inviscid tendency and the speed sum (zero when linear).
    fn tendency(&self, u: &Vec3, t: f64, origin: f64) -> Result<(Vec3, f64)> {
        let (mut out, speed) = if self.options.nonlinear {
            self.quadratic_tendency(u, t, origin)?
        } else {
            (zeros3(self.grid.spectral_len()), 0.0)
        };
        self.add_linear(u, t, origin, &mut out);
        Ok((out, speed))
    }

    /// Tendency of `state` without the viscous term.
    pub fn nonlinear_rhs(&self, state: &SimState) -> Result<SpectralVectorField> {
        let origin = shear_origin(&state.uhat)?;
        let (out, _) = self.tendency(&state.uhat.comps, state.t(), origin)?;
        Ok(self.field(out, state.t(), origin))
    }

    /// Largest `|U1 - tau U2|/dX + |U2|/dY + |U3|/dZ` on the grid.
    pub fn max_speed(&self, state: &SimState) -> Result<f64> {
        let origin = shear_origin(&state.uhat)?;
        let g = self.grid;
        let tau = state.t() - origin;
        let up: Vec<Vec<f64>> = state.uhat.comps.iter().map(|c| self.fft.inverse(c)).collect::<Result<_>>()?;
        let (dx, dy, dz) = (TWO_PI / g.nx as f64, g.ly / g.ny as f64, TWO_PI / g.nz as f64);
        Ok((0..g.physical_len())
            .map(|p| (up[0][p] - tau * up[1][p]).abs() / dx + up[1][p].abs() / dy + up[2][p].abs() / dz)
            .fold(0.0, f64::max))
    }

    /// One integrating-factor RK4 step.
    pub fn step(&self, state: &SimState, dt: f64) -> Result<SimState> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        let g = self.grid;
        let f = &state.uhat;
        if f.grid != g {
            return Err(Error::DimensionMismatch { expected: g.describe(), got: f.grid.describe() });
        }
        let origin = shear_origin(f)?;
        let t = f.time;
        let h = dt;
        let tau = t - origin;
        let nu = state.nu;
        let n = g.spectral_len();

        let factors: Vec<(f64, f64, f64)> = (0..n)
            .into_par_iter()
            .map(|idx| {
                if nu == 0.0 {
                    return (1.0, 1.0, 1.0);
                }
                let (i, j, m) = g.unindex(idx);
                let (k, eta, l) = (g.kx(i) as f64, g.eta(j), g.lz(m) as f64);
                let a = viscous_integral(k, eta, l, tau, tau + 0.5 * h);
                let b = viscous_integral(k, eta, l, tau + 0.5 * h, tau + h);
                ((-nu * a).exp(), (-nu * (a + b)).exp(), (-nu * b).exp())
            })
            .collect();

        let u = &f.comps;
        let (n1, speed) = self.tendency(u, t, origin)?;
        let courant = speed * h;
        if courant > self.options.cfl_limit {
            return Err(Error::Cfl { t, courant, limit: self.options.cfl_limit });
        }
        let combine = |fun: &(dyn Fn(usize, usize) -> C64 + Sync)| -> Vec3 {
            std::array::from_fn(|c| (0..n).into_par_iter().map(|idx| fun(c, idx)).collect())
        };
        let u2 = combine(&|c, i| (u[c][i] + n1[c][i] * (0.5 * h)) * factors[i].0);
        let (n2, _) = self.tendency(&u2, t + 0.5 * h, origin)?;
        drop(u2);
        let u3 = combine(&|c, i| u[c][i] * factors[i].0 + n2[c][i] * (0.5 * h));
        let (n3, _) = self.tendency(&u3, t + 0.5 * h, origin)?;
        drop(u3);
        let u4 = combine(&|c, i| u[c][i] * factors[i].1 + n3[c][i] * (h * factors[i].2));
        let (n4, _) = self.tendency(&u4, t + h, origin)?;
        drop(u4);
        let new = combine(&|c, i| {
            let (_, dh, e2) = factors[i];
            u[c][i] * dh + (n1[c][i] * dh + (n2[c][i] + n3[c][i]) * (2.0 * e2) + n4[c][i]) * (h / 6.0)
        });
        let mut out = self.field(new, t + h, origin);
        out.leray_project();
        out.dealias();
        if !out.comps.iter().all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite { t: t + h, what: "velocity coefficients".into() });
        }
        Ok(SimState { uhat: out, nu: state.nu, eps_label: state.eps_label })
    }

    /// Steps from the current time to `t_end` with steps of at most `dt`.
    pub fn advance(&self, state: &SimState, t_end: f64, dt: f64) -> Result<SimState> {
        let mut s = state.clone();
        let t0 = s.t();
        let n = ((t_end - t0) / dt - 1e-9).ceil().max(0.0) as usize;
        for i in 0..n {
            let target = if i + 1 == n { t_end } else { t0 + (i + 1) as f64 * dt };
            s = self.step(&s, target - s.t())?;
        }
        Ok(s)
    }

    /// Linear and nonlinear pressure, with `p = 0` on zero wavevectors.
    pub fn compute_pressure(&self, state: &SimState) -> Result<PressureFields> {
        let g = self.grid;
        let f = &state.uhat;
        let t = f.time;
        let frame = f.frame;
        let n = g.spectral_len();
        let iu = C64::new(0.0, 1.0);
        let p_lin: Vec<C64> = (0..n)
            .into_par_iter()
            .map(|idx| {
                let (i, j, m) = g.unindex(idx);
                let kv = wavevector_at(&g, frame, t, i, j, m);
                let n2 = kv.norm2();
                if n2 == 0.0 {
                    C64::default()
                } else {
                    iu * (2.0 * kv.k as f64) * f.comps[1][idx] / n2
                }
            })
            .collect();
        // grads[i][j] = d_i^L u^j
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(9);
        for di in 0..3 {
            for uj in 0..3 {
                let d: Vec<C64> = (0..n)
                    .into_par_iter()
                    .map(|idx| {
                        let (i, j, m) = g.unindex(idx);
                        let kv = wavevector_at(&g, frame, t, i, j, m).as_array();
                        iu * kv[di] * f.comps[uj][idx]
                    })
                    .collect();
                grads.push(self.fft.inverse(&d)?);
            }
        }
        let prod: Vec<f64> = (0..g.physical_len())
            .into_par_iter()
            .map(|p| {
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        s += grads[i * 3 + j][p] * grads[j * 3 + i][p];
                    }
                }
                s
            })
            .collect();
        let mut src = self.fft.forward(&prod)?;
        dealias_scalar(&g, &mut src);
        let p_nl: Vec<C64> = src
            .par_iter()
            .enumerate()
            .map(|(idx, s)| {
                let (i, j, m) = g.unindex(idx);
                let n2 = wavevector_at(&g, frame, t, i, j, m).norm2();
                if n2 == 0.0 {
                    C64::default()
                } else {
                    s / n2
                }
            })
            .collect();
        Ok(PressureFields { p_lin, p_nl })
    }
}

/// `q^i = -|K|^2 u^i`.
pub fn q_fields(state: &SimState) -> QFields {
    let f = &state.uhat;
    let g = f.grid;
    let q = std::array::from_fn(|c| {
        (0..g.spectral_len())
            .into_par_iter()
            .map(|idx| {
                let (i, j, m) = g.unindex(idx);
                -f.comps[c][idx] * f.wavevector(i, j, m).norm2()
            })
            .collect()
    });
    QFields { q }
}

/// Re-centres the stored `eta` lattice so that the frame origin becomes the
/// current time: the mode stored at `eta` moves to `eta - k (t - origin)`.
/// Modes shifted off the lattice are dropped.
pub fn remap_shear(state: &SimState) -> Result<SimState> {
    let f = &state.uhat;
    let origin = shear_origin(f)?;
    let g = f.grid;
    let t = f.time;
    let shift_f = (t - origin) * g.ly / TWO_PI;
    let shift = shift_f.round();
    if (shift_f - shift).abs() > 1e-9 * shift_f.abs().max(1.0) {
        return Err(Error::NonCommensurateRemap { t });
    }
    let shift = shift as i64;
    let mut out = SpectralVectorField::zeros(g, Frame::Shear { origin: t }, t);
    for c in 0..3 {
        for i in 0..g.nkx() {
            let k = g.kx(i);
            for j in 0..g.ny {
                let Some(jn) = g.row_of_eta_index(g.eta_index(j) - k * shift) else { continue };
                for m in 0..g.nz {
                    out.comps[c][g.index(i, jn, m)] = f.comps[c][g.index(i, j, m)];
                }
            }
        }
    }
    Ok(SimState { uhat: out, nu: state.nu, eps_label: state.eps_label })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::TWO_PI;

    fn grid() -> GridSpec {
        GridSpec::new(8, 8, 8, TWO_PI).unwrap()
    }

    #[test]
    fn zero_field_zero_tendency() {
        let g = grid();
        let s = Solver::new(g, SolverOptions::default());
        let st = SimState::new(SpectralVectorField::zeros(g, Frame::SHEAR, 0.0), 0.01, 0.0);
        let r = s.nonlinear_rhs(&st).unwrap();
        assert!(r.comps.iter().all(|c| c.iter().all(|z| z.norm() == 0.0)));
    }

    #[test]
    fn linear_pressure_example() {
        let g = grid();
        let s = Solver::new(g, SolverOptions::default());
        let mut f = SpectralVectorField::zeros(g, Frame::SHEAR, 0.0);
        f.comps[1][g.index(1, 0, 0)] = C64::new(1.0, 0.0);
        let p = s.compute_pressure(&SimState::new(f, 0.0, 0.0)).unwrap();
        assert!((p.p_lin[g.index(1, 0, 0)] - C64::new(0.0, 2.0)).norm() < 1e-15);
        let mut f = SpectralVectorField::zeros(g, Frame::SHEAR, 0.0);
        f.comps[0][g.index(1, 1, 0)] = C64::new(1.0, 0.0);
        let p = s.compute_pressure(&SimState::new(f, 0.0, 0.0)).unwrap();
        assert!(p.p_lin.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn q_field_examples() {
        let g = grid();
        let mut f = SpectralVectorField::zeros(g, Frame::SHEAR, 0.0);
        f.comps[0][g.index(1, 0, 0)] = C64::new(1.0, 0.0);
        let q = q_fields(&SimState::new(f.clone(), 0.0, 0.0));
        assert_eq!(q.q[0][g.index(1, 0, 0)], C64::new(-1.0, 0.0));
        let mut f3 = f;
        f3.time = 3.0;
        f3.comps[1][g.index(1, 0, 0)] = C64::new(1.0, 0.0);
        let q = q_fields(&SimState::new(f3, 0.0, 0.0));
        assert_eq!(q.q[1][g.index(1, 0, 0)], C64::new(-10.0, 0.0));
    }

    #[test]
    fn remap_examples() {
        let g = grid();
        let mut f = SpectralVectorField::zeros(g, Frame::SHEAR, 0.0);
        f.comps[2][g.index(1, 0, 0)] = C64::new(1.0, 0.0);
        let st = SimState::new(f.clone(), 0.0, 0.0);
        assert_eq!(remap_shear(&st).unwrap().uhat.comps, st.uhat.comps);
        f.time = 1.0;
        let out = remap_shear(&SimState::new(f.clone(), 0.0, 0.0)).unwrap();
        let jn = g.row_of_eta_index(-1).unwrap();
        assert_eq!(out.uhat.comps[2][g.index(1, jn, 0)], C64::new(1.0, 0.0));
        assert_eq!(out.uhat.wavevector(1, jn, 0), f.wavevector(1, 0, 0));
        f.time = 0.5;
        assert!(matches!(
            remap_shear(&SimState::new(f, 0.0, 0.0)),
            Err(Error::NonCommensurateRemap { .. })
        ));
    }
}
