//! Fourier lattices, transforms, shear-frame wavenumbers, divergence
//! projection and dealiasing.
//!
//! Coefficients follow the symmetric convention
//!
//! ```text
//! f^(k, eta, l) = (2 pi)^{-3/2} \int e^{-i(kx + eta y + l z)} f dx dy dz
//! f(x, y, z)    = (2 pi)^{-3/2} \sum_{k,l} \int e^{i(kx + eta y + l z)} f^ d eta
//! ```
//!
//! on the box `[0, 2pi) x [0, Ly) x [0, 2pi)`. The continuous `d eta` is the
//! lattice spacing `2 pi / Ly`, so every spectral L2 sum in this crate carries
//! that weight and `||f||_2^2 = d_eta * sum |f^|^2` holds exactly.
//!
//! Spectral storage is half-spectrum in `x` (`k = 0..=nx/2`) and full in
//! `eta` and `l`, laid out `k`-major: `index = (i * ny + j) * nz + m`.
//! Physical storage is `x`-fastest: `index = (iy * nz + iz) * nx + ix`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const TWO_PI: f64 = 2.0 * PI;

/// Collocation grid on `T x [0, Ly) x T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub ly: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, ly: f64) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny), ("nz", nz)] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "{name} = {n} must be even and >= 8"
                )));
            }
        }
        if !(ly.is_finite() && ly >= TWO_PI - 1e-12) {
            return Err(Error::InvalidGrid(format!("ly = {ly} must be >= 2 pi")));
        }
        Ok(Self { nx, ny, nz, ly })
    }

    /// Number of stored `x` wavenumbers (`0..=nx/2`).
    #[inline]
    pub fn nkx(&self) -> usize {
        self.nx / 2 + 1
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.ny * self.nz
    }

    #[inline]
    pub fn spectral_len(&self) -> usize {
        self.nkx() * self.ny * self.nz
    }

    #[inline]
    pub fn physical_len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, m: usize) -> usize {
        (i * self.ny + j) * self.nz + m
    }

    /// Inverse of [`GridSpec::index`].
    #[inline]
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let m = idx % self.nz;
        let j = (idx / self.nz) % self.ny;
        let i = idx / (self.ny * self.nz);
        (i, j, m)
    }

    #[inline]
    pub fn phys_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iy * self.nz + iz) * self.nx + ix
    }

    #[inline]
    pub fn d_eta(&self) -> f64 {
        TWO_PI / self.ly
    }

    /// Signed lattice index of row `j` in `[-ny/2, ny/2)`.
    #[inline]
    pub fn eta_index(&self, j: usize) -> i64 {
        signed_index(j, self.ny)
    }

    #[inline]
    pub fn eta(&self, j: usize) -> f64 {
        self.eta_index(j) as f64 * self.d_eta()
    }

    #[inline]
    pub fn kx(&self, i: usize) -> i64 {
        i as i64
    }

    #[inline]
    pub fn lz(&self, m: usize) -> i64 {
        signed_index(m, self.nz)
    }

    /// Row for a signed `eta` lattice index, if it lies in the stored range.
    pub fn row_of_eta_index(&self, n: i64) -> Option<usize> {
        let half = (self.ny / 2) as i64;
        if n < -half || n >= half {
            return None;
        }
        Some(n.rem_euclid(self.ny as i64) as usize)
    }

    pub fn col_of_l(&self, l: i64) -> Option<usize> {
        let half = (self.nz / 2) as i64;
        if l < -half || l >= half {
            return None;
        }
        Some(l.rem_euclid(self.nz as i64) as usize)
    }

    /// Multiplicity of a stored `k` plane in full-spectrum sums.
    #[inline]
    pub fn plane_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.nx / 2 {
            1.0
        } else {
            2.0
        }
    }

    /// `(j, m)` of the mode `(-eta, -l)`.
    #[inline]
    pub fn conj_jm(&self, j: usize, m: usize) -> (usize, usize) {
        ((self.ny - j) % self.ny, (self.nz - m) % self.nz)
    }

    /// Two-thirds truncation: keeps `3|k| < N` in every direction.
    #[inline]
    pub fn dealias_keep(&self, i: usize, j: usize, m: usize) -> bool {
        3 * i < self.nx
            && 3 * (self.eta_index(j).unsigned_abs() as usize) < self.ny
            && 3 * (self.lz(m).unsigned_abs() as usize) < self.nz
    }

    pub fn x(&self, ix: usize) -> f64 {
        TWO_PI * ix as f64 / self.nx as f64
    }

    pub fn y(&self, iy: usize) -> f64 {
        self.ly * iy as f64 / self.ny as f64
    }

    pub fn z(&self, iz: usize) -> f64 {
        TWO_PI * iz as f64 / self.nz as f64
    }

    pub fn describe(&self) -> String {
        format!("{}x{}x{} (Ly={})", self.nx, self.ny, self.nz, self.ly)
    }
}

#[inline]
fn signed_index(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Reference frame of a spectral field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frame {
    Lab,
    /// Shearing coordinates `X = x - (t - origin) y`.
    Shear { origin: f64 },
}

impl Frame {
    pub const SHEAR: Frame = Frame::Shear { origin: 0.0 };

    /// Elapsed shear time at physical time `t`.
    #[inline]
    pub fn shear_time(&self, t: f64) -> f64 {
        match self {
            Frame::Lab => 0.0,
            Frame::Shear { origin } => t - origin,
        }
    }
}

/// `(k, eta - k t, l)`: the wavevector seen by `grad^L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShearWavevector {
    pub k: i64,
    pub eta_t: f64,
    pub l: i64,
}

impl ShearWavevector {
    #[inline]
    pub fn as_array(&self) -> [f64; 3] {
        [self.k as f64, self.eta_t, self.l as f64]
    }

    /// `k^2 + (eta - kt)^2 + l^2`, the symbol of `-Delta_L`.
    #[inline]
    pub fn norm2(&self) -> f64 {
        let k = self.k as f64;
        let l = self.l as f64;
        k * k + self.eta_t * self.eta_t + l * l
    }

    #[inline]
    pub fn l1(&self) -> f64 {
        self.k.unsigned_abs() as f64 + self.eta_t.abs() + self.l.unsigned_abs() as f64
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.k == 0 && self.l == 0 && self.eta_t == 0.0
    }
}

pub fn shear_wavevector(k: i64, eta: f64, l: i64, t: f64) -> ShearWavevector {
    ShearWavevector {
        k,
        eta_t: eta - k as f64 * t,
        l,
    }
}

/// Orthogonal projection of `u` onto the plane normal to `kvec`.
pub fn leray_project(u: [C64; 3], kvec: &ShearWavevector) -> [C64; 3] {
    let n2 = kvec.norm2();
    if n2 == 0.0 {
        return u;
    }
    let kv = kvec.as_array();
    let dot = u[0] * kv[0] + u[1] * kv[1] + u[2] * kv[2];
    let c = dot / n2;
    [u[0] - c * kv[0], u[1] - c * kv[1], u[2] - c * kv[2]]
}

/// Three spectral components on the half-spectrum lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVectorField {
    pub grid: GridSpec,
    pub comps: [Vec<C64>; 3],
    pub frame: Frame,
    pub time: f64,
}

impl SpectralVectorField {
    pub fn zeros(grid: GridSpec, frame: Frame, time: f64) -> Self {
        let n = grid.spectral_len();
        Self {
            grid,
            comps: [vec![C64::default(); n], vec![C64::default(); n], vec![C64::default(); n]],
            frame,
            time,
        }
    }

    #[inline]
    pub fn wavevector(&self, i: usize, j: usize, m: usize) -> ShearWavevector {
        wavevector_at(&self.grid, self.frame, self.time, i, j, m)
    }

    /// `||u||_2^2` (all three components).
    pub fn norm2(&self) -> f64 {
        self.comps.iter().map(|c| scalar_norm2(&self.grid, c)).sum()
    }

    /// Largest `|K . u^|` over modes, relative to the coefficient norm.
    pub fn divergence_residual(&self) -> f64 {
        let g = &self.grid;
        let coeff_norm = self
            .comps
            .iter()
            .flat_map(|c| c.iter())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        if coeff_norm == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for idx in 0..g.spectral_len() {
            let (i, j, m) = g.unindex(idx);
            let kv = self.wavevector(i, j, m).as_array();
            let d = self.comps[0][idx] * kv[0] + self.comps[1][idx] * kv[1] + self.comps[2][idx] * kv[2];
            worst = worst.max(d.norm());
        }
        worst / coeff_norm
    }

    pub fn leray_project(&mut self) {
        let g = self.grid;
        for idx in 0..g.spectral_len() {
            let (i, j, m) = g.unindex(idx);
            let kv = self.wavevector(i, j, m);
            let p = leray_project(
                [self.comps[0][idx], self.comps[1][idx], self.comps[2][idx]],
                &kv,
            );
            for c in 0..3 {
                self.comps[c][idx] = p[c];
            }
        }
    }

    pub fn dealias(&mut self) {
        for c in self.comps.iter_mut() {
            dealias_scalar(&self.grid, c);
        }
    }

    pub fn enforce_hermitian(&mut self) {
        for c in self.comps.iter_mut() {
            enforce_hermitian_scalar(&self.grid, c);
        }
    }

    /// Largest `|u^(0,-eta,-l) - conj u^(0,eta,l)|` on the `k = 0` plane.
    pub fn hermitian_defect(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| hermitian_defect_scalar(&self.grid, c))
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.comps.iter_mut() {
            c.iter_mut().for_each(|z| *z *= a);
        }
    }
}

#[inline]
pub fn wavevector_at(grid: &GridSpec, frame: Frame, t: f64, i: usize, j: usize, m: usize) -> ShearWavevector {
    shear_wavevector(grid.kx(i), grid.eta(j), grid.lz(m), frame.shear_time(t))
}

/// `||f||_2^2 = d_eta * sum |f^|^2` over the full (Hermitian) spectrum.
pub fn scalar_norm2(grid: &GridSpec, f: &[C64]) -> f64 {
    weighted_sum(grid, f, |_, _, _| 1.0)
}

/// `d_eta * sum weight(i,j,m) |f^|^2` over the full spectrum.
pub fn weighted_sum<W>(grid: &GridSpec, f: &[C64], weight: W) -> f64
where
    W: Fn(usize, usize, usize) -> f64 + Sync,
{
    let plane = grid.plane_len();
    let partial: Vec<f64> = f
        .par_chunks(plane)
        .enumerate()
        .map(|(i, chunk)| {
            let w = grid.plane_weight(i);
            let terms: Vec<f64> = chunk
                .iter()
                .enumerate()
                .map(|(jm, z)| {
                    let (j, m) = (jm / grid.nz, jm % grid.nz);
                    w * weight(i, j, m) * z.norm_sqr()
                })
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    grid.d_eta() * pairwise_sum(&partial)
}

/// Real inner product `\int f g` of two real fields given by their spectra.
pub fn inner_product(grid: &GridSpec, f: &[C64], g: &[C64]) -> f64 {
    let plane = grid.plane_len();
    let partial: Vec<f64> = f
        .par_chunks(plane)
        .zip(g.par_chunks(plane))
        .enumerate()
        .map(|(i, (a, b))| {
            let w = grid.plane_weight(i);
            let terms: Vec<f64> = a.iter().zip(b).map(|(x, y)| w * (x * y.conj()).re).collect();
            pairwise_sum(&terms)
        })
        .collect();
    grid.d_eta() * pairwise_sum(&partial)
}

/// Fixed-order pairwise summation; result independent of thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Deterministic parallel sum: fixed chunking, then a pairwise tree.
pub fn det_sum(xs: &[f64]) -> f64 {
    const CHUNK: usize = 4096;
    let partial: Vec<f64> = xs.par_chunks(CHUNK).map(pairwise_sum).collect();
    pairwise_sum(&partial)
}

pub fn dealias_scalar(grid: &GridSpec, f: &mut [C64]) {
    let plane = grid.plane_len();
    f.par_chunks_mut(plane).enumerate().for_each(|(i, chunk)| {
        for (jm, z) in chunk.iter_mut().enumerate() {
            if !grid.dealias_keep(i, jm / grid.nz, jm % grid.nz) {
                *z = C64::default();
            }
        }
    });
}

/// Symmetrizes the `k = 0` plane and zeroes the `x` Nyquist plane.
pub fn enforce_hermitian_scalar(grid: &GridSpec, f: &mut [C64]) {
    let (ny, nz) = (grid.ny, grid.nz);
    for j in 0..ny {
        for m in 0..nz {
            let (jc, mc) = grid.conj_jm(j, m);
            let a = grid.index(0, j, m);
            let b = grid.index(0, jc, mc);
            if a < b {
                let avg = 0.5 * (f[a] + f[b].conj());
                f[a] = avg;
                f[b] = avg.conj();
            } else if a == b {
                f[a] = C64::new(f[a].re, 0.0);
            }
        }
    }
    let nyq = grid.nx / 2;
    for jm in 0..grid.plane_len() {
        f[nyq * grid.plane_len() + jm] = C64::default();
    }
}

pub fn hermitian_defect_scalar(grid: &GridSpec, f: &[C64]) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..grid.ny {
        for m in 0..grid.nz {
            let (jc, mc) = grid.conj_jm(j, m);
            let d = f[grid.index(0, j, m)] - f[grid.index(0, jc, mc)].conj();
            worst = worst.max(d.norm());
        }
    }
    worst
}

/// Planned 3D real transforms for one grid.
pub struct Fft3 {
    grid: GridSpec,
    x_fwd: Arc<dyn RealToComplex<f64>>,
    x_inv: Arc<dyn ComplexToReal<f64>>,
    y_fwd: Arc<dyn Fft<f64>>,
    y_inv: Arc<dyn Fft<f64>>,
    z_fwd: Arc<dyn Fft<f64>>,
    z_inv: Arc<dyn Fft<f64>>,
    fwd_scale: f64,
    inv_scale: f64,
}

impl Fft3 {
    pub fn new(grid: GridSpec) -> Self {
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        let n = grid.physical_len() as f64;
        let norm = (TWO_PI).powf(-1.5);
        Self {
            grid,
            x_fwd: rp.plan_fft_forward(grid.nx),
            x_inv: rp.plan_fft_inverse(grid.nx),
            y_fwd: cp.plan_fft_forward(grid.ny),
            y_inv: cp.plan_fft_inverse(grid.ny),
            z_fwd: cp.plan_fft_forward(grid.nz),
            z_inv: cp.plan_fft_inverse(grid.nz),
            fwd_scale: norm * TWO_PI * TWO_PI * grid.ly / n,
            inv_scale: norm * grid.d_eta(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Physical samples to half-spectrum coefficients.
    pub fn forward(&self, phys: &[f64]) -> Result<Vec<C64>> {
        let g = self.grid;
        if phys.len() != g.physical_len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} physical samples ({})", g.physical_len(), g.describe()),
                got: format!("{}", phys.len()),
            });
        }
        let nkx = g.nkx();
        // x transforms, output laid out [j][m][i]
        let mut tmp = vec![C64::default(); g.spectral_len()];
        tmp.par_chunks_mut(nkx)
            .zip(phys.par_chunks(g.nx))
            .for_each_init(
                || (vec![0.0; g.nx], self.x_fwd.make_scratch_vec()),
                |(line, scratch), (out, input)| {
                    line.copy_from_slice(input);
                    self.x_fwd
                        .process_with_scratch(line, out, scratch)
                        .expect("x forward transform");
                },
            );
        // transpose to [i][j][m]
        let mut spec = vec![C64::default(); g.spectral_len()];
        let plane = g.plane_len();
        spec.par_chunks_mut(plane).enumerate().for_each(|(i, out)| {
            for (jm, z) in out.iter_mut().enumerate() {
                *z = tmp[jm * nkx + i];
            }
        });
        drop(tmp);
        self.y_pass(&mut spec, &self.y_fwd);
        self.z_pass(&mut spec, &self.z_fwd);
        let s = self.fwd_scale;
        spec.par_iter_mut().for_each(|z| *z *= s);
        Ok(spec)
    }

    /// Half-spectrum coefficients to physical samples.
    pub fn inverse(&self, spec: &[C64]) -> Result<Vec<f64>> {
        let g = self.grid;
        if spec.len() != g.spectral_len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} spectral coefficients ({})", g.spectral_len(), g.describe()),
                got: format!("{}", spec.len()),
            });
        }
        let mut work = spec.to_vec();
        self.z_pass(&mut work, &self.z_inv);
        self.y_pass(&mut work, &self.y_inv);
        let nkx = g.nkx();
        let plane = g.plane_len();
        let s = self.inv_scale;
        let mut phys = vec![0.0; g.physical_len()];
        phys.par_chunks_mut(g.nx).enumerate().for_each_init(
            || (vec![C64::default(); nkx], self.x_inv.make_scratch_vec()),
            |(line, scratch), (jm, out)| {
                for (i, z) in line.iter_mut().enumerate() {
                    *z = work[i * plane + jm] * s;
                }
                line[0].im = 0.0;
                line[nkx - 1].im = 0.0;
                self.x_inv
                    .process_with_scratch(line, out, scratch)
                    .expect("x inverse transform");
            },
        );
        Ok(phys)
    }

    fn z_pass(&self, spec: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let nz = self.grid.nz;
        spec.par_chunks_mut(nz * 8).for_each_init(
            || vec![C64::default(); plan.get_inplace_scratch_len()],
            |scratch, chunk| plan.process_with_scratch(chunk, scratch),
        );
    }

    fn y_pass(&self, spec: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let (ny, nz) = (self.grid.ny, self.grid.nz);
        spec.par_chunks_mut(ny * nz).for_each_init(
            || {
                (
                    vec![C64::default(); ny * nz],
                    vec![C64::default(); plan.get_inplace_scratch_len()],
                )
            },
            |(t, scratch), plane| {
                // transpose [j][m] -> [m][j], transform rows, transpose back
                for j in 0..ny {
                    for m in 0..nz {
                        t[m * ny + j] = plane[j * nz + m];
                    }
                }
                plan.process_with_scratch(t, scratch);
                for j in 0..ny {
                    for m in 0..nz {
                        plane[j * nz + m] = t[m * ny + j];
                    }
                }
            },
        );
    }

    pub fn forward_vector(&self, phys: &[Vec<f64>; 3], frame: Frame, time: f64) -> Result<SpectralVectorField> {
        Ok(SpectralVectorField {
            grid: self.grid,
            comps: [self.forward(&phys[0])?, self.forward(&phys[1])?, self.forward(&phys[2])?],
            frame,
            time,
        })
    }

    pub fn inverse_vector(&self, field: &SpectralVectorField) -> Result<[Vec<f64>; 3]> {
        if field.grid != self.grid {
            return Err(Error::DimensionMismatch {
                expected: self.grid.describe(),
                got: field.grid.describe(),
            });
        }
        Ok([
            self.inverse(&field.comps[0])?,
            self.inverse(&field.comps[1])?,
            self.inverse(&field.comps[2])?,
        ])
    }

    /// Samples `f(x, y, z)` on the collocation lattice.
    pub fn sample<F: Fn(f64, f64, f64) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        let g = self.grid;
        let mut out = vec![0.0; g.physical_len()];
        out.par_chunks_mut(g.nx).enumerate().for_each(|(row, line)| {
            let (iy, iz) = (row / g.nz, row % g.nz);
            for (ix, v) in line.iter_mut().enumerate() {
                *v = f(g.x(ix), g.y(iy), g.z(iz));
            }
        });
        out
    }
}

/// Planned 2D transforms on the `(eta, l)` lattice.
///
/// Coefficients use the same normalization as the `k = 0` plane of
/// [`Fft3`], so an `x`-independent 3D field and its 2D slice share spectra.
pub struct Fft2 {
    pub ny: usize,
    pub nz: usize,
    pub ly: f64,
    y_fwd: Arc<dyn Fft<f64>>,
    y_inv: Arc<dyn Fft<f64>>,
    z_fwd: Arc<dyn Fft<f64>>,
    z_inv: Arc<dyn Fft<f64>>,
    fwd_scale: f64,
    inv_scale: f64,
}

impl Fft2 {
    pub fn new(grid: &GridSpec) -> Self {
        let mut cp = FftPlanner::<f64>::new();
        let norm = TWO_PI.powf(-1.5);
        let n = (grid.ny * grid.nz) as f64;
        Self {
            ny: grid.ny,
            nz: grid.nz,
            ly: grid.ly,
            y_fwd: cp.plan_fft_forward(grid.ny),
            y_inv: cp.plan_fft_inverse(grid.ny),
            z_fwd: cp.plan_fft_forward(grid.nz),
            z_inv: cp.plan_fft_inverse(grid.nz),
            fwd_scale: norm * TWO_PI * TWO_PI * grid.ly / n,
            inv_scale: norm * grid.d_eta(),
        }
    }

    pub fn len(&self) -> usize {
        self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, phys: &[f64]) -> Vec<C64> {
        assert_eq!(phys.len(), self.len(), "2D physical length");
        let mut buf: Vec<C64> = phys.iter().map(|&v| C64::new(v * self.fwd_scale, 0.0)).collect();
        self.pass(&mut buf, &self.z_fwd, &self.y_fwd);
        buf
    }

    pub fn inverse(&self, spec: &[C64]) -> Vec<f64> {
        assert_eq!(spec.len(), self.len(), "2D spectral length");
        let mut buf: Vec<C64> = spec.iter().map(|z| z * self.inv_scale).collect();
        self.pass(&mut buf, &self.z_inv, &self.y_inv);
        buf.iter().map(|z| z.re).collect()
    }

    fn pass(&self, buf: &mut [C64], zp: &Arc<dyn Fft<f64>>, yp: &Arc<dyn Fft<f64>>) {
        let (ny, nz) = (self.ny, self.nz);
        zp.process(buf);
        let mut t = vec![C64::default(); ny * nz];
        for j in 0..ny {
            for m in 0..nz {
                t[m * ny + j] = buf[j * nz + m];
            }
        }
        yp.process(&mut t);
        for j in 0..ny {
            for m in 0..nz {
                buf[j * nz + m] = t[m * ny + j];
            }
        }
    }

    pub fn y(&self, iy: usize) -> f64 {
        self.ly * iy as f64 / self.ny as f64
    }

    pub fn z(&self, iz: usize) -> f64 {
        TWO_PI * iz as f64 / self.nz as f64
    }

    /// Samples `f(y, z)`; layout `iy * nz + iz`.
    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for iy in 0..self.ny {
            for iz in 0..self.nz {
                out.push(f(self.y(iy), self.z(iz)));
            }
        }
        out
    }
}
