//! Seeded random solenoidal initial data.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Fft3, Frame, GridSpec, SpectralVectorField};

/// Spectral amplitude envelope of random data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Envelope {
    /// `exp(-lambda |K|_1^s)`.
    Gevrey { lambda: f64, s: f64 },
    /// Unit weight for `|k|, |eta|, |l| <= kappa0`, zero beyond.
    Bandlimited { kappa0: f64 },
}

impl Envelope {
    pub fn weight(&self, k: f64, eta: f64, l: f64) -> f64 {
        match *self {
            Envelope::Gevrey { lambda, s } => (-lambda * (k.abs() + eta.abs() + l.abs()).powf(s)).exp(),
            Envelope::Bandlimited { kappa0 } => {
                if k.abs().max(eta.abs()).max(l.abs()) <= kappa0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Divergence-free, Hermitian, dealiased field with `||u||_2 = amplitude`,
/// determined by `seed`. Shear frame with origin 0.
pub fn random_initial_data(seed: u64, grid: GridSpec, amplitude: f64, envelope: Envelope) -> Result<SpectralVectorField> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidParameter(format!("amplitude {amplitude}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralVectorField::zeros(grid, Frame::SHEAR, 0.0);
    for idx in 0..grid.spectral_len() {
        let (i, j, m) = grid.unindex(idx);
        let draws: [f64; 6] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        if !grid.dealias_keep(i, j, m) || (i == 0 && j == 0 && m == 0) {
            continue;
        }
        let w = envelope.weight(grid.kx(i) as f64, grid.eta(j), grid.lz(m) as f64);
        for c in 0..3 {
            f.comps[c][idx] = C64::new(draws[2 * c], draws[2 * c + 1]) * w;
        }
    }
    f.leray_project();
    f.enforce_hermitian();
    f.dealias();
    let n = f.norm2().sqrt();
    if n > 0.0 {
        f.scale(amplitude / n);
    }
    Ok(f)
}

/// Shape of the initial disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// All modes of the envelope.
    #[default]
    Random,
    /// Only `x`-independent modes.
    Streak,
    /// `x`-dependent modes only, with `u2` one order of amplitude smaller
    /// than `u1, u3`.
    Cascade,
    /// Random `x`-dependent modes plus a pure `u1` streak (no lift-up source).
    Mixing,
    /// `u = (0, a cos z, 0)`; `amplitude` is the coefficient `a`, not a norm.
    Cosz,
}

/// Zeroes every mode except the listed `(k, eta, l)` (and, on the `k = 0`
/// plane, their mirror images).
pub fn restrict_to_modes(f: &mut SpectralVectorField, modes: &[(i64, f64, i64)]) {
    let g = f.grid;
    for idx in 0..g.spectral_len() {
        let (i, j, m) = g.unindex(idx);
        let (k, eta, l) = (g.kx(i), g.eta(j), g.lz(m));
        let hit = modes.iter().any(|&(mk, me, ml)| {
            let same = mk == k && (me - eta).abs() < 1e-9 && ml == l;
            let mirror = k == 0 && mk == 0 && (me + eta).abs() < 1e-9 && ml == -l;
            same || mirror
        });
        if !hit {
            for c in f.comps.iter_mut() {
                c[idx] = C64::default();
            }
        }
    }
}

/// Keeps only the `k = 0` plane.
pub fn keep_streak(f: &mut SpectralVectorField) {
    let plane = f.grid.plane_len();
    for c in f.comps.iter_mut() {
        c[plane..].iter_mut().for_each(|z| *z = C64::default());
    }
}

/// Removes the `k = 0` plane, multiplies `u2` by `eps` and restores the
/// divergence constraint through `u1 = -(eta u2 + l u3)/k`.
pub fn make_cascade(f: &mut SpectralVectorField, eps: f64) {
    let g = f.grid;
    let plane = g.plane_len();
    for c in f.comps.iter_mut() {
        c[..plane].iter_mut().for_each(|z| *z = C64::default());
    }
    for idx in plane..g.spectral_len() {
        let (i, j, m) = g.unindex(idx);
        let kv = f.wavevector(i, j, m);
        f.comps[1][idx] *= eps;
        f.comps[0][idx] = -(f.comps[1][idx] * kv.eta_t + f.comps[2][idx] * kv.l as f64) / kv.k as f64;
    }
}

/// Random data of the given profile, optionally restricted to `modes`,
/// with `||u||_2 = amplitude` before the cascade rescaling of `u2`.
pub fn shaped_initial_data(
    seed: u64,
    grid: GridSpec,
    amplitude: f64,
    envelope: Envelope,
    profile: Profile,
    modes: Option<&[(i64, f64, i64)]>,
) -> Result<SpectralVectorField> {
    if profile == Profile::Cosz {
        let fft = Fft3::new(grid);
        let mut f = SpectralVectorField::zeros(grid, Frame::SHEAR, 0.0);
        f.comps[1] = fft.forward(&fft.sample(|_, _, z| amplitude * z.cos()))?;
        return Ok(f);
    }
    let mut f = random_initial_data(seed, grid, 1.0, envelope)?;
    if let Some(ms) = modes {
        restrict_to_modes(&mut f, ms);
    }
    match profile {
        Profile::Random => {}
        Profile::Streak => keep_streak(&mut f),
        Profile::Cascade => keep_neq(&mut f),
        Profile::Mixing => {
            let plane = grid.plane_len();
            for c in 1..3 {
                f.comps[c][..plane].iter_mut().for_each(|z| *z = C64::default());
            }
        }
        Profile::Cosz => unreachable!(),
    }
    let n = f.norm2().sqrt();
    if n == 0.0 && amplitude > 0.0 {
        return Err(Error::InvalidParameter("initial data vanish on the selected modes".into()));
    }
    if n > 0.0 {
        f.scale(amplitude / n);
    }
    if profile == Profile::Cascade {
        make_cascade(&mut f, amplitude);
    }
    Ok(f)
}

fn keep_neq(f: &mut SpectralVectorField) {
    let plane = f.grid.plane_len();
    for c in f.comps.iter_mut() {
        c[..plane].iter_mut().for_each(|z| *z = C64::default());
    }
}
