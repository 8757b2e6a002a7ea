//! Norms, energy budgets and fits computed from solver states.
//!
//! Energies are squared `L^2` norms `||f||^2` over the periodic box, split
//! into the `x`-average (`k = 0`) and the remainder. Gradients and Sobolev
//! weights use the sheared wavevector `K(t)`, i.e. lab-frame derivatives.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::SimState;
use crate::spectral::{dealias_scalar, inner_product, weighted_sum, wavevector_at, Fft3, SpectralVectorField};

/// Default Sobolev order of the CSV diagnostics.
pub const SIGMA_PRIME: f64 = 3.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub name: String,
    pub samples: Vec<(f64, f64)>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), samples: Vec::new() }
    }

    /// Appends a sample; times must increase strictly and values be finite.
    pub fn push(&mut self, t: f64, v: f64) -> Result<()> {
        if let Some(&(last, _)) = self.samples.last() {
            if t <= last {
                return Err(Error::Cadence(format!("{}: t = {t} does not follow {last}", self.name)));
            }
        }
        if !v.is_finite() || !t.is_finite() {
            return Err(Error::NonFinite { t, what: self.name.clone() });
        }
        self.samples.push((t, v));
        Ok(())
    }

    pub fn from_samples(name: impl Into<String>, samples: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut s = Self::new(name);
        for (t, v) in samples {
            s.push(t, v)?;
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples with `t0 <= t <= t1`.
    pub fn window(&self, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        self.samples.iter().copied().filter(|&(t, _)| t >= t0 && t <= t1).collect()
    }

    /// First time after the series' last local maximum at which the value
    /// drops below `level`.
    pub fn crossing_time(&self, level: f64) -> Option<f64> {
        let peak = self
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, _)| i)?;
        self.samples[peak..].iter().find(|&&(_, v)| v < level).map(|&(t, _)| t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComponentEnergies {
    pub e_total: f64,
    pub e_neq: f64,
    /// `||u^i_0||^2` for the `x`-averaged components.
    pub e0: [f64; 3],
}

pub fn component_energies(field: &SpectralVectorField) -> ComponentEnergies {
    let g = &field.grid;
    let mut e0 = [0.0; 3];
    let mut e_neq = 0.0;
    for c in 0..3 {
        e0[c] = weighted_sum(g, &field.comps[c], |i, _, _| if i == 0 { 1.0 } else { 0.0 });
        e_neq += weighted_sum(g, &field.comps[c], |i, _, _| if i == 0 { 0.0 } else { 1.0 });
    }
    ComponentEnergies { e_total: e_neq + e0.iter().sum::<f64>(), e_neq, e0 }
}

/// `||u^c_{!=0}||` for one component.
pub fn neq_norm(field: &SpectralVectorField, comp: usize) -> f64 {
    weighted_sum(&field.grid, &field.comps[comp], |i, _, _| if i == 0 { 0.0 } else { 1.0 }).sqrt()
}

/// `||<grad>^sigma f||_2` with `<K> = sqrt(1 + |K|_1^2)`.
pub fn sobolev_norm(field: &SpectralVectorField, comp: usize, sigma: f64) -> f64 {
    sobolev_norm_filtered(field, comp, sigma, false)
}

/// As [`sobolev_norm`], restricted to `k != 0` when `neq` is set.
pub fn sobolev_norm_filtered(field: &SpectralVectorField, comp: usize, sigma: f64, neq: bool) -> f64 {
    let g = field.grid;
    weighted_sum(&g, &field.comps[comp], |i, j, m| {
        if neq && i == 0 {
            return 0.0;
        }
        let l1 = field.wavevector(i, j, m).l1();
        (1.0 + l1 * l1).powf(sigma)
    })
    .sqrt()
}

/// Terms of `d/dt (1/2)||u||^2 = -int u1 u2 - nu ||grad^L u||^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    pub t: f64,
    /// `(1/2)||u||^2`.
    pub energy: f64,
    /// `-int u1 u2`.
    pub production: f64,
    /// `nu ||grad^L u||^2`.
    pub dissipation: f64,
}

impl EnergyBudget {
    pub fn rate(&self) -> f64 {
        self.production - self.dissipation
    }
}

pub fn energy_budget(state: &SimState) -> EnergyBudget {
    let f = &state.uhat;
    let g = f.grid;
    let grad2: f64 = (0..3)
        .map(|c| weighted_sum(&g, &f.comps[c], |i, j, m| f.wavevector(i, j, m).norm2()))
        .sum();
    EnergyBudget {
        t: f.time,
        energy: 0.5 * f.norm2(),
        production: -inner_product(&g, &f.comps[0], &f.comps[1]),
        dissipation: state.nu * grad2,
    }
}

/// Closure defect of the budget over three consecutive samples (nonuniform
/// Simpson rule), relative to `max(E, nu ||grad u||^2)` and per unit time.
pub fn budget_residual(b0: &EnergyBudget, b1: &EnergyBudget, b2: &EnergyBudget) -> f64 {
    let (h0, h1) = (b1.t - b0.t, b2.t - b1.t);
    if h0 <= 0.0 || h1 <= 0.0 {
        return 0.0;
    }
    let w = h0 + h1;
    let integral = w / 6.0
        * ((2.0 - h1 / h0) * b0.rate() + w * w / (h0 * h1) * b1.rate() + (2.0 - h0 / h1) * b2.rate());
    let defect = b2.energy - b0.energy - integral;
    let scale = b2.energy.max(b2.dissipation).max(f64::MIN_POSITIVE);
    (defect / w).abs() / scale
}

/// Rolling budget check fed once per solver step.
#[derive(Debug, Clone, Default)]
pub struct BudgetTracker {
    last: Vec<EnergyBudget>,
    worst: f64,
}

impl BudgetTracker {
    pub fn push(&mut self, b: EnergyBudget) {
        self.last.push(b);
        if self.last.len() == 3 {
            self.worst = self.worst.max(budget_residual(&self.last[0], &self.last[1], &self.last[2]));
            self.last.drain(..2);
        }
    }

    /// Largest residual since the previous call.
    pub fn take_worst(&mut self) -> f64 {
        std::mem::take(&mut self.worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub samples: usize,
}

/// Samples at the start of a fit window that are discarded as transients.
pub const FIT_SKIP: usize = 5;
/// Samples required after the skip.
pub const FIT_MIN: usize = 8;

/// Least-squares fit of `log v = log c + p log t` over `window`.
pub fn fit_power_law(series: &TimeSeries, window: (f64, f64)) -> Result<PowerFit> {
    let pts: Vec<(f64, f64)> = series.window(window.0, window.1).into_iter().skip(FIT_SKIP).collect();
    if pts.len() < FIT_MIN {
        return Err(Error::Fit(format!(
            "{}: {} samples in [{}, {}] after skipping {FIT_SKIP}, need {FIT_MIN}",
            series.name,
            pts.len(),
            window.0,
            window.1
        )));
    }
    if pts.iter().any(|&(t, v)| t <= 0.0 || v <= 0.0) {
        return Err(Error::Fit(format!("{}: power-law fit needs positive t and values", series.name)));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, r2) = linear_regression(&xs, &ys);
    Ok(PowerFit { exponent: slope, prefactor: intercept.exp(), r2, samples: pts.len() })
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, R^2)`.
pub fn linear_regression(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b = my - a * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (a, b, r2)
}

/// `(U_{!=} . grad^L U^1_{!=})_0` as a spectrum on the `(eta, l)` lattice.
///
/// The sheared gradient stands in for the nonlinear-coordinate gradient.
pub fn mean_transport(fft: &Fft3, field: &SpectralVectorField) -> Result<Vec<C64>> {
    let g = field.grid;
    let n = g.spectral_len();
    let plane = g.plane_len();
    let iu = C64::new(0.0, 1.0);
    let neq = |c: usize| -> Vec<C64> {
        let mut v = field.comps[c].clone();
        v[..plane].iter_mut().for_each(|z| *z = C64::default());
        v
    };
    let u: Vec<Vec<f64>> = (0..3).map(|c| fft.inverse(&neq(c))).collect::<Result<_>>()?;
    let u1 = neq(0);
    let mut grad = Vec::with_capacity(3);
    for d in 0..3 {
        let s: Vec<C64> = (0..n)
            .into_par_iter()
            .map(|idx| {
                let (i, j, m) = g.unindex(idx);
                iu * wavevector_at(&g, field.frame, field.time, i, j, m).as_array()[d] * u1[idx]
            })
            .collect();
        grad.push(fft.inverse(&s)?);
    }
    let prod: Vec<f64> = (0..g.physical_len())
        .into_par_iter()
        .map(|p| u[0][p] * grad[0][p] + u[1][p] * grad[1][p] + u[2][p] * grad[2][p])
        .collect();
    let mut spec = fft.forward(&prod)?;
    dealias_scalar(&g, &mut spec);
    spec.truncate(plane);
    Ok(spec)
}

/// `-(1/t) (U_{!=} . grad^L U^1_{!=})_0` for each state (requires `t > 0`).
pub fn forcing_series(fft: &Fft3, states: &[SimState]) -> Result<Vec<(f64, Vec<C64>)>> {
    states
        .iter()
        .map(|s| {
            let t = s.t();
            if t <= 0.0 {
                return Err(Error::InvalidParameter(format!("forcing needs t > 0, got {t}")));
            }
            let mut f = mean_transport(fft, &s.uhat)?;
            f.iter_mut().for_each(|z| *z *= -1.0 / t);
            Ok((t, f))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_fit() {
        let s = TimeSeries::from_samples("v", (1..=40).map(|i| (i as f64, (i as f64).powi(2)))).unwrap();
        let f = fit_power_law(&s, (1.0, 40.0)).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-6 && f.samples == 35);
        let c = TimeSeries::from_samples("c", (1..=40).map(|i| (i as f64, 3.0))).unwrap();
        assert!(fit_power_law(&c, (1.0, 40.0)).unwrap().exponent.abs() < 1e-12);
        let short = TimeSeries::from_samples("s", (1..=12).map(|i| (i as f64, 1.0))).unwrap();
        assert!(fit_power_law(&short, (1.0, 12.0)).is_err());
    }

    #[test]
    fn series_rejects_non_monotone_time() {
        let mut s = TimeSeries::new("x");
        s.push(1.0, 1.0).unwrap();
        assert!(s.push(1.0, 2.0).is_err());
        assert!(s.push(2.0, f64::NAN).is_err());
    }
}
