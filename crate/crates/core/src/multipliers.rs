//! Norm multipliers: critical times, the resonance weight `w`, the pressure
//! weight `w_L`, the dissipation clock `D`, the Gevrey radius `lambda(t)`,
//! the `A`-families and the CK dissipation functionals built from them.
//!
//! Frequencies `(k, eta, l)` here are shear-frame (constant in time) and all
//! magnitudes `|k, eta, l|` are l1 norms, with `<v> = (1 + |v|^2)^{1/2}`.
//! The weights become astronomically small for large `eta`, so every
//! evaluation is carried out on logarithms; the plain values are exponentials
//! of those and may underflow to zero.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{SpectralVectorField, Frame};

/// `<x> = (1 + x^2)^{1/2}`.
#[inline]
pub fn jap(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// `E(sqrt(|eta|))`: the number of critical intervals of `eta`.
#[inline]
pub fn kmax(eta: f64) -> u64 {
    eta.abs().sqrt().floor() as u64
}

/// Critical time `t_{k,eta}`; `k = 0` gives `t_{0,eta} = 2|eta|`.
///
/// Returns `None` when the interval is empty: `k` and `eta` of opposite
/// sign, or `|k|` outside `1..=E(sqrt|eta|)`.
pub fn critical_time(k: i64, eta: f64) -> Option<f64> {
    let ae = eta.abs();
    if k == 0 {
        return Some(2.0 * ae);
    }
    let ak = k.unsigned_abs();
    if (k as f64) * eta <= 0.0 || ak > kmax(eta) {
        return None;
    }
    Some(t_k(ak, ae))
}

#[inline]
fn t_k(k: u64, eta: f64) -> f64 {
    if k == 0 {
        return 2.0 * eta;
    }
    let k = k as f64;
    eta / k - eta / (2.0 * k * (k + 1.0))
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `I_{k,eta} = [t_{k,eta}, t_{k-1,eta}]`, or `None` if empty.
pub fn critical_interval(k: i64, eta: f64) -> Option<Interval> {
    let lo = critical_time(k, eta)?;
    if k == 0 {
        return None;
    }
    let prev = k - k.signum();
    let hi = critical_time(prev, eta)?;
    Some(Interval { lo, hi })
}

/// The resonant interval: `I_{k,eta}` when `2 sqrt|eta| <= t_{k,eta}`.
pub fn resonant_interval(k: i64, eta: f64) -> Option<Interval> {
    critical_interval(k, eta).filter(|iv| 2.0 * eta.abs().sqrt() <= iv.lo)
}

/// All critical data of one frequency `eta > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalSchedule {
    pub eta: f64,
    pub kmax: u64,
    /// `t_{k,eta}` for `k = 0..=kmax`.
    pub times: Vec<f64>,
    pub intervals: Vec<Interval>,
    pub resonant: Vec<Option<Interval>>,
}

impl CriticalSchedule {
    pub fn new(eta: f64) -> Self {
        let eta = eta.abs();
        let kmax = kmax(eta);
        let times: Vec<f64> = (0..=kmax).map(|k| t_k(k, eta)).collect();
        let intervals: Vec<Interval> = (1..=kmax as usize)
            .map(|k| Interval { lo: times[k], hi: times[k - 1] })
            .collect();
        let resonant = intervals
            .iter()
            .map(|iv| Some(*iv).filter(|iv| 2.0 * eta.sqrt() <= iv.lo))
            .collect();
        Self { eta, kmax, times, intervals, resonant }
    }

    /// `k` with `t` in `I_{k,eta}` (smallest `k` at shared endpoints).
    pub fn interval_index(&self, t: f64) -> Option<u64> {
        if self.kmax == 0 || t > self.times[0] || t < self.times[self.kmax as usize] {
            return None;
        }
        // times are decreasing; first k with t_k <= t
        let k = self.times.partition_point(|&tk| tk > t);
        Some(k.max(1) as u64)
    }
}

#[inline]
fn b_coef(k: u64, eta: f64) -> f64 {
    let kf = k as f64;
    if k == 1 {
        1.0 - 1.0 / eta
    } else {
        2.0 * (kf - 1.0) / kf * (1.0 - kf * kf / eta)
    }
}

#[inline]
fn a_coef(k: u64, eta: f64) -> f64 {
    let kf = k as f64;
    2.0 * (kf + 1.0) / kf * (1.0 - kf * kf / eta)
}

/// Piecewise description of `w-bar(., eta)` and `w(., eta)` for one `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct WProfile {
    pub eta: f64,
    pub kappa: f64,
    pub schedule: CriticalSchedule,
    /// `log w-bar(t_{k,eta})`, `k = 0..=kmax`.
    log_at_tk: Vec<f64>,
}

impl WProfile {
    pub fn new(eta: f64, kappa: f64) -> Self {
        let schedule = CriticalSchedule::new(eta);
        let eta = schedule.eta;
        let mut log_at_tk = vec![0.0];
        for k in 1..=schedule.kmax {
            let kf = k as f64;
            let prev = log_at_tk[k as usize - 1];
            log_at_tk.push(prev + (1.0 + 2.0 * kappa) * (kf * kf / eta).ln());
        }
        Self { eta, kappa, schedule, log_at_tk }
    }

    pub fn log_w_bar(&self, t: f64) -> f64 {
        let sch = &self.schedule;
        if sch.kmax == 0 || t >= sch.times[0] {
            return 0.0;
        }
        let Some(k) = sch.interval_index(t) else {
            return self.log_at_tk[sch.kmax as usize];
        };
        let (eta, kappa) = (self.eta, self.kappa);
        let kf = k as f64;
        let prev = self.log_at_tk[k as usize - 1];
        let center = eta / kf;
        if t >= center {
            let b = b_coef(k, eta);
            kappa * ((kf * kf / eta) * (1.0 + b * (t - center))).ln() + prev
        } else {
            let a = a_coef(k, eta);
            -(1.0 + kappa) * (1.0 + a * (center - t)).ln() + kappa * (kf * kf / eta).ln() + prev
        }
    }

    /// Closed form of both extra-loss integrals.
    pub fn log_extra_loss(&self, t: f64) -> f64 {
        let (eta, kappa) = (self.eta, self.kappa);
        let r = eta.sqrt();
        let mut loss = kappa * (2.0 * r - t).max(0.0);
        if r <= 2.0 * eta {
            loss += kappa * eta * (1.0 / t.max(r) - 1.0 / (2.0 * eta)).max(0.0);
        }
        -loss
    }

    pub fn log_w(&self, t: f64) -> f64 {
        self.log_w_bar(t) + self.log_extra_loss(t)
    }

    /// `d_t w / w` from the piecewise closed form.
    pub fn dlog_w(&self, t: f64) -> f64 {
        let (eta, kappa) = (self.eta, self.kappa);
        let mut d = 0.0;
        if let Some(k) = self.schedule.interval_index(t) {
            let kf = k as f64;
            let center = eta / kf;
            if t >= center {
                let b = b_coef(k, eta);
                d += kappa * b / (1.0 + b * (t - center));
            } else {
                let a = a_coef(k, eta);
                d += (1.0 + kappa) * a / (1.0 + a * (center - t));
            }
        }
        let r = eta.sqrt();
        if t <= 2.0 * r {
            d += kappa;
        }
        if r <= t && t <= 2.0 * eta {
            d += kappa * eta / (t * t);
        }
        d
    }
}

/// Memo of [`WProfile`]s keyed by `(|eta|, kappa)`; concurrent reads.
#[derive(Debug, Default)]
pub struct WCache {
    map: RwLock<HashMap<(u64, u64), Arc<WProfile>>>,
}

impl WCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, eta: f64, kappa: f64) -> Arc<WProfile> {
        let key = (eta.abs().to_bits(), kappa.to_bits());
        if let Some(p) = self.map.read().expect("w cache poisoned").get(&key) {
            return p.clone();
        }
        let p = Arc::new(WProfile::new(eta, kappa));
        self.map
            .write()
            .expect("w cache poisoned")
            .entry(key)
            .or_insert(p)
            .clone()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("w cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn w_bar(t: f64, eta: f64, kappa: f64) -> f64 {
    WProfile::new(eta, kappa).log_w_bar(t).exp()
}

pub fn w_full(t: f64, eta: f64, kappa: f64) -> f64 {
    WProfile::new(eta, kappa).log_w(t).exp()
}

/// `log w_L(t, k, eta, l)` from the arctangent closed form.
pub fn log_w_l(t: f64, k: i64, eta: f64, l: i64, kappa: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let (kf, lf) = (k as f64, l as f64);
    let a = (kf * kf + lf * lf).sqrt();
    let sign = kf.signum();
    kappa * jap(lf) / a * sign * (((kf * t - eta) / a).atan() - ((kf - eta) / a).atan())
}

pub fn w_l_value(t: f64, k: i64, eta: f64, l: i64, kappa: f64) -> f64 {
    log_w_l(t, k, eta, l, kappa).exp()
}

/// `d_t w_L / w_L`.
pub fn dlog_w_l(t: f64, k: i64, eta: f64, l: i64, kappa: f64) -> f64 {
    let (kf, lf) = (k as f64, l as f64);
    let d = eta - kf * t;
    kappa * kf.abs() * jap(lf) / (kf * kf + lf * lf + d * d)
}

/// `kappa^{-1} int_0^inf d_t log w_L dt = <l>/|k,l| (pi/2 + sgn(k) atan(eta/|k,l|))`.
pub fn w_l_total(k: i64, eta: f64, l: i64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let a = ((k * k + l * l) as f64).sqrt();
    jap(l as f64) / a * (std::f64::consts::FRAC_PI_2 + (k as f64).signum() * (eta / a).atan())
}

/// `log w_L(t1)` by RK4 integration of `d_t log w_L` from `t = 1`.
pub fn log_w_l_ode(t1: f64, k: i64, eta: f64, l: i64, kappa: f64, steps: usize) -> f64 {
    let h = (t1 - 1.0) / steps as f64;
    let f = |t: f64| dlog_w_l(t, k, eta, l, kappa);
    (0..steps)
        .map(|i| {
            let t = 1.0 + i as f64 * h;
            h / 6.0 * (f(t) + 4.0 * f(t + 0.5 * h) + f(t + h))
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WlSweepRow {
    pub k: i64,
    pub eta: f64,
    pub l: i64,
    /// [`w_l_total`].
    pub total: f64,
    pub log_closed: f64,
    pub log_ode: f64,
}

/// Closed form against ODE integration on `[1, t1]` over a sample grid.
pub fn w_l_sweep(kappa: f64, ks: &[i64], etas: &[f64], ls: &[i64], t1: f64, steps: usize) -> Vec<WlSweepRow> {
    let mut cases = Vec::new();
    for &k in ks {
        for &eta in etas {
            for &l in ls {
                cases.push((k, eta, l));
            }
        }
    }
    cases
        .into_par_iter()
        .map(|(k, eta, l)| WlSweepRow {
            k,
            eta,
            l,
            total: w_l_total(k, eta, l),
            log_closed: log_w_l(t1, k, eta, l, kappa),
            log_ode: log_w_l_ode(t1, k, eta, l, kappa, steps),
        })
        .collect()
}

/// `D(t, eta) = nu |eta|^3 / (3 alpha) + nu (t^3 - 8|eta|^3)_+ / (24 alpha)`.
pub fn d_value(t: f64, eta: f64, nu: f64, alpha: f64) -> f64 {
    let e3 = eta.abs().powi(3);
    nu * e3 / (3.0 * alpha) + nu * (t.powi(3) - 8.0 * e3).max(0.0) / (24.0 * alpha)
}

/// Multiplier families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Q,
    One,
    Two,
    Three,
    /// `<eta,l>^2 A^Q_0`, used for the coordinate unknowns.
    A,
    Nu,
    Nu1,
    Nu2,
    Nu3,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Q,
        Family::One,
        Family::Two,
        Family::Three,
        Family::A,
        Family::Nu,
        Family::Nu1,
        Family::Nu2,
        Family::Nu3,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Q" | "q" => Family::Q,
            "1" => Family::One,
            "2" => Family::Two,
            "3" => Family::Three,
            "A" | "a" => Family::A,
            "nu" => Family::Nu,
            "nu1" => Family::Nu1,
            "nu2" => Family::Nu2,
            "nu3" => Family::Nu3,
            _ => return None,
        })
    }

    fn uses_w(&self) -> bool {
        matches!(self, Family::Q | Family::One | Family::Two | Family::Three | Family::A)
    }
}

/// Norm parameters with their admissibility constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierParams {
    pub s: f64,
    pub lambda0: f64,
    pub lambda_prime: f64,
    pub delta_lambda: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub mu: f64,
    pub alpha: u32,
    pub beta: f64,
    pub gamma: f64,
    pub delta1: f64,
    pub nu: f64,
}

impl Default for MultiplierParams {
    fn default() -> Self {
        Self {
            s: 0.75,
            lambda0: 1.0,
            lambda_prime: 0.1,
            delta_lambda: 0.05,
            sigma: 87.0,
            kappa: 4.0,
            mu: 0.0,
            alpha: 10,
            beta: 37.0,
            gamma: 80.0,
            delta1: 0.1,
            nu: 1e-3,
        }
    }
}

impl MultiplierParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.s > 0.5 && self.s < 1.0) {
            return bad(format!("s = {} must lie in (1/2, 1)", self.s));
        }
        if !(self.lambda0 > self.lambda_prime && self.lambda_prime > 0.0) {
            return bad(format!(
                "need lambda0 > lambda' > 0 (got {}, {})",
                self.lambda0, self.lambda_prime
            ));
        }
        if !(self.delta_lambda >= 0.0) {
            return bad(format!("delta_lambda = {} must be >= 0", self.delta_lambda));
        }
        if !(self.kappa > 2.0) {
            return bad(format!("kappa = {} must exceed 2", self.kappa));
        }
        if self.alpha < 10 {
            return bad(format!("alpha = {} must be >= 10", self.alpha));
        }
        let a = self.alpha as f64;
        if !(self.beta > 3.0 * a + 6.0) {
            return bad(format!("beta = {} must exceed 3 alpha + 6 = {}", self.beta, 3.0 * a + 6.0));
        }
        if !(self.gamma > self.beta + 3.0 * a + 12.0) {
            return bad(format!(
                "gamma = {} must exceed beta + 3 alpha + 12 = {}",
                self.gamma,
                self.beta + 3.0 * a + 12.0
            ));
        }
        if !(self.sigma > self.gamma + 6.0) {
            return bad(format!("sigma = {} must exceed gamma + 6 = {}", self.sigma, self.gamma + 6.0));
        }
        if !(self.delta1 > 0.0 && self.delta1 < 1.0) {
            return bad(format!("delta1 = {} must lie in (0, 1)", self.delta1));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu = {} must be finite and >= 0", self.mu));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return bad(format!("nu = {} must lie in (0, 1]", self.nu));
        }
        let floor = 0.5 * (self.lambda0 + self.lambda_prime);
        let inf = self.lambda_inf();
        if !(inf > floor) {
            return bad(format!(
                "delta_lambda = {} lets lambda(inf) = {inf:.6} drop to (lambda0 + lambda')/2 = {floor}",
                self.delta_lambda
            ));
        }
        Ok(())
    }

    pub fn new(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    /// Same parameters with `mu` from [`calibrate_mu`].
    pub fn with_calibrated_mu(mut self) -> Self {
        self.mu = calibrate_mu(self.kappa, &dyadic_etas(1e2, 1e6));
        self
    }

    #[inline]
    fn lambda_exponent(&self) -> f64 {
        (2.0 * self.s).min(1.5)
    }

    pub fn lambda_start(&self) -> f64 {
        0.75 * self.lambda0 + 0.25 * self.lambda_prime
    }

    /// `-d lambda/dt`.
    pub fn lambda_decay_rate(&self, t: f64) -> f64 {
        self.delta_lambda * jap(t).powf(-self.lambda_exponent())
    }

    pub fn lambda_inf(&self) -> f64 {
        let m = self.lambda_exponent();
        self.lambda_start() - self.delta_lambda * tail_integral(m, 1.0)
    }
}

/// `int_a^inf <tau>^{-m} d tau` for `m > 1`, by `tau = v^{-1/(m-1)}`,
/// which leaves a smooth integrand on a finite interval.
fn tail_integral(m: f64, a: f64) -> f64 {
    let p = 1.0 / (m - 1.0);
    let f = |v: f64| p * (1.0 + v.powf(2.0 * p)).powf(-0.5 * m);
    quadrature::integrate(f, 0.0, a.powf(-1.0 / p), 1e-14).integral
}

/// `lambda(t)` for `t >= 1`.
pub fn lambda_of_t(t: f64, p: &MultiplierParams) -> f64 {
    if p.delta_lambda == 0.0 || t <= 1.0 {
        return p.lambda_start();
    }
    let m = p.lambda_exponent();
    let used = quadrature::integrate(|x| jap(x).powf(-m), 1.0, t, 1e-13).integral;
    p.lambda_start() - p.delta_lambda * used
}

/// Logarithm of the multiplier `family` at `(t, k, eta, l)`.
pub fn log_a_value(family: Family, t: f64, k: i64, eta: f64, l: i64, p: &MultiplierParams) -> f64 {
    log_a_with(family, t, k, eta, l, p, lambda_of_t(t, p), &|e| WProfile::new(e, p.kappa).log_w(t))
}

fn log_a_with(
    family: Family,
    t: f64,
    k: i64,
    eta: f64,
    l: i64,
    p: &MultiplierParams,
    lambda: f64,
    log_w: &dyn Fn(f64) -> f64,
) -> f64 {
    let k = if family == Family::A { 0 } else { k };
    let kf = k.unsigned_abs() as f64;
    let mag = kf + eta.abs() + l.unsigned_abs() as f64;
    let el = jap(eta.abs() + l.unsigned_abs() as f64);
    let low = |pow: f64| (el.ln() - t.ln()).min(0.0) * pow;
    let gevrey = lambda * mag.powf(p.s);
    match family {
        Family::Nu | Family::Nu1 | Family::Nu2 | Family::Nu3 => {
            if k == 0 {
                return f64::NEG_INFINITY;
            }
            let base = gevrey + p.beta * jap(mag).ln()
                + p.alpha as f64 * jap(d_value(t, eta, p.nu, p.alpha as f64)).ln()
                - log_w_l(t, k, eta, l, p.kappa);
            base + match family {
                Family::Nu1 => -jap(t).ln() + low(1.0 + p.delta1),
                Family::Nu2 => low(p.delta1),
                Family::Nu3 => low(2.0),
                _ => 0.0,
            }
        }
        _ => {
            let q = gevrey + p.sigma * jap(mag).ln() + p.mu * eta.abs().sqrt()
                - log_w(eta.abs())
                - log_w_l(t, k, eta, l, p.kappa);
            let nz = k != 0;
            q + match family {
                Family::One => -jap(t).ln() + if nz { low(1.0 + p.delta1) } else { 0.0 },
                Family::Two => if nz { low(1.0) } else { 0.0 },
                Family::Three => if nz { low(2.0) } else { 0.0 },
                Family::A => 2.0 * el.ln(),
                _ => 0.0,
            }
        }
    }
}

pub fn a_value(family: Family, t: f64, k: i64, eta: f64, l: i64, p: &MultiplierParams) -> f64 {
    log_a_value(family, t, k, eta, l, p).exp()
}

/// Shear-frame `eta` of stored row `j` in plane `i`.
pub fn shear_eta(field: &SpectralVectorField, i: usize, j: usize) -> f64 {
    let k = field.grid.kx(i) as f64;
    let eta = field.grid.eta(j);
    match field.frame {
        Frame::Lab => eta + k * field.time,
        Frame::Shear { origin } => eta + k * origin,
    }
}

/// One frequency with its squared amplitude already multiplied by the
/// spectral measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedMode {
    pub k: i64,
    pub eta: f64,
    pub l: i64,
    pub weight: f64,
}

/// Modes of component `comp` with `d_eta` and Hermitian multiplicity folded
/// into the weight; `k < 0` partners are represented by their `k > 0` twin.
pub fn field_modes(field: &SpectralVectorField, comp: usize) -> Vec<WeightedMode> {
    let g = &field.grid;
    let d_eta = g.d_eta();
    let mut out = Vec::new();
    for (idx, z) in field.comps[comp].iter().enumerate() {
        let a2 = z.norm_sqr();
        if a2 == 0.0 {
            continue;
        }
        let (i, j, m) = g.unindex(idx);
        out.push(WeightedMode {
            k: g.kx(i),
            eta: shear_eta(field, i, j),
            l: g.lz(m),
            weight: d_eta * g.plane_weight(i) * a2,
        });
    }
    out
}

/// `ln ||e^{lambda|D|^s} <D>^sigma f||_2` over weighted modes.
pub fn log_gevrey_norm_modes(modes: &[WeightedMode], lambda: f64, sigma: f64, s: f64) -> f64 {
    let logs: Vec<f64> = modes
        .iter()
        .map(|m| {
            let mag = m.k.unsigned_abs() as f64 + m.eta.abs() + m.l.unsigned_abs() as f64;
            2.0 * (lambda * mag.powf(s) + sigma * jap(mag).ln()) + m.weight.ln()
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return f64::NEG_INFINITY;
    }
    0.5 * (top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln())
}

/// `||e^{lambda|D|^s} <D>^sigma f||_2` over weighted modes.
pub fn gevrey_norm_modes(modes: &[WeightedMode], lambda: f64, sigma: f64, s: f64) -> f64 {
    log_gevrey_norm_modes(modes, lambda, sigma, s).exp()
}

pub fn gevrey_norm(field: &SpectralVectorField, comp: usize, lambda: f64, sigma: f64, s: f64) -> f64 {
    gevrey_norm_modes(&field_modes(field, comp), lambda, sigma, s)
}

/// Squared norm and CK/dissipation functionals of `A f` for one family.
///
/// The multipliers overflow `f64` for realistic `sigma`, so every entry is a
/// mantissa: the functional itself is `entry * exp(log_scale)`.
/// `ck_lambda` is reported as `-lambda_dot ||.||^2 >= 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CkFunctionals {
    pub log_scale: f64,
    pub norm2: f64,
    pub ck_lambda: f64,
    pub ck_w: f64,
    pub ck_wl: f64,
    pub ck_l: f64,
    pub dissipation: f64,
}

impl CkFunctionals {
    /// `ln` of the squared norm.
    pub fn log_norm2(&self) -> f64 {
        self.norm2.ln() + self.log_scale
    }
}

pub fn ck_functionals_modes(
    modes: &[WeightedMode],
    t: f64,
    family: Family,
    p: &MultiplierParams,
    cache: &WCache,
) -> CkFunctionals {
    let lambda = lambda_of_t(t, p);
    let lam_rate = p.lambda_decay_rate(t);
    let logs: Vec<f64> = modes
        .iter()
        .map(|m| {
            let prof = cache.get(m.eta, p.kappa);
            2.0 * log_a_with(family, t, m.k, m.eta, m.l, p, lambda, &|_| prof.log_w(t)) + m.weight.ln()
        })
        .collect();
    let scale = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = CkFunctionals::default();
    if !scale.is_finite() {
        return out;
    }
    out.log_scale = scale;
    for (m, &lg) in modes.iter().zip(&logs) {
        if lg == f64::NEG_INFINITY {
            continue;
        }
        let a2f = (lg - scale).exp();
        let kf = if family == Family::A { 0 } else { m.k };
        let mag = kf.unsigned_abs() as f64 + m.eta.abs() + m.l.unsigned_abs() as f64;
        let d = m.eta - kf as f64 * t;
        let lap = (kf * kf) as f64 + d * d + (m.l * m.l) as f64;
        out.norm2 += a2f;
        out.dissipation += p.nu * lap * a2f;
        out.ck_lambda += lam_rate * mag.powf(p.s) * a2f;
        if family.uses_w() {
            out.ck_w += cache.get(m.eta, p.kappa).dlog_w(t) * a2f;
        }
        out.ck_wl += dlog_w_l(t, kf, m.eta, m.l, p.kappa) * a2f;
        if kf != 0 && t >= jap(m.eta.abs() + m.l.unsigned_abs() as f64) {
            out.ck_l += a2f / t;
        }
    }
    out
}

pub fn ck_functionals(field: &SpectralVectorField, comp: usize, family: Family, p: &MultiplierParams) -> CkFunctionals {
    ck_functionals_modes(&field_modes(field, comp), field.time, family, p, &WCache::new())
}

/// `n` dyadic samples `lo * 2^j <= hi`.
pub fn dyadic_etas(lo: f64, hi: f64) -> Vec<f64> {
    let mut v = Vec::new();
    let mut e = lo;
    while e <= hi * (1.0 + 1e-12) {
        v.push(e);
        e *= 2.0;
    }
    v
}

/// `mu := 1.1 * max 2 log(1/w(1,eta)) / sqrt(eta)` over the sample.
pub fn calibrate_mu(kappa: f64, etas: &[f64]) -> f64 {
    let worst = etas
        .iter()
        .map(|&e| 2.0 * -WProfile::new(e, kappa).log_w(1.0) / e.sqrt())
        .fold(0.0, f64::max);
    1.1 * worst
}

/// Least-squares fit `log(1/w(1,eta)) = a eta^p + b log(eta) + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gevrey2Fit {
    pub p: f64,
    pub a: f64,
    /// Coefficient of the `log(eta)` (polynomial) correction.
    pub b: f64,
    pub c: f64,
    pub r2: f64,
    /// `2a`, the Gevrey-2 radius lost.
    pub mu: f64,
}

pub fn gevrey2_fit(kappa: f64, etas: &[f64]) -> Result<Gevrey2Fit> {
    let ys: Vec<f64> = etas.iter().map(|&e| -WProfile::new(e, kappa).log_w(1.0)).collect();
    fit_power_with_log(etas, &ys, 0.2, 0.8)
}

/// Grid search over `p` of the linear model `a x^p + b log x + c`.
pub fn fit_power_with_log(xs: &[f64], ys: &[f64], p_lo: f64, p_hi: f64) -> Result<Gevrey2Fit> {
    if xs.len() < 4 || xs.len() != ys.len() {
        return Err(Error::Fit(format!("need >= 4 paired samples, got {}", xs.len())));
    }
    let n = xs.len();
    let y = DVector::from_column_slice(ys);
    let mean = ys.iter().sum::<f64>() / n as f64;
    let sst: f64 = ys.iter().map(|v| (v - mean).powi(2)).sum();
    let solve = |p: f64| -> Option<(f64, [f64; 3])> {
        let m = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => xs[i].powf(p),
            1 => xs[i].ln(),
            _ => 1.0,
        });
        let coef = m.clone().svd(true, true).solve(&y, 1e-14).ok()?;
        let sse = (&m * &coef - &y).norm_squared();
        Some((sse, [coef[0], coef[1], coef[2]]))
    };
    let steps = 4000;
    let mut best: Option<(f64, f64, [f64; 3])> = None;
    for i in 0..=steps {
        let p = p_lo + (p_hi - p_lo) * i as f64 / steps as f64;
        if let Some((sse, c)) = solve(p) {
            if best.map_or(true, |b| sse < b.0) {
                best = Some((sse, p, c));
            }
        }
    }
    let (sse, p, c) = best.ok_or_else(|| Error::Fit("least squares failed".into()))?;
    Ok(Gevrey2Fit {
        p,
        a: c[0],
        b: c[1],
        c: c[2],
        r2: if sst > 0.0 { 1.0 - sse / sst } else { 1.0 },
        mu: 2.0 * c[0],
    })
}

/// Band `B` such that `(d_t w / w) / (kappa/(1+|eta/k - t|) + kappa eta/t^2)`
/// lies in `[1/B, B]` on every resonant interval of the sampled `eta`s.
pub fn dtw_band(kappa: f64, etas: &[f64], samples_per_interval: usize) -> f64 {
    let mut band = 1.0f64;
    for &eta in etas {
        let prof = WProfile::new(eta, kappa);
        for (idx, res) in prof.schedule.resonant.iter().enumerate() {
            let Some(iv) = res else { continue };
            let k = (idx + 1) as f64;
            for s in 0..=samples_per_interval {
                let t = iv.lo + iv.width() * s as f64 / samples_per_interval as f64;
                let model = kappa / (1.0 + (eta / k - t).abs()) + kappa * eta / (t * t);
                let r = prof.dlog_w(t) / model;
                band = band.max(r).max(1.0 / r);
            }
        }
    }
    band
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_time_examples() {
        assert_eq!(critical_time(0, 7.0), Some(14.0));
        assert_eq!(critical_time(1, 100.0), Some(75.0));
        assert!((100.0 / 2.0 + 100.0 / 4.0 - 75.0f64).abs() < 1e-12);
        assert_eq!(critical_interval(2, -9.0), None);
        assert_eq!(critical_time(11, 100.0), None);
    }

    #[test]
    fn both_printed_forms_agree() {
        for eta in [4.0, 17.5, 100.0, 12345.0] {
            for k in 1..=kmax(eta) {
                let kf = k as f64;
                let alt = eta / (kf + 1.0) + eta / (2.0 * kf * (kf + 1.0));
                let t = critical_time(k as i64, eta).unwrap();
                assert!((t - alt).abs() <= 1e-12 * t);
            }
        }
    }

    #[test]
    fn resonant_examples() {
        let iv = resonant_interval(4, 100.0).unwrap();
        assert!((iv.lo - 22.5).abs() < 1e-12);
        assert_eq!(iv.hi, critical_time(3, 100.0).unwrap());
        assert!(resonant_interval(5, 100.0).is_none());
        assert!((1..=1).all(|k| resonant_interval(k, 3.0).is_none()));
    }

    #[test]
    fn w_bar_examples() {
        assert_eq!(w_bar(128.0, 64.0, 4.0), 1.0);
        assert_eq!(w_bar(500.0, 64.0, 4.0), 1.0);
        let v = w_bar(64.0, 64.0, 4.0);
        assert!((v - (1.0f64 / 64.0).powi(4)).abs() < 1e-12 * v);
        assert!((v - 5.96e-8).abs() < 1e-10);
        let b = b_coef(1, 64.0);
        assert!(((1.0 / 64.0) * (1.0 + b * 64.0) - 1.0f64).abs() < 1e-14);
    }

    #[test]
    fn recursion_identities_hold() {
        let (eta, kappa) = (1000.0, 3.0);
        let p = WProfile::new(eta, kappa);
        for k in 1..=p.schedule.kmax {
            let kf = k as f64;
            let prev = p.log_w_bar(t_k(k - 1, eta));
            let mid = p.log_w_bar(eta / kf);
            let end = p.log_w_bar(t_k(k, eta));
            let r = (kf * kf / eta).ln();
            assert!((mid - prev - kappa * r).abs() < 1e-10);
            assert!((end - prev - (1.0 + 2.0 * kappa) * r).abs() < 1e-10);
        }
    }

    #[test]
    fn w_full_examples() {
        assert_eq!(w_full(300.0, 100.0, 4.0), 1.0);
        let v = w_full(0.0, 1.0, 4.0);
        assert!((v - (-2.5f64 * 4.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn w_l_examples() {
        assert_eq!(w_l_value(7.0, 0, 3.0, 2, 4.0), 1.0);
        let v = w_l_value(1e12, 1, 0.0, 0, 4.0);
        assert!((v - std::f64::consts::PI.exp()).abs() < 1e-9);
        assert!((w_l_value(1.0, 3, 5.0, 2, 4.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn d_examples() {
        assert!((d_value(1.0, 2.0, 0.01, 10.0) - 0.08 / 30.0).abs() < 1e-15);
        assert!((d_value(6.0, 2.0, 0.01, 10.0) - (0.08 / 30.0 + 0.01 * 152.0 / 240.0)).abs() < 1e-15);
        let kink = d_value(4.0, 2.0, 0.01, 10.0);
        assert!((d_value(4.0 + 1e-9, 2.0, 0.01, 10.0) - kink).abs() < 1e-10);
    }

    #[test]
    fn lambda_examples() {
        let p = MultiplierParams { s: 0.8, delta_lambda: 0.05, ..Default::default() };
        assert_eq!(lambda_of_t(1.0, &p), 0.775);
        // independent quadrature: int_1^inf (1+t^2)^{-3/4} dt = 1.7911613381111775
        let expect = 0.775 - 0.05 * 1.791_161_338_111_177_5;
        assert!((p.lambda_inf() - expect).abs() < 1e-10, "{}", p.lambda_inf());
        assert!((lambda_of_t(1e9, &p) - expect).abs() < 1e-5);
        let q = MultiplierParams { delta_lambda: 0.0, ..p };
        assert_eq!(lambda_of_t(50.0, &q), 0.775);
    }

    #[test]
    fn params_validation() {
        assert!(MultiplierParams::default().validate().is_ok());
        let bad = MultiplierParams { beta: 36.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = MultiplierParams { delta_lambda: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = MultiplierParams { kappa: 2.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn a_examples() {
        let p = MultiplierParams::default();
        assert!((a_value(Family::Q, 1.0, 0, 0.0, 0, &p) - 1.0).abs() < 1e-15);
        let (t, eta, l) = (40.0, 3.0, 2);
        let el = jap(5.0);
        let r = log_a_value(Family::Three, t, 2, eta, l, &p) - log_a_value(Family::Two, t, 2, eta, l, &p);
        assert!((r - (el / t).ln()).abs() < 1e-12);
        assert_eq!(a_value(Family::Nu3, 5.0, 0, 3.0, 1, &p), 0.0);
    }

    #[test]
    fn gevrey_single_mode() {
        let m = [WeightedMode { k: 1, eta: 0.0, l: 0, weight: 1.0 }];
        let v = gevrey_norm_modes(&m, 0.7, 3.0, 0.6);
        assert!((v - 0.7f64.exp() * 2f64.powf(1.5)).abs() < 1e-12 * v);
    }
}
