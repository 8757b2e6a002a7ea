//! Weakly nonlinear toy model of resonant/non-resonant interactions near a
//! critical time, with all implicit constants set to one.
//!
//! Unknowns are nonnegative amplitude envelopes at a fixed `(eta, l)`:
//! the resonant pair `Q2_k, Q3_k`, the non-resonant pair `Q2_k', Q3_k'` and
//! the zero modes `Q2_0, Q3_0`. Switching off groups of terms recovers the
//! intermediate models (resonant pair only, no zero-mode forcing, inviscid).

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::multipliers::{resonant_interval, WProfile};

/// Which term groups of the full model are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToySwitches {
    /// Evolve the non-resonant pair `Q2_k', Q3_k'`.
    pub nonresonant: bool,
    /// Evolve the zero modes `Q2_0, Q3_0`.
    pub zero_modes: bool,
    pub dissipation: bool,
}

impl Default for ToySwitches {
    fn default() -> Self {
        Self { nonresonant: true, zero_modes: true, dissipation: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    pub eps: f64,
    pub c0: f64,
    pub nu: f64,
    pub alpha: u32,
    pub k: i64,
    pub kprime: i64,
    pub eta: f64,
    pub l: i64,
    #[serde(default)]
    pub switches: ToySwitches,
}

impl ToyParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.eps >= 0.0 && self.c0 >= 0.0 && self.nu >= 0.0) {
            return bad("eps, c0, nu must be nonnegative".into());
        }
        if self.k < 1 || self.kprime < 1 || (self.k - self.kprime).abs() != 1 {
            return bad(format!("need k, k' >= 1 with |k - k'| = 1 (got {}, {})", self.k, self.kprime));
        }
        if !(self.eta > 0.0) || self.l < 0 {
            return bad(format!("need eta > 0 and l >= 0 (got {}, {})", self.eta, self.l));
        }
        Ok(())
    }

    /// The small-data regime `eps <= c0 nu`.
    pub fn below_threshold(&self) -> bool {
        self.eps <= self.c0 * self.nu
    }

    /// Time at which `max(eps t, c0)` switches branch.
    pub fn kink_time(&self) -> Option<f64> {
        (self.eps > 0.0).then(|| self.c0 / self.eps)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ToyState {
    pub q2k: f64,
    pub q2kp: f64,
    pub q3kp: f64,
    pub q3k: f64,
    pub q20: f64,
    pub q30: f64,
}

impl ToyState {
    pub fn splat(v: f64) -> Self {
        Self::from_array([v; 6])
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.q2k, self.q2kp, self.q3kp, self.q3k, self.q20, self.q30]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { q2k: a[0], q2kp: a[1], q3kp: a[2], q3k: a[3], q20: a[4], q30: a[5] }
    }

    pub fn max_component(&self) -> f64 {
        self.to_array().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    fn axpy(self, h: f64, d: ToyState) -> ToyState {
        let (a, b) = (self.to_array(), d.to_array());
        ToyState::from_array(std::array::from_fn(|i| a[i] + h * b[i]))
    }
}

pub fn toy_rhs(q: &ToyState, t: f64, p: &ToyParams) -> ToyState {
    let sw = p.switches;
    let k = p.k as f64;
    let kp = p.kprime as f64;
    let shift = (p.eta - k * t).abs();
    let lap = k * k + shift * shift;
    let kernel = k / (k + shift);
    let drive = (p.eps * t).max(p.c0);
    let nut3 = p.nu * t.powi(3);
    let damp = (1.0 + nut3 * nut3).powf(-0.5 * p.alpha as f64);
    let visc = if sw.dissipation { p.nu * lap } else { 0.0 };
    let visc0 = if sw.dissipation { p.nu * p.eta * p.eta } else { 0.0 };

    let mut d = ToyState {
        q2k: drive * kernel * q.q3k - visc * q.q2k,
        q3k: kernel * (q.q3k + q.q2k) - visc * q.q3k,
        ..Default::default()
    };
    if sw.nonresonant {
        let jkt = (1.0 + kp * kp + t * t).sqrt();
        d.q2kp = drive * kp / jkt * q.q3kp - visc * q.q2kp;
        d.q3kp = p.eps * t.powi(3) * damp * q.q2k / lap - visc * q.q3kp;
    }
    if sw.zero_modes {
        d.q20 = p.eps * q.q30 + p.eps * t * t * damp * q.q2k / lap - visc0 * q.q20;
        d.q30 = p.eps * q.q30 + p.eps * t.powi(3) * damp * q.q2k / lap - visc0 * q.q30;
    }
    d
}

fn rk4_step(q: ToyState, t: f64, h: f64, p: &ToyParams) -> ToyState {
    let k1 = toy_rhs(&q, t, p);
    let k2 = toy_rhs(&q.axpy(0.5 * h, k1), t + 0.5 * h, p);
    let k3 = toy_rhs(&q.axpy(0.5 * h, k2), t + 0.5 * h, p);
    let k4 = toy_rhs(&q.axpy(h, k3), t + h, p);
    let (a, b1, b2, b3, b4) = (q.to_array(), k1.to_array(), k2.to_array(), k3.to_array(), k4.to_array());
    ToyState::from_array(std::array::from_fn(|i| {
        a[i] + h / 6.0 * (b1[i] + 2.0 * b2[i] + 2.0 * b3[i] + b4[i])
    }))
}

/// RK4 trajectory on `[t0, t1]` with steps of at most `dt`; steps never
/// straddle the kink of `max(eps t, c0)`.
pub fn integrate_toy(p: &ToyParams, t0: f64, t1: f64, init: ToyState, dt: f64) -> Result<Vec<(f64, ToyState)>> {
    p.validate()?;
    if !(t0 >= 1.0 && t1 >= t0) {
        return Err(Error::InvalidParameter(format!("need 1 <= t0 <= t1 (got {t0}, {t1})")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let mut breaks = vec![t0];
    if let Some(tk) = p.kink_time() {
        if tk > t0 && tk < t1 {
            breaks.push(tk);
        }
    }
    breaks.push(t1);
    let mut out = vec![(t0, init)];
    let mut q = init;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = ((b - a) / dt).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        for i in 0..n {
            let t = a + i as f64 * h;
            q = rk4_step(q, t, h, p);
            if !q.to_array().iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { t: t + h, what: "toy state".into() });
            }
            out.push((if i + 1 == n { b } else { t + h }, q));
        }
    }
    Ok(out)
}

/// Growth of `d_t w = w / (1 + |t - eta/k|)` across
/// `[eta/k - eta/k^2, eta/k + eta/k^2]`: exactly `(1 + eta/k^2)^2`.
pub fn interval_growth_ratio(eta: f64, k: u64) -> Result<f64> {
    let k2 = (k * k) as f64;
    if k == 0 || k2 > eta {
        return Err(Error::InvalidParameter(format!("need 1 <= k^2 <= eta (k={k}, eta={eta})")));
    }
    Ok((1.0 + eta / k2).powi(2))
}

/// `log prod_{k=1}^{sqrt eta} (eta/k^2) = sqrt(eta) log(eta) - 2 log Gamma(sqrt(eta) + 1)`.
pub fn stirling_total_growth(eta: f64) -> f64 {
    let r = eta.sqrt();
    r * eta.ln() - 2.0 * ln_gamma(r + 1.0)
}

/// Smallest `K` with `max_i Q_i(t) <= K Q(start) w(t,eta)/w(start,eta)` over
/// the resonant interval `I_{k,eta}`, starting from `init` at its left end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MajorantReport {
    pub eta: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub k_const: f64,
    /// Raw growth of the trajectory's largest component over the interval.
    pub growth: f64,
}

pub fn supersolution_constant(p: &ToyParams, init: ToyState, kappa: f64, dt: f64) -> Result<MajorantReport> {
    let iv = resonant_interval(p.k, p.eta).ok_or_else(|| {
        Error::InvalidParameter(format!("resonant interval of (k={}, eta={}) is empty", p.k, p.eta))
    })?;
    let traj = integrate_toy(p, iv.lo.max(1.0), iv.hi, init, dt)?;
    let prof = WProfile::new(p.eta, kappa);
    let (t0, q0) = traj[0];
    let base = q0.max_component();
    let lw0 = prof.log_w(t0);
    let mut k_const = 0.0f64;
    for (t, q) in &traj {
        let env = base * (prof.log_w(*t) - lw0).exp();
        k_const = k_const.max(q.max_component() / env);
    }
    Ok(MajorantReport {
        eta: p.eta,
        t_start: t0,
        t_end: iv.hi,
        k_const,
        growth: traj.last().map(|(_, q)| q.max_component()).unwrap_or(base) / base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ToyParams {
        ToyParams {
            eps: 1e-4,
            c0: 0.1,
            nu: 1e-2,
            alpha: 10,
            k: 1,
            kprime: 2,
            eta: 50.0,
            l: 1,
            switches: ToySwitches::default(),
        }
    }

    #[test]
    fn zero_state_has_zero_tendency() {
        let d = toy_rhs(&ToyState::default(), 3.0, &params());
        assert_eq!(d, ToyState::default());
    }

    #[test]
    fn resonance_peak_kernel() {
        let p = ToyParams { switches: ToySwitches { dissipation: false, ..Default::default() }, ..params() };
        let q = ToyState { q3k: 1.0, ..Default::default() };
        let t = p.eta / p.k as f64;
        let d = toy_rhs(&q, t, &p);
        assert!((d.q2k - (p.eps * t).max(p.c0)).abs() < 1e-15);
    }

    #[test]
    fn nonresonant_kernel_is_strictly_smaller() {
        let p = ToyParams { switches: ToySwitches { dissipation: false, ..Default::default() }, ..params() };
        let q = ToyState { q3kp: 1.0, ..Default::default() };
        for t in [1.0, 2.0, 10.0, 60.0] {
            let d = toy_rhs(&q, t, &p);
            assert!(d.q2kp < (p.eps * t).max(p.c0));
        }
    }

    #[test]
    fn decoupled_dissipation_matches_quadrature() {
        let p = ToyParams { eps: 0.0, c0: 0.0, nu: 1e-2, eta: 0.0001, ..params() };
        let init = ToyState { q2k: 1.0, ..Default::default() };
        let traj = integrate_toy(&p, 1.0, 5.0, init, 1e-3).unwrap();
        let (t, q) = *traj.last().unwrap();
        // int_1^t (1 + (eta - tau)^2) d tau
        let e = p.eta;
        let integral = (t - 1.0) + ((t - e).powi(3) - (1.0 - e).powi(3)) / 3.0;
        assert!((q.q2k - (-p.nu * integral).exp()).abs() < 1e-10);
    }

    #[test]
    fn pure_decay_is_monotone() {
        let p = ToyParams { eps: 0.0, c0: 0.0, ..params() };
        let traj = integrate_toy(&p, 1.0, 20.0, ToyState::splat(1.0), 1e-2).unwrap();
        for w in traj.windows(2) {
            let (a, b) = (w[0].1.to_array(), w[1].1.to_array());
            // Q3_k has the self-coupling kernel; everything else only decays
            for i in [0, 1, 2, 4, 5] {
                assert!(b[i] <= a[i] + 1e-14);
            }
        }
    }

    #[test]
    fn growth_ratio_examples() {
        assert_eq!(interval_growth_ratio(1.0, 1).unwrap(), 4.0);
        assert_eq!(interval_growth_ratio(100.0, 1).unwrap(), 10201.0);
        assert!(interval_growth_ratio(100.0, 11).is_err());
        let v: Vec<f64> = (1..=10).map(|k| interval_growth_ratio(100.0, k).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn stirling_examples() {
        assert!((stirling_total_growth(4.0) - 4f64.ln()).abs() < 1e-12);
        assert!(stirling_total_growth(1.0).abs() < 1e-12);
    }

    #[test]
    fn kink_is_a_step_boundary() {
        let p = ToyParams { eps: 0.05, c0: 0.1, ..params() };
        let traj = integrate_toy(&p, 1.0, 3.0, ToyState::splat(1.0), 0.3).unwrap();
        assert!(traj.iter().any(|(t, _)| (*t - 2.0).abs() < 1e-15));
    }
}
