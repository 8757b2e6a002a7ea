//! Configuration, orchestration and persistence of experiments.
//!
//! A run is validated up front, computed entirely in memory and only then
//! written out (CSV tables, optional checkpoints and a JSON manifest), so an
//! invalid configuration or a numerical failure never leaves partial output.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::coord::{jacobians_from_c, norm_2d, psi_from_history, quadrature_weights, CgInput, CoordSolver, CoordState, U0Sample};
use crate::diagnostics::{
    component_energies, energy_budget, fit_power_law, forcing_series, linear_regression, neq_norm, sobolev_norm,
    sobolev_norm_filtered, BudgetTracker, TimeSeries, SIGMA_PRIME,
};
use crate::error::{Error, Result};
use crate::initial::{shaped_initial_data, Envelope, Profile};
use crate::linear::{linear_trajectory, LinearMode};
use crate::multipliers::{calibrate_mu, dyadic_etas, gevrey2_fit, w_l_sweep, MultiplierParams, WProfile};
use crate::solver::{remap_shear, SimState, Solver, SolverOptions};
use crate::spectral::{leray_project, Fft3, Frame, GridSpec, SpectralVectorField};
use crate::streak::{lift_up_reference, norm2_2d, streak_from_3d, StreakSolver, StreakState};
use crate::toy::{stirling_total_growth, supersolution_constant, ToyParams, ToyState, ToySwitches};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Linear,
    Streak,
    Sim3d,
    Toy,
    MultiplierTable,
    Coord,
}

impl Kind {
    pub const ALL: [Kind; 6] = [Kind::Linear, Kind::Streak, Kind::Sim3d, Kind::Toy, Kind::MultiplierTable, Kind::Coord];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Linear => "linear",
            Kind::Streak => "streak",
            Kind::Sim3d => "sim3d",
            Kind::Toy => "toy",
            Kind::MultiplierTable => "multiplier-table",
            Kind::Coord => "coord",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown kind {s:?}")))
    }
}

/// Accepts a number or a multiple of pi written as `"4pi"` / `"4*pi"` / `"pi"`.
fn de_length<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(s) => parse_pi_multiple(&s).ok_or_else(|| serde::de::Error::custom(format!("bad length {s:?}"))),
    }
}

fn parse_pi_multiple(s: &str) -> Option<f64> {
    let t = s.trim().to_ascii_lowercase();
    let head = t.strip_suffix("pi")?.trim().trim_end_matches('*').trim();
    let c = if head.is_empty() { 1.0 } else { head.parse::<f64>().ok()? };
    Some(c * std::f64::consts::PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    #[serde(deserialize_with = "de_length")]
    pub ly: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { nx: 64, ny: 128, nz: 64, ly: 4.0 * std::f64::consts::PI }
    }
}

impl GridConfig {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.nx, self.ny, self.nz, self.ly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub profile: Profile,
    pub envelope: Envelope,
    /// `L^2` amplitude of the data; defaults to `eps`.
    pub amplitude: Option<f64>,
    /// Restrict the support to these `(k, eta, l)`.
    pub modes: Option<Vec<[f64; 3]>>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { profile: Profile::Random, envelope: Envelope::Bandlimited { kappa0: 2.0 }, amplitude: None, modes: None }
    }
}

/// A single Fourier mode for `kind = "linear"`; `u` holds `(re, im)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearConfig {
    pub k: i64,
    pub eta: f64,
    pub l: i64,
    pub u: [[f64; 2]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub alpha: u32,
    pub k: i64,
    pub kprime: i64,
    pub l: i64,
    pub etas: Vec<f64>,
    pub kappa: f64,
    /// Common initial value of all six envelopes.
    pub init: f64,
    pub dt: f64,
    pub switches: ToySwitches,
    /// Dyadic range of `eta` for the cumulative-growth table.
    pub growth_etas: [f64; 2],
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            alpha: 10,
            k: 1,
            kprime: 2,
            l: 1,
            etas: vec![25.0, 100.0, 400.0],
            kappa: 1.0,
            init: 1.0,
            dt: 1e-3,
            switches: ToySwitches::default(),
            growth_etas: [1e2, 1e6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiplierTableConfig {
    pub eta_lo: f64,
    pub eta_hi: f64,
    pub kappa: f64,
    pub wl_ks: Vec<i64>,
    pub wl_etas: Vec<f64>,
    pub wl_ls: Vec<i64>,
    pub wl_t1: f64,
    pub wl_steps: usize,
    pub params: Option<MultiplierParams>,
}

impl Default for MultiplierTableConfig {
    fn default() -> Self {
        Self {
            eta_lo: 1e2,
            eta_hi: 1e6,
            kappa: 1.0,
            wl_ks: vec![-3, -1, 1, 2, 5],
            wl_etas: vec![-200.0, -10.0, 0.0, 0.5, 10.0, 200.0],
            wl_ls: vec![-4, 0, 1, 3, 20],
            wl_t1: 150.0,
            wl_steps: 100_000,
            params: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoordConfig {
    /// Window of the power-law fit of `||psi - u0^1||`.
    pub fit_window: [f64; 2],
}

impl Default for CoordConfig {
    fn default() -> Self {
        Self { fit_window: [5.0, f64::INFINITY] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// May be left out of the file and supplied on the command line.
    pub kind: Option<Kind>,
    pub grid: GridConfig,
    pub nu: f64,
    pub eps: f64,
    pub c0: f64,
    pub seed: u64,
    pub t_end: f64,
    pub dt: f64,
    pub dt_out: f64,
    /// Not part of the parameter hash.
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub nonlinear: bool,
    pub cfl_limit: f64,
    /// Remap period of the shear frame (a multiple of `2 pi / Ly`).
    pub remap_every: Option<f64>,
    /// Times at which the full state is kept and checkpointed.
    pub snapshots: Vec<f64>,
    pub initial: InitialConfig,
    pub linear: Option<LinearConfig>,
    pub toy: Option<ToyConfig>,
    pub multipliers: Option<MultiplierTableConfig>,
    pub coord: Option<CoordConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            grid: GridConfig::default(),
            nu: 1e-3,
            eps: 1e-5,
            c0: 1.0,
            seed: 0,
            t_end: 10.0,
            dt: 0.05,
            dt_out: 1.0,
            output_dir: None,
            nonlinear: true,
            cfl_limit: 1.0,
            remap_every: None,
            snapshots: Vec::new(),
            initial: InitialConfig::default(),
            linear: None,
            toy: None,
            multipliers: None,
            coord: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn kind(&self) -> Result<Kind> {
        self.kind.ok_or_else(|| Error::Config("no experiment kind given".into()))
    }

    /// `eps <= c0 nu`, the small-data regime.
    pub fn below_threshold(&self) -> bool {
        self.eps <= self.c0 * self.nu
    }

    pub fn regime(&self) -> &'static str {
        if self.below_threshold() {
            "below-threshold"
        } else {
            "above-threshold"
        }
    }

    /// SHA-256 of the canonical JSON form (everything except `output_dir`).
    pub fn param_hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canon.as_bytes()))
    }

    /// Grid used by the run (streak runs ignore `nx`).
    pub fn grid_spec(&self) -> Result<GridSpec> {
        match self.kind()? {
            Kind::Streak => GridSpec::new(8, self.grid.ny, self.grid.nz, self.grid.ly),
            _ => self.grid.spec(),
        }
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let kind = self.kind()?;
        for (name, v) in [("nu", self.nu), ("eps", self.eps), ("c0", self.c0)] {
            if !(v.is_finite() && v >= 0.0) {
                return cfg(format!("{name} = {v} must be finite and nonnegative"));
            }
        }
        let timed = matches!(kind, Kind::Linear | Kind::Streak | Kind::Sim3d | Kind::Coord);
        if timed {
            if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.t_end > 0.0 && self.t_end.is_finite()) {
                return cfg(format!("need dt > 0 and t_end > 0 (got {}, {})", self.dt, self.t_end));
            }
            steps_of(self.t_end, self.dt, "t_end")?;
            steps_of(self.dt_out, self.dt, "dt_out")?;
            for &s in &self.snapshots {
                if s > self.t_end {
                    return cfg(format!("snapshot t = {s} beyond t_end"));
                }
                if s > 0.0 {
                    steps_of(s, self.dt, "snapshot")?;
                }
            }
            if !(self.cfl_limit > 0.0) {
                return cfg(format!("cfl_limit = {} must be positive", self.cfl_limit));
            }
        }
        if matches!(kind, Kind::Streak | Kind::Sim3d | Kind::Coord) {
            self.grid_spec().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(p) = self.remap_every {
            steps_of(p, self.dt, "remap_every")?;
            let lattice = p * self.grid.ly / std::f64::consts::TAU;
            if (lattice - lattice.round()).abs() > 1e-9 || lattice.round() < 1.0 {
                return cfg(format!("remap_every = {p} is not a multiple of 2 pi / Ly"));
            }
        }
        if let Some(a) = self.initial.amplitude {
            if !(a.is_finite() && a >= 0.0) {
                return cfg(format!("amplitude = {a}"));
            }
        }
        match kind {
            Kind::Linear => {
                let Some(l) = &self.linear else { return cfg("kind linear needs a [linear] section".into()) };
                if !l.eta.is_finite() || l.u.iter().flatten().any(|v| !v.is_finite()) {
                    return cfg("non-finite linear mode".into());
                }
            }
            Kind::Streak => {
                if matches!(self.initial.profile, Profile::Cascade | Profile::Mixing) {
                    return cfg(format!("profile {:?} has no streak part", self.initial.profile));
                }
            }
            Kind::Coord => {
                if self.t_end <= 1.0 {
                    return cfg("coord runs need t_end > 1".into());
                }
                steps_of(1.0, self.dt, "t = 1")?;
            }
            Kind::Toy => {
                let t = self.toy.clone().unwrap_or_default();
                if t.etas.is_empty() || !(t.dt > 0.0) || !(t.kappa > 0.0) || !(t.init > 0.0) {
                    return cfg("toy needs etas, dt > 0, kappa > 0, init > 0".into());
                }
                for &eta in &t.etas {
                    self.toy_params(&t, eta).validate().map_err(|e| Error::Config(e.to_string()))?;
                }
            }
            Kind::MultiplierTable => {
                let m = self.multipliers.clone().unwrap_or_default();
                if !(m.eta_lo > 0.0 && m.eta_hi >= m.eta_lo && m.kappa > 0.0 && m.wl_t1 > 1.0 && m.wl_steps > 0) {
                    return cfg("multiplier table needs 0 < eta_lo <= eta_hi, kappa > 0, wl_t1 > 1".into());
                }
                if let Some(p) = m.params {
                    p.validate().map_err(|e| Error::Config(e.to_string()))?;
                }
            }
            Kind::Sim3d => {}
        }
        Ok(())
    }

    fn toy_params(&self, t: &ToyConfig, eta: f64) -> ToyParams {
        ToyParams {
            eps: self.eps,
            c0: self.c0,
            nu: self.nu,
            alpha: t.alpha,
            k: t.k,
            kprime: t.kprime,
            eta,
            l: t.l,
            switches: t.switches,
        }
    }
}

/// Number of `dt` steps in `span`; it must be a whole number.
fn steps_of(span: f64, dt: f64, what: &str) -> Result<usize> {
    let n = span / dt;
    if !(n.is_finite() && n >= 1.0 - 1e-9 && (n - n.round()).abs() <= 1e-9 * n.max(1.0)) {
        return Err(Error::Config(format!("{what} = {span} is not a whole number of steps dt = {dt}")));
    }
    Ok(n.round() as usize)
}

/// A CSV table held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }

    /// Shortest round-trip formatting, so output is byte-stable.
    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

/// Everything a run produces, before anything touches the disk.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    /// Named states to checkpoint (`final`, `snapshot_t...`).
    pub states: Vec<(String, SimState)>,
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn state(&self, name: &str) -> Option<&SimState> {
        self.states.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.summary.get(key).and_then(Value::as_f64)
    }
}

pub fn snapshot_name(t: f64) -> String {
    format!("snapshot_t{t:010.4}")
}

/// Runs a validated configuration in memory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut out = match cfg.kind()? {
        Kind::Linear => run_linear(cfg)?,
        Kind::Streak => run_streak(cfg)?,
        Kind::Sim3d => run_sim3d(cfg)?,
        Kind::Toy => run_toy(cfg)?,
        Kind::MultiplierTable => run_multiplier_table(cfg)?,
        Kind::Coord => run_coord(cfg)?,
    };
    out.summary.insert("regime".into(), json!(cfg.regime()));
    Ok(out)
}

/// Writes tables, checkpoints and `manifest.json` into `dir`.
pub fn write_outputs(cfg: &ExperimentConfig, out: &RunOutput, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut files = Map::new();
    for t in &out.tables {
        let name = format!("{}.csv", t.name);
        let body = t.to_csv();
        fs::write(dir.join(&name), &body)?;
        files.insert(name, json!(hex::encode(Sha256::digest(body.as_bytes()))));
    }
    for (name, s) in &out.states {
        let name = format!("{name}.bin");
        let path = dir.join(&name);
        write_checkpoint(s, &path)?;
        files.insert(name, json!(hex::encode(Sha256::digest(fs::read(&path)?))));
    }
    let manifest = json!({
        "kind": cfg.kind()?.name(),
        "param_hash": cfg.param_hash(),
        "regime": cfg.regime(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "files": files,
        "summary": out.summary,
    });
    let path = dir.join("manifest.json");
    let mut f = fs::File::create(&path)?;
    f.write_all(serde_json::to_string_pretty(&manifest).expect("json").as_bytes())?;
    f.write_all(b"\n")?;
    Ok(path)
}

fn run_linear(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let lc = cfg.linear.as_ref().expect("validated");
    let mut mode = LinearMode {
        k: lc.k,
        eta: lc.eta,
        l: lc.l,
        uhat: std::array::from_fn(|c| C64::new(lc.u[c][0], lc.u[c][1])),
        nu: cfg.nu,
        t: 0.0,
    };
    let kv = mode.wavevector();
    if kv.norm2() > 0.0 {
        mode.uhat = leray_project(mode.uhat, &kv);
    }
    let traj = linear_trajectory(&mode, cfg.t_end, cfg.dt, cfg.dt_out)?;
    let mut t = Table::new("linear", &["t", "u1", "u2", "u3", "q2", "div_residual"]);
    for s in &traj {
        t.push(vec![s.t, s.u1, s.u2, s.u3, s.q2, s.div_residual]);
    }
    let mut out = RunOutput { tables: vec![t], ..Default::default() };
    let max_div = traj.iter().map(|s| s.div_residual).fold(0.0, f64::max);
    out.summary.insert("max_div_residual".into(), json!(max_div));
    Ok(out)
}

fn initial_field(cfg: &ExperimentConfig, grid: GridSpec) -> Result<SpectralVectorField> {
    let modes: Option<Vec<(i64, f64, i64)>> =
        cfg.initial.modes.as_ref().map(|v| v.iter().map(|m| (m[0] as i64, m[1], m[2] as i64)).collect());
    shaped_initial_data(
        cfg.seed,
        grid,
        cfg.initial.amplitude.unwrap_or(cfg.eps),
        cfg.initial.envelope,
        cfg.initial.profile,
        modes.as_deref(),
    )
}

fn run_streak(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let grid = cfg.grid_spec()?;
    let profile = if cfg.initial.profile == Profile::Random { Profile::Streak } else { cfg.initial.profile };
    let modes: Option<Vec<(i64, f64, i64)>> =
        cfg.initial.modes.as_ref().map(|v| v.iter().map(|m| (m[0] as i64, m[1], m[2] as i64)).collect());
    let amp = cfg.initial.amplitude.unwrap_or(cfg.eps);
    let f = shaped_initial_data(cfg.seed, grid, amp, cfg.initial.envelope, profile, modes.as_deref())?;
    let init = streak_from_3d(&f, cfg.nu);
    let solver = StreakSolver::new(grid);
    let n = steps_of(cfg.t_end, cfg.dt, "t_end")?;
    let every = steps_of(cfg.dt_out, cfg.dt, "dt_out")?;
    let mut table = Table::new("streak", &["t", "E1", "E23", "liftup_dev"]);
    let row = |s: &StreakState| {
        let r = lift_up_reference(&init, s.time, cfg.nu);
        let d: Vec<C64> = s.u1.iter().zip(&r).map(|(a, b)| a - b).collect();
        vec![s.time, s.energy1(), s.energy23(), norm2_2d(&grid, &d).sqrt()]
    };
    let mut s = init.clone();
    table.push(row(&s));
    let mut max_div = s.divergence_residual();
    for i in 1..=n {
        s = solver.step(&s, i as f64 * cfg.dt - s.time)?;
        max_div = max_div.max(s.divergence_residual());
        if i % every == 0 || i == n {
            table.push(row(&s));
        }
    }
    let mut out = RunOutput::default();
    let last = table.rows.last().expect("row").clone();
    out.summary.insert("final_liftup_dev".into(), json!(last[3]));
    out.summary.insert("initial_norm".into(), json!((init.energy1() + init.energy23()).sqrt()));
    out.summary.insert("max_div_residual".into(), json!(max_div));
    out.tables.push(table);
    Ok(out)
}

/// Time stepping shared by `sim3d` and `coord`; `on_step` sees every state.
struct Sim3dRun {
    main: Table,
    neq: Table,
    states: Vec<(String, SimState)>,
    ratio: TimeSeries,
    worst_budget: f64,
    max_div: f64,
    remaps: usize,
}

fn simulate<F: FnMut(&SimState) -> Result<()>>(cfg: &ExperimentConfig, mut on_step: F) -> Result<Sim3dRun> {
    let grid = cfg.grid_spec()?;
    let solver = Solver::new(grid, SolverOptions { nonlinear: cfg.nonlinear, cfl_limit: cfg.cfl_limit });
    let mut state = SimState::new(initial_field(cfg, grid)?, cfg.nu, cfg.eps);
    let n = steps_of(cfg.t_end, cfg.dt, "t_end")?;
    let every = steps_of(cfg.dt_out, cfg.dt, "dt_out")?;
    let remap = cfg.remap_every.map(|p| steps_of(p, cfg.dt, "remap_every")).transpose()?;
    let snaps: Vec<(usize, f64)> = cfg
        .snapshots
        .iter()
        .map(|&s| Ok(((s / cfg.dt).round() as usize, s)))
        .collect::<Result<_>>()?;

    let mut run = Sim3dRun {
        main: Table::new(
            "sim3d",
            &["t", "E_total", "E_neq", "E0_1", "E0_2", "E0_3", "Hsigma_u1", "Hsigma_u3", "div_residual", "budget_residual"],
        ),
        neq: Table::new("sim3d_neq", &["t", "u1_neq", "u2_neq", "u3_neq", "H1_u1_neq", "H2_u1_neq"]),
        states: Vec::new(),
        ratio: TimeSeries::new("E_neq/E"),
        worst_budget: 0.0,
        max_div: 0.0,
        remaps: 0,
    };
    let mut tracker = BudgetTracker::default();
    let record = |run: &mut Sim3dRun, s: &SimState, budget: f64| -> Result<()> {
        let f = &s.uhat;
        let e = component_energies(f);
        let div = f.divergence_residual();
        run.max_div = run.max_div.max(div);
        run.main.push(vec![
            s.t(),
            e.e_total,
            e.e_neq,
            e.e0[0],
            e.e0[1],
            e.e0[2],
            sobolev_norm(f, 0, SIGMA_PRIME),
            sobolev_norm(f, 2, SIGMA_PRIME),
            div,
            budget,
        ]);
        run.neq.push(vec![
            s.t(),
            neq_norm(f, 0),
            neq_norm(f, 1),
            neq_norm(f, 2),
            sobolev_norm_filtered(f, 0, 1.0, true),
            sobolev_norm_filtered(f, 0, 2.0, true),
        ]);
        if e.e_total > 0.0 {
            run.ratio.push(s.t(), e.e_neq / e.e_total)?;
        }
        Ok(())
    };

    tracker.push(energy_budget(&state));
    on_step(&state)?;
    record(&mut run, &state, 0.0)?;
    for &(_, ts) in snaps.iter().filter(|(i, _)| *i == 0) {
        run.states.push((snapshot_name(ts), state.clone()));
    }
    for i in 1..=n {
        state = solver.step(&state, i as f64 * cfg.dt - state.t())?;
        tracker.push(energy_budget(&state));
        if remap.is_some_and(|r| i % r == 0) {
            // the budget is not continuous across a remap (modes are dropped)
            run.worst_budget = run.worst_budget.max(tracker.take_worst());
            tracker = BudgetTracker::default();
            state = remap_shear(&state)?;
            tracker.push(energy_budget(&state));
            run.remaps += 1;
        }
        on_step(&state)?;
        if i % every == 0 || i == n {
            let b = tracker.take_worst();
            run.worst_budget = run.worst_budget.max(b);
            record(&mut run, &state, b)?;
        }
        for &(_, ts) in snaps.iter().filter(|(s, _)| *s == i) {
            run.states.push((snapshot_name(ts), state.clone()));
        }
    }
    run.states.push(("final".into(), state));
    Ok(run)
}

fn run_sim3d(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let run = simulate(cfg, |_| Ok(()))?;
    let mut out = RunOutput::default();
    out.summary.insert("t_star".into(), json!(run.ratio.crossing_time(0.01)));
    out.summary.insert("worst_budget_residual".into(), json!(run.worst_budget));
    out.summary.insert("max_div_residual".into(), json!(run.max_div));
    out.summary.insert("remaps".into(), json!(run.remaps));
    out.tables = vec![run.main, run.neq];
    // remapped states are not representable in the checkpoint layout
    out.states = run.states.into_iter().filter(|(_, s)| s.uhat.frame == Frame::SHEAR).collect();
    Ok(out)
}

fn run_coord(cfg: &ExperimentConfig) -> Result<RunOutput> {
    if cfg.remap_every.is_some() {
        return Err(Error::Config("coord runs do not support remapping".into()));
    }
    let grid = cfg.grid_spec()?;
    let plane = grid.plane_len();
    let fft = Fft3::new(grid);
    let mut history: Vec<U0Sample> = Vec::new();
    let mut forcing: Vec<Vec<C64>> = Vec::new();
    let run = simulate(cfg, |s| {
        let f = &s.uhat;
        history.push((s.t(), std::array::from_fn(|c| f.comps[c][..plane].to_vec())));
        forcing.push(if s.t() > 0.0 {
            forcing_series(&fft, std::slice::from_ref(s))?.remove(0).1
        } else {
            vec![C64::default(); plane]
        });
        Ok(())
    })?;

    let dt = cfg.dt;
    let i1 = steps_of(1.0, dt, "t = 1")?;
    let w = quadrature_weights(i1, dt);
    let c1: Vec<C64> = (0..plane).map(|idx| (0..=i1).map(|s| history[s].1[0][idx] * w[s]).sum()).collect();
    let mut st = CoordState::from_u01(grid, &history[i1].1[0], c1, 1.0, cfg.nu);
    let psi = psi_from_history(&grid, &history, cfg.nu)?;
    let solver = CoordSolver::new(grid);
    let input = |i: usize| CgInput { u0_2: history[i].1[1].clone(), u0_3: history[i].1[2].clone(), force: forcing[i].clone() };

    let mut table = Table::new(
        "coord",
        &["t", "C_norm", "g_norm", "psi_minus_u01", "sup_psi_y", "sup_psi_z", "sup_G", "identity_defect"],
    );
    let mut dev = TimeSeries::new("psi - u0^1");
    let mut worst_identity = 0.0f64;
    let out_every = steps_of(cfg.dt_out, dt, "dt_out")?;
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut i = i1;
    let mut p = 0;
    loop {
        let (t, u) = (&history[i].0, &history[i].1);
        let lhs: Vec<C64> = (0..plane).map(|idx| st.c[idx] - (u[0][idx] - st.g[idx] * *t)).collect();
        let u1n = norm_2d(&grid, &u[0]);
        let defect = if u1n > 0.0 { norm_2d(&grid, &lhs) / u1n } else { norm_2d(&grid, &lhs) };
        worst_identity = worst_identity.max(defect);
        let (pt, pv) = &psi[p];
        debug_assert!((pt - t).abs() < 1e-9);
        let d: Vec<C64> = pv.iter().zip(&u[0]).map(|(a, b)| a - b).collect();
        let dn = norm_2d(&grid, &d);
        dev.push(*t, dn)?;
        if (i - i1) % out_every == 0 || i + 2 >= history.len() {
            let jac = jacobians_from_c(&grid, &st.c, *t)?;
            table.push(vec![
                *t,
                norm_2d(&grid, &st.c),
                norm_2d(&grid, &st.g),
                dn,
                sup(&jac.psi_y),
                sup(&jac.psi_z),
                sup(&jac.g_metric),
                defect,
            ]);
        }
        if i + 2 >= history.len() {
            break;
        }
        st = solver.step(&st, [&input(i), &input(i + 1), &input(i + 2)], 2.0 * dt)?;
        i += 2;
        p += 1;
    }
    let cc = cfg.coord.clone().unwrap_or_default();
    let mut out = RunOutput::default();
    out.summary.insert("max_identity_defect".into(), json!(worst_identity));
    match fit_power_law(&dev, (cc.fit_window[0], cc.fit_window[1])) {
        Ok(fit) => {
            out.summary.insert("psi_slope".into(), json!(fit.exponent));
            out.summary.insert("psi_slope_r2".into(), json!(fit.r2));
        }
        Err(e) => {
            out.summary.insert("psi_slope_error".into(), json!(e.to_string()));
        }
    }
    out.summary.insert("max_div_residual".into(), json!(run.max_div));
    out.tables = vec![table, run.main];
    Ok(out)
}

fn run_toy(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let tc = cfg.toy.clone().unwrap_or_default();
    let mut maj = Table::new("toy_majorant", &["eta", "t_start", "t_end", "K", "growth", "w_growth"]);
    let mut k_max = 0.0f64;
    for &eta in &tc.etas {
        let p = cfg.toy_params(&tc, eta);
        let r = supersolution_constant(&p, ToyState::splat(tc.init), tc.kappa, tc.dt)?;
        k_max = k_max.max(r.k_const);
        let prof = WProfile::new(eta, tc.kappa);
        let w_growth = (prof.log_w(r.t_end) - prof.log_w(r.t_start)).exp();
        maj.push(vec![r.eta, r.t_start, r.t_end, r.k_const, r.growth, w_growth]);
    }
    let etas = dyadic_etas(tc.growth_etas[0], tc.growth_etas[1]);
    let mut growth = Table::new("toy_growth", &["eta", "sqrt_eta", "log_growth"]);
    for &e in &etas {
        growth.push(vec![e, e.sqrt(), stirling_total_growth(e)]);
    }
    let (slope, _, r2) = linear_regression(
        &growth.column("sqrt_eta").expect("column"),
        &growth.column("log_growth").expect("column"),
    );
    let mut out = RunOutput::default();
    out.summary.insert("majorant_constant".into(), json!(k_max));
    out.summary.insert("growth_slope".into(), json!(slope));
    out.summary.insert("growth_slope_r2".into(), json!(r2));
    out.tables = vec![maj, growth];
    Ok(out)
}

fn run_multiplier_table(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mc = cfg.multipliers.clone().unwrap_or_default();
    let etas = dyadic_etas(mc.eta_lo, mc.eta_hi);
    let mut w = Table::new("multipliers", &["eta", "log_inv_w1", "log_inv_w1_over_sqrt_eta"]);
    for &e in &etas {
        let v = -WProfile::new(e, mc.kappa).log_w(1.0);
        w.push(vec![e, v, v / e.sqrt()]);
    }
    let fit = gevrey2_fit(mc.kappa, &etas)?;
    let rows = w_l_sweep(mc.kappa, &mc.wl_ks, &mc.wl_etas, &mc.wl_ls, mc.wl_t1, mc.wl_steps);
    let mut wl = Table::new("w_l_sweep", &["k", "eta", "l", "total", "log_closed", "log_ode"]);
    for r in &rows {
        wl.push(vec![r.k as f64, r.eta, r.l as f64, r.total, r.log_closed, r.log_ode]);
    }
    let sup_total = rows.iter().map(|r| r.total).fold(0.0, f64::max);
    let ode_gap = rows.iter().map(|r| (r.log_closed - r.log_ode).abs()).fold(0.0, f64::max);
    let mut out = RunOutput::default();
    out.summary.insert("gevrey_p".into(), json!(fit.p));
    out.summary.insert("gevrey_r2".into(), json!(fit.r2));
    out.summary.insert("gevrey_mu".into(), json!(fit.mu));
    out.summary.insert("calibrated_mu".into(), json!(calibrate_mu(mc.kappa, &etas)));
    out.summary.insert("w_l_sup_total".into(), json!(sup_total));
    out.summary.insert("w_l_ode_gap".into(), json!(ode_gap));
    if let Some(p) = mc.params {
        out.summary.insert("lambda_inf".into(), json!(p.lambda_inf()));
    }
    out.tables = vec![w, wl];
    Ok(out)
}

const MAGIC: &[u8; 8] = b"CUET3D01";
const MAGIC_STEM: &[u8; 6] = b"CUET3D";

/// Little-endian layout: magic, `u64` Nx Ny Nz, `f64` Ly t nu, then the
/// three components as interleaved `complex128` in storage order.
///
/// Only states in the shear frame with origin 0 are representable.
pub fn write_checkpoint(state: &SimState, path: &Path) -> Result<()> {
    let f = &state.uhat;
    if f.frame != Frame::SHEAR {
        return Err(Error::InvalidParameter(format!(
            "checkpoints store shear-frame states with origin 0 (got {:?})",
            f.frame
        )));
    }
    let g = f.grid;
    let mut buf = Vec::with_capacity(56 + 48 * g.spectral_len());
    buf.extend_from_slice(MAGIC);
    for n in [g.nx, g.ny, g.nz] {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for v in [g.ly, f.time, state.nu] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for c in &f.comps {
        for z in c {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<SimState> {
    let bytes = fs::read(path)?;
    let corrupt = |reason: String| Error::CheckpointCorrupt { path: path.to_path_buf(), reason };
    if bytes.len() < 8 {
        return Err(corrupt(format!("{} bytes, shorter than the magic", bytes.len())));
    }
    let magic: [u8; 8] = bytes[..8].try_into().expect("8 bytes");
    if &magic != MAGIC {
        if &magic[..6] == MAGIC_STEM {
            return Err(Error::CheckpointVersion {
                path: path.to_path_buf(),
                version: String::from_utf8_lossy(&magic[6..]).into_owned(),
            });
        }
        return Err(Error::CheckpointMagic { path: path.to_path_buf(), magic });
    }
    if bytes.len() < 56 {
        return Err(corrupt("truncated header".into()));
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes") };
    let dims: Vec<u64> = (0..3).map(|i| u64::from_le_bytes(word(i))).collect();
    let [ly, t, nu] = [3, 4, 5].map(|i| f64::from_le_bytes(word(i)));
    let dim = |d: u64| usize::try_from(d).map_err(|_| corrupt(format!("dimension {d}")));
    let grid = GridSpec::new(dim(dims[0])?, dim(dims[1])?, dim(dims[2])?, ly).map_err(|e| corrupt(e.to_string()))?;
    let n = grid.spectral_len();
    let expect = 56 + 48 * n;
    if bytes.len() != expect {
        return Err(corrupt(format!("{} bytes, expected {expect} for {}", bytes.len(), grid.describe())));
    }
    let mut f = SpectralVectorField::zeros(grid, Frame::SHEAR, t);
    let mut off = 56;
    for c in 0..3 {
        for z in f.comps[c].iter_mut() {
            let re = f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().expect("8 bytes"));
            *z = C64::new(re, im);
            off += 16;
        }
    }
    Ok(SimState::new(f, nu, 0.0))
}

/// As [`read_checkpoint`], insisting on a particular grid.
pub fn read_checkpoint_on(path: &Path, grid: &GridSpec) -> Result<SimState> {
    let s = read_checkpoint(path)?;
    if s.grid() != grid {
        return Err(Error::DimensionMismatch { expected: grid.describe(), got: s.grid().describe() });
    }
    Ok(s)
}

/// Caps the rayon pool from `COUETTE3D_THREADS` (ignored when unset).
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("COUETTE3D_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("COUETTE3D_THREADS = {v:?}")))?;
    if n == 0 {
        return Err(Error::Config("COUETTE3D_THREADS must be positive".into()));
    }
    // a pool that is already built (e.g. in tests) is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

impl Error {
    /// Process exit status: 2 for configuration/input problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Cfl { .. }
            | Error::NonFinite { .. }
            | Error::NonCommensurateRemap { .. }
            | Error::Jacobian { .. }
            | Error::NotDivergenceFree { .. }
            | Error::ZeroWavevector { .. }
            | Error::Cadence(_)
            | Error::Fit(_) => 3,
            _ => 2,
        }
    }
}
