use std::path::Path;
use std::process::Command;

use couette_core::experiment::*;
use couette_core::initial::{random_initial_data, Envelope};
use couette_core::solver::{remap_shear, SimState};
use couette_core::spectral::{inner_product, GridSpec, TWO_PI};
use couette_core::Error;
use tempfile::tempdir;

const SMALL: &str = r#"
kind = "sim3d"
nu = 0.01
eps = 0.05
seed = 9
t_end = 1.0
dt = 0.05
dt_out = 0.25
snapshots = [0.5]

[grid]
nx = 8
ny = 16
nz = 8
ly = "2pi"
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_couette3d"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn same_config_gives_identical_csv() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    for (x, y) in a.tables.iter().zip(&b.tables) {
        assert_eq!(x.to_csv(), y.to_csv());
    }
    assert_eq!(a.tables[0].header.len(), 10);
    assert!(a.state(&snapshot_name(0.5)).is_some());
}

#[test]
fn csv_is_independent_of_thread_count() {
    let dir = tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let mut outs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let st = bin()
            .args(["sim3d", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env("COUETTE3D_THREADS", threads)
            .status()
            .unwrap();
        assert!(st.success());
        outs.push(out);
    }
    for f in ["sim3d.csv", "sim3d_neq.csv", "final.bin", "manifest.json"] {
        assert_eq!(std::fs::read(outs[0].join(f)).unwrap(), std::fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn linear_csv_follows_the_inviscid_mode() {
    // Euler: Q2 is conserved, so |u2(t)| = |Q2(0)| / |K(t)|^2
    let cfg = ExperimentConfig::from_toml(
        r#"
kind = "linear"
nu = 0.0
t_end = 12.0
dt = 0.01
dt_out = 1.0
[linear]
k = 2
eta = 9.0
l = 1
u = [[0.5, 0.0], [1.0, 0.0], [-3.0, 0.0]]
"#,
    )
    .unwrap();
    let out = run(&cfg).unwrap();
    let t = out.table("linear").unwrap();
    assert_eq!(t.header, ["t", "u1", "u2", "u3", "q2", "div_residual"]);
    let k2 = |t: f64| 4.0 + (9.0 - 2.0 * t).powi(2) + 1.0;
    let q0 = t.rows[0][4];
    assert!((q0 - k2(0.0) * t.rows[0][2]).abs() < 1e-12);
    for r in &t.rows {
        assert!((r[2] - q0 / k2(r[0])).abs() < 1e-9 * q0, "t={}", r[0]);
        assert!(r[5] < 1e-12);
    }
}

#[test]
fn odd_nx_is_a_config_error_without_output() {
    let dir = tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SMALL.replace("nx = 8", "nx = 9"));
    let out = dir.path().join("out");
    let st = bin().args(["sim3d", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    assert!(!out.exists());

    let bad = write(dir.path(), "u.toml", "kind = \"sim3d\"\nbogus = 1\n");
    let st = bin().args(["sim3d", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = bin().args(["toy", "--config", cfg.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(2), "kind in file disagrees with the command line");
}

#[test]
fn cfl_violation_exits_with_numerical_status() {
    let dir = tempdir().unwrap();
    let text = SMALL.replace("eps = 0.05", "eps = 50.0").replace("dt = 0.05", "dt = 0.25");
    let cfg = write(dir.path(), "c.toml", &text);
    let out = dir.path().join("out");
    let st = bin().args(["sim3d", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(3));
    assert!(!out.join("sim3d.csv").exists());
}

#[test]
fn seed_override_and_manifest_hash() {
    let dir = tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let run_cli = |extra: &[&str], out: &str| {
        let out = dir.path().join(out);
        let mut args = vec!["sim3d", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert!(bin().args(&args).status().unwrap().success());
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
        (m, std::fs::read(out.join("sim3d.csv")).unwrap())
    };
    let (m1, c1) = run_cli(&[], "a");
    let (m2, c2) = run_cli(&["--seed", "10"], "b");
    let (m3, c3) = run_cli(&[], "c");
    assert_ne!(c1, c2);
    assert_eq!(c1, c3);
    assert_ne!(m1["param_hash"], m2["param_hash"]);
    assert_eq!(m1["param_hash"], m3["param_hash"], "output directory is not a parameter");
    assert_eq!(m1["files"]["sim3d.csv"], m3["files"]["sim3d.csv"]);
    assert_eq!(m1["regime"], "above-threshold");

    let base = ExperimentConfig::from_toml(SMALL).unwrap();
    let mut nu = base.clone();
    nu.nu *= 1.0 + 1e-12;
    assert_ne!(base.param_hash(), nu.param_hash());
    let mut eps = base.clone();
    eps.eps = 0.0;
    assert_ne!(base.param_hash(), eps.param_hash());
    assert!(eps.below_threshold());
}

fn random_state(seed: u64) -> SimState {
    let g = GridSpec::new(8, 16, 8, 2.0 * TWO_PI).unwrap();
    let mut f = random_initial_data(seed, g, 0.3, Envelope::Gevrey { lambda: 0.5, s: 0.5 }).unwrap();
    f.time = 1.75;
    SimState::new(f, 0.0123, 0.3)
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("s.bin");
    let s = random_state(1);
    write_checkpoint(&s, &p).unwrap();
    let r = read_checkpoint(&p).unwrap();
    assert_eq!(r.uhat.grid, s.uhat.grid);
    assert_eq!(r.t().to_bits(), s.t().to_bits());
    assert_eq!(r.nu.to_bits(), s.nu.to_bits());
    for c in 0..3 {
        for (a, b) in r.uhat.comps[c].iter().zip(&s.uhat.comps[c]) {
            assert_eq!((a.re.to_bits(), a.im.to_bits()), (b.re.to_bits(), b.im.to_bits()));
        }
    }
    let bytes = std::fs::read(&p).unwrap();
    assert_eq!(&bytes[..8], b"CUET3D01");
    assert_eq!(bytes.len(), 56 + 48 * s.grid().spectral_len());
}

#[test]
fn damaged_checkpoints_are_typed_errors() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("s.bin");
    write_checkpoint(&random_state(2), &p).unwrap();
    let bytes = std::fs::read(&p).unwrap();

    for cut in [0, 5, 30, bytes.len() - 1] {
        std::fs::write(&p, &bytes[..cut]).unwrap();
        assert!(matches!(read_checkpoint(&p), Err(Error::CheckpointCorrupt { .. })), "cut at {cut}");
    }
    let mut v = bytes.clone();
    v[6..8].copy_from_slice(b"02");
    std::fs::write(&p, &v).unwrap();
    assert!(matches!(read_checkpoint(&p), Err(Error::CheckpointVersion { ref version, .. }) if version == "02"));
    let mut v = bytes.clone();
    v[..8].copy_from_slice(b"NOTAFILE");
    std::fs::write(&p, &v).unwrap();
    assert!(matches!(read_checkpoint(&p), Err(Error::CheckpointMagic { .. })));

    std::fs::write(&p, &bytes).unwrap();
    let other = GridSpec::new(8, 16, 16, 2.0 * TWO_PI).unwrap();
    assert!(matches!(read_checkpoint_on(&p, &other), Err(Error::DimensionMismatch { .. })));
    assert!(read_checkpoint_on(&p, &GridSpec::new(8, 16, 8, 2.0 * TWO_PI).unwrap()).is_ok());
}

#[test]
fn remapped_states_are_not_checkpointed() {
    let dir = tempdir().unwrap();
    let mut s = random_state(3);
    s.uhat.time = 0.5; // shift of one lattice unit for Ly = 4 pi
    let r = remap_shear(&s).unwrap();
    assert!(matches!(write_checkpoint(&r, &dir.path().join("r.bin")), Err(Error::InvalidParameter(_))));
}

#[test]
fn random_data_contract() {
    let g = GridSpec::new(32, 32, 32, TWO_PI).unwrap();
    let env = Envelope::Bandlimited { kappa0: 10.0 };
    let f = random_initial_data(1, g, 0.7, env).unwrap();
    let h = random_initial_data(2, g, 0.7, env).unwrap();
    assert!(f.divergence_residual() <= 1e-12);
    assert!(f.hermitian_defect() <= 1e-14);
    assert!((f.norm2().sqrt() - 0.7).abs() < 1e-12);
    let dot: f64 = (0..3).map(|c| inner_product(&g, &f.comps[c], &h.comps[c])).sum();
    let corr = dot.abs() / (f.norm2() * h.norm2()).sqrt();
    assert!(corr < 0.1, "{corr}");
    assert_eq!(random_initial_data(1, g, 0.7, env).unwrap(), f);
    assert_eq!(random_initial_data(1, g, 0.0, env).unwrap().norm2(), 0.0);
}

#[test]
fn every_shipped_config_validates() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            let c = ExperimentConfig::load(&p).unwrap();
            c.validate().unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 10);
}

#[test]
fn small_runs_of_every_kind() {
    let streak = r#"
kind = "streak"
nu = 0.01
eps = 0.1
t_end = 1.0
dt = 0.05
dt_out = 0.5
[grid]
nx = 8
ny = 16
nz = 16
ly = "2pi"
"#;
    let out = run(&ExperimentConfig::from_toml(streak).unwrap()).unwrap();
    assert_eq!(out.table("streak").unwrap().header, ["t", "E1", "E23", "liftup_dev"]);
    assert_eq!(out.table("streak").unwrap().rows.len(), 3);

    let toy = "kind = \"toy\"\nnu = 0.01\neps = 1e-4\nc0 = 0.1\n[toy]\netas = [25.0]\ngrowth_etas = [100.0, 1600.0]\n";
    let out = run(&ExperimentConfig::from_toml(toy).unwrap()).unwrap();
    assert_eq!(out.table("toy_majorant").unwrap().rows.len(), 1);
    assert_eq!(out.table("toy_growth").unwrap().rows.len(), 5);

    let mt = "kind = \"multiplier-table\"\n[multipliers]\neta_lo = 100.0\neta_hi = 3200.0\nwl_ks = [1]\nwl_etas = [3.0]\nwl_ls = [0]\nwl_steps = 1000\n";
    let out = run(&ExperimentConfig::from_toml(mt).unwrap()).unwrap();
    assert_eq!(out.table("multipliers").unwrap().rows.len(), 6);
    assert_eq!(out.table("w_l_sweep").unwrap().rows.len(), 1);

    let coord = SMALL.replace("kind = \"sim3d\"", "kind = \"coord\"").replace("t_end = 1.0", "t_end = 3.0").replace("eps = 0.05", "eps = 1e-6");
    let out = run(&ExperimentConfig::from_toml(&coord).unwrap()).unwrap();
    let t = out.table("coord").unwrap();
    assert_eq!(t.rows[0][0], 1.0);
    assert!(out.number("max_identity_defect").unwrap() < 1e-6);
}
