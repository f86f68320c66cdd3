use std::path::Path;
use std::process::Command;

use spindrift::config::{parse_config, Mode, SimulationConfig};
use spindrift::grid::Grid;
use spindrift::io::{parse_vtk, read_raw_field, LEDGER_HEADER};

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spindrift"))
}

fn write_config(dir: &Path, cfg: &SimulationConfig) -> std::path::PathBuf {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

fn small() -> SimulationConfig {
    let mut cfg = SimulationConfig::cube(4);
    cfg.time.t_end = 0.05;
    cfg.time.output_every = 10;
    cfg
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.mode = Mode::Sdllg;
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let st = exe().args(["run", "--config"]).arg(&path).arg("--out").arg(&out).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));

    let csv = std::fs::read_to_string(out.join("ledger.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(LEDGER_HEADER));
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(cols.len(), 8);
        assert!(cols[7] >= -cfg.dt());
    }

    let vtk = std::fs::read_to_string(out.join("snapshot_000000.vtk")).unwrap();
    let parsed = parse_vtk(&vtk).unwrap();
    assert_eq!(parsed.dims, [5, 5, 5]);
    assert_eq!(parsed.arrays.len(), 2);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let echoed = manifest["config_toml"].as_str().unwrap();
    assert_eq!(spindrift::config::parse_config_str(echoed).unwrap(), cfg);

    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("final.json")).unwrap()).unwrap();
    let grid: Grid = serde_json::from_value(side["grid"].clone()).unwrap();
    let m = read_raw_field(&out.join("m_final.bin"), grid).unwrap();
    assert!(m.max_unit_deviation() < 1e-14);
}

#[test]
fn m_file_preset_round_trips_a_dump() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.initial.m = spindrift::config::MPreset::RandomUnit;
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("first");
    assert!(exe().args(["run", "--config"]).arg(&path).arg("--out").arg(&out).status().unwrap().success());
    cfg.initial.m = spindrift::config::MPreset::File;
    cfg.initial.file = Some(out.join("m_final.bin"));
    let p = spindrift::drivers::Problem::from_config(&cfg).unwrap();
    let g = *p.grid();
    assert_eq!(p.m0, read_raw_field(&out.join("m_final.bin"), g).unwrap());
}

#[test]
fn bad_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[grid]\nnx = 4\nny = 4\nnz = 4\n\n[material]\nbeta_prime = 1.0\n").unwrap();
    let st = exe().args(["run", "--config"]).arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!st.status.success());
    let err = String::from_utf8_lossy(&st.stderr);
    assert!(err.contains("line 7") && err.contains("beta_prime"), "{err}");
    assert!(parse_config(&path).is_err());
}

#[test]
fn sweep_and_probes_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small());
    let sweep = dir.path().join("sweep");
    let st = exe()
        .args(["sweep-eps", "--config"])
        .arg(&path)
        .args(["--eps", "1e-1,1e-2", "--out"])
        .arg(&sweep)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sweep.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["rows"].as_array().unwrap().len(), 2);

    let st = exe()
        .args(["sweep-eps", "--config"])
        .arg(&path)
        .args(["--eps", "1e-2,1e-1", "--out"])
        .arg(&sweep)
        .output()
        .unwrap();
    assert!(!st.status.success());

    let lip = dir.path().join("lip");
    let st = exe().args(["probe-lipschitz", "--config"]).arg(&path).arg("--out").arg(&lip).output().unwrap();
    assert!(st.status.success());
    assert!(lip.join("report.json").exists());

    let uq = dir.path().join("uq");
    let st = exe()
        .args(["probe-uniqueness", "--config"])
        .arg(&path)
        .args(["--levels", "2", "--out"])
        .arg(&uq)
        .env("SPINDRIFT_THREADS", "1")
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
}

#[test]
fn validate_succeeds() {
    let st = exe().arg("validate").output().unwrap();
    assert!(st.status.success());
    let out = String::from_utf8_lossy(&st.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("[PASS]")).count(), 10);
}
