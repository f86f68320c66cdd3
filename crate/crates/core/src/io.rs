//! Result files: energy ledger CSV, legacy VTK snapshots, raw binary dumps
//! with JSON sidecars, and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::drivers::{StepStats, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{Grid, VectorField};
use crate::llg::EnergyLedger;

pub const LEDGER_HEADER: &str = "t,exchange,anisotropy,magnetostatic,total,dissipation,spin_work,slack";

/// Shortest-roundtrip is not fixed width; 17 significant digits always are.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn ledger_csv(ledger: &EnergyLedger) -> String {
    let mut out = String::from(LEDGER_HEADER);
    out.push('\n');
    for r in &ledger.rows {
        let cols = [r.t, r.exchange, r.anisotropy, r.magnetostatic, r.total, r.dissipation, r.spin_work, r.slack];
        let line: Vec<String> = cols.iter().map(|v| num(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Legacy VTK structured points with cell data `m` and `s`.
pub fn vtk_snapshot(m: &VectorField, s: &VectorField, title: &str) -> Result<String> {
    m.grid().ensure_same(s.grid())?;
    let g = m.grid();
    let [nx, ny, nz] = g.dims();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "{}", title.replace('\n', " "));
    out.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(out, "DIMENSIONS {} {} {}", nx + 1, ny + 1, nz + 1);
    let _ = writeln!(out, "ORIGIN {} {} {}", num(g.origin[0]), num(g.origin[1]), num(g.origin[2]));
    let _ = writeln!(out, "SPACING {} {} {}", num(g.h), num(g.h), num(g.h));
    let _ = writeln!(out, "CELL_DATA {}", g.n_cells());
    for (name, f) in [("m", m), ("s", s)] {
        let _ = writeln!(out, "VECTORS {name} double");
        for v in f.data() {
            let _ = writeln!(out, "{} {} {}", num(v[0]), num(v[1]), num(v[2]));
        }
    }
    Ok(out)
}

/// Parsed legacy VTK structured-points file.
#[derive(Debug)]
pub struct VtkData {
    pub title: String,
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub arrays: Vec<(String, Vec<[f64; 3]>)>,
}

/// Reader for the subset of the legacy format that [`vtk_snapshot`] emits.
pub fn parse_vtk(text: &str) -> Result<VtkData> {
    let bad = |msg: &str| Error::Config(format!("malformed VTK: {msg}"));
    let mut lines = text.lines();
    let version = lines.next().ok_or_else(|| bad("empty file"))?;
    if !version.starts_with("# vtk DataFile Version") {
        return Err(bad("missing version line"));
    }
    let title = lines.next().ok_or_else(|| bad("missing title"))?.to_string();
    if lines.next() != Some("ASCII") {
        return Err(bad("expected ASCII"));
    }
    if lines.next() != Some("DATASET STRUCTURED_POINTS") {
        return Err(bad("expected STRUCTURED_POINTS"));
    }
    let mut triple = |key: &str| -> Result<Vec<String>> {
        let line = lines.next().ok_or_else(|| bad(key))?;
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(bad(key));
        }
        let v: Vec<String> = it.map(str::to_string).collect();
        if v.len() != 3 {
            return Err(bad(key));
        }
        Ok(v)
    };
    let d = triple("DIMENSIONS")?;
    let o = triple("ORIGIN")?;
    let sp = triple("SPACING")?;
    let pu = |v: &str| v.parse::<usize>().map_err(|_| bad("integer"));
    let pf = |v: &str| v.parse::<f64>().map_err(|_| bad("number"));
    let dims = [pu(&d[0])?, pu(&d[1])?, pu(&d[2])?];
    let origin = [pf(&o[0])?, pf(&o[1])?, pf(&o[2])?];
    let spacing = [pf(&sp[0])?, pf(&sp[1])?, pf(&sp[2])?];
    let n_cells: usize = dims.iter().map(|d| d.saturating_sub(1).max(1)).product();
    let cd = lines.next().ok_or_else(|| bad("CELL_DATA"))?;
    if cd.split_whitespace().collect::<Vec<_>>() != ["CELL_DATA", &n_cells.to_string()] {
        return Err(bad("CELL_DATA count"));
    }
    let mut arrays = Vec::new();
    while let Some(header) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "VECTORS" {
            return Err(bad("expected VECTORS"));
        }
        let mut vals = Vec::with_capacity(n_cells);
        for _ in 0..n_cells {
            let l = lines.next().ok_or_else(|| bad("truncated array"))?;
            let c: Vec<f64> = l.split_whitespace().map(pf).collect::<Result<_>>()?;
            if c.len() != 3 {
                return Err(bad("vector arity"));
            }
            vals.push([c[0], c[1], c[2]]);
        }
        arrays.push((parts[1].to_string(), vals));
    }
    Ok(VtkData {
        title,
        dims,
        origin,
        spacing,
        arrays,
    })
}

/// Little-endian f64, C order `(k, j, i, component)`.
pub fn raw_bytes(v: &VectorField) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 * v.data().len());
    // cell index already runs i fastest, then j, then k
    for x in v.data() {
        for c in x {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn field_from_raw(bytes: &[u8], grid: Grid) -> Result<VectorField> {
    if bytes.len() != 24 * grid.n_cells() {
        return Err(Error::InvalidGrid(format!(
            "raw dump holds {} bytes, expected {} for {}",
            bytes.len(),
            24 * grid.n_cells(),
            grid.describe()
        )));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    VectorField::from_flat(grid, &flat)
}

pub fn read_raw_field(path: &Path, grid: Grid) -> Result<VectorField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    field_from_raw(&bytes, grid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub grid: Grid,
    pub t: f64,
    pub step: usize,
    pub fields: Vec<String>,
    pub dtype: String,
    pub layout: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub config: Option<SimulationConfig>,
    pub config_toml: Option<String>,
    pub mode: crate::config::Mode,
    pub grid: Grid,
    pub dt: f64,
    pub wall_time_s: f64,
    pub min_slack: f64,
    pub min_reduced_slack: f64,
    pub warnings: Vec<String>,
    pub solver_stats: Vec<StepStats>,
    pub files: Vec<FileEntry>,
}

fn write(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<FileEntry>) -> Result<()> {
    let path: PathBuf = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    files.push(FileEntry {
        name: name.to_string(),
        bytes: bytes.len() as u64,
    });
    Ok(())
}

/// Writes ledger, snapshots, final-state dump and `manifest.json` into `dir`.
pub fn write_outputs(
    traj: &Trajectory,
    dir: &Path,
    config: Option<&SimulationConfig>,
    wall_time_s: f64,
) -> Result<RunManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    write(dir, "ledger.csv", ledger_csv(&traj.ledger).as_bytes(), &mut files)?;
    for snap in &traj.snapshots {
        let title = format!("spindrift {:?} step {} t {}", traj.mode, snap.step, num(snap.t));
        let text = vtk_snapshot(&snap.m, &snap.s, &title)?;
        write(dir, &format!("snapshot_{:06}.vtk", snap.step), text.as_bytes(), &mut files)?;
    }
    let fin = &traj.final_state;
    write(dir, "m_final.bin", &raw_bytes(&fin.m), &mut files)?;
    write(dir, "s_final.bin", &raw_bytes(&fin.s), &mut files)?;
    let sidecar = RawSidecar {
        grid: *fin.m.grid(),
        t: fin.t,
        step: fin.step,
        fields: vec!["m_final.bin".into(), "s_final.bin".into()],
        dtype: "float64, little-endian".into(),
        layout: "C order (k, j, i, component)".into(),
    };
    let side = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    write(dir, "final.json", side.as_bytes(), &mut files)?;

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.cloned(),
        config_toml: config.map(SimulationConfig::to_toml),
        mode: traj.mode,
        grid: *traj.grid(),
        dt: traj.dt,
        wall_time_s,
        min_slack: traj.ledger.min_slack(),
        min_reduced_slack: traj.ledger.min_reduced_slack(),
        warnings: traj.ledger.warnings.clone(),
        solver_stats: traj.solver_stats.clone(),
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn empty_ledger_is_header_only() {
        assert_eq!(ledger_csv(&EnergyLedger::new()), format!("{LEDGER_HEADER}\n"));
    }

    #[test]
    fn raw_round_trip_is_bitwise() {
        let g = Grid::new(3, 2, 4, 0.1).unwrap();
        let m = presets::random_field(g, 5);
        assert_eq!(field_from_raw(&raw_bytes(&m), g).unwrap(), m);
        assert!(field_from_raw(&raw_bytes(&m)[8..], g).is_err());
    }

    #[test]
    fn raw_layout_is_c_order() {
        let g = Grid::new(2, 1, 2, 1.0).unwrap();
        let m = VectorField::from_fn(g, |idx| {
            let c = g.coords(idx);
            [c[0] as f64, c[1] as f64, c[2] as f64]
        });
        let b = raw_bytes(&m);
        let at = |n: usize| f64::from_le_bytes(b[8 * n..8 * n + 8].try_into().unwrap());
        // record (k=1, j=0, i=0) starts after the two i-cells of k=0
        assert_eq!([at(6), at(7), at(8)], [0.0, 0.0, 1.0]);
        assert_eq!([at(3), at(4), at(5)], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn vtk_round_trip() {
        let g = Grid::with_origin(3, 2, 1, 0.25, [0.5, 0.0, -1.0]).unwrap();
        let m = presets::random_unit(g, 1);
        let s = presets::random_field(g, 2);
        let v = parse_vtk(&vtk_snapshot(&m, &s, "title").unwrap()).unwrap();
        assert_eq!(v.dims, [4, 3, 2]);
        assert_eq!(v.origin, [0.5, 0.0, -1.0]);
        assert_eq!(v.spacing, [0.25; 3]);
        assert_eq!(v.arrays[0].0, "m");
        assert_eq!(v.arrays[0].1, m.data());
        assert_eq!(v.arrays[1].1, s.data());
    }

    #[test]
    fn csv_numbers_round_trip() {
        let x = 0.1 + 0.2;
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
    }
}
