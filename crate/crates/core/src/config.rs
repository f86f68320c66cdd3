//! Declarative run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::SolverOptions;
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sdllg,
    #[default]
    Sllg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Cell edge; defaults to `1 / max(nx, ny, nz)` (unit box along the
    /// longest axis).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

impl GridSpec {
    pub fn cube(n: usize) -> Self {
        Self { nx: n, ny: n, nz: n, h: None }
    }

    pub fn spacing(&self) -> f64 {
        self.h.unwrap_or(1.0 / self.nx.max(self.ny).max(self.nz).max(1) as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSpec {
    pub d0: f64,
    pub beta: f64,
    pub beta_prime: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub j_e: Vec3,
    pub epsilon: f64,
    pub c_ex: f64,
    pub alpha: f64,
    pub j0: f64,
    pub mu0: f64,
    pub kappa: f64,
    pub e_an: Vec3,
    /// Uniform applied field.
    pub f: Vec3,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        Self {
            d0: 1.0,
            beta: 0.9,
            beta_prime: 0.8,
            gamma1: 1.0,
            gamma2: 1.0,
            j_e: [1.0, 0.0, 0.0],
            epsilon: 1e-2,
            c_ex: 1.0,
            alpha: 1.0,
            j0: 1.0,
            mu0: 1.0,
            kappa: 0.0,
            e_an: [0.0, 0.0, 1.0],
            f: [0.0; 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSpec {
    /// Defaults to `0.2 h^2 / c_ex`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_end: f64,
    /// Record a snapshot every this many steps (the final step is always kept).
    pub output_every: usize,
    /// Stability factor: steps above `c_stab h^2 / c_ex` are flagged.
    pub c_stab: f64,
}

impl Default for TimeSpec {
    fn default() -> Self {
        Self {
            dt: None,
            t_end: 0.5,
            output_every: 1,
            c_stab: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MPreset {
    Uniform,
    #[default]
    SmoothTwist,
    RandomUnit,
    /// Raw binary dump named by `initial.file`.
    File,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SPreset {
    #[default]
    Zero,
    /// `s* = H_s[m*]`
    Stationary,
    /// Constant `initial.s_value`.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    pub m: MPreset,
    pub direction: Vec3,
    pub twist: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub s: SPreset,
    pub s_value: Vec3,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            m: MPreset::SmoothTwist,
            direction: [1.0, 0.0, 0.0],
            twist: std::f64::consts::FRAC_PI_2,
            seed: 0,
            file: None,
            s: SPreset::Zero,
            s_value: [0.0; 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default)]
    pub mode: Mode,
    pub grid: GridSpec,
    #[serde(default)]
    pub material: MaterialSpec,
    #[serde(default)]
    pub time: TimeSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl SimulationConfig {
    /// Defaults on an `n^3` grid.
    pub fn cube(n: usize) -> Self {
        Self {
            mode: Mode::default(),
            grid: GridSpec::cube(n),
            material: MaterialSpec::default(),
            time: TimeSpec::default(),
            initial: InitialSpec::default(),
            solver: SolverOptions::default(),
        }
    }

    pub fn dt(&self) -> f64 {
        let h = self.grid.spacing();
        self.time.dt.unwrap_or(0.2 * h * h / self.material.c_ex)
    }

    /// First violated constraint as `(dotted key, message)`.
    pub fn check(&self) -> Option<(&'static str, String)> {
        let g = &self.grid;
        let m = &self.material;
        let t = &self.time;
        let pos = |x: f64| x > 0.0 && x.is_finite();
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();
        let finite3 = |v: &Vec3| v.iter().all(|x| x.is_finite());
        let checks: Vec<(bool, &'static str, String)> = vec![
            (g.nx >= 1, "grid.nx", "must be at least 1".into()),
            (g.ny >= 1, "grid.ny", "must be at least 1".into()),
            (g.nz >= 1, "grid.nz", "must be at least 1".into()),
            (g.h.is_none_or(pos), "grid.h", "must be positive".into()),
            (pos(m.d0), "material.d0", "must be positive (D0 >= gamma > 0)".into()),
            (
                m.beta > 0.0 && m.beta < 1.0,
                "material.beta",
                format!("= {} violates 0 < beta < 1 (needed for 0 < beta*beta_prime < 1)", m.beta),
            ),
            (
                m.beta_prime > 0.0 && m.beta_prime < 1.0,
                "material.beta_prime",
                format!(
                    "= {} violates 0 < beta_prime < 1 (needed for 0 < beta*beta_prime < 1)",
                    m.beta_prime
                ),
            ),
            (pos(m.gamma1), "material.gamma1", "must be positive".into()),
            (pos(m.gamma2), "material.gamma2", "must be positive".into()),
            (finite3(&m.j_e), "material.j_e", "must be finite".into()),
            (nonneg(m.epsilon), "material.epsilon", "must be >= 0".into()),
            (
                self.mode != Mode::Sdllg || m.epsilon > 0.0,
                "material.epsilon",
                "must be positive in sdllg mode".into(),
            ),
            (pos(m.c_ex), "material.c_ex", "must be positive".into()),
            (pos(m.alpha), "material.alpha", "must be positive".into()),
            (m.j0.is_finite(), "material.j0", "must be finite".into()),
            (nonneg(m.mu0), "material.mu0", "must be >= 0".into()),
            (nonneg(m.kappa), "material.kappa", "must be >= 0".into()),
            (
                (crate::vec3::norm(m.e_an) - 1.0).abs() < 1e-12,
                "material.e_an",
                "must be a unit vector".into(),
            ),
            (finite3(&m.f), "material.f", "must be finite".into()),
            (t.dt.is_none_or(pos), "time.dt", "must be positive".into()),
            (pos(t.t_end), "time.t_end", "must be positive".into()),
            (t.output_every >= 1, "time.output_every", "must be at least 1".into()),
            (pos(t.c_stab), "time.c_stab", "must be positive".into()),
            (
                self.initial.m != MPreset::File || self.initial.file.is_some(),
                "initial.file",
                "is required when initial.m = \"file\"".into(),
            ),
            (pos(self.solver.tol), "solver.tol", "must be positive".into()),
            (self.solver.max_iter >= 1, "solver.max_iter", "must be at least 1".into()),
            (self.solver.restart >= 1, "solver.restart", "must be at least 1".into()),
        ];
        checks
            .into_iter()
            .find(|(ok, _, _)| !ok)
            .map(|(_, key, msg)| (key, msg))
    }

    pub fn validate(&self) -> Result<()> {
        match self.check() {
            Some((key, msg)) => Err(Error::Config(format!("{key} {msg}"))),
            None => Ok(()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses and validates TOML text. Errors carry the line of the offending key.
pub fn parse_config_str(src: &str) -> Result<SimulationConfig> {
    let cfg: SimulationConfig = toml::from_str(src).map_err(|e| {
        let line = e
            .span()
            .map(|s| format!("line {}: ", src[..s.start.min(src.len())].matches('\n').count() + 1))
            .unwrap_or_default();
        Error::Config(format!("{line}{}", e.message()))
    })?;
    if let Some((key, msg)) = cfg.check() {
        let at = locate_key(src, key).map(|l| format!("line {l}: ")).unwrap_or_default();
        return Err(Error::Config(format!("{at}{key} {msg}")));
    }
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<SimulationConfig> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&src).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// 1-based line of `section.key` in TOML text, if written out explicitly.
fn locate_key(src: &str, dotted: &str) -> Option<usize> {
    let (section, key) = dotted.split_once('.').unwrap_or(("", dotted));
    let mut current = String::new();
    for (n, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    // the section header itself is the next best location
    src.lines()
        .position(|l| l.trim() == format!("[{section}]"))
        .map(|n| n + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nnx = 4\nny = 4\nnz = 4\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.mode, Mode::Sllg);
        assert_eq!(cfg.material, MaterialSpec::default());
        assert_eq!(cfg.time, TimeSpec::default());
        assert_eq!(cfg.solver, SolverOptions::default());
        assert_eq!(cfg.grid.spacing(), 0.25);
        assert!((cfg.dt() - 0.2 / 16.0).abs() < 1e-18);
    }

    #[test]
    fn beta_prime_one_is_rejected_with_line() {
        let src = format!("{MINIMAL}\n[material]\nbeta = 0.5\nbeta_prime = 1.0\n");
        let err = parse_config_str(&src).unwrap_err().to_string();
        assert!(err.contains("line 8"), "{err}");
        assert!(err.contains("0 < beta*beta_prime < 1"), "{err}");
    }

    #[test]
    fn unknown_and_missing_keys_are_rejected() {
        let err = parse_config_str(&format!("{MINIMAL}colour = 3\n")).unwrap_err().to_string();
        assert!(err.contains("line 5") && err.contains("colour"), "{err}");
        let err = parse_config_str("[grid]\nnx = 4\nny = 4\n").unwrap_err().to_string();
        assert!(err.contains("nz"), "{err}");
        assert!(parse_config_str("mode = \"sdllg\"\n[grid]\nnx=2\nny=2\nnz=2\n[material]\nepsilon = 0.0\n").is_err());
    }

    #[test]
    fn round_trip() {
        let mut cfg = SimulationConfig::cube(6);
        cfg.mode = Mode::Sdllg;
        cfg.time.dt = Some(1e-3);
        cfg.initial.m = MPreset::RandomUnit;
        cfg.initial.seed = 42;
        cfg.material.epsilon = 0.1 + 0.2;
        cfg.solver.method = crate::spin::KrylovMethod::Bicgstab;
        let text = cfg.to_toml();
        assert_eq!(parse_config_str(&text).unwrap(), cfg);
        let min = parse_config_str(MINIMAL).unwrap();
        assert_eq!(parse_config_str(&min.to_toml()).unwrap(), min);
    }
}
