//! The convergence and stability experiments: epsilon sweep, Lipschitz probe
//! for `H_s`, refinement-based uniqueness probe, and spin relaxation with
//! frozen magnetization.

use serde::Serialize;

use super::{simulate, Problem};
use crate::config::{MPreset, Mode, SimulationConfig};
use crate::error::{Error, Result};
use crate::grid::{norm_h1, norm_l2, Grid, VectorField};
use crate::presets;
use crate::spin::{self, SolverOptions, SpinParams};

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    /// `||m_eps - m_0||` in L2(Omega_T)
    pub err_m: f64,
    /// `||s_eps - H_s[m_eps]||` in L2(Omega_T)
    pub err_s: f64,
    /// Order relative to the previous row.
    pub order_m: Option<f64>,
    pub order_s: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `log err` against `log eps`.
    pub fitted_order_m: Option<f64>,
    pub fitted_order_s: Option<f64>,
    pub monotone_m: bool,
    pub monotone_s: bool,
}

fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, v)| **v > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn pair_order(e0: f64, e1: f64, x0: f64, x1: f64) -> Option<f64> {
    (e0 > 0.0 && e1 > 0.0).then(|| (e0 / e1).ln() / (x0 / x1).ln())
}

/// Runs the SLLG reference and one SDLLG run per `eps` (strictly
/// decreasing), measuring both distances over all time levels.
pub fn epsilon_sweep(base: &Problem, eps_list: &[f64]) -> Result<SweepReport> {
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParam("eps_list must hold positive values".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParam("eps_list must be strictly decreasing".into()));
    }
    let dt = base.dt;
    let reference = base.clone().with_mode(Mode::Sllg);
    let mut m_ref = Vec::with_capacity(base.n_steps + 1);
    simulate(&reference, false, &mut |v| {
        m_ref.push(v.m.clone());
        Ok(())
    })?;

    let mut rows: Vec<SweepRow> = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let mut p = base.clone().with_mode(Mode::Sdllg);
        p.spin.epsilon = eps;
        let (mut sum_m, mut sum_s) = (0.0, 0.0);
        let mut warm: Option<VectorField> = None;
        let opts = p.solver;
        let sp = p.spin.clone();
        simulate(&p, false, &mut |v| {
            let dm = norm_l2(&v.m.sub(&m_ref[v.step])?);
            sum_m += dt * dm * dm;
            let warm_start = warm.as_ref().unwrap_or(v.s);
            let hs = spin::solve_stationary_spin(v.m, &sp, &opts, Some(warm_start))?.s;
            let ds = norm_l2(&v.s.sub(&hs)?);
            sum_s += dt * ds * ds;
            warm = Some(hs);
            Ok(())
        })?;
        let (err_m, err_s) = (sum_m.sqrt(), sum_s.sqrt());
        let (order_m, order_s) = match rows.last() {
            Some(prev) => (
                pair_order(prev.err_m, err_m, prev.epsilon, eps),
                pair_order(prev.err_s, err_s, prev.epsilon, eps),
            ),
            None => (None, None),
        };
        rows.push(SweepRow {
            epsilon: eps,
            err_m,
            err_s,
            order_m,
            order_s,
        });
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let em: Vec<f64> = rows.iter().map(|r| r.err_m).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.err_s).collect();
    Ok(SweepReport {
        fitted_order_m: ls_slope(&eps, &em),
        fitted_order_s: ls_slope(&eps, &es),
        monotone_m: em.windows(2).all(|w| w[1] <= w[0]),
        monotone_s: es.windows(2).all(|w| w[1] < w[0]),
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzRow {
    pub target: f64,
    pub delta: f64,
    /// `||m1 - m2||_H1`
    pub distance: f64,
    /// `||H_s[m1] - H_s[m2]||_H1`
    pub numerator: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzReport {
    pub rows: Vec<LipschitzRow>,
    pub max_ratio: f64,
    /// Largest ratio divided by the smallest.
    pub spread: f64,
}

/// Bump `cos(pi y') cos(pi z')` in box-relative coordinates.
fn bump(grid: &Grid) -> impl Fn([f64; 3]) -> f64 + Sync + Send {
    let o = grid.origin;
    let l = grid.lengths();
    move |x| (std::f64::consts::PI * (x[1] - o[1]) / l[1]).cos() * (std::f64::consts::PI * (x[2] - o[2]) / l[2]).cos()
}

/// `m1` rotated about `e3` by `delta * bump`.
pub fn lipschitz_perturbation(m1: &VectorField, delta: f64) -> VectorField {
    let psi = bump(m1.grid());
    presets::rotate_field(m1, [0.0, 0.0, 1.0], move |x| delta * psi(x))
}

/// `(||m1 - m2||_H1, ||H_s[m1] - H_s[m2]||_H1)` given `H_s[m1]`.
pub fn lipschitz_pair(
    m1: &VectorField,
    s1: &VectorField,
    m2: &VectorField,
    p: &SpinParams,
    opts: &SolverOptions,
) -> Result<(f64, f64)> {
    let dist = norm_h1(&m1.sub(m2)?);
    let s2 = spin::solve_stationary_spin(m2, p, opts, Some(s1))?.s;
    Ok((dist, norm_h1(&s1.sub(&s2)?)))
}

/// Ratios `||H_s[m1] - H_s[m2]||_H1 / ||m1 - m2||_H1` for rotated
/// perturbations `m2` at the requested H1 distances.
pub fn lipschitz_probe(
    m1: &VectorField,
    p: &SpinParams,
    targets: &[f64],
    opts: &SolverOptions,
) -> Result<LipschitzReport> {
    if targets.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidParam("target distances must be positive".into()));
    }
    let s1 = spin::solve_stationary_spin(m1, p, opts, None)?.s;
    let unit = norm_h1(&m1.sub(&lipschitz_perturbation(m1, 1.0))?);
    if unit == 0.0 {
        return Err(Error::InvalidParam("rotation about e3 leaves m1 unchanged".into()));
    }
    let mut rows = Vec::with_capacity(targets.len());
    for &target in targets {
        // the distance is nearly linear in delta; a few secant corrections
        // land within a fraction of a percent of the target
        let mut delta = target / unit;
        for _ in 0..4 {
            let d = norm_h1(&m1.sub(&lipschitz_perturbation(m1, delta))?);
            delta *= target / d;
        }
        let m2 = lipschitz_perturbation(m1, delta);
        let (distance, numerator) = lipschitz_pair(m1, &s1, &m2, p, opts)?;
        let ratio = if numerator == 0.0 { 0.0 } else { numerator / distance };
        rows.push(LipschitzRow {
            target,
            delta,
            distance,
            numerator,
            ratio,
        });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let spread = if max_ratio == 0.0 { 1.0 } else { max_ratio / min_ratio };
    Ok(LipschitzReport { rows, max_ratio, spread })
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelInfo {
    pub n: [usize; 3],
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport {
    pub levels: Vec<LevelInfo>,
    /// `d_k = ||P m^(k) - m^(k+1)||` in L2(Omega_T), on the coarse time grid.
    pub distances: Vec<f64>,
    /// `d_{k+1} / d_k`
    pub ratios: Vec<f64>,
    pub strictly_decreasing: bool,
}

/// Nearest-cell prolongation by an integer factor.
pub fn prolong(coarse: &VectorField, factor: usize) -> VectorField {
    let cg = *coarse.grid();
    let fg = cg.refined(factor);
    VectorField::from_fn(fg, |idx| {
        let c = fg.coords(idx);
        coarse.get(cg.idx(c[0] / factor, c[1] / factor, c[2] / factor))
    })
}

/// Runs `levels` successively halved grids with `dt / h^2` fixed and
/// measures the distance between consecutive trajectories at the coarse
/// time levels.
pub fn uniqueness_probe(cfg: &SimulationConfig, levels: usize) -> Result<UniquenessReport> {
    if !matches!(cfg.initial.m, MPreset::SmoothTwist | MPreset::Uniform) {
        return Err(Error::InvalidParam(
            "the uniqueness probe needs a grid-independent smooth initial preset".into(),
        ));
    }
    let base = Problem::from_config(cfg)?;
    let dt0 = base.dt;
    let mut infos = Vec::with_capacity(levels);
    let mut distances = Vec::new();
    let mut previous: Vec<VectorField> = Vec::new();
    for k in 0..levels {
        let factor = 1usize << k;
        let sub = factor * factor;
        let mut c = cfg.clone();
        c.grid.nx *= factor;
        c.grid.ny *= factor;
        c.grid.nz *= factor;
        c.grid.h = Some(base.grid().h / factor as f64);
        c.time.dt = Some(dt0 / sub as f64);
        c.time.output_every = sub;
        let mut p = Problem::from_config(&c)?;
        p.n_steps = base.n_steps * sub;
        infos.push(LevelInfo {
            n: p.grid().dims(),
            h: p.grid().h,
            dt: p.dt,
            steps: p.n_steps,
        });
        let mut current = Vec::with_capacity(base.n_steps + 1);
        let mut sum = 0.0;
        simulate(&p, false, &mut |v| {
            if v.step % sub == 0 {
                if let Some(prev) = previous.get(v.step / sub) {
                    let d = norm_l2(&prolong(prev, 2).sub(v.m)?);
                    sum += dt0 * d * d;
                }
                current.push(v.m.clone());
            }
            Ok(())
        })?;
        if k > 0 {
            distances.push(sum.sqrt());
        }
        previous = current;
    }
    let ratios: Vec<f64> = distances.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(UniquenessReport {
        strictly_decreasing: distances.windows(2).all(|w| w[1] < w[0]),
        levels: infos,
        distances,
        ratios,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RelaxReport {
    pub steps: usize,
    /// Relative L2 distance to the stationary solution.
    pub distance: f64,
}

/// Iterates backward-Euler spin steps with `m` frozen until the update is
/// below `tol` relative, then compares against `H_s[m]`.
pub fn relax_spin(
    m: &VectorField,
    p: &SpinParams,
    dt: f64,
    opts: &SolverOptions,
    tol: f64,
    max_steps: usize,
) -> Result<(VectorField, RelaxReport)> {
    if !(p.epsilon > 0.0) {
        return Err(Error::InvalidParam("relaxation needs epsilon > 0".into()));
    }
    let stationary = spin::solve_stationary_spin(m, p, opts, None)?.s;
    let mut s = VectorField::zeros(*m.grid());
    let mut steps = 0;
    while steps < max_steps {
        let next = spin::step_spin_transient(&s, m, p, dt, opts)?.s;
        steps += 1;
        let change = norm_l2(&next.sub(&s)?);
        let scale = norm_l2(&next);
        s = next;
        if change <= tol * scale || scale == 0.0 {
            break;
        }
    }
    let ref_norm = norm_l2(&stationary);
    let diff = norm_l2(&s.sub(&stationary)?);
    let distance = if ref_norm > 0.0 { diff / ref_norm } else { diff };
    Ok((s, RelaxReport { steps, distance }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prolongation_copies_parent_values() {
        let g = Grid::new(2, 1, 1, 0.5).unwrap();
        let c = VectorField::from_vec(g, vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let f = prolong(&c, 2);
        assert_eq!(f.grid().dims(), [4, 2, 2]);
        assert_eq!(f.get(f.grid().idx(1, 1, 1)), [1.0, 0.0, 0.0]);
        assert_eq!(f.get(f.grid().idx(2, 0, 1)), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn slope_fit() {
        let x = [1e-1, 1e-2, 1e-3];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((ls_slope(&x, &y).unwrap() - 1.5).abs() < 1e-12);
        assert!(ls_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn single_level_has_no_distances() {
        let mut cfg = SimulationConfig::cube(2);
        cfg.time.t_end = 0.02;
        let r = uniqueness_probe(&cfg, 1).unwrap();
        assert!(r.distances.is_empty());
        cfg.initial.m = MPreset::RandomUnit;
        assert!(uniqueness_probe(&cfg, 2).is_err());
    }

    #[test]
    fn identical_inputs_have_zero_numerator() {
        let g = Grid::cube(4, 1.0).unwrap();
        let m = presets::smooth_twist(g, 1.0);
        let p = SpinParams::reference(g).with_current(VectorField::uniform(g, [1.0, 0.0, 0.0]));
        let opts = SolverOptions::default();
        let s = spin::solve_stationary_spin(&m, &p, &opts, None).unwrap().s;
        let (d, num) = lipschitz_pair(&m, &s, &m, &p, &opts).unwrap();
        assert_eq!(d, 0.0);
        assert!(num < 1e-9 * norm_h1(&s));
    }

    #[test]
    fn zero_current_gives_zero_ratio() {
        let g = Grid::cube(4, 1.0).unwrap();
        let m = presets::smooth_twist(g, 1.0);
        let p = SpinParams::reference(g);
        let r = lipschitz_probe(&m, &p, &[1e-1, 1e-2], &SolverOptions::default()).unwrap();
        assert!(r.rows.iter().all(|row| row.ratio == 0.0));
        for row in &r.rows {
            assert!((row.distance / row.target - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn sweep_rejects_unsorted_list() {
        let p = Problem::from_config(&SimulationConfig::cube(2)).unwrap();
        assert!(epsilon_sweep(&p, &[1e-2, 1e-1]).is_err());
        assert!(epsilon_sweep(&p, &[]).is_err());
    }
}
