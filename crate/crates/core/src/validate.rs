//! Built-in invariant suite on small grids, used by the `validate` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Mode, SimulationConfig};
use crate::demag::DemagKernel;
use crate::drivers::{relax_spin, run, Problem};
use crate::error::Result;
use crate::grid::{
    boundary_flux, divergence, gradient, gradient_norm_sq, inner_faces, inner_l2, norm_h1, norm_l2, FaceTensor, Grid,
    VectorField,
};
use crate::llg::{self, LlgParams};
use crate::presets::{random_field, random_unit, smooth_twist};
use crate::spin::{self, KrylovMethod, PreconditionerKind, SolverOptions, SpinMode, SpinParams, SpinSystem};
use crate::vec3;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

pub fn run_all() -> Vec<Check> {
    vec![
        check("integration by parts", integration_by_parts),
        check("demag fft equals direct sum", demag_fft),
        check("demag self-adjoint and bounded", demag_bounds),
        check("spin coercivity", coercivity),
        check("spin solver path independence", path_independence),
        check("transient spin relaxes to stationary", relaxation),
        check("llg tangency and gilbert form", llg_identities),
        check("llg unit length", llg_unit),
        check("energy inequality", energy_slack),
        check("determinism", determinism),
    ]
}

fn integration_by_parts() -> Result<(bool, String)> {
    let g = Grid::new(4, 3, 5, 0.3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = FaceTensor::zeros(g).map_faces(|_, _, _| {
        let mut m = [[0.0; 3]; 3];
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        m
    });
    let phi = random_field(g, 2);
    let lhs = inner_l2(&divergence(&f), &phi)?;
    let rhs = boundary_flux(&f, &phi)? - inner_faces(&f, &gradient(&phi))?;
    let err = (lhs - rhs).abs() / lhs.abs().max(1.0);
    Ok((err <= 1e-13, format!("relative mismatch {err:.2e}")))
}

fn demag_fft() -> Result<(bool, String)> {
    let g = Grid::new(4, 3, 5, 0.5)?;
    let k = DemagKernel::new(&g);
    let m = random_field(g, 3);
    let a = k.apply(&m)?;
    let b = k.apply_direct(&m)?;
    let err = norm_l2(&a.sub(&b)?) / norm_l2(&b);
    Ok((err <= 1e-12, format!("relative difference {err:.2e}")))
}

fn demag_bounds() -> Result<(bool, String)> {
    let g = Grid::cube(4, 1.0)?;
    let k = DemagKernel::new(&g);
    let mut worst_sym: f64 = 0.0;
    let mut ok = true;
    for i in 0..20 {
        let m1 = random_field(g, 100 + i);
        let m2 = random_field(g, 200 + i);
        let h1 = k.apply(&m1)?;
        let h2 = k.apply(&m2)?;
        let asym = (inner_l2(&h1, &m2)? - inner_l2(&h2, &m1)?).abs() / (norm_l2(&m1) * norm_l2(&m2));
        worst_sym = worst_sym.max(asym);
        let q = -inner_l2(&h1, &m1)?;
        ok &= q >= -1e-8 && q <= norm_l2(&m1).powi(2) + 1e-8;
    }
    Ok((ok && worst_sym <= 1e-11, format!("worst asymmetry {worst_sym:.2e}")))
}

fn coercivity() -> Result<(bool, String)> {
    let g = Grid::cube(4, 1.0)?;
    let p = SpinParams::reference(g);
    let mut worst = f64::INFINITY;
    for i in 0..20 {
        let m = random_unit(g, 300 + i);
        let s = random_field(g, 400 + i);
        let sys = SpinSystem::assemble(&m, &p, SpinMode::Stationary)?;
        let q = inner_l2(&sys.apply(&s)?, &s)?;
        let bound = p.ellipticity_constant() * gradient_norm_sq(&s) + p.gamma1 * norm_l2(&s).powi(2);
        worst = worst.min((q - bound) / norm_h1(&s).powi(2));
    }
    Ok((worst >= -1e-12, format!("min normalized margin {worst:.3e}")))
}

fn path_independence() -> Result<(bool, String)> {
    let g = Grid::cube(4, 1.0)?;
    let p = SpinParams::reference(g).with_current(random_field(g, 5));
    let m = random_unit(g, 6);
    let tol = 1e-11;
    let a = SolverOptions::default().with_tol(tol);
    let b = SolverOptions {
        method: KrylovMethod::Bicgstab,
        preconditioner: PreconditionerKind::BlockJacobi,
        ..a
    };
    let sa = spin::solve_stationary_spin(&m, &p, &a, None)?.s;
    let sb = spin::solve_stationary_spin(&m, &p, &b, None)?.s;
    let diff = norm_l2(&sa.sub(&sb)?) / norm_l2(&sa);
    Ok((diff <= 1e3 * tol, format!("relative difference {diff:.2e}")))
}

fn relaxation() -> Result<(bool, String)> {
    let g = Grid::cube(4, 1.0)?;
    let m = smooth_twist(g, 1.0);
    let mut p = SpinParams::reference(g).with_current(VectorField::uniform(g, [1.0, 0.0, 0.0]));
    p.epsilon = 0.1;
    let opts = SolverOptions::default().with_tol(1e-12);
    let (_, rep) = relax_spin(&m, &p, p.epsilon, &opts, 1e-13, 500)?;
    Ok((rep.distance <= 1e-8, format!("{} steps, distance {:.2e}", rep.steps, rep.distance)))
}

fn llg_identities() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut tangent, mut gilbert): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let m = crate::presets::random_unit_vector(&mut rng);
        let h = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let alpha = rng.random_range(0.05..2.0);
        let v = llg::llg_velocity(m, h, alpha);
        tangent = tangent.max(vec3::dot(v, m).abs());
        let rhs = vec3::axpy(vec3::scale(-1.0, vec3::cross(m, h)), alpha, vec3::cross(m, v));
        gilbert = gilbert.max(vec3::norm(vec3::sub(v, rhs)));
    }
    Ok((
        tangent <= 1e-14 && gilbert <= 1e-13,
        format!("max |v.m| {tangent:.1e}, gilbert residual {gilbert:.1e}"),
    ))
}

fn llg_unit() -> Result<(bool, String)> {
    let g = Grid::cube(4, 1.0)?;
    let lp = LlgParams::exchange_only(1.0, 0.5);
    let dt = lp.stability_limit(g.h, 0.2);
    let mut m = random_unit(g, 8);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        m = llg::step_llg(&m, |x| llg::effective_field(x, &lp, None), dt, lp.alpha)?;
        worst = worst.max(m.max_unit_deviation());
    }
    Ok((worst <= 1e-15, format!("max ||m|-1| {worst:.1e}")))
}

fn small_config() -> SimulationConfig {
    let mut cfg = SimulationConfig::cube(4);
    cfg.time.t_end = 0.1;
    cfg
}

fn energy_slack() -> Result<(bool, String)> {
    let mut worst = f64::INFINITY;
    let mut dt = 0.0;
    for mode in [Mode::Sllg, Mode::Sdllg] {
        let mut cfg = small_config();
        cfg.mode = mode;
        let p = Problem::from_config(&cfg)?;
        dt = p.dt;
        worst = worst.min(run(&p)?.ledger.min_slack());
    }
    Ok((worst >= -dt, format!("min slack {worst:.3e} (dt {dt:.2e})")))
}

fn determinism() -> Result<(bool, String)> {
    let mut cfg = small_config();
    cfg.initial.m = crate::config::MPreset::RandomUnit;
    cfg.initial.seed = 9;
    let p = Problem::from_config(&cfg)?;
    let a = run(&p)?;
    let b = run(&p)?;
    let same = a.final_state.m == b.final_state.m
        && a.final_state.s == b.final_state.s
        && crate::io::ledger_csv(&a.ledger) == crate::io::ledger_csv(&b.ledger);
    Ok((same, if same { "bit-identical".into() } else { "runs differ".into() }))
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
