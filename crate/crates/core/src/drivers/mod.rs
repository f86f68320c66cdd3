//! Coupled time loops for the spin-diffusion (SDLLG) and stationary-spin
//! (SLLG) models.
//!
//! At every time `t_n` the spin accumulation `s^n` is computed from `m^n`
//! (a backward-Euler step from `s^{n-1}` for SDLLG, with `s^{-1} = s*`; the
//! stationary solve for SLLG). The pair is recorded and `m` is advanced by a
//! projected Heun step in the field `H = h_eff[m] + j0 s^n + f`, with `s^n`
//! frozen across both Heun stages.

mod experiments;

use serde::Serialize;

pub use experiments::*;

use crate::config::{MPreset, Mode, SPreset, SimulationConfig};
use crate::demag::DemagKernel;
use crate::error::{Error, Result};
use crate::grid::{Grid, VectorField};
use crate::llg::{self, EnergyLedger, LlgParams};
use crate::presets;
use crate::spin::{self, Diffusion, SolverOptions, SpinMode, SpinParams, SpinSystem};

/// Initial spin accumulation.
#[derive(Clone, Debug)]
pub enum SpinStart {
    Zero,
    /// `H_s[m*]`
    Stationary,
    Field(VectorField),
}

/// A fully resolved simulation: grid, parameters, initial data and stepping.
#[derive(Clone, Debug)]
pub struct Problem {
    pub mode: Mode,
    pub spin: SpinParams,
    pub llg: LlgParams,
    pub dt: f64,
    pub n_steps: usize,
    pub output_every: usize,
    pub c_stab: f64,
    pub m0: VectorField,
    pub s0: SpinStart,
    pub solver: SolverOptions,
}

impl Problem {
    pub fn from_config(cfg: &SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        let gs = &cfg.grid;
        let grid = Grid::new(gs.nx, gs.ny, gs.nz, gs.spacing())?;
        let mat = &cfg.material;
        let spin = SpinParams {
            d0: Diffusion::Uniform(mat.d0),
            beta: mat.beta,
            beta_prime: mat.beta_prime,
            gamma1: mat.gamma1,
            gamma2: mat.gamma2,
            j_e: VectorField::uniform(grid, mat.j_e),
            epsilon: mat.epsilon,
        };
        let llg = LlgParams {
            c_ex: mat.c_ex,
            alpha: mat.alpha,
            j0: mat.j0,
            mu0: mat.mu0,
            kappa: mat.kappa,
            e_an: mat.e_an,
            f: (mat.f != [0.0; 3]).then(|| VectorField::uniform(grid, mat.f)),
        };
        let init = &cfg.initial;
        let m0 = match init.m {
            MPreset::Uniform => presets::uniform(grid, init.direction)?,
            MPreset::SmoothTwist => presets::smooth_twist(grid, init.twist),
            MPreset::RandomUnit => presets::random_unit(grid, init.seed),
            MPreset::File => {
                let path = init.file.as_ref().expect("validated");
                crate::io::read_raw_field(path, grid)?
            }
        };
        let s0 = match init.s {
            SPreset::Zero => SpinStart::Zero,
            SPreset::Stationary => SpinStart::Stationary,
            SPreset::Uniform => SpinStart::Field(VectorField::uniform(grid, init.s_value)),
        };
        let dt = cfg.dt();
        let n_steps = ((cfg.time.t_end / dt).round() as usize).max(1);
        let p = Self {
            mode: cfg.mode,
            spin,
            llg,
            dt,
            n_steps,
            output_every: cfg.time.output_every,
            c_stab: cfg.time.c_stab,
            m0,
            s0,
            solver: cfg.solver,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn grid(&self) -> &Grid {
        self.m0.grid()
    }

    pub fn t_end(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let g = *self.grid();
        self.spin.validate(&g)?;
        self.llg.validate(&g)?;
        self.m0.check_unit(spin::UNIT_TOL)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParam(format!("dt must be positive, got {}", self.dt)));
        }
        if self.output_every == 0 {
            return Err(Error::InvalidParam("output_every must be at least 1".into()));
        }
        if self.mode == Mode::Sdllg && !(self.spin.epsilon > 0.0) {
            return Err(Error::InvalidParam("sdllg mode requires epsilon > 0".into()));
        }
        if let SpinStart::Field(s) = &self.s0 {
            g.ensure_same(s.grid())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub m: VectorField,
    pub s: VectorField,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepStats {
    pub step: usize,
    pub iterations: usize,
    pub residual: f64,
}

/// State handed to observers at every time level, before `m` is advanced.
pub struct StepView<'a> {
    pub step: usize,
    pub t: f64,
    pub m: &'a VectorField,
    pub s: &'a VectorField,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub mode: Mode,
    pub dt: f64,
    /// Snapshots at the output cadence (empty when fields were not kept).
    pub snapshots: Vec<Snapshot>,
    pub final_state: Snapshot,
    pub ledger: EnergyLedger,
    pub solver_stats: Vec<StepStats>,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid {
        self.final_state.m.grid()
    }
}

/// `pi = mu0 h_d + j0 s`: the nonlocal part of the field seen by `m`.
pub fn pi_field(h_d: Option<&VectorField>, s: &VectorField, lp: &LlgParams) -> Result<VectorField> {
    let torque = s.scaled(lp.j0);
    match h_d {
        Some(hd) if lp.mu0 != 0.0 => torque.axpy(lp.mu0, hd),
        _ => Ok(torque),
    }
}

/// `pi[m] = mu0 h_d[m] + j0 H_s[m]` evaluated from scratch.
pub fn pi_operator(
    m: &VectorField,
    sp: &SpinParams,
    lp: &LlgParams,
    kernel: Option<&DemagKernel>,
    opts: &SolverOptions,
) -> Result<VectorField> {
    let s = spin::solve_stationary_spin(m, sp, opts, None)?.s;
    let hd = kernel.map(|k| k.apply(m)).transpose()?;
    pi_field(hd.as_ref(), &s, lp)
}

/// `H = c_ex Lap m + 2 kappa (m.e) e + pi + f`
fn total_field(m: &VectorField, pi: &VectorField, lp: &LlgParams) -> Result<VectorField> {
    let h = llg::local_field(m, lp).add(pi)?;
    match &lp.f {
        Some(f) => h.add(f),
        None => Ok(h),
    }
}

pub fn run_sdllg(problem: &Problem) -> Result<Trajectory> {
    if problem.mode != Mode::Sdllg {
        return Err(Error::InvalidParam("run_sdllg called with a non-sdllg problem".into()));
    }
    simulate(problem, true, &mut |_| Ok(()))
}

pub fn run_sllg(problem: &Problem) -> Result<Trajectory> {
    if problem.mode != Mode::Sllg {
        return Err(Error::InvalidParam("run_sllg called with a non-sllg problem".into()));
    }
    simulate(problem, true, &mut |_| Ok(()))
}

/// Runs the problem in its own mode.
pub fn run(problem: &Problem) -> Result<Trajectory> {
    simulate(problem, true, &mut |_| Ok(()))
}

/// Time loop shared by both models. `observer` sees every time level;
/// snapshots are stored only when `keep_fields` is set.
pub fn simulate(
    problem: &Problem,
    keep_fields: bool,
    observer: &mut dyn FnMut(&StepView<'_>) -> Result<()>,
) -> Result<Trajectory> {
    problem.validate()?;
    let g = *problem.grid();
    let lp = &problem.llg;
    let sp = &problem.spin;
    let dt = problem.dt;
    let kernel = (lp.mu0 != 0.0).then(|| DemagKernel::new(&g));
    let mut ledger = EnergyLedger::new();
    let limit = lp.stability_limit(g.h, problem.c_stab);
    if dt > limit {
        ledger.warn(format!(
            "dt = {dt} exceeds the stability bound c_stab h^2 / c_ex = {limit}"
        ));
    }

    let mut m = problem.m0.clone();
    let mut s_prev = match (&problem.s0, problem.mode) {
        (_, Mode::Sllg) | (SpinStart::Zero, _) => VectorField::zeros(g),
        (SpinStart::Field(s), _) => s.clone(),
        (SpinStart::Stationary, _) => {
            spin::solve_stationary_spin(&m, sp, &problem.solver, None)
                .map_err(|e| e.at_step(0))?
                .s
        }
    };
    let mut s_prev2: Option<VectorField> = None;
    let mut snapshots = Vec::new();
    let mut stats = Vec::with_capacity(problem.n_steps + 1);
    let mut final_state = None;

    for n in 0..=problem.n_steps {
        let t = n as f64 * dt;
        // linear extrapolation of the last two spin states as initial guess
        let guess = match &s_prev2 {
            Some(older) => Some(s_prev.scaled(2.0).axpy(-1.0, older)?),
            None if problem.mode == Mode::Sdllg || n > 0 => Some(s_prev.clone()),
            None => None,
        };
        let mode = match problem.mode {
            Mode::Sdllg => SpinMode::Transient { dt, s_old: &s_prev },
            Mode::Sllg => SpinMode::Stationary,
        };
        let sol = SpinSystem::assemble(&m, sp, mode)
            .and_then(|sys| sys.solve(&problem.solver, guess.as_ref()))
            .map_err(|e| e.at_step(n))?;
        stats.push(StepStats {
            step: n,
            iterations: sol.stats.iterations,
            residual: sol.stats.residual,
        });
        let s = sol.s;
        observer(&StepView { step: n, t, m: &m, s: &s }).map_err(|e| e.at_step(n))?;

        let h_d = kernel.as_ref().map(|k| k.apply(&m)).transpose()?;
        let last = n == problem.n_steps;
        if last || n % problem.output_every == 0 {
            let e = llg::energy(&m, lp, kernel.as_ref(), h_d.as_ref())?;
            ledger.record(t, &e);
            let snap = Snapshot {
                step: n,
                t,
                m: m.clone(),
                s: s.clone(),
            };
            if last {
                if keep_fields {
                    snapshots.push(snap.clone());
                }
                final_state = Some(snap);
            } else if keep_fields {
                snapshots.push(snap);
            }
        }
        if last {
            break;
        }

        let torque = s.scaled(lp.j0);
        let pi = pi_field(h_d.as_ref(), &s, lp)?;
        let h0 = total_field(&m, &pi, lp)?;
        let stage = |x: &VectorField| -> Result<VectorField> {
            let hd = kernel.as_ref().map(|k| k.apply(x)).transpose()?;
            total_field(x, &pi_field(hd.as_ref(), &s, lp)?, lp)
        };
        let next = llg::heun_step(&m, &h0, stage, dt, lp.alpha).map_err(|e| e.at_step(n))?;
        let other = h0.axpy(-lp.c_ex, &crate::grid::neumann_laplacian(&m))?;
        ledger.accumulate(dt, lp.alpha, &m, &next, Some(&torque), &other)?;
        m = next;
        s_prev2 = Some(std::mem::replace(&mut s_prev, s));
    }

    Ok(Trajectory {
        mode: problem.mode,
        dt,
        snapshots,
        final_state: final_state.expect("loop records the last step"),
        ledger,
        solver_stats: stats,
    })
}
