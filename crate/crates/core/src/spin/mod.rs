//! Spin accumulation: the spin current, the implicit transient step, and the
//! stationary solve `s = H_s[m]`.
//!
//! The operator is
//!
//! ```text
//! L s = c s - div[A_m grad s] + gamma1 s + gamma2 s x m,   A_m = D0 (I - beta beta' m (x) m)
//! ```
//!
//! with `c = eps / dt` for a backward-Euler step and `c = 0` for the
//! stationary problem. Boundary faces carry no diffusive flux
//! (`d_n s = 0`); the drive `-(beta/2) j_e (x) m` is evaluated on every face,
//! boundary faces included, so its boundary contribution is exactly the
//! `-(beta/2) (m . phi)(j_e . n)` surface term of the weak form. The right-hand
//! side is `b = div[-(beta/2) j_e (x) m] + c s_old`.

mod krylov;
mod precond;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{divergence, FaceTensor, Grid, VectorField};
use crate::vec3::{self, Mat3, Vec3, MAT_ZERO};

pub use krylov::{bicgstab, gmres, SolveStats};
pub use precond::PreconditionerKind;

/// Unit-length tolerance accepted for magnetization inputs.
pub const UNIT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub enum Diffusion {
    Uniform(f64),
    PerCell(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct SpinParams {
    pub d0: Diffusion,
    pub beta: f64,
    pub beta_prime: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Applied electric current, constant in time.
    pub j_e: VectorField,
    /// Time-scale separation; zero selects the stationary model.
    pub epsilon: f64,
}

impl SpinParams {
    /// Reference parameters (`D0 = 1`, `beta = 0.9`, `beta' = 0.8`,
    /// `gamma1 = gamma2 = 1`) with no current and `epsilon = 0`.
    pub fn reference(grid: Grid) -> Self {
        Self {
            d0: Diffusion::Uniform(1.0),
            beta: 0.9,
            beta_prime: 0.8,
            gamma1: 1.0,
            gamma2: 1.0,
            j_e: VectorField::zeros(grid),
            epsilon: 0.0,
        }
    }

    pub fn with_current(mut self, j_e: VectorField) -> Self {
        self.j_e = j_e;
        self
    }

    #[inline]
    pub fn beta_beta(&self) -> f64 {
        self.beta * self.beta_prime
    }

    #[inline]
    pub fn d0_at(&self, idx: usize) -> f64 {
        match &self.d0 {
            Diffusion::Uniform(d) => *d,
            Diffusion::PerCell(v) => v[idx],
        }
    }

    pub fn min_d0(&self) -> f64 {
        match &self.d0 {
            Diffusion::Uniform(d) => *d,
            Diffusion::PerCell(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    fn mean_d0(&self) -> f64 {
        match &self.d0 {
            Diffusion::Uniform(d) => *d,
            Diffusion::PerCell(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }

    /// Uniform lower bound `min D0 * (1 - beta beta')` of `A_m`.
    pub fn ellipticity_constant(&self) -> f64 {
        self.min_d0() * (1.0 - self.beta_beta())
    }

    /// `beta' = 0` is accepted: it is the decoupled limit of the rank-one term.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        grid.ensure_same(self.j_e.grid())?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParam(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.beta_prime >= 0.0 && self.beta_prime < 1.0) {
            return Err(Error::InvalidParam(format!(
                "beta_prime must lie in [0, 1), got {}",
                self.beta_prime
            )));
        }
        if !(self.gamma1 > 0.0) || !(self.gamma2 >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "gamma1 must be positive and gamma2 nonnegative, got {} and {}",
                self.gamma1, self.gamma2
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParam(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        match &self.d0 {
            Diffusion::Uniform(d) if !(*d > 0.0 && d.is_finite()) => {
                return Err(Error::InvalidParam(format!("D0 must be positive, got {d}")));
            }
            Diffusion::PerCell(v) => {
                if v.len() != grid.n_cells() {
                    return Err(Error::InvalidParam(format!(
                        "D0 field has {} values for {} cells",
                        v.len(),
                        grid.n_cells()
                    )));
                }
                if let Some(bad) = v.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
                    return Err(Error::InvalidParam(format!("D0 must be positive, found {bad}")));
                }
            }
            _ => {}
        }
        if !self.j_e.is_finite() {
            return Err(Error::InvalidParam("j_e contains non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KrylovMethod {
    #[default]
    Gmres,
    Bicgstab,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    pub method: KrylovMethod,
    pub preconditioner: PreconditionerKind,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 5000,
            restart: 60,
            method: KrylovMethod::Gmres,
            preconditioner: PreconditionerKind::Spectral,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// Arithmetic mean of two cell vectors, renormalized; falls back to `a` when
/// the mean vanishes.
#[inline]
pub fn face_unit_average(a: Vec3, b: Vec3) -> Vec3 {
    let mean = vec3::scale(0.5, vec3::add(a, b));
    let n = vec3::norm(mean);
    if n > 0.0 {
        vec3::scale(1.0 / n, mean)
    } else {
        a
    }
}

#[inline]
fn harmonic_mean(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Pointwise spin current
/// `J = D0 [G - beta beta' (G m) (x) m] - (beta/2) j_e (x) m`, where row `i`,
/// column `c` of `G` is `d_i s_c`.
pub fn spin_current_matrix(grad: &Mat3, m: Vec3, j_e: Vec3, d0: f64, beta: f64, beta_prime: f64) -> Mat3 {
    let bb = beta * beta_prime;
    let mut out = MAT_ZERO;
    for i in 0..3 {
        let gm = vec3::dot(grad[i], m);
        for c in 0..3 {
            out[i][c] = d0 * (grad[i][c] - bb * gm * m[c]) - 0.5 * beta * j_e[i] * m[c];
        }
    }
    out
}

/// Spin current on every face. Interior faces use the renormalized mean of
/// the adjacent magnetizations, the arithmetic mean of `j_e`, and the harmonic
/// mean of `D0`; boundary faces use the adjacent cell's values.
pub fn spin_current(grad_s: &FaceTensor, m: &VectorField, p: &SpinParams) -> Result<FaceTensor> {
    let g = *grad_s.grid();
    g.ensure_same(m.grid())?;
    g.ensure_same(p.j_e.grid())?;
    let dims = g.dims();
    Ok(grad_s.map_faces(|axis, c, grad| {
        let (lo, hi) = face_cells(&g, axis, c);
        let (mf, jf, df) = match (lo, hi) {
            (Some(a), Some(b)) => (
                face_unit_average(m.get(a), m.get(b)),
                vec3::scale(0.5, vec3::add(p.j_e.get(a), p.j_e.get(b))),
                harmonic_mean(p.d0_at(a), p.d0_at(b)),
            ),
            (Some(a), None) | (None, Some(a)) => (m.get(a), p.j_e.get(a), p.d0_at(a)),
            (None, None) => unreachable!("face with no adjacent cell on {dims:?}"),
        };
        spin_current_matrix(grad, mf, jf, df, p.beta, p.beta_prime)
    }))
}

/// Cells on the low and high side of a face.
fn face_cells(g: &Grid, axis: usize, c: [usize; 3]) -> (Option<usize>, Option<usize>) {
    let n = g.dims()[axis];
    let hi = (c[axis] < n).then(|| g.idx(c[0], c[1], c[2]));
    let lo = (c[axis] > 0).then(|| {
        let mut l = c;
        l[axis] -= 1;
        g.idx(l[0], l[1], l[2])
    });
    (lo, hi)
}

/// `div[-(beta/2) j_e (x) m]` including the boundary faces.
pub fn drive(m: &VectorField, p: &SpinParams) -> Result<VectorField> {
    let zero = FaceTensor::zeros(*m.grid());
    Ok(divergence(&spin_current(&zero, m, p)?))
}

/// Time discretization of the spin equation.
#[derive(Clone, Copy, Debug)]
pub enum SpinMode<'a> {
    Stationary,
    /// Backward Euler from `s_old` with step `dt`; uses `p.epsilon`.
    Transient { dt: f64, s_old: &'a VectorField },
}

/// Assembled (matrix-free) spin operator and right-hand side for a frozen `m`.
pub struct SpinSystem {
    grid: Grid,
    m: Vec<Vec3>,
    /// Face data indexed by the low-side cell; entries on the last layer
    /// along each axis are unused.
    face_m: [Vec<Vec3>; 3],
    face_d: [Vec<f64>; 3],
    shift: f64,
    gamma1: f64,
    gamma2: f64,
    beta_beta: f64,
    rhs: VectorField,
    mean_d0: f64,
}

impl SpinSystem {
    pub fn assemble(m: &VectorField, p: &SpinParams, mode: SpinMode<'_>) -> Result<Self> {
        let g = *m.grid();
        p.validate(&g)?;
        m.check_unit(UNIT_TOL)?;
        let (shift, s_old) = match mode {
            SpinMode::Stationary => (0.0, None),
            SpinMode::Transient { dt, s_old } => {
                if !(dt > 0.0) {
                    return Err(Error::InvalidParam(format!("dt must be positive, got {dt}")));
                }
                g.ensure_same(s_old.grid())?;
                if p.epsilon == 0.0 {
                    (0.0, None)
                } else {
                    (p.epsilon / dt, Some(s_old))
                }
            }
        };
        let dims = g.dims();
        let md = m.data();
        let mut face_m: [Vec<Vec3>; 3] = Default::default();
        let mut face_d: [Vec<f64>; 3] = Default::default();
        for axis in 0..3 {
            let s = g.stride(axis);
            face_m[axis] = (0..g.n_cells())
                .map(|idx| {
                    if g.coords(idx)[axis] + 1 < dims[axis] {
                        face_unit_average(md[idx], md[idx + s])
                    } else {
                        [0.0; 3]
                    }
                })
                .collect();
            face_d[axis] = (0..g.n_cells())
                .map(|idx| {
                    if g.coords(idx)[axis] + 1 < dims[axis] {
                        harmonic_mean(p.d0_at(idx), p.d0_at(idx + s))
                    } else {
                        0.0
                    }
                })
                .collect();
        }
        let mut rhs = drive(m, p)?;
        if let Some(old) = s_old {
            rhs = rhs.axpy(shift, old)?;
        }
        Ok(Self {
            grid: g,
            m: md.to_vec(),
            face_m,
            face_d,
            shift,
            gamma1: p.gamma1,
            gamma2: p.gamma2,
            beta_beta: p.beta_beta(),
            rhs,
            mean_d0: p.mean_d0(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rhs(&self) -> &VectorField {
        &self.rhs
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    #[inline]
    fn anisotropic(&self, d: f64, mf: Vec3, v: Vec3) -> Vec3 {
        let k = self.beta_beta * vec3::dot(v, mf);
        [d * (v[0] - k * mf[0]), d * (v[1] - k * mf[1]), d * (v[2] - k * mf[2])]
    }

    /// `out = L s` on flat component vectors.
    pub fn apply_flat(&self, s: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let dims = g.dims();
        let inv_h2 = 1.0 / (g.h * g.h);
        let react = self.shift + self.gamma1;
        out.par_chunks_mut(3).enumerate().for_each(|(idx, o)| {
            let sc = [s[3 * idx], s[3 * idx + 1], s[3 * idx + 2]];
            let c = g.coords(idx);
            let mut acc = vec3::axpy(vec3::scale(react, sc), self.gamma2, vec3::cross(sc, self.m[idx]));
            for axis in 0..3 {
                let st = g.stride(axis);
                if c[axis] + 1 < dims[axis] {
                    let nb = idx + st;
                    let diff = vec3::sub([s[3 * nb], s[3 * nb + 1], s[3 * nb + 2]], sc);
                    let f = self.anisotropic(self.face_d[axis][idx], self.face_m[axis][idx], diff);
                    acc = vec3::axpy(acc, -inv_h2, f);
                }
                if c[axis] > 0 {
                    let nb = idx - st;
                    let diff = vec3::sub([s[3 * nb], s[3 * nb + 1], s[3 * nb + 2]], sc);
                    let f = self.anisotropic(self.face_d[axis][nb], self.face_m[axis][nb], diff);
                    acc = vec3::axpy(acc, -inv_h2, f);
                }
            }
            o.copy_from_slice(&acc);
        });
    }

    pub fn apply(&self, s: &VectorField) -> Result<VectorField> {
        self.grid.ensure_same(s.grid())?;
        let mut out = vec![0.0; 3 * self.grid.n_cells()];
        self.apply_flat(&s.to_flat(), &mut out);
        VectorField::from_flat(self.grid, &out)
    }

    /// Per-cell diagonal 3x3 blocks of `L`.
    pub fn diagonal_blocks(&self) -> Vec<Mat3> {
        let g = self.grid;
        let dims = g.dims();
        let inv_h2 = 1.0 / (g.h * g.h);
        (0..g.n_cells())
            .map(|idx| {
                let c = g.coords(idx);
                let m = self.m[idx];
                let react = self.shift + self.gamma1;
                let g2 = self.gamma2;
                // s x m = K s
                let mut blk = [
                    [react, g2 * m[2], -g2 * m[1]],
                    [-g2 * m[2], react, g2 * m[0]],
                    [g2 * m[1], -g2 * m[0], react],
                ];
                let mut add_face = |d: f64, mf: Vec3| {
                    for r in 0..3 {
                        for col in 0..3 {
                            let id = if r == col { 1.0 } else { 0.0 };
                            blk[r][col] += inv_h2 * d * (id - self.beta_beta * mf[r] * mf[col]);
                        }
                    }
                };
                for axis in 0..3 {
                    if c[axis] + 1 < dims[axis] {
                        add_face(self.face_d[axis][idx], self.face_m[axis][idx]);
                    }
                    if c[axis] > 0 {
                        let nb = idx - g.stride(axis);
                        add_face(self.face_d[axis][nb], self.face_m[axis][nb]);
                    }
                }
                blk
            })
            .collect()
    }

    /// Solves `L s = b`.
    pub fn solve(&self, opts: &SolverOptions, warm_start: Option<&VectorField>) -> Result<SpinSolution> {
        if !(opts.tol > 0.0) {
            return Err(Error::InvalidParam(format!("solver tolerance must be positive, got {}", opts.tol)));
        }
        let n = 3 * self.grid.n_cells();
        let b = self.rhs.to_flat();
        let mut x = match warm_start {
            Some(w) => {
                self.grid.ensure_same(w.grid())?;
                w.to_flat()
            }
            None => vec![0.0; n],
        };
        let op = |v: &[f64], out: &mut [f64]| self.apply_flat(v, out);
        let stats = match opts.preconditioner {
            PreconditionerKind::BlockJacobi => {
                let inv_blocks = self
                    .diagonal_blocks()
                    .iter()
                    .map(|b| vec3::mat_inverse(b).ok_or_else(|| Error::InvalidParam("singular diagonal block".into())))
                    .collect::<Result<Vec<_>>>()?;
                let pc = precond::BlockJacobi { inv_blocks };
                let prec = |r: &[f64], z: &mut [f64]| pc.apply(r, z);
                self.run_krylov(opts, &op, &prec, &b, &mut x)?
            }
            PreconditionerKind::Spectral => {
                // isotropic surrogate: D0 times the mean eigenvalue of I - bb' m(x)m
                let diffusion = self.mean_d0 * (1.0 - self.beta_beta / 3.0);
                let pc = precond::Spectral::new(&self.grid, self.shift + self.gamma1, diffusion);
                let prec = |r: &[f64], z: &mut [f64]| pc.apply(r, z);
                self.run_krylov(opts, &op, &prec, &b, &mut x)?
            }
        };
        Ok(SpinSolution {
            s: VectorField::from_flat(self.grid, &x)?,
            stats,
        })
    }

    fn run_krylov(
        &self,
        opts: &SolverOptions,
        op: &dyn Fn(&[f64], &mut [f64]),
        prec: &dyn Fn(&[f64], &mut [f64]),
        b: &[f64],
        x: &mut [f64],
    ) -> Result<SolveStats> {
        match opts.method {
            KrylovMethod::Gmres => gmres(op, prec, b, x, opts.tol, opts.max_iter, opts.restart),
            KrylovMethod::Bicgstab => bicgstab(op, prec, b, x, opts.tol, opts.max_iter),
        }
    }

    /// `||L s - b|| / ||b||` (or `||L s||` when `b = 0`), Euclidean.
    pub fn relative_residual(&self, s: &VectorField) -> Result<f64> {
        let ls = self.apply(s)?;
        let r = ls.sub(&self.rhs)?;
        let rn = crate::grid::norm_l2(&r);
        let bn = crate::grid::norm_l2(&self.rhs);
        Ok(if bn > 0.0 { rn / bn } else { rn / self.grid.cell_volume().sqrt() })
    }
}

#[derive(Clone, Debug)]
pub struct SpinSolution {
    pub s: VectorField,
    pub stats: SolveStats,
}

/// `s = H_s[m]`, the stationary spin accumulation.
pub fn solve_stationary_spin(
    m: &VectorField,
    p: &SpinParams,
    opts: &SolverOptions,
    warm_start: Option<&VectorField>,
) -> Result<SpinSolution> {
    SpinSystem::assemble(m, p, SpinMode::Stationary)?.solve(opts, warm_start)
}

/// One backward-Euler step of `eps d_t s = div J - gamma1 s - gamma2 s x m`
/// with `m` frozen. `eps = 0` falls through to the stationary solve.
pub fn step_spin_transient(
    s_old: &VectorField,
    m: &VectorField,
    p: &SpinParams,
    dt: f64,
    opts: &SolverOptions,
) -> Result<SpinSolution> {
    SpinSystem::assemble(m, p, SpinMode::Transient { dt, s_old })?.solve(opts, Some(s_old))
}

/// Smallest eigenvalue of `A_m` over all cells. The spectrum of
/// `I - bb' m (x) m` is `{1 - bb' |m|^2, 1, 1}`.
pub fn ellipticity_report(m: &VectorField, p: &SpinParams) -> Result<f64> {
    m.check_unit(UNIT_TOL)?;
    p.validate(m.grid())?;
    let bb = p.beta_beta();
    Ok(m
        .data()
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let d = p.d0_at(idx);
            d * (1.0 - bb * vec3::dot(*v, *v)).min(1.0)
        })
        .fold(f64::INFINITY, f64::min))
}
