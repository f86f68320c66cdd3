//! Magnetization dynamics: effective field, the Landau-Lifshitz right-hand
//! side, a projected Heun step, and the energy ledger.

use serde::{Deserialize, Serialize};

use crate::demag::DemagKernel;
use crate::error::{Error, Result};
use crate::grid::{det_sum, gradient_norm_sq, inner_l2, neumann_laplacian, Grid, VectorField};
use crate::vec3::{self, Vec3};

/// Unit-length tolerance for magnetization entering the LLG kernels.
pub const UNIT_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct LlgParams {
    pub c_ex: f64,
    pub alpha: f64,
    pub j0: f64,
    pub mu0: f64,
    pub kappa: f64,
    pub e_an: Vec3,
    /// Applied field; `None` means zero.
    pub f: Option<VectorField>,
}

impl Default for LlgParams {
    fn default() -> Self {
        Self {
            c_ex: 1.0,
            alpha: 1.0,
            j0: 1.0,
            mu0: 1.0,
            kappa: 0.0,
            e_an: [0.0, 0.0, 1.0],
            f: None,
        }
    }
}

impl LlgParams {
    /// Exchange only: no demag, anisotropy, spin torque or applied field.
    pub fn exchange_only(c_ex: f64, alpha: f64) -> Self {
        Self {
            c_ex,
            alpha,
            j0: 0.0,
            mu0: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.c_ex > 0.0 && self.c_ex.is_finite()) {
            return Err(Error::InvalidParam(format!("c_ex must be positive, got {}", self.c_ex)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParam(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !self.j0.is_finite() {
            return Err(Error::InvalidParam(format!("j0 must be finite, got {}", self.j0)));
        }
        if !(self.mu0 >= 0.0 && self.mu0.is_finite()) {
            return Err(Error::InvalidParam(format!("mu0 must be >= 0, got {}", self.mu0)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParam(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if self.kappa > 0.0 && (vec3::norm(self.e_an) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParam("easy axis must be a unit vector".into()));
        }
        if let Some(f) = &self.f {
            grid.ensure_same(f.grid())?;
            if !f.is_finite() {
                return Err(Error::InvalidParam("applied field contains non-finite values".into()));
            }
        }
        Ok(())
    }

    /// Largest step accepted without a stability warning.
    pub fn stability_limit(&self, h: f64, c_stab: f64) -> f64 {
        c_stab * h * h / self.c_ex
    }
}

/// Local part of the effective field: `c_ex Lap m + 2 kappa (m . e) e`.
pub fn local_field(m: &VectorField, lp: &LlgParams) -> VectorField {
    let mut h = neumann_laplacian(m).scaled(lp.c_ex);
    if lp.kappa > 0.0 {
        let e = lp.e_an;
        for (hv, mv) in h.data_mut().iter_mut().zip(m.data()) {
            *hv = vec3::axpy(*hv, 2.0 * lp.kappa * vec3::dot(*mv, e), e);
        }
    }
    h
}

/// `h_eff = c_ex Lap m + 2 kappa (m . e) e + mu0 h_d[m]`. The demag term is
/// skipped when `mu0 = 0` or no kernel is given.
pub fn effective_field(m: &VectorField, lp: &LlgParams, kernel: Option<&DemagKernel>) -> Result<VectorField> {
    m.check_unit(UNIT_TOL)?;
    let h = local_field(m, lp);
    match kernel {
        Some(k) if lp.mu0 != 0.0 => h.axpy(lp.mu0, &k.apply(m)?),
        _ => Ok(h),
    }
}

/// Pointwise Landau-Lifshitz velocity
/// `-(m x H + alpha m x (m x H)) / (1 + alpha^2)`.
#[inline]
pub fn llg_velocity(m: Vec3, h: Vec3, alpha: f64) -> Vec3 {
    let mxh = vec3::cross(m, h);
    let mxmxh = vec3::cross(m, mxh);
    vec3::scale(-1.0 / (1.0 + alpha * alpha), vec3::axpy(mxh, alpha, mxmxh))
}

pub fn llg_rhs(m: &VectorField, h: &VectorField, alpha: f64) -> Result<VectorField> {
    m.zip_map(h, |mv, hv| llg_velocity(mv, hv, alpha))
}

fn project(v: &VectorField) -> Result<VectorField> {
    for (cell, x) in v.data().iter().enumerate() {
        let n = vec3::norm(*x);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::ZeroMagnetization { cell });
        }
    }
    v.normalized()
}

/// Heun step with projection onto the sphere after the predictor and the
/// corrector. `h0` is the field at `m`; `field` evaluates it at the predictor.
pub fn heun_step<F>(m: &VectorField, h0: &VectorField, mut field: F, dt: f64, alpha: f64) -> Result<VectorField>
where
    F: FnMut(&VectorField) -> Result<VectorField>,
{
    let v0 = llg_rhs(m, h0, alpha)?;
    let predictor = project(&m.axpy(dt, &v0)?)?;
    let h1 = field(&predictor)?;
    let v1 = llg_rhs(&predictor, &h1, alpha)?;
    let raw = m.zip_map(&v0, |a, b| vec3::axpy(a, 0.5 * dt, b))?.axpy(0.5 * dt, &v1)?;
    project(&raw)
}

/// One projected Heun step with the field supplied by `field`.
pub fn step_llg<F>(m: &VectorField, mut field: F, dt: f64, alpha: f64) -> Result<VectorField>
where
    F: FnMut(&VectorField) -> Result<VectorField>,
{
    m.check_unit(UNIT_TOL)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidParam(format!("dt must be positive, got {dt}")));
    }
    let h0 = field(m)?;
    heun_step(m, &h0, field, dt, alpha)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Energy {
    pub exchange: f64,
    pub anisotropy: f64,
    pub magnetostatic: f64,
    pub zeeman: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.exchange + self.anisotropy + self.magnetostatic + self.zeeman
    }
}

/// Energy of `m`; `h_d` is the demagnetizing field of `m` if already known.
pub fn energy(m: &VectorField, lp: &LlgParams, kernel: Option<&DemagKernel>, h_d: Option<&VectorField>) -> Result<Energy> {
    m.check_unit(UNIT_TOL)?;
    let g = m.grid();
    let exchange = 0.5 * lp.c_ex * gradient_norm_sq(m);
    let anisotropy = if lp.kappa > 0.0 {
        let d = m.data();
        lp.kappa
            * g.cell_volume()
            * det_sum(d.len(), |i| {
                let c = vec3::dot(d[i], lp.e_an);
                1.0 - c * c
            })
    } else {
        0.0
    };
    let magnetostatic = if lp.mu0 != 0.0 {
        let own;
        let hd = match (h_d, kernel) {
            (Some(hd), _) => hd,
            (None, Some(k)) => {
                own = k.apply(m)?;
                &own
            }
            (None, None) => return Err(Error::InvalidParam("mu0 > 0 requires a demag kernel".into())),
        };
        -0.5 * lp.mu0 * inner_l2(hd, m)?
    } else {
        0.0
    };
    let zeeman = match &lp.f {
        Some(f) => -inner_l2(f, m)?,
        None => 0.0,
    };
    Ok(Energy {
        exchange,
        anisotropy,
        magnetostatic,
        zeeman,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    pub exchange: f64,
    pub anisotropy: f64,
    pub magnetostatic: f64,
    /// Includes the Zeeman term when an applied field is present.
    pub total: f64,
    pub dissipation: f64,
    pub spin_work: f64,
    pub slack: f64,
    /// Exchange-only bookkeeping: demag, anisotropy, applied field and spin
    /// torque all count as work.
    pub reduced_slack: f64,
}

/// Running energy balance. Time derivatives are backward differences and the
/// integrals use the left rectangle rule.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
    pub warnings: Vec<String>,
    initial: Option<(f64, f64)>,
    dissipation: f64,
    spin_work: f64,
    reduced_work: f64,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the contributions of the step `m_old -> m_new`. `torque` is
    /// `j0 s` and `other` is the non-exchange field `H - c_ex Lap m`, both at
    /// the left endpoint.
    pub fn accumulate(
        &mut self,
        dt: f64,
        alpha: f64,
        m_old: &VectorField,
        m_new: &VectorField,
        torque: Option<&VectorField>,
        other: &VectorField,
    ) -> Result<()> {
        let v = m_new.sub(m_old)?.scaled(1.0 / dt);
        self.dissipation += alpha * dt * inner_l2(&v, &v)?;
        if let Some(t) = torque {
            self.spin_work += dt * inner_l2(&v, t)?;
        }
        self.reduced_work += dt * inner_l2(&v, other)?;
        Ok(())
    }

    pub fn record(&mut self, t: f64, e: &Energy) -> &LedgerRow {
        let (f0, e0) = *self.initial.get_or_insert((e.total(), e.exchange));
        let slack = f0 + self.spin_work - e.total() - self.dissipation;
        let reduced_slack = e0 + self.reduced_work - e.exchange - self.dissipation;
        self.rows.push(LedgerRow {
            t,
            exchange: e.exchange,
            anisotropy: e.anisotropy,
            magnetostatic: e.magnetostatic,
            total: e.total(),
            dissipation: self.dissipation,
            spin_work: self.spin_work,
            slack,
            reduced_slack,
        });
        self.rows.last().unwrap()
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    /// Smallest recorded slack (`+inf` when empty).
    pub fn min_slack(&self) -> f64 {
        self.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn min_reduced_slack(&self) -> f64 {
        self.rows.iter().map(|r| r.reduced_slack).fold(f64::INFINITY, f64::min)
    }

    /// Magnitude of the most negative slack, zero if none is negative.
    pub fn worst_negative_slack(&self) -> f64 {
        (-self.min_slack()).max(0.0)
    }
}

/// Slack at the last recorded time not after `t`.
pub fn energy_inequality_slack(ledger: &EnergyLedger, t: f64) -> Option<f64> {
    ledger.rows.iter().rev().find(|r| r.t <= t).map(|r| r.slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demag::DemagKernel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(v: Vec3) -> VectorField {
        VectorField::uniform(Grid::cube(1, 1.0).unwrap(), v)
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(llg_velocity([1.0, 0.0, 0.0], [0.0; 3], 0.3), [0.0; 3]);
        let v = llg_velocity([1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 0.0);
        assert!(vec3::norm(vec3::sub(v, [0.0, 1.0, 0.0])) < 1e-15);
        assert_eq!(llg_velocity([0.0, 0.0, 1.0], [0.0, 0.0, 2.0], 0.5), [0.0; 3]);
    }

    #[test]
    fn rhs_is_tangent_and_satisfies_gilbert_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = vec3::scale(
                1.0,
                {
                    let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                    vec3::scale(1.0 / vec3::norm(v), v)
                },
            );
            let h = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let alpha = rng.random_range(0.01..2.0);
            let v = llg_velocity(m, h, alpha);
            assert!(vec3::dot(v, m).abs() < 1e-14);
            let gilbert = vec3::axpy(vec3::scale(-1.0, vec3::cross(m, h)), alpha, vec3::cross(m, v));
            assert!(vec3::norm(vec3::sub(v, gilbert)) < 1e-13);
        }
    }

    #[test]
    fn zero_field_leaves_m_unchanged() {
        let m = single([0.6, 0.0, 0.8]);
        let out = step_llg(&m, |m| Ok(VectorField::zeros(*m.grid())), 0.1, 0.5).unwrap();
        assert_eq!(out.data(), m.data());
    }

    fn precess(dt: f64, periods: f64) -> (f64, f64) {
        let theta: f64 = 0.7;
        let m0 = [theta.sin(), 0.0, theta.cos()];
        let mut m = single(m0);
        let steps = (periods * std::f64::consts::TAU / dt).round() as usize;
        let field = |m: &VectorField| Ok(VectorField::uniform(*m.grid(), [0.0, 0.0, 1.0]));
        let mut err2 = 0.0;
        for n in 1..=steps {
            m = step_llg(&m, field, dt, 0.0).unwrap();
            let t = n as f64 * dt;
            // dm/dt = -m x e3 rotates counterclockwise about e3
            let exact = [theta.sin() * t.cos(), theta.sin() * t.sin(), theta.cos()];
            let d = vec3::sub(m.get(0), exact);
            err2 += dt * vec3::dot(d, d);
            assert!((vec3::norm(m.get(0)) - 1.0).abs() <= 1e-15);
            assert!((m.get(0)[2] - theta.cos()).abs() < dt * dt, "{} {}", m.get(0)[2], theta.cos());
        }
        (err2.sqrt(), m.get(0)[2])
    }

    #[test]
    fn precession_is_second_order() {
        let (e1, _) = precess(0.02, 1.0);
        let (e2, _) = precess(0.01, 1.0);
        let order = (e1 / e2).log2();
        assert!(order > 1.9, "order {order}");
    }

    #[test]
    fn damping_aligns_with_field() {
        let mut m = single([1.0, 0.0, 0.0]);
        let field = |m: &VectorField| Ok(VectorField::uniform(*m.grid(), [0.0, 0.0, 1.0]));
        for _ in 0..2000 {
            m = step_llg(&m, field, 0.01, 1.0).unwrap();
        }
        assert!(m.get(0)[2] >= 0.999);
    }

    #[test]
    fn effective_field_examples() {
        let g = Grid::cube(3, 1.0).unwrap();
        let lp = LlgParams::exchange_only(1.0, 1.0);
        let h = effective_field(&VectorField::uniform(g, [0.0, 1.0, 0.0]), &lp, None).unwrap();
        assert!(h.data().iter().all(|v| *v == [0.0; 3]));

        let lp = LlgParams {
            kappa: 1.0,
            ..LlgParams::exchange_only(1.0, 1.0)
        };
        let h = effective_field(&VectorField::uniform(g, [0.0, 0.0, 1.0]), &lp, None).unwrap();
        assert!(h.data().iter().all(|v| *v == [0.0, 0.0, 2.0]));

        let one = Grid::cube(1, 1.0).unwrap();
        let lp = LlgParams {
            mu0: 1.0,
            ..LlgParams::exchange_only(1.0, 1.0)
        };
        let k = DemagKernel::new(&one);
        let h = effective_field(&VectorField::uniform(one, [0.0, 0.0, 1.0]), &lp, Some(&k)).unwrap();
        assert!(vec3::norm(vec3::sub(h.get(0), [0.0, 0.0, -1.0 / 3.0])) < 1e-12);
    }

    #[test]
    fn two_cell_exchange_energy() {
        let g = Grid::new(2, 1, 1, 1.0).unwrap();
        let m = VectorField::from_vec(g, vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let e = energy(&m, &LlgParams::exchange_only(2.0, 1.0), None, None).unwrap();
        assert!((e.exchange - 2.0).abs() < 1e-15);
        assert_eq!(e.total(), e.exchange);
    }

    #[test]
    fn magnetostatic_energy_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = Grid::cube(4, 1.0).unwrap();
        let k = DemagKernel::new(&g);
        let lp = LlgParams::default();
        for _ in 0..10 {
            let m = VectorField::from_fn(g, |_| [0.0; 3]);
            let m = VectorField::from_vec(
                g,
                m.data()
                    .iter()
                    .map(|_| {
                        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                        vec3::scale(1.0 / vec3::norm(v), v)
                    })
                    .collect(),
            )
            .unwrap();
            let e = energy(&m, &lp, Some(&k), None).unwrap();
            assert!(e.magnetostatic >= 0.0);
            assert!(e.magnetostatic <= 0.5 * g.measure() + 1e-12);
        }
    }

    #[test]
    fn equilibrium_has_zero_slack() {
        let g = Grid::cube(3, 1.0).unwrap();
        let lp = LlgParams::exchange_only(1.0, 1.0);
        let mut m = VectorField::uniform(g, [0.0, 0.0, 1.0]);
        let mut ledger = EnergyLedger::new();
        let dt = 0.01;
        ledger.record(0.0, &energy(&m, &lp, None, None).unwrap());
        for n in 1..=5 {
            let h0 = effective_field(&m, &lp, None).unwrap();
            let next = heun_step(&m, &h0, |x| effective_field(x, &lp, None), dt, lp.alpha).unwrap();
            ledger.accumulate(dt, lp.alpha, &m, &next, None, &VectorField::zeros(g)).unwrap();
            m = next;
            ledger.record(n as f64 * dt, &energy(&m, &lp, None, None).unwrap());
        }
        assert!(ledger.rows.iter().all(|r| r.slack == 0.0));
        assert_eq!(energy_inequality_slack(&ledger, 0.025), Some(0.0));
    }

    #[test]
    fn exchange_energy_decreases_under_heat_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = Grid::cube(4, 1.0).unwrap();
        let lp = LlgParams::exchange_only(1.0, 1.0);
        let mut m = VectorField::from_vec(
            g,
            (0..g.n_cells())
                .map(|_| {
                    let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                    vec3::scale(1.0 / vec3::norm(v), v)
                })
                .collect(),
        )
        .unwrap();
        let dt = lp.stability_limit(g.h, 0.2);
        let mut last = energy(&m, &lp, None, None).unwrap().exchange;
        for _ in 0..50 {
            m = step_llg(&m, |x| effective_field(x, &lp, None), dt, lp.alpha).unwrap();
            let e = energy(&m, &lp, None, None).unwrap().exchange;
            assert!(e <= last + 1e-14, "{e} > {last}");
            last = e;
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let g = Grid::cube(2, 1.0).unwrap();
        assert!(LlgParams::exchange_only(0.0, 1.0).validate(&g).is_err());
        assert!(LlgParams::exchange_only(1.0, 0.0).validate(&g).is_err());
        assert!(LlgParams::default().validate(&g).is_ok());
    }
}
