//! Matrix-free Krylov solvers on flat `f64` vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::det_sum;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual `||b - A x|| / ||b||`.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    det_sum(a.len(), |i| a[i] * b[i])
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(op: &dyn Fn(&[f64], &mut [f64]), b: &[f64], x: &[f64], r: &mut [f64]) {
    op(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// Restarted GMRES with right preconditioning. `x` holds the initial guess on
/// entry and the solution on exit.
pub fn gmres(
    op: &dyn Fn(&[f64], &mut [f64]),
    prec: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    restart: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }
    let restart = restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
    let mut hess = vec![vec![0.0; restart]; restart + 1];
    let mut cs = vec![0.0; restart];
    let mut sn = vec![0.0; restart];
    let mut g = vec![0.0; restart + 1];
    let mut iterations = 0;

    loop {
        residual(op, b, x, &mut r);
        let beta = norm(&r);
        let rel = beta / bnorm;
        if rel <= tol {
            return Ok(SolveStats { iterations, residual: rel });
        }
        if iterations >= max_iter {
            return Err(Error::NotConverged { method: "GMRES", iterations, residual: rel });
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;

        let mut k_used = 0;
        for k in 0..restart {
            prec(&basis[k], &mut z);
            op(&z, &mut w);
            // modified Gram-Schmidt
            for (j, vj) in basis.iter().enumerate() {
                let hjk = dot(&w, vj);
                hess[j][k] = hjk;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hjk * vi;
                }
            }
            let hnext = norm(&w);
            hess[k + 1][k] = hnext;
            for j in 0..k {
                let t = cs[j] * hess[j][k] + sn[j] * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = hess[k][k] / denom;
                sn[k] = hess[k + 1][k] / denom;
            }
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k_used = k + 1;
            let est = g[k + 1].abs() / bnorm;
            if est <= tol || iterations >= max_iter || hnext == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }

        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= hess[i][j] * y[j];
            }
            y[i] = acc / hess[i][i];
        }
        // x += M^{-1} V y
        w.iter_mut().for_each(|v| *v = 0.0);
        for (j, yj) in y.iter().enumerate() {
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi += yj * vi;
            }
        }
        prec(&w, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
    }
}

/// BiCGStab with right preconditioning.
pub fn bicgstab(
    op: &dyn Fn(&[f64], &mut [f64]),
    prec: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }
    let mut r = vec![0.0; n];
    residual(op, b, x, &mut r);
    let mut rel = norm(&r) / bnorm;
    if rel <= tol {
        return Ok(SolveStats { iterations: 0, residual: rel });
    }
    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho_old, mut alpha, mut omega) = (1.0, 1.0, 1.0);

    for it in 1..=max_iter {
        let rho = dot(&r_hat, &r);
        if rho == 0.0 || omega == 0.0 {
            // breakdown: restart the shadow residual from the current residual
            residual(op, b, x, &mut r);
            r_hat.copy_from_slice(&r);
            p.iter_mut().for_each(|e| *e = 0.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            rho_old = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        let beta = (rho / rho_old) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        prec(&p, &mut p_hat);
        op(&p_hat, &mut v);
        alpha = rho / dot(&r_hat, &v);
        // r becomes s
        for i in 0..n {
            r[i] -= alpha * v[i];
            x[i] += alpha * p_hat[i];
        }
        rel = norm(&r) / bnorm;
        if rel <= tol {
            residual(op, b, x, &mut r);
            rel = norm(&r) / bnorm;
            if rel <= tol {
                return Ok(SolveStats { iterations: it, residual: rel });
            }
        }
        prec(&r, &mut s_hat);
        op(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt == 0.0 { 0.0 } else { dot(&t, &r) / tt };
        for i in 0..n {
            x[i] += omega * s_hat[i];
            r[i] -= omega * t[i];
        }
        rel = norm(&r) / bnorm;
        if rel <= tol {
            residual(op, b, x, &mut r);
            rel = norm(&r) / bnorm;
            if rel <= tol {
                return Ok(SolveStats { iterations: it, residual: rel });
            }
        }
        rho_old = rho;
    }
    Err(Error::NotConverged { method: "BiCGStab", iterations: max_iter, residual: rel })
}
