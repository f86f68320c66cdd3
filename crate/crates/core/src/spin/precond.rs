//! Preconditioners for the spin-accumulation system.

use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::vec3::{self, Mat3};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreconditionerKind {
    /// Inverse of the per-cell 3x3 diagonal block.
    BlockJacobi,
    /// Exact inverse of a constant-coefficient Neumann Helmholtz operator,
    /// applied with cosine transforms.
    #[default]
    Spectral,
}

pub(crate) struct BlockJacobi {
    pub inv_blocks: Vec<Mat3>,
}

impl BlockJacobi {
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((rc, zc), inv) in r.chunks_exact(3).zip(z.chunks_exact_mut(3)).zip(&self.inv_blocks) {
            let v = vec3::mat_vec(inv, [rc[0], rc[1], rc[2]]);
            zc.copy_from_slice(&v);
        }
    }
}

/// `(shift - diffusion * Laplacian_h)^{-1}` per component, homogeneous Neumann.
pub(crate) struct Spectral {
    dims: [usize; 3],
    plans: [Arc<dyn TransformType2And3<f64>>; 3],
    /// `1 / eigenvalue` per mode, with the transform normalization folded in.
    inv_eig: Vec<f64>,
}

impl Spectral {
    pub fn new(grid: &Grid, shift: f64, diffusion: f64) -> Self {
        let dims = grid.dims();
        let mut planner = DctPlanner::new();
        let plans = dims.map(|n| planner.plan_dct2(n));
        let inv_h2 = 1.0 / (grid.h * grid.h);
        let lam = |k: usize, n: usize| {
            let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
            4.0 * s * s * inv_h2
        };
        // DCT-III(DCT-II(x)) = (n/2) x per axis
        let norm = 8.0 / (dims[0] * dims[1] * dims[2]) as f64;
        let mut inv_eig = Vec::with_capacity(grid.n_cells());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let eig = shift
                        + diffusion * (lam(i, dims[0]) + lam(j, dims[1]) + lam(k, dims[2]));
                    inv_eig.push(norm / eig);
                }
            }
        }
        Self { dims, plans, inv_eig }
    }

    fn transform(&self, buf: &mut [f64], forward: bool) {
        let [nx, ny, nz] = self.dims;
        let run = |plan: &Arc<dyn TransformType2And3<f64>>, line: &mut [f64]| {
            if forward {
                plan.process_dct2(line)
            } else {
                plan.process_dct3(line)
            }
        };
        for line in buf.chunks_exact_mut(nx) {
            run(&self.plans[0], line);
        }
        let mut line = vec![0.0; ny];
        for k in 0..nz {
            for i in 0..nx {
                for j in 0..ny {
                    line[j] = buf[i + nx * (j + ny * k)];
                }
                run(&self.plans[1], &mut line);
                for j in 0..ny {
                    buf[i + nx * (j + ny * k)] = line[j];
                }
            }
        }
        let plane = nx * ny;
        let mut line = vec![0.0; nz];
        for p in 0..plane {
            for k in 0..nz {
                line[k] = buf[p + plane * k];
            }
            run(&self.plans[2], &mut line);
            for k in 0..nz {
                buf[p + plane * k] = line[k];
            }
        }
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.inv_eig.len();
        let mut buf = vec![0.0; n];
        for c in 0..3 {
            for (b, rc) in buf.iter_mut().zip(r.chunks_exact(3)) {
                *b = rc[c];
            }
            self.transform(&mut buf, true);
            for (b, ie) in buf.iter_mut().zip(&self.inv_eig) {
                *b *= ie;
            }
            self.transform(&mut buf, false);
            for (b, zc) in buf.iter().zip(z.chunks_exact_mut(3)) {
                zc[c] = *b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{neumann_laplacian, VectorField};

    #[test]
    fn spectral_inverts_the_helmholtz_operator() {
        for dims in [[4, 3, 5], [6, 1, 2], [1, 1, 1]] {
            let g = Grid::new(dims[0], dims[1], dims[2], 0.2).unwrap();
            let (shift, diff) = (1.7, 0.6);
            let x = VectorField::from_fn(g, |i| {
                let f = i as f64;
                [(0.3 * f).sin(), (1.1 * f).cos(), 0.01 * f]
            });
            let lap = neumann_laplacian(&x);
            let px = x.scaled(shift).axpy(-diff, &lap).unwrap();
            let pre = Spectral::new(&g, shift, diff);
            let mut z = vec![0.0; 3 * g.n_cells()];
            pre.apply(&px.to_flat(), &mut z);
            for (a, b) in z.iter().zip(x.to_flat()) {
                assert!((a - b).abs() < 1e-12, "{dims:?}: {a} vs {b}");
            }
        }
    }
}
