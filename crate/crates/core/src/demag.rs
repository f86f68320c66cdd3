//! Demagnetizing field as a convolution of `m` with the cell-averaged
//! demagnetizing tensor, `h_d(cell) = -sum_offsets N(offset) m(neighbor)`.
//!
//! Near offsets use Newell's closed forms for rectangular cells; far offsets
//! (where those forms lose digits to cancellation) use tensor-product Gauss
//! quadrature of the point-dipole kernel against the cell-pair overlap weight.
//! The convolution runs on a grid zero-padded to `2n` per axis, so it is a
//! linear (not circular) convolution.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::grid::{Grid, VectorField};
use crate::vec3::{Mat3, Vec3};

/// Symmetric 3x3 tensor stored as `[xx, yy, zz, xy, xz, yz]`.
pub type Sym3 = [f64; 6];

/// Offsets longer than this many cell edges use the quadrature form.
const FAR_FIELD_CELLS: f64 = 20.0;

pub fn sym_to_mat(s: &Sym3) -> Mat3 {
    [[s[0], s[3], s[4]], [s[3], s[1], s[5]], [s[4], s[5], s[2]]]
}

#[inline]
fn sym_apply(s: &Sym3, v: Vec3) -> Vec3 {
    [
        s[0] * v[0] + s[3] * v[1] + s[4] * v[2],
        s[3] * v[0] + s[1] * v[1] + s[5] * v[2],
        s[4] * v[0] + s[5] * v[1] + s[2] * v[2],
    ]
}

fn newell_f(x: f64, y: f64, z: f64) -> f64 {
    let (x, y, z) = (x.abs(), y.abs(), z.abs());
    let (x2, y2, z2) = (x * x, y * y, z * z);
    let r = (x2 + y2 + z2).sqrt();
    let mut out = (2.0 * x2 - y2 - z2) * r / 6.0;
    if y > 0.0 && x2 + z2 > 0.0 {
        out += 0.5 * y * (z2 - x2) * (y / (x2 + z2).sqrt()).asinh();
    }
    if z > 0.0 && x2 + y2 > 0.0 {
        out += 0.5 * z * (y2 - x2) * (z / (x2 + y2).sqrt()).asinh();
    }
    if x > 0.0 && y > 0.0 && z > 0.0 {
        out -= x * y * z * (y * z / (x * r)).atan();
    }
    out
}

fn newell_g(x: f64, y: f64, z: f64) -> f64 {
    let sign = x.signum() * y.signum();
    let (x, y, z) = (x.abs(), y.abs(), z.abs());
    if x == 0.0 || y == 0.0 {
        return 0.0;
    }
    let (x2, y2, z2) = (x * x, y * y, z * z);
    let r = (x2 + y2 + z2).sqrt();
    let mut out = -x * y * r / 3.0;
    if z > 0.0 {
        out += x * y * z * (z / (x2 + y2).sqrt()).asinh();
        out -= z * z2 / 6.0 * (x * y / (z * r)).atan();
        out -= 0.5 * z * y2 * (x * z / (y * r)).atan();
        out -= 0.5 * z * x2 * (y * z / (x * r)).atan();
    }
    out += y / 6.0 * (3.0 * z2 - y2) * (x / (y2 + z2).sqrt()).asinh();
    out += x / 6.0 * (3.0 * z2 - x2) * (y / (x2 + z2).sqrt()).asinh();
    sign * out
}

/// Second-difference stencil of `func` in all three directions.
fn stencil<F: Fn(f64, f64, f64) -> f64>(func: F, r: Vec3, d: Vec3) -> f64 {
    const W: [f64; 3] = [1.0, -2.0, 1.0];
    let mut acc = 0.0;
    for (a, wa) in W.iter().enumerate() {
        for (b, wb) in W.iter().enumerate() {
            for (c, wc) in W.iter().enumerate() {
                acc += wa
                    * wb
                    * wc
                    * func(
                        r[0] + (a as f64 - 1.0) * d[0],
                        r[1] + (b as f64 - 1.0) * d[1],
                        r[2] + (c as f64 - 1.0) * d[2],
                    );
            }
        }
    }
    acc
}

fn newell_tensor(r: Vec3, d: Vec3) -> Sym3 {
    let k = -1.0 / (4.0 * PI * d[0] * d[1] * d[2]);
    let nxx = k * stencil(newell_f, r, d);
    let nyy = k * stencil(newell_f, [r[1], r[0], r[2]], [d[1], d[0], d[2]]);
    let nzz = k * stencil(newell_f, [r[2], r[1], r[0]], [d[2], d[1], d[0]]);
    let nxy = k * stencil(newell_g, r, d);
    let nxz = k * stencil(newell_g, [r[0], r[2], r[1]], [d[0], d[2], d[1]]);
    let nyz = k * stencil(newell_g, [r[1], r[2], r[0]], [d[1], d[2], d[0]]);
    [nxx, nyy, nzz, nxy, nxz, nyz]
}

/// Point-dipole kernel `d_a d_b (1 / 4 pi |r|)`.
pub fn dipole_kernel(r: Vec3) -> Sym3 {
    let r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    let r5 = r2 * r2 * r2.sqrt();
    let k = 1.0 / (4.0 * PI * r5);
    [
        k * (3.0 * r[0] * r[0] - r2),
        k * (3.0 * r[1] * r[1] - r2),
        k * (3.0 * r[2] * r[2] - r2),
        k * 3.0 * r[0] * r[1],
        k * 3.0 * r[0] * r[2],
        k * 3.0 * r[1] * r[2],
    ]
}

// 4-point Gauss-Legendre on [0, 1]
const GL_T: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_9,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];
const GL_W: [f64; 4] = [
    0.173_927_422_568_726_93,
    0.326_072_577_431_273_07,
    0.326_072_577_431_273_07,
    0.173_927_422_568_726_93,
];

/// `-(1/V) int_C int_C grad grad G(r + x - y)`, reduced to one integral over
/// the relative displacement with the tent weight `prod (d_i - |u_i|)`.
fn far_field_tensor(r: Vec3, d: Vec3) -> Sym3 {
    // nodes/weights per axis on [-d, d] with the tent weight folded in
    let axis_rule = |di: f64| -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(8);
        for (t, w) in GL_T.iter().zip(GL_W.iter()) {
            let u = di * t;
            let weight = w * di * (di - u);
            pts.push((u, weight));
            pts.push((-u, weight));
        }
        pts
    };
    let (px, py, pz) = (axis_rule(d[0]), axis_rule(d[1]), axis_rule(d[2]));
    let mut acc = [0.0; 6];
    for &(ux, wx) in &px {
        for &(uy, wy) in &py {
            for &(uz, wz) in &pz {
                let k = dipole_kernel([r[0] + ux, r[1] + uy, r[2] + uz]);
                let w = wx * wy * wz;
                for c in 0..6 {
                    acc[c] += w * k[c];
                }
            }
        }
    }
    let inv_v = 1.0 / (d[0] * d[1] * d[2]);
    acc.map(|a| -a * inv_v)
}

/// Cell-averaged demagnetizing tensor between two `d`-sized cells whose
/// centers are separated by `r`.
pub fn demag_tensor(r: Vec3, d: Vec3) -> Sym3 {
    let dmax = d[0].max(d[1]).max(d[2]);
    let dist = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if dist > FAR_FIELD_CELLS * dmax {
        far_field_tensor(r, d)
    } else {
        newell_tensor(r, d)
    }
}

struct Fft3 {
    dims: [usize; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = dims.map(|n| planner.plan_fft_forward(n));
        let inv = dims.map(|n| planner.plan_fft_inverse(n));
        Self { dims, fwd, inv }
    }

    fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    fn pass_x(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, ny_active: usize, nz_active: usize) {
        let [px, py, _] = self.dims;
        buf.par_chunks_mut(px * py)
            .take(nz_active)
            .for_each(|slab| {
                let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                for line in slab.chunks_mut(px).take(ny_active) {
                    plan.process_with_scratch(line, &mut scratch);
                }
            });
    }

    fn pass_y(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, nz_active: usize) {
        let [px, py, _] = self.dims;
        buf.par_chunks_mut(px * py)
            .take(nz_active)
            .for_each(|slab| {
                let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                let mut line = vec![Complex64::default(); py];
                for i in 0..px {
                    for j in 0..py {
                        line[j] = slab[i + px * j];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for j in 0..py {
                        slab[i + px * j] = line[j];
                    }
                }
            });
    }

    fn pass_z(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let [px, py, pz] = self.dims;
        let plane = px * py;
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        // gather a row of `px` lines at a time to keep memory access sequential
        let mut block = vec![Complex64::default(); px * pz];
        for j in 0..py {
            for k in 0..pz {
                let src = &buf[j * px + k * plane..j * px + k * plane + px];
                for i in 0..px {
                    block[i * pz + k] = src[i];
                }
            }
            for line in block.chunks_mut(pz) {
                plan.process_with_scratch(line, &mut scratch);
            }
            for k in 0..pz {
                let dst = &mut buf[j * px + k * plane..j * px + k * plane + px];
                for i in 0..px {
                    dst[i] = block[i * pz + k];
                }
            }
        }
    }

    /// Forward transform of data supported on the leading `active` block.
    fn forward(&self, buf: &mut [Complex64], active: [usize; 3]) {
        self.pass_x(buf, &self.fwd[0], active[1], active[2]);
        self.pass_y(buf, &self.fwd[1], active[2]);
        self.pass_z(buf, &self.fwd[2]);
    }

    /// Inverse transform, exact only on the leading `active` block (the rest
    /// of the buffer is left partially transformed).
    fn inverse(&self, buf: &mut [Complex64], active: [usize; 3]) {
        self.pass_z(buf, &self.inv[2]);
        self.pass_y(buf, &self.inv[1], active[2]);
        self.pass_x(buf, &self.inv[0], active[1], active[2]);
    }
}

/// Geometry-only demagnetizing kernel for one grid.
pub struct DemagKernel {
    grid: Grid,
    /// Tensors for nonnegative offsets `(dx, dy, dz)`, indexed like cells.
    octant: Vec<Sym3>,
    fft: Fft3,
    /// Real spectrum of each of the six tensor entries on the padded grid.
    spectrum: [Vec<f64>; 6],
}

impl std::fmt::Debug for DemagKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DemagKernel")
            .field("grid", &self.grid)
            .field("padded", &self.fft.dims)
            .finish()
    }
}

impl DemagKernel {
    pub fn new(grid: &Grid) -> Self {
        let grid = *grid;
        let d = [1.0, 1.0, 1.0];
        // tensors are scale invariant; evaluate in units of the cell edge
        let octant: Vec<Sym3> = (0..grid.n_cells())
            .into_par_iter()
            .map(|idx| {
                let c = grid.coords(idx);
                let mut t = demag_tensor([c[0] as f64, c[1] as f64, c[2] as f64], d);
                // off-diagonal entries are odd in each coordinate they involve
                if c[0] == 0 {
                    t[3] = 0.0;
                    t[4] = 0.0;
                }
                if c[1] == 0 {
                    t[3] = 0.0;
                    t[5] = 0.0;
                }
                if c[2] == 0 {
                    t[4] = 0.0;
                    t[5] = 0.0;
                }
                t
            })
            .collect();

        let padded = grid.dims().map(|n| if n == 1 { 1 } else { 2 * n });
        let fft = Fft3::new(padded);
        let [px, py, pz] = padded;
        let mut spectrum: [Vec<f64>; 6] = Default::default();
        let mut buffers: Vec<Vec<Complex64>> = vec![vec![Complex64::default(); fft.len()]; 6];
        let dims = grid.dims();
        let wrap = |o: i64, p: usize| -> usize { o.rem_euclid(p as i64) as usize };
        for dz in -(dims[2] as i64 - 1)..dims[2] as i64 {
            for dy in -(dims[1] as i64 - 1)..dims[1] as i64 {
                for dx in -(dims[0] as i64 - 1)..dims[0] as i64 {
                    let t = Self::lookup(&grid, &octant, [dx, dy, dz]);
                    let p = wrap(dx, px) + px * (wrap(dy, py) + py * wrap(dz, pz));
                    for c in 0..6 {
                        buffers[c][p] = Complex64::new(t[c], 0.0);
                    }
                }
            }
        }
        for (c, buf) in buffers.iter_mut().enumerate() {
            fft.forward(buf, padded);
            // the kernel is even under r -> -r, so its spectrum is real
            spectrum[c] = buf.iter().map(|z| z.re).collect();
        }
        Self {
            grid,
            octant,
            fft,
            spectrum,
        }
    }

    fn lookup(grid: &Grid, octant: &[Sym3], off: [i64; 3]) -> Sym3 {
        let a = off.map(|o| o.unsigned_abs() as usize);
        let t = octant[grid.idx(a[0], a[1], a[2])];
        let s = off.map(|o| if o < 0 { -1.0 } else { 1.0 });
        [t[0], t[1], t[2], s[0] * s[1] * t[3], s[0] * s[2] * t[4], s[1] * s[2] * t[5]]
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Tensor for the cell offset `target - source` (in cells).
    pub fn tensor(&self, offset: [i64; 3]) -> Sym3 {
        Self::lookup(&self.grid, &self.octant, offset)
    }

    pub fn self_tensor(&self) -> Sym3 {
        self.octant[0]
    }

    /// Demagnetizing field by padded FFT convolution.
    pub fn apply(&self, m: &VectorField) -> Result<VectorField> {
        self.grid.ensure_same(m.grid())?;
        let g = self.grid;
        let [px, py, _] = self.fft.dims;
        let n = self.fft.len();
        let mut bufs = [
            vec![Complex64::default(); n],
            vec![Complex64::default(); n],
            vec![Complex64::default(); n],
        ];
        let pad_idx = |idx: usize| {
            let c = g.coords(idx);
            c[0] + px * (c[1] + py * c[2])
        };
        for (idx, v) in m.data().iter().enumerate() {
            let p = pad_idx(idx);
            for c in 0..3 {
                bufs[c][p] = Complex64::new(v[c], 0.0);
            }
        }
        let active = g.dims();
        for b in bufs.iter_mut() {
            self.fft.forward(b, active);
        }
        {
            let [bx, by, bz] = &mut bufs;
            let s = &self.spectrum;
            bx.par_iter_mut()
                .zip(by.par_iter_mut())
                .zip(bz.par_iter_mut())
                .enumerate()
                .for_each(|(p, ((x, y), z))| {
                    let (mx, my, mz) = (*x, *y, *z);
                    *x = -(mx * s[0][p] + my * s[3][p] + mz * s[4][p]);
                    *y = -(mx * s[3][p] + my * s[1][p] + mz * s[5][p]);
                    *z = -(mx * s[4][p] + my * s[5][p] + mz * s[2][p]);
                });
        }
        for b in bufs.iter_mut() {
            self.fft.inverse(b, active);
        }
        let norm = 1.0 / n as f64;
        let data = (0..g.n_cells())
            .map(|idx| {
                let p = pad_idx(idx);
                [bufs[0][p].re * norm, bufs[1][p].re * norm, bufs[2][p].re * norm]
            })
            .collect();
        VectorField::from_vec(g, data)
    }

    /// Reference O(N^2) direct summation.
    pub fn apply_direct(&self, m: &VectorField) -> Result<VectorField> {
        self.grid.ensure_same(m.grid())?;
        let g = self.grid;
        let src = m.data();
        Ok(VectorField::from_fn(g, |t| {
            let ct = g.coords(t);
            let mut acc = [0.0; 3];
            for (s, v) in src.iter().enumerate() {
                let cs = g.coords(s);
                let off = [
                    ct[0] as i64 - cs[0] as i64,
                    ct[1] as i64 - cs[1] as i64,
                    ct[2] as i64 - cs[2] as i64,
                ];
                let nv = sym_apply(&self.tensor(off), *v);
                for c in 0..3 {
                    acc[c] -= nv[c];
                }
            }
            acc
        }))
    }
}

/// `h_d[m]` with a freshly built kernel; prefer reusing a [`DemagKernel`].
pub fn demag_field(m: &VectorField) -> Result<VectorField> {
    DemagKernel::new(m.grid()).apply(m)
}
