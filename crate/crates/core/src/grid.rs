//! Uniform cell-centered grids, 3-vector fields, and the face-based discrete
//! differential operators built on them.
//!
//! Cells are indexed `(i, j, k)` with linear index `i + nx * (j + ny * k)`.
//! Faces normal to axis `a` are indexed the same way on a lattice that has one
//! extra layer along `a`; faces at coordinate `0` and `n_a` are boundary faces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Mat3, Vec3, MAT_ZERO, ZERO};

const REDUCE_CHUNK: usize = 4096;

/// Sum of `f(i)` over `0..n` with a reduction tree that does not depend on the
/// number of worker threads, so results are bit-reproducible.
pub fn det_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * REDUCE_CHUNK;
            let hi = (lo + REDUCE_CHUNK).min(n);
            (lo..hi).map(&f).sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Uniform cell edge length.
    pub h: f64,
    pub origin: Vec3,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, nz: usize, h: f64) -> Result<Self> {
        Self::with_origin(nx, ny, nz, h, ZERO)
    }

    pub fn with_origin(nx: usize, ny: usize, nz: usize, h: f64, origin: Vec3) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidGrid(format!(
                "cell counts must be positive, got {nx}x{ny}x{nz}"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        Ok(Self { nx, ny, nz, h, origin })
    }

    /// Cube of `n` cells per side covering a box of edge `length`.
    pub fn cube(n: usize, length: f64) -> Result<Self> {
        Self::new(n, n, n, length / n as f64)
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    pub fn measure(&self) -> f64 {
        self.n_cells() as f64 * self.cell_volume()
    }

    pub fn lengths(&self) -> Vec3 {
        [
            self.nx as f64 * self.h,
            self.ny as f64 * self.h,
            self.nz as f64 * self.h,
        ]
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        [i, j, k]
    }

    /// Linear-index distance between neighbours along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.nx,
            _ => self.nx * self.ny,
        }
    }

    pub fn center(&self, idx: usize) -> Vec3 {
        let c = self.coords(idx);
        [
            self.origin[0] + (c[0] as f64 + 0.5) * self.h,
            self.origin[1] + (c[1] as f64 + 0.5) * self.h,
            self.origin[2] + (c[2] as f64 + 0.5) * self.h,
        ]
    }

    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.dims();
        d[axis] += 1;
        d
    }

    pub fn n_faces(&self, axis: usize) -> usize {
        let d = self.face_dims(axis);
        d[0] * d[1] * d[2]
    }

    /// Index of the face of cell `(i,j,k)` on its low side along `axis`;
    /// the high-side face is at coordinate `+1` along `axis`.
    #[inline]
    pub fn face_idx(&self, axis: usize, c: [usize; 3]) -> usize {
        let d = self.face_dims(axis);
        c[0] + d[0] * (c[1] + d[1] * c[2])
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.describe(),
                right: other.describe(),
            })
        }
    }

    pub fn describe(&self) -> String {
        format!("{}x{}x{} (h = {})", self.nx, self.ny, self.nz, self.h)
    }

    /// Grid refined by `factor` per axis over the same box.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            nx: self.nx * factor,
            ny: self.ny * factor,
            nz: self.nz * factor,
            h: self.h / factor as f64,
            origin: self.origin,
        }
    }
}

/// One 3-vector per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    data: Vec<Vec3>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self::uniform(grid, ZERO)
    }

    pub fn uniform(grid: Grid, v: Vec3) -> Self {
        Self {
            grid,
            data: vec![v; grid.n_cells()],
        }
    }

    pub fn from_vec(grid: Grid, data: Vec<Vec3>) -> Result<Self> {
        if data.len() != grid.n_cells() {
            return Err(Error::InvalidGrid(format!(
                "expected {} cell values, got {}",
                grid.n_cells(),
                data.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(usize) -> Vec3 + Sync + Send,
    {
        let data = (0..grid.n_cells()).into_par_iter().map(f).collect();
        Self { grid, data }
    }

    /// Flat component layout `[c0x, c0y, c0z, c1x, ...]`.
    pub fn from_flat(grid: Grid, flat: &[f64]) -> Result<Self> {
        if flat.len() != 3 * grid.n_cells() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                3 * grid.n_cells(),
                flat.len()
            )));
        }
        let data = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(Self { grid, data })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.data.iter().flat_map(|v| v.iter().copied()).collect()
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn data(&self) -> &[Vec3] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Vec3] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Vec3> {
        self.data
    }

    #[inline]
    pub fn get(&self, idx: usize) -> Vec3 {
        self.data[idx]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Largest deviation `| |v| - 1 |` over all cells.
    pub fn max_unit_deviation(&self) -> f64 {
        self.data
            .iter()
            .map(|v| (vec3::norm(*v) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Errors unless every cell vector has unit length to `tol`.
    pub fn check_unit(&self, tol: f64) -> Result<()> {
        for (cell, v) in self.data.iter().enumerate() {
            let n = vec3::norm(*v);
            if !((n - 1.0).abs() <= tol) {
                return Err(Error::NonUnit { cell, norm: n });
            }
        }
        Ok(())
    }

    /// Pointwise projection onto the unit sphere.
    pub fn normalized(&self) -> Result<Self> {
        let mut out = self.clone();
        for (cell, v) in out.data.iter_mut().enumerate() {
            let n = vec3::norm(*v);
            if n == 0.0 || !n.is_finite() {
                return Err(Error::ZeroMagnetization { cell });
            }
            *v = vec3::scale(1.0 / n, *v);
        }
        Ok(out)
    }

    pub fn zip_map<F>(&self, other: &VectorField, f: F) -> Result<Self>
    where
        F: Fn(Vec3, Vec3) -> Vec3 + Sync + Send,
    {
        self.grid.ensure_same(&other.grid)?;
        let data = self
            .data
            .par_iter()
            .zip(other.data.par_iter())
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(Self {
            grid: self.grid,
            data,
        })
    }

    pub fn sub(&self, other: &VectorField) -> Result<Self> {
        self.zip_map(other, vec3::sub)
    }

    pub fn add(&self, other: &VectorField) -> Result<Self> {
        self.zip_map(other, vec3::add)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|v| vec3::scale(s, *v)).collect(),
        }
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &VectorField) -> Result<Self> {
        self.zip_map(other, |a, b| vec3::axpy(a, s, b))
    }
}

/// Per-face 3x3 matrices on every face of the grid (interior and boundary).
///
/// Row `a` of a face normal to axis `a` holds the flux through that face;
/// for a gradient, column `c` of that row is the face-normal difference of
/// component `c`. Boundary faces are zero unless a caller fills them.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceTensor {
    grid: Grid,
    faces: [Vec<Mat3>; 3],
}

impl FaceTensor {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            faces: [
                vec![MAT_ZERO; grid.n_faces(0)],
                vec![MAT_ZERO; grid.n_faces(1)],
                vec![MAT_ZERO; grid.n_faces(2)],
            ],
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn axis(&self, axis: usize) -> &[Mat3] {
        &self.faces[axis]
    }

    pub fn axis_mut(&mut self, axis: usize) -> &mut [Mat3] {
        &mut self.faces[axis]
    }

    /// Face at lattice coordinate `c` (axis coordinate in `0..=n_axis`).
    pub fn get(&self, axis: usize, c: [usize; 3]) -> &Mat3 {
        &self.faces[axis][self.grid.face_idx(axis, c)]
    }

    pub fn get_mut(&mut self, axis: usize, c: [usize; 3]) -> &mut Mat3 {
        let i = self.grid.face_idx(axis, c);
        &mut self.faces[axis][i]
    }

    pub fn is_boundary(&self, axis: usize, c: [usize; 3]) -> bool {
        c[axis] == 0 || c[axis] == self.grid.dims()[axis]
    }

    /// Number of interior faces over all axes.
    pub fn n_interior(&self) -> usize {
        let d = self.grid.dims();
        (0..3)
            .map(|a| {
                let mut fd = d;
                fd[a] -= 1;
                fd[0] * fd[1] * fd[2]
            })
            .sum()
    }

    /// Applies `f(axis, face_coord, face_value)` to every face.
    pub fn map_faces<F>(&self, mut f: F) -> Self
    where
        F: FnMut(usize, [usize; 3], &Mat3) -> Mat3,
    {
        let mut out = Self::zeros(self.grid);
        for axis in 0..3 {
            let fd = self.grid.face_dims(axis);
            for fk in 0..fd[2] {
                for fj in 0..fd[1] {
                    for fi in 0..fd[0] {
                        let c = [fi, fj, fk];
                        let idx = self.grid.face_idx(axis, c);
                        out.faces[axis][idx] = f(axis, c, &self.faces[axis][idx]);
                    }
                }
            }
        }
        out
    }
}

/// Face-normal differences `(v_nb - v_cell) / h` on interior faces; boundary
/// faces are left at zero.
pub fn gradient(v: &VectorField) -> FaceTensor {
    let g = *v.grid();
    let mut out = FaceTensor::zeros(g);
    let inv_h = 1.0 / g.h;
    for axis in 0..3 {
        let fd = g.face_dims(axis);
        let stride = g.stride(axis);
        for fk in 0..fd[2] {
            for fj in 0..fd[1] {
                for fi in 0..fd[0] {
                    let c = [fi, fj, fk];
                    if c[axis] == 0 || c[axis] == g.dims()[axis] {
                        continue;
                    }
                    // the face's high-side cell shares its lattice coordinate
                    let hi_idx = g.idx(c[0], c[1], c[2]);
                    let lo_idx = hi_idx - stride;
                    let d = vec3::scale(inv_h, vec3::sub(v.data[hi_idx], v.data[lo_idx]));
                    let m = &mut out.faces[axis][g.face_idx(axis, c)];
                    m[axis] = d;
                }
            }
        }
    }
    out
}

/// Cellwise `(1/h) * sum over faces of the signed face-normal row`; boundary
/// faces enter with whatever values the caller put there.
pub fn divergence(f: &FaceTensor) -> VectorField {
    let g = *f.grid();
    let inv_h = 1.0 / g.h;
    VectorField::from_fn(g, |idx| {
        let c = g.coords(idx);
        let mut acc = ZERO;
        for axis in 0..3 {
            let mut hi = c;
            hi[axis] += 1;
            let up = f.faces[axis][g.face_idx(axis, hi)][axis];
            let down = f.faces[axis][g.face_idx(axis, c)][axis];
            acc = vec3::add(acc, vec3::sub(up, down));
        }
        vec3::scale(inv_h, acc)
    })
}

/// Boundary term `h^2 * sum over boundary faces of (F_row . phi_cell)(n)` of the
/// discrete integration-by-parts identity
/// `<div F, phi> = boundary_flux(F, phi) - <F, grad phi>`.
pub fn boundary_flux(f: &FaceTensor, phi: &VectorField) -> Result<f64> {
    let g = *f.grid();
    g.ensure_same(phi.grid())?;
    let area = g.h * g.h;
    let mut acc = 0.0;
    for axis in 0..3 {
        let fd = g.face_dims(axis);
        let n = g.dims()[axis];
        for fk in 0..fd[2] {
            for fj in 0..fd[1] {
                for fi in 0..fd[0] {
                    let c = [fi, fj, fk];
                    let (sign, cell) = if c[axis] == 0 {
                        (-1.0, c)
                    } else if c[axis] == n {
                        let mut lo = c;
                        lo[axis] -= 1;
                        (1.0, lo)
                    } else {
                        continue;
                    };
                    let row = f.faces[axis][g.face_idx(axis, c)][axis];
                    acc += sign * vec3::dot(row, phi.data[g.idx(cell[0], cell[1], cell[2])]);
                }
            }
        }
    }
    Ok(area * acc)
}

/// `h^3 * sum over interior faces of F : G`.
pub fn inner_faces(f: &FaceTensor, other: &FaceTensor) -> Result<f64> {
    f.grid().ensure_same(other.grid())?;
    let g = *f.grid();
    let mut acc = 0.0;
    for axis in 0..3 {
        let fd = g.face_dims(axis);
        for fk in 0..fd[2] {
            for fj in 0..fd[1] {
                for fi in 0..fd[0] {
                    let c = [fi, fj, fk];
                    if c[axis] == 0 || c[axis] == g.dims()[axis] {
                        continue;
                    }
                    let i = g.face_idx(axis, c);
                    acc += vec3::frobenius(&f.faces[axis][i], &other.faces[axis][i]);
                }
            }
        }
    }
    Ok(acc * g.cell_volume())
}

/// Discrete Laplacian with homogeneous Neumann conditions (zero boundary-face
/// differences). Equal to `divergence(gradient(v))`, computed directly.
pub fn neumann_laplacian(v: &VectorField) -> VectorField {
    let g = *v.grid();
    let dims = g.dims();
    let inv_h2 = 1.0 / (g.h * g.h);
    let data = v.data();
    VectorField::from_fn(g, |idx| {
        let c = g.coords(idx);
        let center = data[idx];
        let mut acc = ZERO;
        for axis in 0..3 {
            let s = g.stride(axis);
            if c[axis] > 0 {
                acc = vec3::add(acc, vec3::sub(data[idx - s], center));
            }
            if c[axis] + 1 < dims[axis] {
                acc = vec3::add(acc, vec3::sub(data[idx + s], center));
            }
        }
        vec3::scale(inv_h2, acc)
    })
}

/// `<u, v>_Omega = h^3 sum u . v`
pub fn inner_l2(u: &VectorField, v: &VectorField) -> Result<f64> {
    u.grid().ensure_same(v.grid())?;
    let (a, b) = (u.data(), v.data());
    Ok(u.grid().cell_volume() * det_sum(a.len(), |i| vec3::dot(a[i], b[i])))
}

pub fn norm_l2(u: &VectorField) -> f64 {
    let a = u.data();
    (u.grid().cell_volume() * det_sum(a.len(), |i| vec3::dot(a[i], a[i]))).sqrt()
}

/// `||grad_h u||^2 = h^3 sum over interior faces |difference / h|^2`
pub fn gradient_norm_sq(u: &VectorField) -> f64 {
    let g = *u.grid();
    let dims = g.dims();
    let a = u.data();
    let sum = det_sum(a.len(), |idx| {
        let c = g.coords(idx);
        let mut acc = 0.0;
        for axis in 0..3 {
            if c[axis] + 1 < dims[axis] {
                let d = vec3::sub(a[idx + g.stride(axis)], a[idx]);
                acc += vec3::dot(d, d);
            }
        }
        acc
    });
    // h^3 * |d/h|^2 = h * |d|^2
    g.h * sum
}

pub fn norm_h1(u: &VectorField) -> f64 {
    let l2 = norm_l2(u);
    (l2 * l2 + gradient_norm_sq(u)).sqrt()
}

/// `sqrt(dt * sum_n ||u(t_n)||^2)`, the rectangle-rule L2(Omega_T) norm.
pub fn norm_spacetime(trajectory: &[VectorField], dt: f64) -> f64 {
    let sum: f64 = trajectory
        .iter()
        .map(|u| {
            let n = norm_l2(u);
            n * n
        })
        .sum();
    (dt * sum).sqrt()
}
