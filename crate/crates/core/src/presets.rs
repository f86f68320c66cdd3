//! Initial magnetization fields.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, VectorField};
use crate::vec3::{self, Vec3};

/// Constant unit field along `direction`.
pub fn uniform(grid: Grid, direction: Vec3) -> Result<VectorField> {
    let n = vec3::norm(direction);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidParam(format!("uniform direction must be nonzero, got {direction:?}")));
    }
    Ok(VectorField::uniform(grid, vec3::scale(1.0 / n, direction)))
}

/// In-plane angle `theta(x) = a (1 - cos(pi x / L)) / 2`, flat at both
/// x-faces so the Neumann condition holds.
pub fn twist_angle(grid: &Grid, x: f64, amplitude: f64) -> f64 {
    let len = grid.lengths()[0];
    0.5 * amplitude * (1.0 - (PI * (x - grid.origin[0]) / len).cos())
}

/// `m = (cos theta(x), sin theta(x), 0)`.
pub fn smooth_twist(grid: Grid, amplitude: f64) -> VectorField {
    VectorField::from_fn(grid, |idx| {
        let th = twist_angle(&grid, grid.center(idx)[0], amplitude);
        [th.cos(), th.sin(), 0.0]
    })
}

/// Independent uniformly distributed unit vectors, reproducible from `seed`.
pub fn random_unit(grid: Grid, seed: u64) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..grid.n_cells()).map(|_| random_unit_vector(&mut rng)).collect();
    VectorField::from_vec(grid, data).expect("length matches grid")
}

pub fn random_unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

/// Entries uniform in `[-1, 1)` per component.
pub fn random_field(grid: Grid, seed: u64) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..grid.n_cells())
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    VectorField::from_vec(grid, data).expect("length matches grid")
}

/// Rotates `m` about `axis` by `angle(x)` at each cell center.
pub fn rotate_field<F>(m: &VectorField, axis: Vec3, angle: F) -> VectorField
where
    F: Fn(Vec3) -> f64 + Sync + Send,
{
    let g = *m.grid();
    VectorField::from_fn(g, |idx| vec3::rotate(m.get(idx), axis, angle(g.center(idx))))
}
