use proptest::prelude::*;

use spindrift::demag::DemagKernel;
use spindrift::grid::{
    boundary_flux, divergence, gradient, inner_faces, inner_l2, norm_h1, norm_l2, Grid, VectorField,
};
use spindrift::io::{field_from_raw, raw_bytes};
use spindrift::llg::{self, LlgParams};
use spindrift::presets::{random_field, random_unit};
use spindrift::spin::{ellipticity_report, SpinMode, SpinParams, SpinSystem};
use spindrift::vec3;

fn grid() -> impl Strategy<Value = Grid> {
    (1usize..5, 1usize..5, 1usize..5, 0.05f64..2.0).prop_map(|(x, y, z, h)| Grid::new(x, y, z, h).unwrap())
}

fn unit_vec() -> impl Strategy<Value = [f64; 3]> {
    (-1.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(z, phi)| {
        let r = (1.0 - z * z).sqrt();
        [r * phi.cos(), r * phi.sin(), z]
    })
}

fn vec3s() -> impl Strategy<Value = [f64; 3]> {
    [-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norms_are_homogeneous_and_subadditive(g in grid(), a in 0u64..1000, b in 0u64..1000, k in -3.0f64..3.0) {
        let u = random_field(g, a);
        let v = random_field(g, b + 1000);
        for norm in [norm_l2 as fn(&VectorField) -> f64, norm_h1] {
            let nu = norm(&u);
            prop_assert!((norm(&u.scaled(k)) - k.abs() * nu).abs() <= 1e-12 * (1.0 + nu));
            prop_assert!(norm(&u.add(&v).unwrap()) <= nu + norm(&v) + 1e-12);
        }
        let ip = inner_l2(&u, &v).unwrap();
        prop_assert!(ip.abs() <= norm_l2(&u) * norm_l2(&v) * (1.0 + 1e-12));
    }

    #[test]
    fn summation_by_parts(nx in 2usize..5, ny in 2usize..5, nz in 2usize..5, seed in 0u64..1000) {
        let g = Grid::new(nx, ny, nz, 0.3).unwrap();
        let v = random_field(g, seed);
        let phi = random_field(g, seed + 7);
        let f = gradient(&v).map_faces(|axis, c, m| {
            let mut out = *m;
            // fill boundary faces too so the boundary term is exercised
            if c[axis] == 0 || c[axis] == g.dims()[axis] {
                out[axis] = [1.0 + axis as f64, -0.5, 0.25 * c[0] as f64];
            }
            out
        });
        let lhs = inner_l2(&divergence(&f), &phi).unwrap();
        let rhs = boundary_flux(&f, &phi).unwrap() - inner_faces(&f, &gradient(&phi)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1.0) * 10.0);
    }

    #[test]
    fn gradient_of_linear_field_is_constant(g in grid(), a in vec3s(), b in vec3s()) {
        let v = VectorField::from_fn(g, |idx| {
            let x = g.center(idx);
            [vec3::dot(a, x), vec3::dot(b, x), 1.0]
        });
        let grad = gradient(&v);
        for axis in 0..3 {
            let dims = g.face_dims(axis);
            for k in 0..dims[2] { for j in 0..dims[1] { for i in 0..dims[0] {
                let c = [i, j, k];
                if grad.is_boundary(axis, c) { continue; }
                let row = grad.get(axis, c)[axis];
                prop_assert!((row[0] - a[axis]).abs() < 1e-9 * (1.0 + a[axis].abs()));
                prop_assert!((row[1] - b[axis]).abs() < 1e-9 * (1.0 + b[axis].abs()));
                prop_assert!(row[2].abs() < 1e-12);
            }}}
        }
    }

    #[test]
    fn llg_velocity_is_tangent_and_gilbert(m in unit_vec(), h in vec3s(), alpha in 0.01f64..3.0) {
        let v = llg::llg_velocity(m, h, alpha);
        prop_assert!(vec3::dot(v, m).abs() <= 1e-14 * (1.0 + vec3::norm(h)));
        let gilbert = vec3::axpy(vec3::scale(-1.0, vec3::cross(m, h)), alpha, vec3::cross(m, v));
        prop_assert!(vec3::norm(vec3::sub(v, gilbert)) <= 1e-13 * (1.0 + vec3::norm(h)));
        let ll = vec3::scale(1.0 / (1.0 + alpha * alpha), vec3::axpy(vec3::cross(m, h), alpha, vec3::cross(m, vec3::cross(m, h))));
        prop_assert!(vec3::norm(vec3::add(v, ll)) <= 1e-14 * (1.0 + vec3::norm(h)));
    }

    #[test]
    fn llg_step_stays_on_the_sphere(seed in 0u64..1000, alpha in 0.1f64..2.0) {
        let g = Grid::cube(3, 1.0).unwrap();
        let lp = LlgParams { kappa: 0.3, ..LlgParams::exchange_only(1.0, alpha) };
        let m = random_unit(g, seed);
        let dt = lp.stability_limit(g.h, 0.2);
        let next = llg::step_llg(&m, |x| llg::effective_field(x, &lp, None), dt, alpha).unwrap();
        prop_assert!(next.max_unit_deviation() <= 1e-15);
    }

    #[test]
    fn spin_cross_term_is_orthogonal(seed in 0u64..1000, g2 in 0.0f64..5.0) {
        let g = Grid::cube(3, 0.5).unwrap();
        let m = random_unit(g, seed);
        let s = random_field(g, seed + 1);
        let mut p = SpinParams::reference(g);
        p.gamma2 = g2;
        let with = inner_l2(&SpinSystem::assemble(&m, &p, SpinMode::Stationary).unwrap().apply(&s).unwrap(), &s).unwrap();
        p.gamma2 = 0.0;
        let without = inner_l2(&SpinSystem::assemble(&m, &p, SpinMode::Stationary).unwrap().apply(&s).unwrap(), &s).unwrap();
        prop_assert!((with - without).abs() <= 1e-13 * without.abs());
    }

    #[test]
    fn ellipticity_is_independent_of_m(seed in 0u64..1000, beta in 0.05f64..0.95, bp in 0.0f64..0.95, d0 in 0.1f64..4.0) {
        let g = Grid::cube(2, 1.0).unwrap();
        let mut p = SpinParams::reference(g);
        p.beta = beta;
        p.beta_prime = bp;
        p.d0 = spindrift::spin::Diffusion::Uniform(d0);
        let r = ellipticity_report(&random_unit(g, seed), &p).unwrap();
        prop_assert!((r - d0 * (1.0 - beta * bp)).abs() <= 1e-14 * d0);
    }

    #[test]
    fn raw_dump_round_trips(g in grid(), seed in 0u64..1000) {
        let v = random_field(g, seed);
        prop_assert_eq!(field_from_raw(&raw_bytes(&v), g).unwrap(), v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn demag_is_negative_semidefinite_and_contractive(dims in (1usize..5, 1usize..5, 1usize..5), seed in 0u64..1000) {
        let g = Grid::new(dims.0, dims.1, dims.2, 0.7).unwrap();
        let k = DemagKernel::new(&g);
        for i in 0..12 {
            let m = random_field(g, seed * 100 + i);
            let q = -inner_l2(&k.apply(&m).unwrap(), &m).unwrap();
            let n2 = norm_l2(&m).powi(2);
            prop_assert!(q >= -1e-8 * n2);
            prop_assert!(q <= n2 + 1e-8);
        }
    }
}
