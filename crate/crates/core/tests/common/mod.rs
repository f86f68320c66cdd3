#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use spindrift::grid::VectorField;
use spindrift::spin::SpinSystem;

/// Column-by-column materialization of the spin operator.
pub fn dense_operator(sys: &SpinSystem) -> DMatrix<f64> {
    let n = 3 * sys.grid().n_cells();
    let mut mat = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        sys.apply_flat(&e, &mut col);
        mat.set_column(j, &DVector::from_column_slice(&col));
        e[j] = 0.0;
    }
    mat
}

/// `L^{-1} b` by dense LU.
pub fn dense_solve(sys: &SpinSystem) -> VectorField {
    let a = dense_operator(sys);
    let b = DVector::from_vec(sys.rhs().to_flat());
    let x = a.lu().solve(&b).expect("operator is nonsingular");
    VectorField::from_flat(*sys.grid(), x.as_slice()).unwrap()
}
