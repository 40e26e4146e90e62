use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2};

pub(crate) fn to_dmatrix(m: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[[r, c]])
}

pub(crate) fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(r, c)| m[(r, c)])
}

/// Eigenvalues and eigenvectors (as columns) of the symmetric part of `m`.
pub(crate) fn sym_eigen(m: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let d = to_dmatrix(m);
    let sym = (&d + d.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    (
        Array1::from_iter(eig.eigenvalues.iter().copied()),
        from_dmatrix(&eig.eigenvectors),
    )
}

pub(crate) fn sym_eigenvalues(m: ArrayView2<'_, f64>) -> Array1<f64> {
    let d = to_dmatrix(m);
    let sym = (&d + d.transpose()) * 0.5;
    Array1::from_iter(sym.symmetric_eigenvalues().iter().copied())
}

/// PSD square root: eigenvalues below zero are clamped before the root.
pub(crate) fn psd_sqrt(m: ArrayView2<'_, f64>) -> Array2<f64> {
    let (vals, vecs) = sym_eigen(m);
    let roots = vals.mapv(|v| v.max(0.0).sqrt());
    let scaled = &vecs * &roots;
    scaled.dot(&vecs.t())
}
