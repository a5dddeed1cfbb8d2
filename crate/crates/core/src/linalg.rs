//! Thin bridge between `ndarray` storage and `nalgebra` decompositions.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

pub(crate) fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Symmetric eigendecomposition with eigenpairs sorted by descending
/// eigenvalue. Eigenvectors are the columns of the returned matrix, each
/// sign-normalised so that its largest-magnitude entry is positive.
pub(crate) fn sym_eigh(a: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = to_na(a);
    // symmetrise against round-off before handing to the solver
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let sign = sign_of_dominant(col.iter().copied());
        for r in 0..n {
            vectors[[r, dst]] = sign * col[r];
        }
    }
    (values, vectors)
}

/// Thin SVD `a = u · diag(s) · vt`, singular values descending.
pub(crate) fn svd(a: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let m = to_na(a);
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = Array1::from_iter(order.iter().map(|&i| svd.singular_values[i]));
    let mut u_out = Array2::zeros((u.nrows(), k));
    let mut vt_out = Array2::zeros((k, vt.ncols()));
    for (dst, &src) in order.iter().enumerate() {
        let sign = sign_of_dominant(vt.row(src).iter().copied());
        for r in 0..u.nrows() {
            u_out[[r, dst]] = sign * u[(r, src)];
        }
        for c in 0..vt.ncols() {
            vt_out[[dst, c]] = sign * vt[(src, c)];
        }
    }
    (u_out, s, vt_out)
}

/// Solves `a x = b` for symmetric positive definite `a`. `None` when the
/// Cholesky factorisation fails.
pub(crate) fn solve_spd(a: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Option<Array1<f64>> {
    let chol = to_na(a).cholesky()?;
    let rhs = DVector::from_iterator(b.len(), b.iter().copied());
    let x = chol.solve(&rhs);
    Some(Array1::from_iter(x.iter().copied()))
}

/// Inverse square root of a symmetric positive definite matrix.
pub(crate) fn sym_inv_sqrt(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let (vals, vecs) = sym_eigh(a);
    let scaled = Array2::from_shape_fn(vecs.dim(), |(i, j)| {
        vecs[[i, j]] / vals[j].max(f64::MIN_POSITIVE).sqrt()
    });
    scaled.dot(&vecs.t())
}

fn sign_of_dominant(it: impl Iterator<Item = f64>) -> f64 {
    let mut best = 0.0_f64;
    for v in it {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}
