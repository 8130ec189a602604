//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Thin QR with a non-negative diagonal in `R`, so an orthonormal input
/// comes back unchanged.
pub fn thin_qr(y: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = y.ncols();
    if k == 0 {
        return (y.clone(), DMatrix::zeros(0, 0));
    }
    let qr = y.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            r.row_mut(j).neg_mut();
            q.column_mut(j).neg_mut();
        }
    }
    (q, r)
}

/// Singular values in ascending order with the matching right singular
/// vectors as columns.
pub fn svd_ascending(c: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let ncols = c.ncols();
    if ncols == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    if c.nrows() >= ncols {
        let svd = c.clone().svd(false, true);
        let vt = svd.v_t.expect("right singular vectors requested");
        let mut idx: Vec<usize> = (0..ncols).collect();
        idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let sv = idx.iter().map(|&i| svd.singular_values[i]).collect();
        let mut v = DMatrix::zeros(ncols, ncols);
        for (j, &i) in idx.iter().enumerate() {
            v.set_column(j, &vt.row(i).transpose());
        }
        (sv, v)
    } else {
        // wide: go through the Gram matrix for the full right basis
        let g = c.transpose() * c;
        let eig = SymmetricEigen::new(g);
        let mut idx: Vec<usize> = (0..ncols).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let sv = idx
            .iter()
            .map(|&i| eig.eigenvalues[i].max(0.0).sqrt())
            .collect();
        let mut v = DMatrix::zeros(ncols, ncols);
        for (j, &i) in idx.iter().enumerate() {
            v.set_column(j, &eig.eigenvectors.column(i));
        }
        (sv, v)
    }
}

/// Orthonormal basis of the orthogonal complement of `span(basis)` in
/// `R^dim`. `basis` must have orthonormal columns.
pub fn orthogonal_complement(basis: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let k = basis.ncols();
    let mut proj = DMatrix::<f64>::identity(dim, dim);
    if k > 0 {
        proj -= basis * basis.transpose();
    }
    let eig = SymmetricEigen::new(proj);
    let mut idx: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut out = DMatrix::zeros(dim, idx.len());
    for (j, &i) in idx.iter().enumerate() {
        out.set_column(j, &eig.eigenvectors.column(i));
    }
    out
}

/// Largest principal angle between two subspaces of equal dimension given
/// by orthonormal bases.
pub fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 && b.ncols() == 0 {
        return 0.0;
    }
    let resid = b - a * (a.transpose() * b);
    spectral_norm(&resid).min(1.0).asin()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Flip `v` so that its entry of largest magnitude is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0.0_f64;
    let mut sign = 1.0;
    for &e in v.iter() {
        if e.abs() > best * (1.0 + 1e-12) {
            best = e.abs();
            sign = e.signum();
        }
    }
    if sign < 0.0 {
        v.neg_mut();
    }
}
