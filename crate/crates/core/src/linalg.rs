//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// `a ⊗ I_m`.
pub fn kron_eye(a: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    a.kronecker(&DMatrix::identity(m, m))
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let dim: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(dim, dim);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

/// Assemble `[[a, b], [c, d]]`.
pub fn block2x2(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (r0, c0) = a.shape();
    let r1 = c.nrows();
    let c1 = b.ncols();
    let mut out = DMatrix::zeros(r0 + r1, c0 + c1);
    out.view_mut((0, 0), (r0, c0)).copy_from(a);
    out.view_mut((0, c0), (r0, c1)).copy_from(b);
    out.view_mut((r0, 0), (r1, c0)).copy_from(c);
    out.view_mut((r0, c0), (r1, c1)).copy_from(d);
    out
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

pub fn max_abs_asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues and eigenvectors of a symmetric matrix, eigenvalues ascending.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = symmetrize(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_sym_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    symmetrize(a).symmetric_eigenvalues().min()
}

/// Factor `C` with `C Cᵀ = r` for a symmetric PSD `r`.
///
/// Uses the symmetric square root so rank-deficient covariances are fine.
pub fn psd_factor(r: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if r.nrows() != r.ncols() {
        return Err(Error::Dimension(format!("{what}: covariance must be square")));
    }
    let scale = r.amax().max(1.0);
    if max_abs_asymmetry(r) > 1e-10 * scale {
        return Err(Error::InvalidProblem(format!("{what}: covariance is not symmetric")));
    }
    let (vals, vecs) = sym_eigen_sorted(r);
    if !vals.is_empty() && vals[0] < -1e-10 * scale {
        return Err(Error::InvalidProblem(format!(
            "{what}: covariance is not positive semi-definite (min eigenvalue {:e})",
            vals[0]
        )));
    }
    let sqrt_vals = vals.map(|v| v.max(0.0).sqrt());
    Ok(&vecs * DMatrix::from_diagonal(&sqrt_vals) * vecs.transpose())
}

/// Orthonormal basis of the complement of `1/√n` (Helmert contrasts), `n × (n-1)`.
pub fn helmert_basis(n: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n, n.saturating_sub(1));
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            q[(i, k - 1)] = 1.0 / norm;
        }
        q[(k, k - 1)] = -(k as f64) / norm;
    }
    q
}

/// Relative Frobenius error `‖a − b‖_F / ‖b‖_F`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Agent `i`'s `m`-block of a stacked vector.
pub fn agent_block(v: &DVector<f64>, i: usize, m: usize) -> DVector<f64> {
    v.rows(i * m, m).into_owned()
}
