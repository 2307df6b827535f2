//! Small complex linear-algebra helpers shared by the simulator and estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Result, SimlError};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// (A + Aᴴ)/2
pub fn hermitianize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace_re(a: &CMatrix) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn to_complex(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Largest entrywise deviation from Hermitian symmetry, relative to the largest entry.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst / scale
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in descending order.
pub struct SortedEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

pub fn sorted_eigen(a: &CMatrix) -> SortedEigen {
    let eig = SymmetricEigen::new(hermitianize(a));
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SortedEigen { values, vectors }
}

/// Checks Hermitian symmetry and positive semidefiniteness (eigenvalues ≥ −tol·trace).
pub fn check_hermitian_psd(a: &CMatrix, tol: f64) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(SimlError::InvalidArgument(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SimlError::InvalidArgument("matrix has non-finite entries".into()));
    }
    let defect = hermitian_defect(a);
    if defect > 1e-12 {
        return Err(SimlError::InvalidArgument(format!("matrix is not Hermitian (relative defect {defect:e})")));
    }
    if a.nrows() == 0 {
        return Ok(());
    }
    let eig = SymmetricEigen::new(hermitianize(a));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = trace_re(a).abs();
    if min < -tol * scale {
        return Err(SimlError::NotPsd { min_eigenvalue: min });
    }
    Ok(())
}

/// Hermitian square root factor S with S·Sᴴ = A, negative eigenvalues clipped to zero.
pub fn psd_factor(a: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(hermitianize(a));
    let mut factor = eig.eigenvectors.clone();
    for (k, mut col) in factor.column_iter_mut().enumerate() {
        let root = eig.eigenvalues[k].max(0.0).sqrt();
        col.scale_mut(root);
    }
    factor
}

/// Largest entry modulus.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Cholesky factorization that fails unless `a` is Hermitian positive definite.
///
/// nalgebra's complex Cholesky takes complex square roots of non-positive
/// pivots instead of failing, so the pivots are checked here.
pub fn cholesky_pd(a: CMatrix) -> Option<Cholesky<Complex64, Dyn>> {
    let chol = Cholesky::new(a)?;
    let ok = chol.l_dirty().diagonal().iter().all(|d| d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-10 * d.re);
    ok.then_some(chol)
}
