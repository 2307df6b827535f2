use nalgebra::{DMatrix, SVD};

use crate::array_model::SensorArray;
use crate::error::{Result, SimlError};
use crate::field_sim::SampleCovariance;
use crate::linalg::{self, CMatrix, SortedEigen};

/// Relative singular-value floor below which G is declared rank deficient.
const COHERENCY_FLOOR: f64 = 1e-10;

/// Sieve coefficients W (Ψ = ΦW) with the Gram matrix G = Φ*Ψ and the
/// factorization of G used by the estimators.
#[derive(Debug, Clone)]
pub struct SievedBasis {
    w: CMatrix,
    g: CMatrix,
    /// Orthonormal basis of range(G); GG† = U Uᴴ.
    range: CMatrix,
    /// Left pseudo-inverse G† = V S⁻¹ Uᴴ.
    pinv: CMatrix,
    singular_values: Vec<f64>,
}

impl SievedBasis {
    /// Builds the basis for sieve coefficients `w` given the sensing Gram matrix `h` (G = HW).
    pub fn from_weights(w: CMatrix, h: &CMatrix) -> Result<Self> {
        if h.nrows() != h.ncols() || h.ncols() != w.nrows() {
            return Err(SimlError::InvalidArgument(format!(
                "Gram matrix is {}x{} but W has {} rows",
                h.nrows(),
                h.ncols(),
                w.nrows()
            )));
        }
        let g = h * &w;
        Self::from_parts(w, g)
    }

    /// Builds the basis from explicit `w` and `g`.
    pub fn from_parts(w: CMatrix, g: CMatrix) -> Result<Self> {
        let (l, m) = w.shape();
        if m == 0 || m > l {
            return Err(SimlError::InvalidArgument(format!(
                "sieve dimension must satisfy 1 ≤ M ≤ L, got M = {m}, L = {l}"
            )));
        }
        if g.shape() != (l, m) {
            return Err(SimlError::InvalidArgument(format!("G must be {l}x{m}, got {}x{}", g.nrows(), g.ncols())));
        }
        let gram_w = w.adjoint() * &w;
        let defect = linalg::max_abs(&(gram_w - CMatrix::identity(m, m)));
        if defect > 1e-10 {
            return Err(SimlError::InvalidArgument(format!("sieve columns are not orthonormal (defect {defect:e})")));
        }

        let svd = SVD::new(g.clone(), true, true);
        let singular_values: Vec<f64> = svd.singular_values.iter().cloned().collect();
        let largest = singular_values.iter().cloned().fold(0.0, f64::max);
        let smallest = singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if smallest.is_nan() || smallest <= COHERENCY_FLOOR * largest {
            return Err(SimlError::Coherency { smallest, largest });
        }
        let u = svd.u.expect("SVD computed with U");
        let v_t = svd.v_t.expect("SVD computed with Vᵀ");
        let mut scaled_uh = u.adjoint();
        for (k, mut row) in scaled_uh.row_iter_mut().enumerate() {
            row.unscale_mut(singular_values[k]);
        }
        let pinv = v_t.adjoint() * scaled_uh;
        Ok(Self { w, g, range: u, pinv, singular_values })
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    /// Number of sensors L.
    pub fn n_sensors(&self) -> usize {
        self.w.nrows()
    }

    pub fn w(&self) -> &CMatrix {
        &self.w
    }

    pub fn g(&self) -> &CMatrix {
        &self.g
    }

    pub fn pinv(&self) -> &CMatrix {
        &self.pinv
    }

    /// Orthonormal basis of range(G).
    pub fn range_basis(&self) -> &CMatrix {
        &self.range
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// cond(GᴴG) = (s_max / s_min)².
    pub fn gram_conditioning(&self) -> f64 {
        let largest = self.singular_values.iter().cloned().fold(0.0, f64::max);
        let smallest = self.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        (largest / smallest).powi(2)
    }
}

/// Eigendecomposition of Σ̂ and the sensing Gram matrix, shared by every
/// sieve dimension drawn from the same data.
#[derive(Debug, Clone)]
pub struct EigenSieve {
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
    gram: CMatrix,
}

impl EigenSieve {
    pub fn new(sample: &SampleCovariance, array: &SensorArray) -> Result<Self> {
        Self::with_gram(sample, &array.gram_matrix())
    }

    /// Uses an explicit real Gram matrix `h` in place of the array's analytic one.
    pub fn with_gram(sample: &SampleCovariance, h: &DMatrix<f64>) -> Result<Self> {
        if h.nrows() != sample.dim() || h.ncols() != sample.dim() {
            return Err(SimlError::InvalidArgument(format!(
                "array has {} sensors but the sample covariance is {}x{}",
                h.nrows(),
                sample.dim(),
                sample.dim()
            )));
        }
        let SortedEigen { values, vectors } = linalg::sorted_eigen(sample.matrix());
        Ok(Self { eigenvalues: values, eigenvectors: vectors, gram: linalg::to_complex(h) })
    }

    /// Eigenvalues of Σ̂ in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n_sensors(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Sieve spanned by the top-`m` eigenvectors of Σ̂.
    pub fn basis(&self, m: usize) -> Result<SievedBasis> {
        let l = self.n_sensors();
        if m == 0 || m > l {
            return Err(SimlError::InvalidArgument(format!("sieve dimension must satisfy 1 ≤ M ≤ L = {l}, got {m}")));
        }
        let w = self.eigenvectors.columns(0, m).into_owned();
        SievedBasis::from_weights(w, &self.gram)
    }
}

/// W = top-`m` eigenvectors of Σ̂, G = HW.
pub fn eigen_sieve(sample: &SampleCovariance, array: &SensorArray, m: usize) -> Result<SievedBasis> {
    EigenSieve::new(sample, array)?.basis(m)
}
