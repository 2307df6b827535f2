use super::likelihood::KappaEstimate;
use crate::array_model::SensorArray;
use crate::error::{Result, SimlError};
use crate::linalg::CMatrix;
use crate::sphere_grid::SphereGrid;

/// Î(r) = Σ_ij R̂_ij ψ_i(r) ψ̄_j(r) on every grid point.
pub fn intensity_estimate(est: &KappaEstimate, array: &SensorArray, grid: &SphereGrid) -> Result<Vec<f64>> {
    if array.len() != est.basis.n_sensors() {
        return Err(SimlError::InvalidArgument(format!(
            "estimate was fitted for {} sensors, array has {}",
            est.basis.n_sensors(),
            array.len()
        )));
    }
    intensity_from_steering(est, &array.steering_matrix(grid))
}

/// Same as [`intensity_estimate`] for a precomputed L×P steering matrix.
///
/// With u(r) = Wᴴa(r) = conj(ψ(r)), the sum equals u(r)ᴴ R̂ u(r).
pub fn intensity_from_steering(est: &KappaEstimate, steering: &CMatrix) -> Result<Vec<f64>> {
    if steering.nrows() != est.basis.n_sensors() {
        return Err(SimlError::InvalidArgument("steering matrix has the wrong number of rows".into()));
    }
    let u = est.basis.w().adjoint() * steering;
    let v = &est.r_hat * &u;
    Ok(u.column_iter()
        .zip(v.column_iter())
        .map(|(uc, vc)| uc.iter().zip(vc.iter()).map(|(a, b)| (a.conj() * b).re).sum())
        .collect())
}
