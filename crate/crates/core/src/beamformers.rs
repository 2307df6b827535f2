//! Spectral baselines scanned over a sphere grid: Bartlett (matched) beamforming,
//! Capon / MVDR and the adapted angular response.
//!
//! For a steering vector a = a(r):
//!
//! ```text
//! MB    aᴴΣ̂a / (aᴴa)²
//! MVDR  1 / (aᴴΣ̂⁻¹a)
//! AAR   (aᴴΣ̂⁻¹a) / (aᴴΣ̂⁻²a)
//! ```
//!
//! All three scale linearly with Σ̂.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::SensorArray;
use crate::error::{Result, SimlError};
use crate::field_sim::SampleCovariance;
use crate::linalg::{self, CMatrix};
use crate::sphere_grid::SphereGrid;

/// Loading applied automatically when N < L (fraction of Tr(Σ̂)/L).
pub const AUTO_DIAGONAL_LOADING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeamformerKind {
    Mb,
    Mvdr,
    Aar,
}

impl BeamformerKind {
    pub fn name(&self) -> &'static str {
        match self {
            BeamformerKind::Mb => "mb",
            BeamformerKind::Mvdr => "mvdr",
            BeamformerKind::Aar => "aar",
        }
    }
}

impl fmt::Display for BeamformerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BeamformerKind {
    type Err = SimlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mb" | "bartlett" => Ok(BeamformerKind::Mb),
            "mvdr" | "capon" => Ok(BeamformerKind::Mvdr),
            "aar" => Ok(BeamformerKind::Aar),
            other => Err(SimlError::InvalidArgument(format!("unknown beamformer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamformerSpec {
    pub kind: BeamformerKind,
    /// Fraction of Tr(Σ̂)/L added to the diagonal before inversion.
    #[serde(default)]
    pub diagonal_loading: f64,
}

impl BeamformerSpec {
    pub fn new(kind: BeamformerKind) -> Self {
        Self { kind, diagonal_loading: 0.0 }
    }

    pub fn with_loading(kind: BeamformerKind, diagonal_loading: f64) -> Self {
        Self { kind, diagonal_loading }
    }
}

/// Evaluates the spectrum of `spec` on every grid point.
pub fn beamform_spectrum(
    sample: &SampleCovariance,
    array: &SensorArray,
    grid: &SphereGrid,
    spec: &BeamformerSpec,
) -> Result<Vec<f64>> {
    if sample.dim() != array.len() {
        return Err(SimlError::InvalidArgument(format!(
            "sample covariance is {0}x{0}, array has {1} sensors",
            sample.dim(),
            array.len()
        )));
    }
    spectrum_from_steering(sample, &array.steering_matrix(grid), spec)
}

/// Spectrum for a precomputed L×P steering matrix.
pub fn spectrum_from_steering(
    sample: &SampleCovariance,
    steering: &CMatrix,
    spec: &BeamformerSpec,
) -> Result<Vec<f64>> {
    if !(spec.diagonal_loading >= 0.0 && spec.diagonal_loading.is_finite()) {
        return Err(SimlError::InvalidArgument(format!("diagonal loading must be ≥ 0, got {}", spec.diagonal_loading)));
    }
    let l = sample.dim();
    let cov = sample.matrix();
    match spec.kind {
        BeamformerKind::Mb => {
            let projected = cov * steering;
            Ok(column_forms(steering, &projected)
                .into_iter()
                .zip(steering.column_iter())
                .map(|(num, a)| {
                    let norm = a.norm_squared();
                    num / (norm * norm)
                })
                .collect())
        }
        BeamformerKind::Mvdr | BeamformerKind::Aar => {
            let mut loading = spec.diagonal_loading;
            if sample.n_snapshots() < l {
                loading = loading.max(AUTO_DIAGONAL_LOADING);
            }
            let mut loaded = cov.clone();
            let shift = loading * linalg::trace_re(cov) / l as f64;
            for i in 0..l {
                loaded[(i, i)] += Complex64::new(shift, 0.0);
            }
            let method = spec.kind.name();
            let chol = linalg::cholesky_pd(loaded).ok_or(SimlError::SingularCovariance { method })?;
            let solved = chol.solve(steering);
            let quad = column_forms(steering, &solved);
            if quad.iter().any(|q| !(q.is_finite() && *q > 0.0)) {
                return Err(SimlError::SingularCovariance { method });
            }
            Ok(match spec.kind {
                BeamformerKind::Mvdr => quad.iter().map(|q| 1.0 / q).collect(),
                _ => quad.iter().zip(solved.column_iter()).map(|(q, x)| q / x.norm_squared()).collect(),
            })
        }
    }
}

/// Re(a_pᴴ x_p) for matching columns of `a` and `x`.
fn column_forms(a: &CMatrix, x: &CMatrix) -> Vec<f64> {
    a.column_iter()
        .zip(x.column_iter())
        .map(|(ac, xc)| ac.iter().zip(xc.iter()).map(|(u, v)| (u.conj() * v).re).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_sim::{sample_covariance, SourceComponent, SourceModel};
    use crate::linalg::identity;
    use crate::sphere_grid::{make_cap_grid, make_fibonacci_grid, Direction};
    use proptest::prelude::*;

    fn all(kind: BeamformerKind, sample: &SampleCovariance, array: &SensorArray, grid: &SphereGrid) -> Vec<f64> {
        beamform_spectrum(sample, array, grid, &BeamformerSpec::new(kind)).unwrap()
    }

    #[test]
    fn identity_covariance_spectra() {
        let array = SensorArray::random_disk(12, 8.0, 1.0, 1).unwrap();
        let grid = make_fibonacci_grid(64).unwrap();
        let sample = SampleCovariance::new(identity(12), 100).unwrap();
        let l = 12.0;
        assert!(all(BeamformerKind::Mb, &sample, &array, &grid).iter().all(|v| (v - 1.0 / l).abs() < 1e-12));
        assert!(all(BeamformerKind::Mvdr, &sample, &array, &grid).iter().all(|v| (v - 1.0 / l).abs() < 1e-12));
        assert!(all(BeamformerKind::Aar, &sample, &array, &grid).iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn strong_point_source_peaks_at_nearest_pixel() {
        let array = SensorArray::random_disk(16, 10.0, 1.0, 2).unwrap();
        let grid = make_cap_grid(Direction::Z, 0.5, 20).unwrap();
        let r0 = grid.points()[57];
        let model = SourceModel::new(vec![SourceComponent::Point { direction: r0, power: 100.0 }], vec![]).unwrap();
        let sigma = model.population_covariance(&array, 1.0, &grid).unwrap();
        let sample = sample_covariance(&sigma, 500, 3).unwrap();
        let nearest = grid.nearest(&r0).unwrap();
        assert_eq!(nearest, 57);
        for kind in [BeamformerKind::Mb, BeamformerKind::Mvdr, BeamformerKind::Aar] {
            let s = all(kind, &sample, &array, &grid);
            let argmax = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(argmax, nearest, "{kind}");
        }
    }

    #[test]
    fn mb_peak_equals_source_power_without_noise() {
        let array = SensorArray::random_disk(10, 10.0, 1.0, 2).unwrap();
        let r0 = Direction::from_spherical(0.1, 0.4);
        let a0 = array.steering_vector(&r0);
        let sample = SampleCovariance::new((&a0 * a0.adjoint()).scale(2.0), 1).unwrap();
        let grid = make_cap_grid(r0, 0.01, 1).unwrap();
        let v = all(BeamformerKind::Mb, &sample, &array, &grid)[0];
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn singular_covariance_needs_loading() {
        let array = SensorArray::random_disk(6, 5.0, 1.0, 3).unwrap();
        let a0 = array.steering_vector(&Direction::Z);
        // Rank one with N ≥ L: no automatic loading.
        let sample = SampleCovariance::new(&a0 * a0.adjoint(), 10).unwrap();
        let grid = make_fibonacci_grid(20).unwrap();
        let err = beamform_spectrum(&sample, &array, &grid, &BeamformerSpec::new(BeamformerKind::Mvdr));
        assert!(matches!(err, Err(SimlError::SingularCovariance { .. })));
        let ok = beamform_spectrum(&sample, &array, &grid, &BeamformerSpec::with_loading(BeamformerKind::Mvdr, 1e-3));
        assert!(ok.unwrap().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn few_snapshots_get_automatic_loading() {
        let array = SensorArray::random_disk(8, 5.0, 1.0, 4).unwrap();
        let sample = sample_covariance(&identity(8), 3, 1).unwrap();
        let grid = make_fibonacci_grid(20).unwrap();
        for kind in [BeamformerKind::Mvdr, BeamformerKind::Aar] {
            let s = all(kind, &sample, &array, &grid);
            assert!(s.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("Capon".parse::<BeamformerKind>().unwrap(), BeamformerKind::Mvdr);
        assert!("music".parse::<BeamformerKind>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn scaling_and_bounds(seed in 0u64..1000, scale in 0.01f64..100.0) {
            let array = SensorArray::random_disk(8, 6.0, 1.0, seed).unwrap();
            let grid = make_fibonacci_grid(30).unwrap();
            let mix = crate::field_sim::standard_complex_normal(8, 3, seed);
            let cov = &mix * mix.adjoint() + identity(8).scale(0.1);
            let sample = SampleCovariance::new(linalg::hermitianize(&cov), 50).unwrap();
            let scaled = SampleCovariance::new(linalg::hermitianize(&cov.scale(scale)), 50).unwrap();
            let mb = all(BeamformerKind::Mb, &sample, &array, &grid);
            let mvdr = all(BeamformerKind::Mvdr, &sample, &array, &grid);
            let aar = all(BeamformerKind::Aar, &sample, &array, &grid);
            let mb_s = all(BeamformerKind::Mb, &scaled, &array, &grid);
            let mvdr_s = all(BeamformerKind::Mvdr, &scaled, &array, &grid);
            let aar_s = all(BeamformerKind::Aar, &scaled, &array, &grid);
            for p in 0..grid.len() {
                prop_assert!(mb[p] >= 0.0 && mvdr[p] >= 0.0 && aar[p] >= 0.0);
                prop_assert!((mb_s[p] - scale * mb[p]).abs() <= 1e-9 * scale * mb[p]);
                prop_assert!((mvdr_s[p] - scale * mvdr[p]).abs() <= 1e-9 * scale * mvdr[p]);
                prop_assert!((aar_s[p] - scale * aar[p]).abs() <= 1e-9 * scale * aar[p]);
                // Cauchy–Schwarz: (aᴴa)² ≤ (aᴴΣ̂a)(aᴴΣ̂⁻¹a), i.e. MVDR ≤ MB·L with aᴴa = L
                prop_assert!(mvdr[p] <= mb[p] * 8.0 * (1.0 + 1e-9));
            }
        }
    }
}
