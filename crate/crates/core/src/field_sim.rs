//! Ground-truth source fields, population covariance and snapshot simulation.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array_model::SensorArray;
use crate::error::{Result, SimlError};
use crate::linalg::{self, CMatrix};
use crate::sphere_grid::{Direction, SphereGrid};

/// Blob pixels whose Gaussian profile falls below this fraction of the peak are skipped.
const BLOB_CUTOFF: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceComponent {
    Point {
        direction: Direction,
        power: f64,
    },
    /// Isotropic Gaussian intensity profile, `width` in radians.
    Blob {
        center: Direction,
        width: f64,
        peak_power: f64,
    },
}

/// Complex correlation coefficient between two point components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub i: usize,
    pub j: usize,
    pub rho: Complex64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub components: Vec<SourceComponent>,
    #[serde(default)]
    pub correlations: Vec<Correlation>,
}

impl SourceModel {
    pub fn new(components: Vec<SourceComponent>, correlations: Vec<Correlation>) -> Result<Self> {
        let model = Self { components, correlations };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, c) in self.components.iter().enumerate() {
            match *c {
                SourceComponent::Point { power, .. } if !(power >= 0.0 && power.is_finite()) => {
                    return Err(SimlError::InvalidArgument(format!(
                        "component {k}: point power must be ≥ 0, got {power}"
                    )));
                }
                SourceComponent::Blob { width, peak_power, .. } => {
                    if !(width > 0.0 && width.is_finite()) {
                        return Err(SimlError::InvalidArgument(format!(
                            "component {k}: blob width must be > 0, got {width}"
                        )));
                    }
                    if !(peak_power >= 0.0 && peak_power.is_finite()) {
                        return Err(SimlError::InvalidArgument(format!(
                            "component {k}: blob peak power must be ≥ 0, got {peak_power}"
                        )));
                    }
                }
                _ => {}
            }
        }
        for c in &self.correlations {
            if c.rho.norm().is_nan() || c.rho.norm() > 1.0 + 1e-12 {
                return Err(SimlError::InvalidArgument(format!(
                    "correlation ({}, {}) has |rho| = {} > 1",
                    c.i,
                    c.j,
                    c.rho.norm()
                )));
            }
            if c.i == c.j {
                return Err(SimlError::InvalidArgument(format!("correlation of component {} with itself", c.i)));
            }
            for idx in [c.i, c.j] {
                match self.components.get(idx) {
                    Some(SourceComponent::Point { .. }) => {}
                    Some(_) => {
                        return Err(SimlError::InvalidArgument(format!(
                            "correlation refers to component {idx}, which is not a point source"
                        )))
                    }
                    None => {
                        return Err(SimlError::InvalidArgument(format!(
                            "correlation refers to missing component {idx}"
                        )))
                    }
                }
            }
        }
        let (_, cross) = self.point_cross_covariance();
        if cross.nrows() > 0 {
            let min = SymmetricEigen::new(linalg::hermitianize(&cross))
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if min < -1e-10 {
                return Err(SimlError::InvalidArgument(format!(
                    "point-source correlations are not PSD (smallest eigenvalue {min:e})"
                )));
            }
        }
        Ok(())
    }

    /// Point directions and their cross-covariance C_kl = ρ_kl √(q_k q_l).
    fn point_cross_covariance(&self) -> (Vec<(usize, Direction)>, CMatrix) {
        let points: Vec<(usize, Direction, f64)> = self
            .components
            .iter()
            .enumerate()
            .filter_map(|(k, c)| match *c {
                SourceComponent::Point { direction, power } => Some((k, direction, power)),
                _ => None,
            })
            .collect();
        let n = points.len();
        let mut cross = CMatrix::zeros(n, n);
        for (a, p) in points.iter().enumerate() {
            cross[(a, a)] = Complex64::new(p.2, 0.0);
        }
        let slot = |k: usize| points.iter().position(|p| p.0 == k);
        for c in &self.correlations {
            if let (Some(a), Some(b)) = (slot(c.i), slot(c.j)) {
                let scale = (points[a].2 * points[b].2).sqrt();
                cross[(a, b)] = c.rho * scale;
                cross[(b, a)] = c.rho.conj() * scale;
            }
        }
        (points.into_iter().map(|p| (p.0, p.1)).collect(), cross)
    }

    /// Ground-truth intensity I(r) = κ(r, r) on the grid.
    ///
    /// Blobs contribute peak·exp(−θ²/(2w²)); a point of power q is pinned to its
    /// nearest pixel with density q / w_pixel.
    pub fn intensity_map(&self, grid: &SphereGrid) -> Vec<f64> {
        let mut values = vec![0.0; grid.len()];
        for c in &self.components {
            match *c {
                SourceComponent::Blob { center, width, peak_power } => {
                    for (v, r) in values.iter_mut().zip(grid.points()) {
                        let theta = r.angle_to(&center);
                        *v += peak_power * (-theta * theta / (2.0 * width * width)).exp();
                    }
                }
                SourceComponent::Point { direction, power } => {
                    if let Some(p) = grid.nearest(&direction) {
                        values[p] += power / grid.weights()[p];
                    }
                }
            }
        }
        values
    }

    /// Σ = Φ*T_κΦ + σI_L. Blob integrals use grid quadrature; points use their
    /// exact steering vectors.
    pub fn population_covariance(&self, array: &SensorArray, sigma: f64, grid: &SphereGrid) -> Result<CMatrix> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(SimlError::InvalidArgument(format!("sigma must be ≥ 0, got {sigma}")));
        }
        self.validate()?;
        let l = array.len();

        // Blob part: Σ_p w_p I(r_p) a(r_p) a(r_p)ᴴ = B Bᴴ with B_p = √(w_p I_p) a(r_p)
        let mut blob_intensity = vec![0.0; grid.len()];
        for c in &self.components {
            if let SourceComponent::Blob { center, width, peak_power } = *c {
                for (v, r) in blob_intensity.iter_mut().zip(grid.points()) {
                    let theta = r.angle_to(&center);
                    let g = (-theta * theta / (2.0 * width * width)).exp();
                    if g > BLOB_CUTOFF {
                        *v += peak_power * g;
                    }
                }
            }
        }
        let active: Vec<usize> = (0..grid.len()).filter(|&p| blob_intensity[p] > 0.0).collect();
        let mut sigma_mat = if active.is_empty() {
            CMatrix::zeros(l, l)
        } else {
            let mut b = CMatrix::zeros(l, active.len());
            for (col, &p) in active.iter().enumerate() {
                let scale = (grid.weights()[p] * blob_intensity[p]).sqrt();
                let a = array.steering_vector(&grid.points()[p]);
                b.set_column(col, &a.scale(scale));
            }
            &b * b.adjoint()
        };

        // Point part: A C Aᴴ
        let (points, cross) = self.point_cross_covariance();
        if !points.is_empty() {
            let mut a = CMatrix::zeros(l, points.len());
            for (col, (_, dir)) in points.iter().enumerate() {
                a.set_column(col, &array.steering_vector(dir));
            }
            sigma_mat += &a * cross * a.adjoint();
        }

        for i in 0..l {
            sigma_mat[(i, i)] += Complex64::new(sigma, 0.0);
        }
        Ok(linalg::hermitianize(&sigma_mat))
    }

    /// 10·log₁₀(Tr Σ_signal / (L σ)).
    pub fn snr_db(&self, array: &SensorArray, sigma: f64, grid: &SphereGrid) -> Result<f64> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(SimlError::InvalidArgument(format!("SNR needs a positive noise power, got {sigma}")));
        }
        let signal = linalg::trace_re(&self.population_covariance(array, 0.0, grid)?);
        Ok(10.0 * (signal / (array.len() as f64 * sigma)).log10())
    }

    /// Noise power σ giving the requested SNR (inverse of [`SourceModel::snr_db`]).
    pub fn sigma_for_snr(&self, array: &SensorArray, snr_db: f64, grid: &SphereGrid) -> Result<f64> {
        if !snr_db.is_finite() {
            return Err(SimlError::InvalidArgument(format!("SNR must be finite, got {snr_db}")));
        }
        let signal = linalg::trace_re(&self.population_covariance(array, 0.0, grid)?);
        noise_power_for_snr(signal, array.len(), snr_db)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = serde_json::from_reader(std::fs::File::open(path)?)?;
        model.validate()?;
        Ok(model)
    }
}

/// σ = Tr Σ_signal / (L·10^(snr/10)).
pub fn noise_power_for_snr(signal_trace: f64, l: usize, snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(SimlError::InvalidArgument(format!("SNR must be finite, got {snr_db}")));
    }
    if !(signal_trace > 0.0 && signal_trace.is_finite()) {
        return Err(SimlError::InvalidArgument("source model carries no power; SNR is undefined".into()));
    }
    Ok(signal_trace / (l as f64 * 10f64.powf(snr_db / 10.0)))
}

/// Σ̂ = (1/N) Σ y_n y_nᴴ together with its snapshot count.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    matrix: CMatrix,
    n_snapshots: usize,
}

impl SampleCovariance {
    /// Wraps an existing matrix, checking that it is Hermitian PSD.
    pub fn new(matrix: CMatrix, n_snapshots: usize) -> Result<Self> {
        if n_snapshots == 0 {
            return Err(SimlError::InvalidArgument("snapshot count must be ≥ 1".into()));
        }
        linalg::check_hermitian_psd(&matrix, 1e-10)?;
        Ok(Self { matrix: linalg::hermitianize(&matrix), n_snapshots })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn n_snapshots(&self) -> usize {
        self.n_snapshots
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Draws `n` i.i.d. snapshots y ~ CN(0, Σ) and returns their sample covariance.
/// Deterministic in `(sigma, n, seed)`.
pub fn sample_covariance(sigma: &CMatrix, n: usize, seed: u64) -> Result<SampleCovariance> {
    if n == 0 {
        return Err(SimlError::InvalidArgument("snapshot count must be ≥ 1".into()));
    }
    linalg::check_hermitian_psd(sigma, 1e-10)?;
    let snapshots = draw_snapshots(sigma, n, seed);
    let sample = (&snapshots * snapshots.adjoint()).unscale(n as f64);
    Ok(SampleCovariance { matrix: linalg::hermitianize(&sample), n_snapshots: n })
}

/// L×N matrix of snapshots y = S z with S Sᴴ = Σ and z ~ CN(0, I).
pub fn draw_snapshots(sigma: &CMatrix, n: usize, seed: u64) -> CMatrix {
    let l = sigma.nrows();
    let factor = linalg::psd_factor(sigma);
    let noise = standard_complex_normal(l, n, seed);
    factor * noise
}

/// Entries with independent N(0, ½) real and imaginary parts, so E|z|² = 1.
pub fn standard_complex_normal(rows: usize, cols: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    // Column-major fill keeps the draw order independent of nalgebra internals.
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        data.push(Complex64::new(re * scale, im * scale));
    }
    DMatrix::from_vec(rows, cols, data)
}
