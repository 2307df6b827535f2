//! Sensor-array geometry, steering vectors, the discretized sampling operator
//! and the analytic Gram matrix of the sensing functions.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimlError};
use crate::linalg::{CMatrix, CVector};
use crate::sphere_grid::{Direction, SphereGrid};

/// Minimum admissible distance between two sensors, in meters.
pub const MIN_SENSOR_SEPARATION: f64 = 1e-9;

/// Unnormalized sinc, sin(x)/x with sinc(0) = 1.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    positions: Vec<[f64; 3]>,
    wavelength: f64,
}

impl SensorArray {
    pub fn new(positions: Vec<[f64; 3]>, wavelength: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(SimlError::InvalidArgument("sensor array needs at least one sensor".into()));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(SimlError::InvalidArgument(format!("wavelength must be positive, got {wavelength}")));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SimlError::InvalidArgument("sensor positions must be finite".into()));
        }
        for i in 0..positions.len() {
            for j in 0..i {
                let d = distance(&positions[i], &positions[j]);
                if d < MIN_SENSOR_SEPARATION {
                    return Err(SimlError::InvalidArgument(format!("sensors {j} and {i} are {d:e} m apart")));
                }
            }
        }
        Ok(Self { positions, wavelength })
    }

    /// `l` sensors drawn uniformly in a z = 0 disk whose diameter is
    /// `aperture_in_wavelengths` wavelengths.
    pub fn random_disk(l: usize, aperture_in_wavelengths: f64, wavelength: f64, seed: u64) -> Result<Self> {
        if !(aperture_in_wavelengths > 0.0 && aperture_in_wavelengths.is_finite()) {
            return Err(SimlError::InvalidArgument(format!(
                "aperture must be positive, got {aperture_in_wavelengths}"
            )));
        }
        let radius = 0.5 * aperture_in_wavelengths * wavelength;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut positions: Vec<[f64; 3]> = Vec::with_capacity(l);
        while positions.len() < l {
            let r = radius * rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            let p = [r * phi.cos(), r * phi.sin(), 0.0];
            if positions.iter().all(|q| distance(&p, q) >= MIN_SENSOR_SEPARATION) {
                positions.push(p);
            }
        }
        Self::new(positions, wavelength)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// a(r)_i = exp(−j2π⟨r, p_i⟩/λ)
    pub fn steering_vector(&self, r: &Direction) -> CVector {
        let k = -2.0 * PI / self.wavelength;
        CVector::from_iterator(self.len(), self.positions.iter().map(|p| Complex64::from_polar(1.0, k * r.dot(p))))
    }

    /// L×P matrix whose columns are the steering vectors of the grid points.
    pub fn steering_matrix(&self, grid: &SphereGrid) -> CMatrix {
        let k = -2.0 * PI / self.wavelength;
        CMatrix::from_fn(self.len(), grid.len(), |i, p| {
            Complex64::from_polar(1.0, k * grid.points()[p].dot(&self.positions[i]))
        })
    }

    /// Discretized sampling operator Φ* on `grid`.
    pub fn sampling_matrix<'g>(&self, grid: &'g SphereGrid, absorb_weights: bool) -> SamplingMatrix<'g> {
        let mut entries = self.steering_matrix(grid);
        if absorb_weights {
            for (mut col, &w) in entries.column_iter_mut().zip(grid.weights()) {
                col.scale_mut(w);
            }
        }
        SamplingMatrix { entries, grid, weights_absorbed: absorb_weights }
    }

    /// H_ij = ⟨φ_j, φ_i⟩ = 4π sinc(2π‖p_i − p_j‖/λ).
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let l = self.len();
        let k = 2.0 * PI / self.wavelength;
        let mut h = DMatrix::zeros(l, l);
        for i in 0..l {
            h[(i, i)] = 4.0 * PI;
            for j in 0..i {
                let v = 4.0 * PI * sinc(k * distance(&self.positions[i], &self.positions[j]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x_m", "y_m", "z_m"])?;
        for p in &self.positions {
            w.write_record(p.iter().map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an `x_m,y_m,z_m` layout; the wavelength is supplied separately.
    pub fn read_csv(path: impl AsRef<Path>, wavelength: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| SimlError::InvalidArgument(format!("array CSV is missing column {name}")))
        };
        let idx = [col("x_m")?, col("y_m")?, col("z_m")?];
        let mut positions = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut p = [0.0; 3];
            for (d, &c) in idx.iter().enumerate() {
                let field = rec.get(c).unwrap_or("");
                p[d] = field
                    .trim()
                    .parse()
                    .map_err(|_| SimlError::InvalidArgument(format!("row {row}: cannot parse {field:?}")))?;
            }
            positions.push(p);
        }
        Self::new(positions, wavelength)
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Φ* sampled on a grid. With `weights_absorbed`, column p carries the
/// quadrature weight so that `entries · s` integrates s against φ̄_i.
#[derive(Debug, Clone)]
pub struct SamplingMatrix<'g> {
    pub entries: CMatrix,
    pub grid: &'g SphereGrid,
    pub weights_absorbed: bool,
}

impl SamplingMatrix<'_> {
    /// Φ*s for a field sampled on the grid.
    pub fn apply(&self, field: &[Complex64]) -> Result<CVector> {
        if field.len() != self.entries.ncols() {
            return Err(SimlError::InvalidArgument(format!(
                "field has {} samples, grid has {}",
                field.len(),
                self.entries.ncols()
            )));
        }
        Ok(&self.entries * CVector::from_column_slice(field))
    }
}
