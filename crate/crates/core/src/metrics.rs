//! Image-quality metrics: relative mean squared error and RMS contrast.
//!
//! All norms and means are weighted by the grid's pixel areas.

use serde::Serialize;

use crate::error::{Result, SimlError};
use crate::sphere_grid::SphereGrid;

#[derive(Debug, Clone)]
pub struct IntensityMap<'g> {
    pub grid: &'g SphereGrid,
    pub values: Vec<f64>,
    pub label: String,
}

impl<'g> IntensityMap<'g> {
    pub fn new(grid: &'g SphereGrid, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SimlError::InvalidArgument(format!(
                "map has {} values for a {}-pixel grid",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SimlError::InvalidArgument("map contains non-finite values".into()));
        }
        Ok(Self { grid, values, label: label.into() })
    }

    /// Copy with every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| c * v).collect(), label: self.label.clone() }
    }

    /// Copy with negative values set to zero.
    pub fn clipped(&self) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v.max(0.0)).collect(), label: self.label.clone() }
    }
}

fn inner(grid: &SphereGrid, a: &[f64], b: &[f64]) -> f64 {
    grid.weights().iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

fn same_grid(a: &IntensityMap, b: &IntensityMap) -> Result<()> {
    if !std::ptr::eq(a.grid, b.grid) && a.grid != b.grid {
        return Err(SimlError::InvalidArgument("maps live on different grids".into()));
    }
    Ok(())
}

/// Least-squares scale c = ⟨est, truth⟩/‖est‖² (0 for an all-zero estimate).
pub fn fitted_scale(estimate: &IntensityMap, truth: &IntensityMap) -> Result<f64> {
    same_grid(estimate, truth)?;
    let energy = inner(estimate.grid, &estimate.values, &estimate.values);
    Ok(if energy > 0.0 { inner(estimate.grid, &estimate.values, &truth.values) / energy } else { 0.0 })
}

/// ‖c·est − truth‖²/‖truth‖², with c fitted when `scale_fit` and c = 1 otherwise.
pub fn relative_mse(estimate: &IntensityMap, truth: &IntensityMap, scale_fit: bool) -> Result<f64> {
    same_grid(estimate, truth)?;
    let grid = truth.grid;
    let truth_energy = inner(grid, &truth.values, &truth.values);
    if truth_energy <= 0.0 {
        return Err(SimlError::UndefinedMetric("relative MSE against an all-zero truth".into()));
    }
    let c = if scale_fit { fitted_scale(estimate, truth)? } else { 1.0 };
    let residual: Vec<f64> = estimate.values.iter().zip(&truth.values).map(|(e, t)| c * e - t).collect();
    Ok(inner(grid, &residual, &residual) / truth_energy)
}

/// Weighted standard deviation of the pixel values about their weighted mean.
pub fn rms_contrast(map: &IntensityMap) -> Result<f64> {
    if map.values.len() < 2 {
        return Err(SimlError::InvalidArgument("RMS contrast needs at least two pixels".into()));
    }
    let weights = map.grid.weights();
    let total: f64 = weights.iter().sum();
    let mean = inner(map.grid, &map.values, &vec![1.0; map.values.len()]) / total;
    let var: f64 = weights.iter().zip(&map.values).map(|(w, v)| w * (v - mean).powi(2)).sum::<f64>() / total;
    Ok(var.sqrt())
}

/// One metric row for an estimated map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapScores {
    pub rel_mse_fit: f64,
    pub rel_mse_raw: f64,
    pub rms_contrast: f64,
    /// Contrast of the estimate after the least-squares scale fit to the truth.
    pub rms_contrast_fit: f64,
}

pub fn score(estimate: &IntensityMap, truth: &IntensityMap) -> Result<MapScores> {
    let c = fitted_scale(estimate, truth)?;
    Ok(MapScores {
        rel_mse_fit: relative_mse(estimate, truth, true)?,
        rel_mse_raw: relative_mse(estimate, truth, false)?,
        rms_contrast: rms_contrast(estimate)?,
        rms_contrast_fit: rms_contrast(&estimate.scaled(c))?,
    })
}
