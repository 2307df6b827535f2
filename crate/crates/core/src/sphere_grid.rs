//! Discretizations of the unit sphere with quadrature weights.
//!
//! Two layouts are provided:
//!
//! * a Fibonacci lattice over the full sphere, every point carrying weight 4π/P;
//! * an equal-area partition of a spherical cap into concentric rings.
//!
//! Point ordering is fixed by construction (lattice index for the Fibonacci
//! grid; ring by ring from the cap center outwards, increasing azimuth inside a
//! ring for cap grids), so exported grids are byte-for-byte reproducible.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimlError};

/// A unit vector on S².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Direction {
    x: f64,
    y: f64,
    z: f64,
}

impl Direction {
    pub const Z: Direction = Direction { x: 0.0, y: 0.0, z: 1.0 };
    pub const X: Direction = Direction { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Direction = Direction { x: 0.0, y: 1.0, z: 0.0 };

    /// Normalizes `(x, y, z)` onto the sphere. Fails for the zero or a non-finite vector.
    ///
    /// Vectors already unit to within a few ulps are kept as given, so that
    /// serialized directions read back unchanged.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(SimlError::InvalidArgument(format!("cannot normalize ({x}, {y}, {z}) to a direction")));
        }
        if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Self { x, y, z });
        }
        Ok(Self { x: x / norm, y: y / norm, z: z / norm })
    }

    /// Direction at colatitude `theta` and azimuth `phi` (radians).
    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self { x: st * cp, y: st * sp, z: ct }
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, v: &[f64; 3]) -> f64 {
        self.x * v[0] + self.y * v[1] + self.z * v[2]
    }

    /// Great-circle angle to `other`, in radians.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        // atan2 form stays accurate for nearly parallel vectors.
        let cross = [
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        ];
        let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        let cos = self.dot(&other.to_array());
        sin.atan2(cos)
    }

    pub fn antipode(&self) -> Self {
        Self { x: -self.x, y: -self.y, z: -self.z }
    }

    /// Two unit vectors completing `self` to a right-handed orthonormal frame.
    fn tangent_frame(&self) -> ([f64; 3], [f64; 3]) {
        let c = self.to_array();
        let helper = if c[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
        // e1 = normalize(helper × c), e2 = c × e1
        let mut e1 = [
            helper[1] * c[2] - helper[2] * c[1],
            helper[2] * c[0] - helper[0] * c[2],
            helper[0] * c[1] - helper[1] * c[0],
        ];
        let n = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
        e1.iter_mut().for_each(|v| *v /= n);
        let e2 = [c[1] * e1[2] - c[2] * e1[1], c[2] * e1[0] - c[0] * e1[2], c[0] * e1[1] - c[1] * e1[0]];
        (e1, e2)
    }
}

impl TryFrom<[f64; 3]> for Direction {
    type Error = SimlError;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Direction::new(v[0], v[1], v[2])
    }
}

impl From<Direction> for [f64; 3] {
    fn from(d: Direction) -> Self {
        d.to_array()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridKind {
    FullSphere,
    Cap { center: Direction, radius: f64 },
}

impl GridKind {
    /// Exact area of the covered domain in steradians.
    pub fn area(&self) -> f64 {
        match self {
            GridKind::FullSphere => 4.0 * PI,
            GridKind::Cap { radius, .. } => cap_area(*radius),
        }
    }
}

/// Area 2π(1 − cos θ) of a cap with angular radius θ, stable for small θ.
pub fn cap_area(radius: f64) -> f64 {
    let half = (radius / 2.0).sin();
    4.0 * PI * half * half
}

/// Pixelized (part of the) sphere. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    points: Vec<Direction>,
    weights: Vec<f64>,
    kind: GridKind,
}

impl SphereGrid {
    pub fn points(&self) -> &[Direction] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Σ_p w_p · values_p
    pub fn quadrature(&self, values: &[Complex64]) -> Result<Complex64> {
        if values.len() != self.len() {
            return Err(SimlError::InvalidArgument(format!(
                "quadrature expects {} values, got {}",
                self.len(),
                values.len()
            )));
        }
        Ok(self.weights.iter().zip(values).map(|(w, v)| v * *w).sum())
    }

    /// Real-valued counterpart of [`SphereGrid::quadrature`].
    pub fn quadrature_real(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(SimlError::InvalidArgument(format!(
                "quadrature expects {} values, got {}",
                self.len(),
                values.len()
            )));
        }
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    /// Index of the grid point closest (in angle) to `dir`. Ties go to the lower index.
    pub fn nearest(&self, dir: &Direction) -> Option<usize> {
        let target = dir.to_array();
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.points.iter().enumerate() {
            let c = p.dot(&target);
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((i, c));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// `p` points of a Fibonacci lattice on the full sphere, each with weight 4π/p.
pub fn make_fibonacci_grid(p: usize) -> Result<SphereGrid> {
    if p == 0 {
        return Err(SimlError::InvalidArgument("Fibonacci grid needs at least one point".into()));
    }
    let golden_angle = PI * (3.0 - 5.0_f64.sqrt());
    let n = p as f64;
    let points = (0..p)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = (i as f64 * golden_angle) % (2.0 * PI);
            Direction { x: rho * phi.cos(), y: rho * phi.sin(), z }
        })
        .collect();
    Ok(SphereGrid { points, weights: vec![4.0 * PI / n; p], kind: GridKind::FullSphere })
}

/// Equal-area partition of the cap of angular `radius` around `center`.
///
/// Ring 0 is a single polar cell holding the center; ring k ≥ 1 holds
/// round(2πk) cells. Ring boundaries sit at cumulative-area fractions so every
/// cell has area `cap_area(radius) / P`. Cell points are placed at the
/// area-midpoint colatitude of their ring and at the azimuthal cell centers.
pub fn make_cap_grid(center: Direction, radius: f64, n_rings: usize) -> Result<SphereGrid> {
    if !(radius > 0.0 && radius <= PI / 2.0) {
        return Err(SimlError::InvalidArgument(format!("cap radius must lie in (0, π/2], got {radius}")));
    }
    if n_rings == 0 {
        return Err(SimlError::InvalidArgument("cap grid needs at least one ring".into()));
    }
    let cells: Vec<usize> =
        (0..n_rings).map(|k| if k == 0 { 1 } else { (2.0 * PI * k as f64).round() as usize }).collect();
    let total: usize = cells.iter().sum();
    let area = cap_area(radius);
    let weight = area / total as f64;
    let (e1, e2) = center.tangent_frame();
    let c = center.to_array();

    // 1 − cos θ as a function of enclosed area: a = 2π(1 − cos θ)
    let colatitude = |enclosed: f64| -> f64 {
        let one_minus_cos = (enclosed / (2.0 * PI)).clamp(0.0, 2.0);
        2.0 * (one_minus_cos / 2.0).sqrt().asin()
    };

    let mut points = Vec::with_capacity(total);
    let mut before = 0usize;
    for (k, &n) in cells.iter().enumerate() {
        let theta = if k == 0 { 0.0 } else { colatitude((before as f64 + 0.5 * n as f64) * weight) };
        // Stagger alternate rings by half a cell.
        let offset = if k % 2 == 0 { 0.5 } else { 0.0 };
        let (st, ct) = theta.sin_cos();
        for j in 0..n {
            let phi = 2.0 * PI * (j as f64 + offset) / n as f64;
            let (sp, cp) = phi.sin_cos();
            let v: [f64; 3] = std::array::from_fn(|d| st * cp * e1[d] + st * sp * e2[d] + ct * c[d]);
            points.push(Direction::new(v[0], v[1], v[2])?);
        }
        before += n;
    }
    Ok(SphereGrid { points, weights: vec![weight; total], kind: GridKind::Cap { center, radius } })
}
