use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::beamformers::BeamformerKind;
use crate::error::{Result, SimlError};
use crate::field_sim::SourceModel;
use crate::sphere_grid::{make_cap_grid, make_fibonacci_grid, Direction, SphereGrid};

fn default_aperture() -> f64 {
    50.0
}

fn default_true() -> bool {
    true
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    #[serde(rename = "L")]
    pub l: usize,
    /// Diameter of the random disk layout, in wavelengths.
    #[serde(default = "default_aperture")]
    pub aperture_in_wavelengths: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout_seed: Option<u64>,
    /// CSV with columns x_m, y_m, z_m; overrides the random layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridConfig {
    Fibonacci {
        #[serde(rename = "P")]
        p: usize,
    },
    Cap {
        center: Direction,
        radius: f64,
        n_rings: usize,
    },
}

impl GridConfig {
    pub fn build(&self) -> Result<SphereGrid> {
        match *self {
            GridConfig::Fibonacci { p } => make_fibonacci_grid(p),
            GridConfig::Cap { center, radius, n_rings } => make_cap_grid(center, radius, n_rings),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SimlKnown,
    SimlJoint,
    Mb,
    Mvdr,
    Aar,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::SimlKnown, Method::SimlJoint, Method::Mb, Method::Mvdr, Method::Aar];

    pub fn name(self) -> &'static str {
        match self {
            Method::SimlKnown => "siml_known",
            Method::SimlJoint => "siml_joint",
            Method::Mb => "mb",
            Method::Mvdr => "mvdr",
            Method::Aar => "aar",
        }
    }

    pub fn is_siml(self) -> bool {
        matches!(self, Method::SimlKnown | Method::SimlJoint)
    }

    pub fn beamformer(self) -> Option<BeamformerKind> {
        match self {
            Method::Mb => Some(BeamformerKind::Mb),
            Method::Mvdr => Some(BeamformerKind::Mvdr),
            Method::Aar => Some(BeamformerKind::Aar),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = SimlError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| SimlError::Config(format!("methods: unknown method {s:?}")))
    }
}

/// Sieve dimension: fixed, or chosen per cell by a BIC scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DimensionChoice {
    Fixed(usize),
    #[default]
    Bic,
}

impl Serialize for DimensionChoice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            DimensionChoice::Fixed(m) => s.serialize_u64(m as u64),
            DimensionChoice::Bic => s.serialize_str("bic"),
        }
    }
}

impl<'de> Deserialize<'de> for DimensionChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(m) => Ok(DimensionChoice::Fixed(m)),
            Raw::Str(s) if s == "bic" => Ok(DimensionChoice::Bic),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("M must be an integer or \"bic\", got {s:?}"))),
        }
    }
}

/// Inclusive candidate range for the BIC scan. Missing ends default to
/// 2 and min(L − 1, N).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BicRange {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<usize>,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl Default for BicRange {
    fn default() -> Self {
        Self { min: None, max: None, stride: 1 }
    }
}

impl BicRange {
    pub fn candidates(&self, l: usize, n_snapshots: usize) -> Vec<usize> {
        let upper = self.max.unwrap_or_else(|| l.saturating_sub(1).min(n_snapshots));
        let lower = self.min.unwrap_or(2).min(upper.max(1));
        crate::estimators::stepped_range(lower.max(1), upper, self.stride)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimlConfig {
    #[serde(rename = "M", default)]
    pub m: DimensionChoice,
    #[serde(default)]
    pub bic_range: BicRange,
    /// Clip negative intensities to zero before writing and scoring.
    #[serde(default)]
    pub clip_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BeamformerConfig {
    /// Fraction of Tr(Σ̂)/L loaded onto the diagonal for MVDR and AAR.
    #[serde(default)]
    pub diagonal_loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub array: ArrayConfig,
    /// Wavelength in metres.
    pub wavelength: f64,
    pub grid: GridConfig,
    pub source_model: SourceModel,
    pub snr_db_list: Vec<f64>,
    pub n_snapshots: usize,
    pub n_repeats: usize,
    pub seed_base: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub siml: SimlConfig,
    #[serde(default)]
    pub beamformer: BeamformerConfig,
    #[serde(default = "default_true")]
    pub write_maps: bool,
    /// Redraw the random layout for every repeat (seed layout_seed + repeat).
    #[serde(default)]
    pub vary_layout: bool,
    pub output_dir: PathBuf,
}

fn config_err(field: &str, msg: impl fmt::Display) -> SimlError {
    SimlError::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| SimlError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file. A relative `layout_file` is taken
    /// relative to the config file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimlError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text).map_err(|e| SimlError::Config(e.to_string()))?;
        if let (Some(file), Some(dir)) = (config.array.layout_file.as_mut(), path.parent()) {
            if file.is_relative() {
                *file = dir.join(&*file);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn has_method(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.array;
        if a.l < 2 {
            return Err(config_err("array.L", format!("need at least 2 sensors, got {}", a.l)));
        }
        if !(a.aperture_in_wavelengths > 0.0 && a.aperture_in_wavelengths.is_finite()) {
            return Err(config_err("array.aperture_in_wavelengths", "must be positive and finite"));
        }
        match (&a.layout_seed, &a.layout_file) {
            (Some(_), Some(_)) => {
                return Err(config_err("array", "give either layout_seed or layout_file, not both"));
            }
            (None, None) => return Err(config_err("array", "one of layout_seed or layout_file is required")),
            (None, Some(_)) if self.vary_layout => {
                return Err(config_err("vary_layout", "needs a random layout (layout_seed)"));
            }
            _ => {}
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(config_err("wavelength", "must be positive and finite"));
        }
        match self.grid {
            GridConfig::Fibonacci { p: 0 } => return Err(config_err("grid.P", "must be ≥ 1")),
            GridConfig::Cap { radius, n_rings, .. } => {
                if !(radius > 0.0 && radius <= std::f64::consts::FRAC_PI_2) {
                    return Err(config_err("grid.radius", format!("must lie in (0, π/2], got {radius}")));
                }
                if n_rings == 0 {
                    return Err(config_err("grid.n_rings", "must be ≥ 1"));
                }
            }
            _ => {}
        }
        self.source_model.validate().map_err(|e| config_err("source_model", e))?;
        if self.snr_db_list.is_empty() {
            return Err(config_err("snr_db_list", "must not be empty"));
        }
        if let Some(bad) = self.snr_db_list.iter().find(|s| !s.is_finite()) {
            return Err(config_err("snr_db_list", format!("every SNR must be finite, got {bad}")));
        }
        if self.n_snapshots == 0 {
            return Err(config_err("n_snapshots", "must be ≥ 1"));
        }
        if self.n_repeats == 0 {
            return Err(config_err("n_repeats", "must be ≥ 1"));
        }
        if self.methods.is_empty() {
            return Err(config_err("methods", "must name at least one method"));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(config_err("methods", "duplicate entries"));
        }
        if let DimensionChoice::Fixed(m) = self.siml.m {
            if m == 0 {
                return Err(config_err("siml.M", "must be ≥ 1"));
            }
            if self.has_method(Method::SimlJoint) && m >= a.l {
                return Err(config_err("siml.M", format!("siml_joint needs M ≤ L − 1 = {}, got {m}", a.l - 1)));
            }
            if m > a.l {
                return Err(config_err("siml.M", format!("must not exceed L = {}, got {m}", a.l)));
            }
        }
        let r = &self.siml.bic_range;
        if r.stride == 0 {
            return Err(config_err("siml.bic_range.stride", "must be ≥ 1"));
        }
        if r.min == Some(0) {
            return Err(config_err("siml.bic_range.min", "must be ≥ 1"));
        }
        if let Some(max) = r.max {
            if max >= a.l {
                return Err(config_err("siml.bic_range.max", format!("must be ≤ L − 1 = {}", a.l - 1)));
            }
            if r.min.is_some_and(|min| min > max) {
                return Err(config_err("siml.bic_range", "min exceeds max"));
            }
        }
        let loading = self.beamformer.diagonal_loading;
        if !(loading >= 0.0 && loading.is_finite()) {
            return Err(config_err("beamformer.diagonal_loading", "must be ≥ 0 and finite"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(config_err("output_dir", "must not be empty"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_json() -> String {
        r#"{
            "array": {"L": 8, "aperture_in_wavelengths": 4.0, "layout_seed": 1},
            "wavelength": 2.0,
            "grid": {"kind": "cap", "center": [0, 0, 1], "radius": 0.5, "n_rings": 6},
            "source_model": {"components": [
                {"type": "blob", "center": [0.1, 0.0, 0.99498743710662], "width": 0.1, "peak_power": 1.0},
                {"type": "point", "direction": [0, 0, 1], "power": 0.01}
            ]},
            "snr_db_list": [0.0, 5.0],
            "n_snapshots": 100,
            "n_repeats": 2,
            "seed_base": 7,
            "methods": ["siml_joint", "mb"],
            "siml": {"M": "bic", "bic_range": {"stride": 2}},
            "output_dir": "out"
        }"#
        .to_string()
    }

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_json_str(&sample_json()).unwrap();
        assert_eq!(c.siml.m, DimensionChoice::Bic);
        assert_eq!(c.siml.bic_range.stride, 2);
        assert!(c.write_maps);
        assert!(!c.vary_layout);
        assert_eq!(c.beamformer.diagonal_loading, 0.0);
        assert_eq!(c.methods, vec![Method::SimlJoint, Method::Mb]);
    }

    #[test]
    fn round_trip() {
        let c = ExperimentConfig::from_json_str(&sample_json()).unwrap();
        let again = ExperimentConfig::from_json_str(&c.to_json_string().unwrap()).unwrap();
        assert_eq!(c, again);
        let mut fixed = c.clone();
        fixed.siml.m = DimensionChoice::Fixed(5);
        let again = ExperimentConfig::from_json_str(&fixed.to_json_string().unwrap()).unwrap();
        assert_eq!(fixed, again);
    }

    fn expect_field(json: &str, field: &str) {
        match ExperimentConfig::from_json_str(json) {
            Err(SimlError::Config(msg)) => assert!(msg.contains(field), "{msg} should name {field}"),
            other => panic!("expected config error naming {field}, got {other:?}"),
        }
    }

    #[test]
    fn field_level_errors() {
        let base = sample_json();
        expect_field(&base.replace("\"n_snapshots\": 100", "\"n_snapshots\": 0"), "n_snapshots");
        expect_field(&base.replace("\"n_repeats\": 2", "\"n_repeats\": 0"), "n_repeats");
        expect_field(&base.replace("\"M\": \"bic\"", "\"M\": 8"), "siml.M");
        expect_field(&base.replace("\"M\": \"bic\"", "\"M\": \"auto\""), "M must be");
        expect_field(&base.replace("[0.0, 5.0]", "[]"), "snr_db_list");
        expect_field(&base.replace("\"radius\": 0.5", "\"radius\": 2.0"), "grid.radius");
        expect_field(&base.replace("\"siml_joint\", \"mb\"", "\"mb\", \"mb\""), "methods");
        expect_field(&base.replace("\"siml_joint\", \"mb\"", "\"music\""), "unknown variant");
        expect_field(&base.replace("\"stride\": 2", "\"stride\": 0"), "stride");
        expect_field(&base.replace("\"wavelength\": 2.0", "\"wavelength\": -1.0"), "wavelength");
        expect_field(&base.replace("\"layout_seed\": 1", "\"layout_seed\": 1, \"bogus\": 3"), "bogus");
        expect_field(&base.replace("\"peak_power\": 1.0", "\"peak_power\": -1.0"), "source_model");
    }

    #[test]
    fn fixed_m_equal_to_l_is_allowed_for_known_noise_only() {
        let json =
            sample_json().replace("\"M\": \"bic\"", "\"M\": 8").replace("\"siml_joint\", \"mb\"", "\"siml_known\"");
        assert!(ExperimentConfig::from_json_str(&json).is_ok());
    }

    #[test]
    fn bic_candidates() {
        let r = BicRange { min: None, max: None, stride: 3 };
        assert_eq!(r.candidates(8, 100), vec![2, 5, 7]);
        assert_eq!(r.candidates(8, 4), vec![2, 4]);
        let r = BicRange { min: Some(3), max: Some(5), stride: 1 };
        assert_eq!(r.candidates(8, 100), vec![3, 4, 5]);
    }
}
