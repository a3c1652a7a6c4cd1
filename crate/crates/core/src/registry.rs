//! The tool environment catalog: effect schemas, parameter ranges and the
//! normalization/quantization rules derived from them.
//!
//! Every parameter carries two sampling regimes. The coarse regime spans the
//! full operating range of a control and is the range used for validation and
//! normalization; the fine regime is a production-realistic sub-range.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Absolute tolerance used for range membership and grid conformance checks.
pub const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("unknown effect module `{0}`")]
    UnknownModule(String),
    #[error("module `{module}` has no parameter `{param}`")]
    UnknownParam { module: String, param: String },
    #[error("{module}.{param} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        module: String,
        param: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid registry: {0}")]
    Invalid(String),
    #[error("registry json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Coarse,
    Fine,
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "coarse" => Ok(Regime::Coarse),
            "fine" => Ok(Regime::Fine),
            other => Err(format!(
                "unknown regime `{other}` (expected coarse or fine)"
            )),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Coarse => "coarse",
            Regime::Fine => "fine",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "dB")]
    Decibel,
    #[serde(rename = "Hz")]
    Hertz,
    #[serde(rename = "ms")]
    Milliseconds,
    #[serde(rename = "seconds")]
    Seconds,
    #[serde(rename = "ratio")]
    Ratio,
    #[serde(rename = "unitless")]
    Unitless,
}

/// A closed interval with a quantization step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl ParamRange {
    pub const fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min - GRID_TOLERANCE && value <= self.max + GRID_TOLERANCE
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    /// Largest grid index `k` with `min + k * step <= max`.
    ///
    /// A few table rows have spans that are not a whole number of steps
    /// (e.g. mid Q `[0.1, 6.0]` step 0.5); their grids stop at the last
    /// point that still lies inside the range.
    pub fn max_index(&self) -> u64 {
        ((self.span() / self.step) + GRID_TOLERANCE).floor() as u64
    }

    pub fn grid_len(&self) -> u64 {
        self.max_index() + 1
    }

    /// Grid point `k`, snapped to the nearest `f64` of its short decimal
    /// form so that it prints and parses back bit-exactly.
    pub fn grid_point(&self, k: u64) -> f64 {
        let v = self.min + k.min(self.max_index()) as f64 * self.step;
        let scale = 10f64.powi(self.decimals() as i32);
        (v * scale).round() / scale + 0.0
    }

    /// Decimal places needed to write `min` and `step` exactly.
    fn decimals(&self) -> u32 {
        (0..=12u32)
            .find(|&d| {
                let scale = 10f64.powi(d as i32);
                [self.min, self.step]
                    .iter()
                    .all(|x| ((x * scale) - (x * scale).round()).abs() < 1e-6)
            })
            .unwrap_or(12)
    }

    pub fn is_on_grid(&self, value: f64) -> bool {
        let x = (value - self.min) / self.step;
        self.contains(value) && (x - x.round()).abs() <= GRID_TOLERANCE * (1.0 + x.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSchema {
    pub name: String,
    pub unit: Unit,
    pub coarse: ParamRange,
    pub fine: ParamRange,
}

impl ParamSchema {
    pub fn range(&self, regime: Regime) -> &ParamRange {
        match regime {
            Regime::Coarse => &self.coarse,
            Regime::Fine => &self.fine,
        }
    }

    /// Structural checks: positive steps and fine nested inside coarse.
    pub fn check(&self) -> Result<(), String> {
        for (label, r) in [("coarse", &self.coarse), ("fine", &self.fine)] {
            if !(r.step > 0.0) || !r.min.is_finite() || !r.max.is_finite() {
                return Err(format!(
                    "{}: {label} range has non-positive step",
                    self.name
                ));
            }
            if r.min > r.max {
                return Err(format!("{}: {label} min exceeds max", self.name));
            }
        }
        if self.fine.min < self.coarse.min - GRID_TOLERANCE
            || self.fine.max > self.coarse.max + GRID_TOLERANCE
        {
            return Err(format!("{}: fine range not inside coarse range", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FxModuleSchema {
    pub name: String,
    pub params: Vec<ParamSchema>,
}

impl FxModuleSchema {
    pub fn param(&self, name: &str) -> Option<&ParamSchema> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Module names in canonical table order.
pub const MODULE_NAMES: [&str; 9] = [
    "three_band_equalizer",
    "compressor",
    "stereo_widener",
    "gain",
    "panner",
    "distortion",
    "reverb",
    "delay",
    "limiter",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FxRegistry {
    pub modules: Vec<FxModuleSchema>,
}

fn p(name: &str, unit: Unit, coarse: (f64, f64, f64), fine: (f64, f64, f64)) -> ParamSchema {
    ParamSchema {
        name: name.to_string(),
        unit,
        coarse: ParamRange::new(coarse.0, coarse.1, coarse.2),
        fine: ParamRange::new(fine.0, fine.1, fine.2),
    }
}

fn module(name: &str, params: Vec<ParamSchema>) -> FxModuleSchema {
    FxModuleSchema {
        name: name.to_string(),
        params,
    }
}

impl Default for FxRegistry {
    fn default() -> Self {
        registry_default()
    }
}

/// The nine shipped effects and their 26 parameters.
pub fn registry_default() -> FxRegistry {
    use Unit::*;
    FxRegistry {
        modules: vec![
            module(
                "three_band_equalizer",
                vec![
                    p("low_gain_db", Decibel, (-20.0, 20.0, 2.0), (-6.0, 6.0, 1.0)),
                    p(
                        "low_cutoff_freq",
                        Hertz,
                        (0.0, 400.0, 20.0),
                        (60.0, 120.0, 10.0),
                    ),
                    p("low_q_factor", Unitless, (0.0, 6.0, 0.5), (0.5, 3.0, 0.25)),
                    p("mid_gain_db", Decibel, (-20.0, 20.0, 2.0), (-6.0, 6.0, 1.0)),
                    p(
                        "mid_cutoff_freq",
                        Hertz,
                        (250.0, 6000.0, 250.0),
                        (250.0, 1000.0, 100.0),
                    ),
                    p("mid_q_factor", Unitless, (0.1, 6.0, 0.5), (0.5, 3.0, 0.25)),
                    p(
                        "high_gain_db",
                        Decibel,
                        (-20.0, 20.0, 2.0),
                        (-6.0, 6.0, 1.0),
                    ),
                    p(
                        "high_cutoff_freq",
                        Hertz,
                        (4000.0, 20000.0, 1000.0),
                        (4000.0, 8000.0, 500.0),
                    ),
                    p("high_q_factor", Unitless, (0.0, 6.0, 0.5), (0.5, 3.0, 0.5)),
                ],
            ),
            module(
                "compressor",
                vec![
                    p(
                        "threshold_db",
                        Decibel,
                        (-40.0, -5.0, 5.0),
                        (-20.0, -10.0, 1.0),
                    ),
                    p("ratio", Ratio, (0.0, 20.0, 1.0), (2.0, 8.0, 0.5)),
                    p(
                        "attack_ms",
                        Milliseconds,
                        (0.0, 500.0, 5.0),
                        (1.0, 30.0, 1.0),
                    ),
                    p(
                        "release_ms",
                        Milliseconds,
                        (0.0, 1000.0, 50.0),
                        (0.0, 500.0, 25.0),
                    ),
                ],
            ),
            module(
                "stereo_widener",
                vec![p("width", Unitless, (0.0, 1.5, 0.1), (1.1, 1.5, 0.1))],
            ),
            module(
                "gain",
                vec![p("gain_db", Decibel, (-20.0, 20.0, 2.0), (-6.0, 6.0, 1.0))],
            ),
            module(
                "panner",
                vec![p("pan", Unitless, (-1.0, 1.0, 0.1), (-0.6, 0.6, 0.1))],
            ),
            module(
                "distortion",
                vec![p("drive_db", Decibel, (0.0, 20.0, 2.0), (1.0, 5.0, 0.5))],
            ),
            module(
                "reverb",
                vec![
                    p("room_size", Unitless, (0.0, 0.9, 0.1), (0.3, 0.6, 0.05)),
                    p("damping", Unitless, (0.0, 0.9, 0.1), (0.3, 0.6, 0.05)),
                    p("width", Unitless, (0.0, 0.9, 0.1), (0.3, 0.6, 0.05)),
                    p("mix_ratio", Ratio, (0.0, 1.0, 0.1), (0.1, 1.0, 0.1)),
                ],
            ),
            module(
                "delay",
                vec![
                    p(
                        "delay_seconds",
                        Seconds,
                        (0.0, 0.7, 0.05),
                        (0.01, 0.2, 0.02),
                    ),
                    p("feedback", Unitless, (0.0, 0.6, 0.05), (0.01, 0.2, 0.02)),
                    p("mix_ratio", Ratio, (0.0, 1.0, 0.1), (0.1, 1.0, 0.1)),
                ],
            ),
            module(
                "limiter",
                vec![
                    p(
                        "threshold_db",
                        Decibel,
                        (-20.0, -1.0, 1.0),
                        (-5.0, -1.0, 0.1),
                    ),
                    p(
                        "release_ms",
                        Milliseconds,
                        (0.0, 1000.0, 50.0),
                        (0.0, 300.0, 25.0),
                    ),
                ],
            ),
        ],
    }
}

impl FxRegistry {
    pub fn module(&self, name: &str) -> Option<&FxModuleSchema> {
        self.modules.iter().find(|m| m.name == name)
    }

    pub fn module_index(&self, name: &str) -> Option<usize> {
        self.modules.iter().position(|m| m.name == name)
    }

    pub fn param(&self, module: &str, param: &str) -> Result<&ParamSchema, RegistryError> {
        let m = self
            .module(module)
            .ok_or_else(|| RegistryError::UnknownModule(module.to_string()))?;
        m.param(param).ok_or_else(|| RegistryError::UnknownParam {
            module: module.to_string(),
            param: param.to_string(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.modules.iter().map(|m| m.params.len()).sum()
    }

    /// Maps a coarse-range value onto `[0, 1]`.
    pub fn normalize_param(
        &self,
        module: &str,
        param: &str,
        value: f64,
    ) -> Result<f64, RegistryError> {
        let schema = self.param(module, param)?;
        let r = &schema.coarse;
        if !value.is_finite() || !r.contains(value) {
            return Err(self.out_of_range(module, param, value, r));
        }
        Ok(((value - r.min) / r.span()).clamp(0.0, 1.0))
    }

    pub fn denormalize_param(
        &self,
        module: &str,
        param: &str,
        unit: f64,
    ) -> Result<f64, RegistryError> {
        let r = &self.param(module, param)?.coarse;
        if !(0.0..=1.0).contains(&unit) {
            return Err(RegistryError::OutOfRange {
                module: module.to_string(),
                param: param.to_string(),
                value: unit,
                min: 0.0,
                max: 1.0,
            });
        }
        Ok(r.min + unit * r.span())
    }

    /// Snaps `value` to the nearest point of the regime grid. Exact ties go
    /// to the lower grid point.
    pub fn quantize_param(
        &self,
        module: &str,
        param: &str,
        value: f64,
        regime: Regime,
    ) -> Result<f64, RegistryError> {
        let r = self.param(module, param)?.range(regime);
        if !value.is_finite() || !r.contains(value) {
            return Err(self.out_of_range(module, param, value, r));
        }
        let x = (value - r.min) / r.step;
        let k = (x - 0.5 - GRID_TOLERANCE).ceil().max(0.0) as u64;
        Ok(r.grid_point(k))
    }

    fn out_of_range(&self, module: &str, param: &str, value: f64, r: &ParamRange) -> RegistryError {
        RegistryError::OutOfRange {
            module: module.to_string(),
            param: param.to_string(),
            value,
            min: r.min,
            max: r.max,
        }
    }

    /// Checks the structural invariants. Custom registries may only retune
    /// ranges: the module and parameter names must match the shipped set,
    /// since the renderer only knows those effects.
    pub fn check(&self) -> Result<(), RegistryError> {
        let reference = registry_default();
        if self.modules.len() != reference.modules.len() {
            return Err(RegistryError::Invalid(format!(
                "expected {} modules, found {}",
                reference.modules.len(),
                self.modules.len()
            )));
        }
        for (m, expected) in self.modules.iter().zip(&reference.modules) {
            if m.name != expected.name {
                return Err(RegistryError::Invalid(format!(
                    "module `{}` found where `{}` was expected",
                    m.name, expected.name
                )));
            }
            let names: Vec<_> = m.params.iter().map(|p| p.name.as_str()).collect();
            let expected_names: Vec<_> = expected.params.iter().map(|p| p.name.as_str()).collect();
            if names != expected_names {
                return Err(RegistryError::Invalid(format!(
                    "module `{}` parameters {:?} differ from {:?}",
                    m.name, names, expected_names
                )));
            }
            for p in &m.params {
                p.check().map_err(RegistryError::Invalid)?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let reg: FxRegistry =
            serde_json::from_str(text).map_err(|e| RegistryError::Json(e.to_string()))?;
        reg.check()?;
        Ok(reg)
    }

    /// SHA-256 over the compact JSON export, hex encoded.
    pub fn fingerprint(&self) -> String {
        let compact = serde_json::to_string(self).expect("registry serializes");
        let digest = Sha256::digest(compact.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
