//! Simulation config files: `[section]` headers with `key = value` lines.
//!
//! Values are written in bench units (μm, nm, mN, MPa, GPa) and converted to
//! SI by [`SimulationSpec::resolve`]. Unknown keys are rejected.
//!
//! ```text
//! [material]
//! preset = "aucr200"
//!
//! [profile]
//! target_strain = 5e-3
//! ```

use serde::{Deserialize, Serialize};

use crate::constitutive::{MaterialModel, MaterialPreset};
use crate::error::{Error, Result};
use crate::loadtrain::{LoadTrainConfig, SpecimenGeometry, DEFAULT_FORCE_TOLERANCE};
use crate::profile::{self, TestProfile, DEFAULT_SAMPLE_RATE_HZ};
use crate::sensors::SensorSpec;

use super::trace_io::format_value;

pub const DEFAULT_STRAIN_RATE: f64 = 3.3e-4;
pub const DEFAULT_TARGET_STRAIN: f64 = 3.3e-3;
pub const DEFAULT_HOLD_S: f64 = 60.0;
pub const DEFAULT_ZERO_HOLD_S: f64 = 20.0;
pub const DEFAULT_CYCLES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default)]
    pub material: MaterialSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub loadtrain: LoadTrainSection,
    #[serde(default)]
    pub profile: ProfileSection,
    #[serde(default)]
    pub sensors: SensorSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(rename = "modulus_GPa", skip_serializing_if = "Option::is_none")]
    pub modulus_gpa: Option<f64>,
    #[serde(rename = "yield_MPa", skip_serializing_if = "Option::is_none")]
    pub yield_mpa: Option<f64>,
    #[serde(rename = "hardening_GPa", skip_serializing_if = "Option::is_none")]
    pub hardening_gpa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plasticity: Option<bool>,
    /// Characteristic wrinkle strain; presence switches wrinkling on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wrinkle_strain: Option<f64>,
    #[serde(rename = "relaxation_modulus_GPa", skip_serializing_if = "Option::is_none")]
    pub relaxation_modulus_gpa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relaxation_tau_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gauge_length_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thickness_nm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadTrainSection {
    #[serde(rename = "spring1_N_per_m", skip_serializing_if = "Option::is_none")]
    pub spring1_n_per_m: Option<f64>,
    #[serde(rename = "spring3_N_per_m", skip_serializing_if = "Option::is_none")]
    pub spring3_n_per_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub travel_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actuator_resolution_um: Option<f64>,
    #[serde(rename = "tolerance_N", skip_serializing_if = "Option::is_none")]
    pub tolerance_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strain_rate_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_strain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hold_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_hold_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycles: Option<u32>,
    #[serde(rename = "sample_rate_Hz", skip_serializing_if = "Option::is_none")]
    pub sample_rate_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub displacement_resolution_um: Option<f64>,
    #[serde(rename = "load_resolution_mN", skip_serializing_if = "Option::is_none")]
    pub load_resolution_mn: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sd_um: Option<f64>,
    #[serde(rename = "noise_sd_mN", skip_serializing_if = "Option::is_none")]
    pub noise_sd_mn: Option<f64>,
    #[serde(rename = "drift_mN_per_s", skip_serializing_if = "Option::is_none")]
    pub drift_mn_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantize: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<bool>,
    #[serde(rename = "temperature_C", skip_serializing_if = "Option::is_none")]
    pub temperature_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A config converted to SI and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSpec {
    pub preset: Option<MaterialPreset>,
    pub model: MaterialModel,
    pub geometry: SpecimenGeometry,
    pub machine: LoadTrainConfig,
    pub profile: TestProfile,
    pub sensors: SensorSpec,
    pub seed: Option<u64>,
    /// `section.key = value` for every key filled from a default.
    pub defaults_applied: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug)]
struct FieldError {
    section: &'static str,
    key: &'static str,
    message: String,
}

type FieldResult<T> = std::result::Result<T, FieldError>;

fn field_error(section: &'static str, key: &'static str, message: impl Into<String>) -> FieldError {
    FieldError {
        section,
        key,
        message: message.into(),
    }
}

struct Defaults(Vec<String>);

type Check = fn(&'static str, &'static str, f64) -> FieldResult<f64>;

impl Defaults {
    fn take<T: std::fmt::Display + Copy>(&mut self, section: &str, key: &str, value: Option<T>, default: T) -> T {
        value.unwrap_or_else(|| {
            self.0.push(format!("{section}.{key} = {default}"));
            default
        })
    }

    /// Checks a value given in units of `10^exp` SI units and converts it to
    /// SI; an omitted key yields `default_si` unchanged.
    fn quantity(
        &mut self,
        section: &'static str,
        key: &'static str,
        value: Option<f64>,
        default_si: f64,
        exp: i32,
        check: Check,
    ) -> FieldResult<f64> {
        match value {
            Some(v) => check(section, key, v).map(|v| to_si(v, exp)),
            None => {
                self.0
                    .push(format!("{section}.{key} = {}", format_value(from_si(default_si, exp))));
                Ok(default_si)
            }
        }
    }
}

/// Dividing by an exact power of ten keeps `100 um` equal to `1e-4`.
fn to_si(v: f64, exp: i32) -> f64 {
    if exp < 0 {
        v / 10f64.powi(-exp)
    } else {
        v * 10f64.powi(exp)
    }
}

fn from_si(v: f64, exp: i32) -> f64 {
    let x = if exp < 0 {
        v * 10f64.powi(-exp)
    } else {
        v / 10f64.powi(exp)
    };
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn finite(section: &'static str, key: &'static str, v: f64) -> FieldResult<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(field_error(section, key, format!("must be finite, got {v}")))
    }
}

fn positive(section: &'static str, key: &'static str, v: f64) -> FieldResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(field_error(section, key, format!("must be > 0, got {v}")))
    }
}

fn non_negative(section: &'static str, key: &'static str, v: f64) -> FieldResult<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(field_error(section, key, format!("must be >= 0, got {v}")))
    }
}

impl SimulationSpec {
    /// Converts to SI and validates every module config.
    pub fn resolve(&self) -> Result<ResolvedSpec> {
        self.resolve_fields()
            .map_err(|e| Error::Parse(format!("{}.{}: {}", e.section, e.key, e.message)))
    }

    fn resolve_fields(&self) -> FieldResult<ResolvedSpec> {
        let mut d = Defaults(Vec::new());
        let mut notes = Vec::new();

        // Material.
        let m = &self.material;
        let preset = match &m.preset {
            Some(name) => Some(MaterialPreset::from_name(name).ok_or_else(|| {
                let known: Vec<&str> = MaterialPreset::ALL.iter().map(|p| p.name()).collect();
                field_error(
                    "material",
                    "preset",
                    format!("unknown preset \"{name}\" (expected one of {})", known.join(", ")),
                )
            })?),
            None => None,
        };
        let modulus = match (m.modulus_gpa, preset) {
            (Some(e), _) => to_si(positive("material", "modulus_GPa", e)?, 9),
            (None, Some(p)) => p.modulus(),
            (None, None) => {
                return Err(field_error(
                    "material",
                    "preset",
                    "missing required key: set material.preset or material.modulus_GPa",
                ))
            }
        };
        let plasticity = d.take("material", "plasticity", m.plasticity, true);
        let mut model = if plasticity {
            let y = d.quantity(
                "material",
                "yield_MPa",
                m.yield_mpa,
                MaterialPreset::DEFAULT_YIELD_STRESS,
                6,
                positive,
            )?;
            let h = d.quantity("material", "hardening_GPa", m.hardening_gpa, 0.0, 9, non_negative)?;
            if m.yield_mpa.is_none() && preset.is_none_or(|p| p.yield_is_assumed()) {
                notes.push(format!(
                    "yield stress {} MPa is an assumed default, not a measured value",
                    from_si(y, 6)
                ));
            }
            MaterialModel::linear_hardening(modulus, y, h)
        } else {
            MaterialModel::linear_elastic(modulus)
        };
        if let Some(ec) = m.wrinkle_strain {
            model = model.with_wrinkle(positive("material", "wrinkle_strain", ec)?);
        }
        match (m.relaxation_modulus_gpa, m.relaxation_tau_s) {
            (Some(e1), Some(tau)) => {
                let e1 = to_si(positive("material", "relaxation_modulus_GPa", e1)?, 9);
                let tau = positive("material", "relaxation_tau_s", tau)?;
                model = model.with_relaxation(e1, tau);
            }
            (Some(_), None) => {
                return Err(field_error(
                    "material",
                    "relaxation_modulus_GPa",
                    "requires material.relaxation_tau_s",
                ))
            }
            (None, Some(_)) => {
                return Err(field_error(
                    "material",
                    "relaxation_tau_s",
                    "requires material.relaxation_modulus_GPa",
                ))
            }
            (None, None) => {}
        }
        model
            .validate()
            .map_err(|e| field_error("material", "preset", e.to_string()))?;

        // Geometry.
        let g = &self.geometry;
        let base = SpecimenGeometry::default();
        let geometry = SpecimenGeometry {
            gauge_length: d.quantity(
                "geometry",
                "gauge_length_um",
                g.gauge_length_um,
                base.gauge_length,
                -6,
                positive,
            )?,
            width: d.quantity("geometry", "width_um", g.width_um, base.width, -6, positive)?,
            thickness: d.quantity(
                "geometry",
                "thickness_nm",
                g.thickness_nm,
                preset.map_or(base.thickness, |p| p.thickness()),
                -9,
                positive,
            )?,
        };
        notes.extend(geometry.warnings());

        // Load train.
        let l = &self.loadtrain;
        let base = LoadTrainConfig::default();
        let machine = LoadTrainConfig {
            spring1_stiffness: d.quantity(
                "loadtrain",
                "spring1_N_per_m",
                l.spring1_n_per_m,
                base.spring1_stiffness,
                0,
                positive,
            )?,
            spring3_stiffness: d.quantity(
                "loadtrain",
                "spring3_N_per_m",
                l.spring3_n_per_m,
                base.spring3_stiffness,
                0,
                positive,
            )?,
            actuator_travel_limit: d.quantity(
                "loadtrain",
                "travel_um",
                l.travel_um,
                base.actuator_travel_limit,
                -6,
                positive,
            )?,
            actuator_resolution: d.quantity(
                "loadtrain",
                "actuator_resolution_um",
                l.actuator_resolution_um,
                base.actuator_resolution,
                -6,
                non_negative,
            )?,
            force_tolerance: d.quantity(
                "loadtrain",
                "tolerance_N",
                l.tolerance_n,
                DEFAULT_FORCE_TOLERANCE,
                0,
                positive,
            )?,
        };
        machine
            .validate()
            .map_err(|e| field_error("loadtrain", "spring1_N_per_m", e.to_string()))?;

        // Profile.
        let p = &self.profile;
        let rate = d.quantity(
            "profile",
            "strain_rate_per_s",
            p.strain_rate_per_s,
            DEFAULT_STRAIN_RATE,
            0,
            positive,
        )?;
        let target = d.quantity(
            "profile",
            "target_strain",
            p.target_strain,
            DEFAULT_TARGET_STRAIN,
            0,
            positive,
        )?;
        let hold = d.quantity("profile", "hold_s", p.hold_s, DEFAULT_HOLD_S, 0, positive)?;
        let zero_hold = d.quantity(
            "profile",
            "zero_hold_s",
            p.zero_hold_s,
            DEFAULT_ZERO_HOLD_S,
            0,
            positive,
        )?;
        let cycles = d.take("profile", "cycles", p.cycles, DEFAULT_CYCLES);
        if cycles == 0 {
            return Err(field_error("profile", "cycles", "must be >= 1"));
        }
        let fs = d.quantity(
            "profile",
            "sample_rate_Hz",
            p.sample_rate_hz,
            DEFAULT_SAMPLE_RATE_HZ,
            0,
            positive,
        )?;
        let profile = profile::standard_cycle(rate, target, hold, zero_hold, cycles)
            .map_err(|e| field_error("profile", "target_strain", e.to_string()))?
            .with_sample_rate(fs);

        // Sensors.
        let s = &self.sensors;
        let base = SensorSpec::default();
        let sensors = SensorSpec {
            displacement_resolution: d.quantity(
                "sensors",
                "displacement_resolution_um",
                s.displacement_resolution_um,
                base.displacement_resolution,
                -6,
                non_negative,
            )?,
            load_resolution: d.quantity(
                "sensors",
                "load_resolution_mN",
                s.load_resolution_mn,
                base.load_resolution,
                -3,
                non_negative,
            )?,
            noise_sd_displacement: d.quantity(
                "sensors",
                "noise_sd_um",
                s.noise_sd_um,
                base.noise_sd_displacement,
                -6,
                non_negative,
            )?,
            noise_sd_load: d.quantity(
                "sensors",
                "noise_sd_mN",
                s.noise_sd_mn,
                base.noise_sd_load,
                -3,
                non_negative,
            )?,
            drift_rate_load: d.quantity(
                "sensors",
                "drift_mN_per_s",
                s.drift_mn_per_s,
                base.drift_rate_load,
                -3,
                finite,
            )?,
            quantization: d.take("sensors", "quantize", s.quantize, base.quantization),
            noise: d.take("sensors", "noise", s.noise, base.noise),
            drift: d.take("sensors", "drift", s.drift, base.drift),
            ambient_temperature: d.quantity(
                "sensors",
                "temperature_C",
                s.temperature_c,
                base.ambient_temperature,
                0,
                finite,
            )?,
        };

        Ok(ResolvedSpec {
            preset,
            model,
            geometry,
            machine,
            profile,
            sensors,
            seed: self.run.seed,
            defaults_applied: d.0,
            notes,
        })
    }
}

/// Strict parse plus full resolution, so every error surfaces with its line.
pub fn parse_config(text: &str) -> Result<SimulationSpec> {
    let spec: SimulationSpec = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        let key = line.and_then(|l| key_path_at(text, l));
        let message = e.message().trim_end().to_string();
        match (line, key) {
            (Some(l), Some(k)) => Error::Parse(format!("config line {l}: {k}: {message}")),
            (Some(l), None) => Error::Parse(format!("config line {l}: {message}")),
            _ => Error::Parse(format!("config: {message}")),
        }
    })?;
    if let Err(e) = spec.resolve_fields() {
        return Err(match locate(text, e.section, e.key) {
            Some(line) => Error::Parse(format!("config line {line}: {}.{}: {}", e.section, e.key, e.message)),
            None => Error::Parse(format!("config: {}.{}: {}", e.section, e.key, e.message)),
        });
    }
    Ok(spec)
}

pub fn serialize_config(spec: &SimulationSpec) -> Result<String> {
    toml::to_string(spec).map_err(|e| Error::Parse(format!("config serialization failed: {e}")))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn section_header(line: &str) -> Option<&str> {
    let t = line.trim();
    t.strip_prefix('[')?.strip_suffix(']').map(str::trim)
}

fn key_of(line: &str) -> Option<&str> {
    let t = line.trim();
    if t.starts_with('#') || t.starts_with('[') {
        return None;
    }
    let (k, _) = t.split_once('=')?;
    Some(k.trim())
}

/// `section.key` for a 1-based line, when that line is an assignment.
fn key_path_at(text: &str, line: usize) -> Option<String> {
    let mut section = None;
    for (i, l) in text.lines().enumerate() {
        if let Some(s) = section_header(l) {
            section = Some(s);
        }
        if i + 1 == line {
            if let Some(s) = section_header(l) {
                return Some(s.to_string());
            }
            let key = key_of(l)?;
            return Some(match section {
                Some(s) => format!("{s}.{key}"),
                None => key.to_string(),
            });
        }
    }
    None
}

/// 1-based line of `key` inside `[section]`.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = None;
    for (i, l) in text.lines().enumerate() {
        if let Some(s) = section_header(l) {
            current = Some(s);
        } else if current == Some(section) && key_of(l) == Some(key) {
            return Some(i + 1);
        }
    }
    None
}
