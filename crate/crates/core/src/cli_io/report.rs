//! JSON analysis reports in bench units, unit suffix on every key.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{AnalysisReport, HallPetchFit};
use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "mtb";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    /// Honours `SOURCE_DATE_EPOCH` when set.
    pub generated_at_unix_s: u64,
    /// SHA-256 of the input file (trace, config or points).
    pub input_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub defaults_applied: Vec<String>,
    pub notes: Vec<String>,
}

impl Provenance {
    pub fn new(input: &[u8]) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            generated_at_unix_s: timestamp(),
            input_sha256: sha256_hex(input),
            config_sha256: None,
            profile_sha256: None,
            seed: None,
            defaults_applied: Vec::new(),
            notes: Vec::new(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn timestamp() -> u64 {
    if let Some(epoch) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return epoch;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusSection {
    #[serde(rename = "modulus_GPa")]
    pub modulus_gpa: f64,
    #[serde(rename = "intercept_MPa")]
    pub intercept_mpa: f64,
    pub r_squared: f64,
    pub fit_strain_lo: f64,
    pub fit_strain_hi: f64,
    pub fit_points: usize,
    pub fit_segment: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationSection {
    pub segment: usize,
    pub cycle: u32,
    #[serde(rename = "stress_start_MPa")]
    pub stress_start_mpa: f64,
    #[serde(rename = "stress_end_MPa")]
    pub stress_end_mpa: f64,
    #[serde(rename = "drop_MPa")]
    pub drop_mpa: f64,
    pub relative_drop: Option<f64>,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSection {
    pub gauge_length_um: f64,
    pub width_um: f64,
    pub thickness_nm: f64,
    #[serde(rename = "machine_compliance_um_per_mN")]
    pub machine_compliance_um_per_mn: f64,
    pub curve_points: usize,
    pub curve_sha256: String,
    pub modulus: ModulusSection,
    pub offset_strain: f64,
    /// `null` when the curve never crosses the offset line.
    #[serde(rename = "offset_yield_MPa")]
    pub offset_yield_mpa: Option<f64>,
    pub offset_yield_strain: Option<f64>,
    pub relaxation: Vec<RelaxationSection>,
    #[serde(rename = "bulk_modulus_GPa", skip_serializing_if = "Option::is_none")]
    pub bulk_modulus_gpa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub film_to_bulk_ratio: Option<f64>,
}

impl From<&AnalysisReport> for AnalysisSection {
    fn from(r: &AnalysisReport) -> Self {
        Self {
            gauge_length_um: r.geometry.gauge_length * 1e6,
            width_um: r.geometry.width * 1e6,
            thickness_nm: r.geometry.thickness * 1e9,
            machine_compliance_um_per_mn: r.machine_compliance * 1e3,
            curve_points: r.curve_points,
            curve_sha256: r.curve_digest.clone(),
            modulus: ModulusSection {
                modulus_gpa: r.modulus.modulus * 1e-9,
                intercept_mpa: r.modulus.intercept * 1e-6,
                r_squared: r.modulus.r_squared,
                fit_strain_lo: r.modulus.strain_lo,
                fit_strain_hi: r.modulus.strain_hi,
                fit_points: r.modulus.point_count,
                fit_segment: r.modulus.segment,
            },
            offset_strain: r.offset,
            offset_yield_mpa: r.offset_yield.map(|y| y.stress * 1e-6),
            offset_yield_strain: r.offset_yield.map(|y| y.strain),
            relaxation: r
                .relaxation
                .iter()
                .map(|m| RelaxationSection {
                    segment: m.segment,
                    cycle: m.cycle,
                    stress_start_mpa: m.stress_start * 1e-6,
                    stress_end_mpa: m.stress_end * 1e-6,
                    drop_mpa: m.drop * 1e-6,
                    relative_drop: m.relative_drop,
                    duration_s: m.duration,
                })
                .collect(),
            bulk_modulus_gpa: r.bulk.map(|b| b.bulk_modulus * 1e-9),
            film_to_bulk_ratio: r.bulk.map(|b| b.ratio),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallPetchSection {
    #[serde(rename = "sigma_i_MPa")]
    pub sigma_i_mpa: f64,
    #[serde(rename = "k_MPa_sqrt_m")]
    pub k_mpa_sqrt_m: f64,
    #[serde(rename = "rms_residual_MPa")]
    pub rms_residual_mpa: f64,
    pub points: usize,
}

impl From<&HallPetchFit> for HallPetchSection {
    fn from(f: &HallPetchFit) -> Self {
        Self {
            sigma_i_mpa: f.friction_stress * 1e-6,
            k_mpa_sqrt_m: f.coefficient * 1e-6,
            rms_residual_mpa: f.rms_residual * 1e-6,
            points: f.point_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hall_petch: Option<HallPetchSection>,
    pub warnings: Vec<String>,
}

impl ReportDocument {
    pub fn analysis(report: &AnalysisReport, provenance: Provenance) -> Self {
        Self {
            provenance,
            analysis: Some(report.into()),
            hall_petch: None,
            warnings: report.warnings.clone(),
        }
    }

    pub fn hall_petch(fit: &HallPetchFit, provenance: Provenance) -> Self {
        Self {
            provenance,
            analysis: None,
            hall_petch: Some(fit.into()),
            warnings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("report: {e}")))
    }
}

pub fn write_report(doc: &ReportDocument, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, doc.to_json()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{fit_hall_petch, ModulusFit};
    use crate::constitutive::{hall_petch_yield, HallPetchParams};
    use crate::loadtrain::SpecimenGeometry;

    fn report(yield_point: bool) -> AnalysisReport {
        AnalysisReport {
            geometry: SpecimenGeometry::default(),
            machine_compliance: 1.01e-4,
            curve_points: 10,
            curve_digest: "00".into(),
            modulus: ModulusFit {
                modulus: 161e9,
                intercept: 0.1,
                strain_lo: 0.0,
                strain_hi: 2e-3,
                r_squared: 0.999,
                point_count: 10,
                segment: 0,
                warnings: vec![],
            },
            offset: 0.002,
            offset_yield: yield_point.then_some(crate::analysis::OffsetYield {
                stress: 350e6,
                strain: 4.17e-3,
                offset: 0.002,
                segment: 0,
            }),
            relaxation: vec![],
            bulk: None,
            warnings: if yield_point {
                vec![]
            } else {
                vec!["no yield observed".into()]
            },
        }
    }

    #[test]
    fn keys_carry_units() {
        let doc = ReportDocument::analysis(&report(true), Provenance::new(b"x"));
        let v: serde_json::Value = serde_json::from_str(&doc.to_json()).unwrap();
        let a = &v["analysis"];
        assert!((a["modulus"]["modulus_GPa"].as_f64().unwrap() - 161.0).abs() < 1e-9);
        assert!((a["offset_yield_MPa"].as_f64().unwrap() - 350.0).abs() < 1e-9);
        assert!((a["machine_compliance_um_per_mN"].as_f64().unwrap() - 0.101).abs() < 1e-12);
    }

    #[test]
    fn no_yield_is_null_with_warning() {
        let doc = ReportDocument::analysis(&report(false), Provenance::new(b"x"));
        let v: serde_json::Value = serde_json::from_str(&doc.to_json()).unwrap();
        assert!(v["analysis"]["offset_yield_MPa"].is_null());
        assert!(!v["warnings"].as_array().unwrap().is_empty());
    }

    #[test]
    fn hall_petch_section() {
        let params = HallPetchParams {
            friction_stress: 100e6,
            coefficient: 0.15e6,
        };
        let pts: Vec<_> = [30e-9, 60e-9, 120e-9, 240e-9, 480e-9]
            .iter()
            .map(|&d| (d, hall_petch_yield(&params, d).unwrap()))
            .collect();
        let doc = ReportDocument::hall_petch(&fit_hall_petch(&pts).unwrap(), Provenance::new(b"p"));
        let v: serde_json::Value = serde_json::from_str(&doc.to_json()).unwrap();
        assert!((v["hall_petch"]["sigma_i_MPa"].as_f64().unwrap() - 100.0).abs() < 1e-7);
        assert!((v["hall_petch"]["k_MPa_sqrt_m"].as_f64().unwrap() - 0.15).abs() < 1e-10);
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let mut r = report(true);
        r.modulus.modulus = 160.987_654_321_123_4e9;
        r.modulus.r_squared = 0.1 + 0.2;
        let doc = ReportDocument::analysis(&r, Provenance::new(b"abc"));
        assert_eq!(ReportDocument::from_json(&doc.to_json()).unwrap(), doc);
    }
}
