//! Trace CSV files.
//!
//! ```text
//! # format=mtb-trace-1
//! # gauge_length_um=600
//! # segment=ramp_to_strain,0,0,20
//! time_s,commanded_u_um,measured_u_um,measured_F_mN,temperature_C
//! 0,0,0,0,23
//! ```
//!
//! Metadata lines are `# key=value`; `segment` and `note` may repeat. Data
//! values carry 12 significant digits. Segment ranges are `start,end` sample
//! indices, end exclusive.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::loadtrain::{LoadTrainConfig, SpecimenGeometry};
use crate::profile::{SegmentKind, DEFAULT_SAMPLE_RATE_HZ};
use crate::trace::{SegmentSpan, Trace, TraceMetadata, TraceSample};

pub const HEADER: &str = "time_s,commanded_u_um,measured_u_um,measured_F_mN,temperature_C";
pub const FORMAT_TAG: &str = "mtb-trace-1";
const REQUIRED_COLUMNS: [&str; 4] = ["time_s", "commanded_u_um", "measured_u_um", "measured_F_mN"];

/// Shortest decimal of `v` rounded to 12 significant digits; exponent form
/// below 1e-4 and from 1e9 up.
pub fn format_value(v: f64) -> String {
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    if rounded == 0.0 {
        "0".to_string()
    } else if rounded.abs() < 1e-4 || rounded.abs() >= 1e9 {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

pub fn write_trace_to(trace: &Trace, mut w: impl Write) -> std::io::Result<()> {
    let m = &trace.metadata;
    writeln!(w, "# format={FORMAT_TAG}")?;
    let entries = [
        ("gauge_length_um", m.geometry.gauge_length * 1e6),
        ("width_um", m.geometry.width * 1e6),
        ("thickness_nm", m.geometry.thickness * 1e9),
        ("spring1_N_per_m", m.machine.spring1_stiffness),
        ("spring3_N_per_m", m.machine.spring3_stiffness),
        ("travel_um", m.machine.actuator_travel_limit * 1e6),
        ("actuator_resolution_um", m.machine.actuator_resolution * 1e6),
        ("tolerance_N", m.machine.force_tolerance),
        ("sample_rate_Hz", m.sample_rate_hz),
    ];
    for (k, v) in entries {
        writeln!(w, "# {k}={}", format_value(v))?;
    }
    writeln!(w, "# seed={}", m.seed)?;
    if !m.profile_digest.is_empty() {
        writeln!(w, "# profile_digest={}", m.profile_digest)?;
    }
    for note in &m.notes {
        writeln!(w, "# note={}", note.replace('\n', " "))?;
    }
    for s in &trace.segments {
        writeln!(
            w,
            "# segment={},{},{},{}",
            s.kind, s.cycle, s.samples.start, s.samples.end
        )?;
    }
    writeln!(w, "{HEADER}")?;
    for s in &trace.samples {
        let temperature = s.temperature.map(format_value).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            format_value(s.time),
            format_value(s.commanded_u * 1e6),
            format_value(s.measured_u * 1e6),
            format_value(s.measured_force * 1e3),
            temperature
        )?;
    }
    Ok(())
}

pub fn trace_to_string(trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_trace_to(trace, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("trace output is ASCII")
}

pub fn write_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, trace_to_string(trace)).map_err(|e| Error::io(path, e))
}

/// A parsed trace plus the metadata keys that were absent and defaulted.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub trace: Trace,
    pub missing_metadata: Vec<&'static str>,
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace> {
    read_trace_file(path).map(|p| p.trace)
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<ParsedTrace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, &path.display().to_string())
}

/// Parses trace text; `source` names the input in error messages.
pub fn parse_trace(text: &str, source: &str) -> Result<ParsedTrace> {
    let fail = |line: usize, message: String| Error::TraceFormat {
        path: source.to_string(),
        line,
        message,
    };

    let mut geometry = SpecimenGeometry::default();
    let mut machine = LoadTrainConfig::default();
    let mut sample_rate_hz = DEFAULT_SAMPLE_RATE_HZ;
    let mut seed = 0u64;
    let mut profile_digest = String::new();
    let mut notes = Vec::new();
    let mut segment_lines: Vec<(usize, SegmentSpan)> = Vec::new();
    let mut seen: Vec<&'static str> = Vec::new();

    let mut columns: Option<Vec<String>> = None;
    let mut col_index = [0usize; 4];
    let mut temp_index = None;
    let mut samples: Vec<(usize, TraceSample)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let Some((key, value)) = meta.trim().split_once('=') else {
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            let number = || {
                value
                    .parse::<f64>()
                    .map_err(|_| fail(line_no, format!("metadata {key}: invalid number \"{value}\"")))
            };
            match key {
                "format" => {
                    if value != FORMAT_TAG {
                        return Err(fail(line_no, format!("unsupported trace format \"{value}\"")));
                    }
                }
                "gauge_length_um" => geometry.gauge_length = number()? / 1e6,
                "width_um" => geometry.width = number()? / 1e6,
                "thickness_nm" => geometry.thickness = number()? / 1e9,
                "spring1_N_per_m" => machine.spring1_stiffness = number()?,
                "spring3_N_per_m" => machine.spring3_stiffness = number()?,
                "travel_um" => machine.actuator_travel_limit = number()? / 1e6,
                "actuator_resolution_um" => machine.actuator_resolution = number()? / 1e6,
                "tolerance_N" => machine.force_tolerance = number()?,
                "sample_rate_Hz" => sample_rate_hz = number()?,
                "seed" => {
                    seed = value
                        .parse()
                        .map_err(|_| fail(line_no, format!("metadata seed: invalid integer \"{value}\"")))?
                }
                "profile_digest" => profile_digest = value.to_string(),
                "note" => notes.push(value.to_string()),
                "segment" => {
                    let span = parse_segment(value, segment_lines.len())
                        .map_err(|m| fail(line_no, format!("metadata segment: {m}")))?;
                    segment_lines.push((line_no, span));
                }
                _ => {}
            }
            if let Some(k) = KNOWN_KEYS.iter().find(|k| **k == key) {
                seen.push(k);
            }
            continue;
        }

        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some(cols) = &columns else {
            let cols: Vec<String> = fields.iter().map(|s| s.to_string()).collect();
            for (slot, name) in col_index.iter_mut().zip(REQUIRED_COLUMNS) {
                *slot = cols
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| fail(line_no, format!("header is missing required column {name}")))?;
            }
            temp_index = cols.iter().position(|c| c == "temperature_C");
            columns = Some(cols);
            continue;
        };
        if fields.len() != cols.len() {
            return Err(fail(
                line_no,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let mut values = [0.0f64; 4];
        for (v, (&idx, name)) in values.iter_mut().zip(col_index.iter().zip(REQUIRED_COLUMNS)) {
            *v = parse_number(fields[idx])
                .ok_or_else(|| fail(line_no, format!("{name}: invalid number \"{}\"", fields[idx])))?;
        }
        let temperature = match temp_index.map(|t| fields[t]) {
            None | Some("") => None,
            Some(s) => {
                Some(parse_number(s).ok_or_else(|| fail(line_no, format!("temperature_C: invalid number \"{s}\"")))?)
            }
        };
        if let Some((_, prev)) = samples.last() {
            if values[0].partial_cmp(&prev.time) != Some(std::cmp::Ordering::Greater) {
                return Err(fail(line_no, "time not strictly increasing".into()));
            }
        }
        samples.push((
            line_no,
            TraceSample {
                time: values[0],
                commanded_u: values[1] / 1e6,
                measured_u: values[2] / 1e6,
                measured_force: values[3] / 1e3,
                temperature,
                segment: 0,
            },
        ));
    }

    if columns.is_none() {
        return Err(fail(
            text.lines().count().max(1),
            format!("missing header row \"{HEADER}\""),
        ));
    }
    if samples.is_empty() {
        return Err(fail(text.lines().count().max(1), "trace has no data rows".into()));
    }

    let mut next = 0;
    for (line_no, span) in &segment_lines {
        if span.samples.start != next || span.samples.end > samples.len() {
            return Err(fail(
                *line_no,
                format!(
                    "segment {} covers samples {}..{} but {} was expected as start (trace has {} samples)",
                    span.index,
                    span.samples.start,
                    span.samples.end,
                    next,
                    samples.len()
                ),
            ));
        }
        for (_, s) in &mut samples[span.samples.clone()] {
            s.segment = span.index;
        }
        next = span.samples.end;
    }
    if !segment_lines.is_empty() && next != samples.len() {
        return Err(fail(
            segment_lines.last().map(|(l, _)| *l).unwrap_or(1),
            format!("segments cover {next} samples but the trace has {}", samples.len()),
        ));
    }

    let missing_metadata = KNOWN_KEYS
        .iter()
        .copied()
        .filter(|k| REPORTED_KEYS.contains(k) && !seen.contains(k))
        .collect();

    Ok(ParsedTrace {
        trace: Trace {
            samples: samples.into_iter().map(|(_, s)| s).collect(),
            segments: segment_lines.into_iter().map(|(_, s)| s).collect(),
            metadata: TraceMetadata {
                geometry,
                machine,
                sample_rate_hz,
                profile_digest,
                seed,
                notes,
            },
            truth: None,
        },
        missing_metadata,
    })
}

const KNOWN_KEYS: [&str; 9] = [
    "gauge_length_um",
    "width_um",
    "thickness_nm",
    "spring1_N_per_m",
    "spring3_N_per_m",
    "travel_um",
    "actuator_resolution_um",
    "tolerance_N",
    "sample_rate_Hz",
];

/// Keys that change the analysis when defaulted.
const REPORTED_KEYS: [&str; 5] = [
    "gauge_length_um",
    "width_um",
    "thickness_nm",
    "spring1_N_per_m",
    "spring3_N_per_m",
];

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_segment(value: &str, index: usize) -> std::result::Result<SegmentSpan, String> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    let [kind, cycle, start, end] = parts[..] else {
        return Err(format!("expected kind,cycle,start,end, got \"{value}\""));
    };
    let kind = SegmentKind::from_name(kind).ok_or_else(|| format!("unknown segment kind \"{kind}\""))?;
    let int = |s: &str| s.parse::<usize>().map_err(|_| format!("invalid index \"{s}\""));
    let cycle = cycle.parse::<u32>().map_err(|_| format!("invalid cycle \"{cycle}\""))?;
    let (start, end) = (int(start)?, int(end)?);
    if end < start {
        return Err(format!("end {end} precedes start {start}"));
    }
    Ok(SegmentSpan {
        index,
        kind,
        cycle,
        samples: start..end,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_trace() -> Trace {
        let samples = (0..6)
            .map(|i| TraceSample {
                time: i as f64 * 0.1,
                commanded_u: i as f64 * 0.198e-6,
                measured_u: i as f64 * 0.2e-6,
                measured_force: if i == 5 { 2.857e-3 } else { i as f64 * 0.5e-3 },
                temperature: Some(23.0),
                segment: if i < 4 { 0 } else { 1 },
            })
            .collect();
        Trace {
            samples,
            segments: vec![
                SegmentSpan {
                    index: 0,
                    kind: SegmentKind::RampToStrain,
                    cycle: 0,
                    samples: 0..4,
                },
                SegmentSpan {
                    index: 1,
                    kind: SegmentKind::HoldDisplacement,
                    cycle: 0,
                    samples: 4..6,
                },
            ],
            metadata: TraceMetadata {
                geometry: SpecimenGeometry::default(),
                machine: LoadTrainConfig::default(),
                sample_rate_hz: 10.0,
                profile_digest: "abc123".into(),
                seed: 42,
                notes: vec!["hello".into()],
            },
            truth: None,
        }
    }

    fn rel_eq(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * a.abs().max(b.abs()) || a == b
    }

    #[test]
    fn millinewton_units() {
        let text = trace_to_string(&sample_trace());
        let last = text.lines().last().unwrap();
        assert_eq!(last.split(',').nth(3), Some("2.857"));
        assert!(text.contains(&format!("\n{HEADER}\n")));
    }

    #[test]
    fn write_then_read() {
        let t = sample_trace();
        let parsed = parse_trace(&trace_to_string(&t), "mem").unwrap();
        assert!(parsed.missing_metadata.is_empty());
        let r = parsed.trace;
        assert_eq!(r.segments, t.segments);
        assert_eq!(r.metadata.seed, 42);
        assert_eq!(r.metadata.notes, t.metadata.notes);
        assert_eq!(r.metadata.profile_digest, "abc123");
        for (a, b) in r.samples.iter().zip(&t.samples) {
            assert!(rel_eq(a.time, b.time));
            assert!(rel_eq(a.measured_force, b.measured_force));
            assert!(rel_eq(a.measured_u, b.measured_u));
            assert!(rel_eq(a.commanded_u, b.commanded_u));
            assert_eq!(a.segment, b.segment);
            assert_eq!(a.temperature, b.temperature);
        }
        assert!(rel_eq(r.metadata.geometry.width, t.metadata.geometry.width));
    }

    #[test]
    fn shuffled_time_is_rejected_with_line() {
        let text = format!("{HEADER}\n0,0,0,0,23\n0.2,0,0,0,23\n0.1,0,0,0,23\n");
        let err = parse_trace(&text, "t.csv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("time not strictly increasing"), "{msg}");
        assert!(matches!(err, Error::TraceFormat { line: 4, .. }), "{msg}");
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = format!("# seed=1\n{HEADER}\n0,0,0,0,23\n0.1,0,abc,0,23\n");
        assert!(matches!(
            parse_trace(&text, "t").unwrap_err(),
            Error::TraceFormat { line: 4, .. }
        ));
        let text = format!("{HEADER}\n0,0,0\n");
        assert!(matches!(
            parse_trace(&text, "t").unwrap_err(),
            Error::TraceFormat { line: 2, .. }
        ));
    }

    #[test]
    fn missing_column_is_a_header_error() {
        let err = parse_trace("time_s,commanded_u_um,measured_F_mN\n0,0,0\n", "t").unwrap_err();
        assert!(err.to_string().contains("measured_u_um"));
        assert!(matches!(err, Error::TraceFormat { line: 1, .. }));
    }

    #[test]
    fn minimal_external_trace() {
        let text = "time_s,measured_F_mN,measured_u_um,commanded_u_um\n0,0,0,0\n1,1,1,1\n";
        let p = parse_trace(text, "t").unwrap();
        assert_eq!(p.trace.len(), 2);
        assert!(p.trace.segments.is_empty());
        assert_eq!(p.trace.samples[1].temperature, None);
        assert!(p.missing_metadata.contains(&"spring1_N_per_m"));
    }

    #[test]
    fn bad_segment_coverage() {
        let text = format!("# segment=ramp_to_strain,0,0,1\n{HEADER}\n0,0,0,0,\n0.1,0,0,0,\n");
        assert!(matches!(
            parse_trace(&text, "t").unwrap_err(),
            Error::TraceFormat { line: 1, .. }
        ));
        let text = format!("# segment=bogus,0,0,2\n{HEADER}\n0,0,0,0,\n0.1,0,0,0,\n");
        assert!(parse_trace(&text, "t").is_err());
    }

    #[test]
    fn twelve_digit_formatting() {
        assert_eq!(format_value(2.857), "2.857");
        assert_eq!(format_value(0.1 + 0.2), "0.3");
        assert_eq!(format_value(-0.0), "0");
        assert_eq!(format_value(123456.789012345), "123456.789012");
        assert_eq!(format_value(1e-9), "1e-9");
        assert_eq!(format_value(1e12), "1e12");
    }

    proptest! {
        #[test]
        fn round_trip_within_serialization_precision(
            rows in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64, -20.0..20.0f64, prop::option::of(0.0..40.0f64)), 1..40),
            dt in 1e-3..10.0f64,
        ) {
            let samples: Vec<TraceSample> = rows.iter().enumerate().map(|(i, &(cu, mu, f, temp))| TraceSample {
                time: i as f64 * dt,
                commanded_u: cu * 1e-6,
                measured_u: mu * 1e-6,
                measured_force: f * 1e-3,
                temperature: temp,
                segment: 0,
            }).collect();
            let n = samples.len();
            let mut t = sample_trace();
            t.samples = samples;
            t.segments = vec![SegmentSpan { index: 0, kind: SegmentKind::RampToStrain, cycle: 0, samples: 0..n }];
            let back = parse_trace(&trace_to_string(&t), "mem").unwrap().trace;
            prop_assert_eq!(back.len(), n);
            for (a, b) in back.samples.iter().zip(&t.samples) {
                prop_assert!(rel_eq(a.time, b.time));
                prop_assert!(rel_eq(a.commanded_u, b.commanded_u));
                prop_assert!(rel_eq(a.measured_u, b.measured_u));
                prop_assert!(rel_eq(a.measured_force, b.measured_force));
                match (a.temperature, b.temperature) {
                    (Some(x), Some(y)) => prop_assert!(rel_eq(x, y)),
                    (x, y) => prop_assert_eq!(x, y),
                }
            }
        }
    }
}
