//! Test profiles: strain-rate ramps, relaxation holds, unloading and
//! zero-load holds, repeated over several cycles.
//!
//! Strains in a profile are nominal (actuator-referred): the commanded
//! actuator position is `u = ε·L0`. Sampling is uniform at
//! `sample_rate_hz`; every segment ends exactly on a sample.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::loadtrain::{LoadTrainConfig, SpecimenGeometry};

/// Recommended loading/unloading strain rates (1/s).
pub const RECOMMENDED_STRAIN_RATES: [f64; 2] = [3.3e-4, 3.3e-3];
/// Recommended relaxation hold range (s).
pub const RECOMMENDED_HOLD_S: (f64, f64) = (20.0, 120.0);
/// Recommended number of load cycles.
pub const RECOMMENDED_CYCLES: (u32, u32) = (3, 4);
/// 50 um of travel over a 600 um gauge length, to three significant figures.
pub const NOMINAL_STRAIN_CAP: f64 = 0.0833;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 10.0;

/// Slack when converting a duration into a whole number of sample intervals.
const INTERVAL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    RampToStrain,
    HoldDisplacement,
    RampToZeroDisplacement,
    HoldForce,
}

impl SegmentKind {
    pub const ALL: [SegmentKind; 4] = [
        SegmentKind::RampToStrain,
        SegmentKind::HoldDisplacement,
        SegmentKind::RampToZeroDisplacement,
        SegmentKind::HoldForce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SegmentKind::RampToStrain => "ramp_to_strain",
            SegmentKind::HoldDisplacement => "hold_displacement",
            SegmentKind::RampToZeroDisplacement => "ramp_to_zero_displacement",
            SegmentKind::HoldForce => "hold_force",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Segment {
    /// Ramp the nominal strain to `target_strain` at `rate` (1/s).
    RampToStrain { target_strain: f64, rate: f64 },
    /// Hold the actuator position for `duration` (s).
    HoldDisplacement { duration: f64 },
    /// Ramp the actuator back to zero at nominal strain `rate` (1/s).
    RampToZeroDisplacement { rate: f64 },
    /// Hold the specimen force at `target_force` (N) for `duration` (s).
    HoldForce { target_force: f64, duration: f64 },
}

impl Segment {
    pub fn kind(&self) -> SegmentKind {
        match self {
            Segment::RampToStrain { .. } => SegmentKind::RampToStrain,
            Segment::HoldDisplacement { .. } => SegmentKind::HoldDisplacement,
            Segment::RampToZeroDisplacement { .. } => SegmentKind::RampToZeroDisplacement,
            Segment::HoldForce { .. } => SegmentKind::HoldForce,
        }
    }

    fn canonical(&self) -> String {
        match *self {
            Segment::RampToStrain { target_strain, rate } => {
                format!("ramp_to_strain(target={target_strain:e},rate={rate:e})")
            }
            Segment::HoldDisplacement { duration } => format!("hold_displacement(duration={duration:e})"),
            Segment::RampToZeroDisplacement { rate } => format!("ramp_to_zero_displacement(rate={rate:e})"),
            Segment::HoldForce { target_force, duration } => {
                format!("hold_force(target={target_force:e},duration={duration:e})")
            }
        }
    }
}

/// One cycle of segments, repeated `cycles` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestProfile {
    pub segments: Vec<Segment>,
    pub sample_rate_hz: f64,
    pub cycles: u32,
}

impl TestProfile {
    /// Segments in execution order, paired with their zero-based cycle.
    pub fn expanded(&self) -> impl Iterator<Item = (u32, &Segment)> + '_ {
        (0..self.cycles).flat_map(move |c| self.segments.iter().map(move |s| (c, s)))
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len() * self.cycles as usize
    }

    pub fn with_sample_rate(mut self, sample_rate_hz: f64) -> Self {
        self.sample_rate_hz = sample_rate_hz;
        self
    }

    /// SHA-256 over a canonical rendering of the profile.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("rate={:e};cycles={};", self.sample_rate_hz, self.cycles));
        for s in &self.segments {
            hasher.update(s.canonical());
            hasher.update(";");
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Ramp → relaxation hold → unload → zero-load hold, `cycles` times.
pub fn standard_cycle(
    strain_rate: f64,
    target_strain: f64,
    hold_s: f64,
    zero_hold_s: f64,
    cycles: u32,
) -> Result<TestProfile> {
    for (name, v) in [
        ("strain rate", strain_rate),
        ("target strain", target_strain),
        ("hold duration", hold_s),
        ("zero-load hold duration", zero_hold_s),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Input(format!("{name} must be > 0, got {v}")));
        }
    }
    if cycles == 0 {
        return Err(Error::Input("cycles must be >= 1".into()));
    }
    Ok(TestProfile {
        segments: vec![
            Segment::RampToStrain {
                target_strain,
                rate: strain_rate,
            },
            Segment::HoldDisplacement { duration: hold_s },
            Segment::RampToZeroDisplacement { rate: strain_rate },
            Segment::HoldForce {
                target_force: 0.0,
                duration: zero_hold_s,
            },
        ],
        sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        cycles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    /// Actuator position (m).
    Displacement(f64),
    /// Specimen force (N).
    Force(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint {
    pub sample: usize,
    pub time: f64,
    /// Index into the expanded segment list.
    pub segment: usize,
    pub control: Control,
}

/// Sampled execution plan for one segment starting at actuator position `start_u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentPlan {
    intervals: usize,
    start_u: f64,
    end_u: f64,
    /// Actuator displacement per sample interval (signed, m).
    step_u: f64,
    force: Option<f64>,
}

impl SegmentPlan {
    /// Number of sample intervals; the segment emits samples `1..=intervals`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn end_u(&self) -> f64 {
        self.end_u
    }

    /// Setpoint at sample `k` (0 is the segment start).
    pub fn control(&self, k: usize) -> Control {
        if let Some(f) = self.force {
            return Control::Force(f);
        }
        if k >= self.intervals {
            return Control::Displacement(self.end_u);
        }
        let u = self.start_u + self.step_u * k as f64;
        // Ramps whose duration was rounded up clamp at the target.
        let u = if self.step_u >= 0.0 {
            u.min(self.end_u)
        } else {
            u.max(self.end_u)
        };
        Control::Displacement(u)
    }
}

fn whole_intervals(duration: f64, sample_rate_hz: f64) -> usize {
    (duration * sample_rate_hz - INTERVAL_SLACK).ceil().max(0.0) as usize
}

pub fn plan_segment(segment: &Segment, start_u: f64, sample_rate_hz: f64, gauge_length: f64) -> SegmentPlan {
    let ramp = |end_u: f64, rate: f64| {
        let speed = rate * gauge_length;
        let distance = end_u - start_u;
        let intervals = whole_intervals(distance.abs() / speed, sample_rate_hz);
        SegmentPlan {
            intervals,
            start_u,
            end_u,
            step_u: distance.signum() * speed / sample_rate_hz,
            force: None,
        }
    };
    let hold = |duration: f64, force: Option<f64>| SegmentPlan {
        intervals: whole_intervals(duration, sample_rate_hz).max(1),
        start_u,
        end_u: start_u,
        step_u: 0.0,
        force,
    };
    match *segment {
        Segment::RampToStrain { target_strain, rate } => ramp(target_strain * gauge_length, rate),
        Segment::RampToZeroDisplacement { rate } => ramp(0.0, rate),
        Segment::HoldDisplacement { duration } => hold(duration, None),
        Segment::HoldForce { target_force, duration } => hold(duration, Some(target_force)),
    }
}

/// Setpoint series for the whole profile.
///
/// Force holds are assumed to end where they started; a live run re-anchors
/// the next segment on the solver's converged actuator position instead.
pub fn discretize(profile: &TestProfile, gauge_length: f64) -> Vec<Setpoint> {
    let rate = profile.sample_rate_hz;
    let mut out = Vec::new();
    let mut u = 0.0;
    let mut sample = 0usize;
    for (segment_index, (_, segment)) in profile.expanded().enumerate() {
        let plan = plan_segment(segment, u, rate, gauge_length);
        if segment_index == 0 {
            out.push(Setpoint {
                sample: 0,
                time: 0.0,
                segment: 0,
                control: plan.control(0),
            });
        }
        for k in 1..=plan.intervals() {
            sample += 1;
            out.push(Setpoint {
                sample,
                time: sample as f64 / rate,
                segment: segment_index,
                control: plan.control(k),
            });
        }
        u = plan.end_u();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileIssue {
    Empty,
    InvalidSampleRate(f64),
    ZeroCycles,
    InvalidSegment {
        segment: usize,
        reason: String,
    },
    Machine(String),
    TravelExceeded {
        peak_u: f64,
        limit: f64,
    },
    StrainAboveCap {
        peak_strain: f64,
    },
    NonRecommendedRate {
        segment: usize,
        rate: f64,
    },
    HoldOutsideRange {
        segment: usize,
        duration: f64,
    },
    CyclesOutsideRange(u32),
    CoarseRamp {
        segment: usize,
        span_u: f64,
        resolution: f64,
    },
    ShortRamp {
        segment: usize,
        samples: usize,
    },
}

impl fmt::Display for ProfileIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileIssue::Empty => write!(f, "profile has no segments"),
            ProfileIssue::InvalidSampleRate(r) => write!(f, "sample rate must be > 0 Hz, got {r}"),
            ProfileIssue::ZeroCycles => write!(f, "cycles must be >= 1"),
            ProfileIssue::InvalidSegment { segment, reason } => write!(f, "segment {segment}: {reason}"),
            ProfileIssue::Machine(msg) => write!(f, "{msg}"),
            ProfileIssue::TravelExceeded { peak_u, limit } => write!(
                f,
                "peak commanded displacement {:.2} um exceeds actuator travel limit {:.0} um",
                peak_u * 1e6,
                limit * 1e6
            ),
            ProfileIssue::StrainAboveCap { peak_strain } => write!(
                f,
                "peak nominal strain {:.3}% exceeds the {:.2}% cap",
                peak_strain * 100.0,
                NOMINAL_STRAIN_CAP * 100.0
            ),
            ProfileIssue::NonRecommendedRate { segment, rate } => write!(
                f,
                "segment {segment}: strain rate {rate:e} 1/s is not one of the recommended 3.3e-4 or 3.3e-3 1/s"
            ),
            ProfileIssue::HoldOutsideRange { segment, duration } => write!(
                f,
                "segment {segment}: relaxation hold of {duration} s is outside the recommended 20-120 s"
            ),
            ProfileIssue::CyclesOutsideRange(c) => write!(f, "{c} cycles is outside the recommended 3-4"),
            ProfileIssue::CoarseRamp {
                segment,
                span_u,
                resolution,
            } => write!(
                f,
                "segment {segment}: ramp of {:.3} um spans fewer than 10 actuator steps of {:.3} um",
                span_u * 1e6,
                resolution * 1e6
            ),
            ProfileIssue::ShortRamp { segment, samples } => write!(
                f,
                "segment {segment}: ramp has only {samples} samples; modulus fits need at least 5"
            ),
        }
    }
}

/// Errors block a run; warnings flag departures from the recommended protocol.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub errors: Vec<ProfileIssue>,
    pub warnings: Vec<ProfileIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

fn is_recommended_rate(rate: f64) -> bool {
    RECOMMENDED_STRAIN_RATES.iter().any(|r| (rate - r).abs() <= 1e-9 * r)
}

pub fn validate(profile: &TestProfile, config: &LoadTrainConfig, geometry: &SpecimenGeometry) -> ValidationReport {
    let mut report = ValidationReport::default();
    let errors = &mut report.errors;
    let warnings = &mut report.warnings;

    if let Err(e) = config.validate().and_then(|_| geometry.validate()) {
        errors.push(ProfileIssue::Machine(e.to_string()));
        return report;
    }
    if profile.segments.is_empty() {
        errors.push(ProfileIssue::Empty);
    }
    let rate = profile.sample_rate_hz;
    if !(rate > 0.0 && rate.is_finite()) {
        errors.push(ProfileIssue::InvalidSampleRate(rate));
    }
    if profile.cycles == 0 {
        errors.push(ProfileIssue::ZeroCycles);
    } else if !(RECOMMENDED_CYCLES.0..=RECOMMENDED_CYCLES.1).contains(&profile.cycles) {
        warnings.push(ProfileIssue::CyclesOutsideRange(profile.cycles));
    }

    let l0 = geometry.gauge_length;
    let mut peak_strain = 0.0f64;
    let mut u = 0.0f64;
    for (i, segment) in profile.segments.iter().enumerate() {
        let problem = match *segment {
            Segment::RampToStrain { rate: r, .. } | Segment::RampToZeroDisplacement { rate: r }
                if !(r > 0.0 && r.is_finite()) =>
            {
                Some(format!("ramp rate must be > 0, got {r}"))
            }
            Segment::RampToStrain { target_strain, .. } if !target_strain.is_finite() => {
                Some(format!("target strain must be finite, got {target_strain}"))
            }
            Segment::HoldDisplacement { duration } | Segment::HoldForce { duration, .. }
                if !(duration > 0.0 && duration.is_finite()) =>
            {
                Some(format!("hold duration must be > 0, got {duration}"))
            }
            Segment::HoldForce { target_force, .. } if !target_force.is_finite() => {
                Some(format!("hold force must be finite, got {target_force}"))
            }
            _ => None,
        };
        if let Some(reason) = problem {
            errors.push(ProfileIssue::InvalidSegment { segment: i, reason });
            continue;
        }
        match *segment {
            Segment::RampToStrain { target_strain, rate: r } => {
                peak_strain = peak_strain.max(target_strain.abs());
                if !is_recommended_rate(r) {
                    warnings.push(ProfileIssue::NonRecommendedRate { segment: i, rate: r });
                }
                let end = target_strain * l0;
                ramp_checks(i, u, end, r, l0, rate, config, warnings);
                u = end;
            }
            Segment::RampToZeroDisplacement { rate: r } => {
                if !is_recommended_rate(r) {
                    warnings.push(ProfileIssue::NonRecommendedRate { segment: i, rate: r });
                }
                ramp_checks(i, u, 0.0, r, l0, rate, config, warnings);
                u = 0.0;
            }
            Segment::HoldDisplacement { duration } => {
                if !(RECOMMENDED_HOLD_S.0..=RECOMMENDED_HOLD_S.1).contains(&duration) {
                    warnings.push(ProfileIssue::HoldOutsideRange { segment: i, duration });
                }
            }
            Segment::HoldForce { .. } => {}
        }
    }

    let peak_u = peak_strain * l0;
    if peak_u > config.actuator_travel_limit * (1.0 + 1e-12) {
        errors.push(ProfileIssue::TravelExceeded {
            peak_u,
            limit: config.actuator_travel_limit,
        });
    }
    if peak_strain > NOMINAL_STRAIN_CAP {
        warnings.push(ProfileIssue::StrainAboveCap { peak_strain });
    }
    report
}

#[allow(clippy::too_many_arguments)]
fn ramp_checks(
    segment: usize,
    from: f64,
    to: f64,
    rate: f64,
    gauge_length: f64,
    sample_rate_hz: f64,
    config: &LoadTrainConfig,
    warnings: &mut Vec<ProfileIssue>,
) {
    let span_u = (to - from).abs();
    if span_u == 0.0 {
        return;
    }
    if span_u < 10.0 * config.actuator_resolution {
        warnings.push(ProfileIssue::CoarseRamp {
            segment,
            span_u,
            resolution: config.actuator_resolution,
        });
    }
    if sample_rate_hz > 0.0 && sample_rate_hz.is_finite() {
        let samples = whole_intervals(span_u / (rate * gauge_length), sample_rate_hz) + 1;
        if samples < 5 {
            warnings.push(ProfileIssue::ShortRamp { segment, samples });
        }
    }
}
