//! Recorded time series of a test run.

use std::ops::Range;

use crate::constitutive::MaterialState;
use crate::error::{Error, Result};
use crate::loadtrain::{LoadTrainConfig, SpecimenGeometry, StepResult};
use crate::profile::SegmentKind;

/// Observables recorded by the acquisition system at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub time: f64,
    pub commanded_u: f64,
    pub measured_u: f64,
    pub measured_force: f64,
    pub temperature: Option<f64>,
    /// Index into [`Trace::segments`] of the segment that produced this sample.
    pub segment: usize,
}

/// Simulator-side quantities the instrument cannot observe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub true_u: f64,
    /// Load-cell force `k3·x3` (N).
    pub true_force: f64,
    pub specimen_force: f64,
    pub deflection_spring1: f64,
    pub specimen_elongation: f64,
    pub deflection_spring3: f64,
    pub stress: f64,
    pub strain: f64,
    pub residual: f64,
    pub iterations: usize,
    pub state: MaterialState,
}

impl TruthSample {
    pub fn from_step(step: &StepResult) -> Self {
        Self {
            true_u: step.commanded_u,
            true_force: step.force,
            specimen_force: step.specimen_force,
            deflection_spring1: step.deflection_spring1,
            specimen_elongation: step.specimen_elongation,
            deflection_spring3: step.deflection_spring3,
            stress: step.stress,
            strain: step.strain,
            residual: step.residual,
            iterations: step.iterations,
            state: step.state,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSpan {
    /// Position in the expanded segment list.
    pub index: usize,
    pub kind: SegmentKind,
    pub cycle: u32,
    /// Samples produced by this segment. The sample just before `start` is
    /// the segment's starting point.
    pub samples: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMetadata {
    pub geometry: SpecimenGeometry,
    pub machine: LoadTrainConfig,
    pub sample_rate_hz: f64,
    pub profile_digest: String,
    pub seed: u64,
    /// Free-form provenance carried into analysis reports.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub samples: Vec<TraceSample>,
    pub segments: Vec<SegmentSpan>,
    pub metadata: TraceMetadata,
    /// Present for simulated traces only; not serialized.
    pub truth: Option<Vec<TruthSample>>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks ordering and segment bookkeeping.
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Input("trace has no samples".into()));
        }
        for (i, w) in self.samples.windows(2).enumerate() {
            if w[1].time.partial_cmp(&w[0].time) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::Input(format!(
                    "time not strictly increasing at sample {}",
                    i + 1
                )));
            }
        }
        for s in &self.samples {
            if s.segment >= self.segments.len() && !self.segments.is_empty() {
                return Err(Error::Input(format!("sample references unknown segment {}", s.segment)));
            }
        }
        let mut next = 0;
        for span in &self.segments {
            if span.samples.start != next && !span.samples.is_empty() {
                return Err(Error::Input(format!(
                    "segment {} starts at sample {} but {} was expected",
                    span.index, span.samples.start, next
                )));
            }
            next = next.max(span.samples.end);
        }
        if !self.segments.is_empty() && next != self.samples.len() {
            return Err(Error::Input(format!(
                "segments cover {next} samples but the trace has {}",
                self.samples.len()
            )));
        }
        Ok(())
    }

    /// The span of the segment that produced `sample`.
    pub fn span_of(&self, sample: usize) -> Option<&SegmentSpan> {
        self.samples.get(sample).and_then(|s| self.segments.get(s.segment))
    }
}
