//! Quasi-static equilibrium of the series load train.
//!
//! ```text
//! actuator ──[Spring 1: k1]──[specimen: F(x2)]──[Spring 3: k3]── ground
//!            x1 = F/k1        x2 = L0·ε        x3 = F/k3 (LVDT)
//! ```
//!
//! Under displacement control `u = x1 + x2 + x3` is prescribed; under force
//! control the specimen force is. The load cell reading is `k3·x3`.

use serde::{Deserialize, Serialize};

use crate::constitutive::{MaterialModel, MaterialState};
use crate::error::{Error, Result};
use crate::profile::{self, Control, TestProfile};
use crate::root::{self, MAX_ITERATIONS};
use crate::sensors::{self, SensorNoise, SensorSpec};
use crate::trace::{SegmentSpan, Trace, TraceMetadata, TraceSample, TruthSample};

/// Stiffness at or above which a spring counts as rigid (N/m).
pub const RIGID_STIFFNESS: f64 = 1e12;

/// Default equilibrium tolerance on force (N).
pub const DEFAULT_FORCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecimenGeometry {
    /// Gauge length L0 (m).
    pub gauge_length: f64,
    /// Width w (m).
    pub width: f64,
    /// Thickness t (m).
    pub thickness: f64,
}

impl Default for SpecimenGeometry {
    fn default() -> Self {
        Self {
            gauge_length: 600e-6,
            width: 100e-6,
            thickness: 200e-9,
        }
    }
}

impl SpecimenGeometry {
    pub fn area(&self) -> f64 {
        self.width * self.thickness
    }

    /// Axial stiffness `E·A/L0` (N/m) of a linear specimen.
    pub fn axial_stiffness(&self, modulus: f64) -> f64 {
        modulus * self.area() / self.gauge_length
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gauge length", self.gauge_length),
            ("width", self.width),
            ("thickness", self.thickness),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("specimen {name} must be > 0, got {v} m")));
            }
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        let t = self.thickness;
        if !(100e-9..=1e-6).contains(&t) {
            vec![format!(
                "thickness {:.0} nm is outside the sub-micron film range 100-1000 nm",
                t * 1e9
            )]
        } else if !(200e-9..=800e-9).contains(&t) {
            vec![format!(
                "thickness {:.0} nm is outside the tested 200-800 nm range",
                t * 1e9
            )]
        } else {
            Vec::new()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadTrainConfig {
    /// Misalignment-compensating frame, Spring 1 (N/m).
    pub spring1_stiffness: f64,
    /// Load-sensing beam, Spring 3 (N/m).
    pub spring3_stiffness: f64,
    /// Maximum actuator displacement magnitude (m).
    pub actuator_travel_limit: f64,
    /// Actuator positioning resolution (m).
    pub actuator_resolution: f64,
    /// Equilibrium tolerance used by profile runs (N).
    pub force_tolerance: f64,
}

impl Default for LoadTrainConfig {
    fn default() -> Self {
        Self {
            spring1_stiffness: 1e6,
            spring3_stiffness: 1e4,
            actuator_travel_limit: 50e-6,
            actuator_resolution: 0.1e-6,
            force_tolerance: DEFAULT_FORCE_TOLERANCE,
        }
    }
}

impl LoadTrainConfig {
    pub fn rigid() -> Self {
        Self {
            spring1_stiffness: RIGID_STIFFNESS,
            spring3_stiffness: RIGID_STIFFNESS,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, k) in [
            ("spring 1", self.spring1_stiffness),
            ("spring 3", self.spring3_stiffness),
        ] {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Config(format!("{name} stiffness must be > 0, got {k} N/m")));
            }
        }
        if !(self.actuator_travel_limit > 0.0 && self.actuator_travel_limit.is_finite()) {
            return Err(Error::Config(format!(
                "actuator travel limit must be > 0, got {} m",
                self.actuator_travel_limit
            )));
        }
        if !(self.actuator_resolution >= 0.0 && self.actuator_resolution.is_finite()) {
            return Err(Error::Config(format!(
                "actuator resolution must be >= 0, got {} m",
                self.actuator_resolution
            )));
        }
        if !(self.force_tolerance > 0.0 && self.force_tolerance.is_finite()) {
            return Err(Error::Config(format!(
                "force tolerance must be > 0, got {} N",
                self.force_tolerance
            )));
        }
        Ok(())
    }

    /// Physical series compliance of Springs 1 and 3, rigid sentinels included.
    fn series_compliance(&self) -> f64 {
        1.0 / self.spring1_stiffness + 1.0 / self.spring3_stiffness
    }

    fn check_travel(&self, u: f64) -> Result<()> {
        if u.abs() > self.actuator_travel_limit * (1.0 + 1e-12) {
            return Err(Error::Profile(format!(
                "commanded displacement {:.4} um exceeds actuator travel limit of {:.4} um",
                u * 1e6,
                self.actuator_travel_limit * 1e6
            )));
        }
        Ok(())
    }
}

/// Machine compliance `1/k1 + 1/k3` (m/N); rigid sentinel springs contribute 0.
pub fn machine_compliance(config: &LoadTrainConfig) -> f64 {
    [config.spring1_stiffness, config.spring3_stiffness]
        .into_iter()
        .filter(|&k| k < RIGID_STIFFNESS)
        .map(|k| 1.0 / k)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    /// Load-cell force `k3·x3` (N).
    pub force: f64,
    /// Force carried by the specimen, `σ·w·t` (N).
    pub specimen_force: f64,
    pub deflection_spring1: f64,
    pub specimen_elongation: f64,
    pub deflection_spring3: f64,
    /// Actuator position `x1 + x2 + x3` (m).
    pub commanded_u: f64,
    pub stress: f64,
    pub strain: f64,
    /// `k3·x3 − σ·w·t` (N).
    pub residual: f64,
    pub iterations: usize,
    pub state: MaterialState,
}

impl StepResult {
    fn unloaded(state: MaterialState) -> Self {
        Self {
            force: 0.0,
            specimen_force: 0.0,
            deflection_spring1: 0.0,
            specimen_elongation: 0.0,
            deflection_spring3: 0.0,
            commanded_u: 0.0,
            stress: 0.0,
            strain: 0.0,
            residual: 0.0,
            iterations: 0,
            state,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: &LoadTrainConfig,
        geometry: &SpecimenGeometry,
        model: &MaterialModel,
        state: &MaterialState,
        train_force: f64,
        elongation: f64,
        u: f64,
        dt: f64,
        iterations: usize,
    ) -> Result<Self> {
        let strain = elongation / geometry.gauge_length;
        let update = model.update(state, strain, dt)?;
        let specimen_force = update.stress * geometry.area();
        let x1 = train_force / config.spring1_stiffness;
        let x3 = train_force / config.spring3_stiffness;
        let force = config.spring3_stiffness * x3;
        Ok(Self {
            force,
            specimen_force,
            deflection_spring1: x1,
            specimen_elongation: elongation,
            deflection_spring3: x3,
            commanded_u: u,
            stress: update.stress,
            strain,
            residual: force - specimen_force,
            iterations,
            state: update.state,
        })
    }
}

/// Specimen force and its derivative with respect to elongation for a trial step.
fn specimen_response(
    geometry: &SpecimenGeometry,
    model: &MaterialModel,
    state: &MaterialState,
    elongation: f64,
    dt: f64,
) -> Result<(f64, f64)> {
    let update = model.update(state, elongation / geometry.gauge_length, dt)?;
    let area = geometry.area();
    Ok((update.stress * area, update.tangent * area / geometry.gauge_length))
}

fn check_inputs(config: &LoadTrainConfig, geometry: &SpecimenGeometry, model: &MaterialModel, tol: f64) -> Result<()> {
    config.validate()?;
    geometry.validate()?;
    model.validate()?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Input(format!("solver tolerance must be > 0, got {tol} N")));
    }
    Ok(())
}

/// Equilibrates the train for actuator position `u_target`.
///
/// The unknown is the train force `F`; the specimen elongation follows as
/// `x2 = u − F·(1/k1 + 1/k3)`. Solving for `F` keeps the residual
/// well-conditioned when the machine springs approach the rigid sentinel.
pub fn solve_displacement_step(
    config: &LoadTrainConfig,
    geometry: &SpecimenGeometry,
    model: &MaterialModel,
    state: &MaterialState,
    u_target: f64,
    dt: f64,
    tol: f64,
) -> Result<StepResult> {
    check_inputs(config, geometry, model, tol)?;
    if !u_target.is_finite() {
        return Err(Error::Input(format!("displacement must be finite, got {u_target} m")));
    }
    config.check_travel(u_target)?;
    let compliance = config.series_compliance();

    // At F = 0 the whole stroke sits in the specimen, which bounds the root.
    let (force_at_u, stiffness_at_u) = specimen_response(geometry, model, state, u_target, dt)?;
    let residual = |force: f64| {
        let (f_spec, k_spec) = specimen_response(geometry, model, state, u_target - force * compliance, dt)?;
        Ok((f_spec - force, -k_spec * compliance - 1.0))
    };
    let guess = force_at_u / (1.0 + stiffness_at_u.max(0.0) * compliance);
    let root = root::solve_nonincreasing(
        residual,
        force_at_u.min(0.0),
        force_at_u.max(0.0),
        guess,
        tol,
        MAX_ITERATIONS,
    )?;

    let force = root.x;
    let elongation = u_target - force * compliance;
    StepResult::assemble(
        config,
        geometry,
        model,
        state,
        force,
        elongation,
        u_target,
        dt,
        root.iterations,
    )
}

/// Equilibrates the train so the specimen carries `force_target`.
pub fn solve_force_step(
    config: &LoadTrainConfig,
    geometry: &SpecimenGeometry,
    model: &MaterialModel,
    state: &MaterialState,
    force_target: f64,
    dt: f64,
    tol: f64,
) -> Result<StepResult> {
    check_inputs(config, geometry, model, tol)?;
    if !force_target.is_finite() {
        return Err(Error::Input(format!("force must be finite, got {force_target} N")));
    }
    let travel = config.actuator_travel_limit;
    let travel_error = || {
        Error::Profile(format!(
            "holding {:.4} mN requires actuator travel beyond {:.4} um",
            force_target * 1e3,
            travel * 1e6
        ))
    };

    let residual = |elongation: f64| {
        let (f_spec, k_spec) = specimen_response(geometry, model, state, elongation, dt)?;
        Ok((force_target - f_spec, -k_spec))
    };

    let start = state.strain * geometry.gauge_length;
    let (r_start, dr_start) = residual(start)?;
    let (lo, hi) = if r_start == 0.0 {
        (start, start)
    } else {
        // Expand away from the current elongation until the residual changes sign.
        let direction = r_start.signum();
        let mut step = (1e-3 * geometry.gauge_length).max(start.abs());
        let mut inner = start;
        loop {
            let outer = start + direction * step;
            if outer.abs() > travel {
                return Err(travel_error());
            }
            if residual(outer)?.0 * direction <= 0.0 {
                break if direction > 0.0 {
                    (inner, outer)
                } else {
                    (outer, inner)
                };
            }
            inner = outer;
            step *= 2.0;
        }
    };
    let guess = if dr_start < 0.0 {
        start - r_start / dr_start
    } else {
        start
    };
    let root = root::solve_nonincreasing(residual, lo, hi, guess, tol, MAX_ITERATIONS)?;

    let elongation = root.x;
    let (f_spec, _) = specimen_response(geometry, model, state, elongation, dt)?;
    let u = f_spec / config.spring1_stiffness + elongation + f_spec / config.spring3_stiffness;
    if u.abs() > travel * (1.0 + 1e-12) {
        return Err(travel_error());
    }
    StepResult::assemble(
        config,
        geometry,
        model,
        state,
        f_spec,
        elongation,
        u,
        dt,
        root.iterations,
    )
}

/// Runs `profile` sample by sample, threading material state, and records
/// the measured channels alongside the ground truth.
pub fn run_profile(
    config: &LoadTrainConfig,
    geometry: &SpecimenGeometry,
    model: &MaterialModel,
    profile: &TestProfile,
    sensor_spec: &SensorSpec,
    seed: u64,
) -> Result<Trace> {
    config.validate()?;
    geometry.validate()?;
    model.validate()?;
    sensor_spec.validate()?;
    let report = profile::validate(profile, config, geometry);
    if !report.is_ok() {
        let messages: Vec<String> = report.errors.iter().map(|e| e.to_string()).collect();
        return Err(Error::Profile(messages.join("; ")));
    }

    let rate = profile.sample_rate_hz;
    let dt = 1.0 / rate;
    let tol = config.force_tolerance;
    let mut noise = SensorNoise::new(seed);

    let mut samples = Vec::new();
    let mut truth = Vec::new();
    let mut spans = Vec::new();

    let mut record = |sample_index: usize, segment: usize, step: &StepResult, noise: &mut SensorNoise| {
        let time = sample_index as f64 / rate;
        let reading = sensors::measure(sensor_spec, step.commanded_u, step.force, time, noise);
        samples.push(TraceSample {
            time,
            commanded_u: step.commanded_u,
            measured_u: reading.displacement,
            measured_force: reading.force,
            temperature: Some(sensor_spec.ambient_temperature),
            segment,
        });
        truth.push(TruthSample::from_step(step));
    };

    let mut state = MaterialState::default();
    let mut u_now = 0.0;
    let mut sample_index = 0usize;
    record(0, 0, &StepResult::unloaded(state), &mut noise);

    for (segment_index, (cycle, segment)) in profile.expanded().enumerate() {
        let plan = profile::plan_segment(segment, u_now, rate, geometry.gauge_length);
        let first = if segment_index == 0 { 0 } else { sample_index + 1 };
        for k in 1..=plan.intervals() {
            sample_index += 1;
            let time = sample_index as f64 / rate;
            let step = match plan.control(k) {
                Control::Displacement(u) => solve_displacement_step(config, geometry, model, &state, u, dt, tol),
                Control::Force(f) => solve_force_step(config, geometry, model, &state, f, dt, tol),
            }
            .map_err(|e| Error::AtTime {
                time,
                source: Box::new(e),
            })?;
            state = step.state;
            u_now = step.commanded_u;
            record(sample_index, segment_index, &step, &mut noise);
        }
        spans.push(SegmentSpan {
            index: segment_index,
            kind: segment.kind(),
            cycle,
            samples: first..sample_index + 1,
        });
    }

    Ok(Trace {
        samples,
        segments: spans,
        metadata: TraceMetadata {
            geometry: *geometry,
            machine: *config,
            sample_rate_hz: rate,
            profile_digest: profile.digest(),
            seed,
            notes: Vec::new(),
        },
        truth: Some(truth),
    })
}
