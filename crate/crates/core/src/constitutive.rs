//! One-dimensional constitutive response of a freestanding film.
//!
//! The stress carried by the specimen is the sum of an elastoplastic branch
//! and an optional viscous arm in parallel:
//!
//! ```text
//! σ = σ_ep(ε − ε_p) + σ_v
//! ```
//!
//! The elastic part of `σ_ep` is either linear (`E·ε_e`) or follows the
//! wrinkle-straightening law
//!
//! ```text
//! σ(ε_e) = E·[ε_e − ε_c·(1 − exp(−ε_e/ε_c))]     first loading, ε_e ≥ ε_max
//! σ(ε_e) = σ(ε_max) + E·(ε_e − ε_max)            unload / reload, ε_e < ε_max
//! ```
//!
//! where `ε_max` is the largest elastic strain reached so far (straightened
//! wrinkles stay straight). Plastic flow uses a 1D radial return onto the
//! surface `|σ_ep| = Y + H·α` with linear isotropic hardening, `α` being the
//! accumulated plastic strain. The viscous arm is a Maxwell element
//! `(E1, τ)` integrated exactly for a strain that varies linearly over the
//! step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::root::{self, MAX_ITERATIONS};

/// Relative tolerance for the wrinkle-branch return mapping.
const RETURN_MAP_RTOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticParams {
    /// Young's modulus (Pa).
    pub modulus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrinkleParams {
    /// Strain scale over which wrinkles straighten.
    pub characteristic_strain: f64,
    pub enabled: bool,
}

impl WrinkleParams {
    pub fn disabled() -> Self {
        Self {
            characteristic_strain: 0.0,
            enabled: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlasticParams {
    /// Initial yield stress (Pa).
    pub yield_stress: f64,
    /// Plastic (isotropic hardening) modulus (Pa).
    pub hardening_modulus: f64,
    pub enabled: bool,
}

impl PlasticParams {
    pub fn disabled() -> Self {
        Self {
            yield_stress: f64::INFINITY,
            hardening_modulus: 0.0,
            enabled: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationParams {
    /// Stiffness of the relaxing arm (Pa).
    pub arm_modulus: f64,
    /// Relaxation time of the arm (s).
    pub time_constant: f64,
    pub enabled: bool,
}

impl RelaxationParams {
    pub fn disabled() -> Self {
        Self {
            arm_modulus: 0.0,
            time_constant: 1.0,
            enabled: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HallPetchParams {
    /// Lattice friction stress σᵢ (Pa).
    pub friction_stress: f64,
    /// Hall-Petch coefficient k (Pa·m^½).
    pub coefficient: f64,
}

impl HallPetchParams {
    pub fn validate(&self) -> Result<()> {
        if !self.friction_stress.is_finite() {
            return Err(Error::Config("friction stress must be finite".into()));
        }
        if !(self.coefficient >= 0.0 && self.coefficient.is_finite()) {
            return Err(Error::Config(format!(
                "Hall-Petch coefficient must be >= 0, got {}",
                self.coefficient
            )));
        }
        Ok(())
    }
}

/// Yield stress for mean grain size `grain_size` (m): `σᵢ + k/√D`.
pub fn hall_petch_yield(params: &HallPetchParams, grain_size: f64) -> Result<f64> {
    params.validate()?;
    if !(grain_size > 0.0 && grain_size.is_finite()) {
        return Err(Error::Input(format!("grain size must be positive, got {grain_size} m")));
    }
    Ok(params.friction_stress + params.coefficient / grain_size.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    pub elastic: ElasticParams,
    pub wrinkle: WrinkleParams,
    pub plastic: PlasticParams,
    pub relaxation: RelaxationParams,
}

/// History variables threaded through a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MaterialState {
    /// Total strain at the last committed update.
    pub strain: f64,
    pub plastic_strain: f64,
    /// Accumulated |dε_p|; drives isotropic hardening.
    pub equivalent_plastic_strain: f64,
    /// Largest elastic strain reached (wrinkle memory).
    pub max_strain_seen: f64,
    pub viscous_arm_stress: f64,
}

/// Result of a constitutive update with its consistent tangent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressUpdate {
    pub stress: f64,
    /// dσ/dε of the step, including the viscous arm's instantaneous stiffness.
    pub tangent: f64,
    pub state: MaterialState,
}

struct Elastoplastic {
    stress: f64,
    tangent: f64,
    plastic_strain: f64,
    equivalent_plastic_strain: f64,
    elastic_strain: f64,
}

impl MaterialModel {
    pub fn linear_elastic(modulus: f64) -> Self {
        Self {
            elastic: ElasticParams { modulus },
            wrinkle: WrinkleParams::disabled(),
            plastic: PlasticParams::disabled(),
            relaxation: RelaxationParams::disabled(),
        }
    }

    pub fn elastic_perfectly_plastic(modulus: f64, yield_stress: f64) -> Self {
        Self::linear_hardening(modulus, yield_stress, 0.0)
    }

    pub fn linear_hardening(modulus: f64, yield_stress: f64, hardening_modulus: f64) -> Self {
        Self {
            plastic: PlasticParams {
                yield_stress,
                hardening_modulus,
                enabled: true,
            },
            ..Self::linear_elastic(modulus)
        }
    }

    pub fn with_wrinkle(mut self, characteristic_strain: f64) -> Self {
        self.wrinkle = WrinkleParams {
            characteristic_strain,
            enabled: true,
        };
        self
    }

    pub fn with_relaxation(mut self, arm_modulus: f64, time_constant: f64) -> Self {
        self.relaxation = RelaxationParams {
            arm_modulus,
            time_constant,
            enabled: true,
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.elastic.modulus;
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Config(format!("elastic modulus must be > 0, got {e} Pa")));
        }
        if self.wrinkle.enabled {
            let ec = self.wrinkle.characteristic_strain;
            if !(ec > 0.0 && ec.is_finite()) {
                return Err(Error::Config(format!(
                    "wrinkle characteristic strain must be > 0, got {ec}"
                )));
            }
        }
        if self.plastic.enabled {
            let y = self.plastic.yield_stress;
            let h = self.plastic.hardening_modulus;
            if !(y > 0.0 && y.is_finite()) {
                return Err(Error::Config(format!("yield stress must be > 0, got {y} Pa")));
            }
            if !(h >= 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("hardening modulus must be >= 0, got {h} Pa")));
            }
        }
        if self.relaxation.enabled {
            let e1 = self.relaxation.arm_modulus;
            let tau = self.relaxation.time_constant;
            if !(e1 >= 0.0 && e1.is_finite()) {
                return Err(Error::Config(format!(
                    "relaxation arm modulus must be >= 0, got {e1} Pa"
                )));
            }
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::Config(format!(
                    "relaxation time constant must be > 0, got {tau} s"
                )));
            }
        }
        Ok(())
    }

    /// Full update: return mapping plus viscous arm over `dt`.
    pub fn update(&self, state: &MaterialState, strain_new: f64, dt: f64) -> Result<StressUpdate> {
        self.validate()?;
        if !strain_new.is_finite() {
            return Err(Error::Input(format!("strain must be finite, got {strain_new}")));
        }
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::Input(format!("time step must be >= 0, got {dt} s")));
        }
        let ep = self.elastoplastic(state, strain_new)?;

        let mut viscous = state.viscous_arm_stress;
        let mut tangent = ep.tangent;
        if self.relaxation.enabled {
            if dt <= 0.0 {
                return Err(Error::Input(
                    "time step must be > 0 when the relaxation arm is enabled".into(),
                ));
            }
            let x = dt / self.relaxation.time_constant;
            let decay = (-x).exp();
            // (1 − e^−x)/x: average of the decay kernel over a linear strain ramp.
            let ramp_weight = -(-x).exp_m1() / x;
            let arm_stiffness = self.relaxation.arm_modulus * ramp_weight;
            viscous = viscous * decay + arm_stiffness * (strain_new - state.strain);
            tangent += arm_stiffness;
        }

        Ok(StressUpdate {
            stress: ep.stress + viscous,
            tangent,
            state: MaterialState {
                strain: strain_new,
                plastic_strain: ep.plastic_strain,
                equivalent_plastic_strain: ep.equivalent_plastic_strain,
                max_strain_seen: state.max_strain_seen.max(ep.elastic_strain),
                viscous_arm_stress: viscous,
            },
        })
    }

    fn elastoplastic(&self, state: &MaterialState, strain: f64) -> Result<Elastoplastic> {
        let e = self.elastic.modulus;
        let memory = state.max_strain_seen;
        let trial_strain = strain - state.plastic_strain;
        let (trial_stress, trial_tangent) = elastic_branch(e, &self.wrinkle, trial_strain, memory);

        let elastic = Elastoplastic {
            stress: trial_stress,
            tangent: trial_tangent,
            plastic_strain: state.plastic_strain,
            equivalent_plastic_strain: state.equivalent_plastic_strain,
            elastic_strain: trial_strain,
        };
        if !self.plastic.enabled {
            return Ok(elastic);
        }

        let h = self.plastic.hardening_modulus;
        let alpha = state.equivalent_plastic_strain;
        let surface = self.plastic.yield_stress + h * alpha;
        let overstress = trial_stress.abs() - surface;
        if overstress <= 0.0 {
            return Ok(elastic);
        }

        let sign = trial_stress.signum();
        let on_wrinkle_branch = self.wrinkle.enabled && trial_strain > memory;
        if !on_wrinkle_branch {
            let increment = overstress / (e + h);
            return Ok(Elastoplastic {
                stress: sign * (surface + h * increment),
                tangent: e * h / (e + h),
                plastic_strain: state.plastic_strain + sign * increment,
                equivalent_plastic_strain: alpha + increment,
                elastic_strain: trial_strain - sign * increment,
            });
        }

        // Tension on the first-loading wrinkle curve: solve
        //   σ_w(ε_e,trial − Δγ) = Y + H·(α + Δγ)
        // for Δγ in [0, ε_e,trial − ε_max]. The admissible prior state puts the
        // upper end on or inside the surface.
        let wrinkle = self.wrinkle;
        let residual = |increment: f64| {
            let (stress, tangent) = wrinkle_loading(e, wrinkle.characteristic_strain, trial_strain - increment);
            Ok((stress - surface - h * increment, -tangent - h))
        };
        let upper = trial_strain - memory;
        let tol = RETURN_MAP_RTOL * (surface + e * trial_strain.abs());
        // A previous return accepted within `tol` can leave the memory point
        // marginally outside the surface; the root is then the memory point.
        let increment = if residual(upper)?.0 >= 0.0 {
            upper
        } else {
            root::solve_nonincreasing(
                residual,
                0.0,
                upper,
                overstress / (trial_tangent + h).max(f64::MIN_POSITIVE),
                tol,
                MAX_ITERATIONS,
            )?
            .x
        };
        let elastic_strain = trial_strain - increment;
        let (_, loading_tangent) = wrinkle_loading(e, wrinkle.characteristic_strain, elastic_strain);
        let tangent = if loading_tangent + h > 0.0 {
            loading_tangent * h / (loading_tangent + h)
        } else {
            0.0
        };
        Ok(Elastoplastic {
            stress: surface + h * increment,
            tangent,
            plastic_strain: state.plastic_strain + increment,
            equivalent_plastic_strain: alpha + increment,
            elastic_strain,
        })
    }
}

/// `σ_w(ε)` and `dσ_w/dε` on the first-loading wrinkle curve.
fn wrinkle_loading(modulus: f64, characteristic_strain: f64, strain: f64) -> (f64, f64) {
    let m1 = (-strain / characteristic_strain).exp_m1();
    (modulus * (strain + characteristic_strain * m1), -modulus * m1)
}

fn elastic_branch(modulus: f64, wrinkle: &WrinkleParams, strain: f64, memory: f64) -> (f64, f64) {
    if !wrinkle.enabled {
        return (modulus * strain, modulus);
    }
    if strain >= memory {
        wrinkle_loading(modulus, wrinkle.characteristic_strain, strain)
    } else {
        let (anchor, _) = wrinkle_loading(modulus, wrinkle.characteristic_strain, memory);
        (anchor + modulus * (strain - memory), modulus)
    }
}

/// Elastic (optionally wrinkled) stress at `strain` given the wrinkle memory.
pub fn elastic_stress(
    elastic: &ElasticParams,
    wrinkle: &WrinkleParams,
    strain: f64,
    max_strain_seen: f64,
) -> Result<f64> {
    if !strain.is_finite() {
        return Err(Error::Input(format!("strain must be finite, got {strain}")));
    }
    MaterialModel {
        elastic: *elastic,
        wrinkle: *wrinkle,
        plastic: PlasticParams::disabled(),
        relaxation: RelaxationParams::disabled(),
    }
    .validate()?;
    Ok(elastic_branch(elastic.modulus, wrinkle, strain, max_strain_seen.max(0.0)).0)
}

/// Advances `state` to `strain_new` over `dt` seconds.
pub fn stress_update(
    model: &MaterialModel,
    state: &MaterialState,
    strain_new: f64,
    dt: f64,
) -> Result<(f64, MaterialState)> {
    let update = model.update(state, strain_new, dt)?;
    Ok((update.stress, update.state))
}

/// Rate-independent tangent dσ/dε for a step from `state` to `strain`.
///
/// Returns NaN for an invalid model or non-finite strain.
pub fn tangent_stiffness(model: &MaterialModel, state: &MaterialState, strain: f64) -> f64 {
    if model.validate().is_err() || !strain.is_finite() {
        return f64::NAN;
    }
    model
        .elastoplastic(state, strain)
        .map(|ep| ep.tangent.max(0.0))
        .unwrap_or(f64::NAN)
}

/// Reference films with moduli from the tested specimens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaterialPreset {
    Cu200,
    AuCr200,
    TaN400,
    TaN800,
}

impl MaterialPreset {
    pub const ALL: [MaterialPreset; 4] = [
        MaterialPreset::Cu200,
        MaterialPreset::AuCr200,
        MaterialPreset::TaN400,
        MaterialPreset::TaN800,
    ];

    /// Yield stress applied to every preset (Pa); only Au-Cr has a measured value.
    pub const DEFAULT_YIELD_STRESS: f64 = 350e6;

    pub fn name(self) -> &'static str {
        match self {
            MaterialPreset::Cu200 => "cu200",
            MaterialPreset::AuCr200 => "aucr200",
            MaterialPreset::TaN400 => "tan400",
            MaterialPreset::TaN800 => "tan800",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Young's modulus (Pa).
    pub fn modulus(self) -> f64 {
        match self {
            MaterialPreset::Cu200 => 120e9,
            MaterialPreset::AuCr200 => 161e9,
            MaterialPreset::TaN400 => 151e9,
            MaterialPreset::TaN800 => 259e9,
        }
    }

    /// Film thickness (m).
    pub fn thickness(self) -> f64 {
        match self {
            MaterialPreset::Cu200 | MaterialPreset::AuCr200 => 200e-9,
            MaterialPreset::TaN400 => 400e-9,
            MaterialPreset::TaN800 => 800e-9,
        }
    }

    /// True when the preset's yield stress is the shared default rather than a measurement.
    pub fn yield_is_assumed(self) -> bool {
        self != MaterialPreset::AuCr200
    }

    /// Elastic-perfectly-plastic model, wrinkle and relaxation off.
    pub fn model(self) -> MaterialModel {
        MaterialModel::elastic_perfectly_plastic(self.modulus(), Self::DEFAULT_YIELD_STRESS)
    }
}

impl std::fmt::Display for MaterialPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
