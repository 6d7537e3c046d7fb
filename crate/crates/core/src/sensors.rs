//! Sensor chain: additive Gaussian noise, linear load drift and A/D
//! quantization applied to the true actuator position and load.
//!
//! Noise comes from two ChaCha20 streams (stream 1 for displacement,
//! stream 2 for load) keyed by the run seed, mapped to standard normals with
//! the `rand_distr` ziggurat sampler. Draws happen on every sample whether or
//! not noise is enabled, so toggling noise never shifts the other channel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    /// Actuator position sensor resolution (m); 0 is ideal.
    pub displacement_resolution: f64,
    /// Load cell resolution (N); 0 is ideal.
    pub load_resolution: f64,
    pub noise_sd_displacement: f64,
    pub noise_sd_load: f64,
    /// Thermal drift of the load reading (N/s).
    pub drift_rate_load: f64,
    pub quantization: bool,
    pub noise: bool,
    pub drift: bool,
    /// Enclosure temperature recorded with each sample (°C).
    pub ambient_temperature: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            displacement_resolution: 0.1e-6,
            load_resolution: 0.1e-3,
            noise_sd_displacement: 0.0,
            noise_sd_load: 0.0,
            drift_rate_load: 0.0,
            quantization: true,
            noise: false,
            drift: false,
            ambient_temperature: 23.0,
        }
    }
}

impl SensorSpec {
    /// Every effect switched off: readings equal the true values.
    pub fn ideal() -> Self {
        Self {
            quantization: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("displacement resolution", self.displacement_resolution),
            ("load resolution", self.load_resolution),
            ("displacement noise SD", self.noise_sd_displacement),
            ("load noise SD", self.noise_sd_load),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !self.drift_rate_load.is_finite() {
            return Err(Error::Config("load drift rate must be finite".into()));
        }
        Ok(())
    }
}

/// Rounds `value` to the nearest multiple of `resolution`, ties to the even multiple.
pub fn quantize(value: f64, resolution: f64) -> f64 {
    if resolution == 0.0 {
        return value;
    }
    (value / resolution).round_ties_even() * resolution
}

/// Per-run random streams for the two channels.
#[derive(Debug, Clone)]
pub struct SensorNoise {
    displacement: ChaCha20Rng,
    load: ChaCha20Rng,
}

impl SensorNoise {
    pub fn new(seed: u64) -> Self {
        let mut displacement = ChaCha20Rng::seed_from_u64(seed);
        displacement.set_stream(1);
        let mut load = ChaCha20Rng::seed_from_u64(seed);
        load.set_stream(2);
        Self { displacement, load }
    }

    fn draw(&mut self) -> (f64, f64) {
        (
            self.displacement.sample(StandardNormal),
            self.load.sample(StandardNormal),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub displacement: f64,
    pub force: f64,
}

pub fn measure(spec: &SensorSpec, true_u: f64, true_force: f64, time: f64, noise: &mut SensorNoise) -> Reading {
    let (z_u, z_f) = noise.draw();
    let mut u = true_u;
    let mut f = true_force;
    if spec.noise {
        u += spec.noise_sd_displacement * z_u;
        f += spec.noise_sd_load * z_f;
    }
    if spec.drift {
        f += spec.drift_rate_load * time;
    }
    if spec.quantization {
        u = quantize(u, spec.displacement_resolution);
        f = quantize(f, spec.load_resolution);
    }
    Reading {
        displacement: u,
        force: f,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn quantize_examples() {
        assert_relative_eq!(quantize(2.857e-3, 0.1e-3), 2.9e-3, max_relative = 1e-12);
        assert_eq!(quantize(1.234_567, 0.0), 1.234_567);
        assert_relative_eq!(quantize(0.25e-6, 0.1e-6), 0.2e-6, max_relative = 1e-12);
        assert_relative_eq!(quantize(0.35e-6, 0.1e-6), 0.4e-6, max_relative = 1e-12);
        assert_relative_eq!(quantize(-0.25e-6, 0.1e-6), -0.2e-6, max_relative = 1e-12);
    }

    #[test]
    fn all_effects_off_is_identity() {
        let mut noise = SensorNoise::new(3);
        let spec = SensorSpec {
            noise_sd_displacement: 1.0,
            noise_sd_load: 1.0,
            drift_rate_load: 1.0,
            ..SensorSpec::ideal()
        };
        let r = measure(&spec, 1.234e-6, 2.857e-3, 50.0, &mut noise);
        assert_eq!(r.displacement, 1.234e-6);
        assert_eq!(r.force, 2.857e-3);
    }

    #[test]
    fn drift_adds_linear_offset() {
        let spec = SensorSpec {
            drift: true,
            drift_rate_load: 1e-6,
            ..SensorSpec::ideal()
        };
        let r = measure(&spec, 0.0, 2e-3, 100.0, &mut SensorNoise::new(0));
        assert_relative_eq!(r.force, 2e-3 + 1e-4, max_relative = 1e-12);
        assert_eq!(r.displacement, 0.0);
    }

    #[test]
    fn same_seed_same_readings() {
        let spec = SensorSpec {
            noise: true,
            noise_sd_displacement: 1e-8,
            noise_sd_load: 1e-5,
            ..SensorSpec::default()
        };
        let run = |seed| {
            let mut noise = SensorNoise::new(seed);
            (0..200)
                .map(|k| measure(&spec, k as f64 * 1e-8, k as f64 * 1e-5, k as f64 * 0.1, &mut noise))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn channels_use_independent_streams() {
        let mut noise = SensorNoise::new(9);
        let (a, b): (Vec<f64>, Vec<f64>) = (0..1000).map(|_| noise.draw()).unzip();
        let corr: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / 1000.0;
        assert!(corr.abs() < 0.1);
    }

    #[test]
    fn noise_standard_deviation_matches_configuration() {
        let spec = SensorSpec {
            noise: true,
            noise_sd_displacement: 2e-8,
            noise_sd_load: 5e-5,
            ..SensorSpec::ideal()
        };
        let mut noise = SensorNoise::new(2024);
        let n = 100_000;
        let mut du = Vec::with_capacity(n);
        let mut df = Vec::with_capacity(n);
        for _ in 0..n {
            let r = measure(&spec, 1e-6, 1e-3, 0.0, &mut noise);
            du.push(r.displacement - 1e-6);
            df.push(r.force - 1e-3);
        }
        let sd = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        assert!((sd(&du) / 2e-8 - 1.0).abs() < 0.03);
        assert!((sd(&df) / 5e-5 - 1.0).abs() < 0.03);
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent_and_bounded(x in -1e-3..1e-3f64, r in 1e-9..1e-4f64) {
            let q = quantize(x, r);
            prop_assert_eq!(quantize(q, r), q);
            prop_assert!((q - x).abs() <= r / 2.0 * (1.0 + 1e-12));
        }
    }
}
