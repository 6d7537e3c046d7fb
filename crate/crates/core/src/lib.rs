//! Virtual micro-tensile test bench for thin metal films.
//!
//! A simulated specimen is strained through a compliant load train while a
//! sensor model records actuator position and load. The analysis side reduces
//! such traces (simulated or measured) to modulus, yield and relaxation data.

pub mod analysis;
pub mod cli_io;
pub mod constitutive;
pub mod error;
pub mod loadtrain;
pub mod profile;
pub mod root;
pub mod sensors;
pub mod trace;

pub use error::{Error, Result};
