//! Rydberg-EIT microwave-to-optical transduction: slow-light propagation,
//! Maxwell-Bloch storage and retrieval, interaction dephasing, blackbody
//! noise, photon statistics, fitting and calibration.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod config;
pub mod constants;
pub mod cpt;
pub mod dephasing;
pub mod error;
pub mod experiments;
pub mod fitting;
pub mod solver;
pub mod spectral;
pub mod stats;
pub mod thermal;

pub use config::TransducerConfig;
pub use error::{Error, Result};
