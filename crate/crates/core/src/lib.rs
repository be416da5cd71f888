//! Adaptive political questionnaire engine: latent-space model, uncertainty
//! driven question selection, synthetic pre-training data and the simulation
//! harness used to evaluate cold-start mitigation.

pub mod error;
pub mod latent;
pub mod metrics;
pub mod planted;
pub mod seed;
pub mod selection;
pub mod simulation;
pub mod survey;
pub mod synthetic;

pub use error::{Error, Result};
