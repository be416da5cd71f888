use std::path::PathBuf;
use std::time::Duration;

use adaptive_survey_core::latent::DEFAULT_RESOLUTION;
use adaptive_survey_core::metrics::DEFAULT_K_NEIGHBOURS;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const MIN_SESSION_K: usize = 5;
pub const MAX_SESSION_K: usize = 75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Questions per session before it completes on its own.
    pub session_k: usize,
    /// Closed sessions per refit.
    pub u: usize,
    /// Synthetic training rows removed per closed session.
    pub gamma: f64,
    pub abandon_after_secs: u64,
    /// A refit pending longer than this marks the service degraded.
    pub staleness_budget_secs: u64,
    /// Recommendations returned along with each answer.
    pub preview: usize,
    pub k_neighbours: usize,
    pub grid_resolution: usize,
    pub seed: u64,
    /// Origin allowed by CORS; `None` allows any origin.
    pub cors_origin: Option<String>,
    /// Where the event log and model snapshot live; `None` keeps everything in memory.
    pub state_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            session_k: 30,
            u: 5,
            gamma: 0.0,
            abandon_after_secs: 30 * 60,
            staleness_budget_secs: 60,
            preview: 5,
            k_neighbours: DEFAULT_K_NEIGHBOURS,
            grid_resolution: DEFAULT_RESOLUTION,
            seed: 0,
            cors_origin: None,
            state_dir: None,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        let fail = |m: String| Err(ServiceError::Config(m));
        if !(MIN_SESSION_K..=MAX_SESSION_K).contains(&self.session_k) {
            return fail(format!("session_k must be in {MIN_SESSION_K}..={MAX_SESSION_K}, got {}", self.session_k));
        }
        if self.u == 0 {
            return fail("u must be at least 1".into());
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be a finite value >= 0, got {}", self.gamma));
        }
        if self.k_neighbours == 0 || self.preview == 0 {
            return fail("k_neighbours and preview must be at least 1".into());
        }
        if self.grid_resolution < 3 {
            return fail("grid_resolution must be at least 3".into());
        }
        Ok(())
    }

    pub fn abandon_after(&self) -> Duration {
        Duration::from_secs(self.abandon_after_secs)
    }

    pub fn staleness_budget(&self) -> Duration {
        Duration::from_secs(self.staleness_budget_secs)
    }
}
