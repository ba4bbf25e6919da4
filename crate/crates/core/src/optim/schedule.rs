use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    /// `η₀ (1 + k)^{-1/2}`
    InvSqrt,
    /// `η₀ (1 + K)^{-1/2}` for a fixed horizon `K`.
    HorizonScaled { horizon: usize },
    /// `η₀ / factor^⌊epoch / every⌋`
    EpochDecay { decay_factor: f64, decay_every: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub kind: ScheduleKind,
    pub eta0: f64,
}

impl StepSchedule {
    pub fn new(kind: ScheduleKind, eta0: f64) -> Result<Self> {
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::config("schedule.eta0", format!("must be positive and finite, got {eta0}")));
        }
        if let ScheduleKind::EpochDecay {
            decay_factor,
            decay_every,
        } = kind
        {
            if !(decay_factor >= 1.0 && decay_factor.is_finite()) {
                return Err(Error::config("schedule.decay_factor", format!("must be >= 1, got {decay_factor}")));
            }
            if !(decay_every > 0.0 && decay_every.is_finite()) {
                return Err(Error::config("schedule.decay_every", format!("must be positive, got {decay_every}")));
            }
        }
        Ok(StepSchedule { kind, eta0 })
    }

    pub fn constant(eta0: f64) -> Self {
        Self::new(ScheduleKind::Constant, eta0).expect("valid constant step")
    }

    /// Step for iteration `k` (0-based) at the given epoch.
    pub fn eta(&self, k: usize, epoch: f64) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.eta0,
            ScheduleKind::InvSqrt => self.eta0 / (1.0 + k as f64).sqrt(),
            ScheduleKind::HorizonScaled { horizon } => self.eta0 / (1.0 + horizon as f64).sqrt(),
            ScheduleKind::EpochDecay {
                decay_factor,
                decay_every,
            } => {
                let drops = (epoch / decay_every).floor();
                self.eta0 / decay_factor.powf(drops)
            }
        }
    }
}
