use serde::{Deserialize, Serialize};

/// Settings of the physics-loss weight ramp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub alpha_max: f64,
    /// Steps from a reset to full weight.
    pub ramp_steps: u64,
    /// Physics gradient norm above which the ramp restarts.
    pub eta_z: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            alpha_max: 1.0,
            ramp_steps: 500,
            eta_z: 1.0,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha_max > 0.0) {
            return Err("alpha_max must be positive".into());
        }
        if self.ramp_steps == 0 {
            return Err("ramp_steps must be positive".into());
        }
        if !(self.eta_z > 0.0) {
            return Err("eta_z must be positive".into());
        }
        Ok(())
    }
}

/// Linear ramp of `alpha_z` from 0 to `alpha_max` over `ramp_steps`,
/// restarted whenever the physics gradient norm exceeds `eta_z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub alpha_z: f64,
    pub alpha_max: f64,
    pub ramp_steps: u64,
    pub eta_z: f64,
    pub last_reset: u64,
    pub reset_count: u64,
}

impl ScheduleState {
    pub fn new(cfg: &ScheduleConfig) -> Self {
        Self {
            alpha_z: 0.0,
            alpha_max: cfg.alpha_max,
            ramp_steps: cfg.ramp_steps,
            eta_z: cfg.eta_z,
            last_reset: 0,
            reset_count: 0,
        }
    }

    /// Ramp value at `step` with the current reset point.
    pub fn alpha_at(&self, step: u64) -> f64 {
        ramp(self.alpha_max, self.ramp_steps, step.saturating_sub(self.last_reset))
    }
}

pub(crate) fn ramp(alpha_max: f64, ramp_steps: u64, since: u64) -> f64 {
    alpha_max * (since as f64 / ramp_steps as f64).min(1.0)
}

/// Advances the schedule after observing `grad_norm_z` at `step`.
pub fn schedule_step(state: &ScheduleState, grad_norm_z: f64, step: u64) -> ScheduleState {
    let mut next = state.clone();
    if grad_norm_z > state.eta_z {
        next.last_reset = step;
        next.reset_count += 1;
        next.alpha_z = 0.0;
    } else {
        next.alpha_z = next.alpha_at(step);
    }
    next
}
