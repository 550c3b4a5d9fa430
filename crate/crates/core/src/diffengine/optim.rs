//! AdamW with decoupled weight decay, linear warmup + cosine decay, and
//! global-norm gradient clipping.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    #[default]
    CosineDecay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_fraction: f64,
    pub schedule: LrSchedule,
    /// Global L2 clipping threshold; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 4e-5,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_fraction: 0.05,
            schedule: LrSchedule::CosineDecay,
            grad_clip: Some(1.0),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate > 0.0) {
            return Err("learning_rate must be positive".into());
        }
        if !(self.weight_decay >= 0.0) {
            return Err("weight_decay must be non-negative".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(format!("{name} must lie in (0, 1)"));
            }
        }
        if !(self.eps > 0.0) {
            return Err("eps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err("warmup_fraction must lie in [0, 1)".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err("grad_clip must be positive".into());
            }
        }
        Ok(())
    }

    /// Learning rate for 1-based `step` out of `total` steps.
    pub fn lr_at(&self, step: u64, total: u64) -> f64 {
        let total = total.max(1);
        let warmup = (self.warmup_fraction * total as f64).ceil() as u64;
        let base = self.learning_rate;
        if warmup > 0 && step <= warmup {
            return base * step as f64 / warmup as f64;
        }
        match self.schedule {
            LrSchedule::CosineDecay => {
                let span = (total - warmup).max(1) as f64;
                let progress = ((step - warmup) as f64 / span).min(1.0);
                base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

/// First and second moment buffers for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One AdamW update of `params` in place. `step` is 1-based.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut Moments,
    cfg: &OptimizerConfig,
    lr: f64,
    step: u64,
) {
    assert_eq!(params.len(), grads.len(), "param/grad length mismatch");
    assert_eq!(params.len(), moments.m.len(), "param/moment length mismatch");
    assert!(step >= 1, "step index is 1-based");
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    let decay = lr * cfg.weight_decay;
    for i in 0..params.len() {
        let g = grads[i];
        let m = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
        moments.m[i] = m;
        moments.v[i] = v;
        let mhat = m / bc1;
        let vhat = v / bc2;
        params[i] -= decay * params[i];
        params[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
    }
}

pub fn global_norm<'a>(grads: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    grads
        .into_iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm measured before clipping.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = global_norm(grads.iter().map(|g| &**g));
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }
    norm
}
