//! Dual-branch versus zero-coupling comparison: per seed, pretrain the video
//! branch, then train the physics side twice from the same weights (with
//! and without cross-attention) and score both on the same held-out clips
//! with the same sampling noise.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::duomodel::{ModelConfig, ModelParams};
use crate::evalkit::MetricsRecord;
use crate::physworld::{generate, DataConfig, WorldConfig};
use crate::pipeline::{clips_from_dataset, evaluate_heldout_clip, PipelineError, SampleConfig};
use crate::trainer::{train_loop_observed, LossRecord, Regime, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub seeds: Vec<u64>,
    /// Video-only steps before the two arms split.
    pub pretrain_steps: u64,
    pub heldout_sequences: usize,
    /// Data seed for the held-out clips. Record seeds are `seed ^ index`, so
    /// this must differ from the training seed in bits above the index range.
    pub heldout_seed: u64,
    /// Conditioning frames at evaluation; `None` means `T/3`.
    pub cond_frames: Option<usize>,
    pub tau: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            pretrain_steps: 2000,
            heldout_sequences: 64,
            heldout_seed: 0x5eed_0000_0000,
            cond_frames: None,
            tau: crate::evalkit::DEFAULT_TAU,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    Dual,
    ZeroCoupling,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Dual => "dual",
            Arm::ZeroCoupling => "zero-coupling",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmResult {
    pub arm: Arm,
    pub per_clip: Vec<MetricsRecord>,
    pub median_bounce: f64,
    pub median_rmse: f64,
    pub mean: MetricsRecord,
    pub final_l_z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub dual: ArmResult,
    pub zero: ArmResult,
}

impl SeedResult {
    /// Dual strictly better on both median physics errors.
    pub fn dual_wins(&self) -> bool {
        self.dual.median_bounce < self.zero.median_bounce && self.dual.median_rmse < self.zero.median_rmse
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub seeds: Vec<SeedResult>,
}

pub const ABLATION_HEADER: &str = "seed,arm,median_bounce_timing_error,median_trajectory_rmse,mean_spatial_iou,mean_spatiotemporal_iou,mean_weighted_spatial_iou,mean_mse,mean_physics_iq,final_l_z,dual_wins";

impl AblationReport {
    pub fn wins(&self) -> usize {
        self.seeds.iter().filter(|s| s.dual_wins()).count()
    }

    /// Dual wins in at least three seeds (or a majority when fewer are run).
    pub fn passes(&self) -> bool {
        let need = if self.seeds.len() >= 5 { 3 } else { self.seeds.len() / 2 + 1 };
        !self.seeds.is_empty() && self.wins() >= need
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{ABLATION_HEADER}\n");
        for r in &self.seeds {
            for a in [&r.dual, &r.zero] {
                let m = &a.mean;
                writeln!(
                    s,
                    "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
                    r.seed,
                    a.arm.name(),
                    a.median_bounce,
                    a.median_rmse,
                    m.spatial_iou,
                    m.spatiotemporal_iou,
                    m.weighted_spatial_iou,
                    m.mse,
                    m.physics_iq,
                    a.final_l_z,
                    r.dual_wins()
                )
                .expect("string write");
            }
        }
        s
    }

    pub fn table(&self) -> String {
        let mut s = String::from(
            "seed | arm           | med bounce | med rmse | mean IoU | mean MSE | phys-IQ | wins\n",
        );
        for r in &self.seeds {
            for a in [&r.dual, &r.zero] {
                writeln!(
                    s,
                    "{:>4} | {:<13} | {:>10.3} | {:>8.4} | {:>8.4} | {:>8.5} | {:>7.2} | {}",
                    r.seed,
                    a.arm.name(),
                    a.median_bounce,
                    a.median_rmse,
                    a.mean.spatial_iou,
                    a.mean.mse,
                    a.mean.physics_iq,
                    if a.arm == Arm::Dual { r.dual_wins().to_string() } else { String::new() }
                )
                .expect("string write");
            }
        }
        writeln!(s, "dual wins {}/{} seeds", self.wins(), self.seeds.len()).expect("string write");
        s
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn tail_mean(log: &[LossRecord], f: impl Fn(&LossRecord) -> f64) -> f64 {
    let tail = &log[log.len().saturating_sub(50)..];
    tail.iter().map(f).sum::<f64>() / tail.len().max(1) as f64
}

/// Progress events emitted by [`run_ablation`].
#[derive(Clone, Debug)]
pub enum AblationEvent<'a> {
    Stage { seed: u64, stage: &'a str },
    Step { seed: u64, stage: &'a str, record: &'a LossRecord },
}

/// Runs the comparison. `train` supplies batch size, optimiser, schedule and
/// the arm step count; its regime, coupling and seed fields are overridden.
pub fn run_ablation(
    world: &WorldConfig,
    data: &DataConfig,
    model: &ModelConfig,
    train: &TrainConfig,
    sample: &SampleConfig,
    cfg: &AblationConfig,
    mut progress: impl FnMut(AblationEvent<'_>),
) -> Result<AblationReport, PipelineError> {
    if cfg.seeds.is_empty() || cfg.heldout_sequences == 0 {
        return Err(PipelineError::Invalid("ablation needs at least one seed and one held-out clip".into()));
    }
    if cfg.heldout_seed == data.seed {
        return Err(PipelineError::Invalid("held-out seed must differ from the training seed".into()));
    }
    let ds = generate(world, data)?;
    let clips = clips_from_dataset(&ds, world, model.patch)?;
    let heldout = DataConfig {
        sequences: cfg.heldout_sequences,
        seed: cfg.heldout_seed,
        ..data.clone()
    };
    let sample = SampleConfig {
        cond_frames: cfg.cond_frames.unwrap_or(data.frames / 3),
        ..sample.clone()
    };

    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let stage_cfg = |regime, zero_coupling, steps| TrainConfig {
            regime,
            zero_coupling,
            steps,
            seed,
            checkpoint_path: None,
            log_path: None,
            ..train.clone()
        };
        progress(AblationEvent::Stage { seed, stage: "pretrain" });
        let pre = train_loop_observed(
            &clips,
            ModelParams::init(model, seed)?,
            &stage_cfg(Regime::VideoPretrain, false, cfg.pretrain_steps),
            |r| progress(AblationEvent::Step { seed, stage: "pretrain", record: r }),
        )?;
        let mut arm = |a: Arm| -> Result<ArmResult, PipelineError> {
            let stage = a.name();
            progress(AblationEvent::Stage { seed, stage });
            let out = train_loop_observed(
                &clips,
                pre.checkpoint.params.clone(),
                &stage_cfg(Regime::FreezeVideo, a == Arm::ZeroCoupling, train.steps),
                |r| progress(AblationEvent::Step { seed, stage, record: r }),
            )?;
            let params = out.checkpoint.params;
            let per_clip = (0..heldout.sequences)
                .map(|i| evaluate_heldout_clip(&params, world, &heldout, i, &sample, cfg.tau))
                .collect::<Result<Vec<_>, _>>()?;
            let bounce: Vec<f64> = per_clip.iter().map(|m| m.bounce_timing_error).collect();
            let rmse: Vec<f64> = per_clip.iter().map(|m| m.trajectory_rmse).collect();
            Ok(ArmResult {
                arm: a,
                median_bounce: median(&bounce),
                median_rmse: median(&rmse),
                mean: MetricsRecord::mean(&per_clip),
                final_l_z: tail_mean(&out.log, |r| r.l_z),
                per_clip,
            })
        };
        let dual = arm(Arm::Dual)?;
        let zero = arm(Arm::ZeroCoupling)?;
        seeds.push(SeedResult { seed, dual, zero });
    }
    Ok(AblationReport { seeds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even_empty() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
