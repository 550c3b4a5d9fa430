use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::log::LOG_HEADER;
use super::loss::{grad_norm_physics, masked_mse_var};
use super::schedule::{schedule_step, ScheduleConfig, ScheduleState};
use super::{LossRecord, TrainError};
use crate::diffengine::{adamw_step, clip_global_norm, Graph, Moments, OptimizerConfig, Tensor};
use crate::duomodel::{Checkpoint, ForwardItem, ModelParams, OptimizerState, Partition};
use crate::flowmatch::{make_training_batch, CondPolicy, FlowSample, LatentClip};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Every partition trains on `L_v + alpha_z·L_z`.
    #[default]
    Joint,
    /// Video branch and shared conditioning alone, on `L_v`.
    VideoPretrain,
    /// Video branch and shared conditioning frozen; physics branch and
    /// cross-attention train.
    FreezeVideo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Records per autodiff graph; gradients are summed over graphs.
    pub micro_batch: usize,
    pub steps: u64,
    pub optimizer: OptimizerConfig,
    pub schedule: ScheduleConfig,
    pub regime: Regime,
    /// Zero and freeze all cross-attention weights.
    pub zero_coupling: bool,
    pub cond: CondPolicy,
    pub seed: u64,
    #[serde(skip)]
    pub checkpoint_path: Option<PathBuf>,
    #[serde(skip)]
    pub log_path: Option<PathBuf>,
    /// Checkpoint interval in steps; 0 saves only at the end.
    pub eval_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            micro_batch: 4,
            steps: 5000,
            optimizer: OptimizerConfig::default(),
            schedule: ScheduleConfig::default(),
            regime: Regime::Joint,
            zero_coupling: false,
            cond: CondPolicy::default(),
            seed: 0,
            checkpoint_path: None,
            log_path: None,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.batch_size == 0 || self.micro_batch == 0 {
            return bad("batch_size and micro_batch must be positive".into());
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.cond.none_prob) {
            return bad("cond.none_prob must lie in [0, 1]".into());
        }
        self.optimizer.validate().map_err(TrainError::InvalidConfig)?;
        self.schedule.validate().map_err(TrainError::InvalidConfig)
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LossRecord>,
    pub schedule: ScheduleState,
}

/// Sets freeze flags (and zeroes cross-attention when asked) for a regime.
pub fn apply_regime(params: &mut ModelParams, regime: Regime, zero_coupling: bool) {
    for p in Partition::ALL {
        params.set_frozen(p, false);
    }
    match regime {
        Regime::Joint => {}
        Regime::VideoPretrain => {
            params.set_frozen(Partition::Physics, true);
            params.set_frozen(Partition::Cross, true);
        }
        Regime::FreezeVideo => {
            params.set_frozen(Partition::Video, true);
            params.set_frozen(Partition::Shared, true);
        }
    }
    if zero_coupling {
        params.zero_cross();
        params.set_frozen(Partition::Cross, true);
    }
}

fn check_dataset(params: &ModelParams, data: &[LatentClip]) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let cfg = params.config();
    for (i, c) in data.iter().enumerate() {
        let ok = c.video.cols() == cfg.video_dim()
            && c.physics.cols() == cfg.physics_dim
            && c.tokens_per_frame == cfg.tokens_per_frame()
            && c.video.rows() == c.frames() * c.tokens_per_frame
            && c.force.as_ref().is_none_or(|f| f.cols() == cfg.tokens_per_frame());
        if !ok {
            return Err(TrainError::Shape(format!("clip {i} does not fit the model configuration")));
        }
    }
    Ok(())
}

fn row_mask(cond: &[bool], cols: usize) -> Tensor {
    let data = cond
        .iter()
        .flat_map(|&m| std::iter::repeat_n(if m { 0.0 } else { 1.0 }, cols))
        .collect();
    Tensor::matrix(cond.len(), cols, data).expect("mask shape")
}

fn stack(parts: impl Iterator<Item = Tensor>) -> Tensor {
    let parts: Vec<Tensor> = parts.collect();
    let cols = parts[0].cols();
    let data: Vec<f64> = parts.into_iter().flat_map(|t| t.into_data()).collect();
    Tensor::matrix(data.len() / cols, cols, data).expect("stack shape")
}

/// Losses and summed gradients of `L_v + alpha·L_z` over a batch, built one
/// micro-batch graph at a time. Both losses are normalised by batch-wide
/// token counts, so the sum over graphs equals the pooled batch loss.
/// Trainable parameters the batch never touches get zero gradients.
pub fn batch_gradients(
    params: &ModelParams,
    batch: &[FlowSample],
    alpha: f64,
    micro_batch: usize,
) -> Result<(f64, f64, Vec<Option<Vec<f64>>>), TrainError> {
    let count = |f: fn(&FlowSample) -> (&[bool], usize)| -> usize {
        batch
            .iter()
            .map(|s| {
                let (m, c) = f(s);
                m.iter().filter(|&&x| !x).count() * c
            })
            .sum()
    };
    let nv = count(|s| (&s.video_cond, s.video.cols()));
    let nz = count(|s| (&s.physics_cond, s.physics.cols()));
    if nv == 0 || nz == 0 {
        return Err(TrainError::NoLossTokens);
    }
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; params.entries().len()];
    let (mut l_v, mut l_z) = (0.0, 0.0);
    for chunk in batch.chunks(micro_batch.max(1)) {
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let items: Vec<ForwardItem> = chunk
            .iter()
            .map(|s| ForwardItem {
                video: &s.video,
                physics: &s.physics,
                video_time: &s.video_time,
                physics_time: &s.physics_time,
                context: &s.context,
                force: s.force.as_ref(),
            })
            .collect();
        let out = params.forward(&mut g, &bound, &items)?;
        let tv = stack(chunk.iter().map(|s| s.video_target.clone()));
        let mv = stack(chunk.iter().map(|s| row_mask(&s.video_cond, s.video.cols())));
        let tz = stack(chunk.iter().map(|s| s.physics_target.clone()));
        let mz = stack(chunk.iter().map(|s| row_mask(&s.physics_cond, s.physics.cols())));
        let lv = masked_mse_var(&mut g, out.video, tv, mv, nv)?;
        let lz = masked_mse_var(&mut g, out.physics, tz, mz, nz)?;
        l_v += g.value(lv).data()[0];
        l_z += g.value(lz).data()[0];
        let total = if alpha == 0.0 {
            lv
        } else {
            let w = g.scale(lz, alpha);
            g.add(lv, w)?
        };
        let mut gr = g.backward(total)?;
        for (slot, &v) in grads.iter_mut().zip(&bound.vars) {
            if gr.get(v).is_none() {
                continue;
            }
            let add = gr.take(v);
            match slot {
                Some(acc) => acc.iter_mut().zip(add).for_each(|(a, b)| *a += b),
                None => *slot = Some(add),
            }
        }
    }
    for (i, slot) in grads.iter_mut().enumerate() {
        if slot.is_none() && params.is_trainable(i) {
            *slot = Some(vec![0.0; params.entries()[i].value.len()]);
        }
    }
    Ok((l_v, l_z, grads))
}

/// Runs `config.steps` optimizer steps over `data` and returns the final
/// parameters, optimizer state and per-step log.
pub fn train_loop(data: &[LatentClip], params: ModelParams, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_loop_observed(data, params, config, |_| {})
}

pub fn train_loop_observed(
    data: &[LatentClip],
    mut params: ModelParams,
    config: &TrainConfig,
    mut observe: impl FnMut(&LossRecord),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    check_dataset(&params, data)?;
    apply_regime(&mut params, config.regime, config.zero_coupling);
    let mut moments: Vec<Moments> = params.entries().iter().map(|e| Moments::zeros(e.value.len())).collect();
    let mut schedule = ScheduleState::new(&config.schedule);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::with_capacity(config.steps as usize);
    let mut log_file = match &config.log_path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| TrainError::io(p, e))?);
            writeln!(w, "{LOG_HEADER}").map_err(|e| TrainError::io(p, e))?;
            Some((p.clone(), w))
        }
        None => None,
    };
    let snapshot = |params: &ModelParams, moments: &[Moments], step: u64| Checkpoint {
        params: params.clone(),
        optimizer: Some(OptimizerState {
            step,
            moments: moments.to_vec(),
        }),
    };
    let ramped = config.regime != Regime::VideoPretrain;

    for step in 0..config.steps {
        let picks: Vec<&LatentClip> = (0..config.batch_size)
            .map(|_| &data[rng.random_range(0..data.len())])
            .collect();
        let ks: Vec<usize> = picks.iter().map(|c| config.cond.draw(c.frames(), &mut rng)).collect();
        let batch = make_training_batch(&picks, &ks, &mut rng)?;

        let alpha_pre = if ramped { schedule.alpha_at(step) } else { 0.0 };
        let (l_v, l_z, mut grads) = batch_gradients(&params, &batch, alpha_pre, config.micro_batch)?;
        if !l_v.is_finite() || !l_z.is_finite() {
            if let Some(path) = &config.checkpoint_path {
                snapshot(&params, &moments, step).save(path)?;
            }
            return Err(TrainError::NonFinite { step });
        }
        let grad_norm_z = grad_norm_physics(&params, &grads)?;
        let alpha = if ramped {
            schedule = schedule_step(&schedule, grad_norm_z, step);
            if schedule.alpha_z != alpha_pre {
                grads = batch_gradients(&params, &batch, schedule.alpha_z, config.micro_batch)?.2;
            }
            schedule.alpha_z
        } else {
            0.0
        };

        if let Some(max) = config.optimizer.grad_clip {
            let mut views: Vec<&mut [f64]> = grads.iter_mut().flatten().map(|g| g.as_mut_slice()).collect();
            clip_global_norm(&mut views, max);
        }
        let lr = config.optimizer.lr_at(step + 1, config.steps);
        for i in 0..params.entries().len() {
            if !params.is_trainable(i) {
                continue;
            }
            let n = params.entries()[i].value.len();
            let g = grads[i].take().unwrap_or_else(|| vec![0.0; n]);
            let p = params.entries_mut()[i].value.data_mut();
            adamw_step(p, &g, &mut moments[i], &config.optimizer, lr, step + 1);
        }

        let rec = LossRecord {
            step,
            l_v,
            l_z,
            l_total: l_v + alpha * l_z,
            alpha_z: alpha,
            grad_norm_z,
            reset_count: schedule.reset_count,
        };
        if let Some((p, w)) = log_file.as_mut() {
            writeln!(w, "{}", rec.csv_row()).map_err(|e| TrainError::io(p, e))?;
        }
        observe(&rec);
        log.push(rec);
        if config.eval_every > 0 && (step + 1) % config.eval_every == 0 && step + 1 < config.steps {
            if let Some(path) = &config.checkpoint_path {
                snapshot(&params, &moments, step + 1).save(path)?;
            }
        }
    }
    if let Some((p, mut w)) = log_file {
        w.flush().map_err(|e| TrainError::io(&p, e))?;
    }
    let checkpoint = snapshot(&params, &moments, config.steps);
    if let Some(path) = &config.checkpoint_path {
        checkpoint.save(path)?;
    }
    Ok(TrainOutcome {
        checkpoint,
        log,
        schedule,
    })
}
