use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bound, ForwardItem, ModelConfig, ModelError, ModelParams};
use crate::diffengine::{grad_check, Graph, Tensor};
use crate::physworld::ScenarioDescriptor;

/// The tiny configuration used by [`model_grad_check`]: one block, two heads,
/// an 8×8 frame cut into four 4×4 patches, two frames.
pub fn gradcheck_config() -> ModelConfig {
    ModelConfig {
        d: 8,
        depth: 1,
        heads: 2,
        patch: 4,
        height: 8,
        width: 8,
        physics_dim: 6,
        max_tokens: 8,
        mlp_ratio: 2,
        ..Default::default()
    }
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("positive extents")
}

/// Finite-difference check of the full dual forward pass through a joint
/// squared-error loss, with every parameter drawn uniformly from ±0.5 so no
/// zero-initialised head hides a path. The first frame is conditioning (time
/// 0), a force field is present and the descriptor sets every slot. Returns
/// the worst relative error over all parameter coordinates.
pub fn model_grad_check(seed: u64, step: f64) -> Result<f64, ModelError> {
    let cfg = gradcheck_config();
    let mut params = ModelParams::init(&cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    for e in params.entries_mut() {
        for x in e.value.data_mut() {
            *x = rng.random_range(-0.5..0.5);
        }
    }
    let tokens = cfg.tokens_per_frame();
    let v = random(&mut rng, 2 * tokens, cfg.video_dim());
    let z = random(&mut rng, 2, cfg.physics_dim);
    let force = random(&mut rng, 2, tokens);
    let target_v = random(&mut rng, 2 * tokens, cfg.video_dim());
    let target_z = random(&mut rng, 2, cfg.physics_dim);
    let t: f64 = rng.random_range(0.05..0.95);
    let vt: Vec<f64> = (0..2 * tokens).map(|i| if i < tokens { 0.0 } else { t }).collect();
    let zt = [0.0, t];
    let mut slots = [0u16; 8];
    for s in slots.iter_mut() {
        *s = rng.random_range(1..cfg.context_vocab as u16);
    }
    let ctx = ScenarioDescriptor(slots);
    let inputs: Vec<Tensor> = params.entries().iter().map(|e| e.value.clone()).collect();

    let worst = grad_check(
        |g: &mut Graph, vars| {
            let bound = Bound::from_vars(vars.to_vec());
            let item = ForwardItem {
                video: &v,
                physics: &z,
                video_time: &vt,
                physics_time: &zt,
                context: &ctx,
                force: Some(&force),
            };
            let out = params
                .forward(g, &bound, &[item])
                .map_err(|_| crate::diffengine::EngineError::InvalidArgument("forward failed"))?;
            let tv = g.constant(target_v.clone());
            let tz = g.constant(target_z.clone());
            let dv = g.sub(out.video, tv)?;
            let dz = g.sub(out.physics, tz)?;
            let sv = g.mul(dv, dv)?;
            let sz = g.mul(dz, dz)?;
            let lv = g.mean(sv);
            let lz = g.mean(sz);
            let lz = g.scale(lz, 0.7);
            g.add(lv, lz)
        },
        &inputs,
        step,
    )?;
    Ok(worst)
}
