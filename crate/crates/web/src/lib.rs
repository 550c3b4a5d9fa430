//! WebAssembly bindings for the static demo page in `www/`.

use duoflow::diffengine::Tensor;
use duoflow::flowmatch::{sample_path, FlowTime};
use duoflow::physworld::{render, render_force_tensor, simulate, ForceEvent, WorldConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wasm_bindgen::prelude::*;

fn js_err(e: String) -> JsError {
    JsError::new(&e)
}

fn world(size: usize, balls: usize, restitution: f64, gravity: f64, seed: u64) -> WorldConfig {
    WorldConfig {
        balls,
        restitution,
        gravity,
        seed,
        ..WorldConfig::square(size)
    }
}

fn force(apply_frame: usize, x: f64, y: f64, magnitude: f64, angle_deg: f64) -> Option<ForceEvent> {
    (magnitude > 0.0).then_some(ForceEvent {
        apply_frame,
        x,
        y,
        magnitude,
        angle_deg,
        duration: 2,
    })
}

/// Simulates and renders `frames` frames of a `size × size` scene. A force
/// with positive `magnitude` kicks the nearest ball at `apply_frame`.
/// Returns `frames·size·size` intensities, frame-major.
#[allow(clippy::too_many_arguments)]
pub fn simulate_frames(
    size: usize,
    balls: usize,
    restitution: f64,
    gravity: f64,
    seed: u64,
    frames: usize,
    apply_frame: usize,
    x: f64,
    y: f64,
    magnitude: f64,
    angle_deg: f64,
) -> Result<Vec<f32>, String> {
    let cfg = world(size, balls, restitution, gravity, seed);
    let f = force(apply_frame, x, y, magnitude, angle_deg);
    let states = simulate(&cfg, f.as_ref(), frames).map_err(|e| e.to_string())?;
    Ok(render(&states, size, size).data().to_vec())
}

/// The force channel for the same parameters: a Gaussian blob during the
/// active frames, peak `magnitude / cap`.
#[allow(clippy::too_many_arguments)]
pub fn force_frames(
    size: usize,
    frames: usize,
    apply_frame: usize,
    x: f64,
    y: f64,
    magnitude: f64,
    angle_deg: f64,
    cap: f64,
) -> Vec<f32> {
    match force(apply_frame, x, y, magnitude, angle_deg) {
        Some(f) => render_force_tensor(&f, frames, size, size, cap).data().to_vec(),
        None => vec![0.0; frames * size * size],
    }
}

/// A frame moved along the linear flow path to time `t`: `(1 − t)·frame +
/// t·noise` with standard normal noise drawn from `seed`.
pub fn noised_frame(frame: &[f32], t: f64, seed: u64) -> Result<Vec<f32>, String> {
    if frame.is_empty() {
        return Err("empty frame".into());
    }
    let x1 = Tensor::row(&frame.iter().map(|&v| v as f64).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..frame.len()).map(|_| rng.sample(StandardNormal)).collect();
    let x0 = Tensor::row(&noise);
    let t = FlowTime::new(t).map_err(|e| e.to_string())?;
    let xt = sample_path(&x1, &x0, t).map_err(|e| e.to_string())?;
    Ok(xt.data().iter().map(|&v| v as f32).collect())
}

#[wasm_bindgen(js_name = simulateFrames)]
#[allow(clippy::too_many_arguments)]
pub fn simulate_frames_js(
    size: usize,
    balls: usize,
    restitution: f64,
    gravity: f64,
    seed: u32,
    frames: usize,
    apply_frame: usize,
    x: f64,
    y: f64,
    magnitude: f64,
    angle_deg: f64,
) -> Result<Vec<f32>, JsError> {
    simulate_frames(size, balls, restitution, gravity, seed as u64, frames, apply_frame, x, y, magnitude, angle_deg)
        .map_err(js_err)
}

#[wasm_bindgen(js_name = forceFrames)]
#[allow(clippy::too_many_arguments)]
pub fn force_frames_js(
    size: usize,
    frames: usize,
    apply_frame: usize,
    x: f64,
    y: f64,
    magnitude: f64,
    angle_deg: f64,
    cap: f64,
) -> Vec<f32> {
    force_frames(size, frames, apply_frame, x, y, magnitude, angle_deg, cap)
}

#[wasm_bindgen(js_name = noisedFrame)]
pub fn noised_frame_js(frame: &[f32], t: f64, seed: u32) -> Result<Vec<f32>, JsError> {
    noised_frame(frame, t, seed as u64).map_err(js_err)
}
