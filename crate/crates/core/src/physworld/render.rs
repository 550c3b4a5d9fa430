use super::{BallState, ForceEvent, FrameSeq, PhysStateSeq};

/// Standard deviation of the force-tensor blob in pixels.
pub const FORCE_SIGMA: f64 = 2.0;

/// Coverage of pixel centre `(col, row)` by a disc: 1 inside `r - 0.5`,
/// 0 beyond `r + 0.5`, linear in between.
fn disc_coverage(ball: &BallState, col: usize, row: usize) -> f64 {
    let dx = col as f64 - ball.x;
    let dy = row as f64 - ball.y;
    let d = (dx * dx + dy * dy).sqrt();
    (ball.radius + 0.5 - d).clamp(0.0, 1.0)
}

pub fn render_frame(balls: &[BallState], height: usize, width: usize, out: &mut [f32]) {
    debug_assert_eq!(out.len(), height * width);
    out.fill(0.0);
    for b in balls.iter().filter(|b| b.active) {
        let reach = b.radius + 1.0;
        let r0 = (b.y - reach).floor().max(0.0) as usize;
        let r1 = ((b.y + reach).ceil() as usize).min(height - 1);
        let c0 = (b.x - reach).floor().max(0.0) as usize;
        let c1 = ((b.x + reach).ceil() as usize).min(width - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let v = disc_coverage(b, col, row) as f32;
                let px = &mut out[row * width + col];
                *px = px.max(v);
            }
        }
    }
}

/// Anti-aliased discs on a black background; pixel `(row, col)` has its
/// centre at `(x = col, y = row)`. Overlaps take the maximum.
pub fn render(states: &PhysStateSeq, height: usize, width: usize) -> FrameSeq {
    let mut frames = FrameSeq::zeros(states.len(), height, width);
    for t in 0..states.len() {
        render_frame(states.frame(t), height, width, frames.frame_mut(t));
    }
    frames
}

/// Gaussian blob at the force point during the active frames, peak equal to
/// `magnitude / magnitude_cap`.
pub fn render_force_tensor(
    force: &ForceEvent,
    frames: usize,
    height: usize,
    width: usize,
    magnitude_cap: f64,
) -> FrameSeq {
    let mut out = FrameSeq::zeros(frames, height, width);
    let peak = if magnitude_cap > 0.0 {
        force.magnitude / magnitude_cap
    } else {
        0.0
    };
    if peak == 0.0 {
        return out;
    }
    let two_var = 2.0 * FORCE_SIGMA * FORCE_SIGMA;
    for t in (0..frames).filter(|&t| force.is_active_at(t)) {
        let frame = out.frame_mut(t);
        for row in 0..height {
            for col in 0..width {
                let dx = col as f64 - force.x;
                let dy = row as f64 - force.y;
                frame[row * width + col] = (peak * (-(dx * dx + dy * dy) / two_var).exp()) as f32;
            }
        }
    }
    out
}
