use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BallState, ForceEvent, PhysStateSeq, WorldConfig, WorldError};

/// Distance from the force point within which a ball receives the impulse,
/// measured beyond its radius.
pub const FORCE_REACH: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wall {
    Left,
    Right,
    Top,
    Floor,
}

/// One wall impact, recorded at sub-step resolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Impact {
    /// Frame being produced when the impact happened (1-based output frame).
    pub frame: usize,
    pub ball: usize,
    pub wall: Wall,
    pub normal_speed_before: f64,
    pub normal_speed_after: f64,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub states: PhysStateSeq,
    pub impacts: Vec<Impact>,
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    range[0] + (range[1] - range[0]) * rng.random::<f64>()
}

fn overlapping(balls: &[BallState]) -> bool {
    for i in 0..balls.len() {
        for j in i + 1..balls.len() {
            let (a, b) = (&balls[i], &balls[j]);
            if !(a.active && b.active) {
                continue;
            }
            let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
            if d < a.radius + b.radius {
                return true;
            }
        }
    }
    false
}

/// Samples `config.balls` non-overlapping initial states from `config.seed`.
pub fn initial_state(config: &WorldConfig) -> Result<Vec<BallState>, WorldError> {
    config.validate()?;
    const ATTEMPTS: usize = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (h, w) = (config.height as f64, config.width as f64);
    for _ in 0..ATTEMPTS {
        let balls: Vec<BallState> = (0..config.balls)
            .map(|_| {
                let r = uniform(&mut rng, config.radius_range);
                let xr = clamp_range(config.init_x, r, w - r);
                let yr = clamp_range(config.init_y, r, h - r);
                let x = uniform(&mut rng, xr);
                let y = uniform(&mut rng, yr);
                let vx = uniform(&mut rng, config.init_vx);
                let vy = uniform(&mut rng, config.init_vy);
                BallState::new(x, y, vx, vy, r)
            })
            .collect();
        if !overlapping(&balls) {
            return Ok(balls);
        }
    }
    Err(WorldError::Overlap)
}

fn clamp_range(r: [f64; 2], lo: f64, hi: f64) -> [f64; 2] {
    let a = r[0].clamp(lo, hi);
    let b = r[1].clamp(lo, hi);
    [a, b.max(a)]
}

/// Simulates `frames` frames from the seeded initial state.
pub fn simulate(
    config: &WorldConfig,
    force: Option<&ForceEvent>,
    frames: usize,
) -> Result<PhysStateSeq, WorldError> {
    let init = initial_state(config)?;
    Ok(simulate_from(config, &init, force, frames)?.states)
}

/// Simulates from explicit initial states, also returning every wall impact.
///
/// Each frame runs `substeps` semi-implicit Euler steps of `dt/substeps`:
/// `v += g·h; x += v·h`, then walls (reflect the inbound normal component
/// scaled by `-restitution` and clamp the centre), then one pass of
/// equal-mass elastic ball-ball exchanges along the centre line. A force
/// impulse for an active frame is applied once, before that frame's first
/// sub-step, to the nearest ball within reach of the force point at the
/// apply frame.
pub fn simulate_from(
    config: &WorldConfig,
    initial: &[BallState],
    force: Option<&ForceEvent>,
    frames: usize,
) -> Result<Simulation, WorldError> {
    config.validate()?;
    if frames < 2 {
        return Err(WorldError::InvalidConfig("simulation needs T >= 2".into()));
    }
    if initial.is_empty() {
        return Err(WorldError::InvalidConfig("no balls".into()));
    }
    if overlapping(initial) {
        return Err(WorldError::Overlap);
    }
    if let Some(f) = force {
        f.validate(frames)?;
    }
    let (h, w) = (config.height as f64, config.width as f64);
    let mut balls: Vec<BallState> = initial.to_vec();
    for b in balls.iter_mut().filter(|b| b.active) {
        b.x = b.x.clamp(b.radius, w - b.radius);
        b.y = b.y.clamp(b.radius, h - b.radius);
    }
    let mut out = Vec::with_capacity(frames);
    out.push(balls.iter().map(BallState::recorded).collect());
    let mut impacts = Vec::new();
    let step = config.dt / config.substeps as f64;
    let e = config.restitution;
    let mut force_target: Option<usize> = None;

    for frame in 0..frames - 1 {
        if let Some(f) = force {
            if frame == f.apply_frame {
                force_target = nearest_within_reach(&balls, f);
            }
            if f.is_active_at(frame) {
                if let Some(i) = force_target {
                    let (dvx, dvy) = f.per_frame_delta();
                    balls[i].vx += dvx;
                    balls[i].vy += dvy;
                }
            }
        }
        for _ in 0..config.substeps {
            for b in balls.iter_mut().filter(|b| b.active) {
                b.vy += config.gravity * step;
                b.x += b.vx * step;
                b.y += b.vy * step;
            }
            for (i, b) in balls.iter_mut().enumerate() {
                if !b.active {
                    continue;
                }
                let mut hit = |wall: Wall, before: f64, after: f64| {
                    impacts.push(Impact {
                        frame: frame + 1,
                        ball: i,
                        wall,
                        normal_speed_before: before,
                        normal_speed_after: after,
                    })
                };
                let r = b.radius;
                if b.x < r {
                    b.x = r;
                    if b.vx < 0.0 {
                        let before = b.vx.abs();
                        b.vx = -e * b.vx;
                        hit(Wall::Left, before, b.vx.abs());
                    }
                } else if b.x > w - r {
                    b.x = w - r;
                    if b.vx > 0.0 {
                        let before = b.vx.abs();
                        b.vx = -e * b.vx;
                        hit(Wall::Right, before, b.vx.abs());
                    }
                }
                if b.y < r {
                    b.y = r;
                    if b.vy < 0.0 {
                        let before = b.vy.abs();
                        b.vy = -e * b.vy;
                        hit(Wall::Top, before, b.vy.abs());
                    }
                } else if b.y > h - r {
                    b.y = h - r;
                    if b.vy > 0.0 {
                        let before = b.vy.abs();
                        b.vy = -e * b.vy;
                        hit(Wall::Floor, before, b.vy.abs());
                    }
                }
            }
            resolve_ball_contacts(&mut balls);
        }
        out.push(balls.iter().map(BallState::recorded).collect());
    }
    Ok(Simulation {
        states: PhysStateSeq::new(out, force.copied())?,
        impacts,
    })
}

fn nearest_within_reach(balls: &[BallState], f: &ForceEvent) -> Option<usize> {
    balls
        .iter()
        .enumerate()
        .filter(|(_, b)| b.active)
        .map(|(i, b)| (i, ((b.x - f.x).powi(2) + (b.y - f.y).powi(2)).sqrt(), b.radius))
        .filter(|&(_, d, r)| d <= r + FORCE_REACH)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _, _)| i)
}

fn resolve_ball_contacts(balls: &mut [BallState]) {
    for i in 0..balls.len() {
        for j in i + 1..balls.len() {
            if !(balls[i].active && balls[j].active) {
                continue;
            }
            let dx = balls[j].x - balls[i].x;
            let dy = balls[j].y - balls[i].y;
            let dist = (dx * dx + dy * dy).sqrt();
            if dist == 0.0 || dist >= balls[i].radius + balls[j].radius {
                continue;
            }
            let (nx, ny) = (dx / dist, dy / dist);
            let vi = balls[i].vx * nx + balls[i].vy * ny;
            let vj = balls[j].vx * nx + balls[j].vy * ny;
            // Only exchange while approaching along the centre line.
            if vi - vj <= 0.0 {
                continue;
            }
            let dv = vj - vi;
            balls[i].vx += dv * nx;
            balls[i].vy += dv * ny;
            balls[j].vx -= dv * nx;
            balls[j].vy -= dv * ny;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_world() -> WorldConfig {
        WorldConfig {
            gravity: 1.0,
            dt: 1.0,
            substeps: 1,
            height: 400,
            width: 400,
            radius_range: [1.0, 1.0],
            ..Default::default()
        }
    }

    #[test]
    fn static_world_is_constant() {
        let cfg = WorldConfig {
            gravity: 0.0,
            ..Default::default()
        };
        let init = [BallState::new(10.0, 12.0, 0.0, 0.0, 3.0)];
        let sim = simulate_from(&cfg, &init, None, 20).unwrap();
        for t in 0..20 {
            assert_eq!(sim.states.frame(t), sim.states.frame(0));
        }
    }

    #[test]
    fn semi_implicit_update_by_hand() {
        let cfg = open_world();
        let y0 = 10.0;
        let init = [BallState::new(50.0, y0, 0.0, 0.0, 1.0)];
        let s = simulate_from(&cfg, &init, None, 4).unwrap().states;
        assert_eq!(s.frame(3)[0].vy, 3.0);
        let ys: Vec<f64> = (1..4).map(|t| s.frame(t)[0].y - y0).collect();
        assert_eq!(ys, vec![1.0, 3.0, 6.0]);
    }

    #[test]
    fn floor_reflection_scales_by_restitution() {
        let cfg = WorldConfig {
            gravity: 0.0,
            restitution: 0.5,
            dt: 1.0,
            substeps: 1,
            height: 40,
            width: 40,
            radius_range: [2.0, 2.0],
            ..Default::default()
        };
        let init = [BallState::new(20.0, 36.0, 0.0, 4.0, 2.0)];
        let sim = simulate_from(&cfg, &init, None, 2).unwrap();
        let b = sim.states.frame(1)[0];
        assert_eq!(b.vy, -2.0);
        assert_eq!(b.y, 38.0);
        assert_eq!(sim.impacts.len(), 1);
        assert_eq!(sim.impacts[0].wall, Wall::Floor);
    }

    #[test]
    fn overlapping_start_is_rejected() {
        let cfg = WorldConfig::default();
        let init = [
            BallState::new(10.0, 10.0, 0.0, 0.0, 3.0),
            BallState::new(12.0, 10.0, 0.0, 0.0, 3.0),
        ];
        assert!(matches!(
            simulate_from(&cfg, &init, None, 3),
            Err(WorldError::Overlap)
        ));
    }

    #[test]
    fn rejects_short_sequences() {
        let cfg = WorldConfig::default();
        assert!(simulate(&cfg, None, 1).is_err());
    }

    #[test]
    fn head_on_collision_swaps_velocities() {
        let cfg = WorldConfig {
            gravity: 0.0,
            restitution: 1.0,
            dt: 0.1,
            substeps: 1,
            height: 40,
            width: 40,
            balls: 2,
            radius_range: [2.0, 2.0],
            ..Default::default()
        };
        let init = [
            BallState::new(15.0, 20.0, 10.0, 0.0, 2.0),
            BallState::new(20.0, 20.0, -10.0, 0.0, 2.0),
        ];
        let s = simulate_from(&cfg, &init, None, 4).unwrap().states;
        let last = s.frame(3);
        assert_eq!(last[0].vx, -10.0);
        assert_eq!(last[1].vx, 10.0);
    }

    #[test]
    fn force_kicks_nearest_ball() {
        let cfg = WorldConfig {
            gravity: 0.0,
            substeps: 1,
            ..Default::default()
        };
        let init = [BallState::new(16.0, 16.0, 0.0, 0.0, 3.0)];
        let force = ForceEvent {
            apply_frame: 1,
            x: 16.0,
            y: 16.0,
            magnitude: 8.0,
            angle_deg: 90.0,
            duration: 2,
        };
        let s = simulate_from(&cfg, &init, Some(&force), 5).unwrap().states;
        assert_eq!(s.frame(1)[0].vy, 0.0);
        // Two frames of -4 px/s each, straight up.
        assert!((s.frame(3)[0].vy + 8.0).abs() < 1e-6);
        assert!(s.frame(3)[0].vx.abs() < 1e-6);
        assert_eq!(s.force, Some(force));
    }

    #[test]
    fn seeded_initial_state_is_inside_and_deterministic() {
        let cfg = WorldConfig {
            balls: 3,
            seed: 7,
            ..Default::default()
        };
        let a = initial_state(&cfg).unwrap();
        let b = initial_state(&cfg).unwrap();
        assert_eq!(a, b);
        for ball in &a {
            assert!(ball.x >= ball.radius && ball.x <= 32.0 - ball.radius);
            assert!(ball.y >= ball.radius && ball.y <= 32.0 - ball.radius);
        }
    }
}
