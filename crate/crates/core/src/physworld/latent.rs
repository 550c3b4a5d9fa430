use super::types::next_pow2;
use super::{BallState, PhysStateSeq, WorldConfig, FIELDS_PER_BALL};
use crate::diffengine::Tensor;

/// Per-frame physics latent, `T × 6K`, one token per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysLatentSeq {
    pub values: Tensor,
    /// Number of entries that fell outside `[-1, 1]` and were clamped.
    pub clamped: usize,
}

/// Source of physics latents. The oracle below reads simulator state; a
/// learned frozen encoder can implement the same trait.
pub trait PhysicsEncoder {
    fn latent_dim(&self) -> usize;
    fn encode(&self, states: &PhysStateSeq) -> PhysLatentSeq;
    fn decode(&self, latent: &Tensor) -> PhysStateSeq;
}

/// Affine per-field normalisation. Every scale is a power of two and every
/// offset is half an extent, so recorded (`f32`-valued) states round-trip
/// bit-exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatentScale {
    pub center_x: f64,
    pub scale_x: f64,
    pub center_y: f64,
    pub scale_y: f64,
    pub velocity: f64,
    pub radius: f64,
}

impl LatentScale {
    pub fn new(config: &WorldConfig) -> Self {
        let w = config.width as f64;
        let h = config.height as f64;
        Self {
            center_x: w / 2.0,
            scale_x: next_pow2(w / 2.0),
            center_y: h / 2.0,
            scale_y: next_pow2(h / 2.0),
            velocity: config.velocity_scale(),
            radius: next_pow2(config.height.min(config.width) as f64 / 8.0),
        }
    }

    fn encode_ball(&self, b: &BallState) -> [f64; FIELDS_PER_BALL] {
        if !b.active {
            return [0.0, 0.0, 0.0, 0.0, 0.0, -1.0];
        }
        [
            (b.x - self.center_x) / self.scale_x,
            (b.y - self.center_y) / self.scale_y,
            b.vx / self.velocity,
            b.vy / self.velocity,
            (b.radius - self.radius) / self.radius,
            1.0,
        ]
    }

    fn decode_ball(&self, z: &[f64]) -> BallState {
        if z[5] < 0.0 {
            return BallState::INACTIVE;
        }
        BallState::new(
            z[0] * self.scale_x + self.center_x,
            z[1] * self.scale_y + self.center_y,
            z[2] * self.velocity,
            z[3] * self.velocity,
            z[4] * self.radius + self.radius,
        )
    }
}

#[derive(Clone, Debug)]
pub struct OracleEncoder {
    scale: LatentScale,
    balls: usize,
}

impl OracleEncoder {
    pub fn new(config: &WorldConfig) -> Self {
        Self {
            scale: LatentScale::new(config),
            balls: config.balls,
        }
    }

    pub fn scale(&self) -> &LatentScale {
        &self.scale
    }
}

impl PhysicsEncoder for OracleEncoder {
    fn latent_dim(&self) -> usize {
        self.balls * FIELDS_PER_BALL
    }

    fn encode(&self, states: &PhysStateSeq) -> PhysLatentSeq {
        let dim = states.balls() * FIELDS_PER_BALL;
        let mut data = Vec::with_capacity(states.len() * dim);
        let mut clamped = 0;
        for frame in states.frames() {
            for b in frame {
                for v in self.scale.encode_ball(b) {
                    if v.abs() > 1.0 {
                        clamped += 1;
                    }
                    data.push(v.clamp(-1.0, 1.0));
                }
            }
        }
        PhysLatentSeq {
            values: Tensor::matrix(states.len(), dim, data).expect("latent shape"),
            clamped,
        }
    }

    fn decode(&self, latent: &Tensor) -> PhysStateSeq {
        let dim = latent.cols();
        assert_eq!(dim % FIELDS_PER_BALL, 0, "latent width must be a multiple of 6");
        let frames = (0..latent.rows())
            .map(|t| {
                latent
                    .row_slice(t)
                    .chunks(FIELDS_PER_BALL)
                    .map(|z| self.scale.decode_ball(z))
                    .collect()
            })
            .collect();
        PhysStateSeq::new(frames, None).expect("non-empty latent")
    }
}

/// Oracle encoding of `states` under `config`'s bounds and velocity cap.
pub fn encode_physics(states: &PhysStateSeq, config: &WorldConfig) -> PhysLatentSeq {
    OracleEncoder::new(config).encode(states)
}

/// Exact inverse of [`encode_physics`] for unclamped latents.
pub fn decode_physics(latent: &Tensor, config: &WorldConfig) -> PhysStateSeq {
    OracleEncoder::new(config).decode(latent)
}
