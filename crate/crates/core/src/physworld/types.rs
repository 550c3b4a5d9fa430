use serde::{Deserialize, Serialize};

use super::WorldError;

/// Scene parameters plus the seeded distribution of initial ball states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Downward acceleration in px/s².
    pub gravity: f64,
    pub restitution: f64,
    /// Seconds per frame.
    pub dt: f64,
    /// Integrator sub-steps per frame.
    pub substeps: u32,
    pub height: usize,
    pub width: usize,
    pub balls: usize,
    pub radius_range: [f64; 2],
    pub init_x: [f64; 2],
    pub init_y: [f64; 2],
    pub init_vx: [f64; 2],
    pub init_vy: [f64; 2],
    /// Velocity normalisation for the physics latent. Derived from gravity
    /// and height when absent.
    pub velocity_cap: Option<f64>,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            gravity: 40.0,
            restitution: 0.8,
            dt: 1.0 / 16.0,
            substeps: 32,
            height: 32,
            width: 32,
            balls: 1,
            radius_range: [2.5, 4.0],
            init_x: [0.0, 32.0],
            init_y: [0.0, 16.0],
            init_vx: [-20.0, 20.0],
            init_vy: [-10.0, 10.0],
            velocity_cap: None,
            seed: 0,
        }
    }
}

pub const MAX_BALLS: usize = 3;

impl WorldConfig {
    /// The default scene rescaled to a `size × size` frame: radii, spawn box
    /// and initial speeds shrink in proportion, gravity is unchanged.
    pub fn square(size: usize) -> Self {
        let s = size as f64 / 32.0;
        let d = Self::default();
        let scale = |r: [f64; 2]| [r[0] * s, r[1] * s];
        Self {
            height: size,
            width: size,
            radius_range: scale(d.radius_range),
            init_x: scale(d.init_x),
            init_y: scale(d.init_y),
            init_vx: scale(d.init_vx),
            init_vy: scale(d.init_vy),
            ..d
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InvalidConfig(m.to_string()));
        if self.height == 0 || self.width == 0 {
            return bad("bounds must be positive");
        }
        if !(1..=MAX_BALLS).contains(&self.balls) {
            return bad("ball count must be 1..=3");
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return bad("gravity must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return bad("restitution must lie in [0, 1]");
        }
        if !(self.dt > 0.0) || self.substeps == 0 {
            return bad("dt and substeps must be positive");
        }
        let [rmin, rmax] = self.radius_range;
        let limit = self.height.min(self.width) as f64 / 4.0;
        if !(rmin >= 1.0 && rmin <= rmax && rmax < limit) {
            return bad("radius range must satisfy 1 <= min <= max < min(H, W)/4");
        }
        for (name, r) in [
            ("init_x", self.init_x),
            ("init_y", self.init_y),
            ("init_vx", self.init_vx),
            ("init_vy", self.init_vy),
        ] {
            if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(WorldError::InvalidConfig(format!("{name} must be an ordered range")));
            }
        }
        if let Some(c) = self.velocity_cap {
            if !(c > 0.0) {
                return bad("velocity_cap must be positive");
            }
        }
        Ok(())
    }

    /// Latent velocity normaliser: the configured cap, else `4·sqrt(g·H)`
    /// (50 px/s without gravity), rounded up to a power of two so the affine
    /// latent map is exactly invertible.
    pub fn velocity_scale(&self) -> f64 {
        let nominal = self.velocity_cap.unwrap_or_else(|| {
            if self.gravity > 0.0 {
                4.0 * (self.gravity * self.height as f64).sqrt()
            } else {
                50.0
            }
        });
        next_pow2(nominal)
    }

    pub fn frame_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

pub(crate) fn next_pow2(x: f64) -> f64 {
    assert!(x > 0.0 && x.is_finite());
    let mut p = 2f64.powi(x.log2().floor() as i32);
    while p < x {
        p *= 2.0;
    }
    while p / 2.0 >= x {
        p /= 2.0;
    }
    p
}

/// State of one ball at one frame. Inactive slots are all zero.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct BallState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub radius: f64,
    pub active: bool,
}

impl BallState {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64, radius: f64) -> Self {
        Self {
            x,
            y,
            vx,
            vy,
            radius,
            active: true,
        }
    }

    pub const INACTIVE: BallState = BallState {
        x: 0.0,
        y: 0.0,
        vx: 0.0,
        vy: 0.0,
        radius: 0.0,
        active: false,
    };

    /// Values rounded through `f32`, the precision of recorded states.
    pub fn recorded(&self) -> Self {
        if !self.active {
            return Self::INACTIVE;
        }
        let r = |v: f64| v as f32 as f64;
        Self {
            x: r(self.x),
            y: r(self.y),
            vx: r(self.vx),
            vy: r(self.vy),
            radius: r(self.radius),
            active: true,
        }
    }

    pub(crate) fn fields(&self) -> [f64; 6] {
        [
            self.x,
            self.y,
            self.vx,
            self.vy,
            self.radius,
            if self.active { 1.0 } else { 0.0 },
        ]
    }

    pub(crate) fn from_fields(f: [f64; 6]) -> Self {
        if f[5] < 0.5 {
            return Self::INACTIVE;
        }
        Self::new(f[0], f[1], f[2], f[3], f[4])
    }
}

/// Number of latent / record fields per ball.
pub const FIELDS_PER_BALL: usize = 6;

/// External point impulse spread over `duration` frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceEvent {
    pub apply_frame: usize,
    pub x: f64,
    pub y: f64,
    /// Total impulse in px/s.
    pub magnitude: f64,
    /// Degrees, counter-clockwise from +x with y pointing up on screen.
    pub angle_deg: f64,
    pub duration: usize,
}

impl ForceEvent {
    pub fn validate(&self, frames: usize) -> Result<(), WorldError> {
        if self.apply_frame >= frames {
            return Err(WorldError::InvalidConfig(
                "force apply_frame outside the sequence".into(),
            ));
        }
        if !(self.magnitude >= 0.0) || self.duration == 0 {
            return Err(WorldError::InvalidConfig(
                "force magnitude must be >= 0 and duration >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn is_active_at(&self, frame: usize) -> bool {
        frame >= self.apply_frame && frame < self.apply_frame + self.duration
    }

    /// Velocity change delivered per active frame.
    pub fn per_frame_delta(&self) -> (f64, f64) {
        let per = self.magnitude / self.duration as f64;
        let th = self.angle_deg.to_radians();
        (per * th.cos(), -per * th.sin())
    }
}

/// Per-frame ball states; frame 0 is the initial condition.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysStateSeq {
    frames: Vec<Vec<BallState>>,
    pub force: Option<ForceEvent>,
}

impl PhysStateSeq {
    pub fn new(frames: Vec<Vec<BallState>>, force: Option<ForceEvent>) -> Result<Self, WorldError> {
        let k = frames.first().map(|f| f.len()).unwrap_or(0);
        if frames.is_empty() || k == 0 || frames.iter().any(|f| f.len() != k) {
            return Err(WorldError::InvalidConfig(
                "state sequence needs T >= 1 frames of a fixed ball count".into(),
            ));
        }
        Ok(Self { frames, force })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn balls(&self) -> usize {
        self.frames[0].len()
    }

    pub fn frame(&self, t: usize) -> &[BallState] {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[Vec<BallState>] {
        &self.frames
    }

    /// Flat `T × 6K` record layout used by the dataset container.
    pub fn to_flat(&self) -> Vec<f64> {
        self.frames
            .iter()
            .flat_map(|f| f.iter().flat_map(|b| b.fields()))
            .collect()
    }

    pub fn from_flat(
        t: usize,
        k: usize,
        flat: &[f64],
        force: Option<ForceEvent>,
    ) -> Result<Self, WorldError> {
        if flat.len() != t * k * FIELDS_PER_BALL {
            return Err(WorldError::Format("state block length mismatch".into()));
        }
        let frames = flat
            .chunks(k * FIELDS_PER_BALL)
            .map(|f| {
                f.chunks(FIELDS_PER_BALL)
                    .map(|b| BallState::from_fields(b.try_into().expect("6 fields")))
                    .collect()
            })
            .collect();
        Self::new(frames, force)
    }
}

/// `T × H × W` grayscale intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSeq {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FrameSeq {
    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
            data: vec![0.0; frames * height * width],
        }
    }

    pub fn from_data(
        frames: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self, WorldError> {
        if frames == 0 || height == 0 || width == 0 || data.len() != frames * height * width {
            return Err(WorldError::Format("frame block length mismatch".into()));
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn pixel(&self, t: usize, row: usize, col: usize) -> f32 {
        self.frame(t)[row * self.width + col]
    }

    /// Frames `start..end` as a new sequence.
    pub fn range(&self, start: usize, end: usize) -> FrameSeq {
        assert!(start < end && end <= self.frames);
        let n = self.height * self.width;
        FrameSeq {
            frames: end - start,
            height: self.height,
            width: self.width,
            data: self.data[start * n..end * n].to_vec(),
        }
    }
}
