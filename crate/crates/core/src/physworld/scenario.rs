use super::ForceEvent;

/// Number of discrete tokens in a scenario descriptor.
pub const DESCRIPTOR_LEN: usize = 8;
/// Values per descriptor slot.
pub const DESCRIPTOR_VOCAB: u16 = 16;

/// Structured stand-in for a text prompt: ball count, gravity on/off,
/// restitution bucket (4), force present, then quantised force x, y,
/// magnitude and angle. The last four slots are zero when no force is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct ScenarioDescriptor(pub [u16; DESCRIPTOR_LEN]);

pub const SLOT_BALLS: usize = 0;
pub const SLOT_GRAVITY: usize = 1;
pub const SLOT_RESTITUTION: usize = 2;
pub const SLOT_FORCE: usize = 3;
/// Slots carrying the shared (both-branch) context.
pub const SHARED_SLOTS: std::ops::Range<usize> = 0..4;
/// Slots carrying the physics-only force descriptor.
pub const FORCE_SLOTS: std::ops::Range<usize> = 4..8;

fn bucket(value: f64, span: f64, buckets: u16) -> u16 {
    if !(span > 0.0) {
        return 0;
    }
    let b = (value / span * buckets as f64).floor();
    b.clamp(0.0, (buckets - 1) as f64) as u16
}

impl ScenarioDescriptor {
    pub fn describe(
        balls: usize,
        gravity_on: bool,
        restitution: f64,
        force: Option<&ForceEvent>,
        frame_shape: (usize, usize),
        magnitude_cap: f64,
    ) -> Self {
        let mut t = [0u16; DESCRIPTOR_LEN];
        t[SLOT_BALLS] = balls.min((DESCRIPTOR_VOCAB - 1) as usize) as u16;
        t[SLOT_GRAVITY] = gravity_on as u16;
        t[SLOT_RESTITUTION] = bucket(restitution, 1.0, 4);
        if let Some(f) = force {
            let (h, w) = frame_shape;
            t[SLOT_FORCE] = 1;
            t[4] = bucket(f.x, w as f64, DESCRIPTOR_VOCAB);
            t[5] = bucket(f.y, h as f64, DESCRIPTOR_VOCAB);
            t[6] = bucket(f.magnitude, magnitude_cap, DESCRIPTOR_VOCAB);
            t[7] = bucket(f.angle_deg.rem_euclid(360.0), 360.0, DESCRIPTOR_VOCAB);
        }
        Self(t)
    }

    pub fn has_force(&self) -> bool {
        self.0[SLOT_FORCE] != 0
    }

    pub fn tokens(&self) -> &[u16; DESCRIPTOR_LEN] {
        &self.0
    }

    pub fn is_valid(&self, vocab: usize) -> bool {
        self.0.iter().all(|&t| (t as usize) < vocab)
    }
}
