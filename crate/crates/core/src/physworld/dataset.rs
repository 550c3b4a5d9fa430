//! Seeded clip generation and the `PHNT` binary container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "PHNT" | version u16 = 1
//! N u32 | T u32 | H u32 | W u32 | K u32 | D_z u32 | flags u32
//! per record:
//!   descriptor   8 × u16
//!   force event  6 × f32  (apply_frame, x, y, magnitude, angle_deg, duration; zero when absent)
//!   frames       T·H·W × f32
//!   states       T·D_z × f32   (per ball: x, y, vx, vy, radius, active)
//!   force frames T·H·W × f32   only when flags bit 0 is set and the record's
//!                              descriptor marks a force
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{ScenarioDescriptor, DESCRIPTOR_LEN};
use super::{
    render, render_force_tensor, simulate, BallState, ForceEvent, FrameSeq, PhysStateSeq,
    WorldConfig, WorldError, FIELDS_PER_BALL,
};

pub const MAGIC: &[u8; 4] = b"PHNT";
pub const VERSION: u16 = 1;
pub const FLAG_FORCE_CHANNEL: u32 = 1;

/// Distribution over per-clip scenes layered on a base [`WorldConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub sequences: usize,
    pub frames: usize,
    /// Inclusive lower bound on the per-clip ball count; the upper bound is
    /// the world's `balls`.
    pub min_balls: usize,
    pub gravity_on_prob: f64,
    pub restitution_range: [f64; 2],
    pub force_fraction: f64,
    pub force_magnitude: [f64; 2],
    pub force_duration: usize,
    /// Normaliser for force-tensor intensities.
    pub magnitude_cap: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            sequences: 64,
            frames: 33,
            min_balls: 1,
            gravity_on_prob: 1.0,
            restitution_range: [0.6, 1.0],
            force_fraction: 0.0,
            force_magnitude: [20.0, 80.0],
            force_duration: 2,
            magnitude_cap: 80.0,
            seed: 0,
        }
    }
}

impl DataConfig {
    pub fn validate(&self, world: &WorldConfig) -> Result<(), WorldError> {
        world.validate()?;
        let bad = |m: &str| Err(WorldError::InvalidConfig(m.to_string()));
        if self.sequences == 0 {
            return bad("sequences must be >= 1");
        }
        if self.frames < 2 {
            return bad("frames must be >= 2");
        }
        if self.min_balls == 0 || self.min_balls > world.balls {
            return bad("min_balls must lie in 1..=world.balls");
        }
        if !(0.0..=1.0).contains(&self.gravity_on_prob) || !(0.0..=1.0).contains(&self.force_fraction)
        {
            return bad("probabilities must lie in [0, 1]");
        }
        let [e0, e1] = self.restitution_range;
        if !(0.0 <= e0 && e0 <= e1 && e1 <= 1.0) {
            return bad("restitution_range must be ordered within [0, 1]");
        }
        let [m0, m1] = self.force_magnitude;
        if !(0.0 <= m0 && m0 <= m1) || self.force_duration == 0 || !(self.magnitude_cap > 0.0) {
            return bad("force magnitude range, duration and cap must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetHeader {
    pub records: u32,
    pub frames: u32,
    pub height: u32,
    pub width: u32,
    pub balls: u32,
    pub latent_dim: u32,
    pub flags: u32,
}

/// Everything needed to regenerate one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordSpec {
    pub world: WorldConfig,
    pub force: Option<ForceEvent>,
    pub descriptor: ScenarioDescriptor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub descriptor: ScenarioDescriptor,
    pub force: Option<ForceEvent>,
    pub frames: FrameSeq,
    pub states: PhysStateSeq,
    pub force_frames: Option<FrameSeq>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<Record>,
}

fn f32r(v: f64) -> f64 {
    v as f32 as f64
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    r[0] + (r[1] - r[0]) * rng.random::<f64>()
}

/// World used for latent normalisation across the whole dataset.
pub fn latent_world(world: &WorldConfig) -> WorldConfig {
    WorldConfig {
        velocity_cap: Some(world.velocity_scale()),
        ..world.clone()
    }
}

/// Deterministic scene parameters for record `index`, seeded by
/// `seed ^ index`.
pub fn record_spec(
    world: &WorldConfig,
    data: &DataConfig,
    index: usize,
) -> Result<RecordSpec, WorldError> {
    let mut rng = ChaCha8Rng::seed_from_u64(data.seed ^ index as u64);
    let balls = rng.random_range(data.min_balls..=world.balls);
    let gravity_on = rng.random::<f64>() < data.gravity_on_prob;
    let restitution = f32r(uniform(&mut rng, data.restitution_range));
    let rec_world = WorldConfig {
        balls,
        gravity: if gravity_on { world.gravity } else { 0.0 },
        restitution,
        velocity_cap: Some(world.velocity_scale()),
        seed: rng.next_u64(),
        ..world.clone()
    };
    let with_force = rng.random::<f64>() < data.force_fraction;
    let force = if with_force {
        let apply_frame = rng.random_range(1..=(data.frames / 2).max(1));
        let target = rng.random_range(0..balls);
        let magnitude = f32r(uniform(&mut rng, data.force_magnitude));
        let angle_deg = f32r(360.0 * rng.random::<f64>());
        let free = simulate(&rec_world, None, data.frames)?;
        let b = free.frame(apply_frame)[target];
        Some(ForceEvent {
            apply_frame,
            x: f32r(b.x),
            y: f32r(b.y),
            magnitude,
            angle_deg,
            duration: data.force_duration,
        })
    } else {
        None
    };
    let descriptor = ScenarioDescriptor::describe(
        balls,
        gravity_on,
        restitution,
        force.as_ref(),
        world.frame_shape(),
        data.magnitude_cap,
    );
    Ok(RecordSpec {
        world: rec_world,
        force,
        descriptor,
    })
}

fn pad_states(states: PhysStateSeq, k: usize) -> Result<PhysStateSeq, WorldError> {
    let force = states.force;
    let frames = states
        .frames()
        .iter()
        .map(|f| {
            let mut f = f.clone();
            f.resize(k, BallState::INACTIVE);
            f
        })
        .collect();
    PhysStateSeq::new(frames, force)
}

/// Simulates and renders a record from its spec, padding to `k` balls.
pub fn realize(spec: &RecordSpec, frames: usize, k: usize, data: &DataConfig) -> Result<Record, WorldError> {
    let states = simulate(&spec.world, spec.force.as_ref(), frames)?;
    let states = pad_states(states, k)?;
    let (h, w) = spec.world.frame_shape();
    let rendered = render(&states, h, w);
    let force_frames = spec
        .force
        .as_ref()
        .map(|f| render_force_tensor(f, frames, h, w, data.magnitude_cap));
    Ok(Record {
        descriptor: spec.descriptor,
        force: spec.force,
        frames: rendered,
        states,
        force_frames,
    })
}

pub fn generate_record(
    world: &WorldConfig,
    data: &DataConfig,
    index: usize,
) -> Result<Record, WorldError> {
    let spec = record_spec(world, data, index)?;
    realize(&spec, data.frames, world.balls, data)
}

pub fn generate(world: &WorldConfig, data: &DataConfig) -> Result<Dataset, WorldError> {
    data.validate(world)?;
    let records = (0..data.sequences)
        .map(|i| generate_record(world, data, i))
        .collect::<Result<Vec<_>, _>>()?;
    let header = DatasetHeader {
        records: data.sequences as u32,
        frames: data.frames as u32,
        height: world.height as u32,
        width: world.width as u32,
        balls: world.balls as u32,
        latent_dim: (world.balls * FIELDS_PER_BALL) as u32,
        flags: if data.force_fraction > 0.0 {
            FLAG_FORCE_CHANNEL
        } else {
            0
        },
    };
    Ok(Dataset { header, records })
}

/// Generates `data.sequences` clips and writes them to `path`.
pub fn make_dataset(
    world: &WorldConfig,
    data: &DataConfig,
    path: &Path,
) -> Result<DatasetHeader, WorldError> {
    let ds = generate(world, data)?;
    write_dataset(path, &ds)?;
    Ok(ds.header)
}

fn put_f32s(w: &mut impl Write, vals: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    for v in vals {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    write_to(&mut buf, ds).expect("writing to memory");
    buf
}

fn write_to(w: &mut impl Write, ds: &Dataset) -> std::io::Result<()> {
    let h = &ds.header;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [
        h.records,
        h.frames,
        h.height,
        h.width,
        h.balls,
        h.latent_dim,
        h.flags,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for r in &ds.records {
        for t in r.descriptor.0 {
            w.write_all(&t.to_le_bytes())?;
        }
        let fe = match &r.force {
            Some(f) => [
                f.apply_frame as f64,
                f.x,
                f.y,
                f.magnitude,
                f.angle_deg,
                f.duration as f64,
            ],
            None => [0.0; 6],
        };
        put_f32s(w, fe)?;
        for v in r.frames.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        put_f32s(w, r.states.to_flat())?;
        if h.flags & FLAG_FORCE_CHANNEL != 0 && r.descriptor.has_force() {
            let ff = r
                .force_frames
                .as_ref()
                .ok_or_else(|| std::io::Error::other("force record without force frames"))?;
            for v in ff.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<(), WorldError> {
    let file = File::create(path).map_err(|e| WorldError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_to(&mut w, ds).map_err(|e| WorldError::io(path, e))?;
    w.flush().map_err(|e| WorldError::io(path, e))
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], WorldError> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| WorldError::Format("truncated dataset".into()))?;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, WorldError> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    fn u32(&mut self) -> Result<u32, WorldError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, WorldError> {
        let mut raw = vec![0u8; n * 4];
        self.inner
            .read_exact(&mut raw)
            .map_err(|_| WorldError::Format("truncated dataset".into()))?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn decode_dataset(reader: impl Read) -> Result<Dataset, WorldError> {
    let mut c = Cursor { inner: reader };
    if &c.bytes::<4>()? != MAGIC {
        return Err(WorldError::Format("bad magic".into()));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(WorldError::Format(format!("unsupported version {version}")));
    }
    let header = DatasetHeader {
        records: c.u32()?,
        frames: c.u32()?,
        height: c.u32()?,
        width: c.u32()?,
        balls: c.u32()?,
        latent_dim: c.u32()?,
        flags: c.u32()?,
    };
    let (t, h, w, k) = (
        header.frames as usize,
        header.height as usize,
        header.width as usize,
        header.balls as usize,
    );
    if header.latent_dim as usize != k * FIELDS_PER_BALL {
        return Err(WorldError::Format("latent_dim must equal 6·K".into()));
    }
    let mut records = Vec::with_capacity(header.records as usize);
    for _ in 0..header.records {
        let mut tokens = [0u16; DESCRIPTOR_LEN];
        for tok in tokens.iter_mut() {
            *tok = c.u16()?;
        }
        let descriptor = ScenarioDescriptor(tokens);
        let fe = c.f32s(6)?;
        let force = descriptor.has_force().then(|| ForceEvent {
            apply_frame: fe[0] as usize,
            x: fe[1] as f64,
            y: fe[2] as f64,
            magnitude: fe[3] as f64,
            angle_deg: fe[4] as f64,
            duration: fe[5] as usize,
        });
        let frames = FrameSeq::from_data(t, h, w, c.f32s(t * h * w)?)?;
        let flat: Vec<f64> = c
            .f32s(t * header.latent_dim as usize)?
            .into_iter()
            .map(f64::from)
            .collect();
        let states = PhysStateSeq::from_flat(t, k, &flat, force)?;
        let force_frames = if header.flags & FLAG_FORCE_CHANNEL != 0 && descriptor.has_force() {
            Some(FrameSeq::from_data(t, h, w, c.f32s(t * h * w)?)?)
        } else {
            None
        };
        records.push(Record {
            descriptor,
            force,
            frames,
            states,
            force_frames,
        });
    }
    Ok(Dataset { header, records })
}

pub fn read_dataset(path: &Path) -> Result<Dataset, WorldError> {
    let file = File::open(path).map_err(|e| WorldError::io(path, e))?;
    decode_dataset(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (WorldConfig, DataConfig) {
        let world = WorldConfig {
            height: 16,
            width: 16,
            balls: 2,
            radius_range: [1.5, 2.5],
            init_x: [0.0, 16.0],
            init_y: [0.0, 8.0],
            ..Default::default()
        };
        let data = DataConfig {
            sequences: 3,
            frames: 6,
            force_fraction: 0.5,
            seed: 11,
            ..Default::default()
        };
        (world, data)
    }

    #[test]
    fn memory_round_trip() {
        let (world, data) = small();
        let ds = generate(&world, &data).unwrap();
        let bytes = encode_dataset(&ds);
        let back = decode_dataset(bytes.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let (world, data) = small();
        let mut bytes = encode_dataset(&generate(&world, &data).unwrap());
        let truncated = &bytes[..bytes.len() - 3];
        assert!(decode_dataset(truncated).is_err());
        bytes[0] = b'X';
        assert!(decode_dataset(bytes.as_slice()).is_err());
    }

    #[test]
    fn no_force_channel_when_fraction_zero() {
        let (world, mut data) = small();
        data.force_fraction = 0.0;
        data.sequences = 8;
        let ds = generate(&world, &data).unwrap();
        assert_eq!(ds.header.flags, 0);
        assert!(ds
            .records
            .iter()
            .all(|r| r.force_frames.is_none() && r.force.is_none()));
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let (world, data) = small();
        let err = make_dataset(&world, &data, Path::new("/nonexistent-dir/x.phnt"));
        assert!(matches!(err, Err(WorldError::Io { .. })));
    }
}
