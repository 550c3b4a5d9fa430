use std::path::Path;

use super::params::layout;
use super::{ModelConfig, ModelError, ModelParams, ParamEntry, Partition};
use crate::diffengine::{Moments, Tensor};

const MAGIC: &[u8; 4] = b"PHCK";
const VERSION: u16 = 1;

/// AdamW state saved alongside the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    /// One entry per parameter tensor, in entry order.
    pub moments: Vec<Moments>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub optimizer: Option<OptimizerState>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.buf.len() - self.pos < n {
            return Err(ModelError::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<usize, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ModelError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| ModelError::Checkpoint("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn write_config(w: &mut Writer, c: &ModelConfig) {
    for v in [
        c.d,
        c.depth,
        c.heads,
        c.patch,
        c.height,
        c.width,
        c.physics_dim,
        c.context_vocab,
        c.max_tokens,
        c.mlp_ratio,
    ] {
        w.u32(v);
    }
    w.f64s(&[c.init_std]);
    match &c.cross_depths {
        None => w.u8(0),
        Some(v) => {
            w.u8(1);
            w.u32(v.len());
            for &i in v {
                w.u32(i);
            }
        }
    }
}

fn read_config(r: &mut Reader) -> Result<ModelConfig, ModelError> {
    let mut f = [0usize; 10];
    for v in f.iter_mut() {
        *v = r.u32()?;
    }
    let init_std = r.f64s(1)?[0];
    let cross_depths = match r.u8()? {
        0 => None,
        1 => {
            let n = r.u32()?;
            Some((0..n).map(|_| r.u32()).collect::<Result<_, _>>()?)
        }
        other => return Err(ModelError::Checkpoint(format!("bad cross-depth flag {other}"))),
    };
    let config = ModelConfig {
        d: f[0],
        depth: f[1],
        heads: f[2],
        patch: f[3],
        height: f[4],
        width: f[5],
        physics_dim: f[6],
        context_vocab: f[7],
        max_tokens: f[8],
        mlp_ratio: f[9],
        init_std,
        cross_depths,
    };
    config.validate()?;
    Ok(config)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u16(VERSION);
        write_config(&mut w, self.params.config());
        let entries = self.params.entries();
        w.u32(entries.len());
        for e in entries {
            w.u16(e.name.len() as u16);
            w.0.extend_from_slice(e.name.as_bytes());
            w.u8(e.partition.code());
            w.u32(e.value.shape().len());
            for &s in e.value.shape() {
                w.u32(s);
            }
            w.f64s(e.value.data());
        }
        for p in Partition::ALL {
            w.u8(self.params.is_frozen(p) as u8);
        }
        match &self.optimizer {
            None => w.u8(0),
            Some(o) => {
                w.u8(1);
                w.u64(o.step);
                for m in &o.moments {
                    w.f64s(&m.m);
                    w.f64s(&m.v);
                }
            }
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ModelError::Checkpoint("bad magic".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let config = read_config(&mut r)?;
        let expected = layout(&config);
        let n = r.u32()?;
        if n != expected.len() {
            return Err(ModelError::Checkpoint(format!(
                "{n} parameter tensors, configuration implies {}",
                expected.len()
            )));
        }
        let mut entries = Vec::with_capacity(n);
        for (name, part, shape, _) in expected {
            let len = r.u16()? as usize;
            let got = std::str::from_utf8(r.take(len)?)
                .map_err(|_| ModelError::Checkpoint("parameter name is not UTF-8".into()))?;
            let code = r.u8()?;
            let ndim = r.u32()?;
            let dims = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
            if got != name || Partition::from_code(code) != Some(part) || dims != shape {
                return Err(ModelError::Checkpoint(format!("unexpected parameter record {got}")));
            }
            let data = r.f64s(dims.iter().product())?;
            entries.push(ParamEntry {
                name,
                partition: part,
                value: Tensor::new(dims, data)?,
            });
        }
        let mut params = ModelParams::from_entries(config, entries);
        for p in Partition::ALL {
            params.set_frozen(p, r.u8()? != 0);
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let moments = params
                    .entries()
                    .iter()
                    .map(|e| {
                        Ok(Moments {
                            m: r.f64s(e.value.len())?,
                            v: r.f64s(e.value.len())?,
                        })
                    })
                    .collect::<Result<_, ModelError>>()?;
                Some(OptimizerState { step, moments })
            }
            other => return Err(ModelError::Checkpoint(format!("bad optimizer flag {other}"))),
        };
        if r.pos != buf.len() {
            return Err(ModelError::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { params, optimizer })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| ModelError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let buf = std::fs::read(path).map_err(|e| ModelError::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            d: 8,
            depth: 2,
            heads: 2,
            patch: 4,
            height: 8,
            width: 8,
            max_tokens: 16,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_with_optimizer() {
        let mut params = ModelParams::init(&small(), 3).unwrap();
        params.set_frozen(Partition::Video, true);
        let moments = params
            .entries()
            .iter()
            .map(|e| Moments {
                m: vec![0.5; e.value.len()],
                v: vec![0.25; e.value.len()],
            })
            .collect();
        let ck = Checkpoint {
            params,
            optimizer: Some(OptimizerState { step: 7, moments }),
        };
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let ck = Checkpoint {
            params: ModelParams::init(&small(), 0).unwrap(),
            optimizer: None,
        };
        let mut bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
