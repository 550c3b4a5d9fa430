use super::EvalError;
use crate::physworld::FrameSeq;

/// `T − 1` binary motion masks, one per consecutive frame pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSeq {
    frames: usize,
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl MaskSeq {
    pub fn new(frames: usize, height: usize, width: usize, bits: Vec<bool>) -> Result<Self, EvalError> {
        if frames == 0 || bits.len() != frames * height * width {
            return Err(EvalError::Dimensions(format!(
                "{} bits for {frames}x{height}x{width}",
                bits.len()
            )));
        }
        Ok(Self {
            frames,
            height,
            width,
            bits,
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

    pub fn frame(&self, t: usize) -> &[bool] {
        let n = self.height * self.width;
        &self.bits[t * n..(t + 1) * n]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn check_same(&self, other: &MaskSeq) -> Result<(), EvalError> {
        if (self.frames, self.height, self.width) != (other.frames, other.height, other.width) {
            return Err(EvalError::Dimensions(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.frames, self.height, self.width, other.frames, other.height, other.width
            )));
        }
        Ok(())
    }

    fn union(&self) -> Vec<bool> {
        let n = self.height * self.width;
        let mut u = vec![false; n];
        for t in 0..self.frames {
            for (a, &b) in u.iter_mut().zip(self.frame(t)) {
                *a |= b;
            }
        }
        u
    }

    fn frequency(&self) -> Vec<f64> {
        let n = self.height * self.width;
        let mut f = vec![0.0; n];
        for t in 0..self.frames {
            for (a, &b) in f.iter_mut().zip(self.frame(t)) {
                if b {
                    *a += 1.0;
                }
            }
        }
        f.iter_mut().for_each(|v| *v /= self.frames as f64);
        f
    }
}

/// `mask_t(p) = |frame_{t+1}(p) − frame_t(p)| > tau`.
pub fn motion_mask(frames: &FrameSeq, tau: f64) -> Result<MaskSeq, EvalError> {
    if frames.len() < 2 {
        return Err(EvalError::TooShort(frames.len()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(EvalError::Threshold(tau));
    }
    let mut bits = Vec::with_capacity((frames.len() - 1) * frames.height() * frames.width());
    for t in 0..frames.len() - 1 {
        let (a, b) = (frames.frame(t), frames.frame(t + 1));
        bits.extend(a.iter().zip(b).map(|(&x, &y)| (y as f64 - x as f64).abs() > tau));
    }
    MaskSeq::new(frames.len() - 1, frames.height(), frames.width(), bits)
}

fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(&x, &y)| x && y).count();
    let uni = a.iter().zip(b).filter(|(&x, &y)| x || y).count();
    if uni == 0 {
        1.0
    } else {
        inter as f64 / uni as f64
    }
}

/// IoU of the masks' unions over time; 1 when both are empty.
pub fn spatial_iou(gen: &MaskSeq, reference: &MaskSeq) -> Result<f64, EvalError> {
    gen.check_same(reference)?;
    Ok(iou(&gen.union(), &reference.union()))
}

/// Mean per-frame IoU, with empty-versus-empty frames scoring 1.
pub fn spatiotemporal_iou(gen: &MaskSeq, reference: &MaskSeq) -> Result<f64, EvalError> {
    gen.check_same(reference)?;
    let total: f64 = (0..gen.frames).map(|t| iou(gen.frame(t), reference.frame(t))).sum();
    Ok(total / gen.frames as f64)
}

/// `Σ min(a, b) / Σ max(a, b)` over per-pixel motion frequencies.
pub fn weighted_spatial_iou(gen: &MaskSeq, reference: &MaskSeq) -> Result<f64, EvalError> {
    gen.check_same(reference)?;
    let (a, b) = (gen.frequency(), reference.frequency());
    let num: f64 = a.iter().zip(&b).map(|(x, y)| x.min(*y)).sum();
    let den: f64 = a.iter().zip(&b).map(|(x, y)| x.max(*y)).sum();
    Ok(if den == 0.0 { 1.0 } else { num / den })
}

/// Mean squared pixel difference.
pub fn mse(gen: &FrameSeq, reference: &FrameSeq) -> Result<f64, EvalError> {
    if (gen.len(), gen.height(), gen.width()) != (reference.len(), reference.height(), reference.width()) {
        return Err(EvalError::Dimensions("frame sequences differ in shape".into()));
    }
    let s: f64 = gen
        .data()
        .iter()
        .zip(reference.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(s / gen.data().len() as f64)
}
