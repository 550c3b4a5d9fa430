use super::ModelError;
use crate::diffengine::Tensor;
use crate::physworld::FrameSeq;

/// Video tokens: `T·(H/p)·(W/p)` rows of `p²` pixels, frame-major, patches in
/// row-major order, pixels row-major inside each patch.
#[derive(Clone, Debug, PartialEq)]
pub struct VisTokenSeq {
    pub tokens: Tensor,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub patch: usize,
}

impl VisTokenSeq {
    pub fn tokens_per_frame(&self) -> usize {
        (self.height / self.patch) * (self.width / self.patch)
    }
}

fn check(h: usize, w: usize, p: usize) -> Result<(), ModelError> {
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(ModelError::Divisibility {
            patch: p,
            height: h,
            width: w,
        });
    }
    Ok(())
}

pub fn patchify(frames: &FrameSeq, p: usize) -> Result<VisTokenSeq, ModelError> {
    let (t, h, w) = (frames.len(), frames.height(), frames.width());
    check(h, w, p)?;
    let (gh, gw) = (h / p, w / p);
    let mut data = Vec::with_capacity(t * h * w);
    for f in 0..t {
        let px = frames.frame(f);
        for by in 0..gh {
            for bx in 0..gw {
                for y in 0..p {
                    let row = (by * p + y) * w + bx * p;
                    data.extend(px[row..row + p].iter().map(|&v| v as f64));
                }
            }
        }
    }
    Ok(VisTokenSeq {
        tokens: Tensor::matrix(t * gh * gw, p * p, data).map_err(ModelError::Engine)?,
        frames: t,
        height: h,
        width: w,
        patch: p,
    })
}

/// Inverse of [`patchify`]. Values are stored as `f32`, so tokens that came
/// from a frame sequence reproduce it bit for bit.
pub fn unpatchify(seq: &VisTokenSeq) -> Result<FrameSeq, ModelError> {
    let (t, h, w, p) = (seq.frames, seq.height, seq.width, seq.patch);
    check(h, w, p)?;
    let (gh, gw) = (h / p, w / p);
    if seq.tokens.rows() != t * gh * gw || seq.tokens.cols() != p * p {
        return Err(ModelError::Width {
            what: "video tokens",
            expected: p * p,
            got: seq.tokens.cols(),
        });
    }
    let mut out = FrameSeq::zeros(t, h, w);
    let src = seq.tokens.data();
    for f in 0..t {
        let px = out.frame_mut(f);
        for by in 0..gh {
            for bx in 0..gw {
                let tok = &src[((f * gh + by) * gw + bx) * p * p..][..p * p];
                for y in 0..p {
                    let row = (by * p + y) * w + bx * p;
                    for x in 0..p {
                        px[row + x] = tok[y * p + x] as f32;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// One force token per frame: the force map averaged over each patch.
pub fn force_tokens(force: &FrameSeq, p: usize) -> Result<Tensor, ModelError> {
    let seq = patchify(force, p)?;
    let per = seq.tokens_per_frame();
    let pp = (p * p) as f64;
    let data = (0..seq.tokens.rows())
        .map(|r| seq.tokens.row_slice(r).iter().sum::<f64>() / pp)
        .collect();
    Tensor::matrix(seq.frames, per, data).map_err(ModelError::Engine)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_by_four_with_p2() {
        let data: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let f = FrameSeq::from_data(1, 4, 4, data).unwrap();
        let s = patchify(&f, 2).unwrap();
        assert_eq!(s.tokens.shape(), &[4, 4]);
        assert_eq!(s.tokens.row_slice(0), &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(s.tokens.row_slice(1), &[2.0, 3.0, 6.0, 7.0]);
        assert_eq!(s.tokens.row_slice(3), &[10.0, 11.0, 14.0, 15.0]);
        assert_eq!(unpatchify(&s).unwrap(), f);
    }

    #[test]
    fn token_count() {
        let f = FrameSeq::zeros(33, 32, 32);
        assert_eq!(patchify(&f, 4).unwrap().tokens.rows(), 2112);
    }

    #[test]
    fn divisibility_is_checked() {
        let f = FrameSeq::zeros(1, 6, 8);
        assert!(matches!(patchify(&f, 4), Err(ModelError::Divisibility { .. })));
    }

    #[test]
    fn force_tokens_average_patches() {
        let mut f = FrameSeq::zeros(2, 4, 4);
        f.frame_mut(1)[0] = 1.0;
        let t = force_tokens(&f, 2).unwrap();
        assert_eq!(t.shape(), &[2, 4]);
        assert_eq!(t.row_slice(0), &[0.0; 4]);
        assert_eq!(t.row_slice(1), &[0.25, 0.0, 0.0, 0.0]);
    }
}
