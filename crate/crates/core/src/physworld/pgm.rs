use std::io::Write;
use std::path::Path;

use super::{FrameSeq, WorldError};

/// Binary PGM (`P5`, maxval 255) encoding of one frame.
pub fn encode_pgm(frame: &[f32], height: usize, width: usize) -> Vec<u8> {
    assert_eq!(frame.len(), height * width);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        frame
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

/// Writes `frame_0000.pgm`, `frame_0001.pgm`, ... into `dir`.
pub fn export_pgm_frames(frames: &FrameSeq, dir: &Path) -> Result<(), WorldError> {
    std::fs::create_dir_all(dir).map_err(|e| WorldError::io(dir, e))?;
    for t in 0..frames.len() {
        let path = dir.join(format!("frame_{t:04}.pgm"));
        let bytes = encode_pgm(frames.frame(t), frames.height(), frames.width());
        let mut f = std::fs::File::create(&path).map_err(|e| WorldError::io(&path, e))?;
        f.write_all(&bytes).map_err(|e| WorldError::io(&path, e))?;
    }
    Ok(())
}
