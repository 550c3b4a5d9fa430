use crate::physworld::PhysStateSeq;

use super::EvalError;

fn first_contact(seq: &PhysStateSeq, height: usize) -> Option<usize> {
    let floor = height as f64 - 1.0;
    (0..seq.len()).find(|&t| seq.frame(t).iter().any(|b| b.active && b.y + b.radius >= floor))
}

/// Frames between the first floor contacts (`y + r ≥ H − 1`) of the two
/// sequences; `T` when only one of them ever touches the floor.
pub fn bounce_timing_error(decoded: &PhysStateSeq, gt: &PhysStateSeq, height: usize) -> Result<usize, EvalError> {
    if decoded.len() != gt.len() {
        return Err(EvalError::Dimensions(format!("{} vs {} frames", decoded.len(), gt.len())));
    }
    Ok(match (first_contact(decoded, height), first_contact(gt, height)) {
        (Some(a), Some(b)) => a.abs_diff(b),
        (None, None) => 0,
        _ => gt.len(),
    })
}

/// Root-mean-square centre distance over frames and the balls active in
/// `gt`.
pub fn trajectory_rmse(decoded: &PhysStateSeq, gt: &PhysStateSeq) -> Result<f64, EvalError> {
    if decoded.len() != gt.len() || decoded.balls() != gt.balls() {
        return Err(EvalError::Dimensions(format!(
            "{}x{} vs {}x{} states",
            decoded.len(),
            decoded.balls(),
            gt.len(),
            gt.balls()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in 0..gt.len() {
        for (a, b) in decoded.frame(t).iter().zip(gt.frame(t)) {
            if b.active {
                sum += (a.x - b.x).powi(2) + (a.y - b.y).powi(2);
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { (sum / n as f64).sqrt() })
}
