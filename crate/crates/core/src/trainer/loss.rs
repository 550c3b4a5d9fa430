use super::TrainError;
use crate::diffengine::{global_norm, Graph, Tensor, Var};
use crate::duomodel::{ModelParams, Partition};

/// Loss values of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub l_v: f64,
    pub l_z: f64,
    pub l_total: f64,
}

fn masked_sse(pred: &Tensor, target: &Tensor, cond: &[bool]) -> (f64, usize) {
    let c = pred.cols();
    let mut s = 0.0;
    let mut n = 0;
    for (r, _) in cond.iter().enumerate().filter(|(_, &m)| !m) {
        for (a, b) in pred.row_slice(r).iter().zip(target.row_slice(r)) {
            s += (a - b) * (a - b);
        }
        n += c;
    }
    (s, n)
}

fn check(pred: &Tensor, target: &Tensor, cond: &[bool]) -> Result<(), TrainError> {
    if pred.shape() != target.shape() || cond.len() != pred.rows() {
        return Err(TrainError::Shape(format!(
            "prediction {:?}, target {:?}, mask {}",
            pred.shape(),
            target.shape(),
            cond.len()
        )));
    }
    Ok(())
}

/// Mean squared error over non-conditioning tokens of each modality and
/// `L_v + alpha_z·L_z`.
pub fn joint_loss(
    u_v_pred: &Tensor,
    u_z_pred: &Tensor,
    u_v_target: &Tensor,
    u_z_target: &Tensor,
    v_cond: &[bool],
    z_cond: &[bool],
    alpha_z: f64,
) -> Result<LossParts, TrainError> {
    check(u_v_pred, u_v_target, v_cond)?;
    check(u_z_pred, u_z_target, z_cond)?;
    let (sv, nv) = masked_sse(u_v_pred, u_v_target, v_cond);
    let (sz, nz) = masked_sse(u_z_pred, u_z_target, z_cond);
    if nv == 0 || nz == 0 {
        return Err(TrainError::NoLossTokens);
    }
    let l_v = sv / nv as f64;
    let l_z = sz / nz as f64;
    Ok(LossParts {
        l_v,
        l_z,
        l_total: l_v + alpha_z * l_z,
    })
}

/// `Σ mask·(pred − target)² / count` on a graph. Conditioning rows carry a
/// zero mask, so their targets never reach the loss or its gradient.
pub(crate) fn masked_mse_var(
    g: &mut Graph,
    pred: Var,
    target: Tensor,
    mask: Tensor,
    count: usize,
) -> Result<Var, TrainError> {
    let t = g.constant(target);
    let m = g.constant(mask);
    let d = g.sub(pred, t)?;
    let d = g.mul(d, m)?;
    let sq = g.mul(d, d)?;
    let s = g.sum(sq);
    Ok(g.scale(s, 1.0 / count as f64))
}

/// L2 norm of the gradients of the physics-branch and cross-attention
/// partitions. `grads[i]` belongs to `params.entries()[i]`.
pub fn grad_norm_physics(params: &ModelParams, grads: &[Option<Vec<f64>>]) -> Result<f64, TrainError> {
    if grads.len() != params.entries().len() {
        return Err(TrainError::Shape(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.entries().len()
        )));
    }
    let mut parts = Vec::new();
    for (i, (e, g)) in params.entries().iter().zip(grads).enumerate() {
        if !matches!(e.partition, Partition::Physics | Partition::Cross) {
            continue;
        }
        match g {
            Some(g) => parts.push(g.as_slice()),
            None if params.is_trainable(i) => return Err(TrainError::MissingGradient(e.name.clone())),
            None => {}
        }
    }
    Ok(global_norm(parts))
}
