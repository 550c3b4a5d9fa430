use super::ModelError;
use crate::diffengine::{Graph, Tensor, Var};

/// Query, key, value and output projections of one attention module, each
/// `d × d`, applied on the right (`x·W`).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
    pub o: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct AttnVars {
    pub q: Var,
    pub k: Var,
    pub v: Var,
    pub o: Var,
}

/// Multi-head attention of `queries` over `keys` for a batch of records laid
/// out contiguously: record `r` owns query rows `q_spans[r]` and key rows
/// `kv_spans[r]`, each a `(start, len)` pair. Logits are scaled by
/// `1/√(d/heads)`.
pub(crate) fn attend(
    g: &mut Graph,
    queries: Var,
    keys: Var,
    w: AttnVars,
    heads: usize,
    q_spans: &[(usize, usize)],
    kv_spans: &[(usize, usize)],
) -> Result<Var, ModelError> {
    let d = g.value(queries).cols();
    if g.value(keys).cols() != d {
        return Err(ModelError::Width {
            what: "attention keys",
            expected: d,
            got: g.value(keys).cols(),
        });
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = g.matmul(queries, w.q)?;
    let k = g.matmul(keys, w.k)?;
    let v = g.matmul(keys, w.v)?;
    let mut per_record = Vec::with_capacity(q_spans.len());
    for (&(qs, ql), &(ks, kl)) in q_spans.iter().zip(kv_spans) {
        let (qr, kr, vr) = if q_spans.len() == 1 {
            (q, k, v)
        } else {
            (g.slice_rows(q, qs, ql)?, g.slice_rows(k, ks, kl)?, g.slice_rows(v, ks, kl)?)
        };
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (qr, kr, vr)
            } else {
                (
                    g.slice_cols(qr, h * dh, dh)?,
                    g.slice_cols(kr, h * dh, dh)?,
                    g.slice_cols(vr, h * dh, dh)?,
                )
            };
            let logits = g.matmul_t(qh, kh)?;
            let logits = g.scale(logits, scale);
            let a = g.softmax_rows(logits)?;
            outs.push(g.matmul(a, vh)?);
        }
        per_record.push(if heads == 1 { outs[0] } else { g.concat_cols(&outs)? });
    }
    let joined = if per_record.len() == 1 {
        per_record[0]
    } else {
        g.concat_rows(&per_record)?
    };
    Ok(g.matmul(joined, w.o)?)
}

fn single(queries: &Tensor, keys: &Tensor, w: &AttentionWeights, heads: usize) -> Result<Tensor, ModelError> {
    let d = queries.cols();
    for (what, t) in [("keys", keys), ("q", &w.q), ("k", &w.k), ("v", &w.v), ("o", &w.o)] {
        if t.cols() != d {
            return Err(ModelError::Width {
                what,
                expected: d,
                got: t.cols(),
            });
        }
    }
    if heads == 0 || d % heads != 0 {
        return Err(ModelError::InvalidConfig(format!("{heads} heads do not divide width {d}")));
    }
    let mut g = Graph::new();
    let qx = g.constant(queries.clone());
    let kx = g.constant(keys.clone());
    let vars = AttnVars {
        q: g.constant(w.q.clone()),
        k: g.constant(w.k.clone()),
        v: g.constant(w.v.clone()),
        o: g.constant(w.o.clone()),
    };
    let out = attend(
        &mut g,
        qx,
        kx,
        vars,
        heads,
        &[(0, queries.rows())],
        &[(0, keys.rows())],
    )?;
    Ok(g.value(out).clone())
}

/// Video tokens attend to physics tokens. The caller adds the result to
/// `h_v`.
pub fn vis_attention(
    h_v: &Tensor,
    h_z: &Tensor,
    w: &AttentionWeights,
    heads: usize,
) -> Result<Tensor, ModelError> {
    single(h_v, h_z, w, heads)
}

/// Physics tokens attend to video tokens. The caller adds the result to
/// `h_z`.
pub fn phy_attention(
    h_z: &Tensor,
    h_v: &Tensor,
    w: &AttentionWeights,
    heads: usize,
) -> Result<Tensor, ModelError> {
    single(h_z, h_v, w, heads)
}
