use std::collections::HashMap;

use super::attention::{attend, AttnVars};
use super::{Bound, ModelError, ModelParams};
use crate::diffengine::{Graph, Tensor, Var};
use crate::physworld::{ScenarioDescriptor, FORCE_SLOTS, SHARED_SLOTS};

const LN_EPS: f64 = 1e-6;

/// Inputs of one record.
#[derive(Clone, Copy, Debug)]
pub struct ForwardItem<'a> {
    /// Noised video tokens, `N_v × p²`.
    pub video: &'a Tensor,
    /// Noised physics tokens, `T × D_z`.
    pub physics: &'a Tensor,
    /// Flow time of every video token; conditioning tokens carry 0.
    pub video_time: &'a [f64],
    pub physics_time: &'a [f64],
    pub context: &'a ScenarioDescriptor,
    /// Force tokens, one per frame, appended to the physics branch at time 0.
    pub force: Option<&'a Tensor>,
}

/// Predicted velocities for a batch, rows concatenated record by record.
#[derive(Clone, Debug)]
pub struct ForwardOut {
    pub video: Var,
    pub physics: Var,
    pub video_spans: Vec<(usize, usize)>,
    pub physics_spans: Vec<(usize, usize)>,
}

/// Sinusoidal features of `1000·t`: cosines then sines over `d/2`
/// geometrically spaced frequencies.
pub fn timestep_features(t: f64, d: usize) -> Vec<f64> {
    let half = d / 2;
    let mut out = vec![0.0; d];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let a = 1000.0 * t * freq;
        out[i] = a.cos();
        out[half + i] = a.sin();
    }
    out
}

fn linear(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var, ModelError> {
    let y = g.matmul(x, w)?;
    Ok(g.add_row(y, b)?)
}

fn modulate(g: &mut Graph, x: Var, shift: Var, scale: Var) -> Result<Var, ModelError> {
    let n = g.layer_norm(x, None, None, LN_EPS)?;
    let s = g.add_scalar(scale, 1.0);
    let y = g.mul(n, s)?;
    Ok(g.add(y, shift)?)
}

fn constant_rows(g: &mut Graph, parts: &[&Tensor]) -> Result<Var, ModelError> {
    let cols = parts[0].cols();
    let mut data = Vec::new();
    for p in parts {
        data.extend_from_slice(p.data());
    }
    let t = Tensor::matrix(data.len() / cols, cols, data)?;
    Ok(g.constant(t))
}

/// Conditioning rows, one per distinct (record, time) pair.
struct Keys {
    index: HashMap<(usize, u64), usize>,
    list: Vec<(usize, f64)>,
}

impl Keys {
    fn id(&mut self, rec: usize, t: f64) -> usize {
        let next = self.list.len();
        *self.index.entry((rec, t.to_bits())).or_insert_with(|| {
            self.list.push((rec, t));
            next
        })
    }
}

struct BranchCtx<'a> {
    prefix: &'a str,
    /// SiLU of the conditioning vector per key.
    cond: Var,
    keys: &'a [usize],
    spans: &'a [(usize, usize)],
}

impl ModelParams {
    fn attn_vars(&self, b: &Bound, prefix: &str) -> AttnVars {
        AttnVars {
            q: self.var(b, &format!("{prefix}.q")),
            k: self.var(b, &format!("{prefix}.k")),
            v: self.var(b, &format!("{prefix}.v")),
            o: self.var(b, &format!("{prefix}.o")),
        }
    }

    fn modulation(
        &self,
        g: &mut Graph,
        b: &Bound,
        name: &str,
        br: &BranchCtx,
        parts: usize,
    ) -> Result<Vec<Var>, ModelError> {
        let d = self.config().d;
        let w = self.var(b, &format!("{name}.w"));
        let bias = self.var(b, &format!("{name}.b"));
        let mods = linear(g, br.cond, w, bias)?;
        (0..parts)
            .map(|i| {
                let m = g.slice_cols(mods, i * d, d)?;
                Ok(g.gather_rows(m, br.keys)?)
            })
            .collect()
    }

    fn block(&self, g: &mut Graph, b: &Bound, i: usize, x: Var, br: &BranchCtx) -> Result<Var, ModelError> {
        let p = format!("{}.block{i}", br.prefix);
        let m = self.modulation(g, b, &format!("{p}.ada"), br, 4)?;
        let a = modulate(g, x, m[0], m[1])?;
        let att = attend(
            g,
            a,
            a,
            self.attn_vars(b, &format!("{p}.attn")),
            self.config().heads,
            br.spans,
            br.spans,
        )?;
        let x = g.add(x, att)?;
        let h = modulate(g, x, m[2], m[3])?;
        let h = linear(g, h, self.var(b, &format!("{p}.mlp.w1")), self.var(b, &format!("{p}.mlp.b1")))?;
        let h = g.gelu(h);
        let h = linear(g, h, self.var(b, &format!("{p}.mlp.w2")), self.var(b, &format!("{p}.mlp.b2")))?;
        Ok(g.add(x, h)?)
    }

    fn head(&self, g: &mut Graph, b: &Bound, x: Var, br: &BranchCtx) -> Result<Var, ModelError> {
        let p = br.prefix;
        let m = self.modulation(g, b, &format!("{p}.final.ada"), br, 2)?;
        let y = modulate(g, x, m[0], m[1])?;
        linear(g, y, self.var(b, &format!("{p}.head.w")), self.var(b, &format!("{p}.head.b")))
    }

    fn check_item(&self, item: &ForwardItem) -> Result<(), ModelError> {
        let cfg = self.config();
        let width = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(ModelError::Width { what, expected, got })
            }
        };
        width("video token", cfg.video_dim(), item.video.cols())?;
        width("physics token", cfg.physics_dim, item.physics.cols())?;
        width("video times", item.video.rows(), item.video_time.len())?;
        width("physics times", item.physics.rows(), item.physics_time.len())?;
        if let Some(f) = item.force {
            width("force token", cfg.tokens_per_frame(), f.cols())?;
        }
        for (branch, count) in [
            ("video", item.video.rows()),
            ("physics", item.physics.rows()),
            ("force", item.force.map_or(0, |f| f.rows())),
        ] {
            if count > cfg.max_tokens {
                return Err(ModelError::TokenOverflow {
                    branch,
                    count,
                    max: cfg.max_tokens,
                });
            }
        }
        if item.video.rows() == 0 || item.physics.rows() == 0 {
            return Err(ModelError::InvalidInput("empty token sequence".into()));
        }
        if let Some(&t) = item
            .video_time
            .iter()
            .chain(item.physics_time)
            .find(|t| !(0.0..=1.0).contains(*t))
        {
            return Err(ModelError::InvalidInput(format!("token time {t} outside [0, 1]")));
        }
        if !item.context.is_valid(cfg.context_vocab) {
            return Err(ModelError::InvalidInput(format!(
                "context {:?} exceeds vocabulary {}",
                item.context.0, cfg.context_vocab
            )));
        }
        Ok(())
    }

    /// Predicted velocities for a batch of records on `g`, with parameters
    /// taken from `b`.
    pub fn forward(&self, g: &mut Graph, b: &Bound, items: &[ForwardItem]) -> Result<ForwardOut, ModelError> {
        if items.is_empty() {
            return Err(ModelError::InvalidInput("empty batch".into()));
        }
        for item in items {
            self.check_item(item)?;
        }
        let cfg = self.config();
        let d = cfg.d;
        let vocab = cfg.context_vocab;

        let mut keys = Keys {
            index: HashMap::new(),
            list: Vec::new(),
        };
        let mut v_keys = Vec::new();
        let mut v_pos = Vec::new();
        let mut v_spans = Vec::new();
        let mut z_pos = Vec::new();
        let mut f_pos = Vec::new();
        // Physics rows are laid out [z tokens of every record | force tokens
        // of every record] and then permuted so each record is contiguous.
        let mut z_perm = Vec::new();
        let mut z_keys = Vec::new();
        let mut z_spans = Vec::new();
        let mut z_out = Vec::new();
        let mut phys_out_spans = Vec::new();
        let total_z: usize = items.iter().map(|it| it.physics.rows()).sum();
        let (mut z_off, mut f_off) = (0, 0);
        for (r, it) in items.iter().enumerate() {
            v_spans.push((v_keys.len(), it.video.rows()));
            for (i, &t) in it.video_time.iter().enumerate() {
                v_keys.push(keys.id(r, t));
                v_pos.push(i);
            }
            let start = z_perm.len();
            phys_out_spans.push((z_out.len(), it.physics.rows()));
            for (i, &t) in it.physics_time.iter().enumerate() {
                z_out.push(z_perm.len());
                z_perm.push(z_off + i);
                z_keys.push(keys.id(r, t));
                z_pos.push(i);
            }
            z_off += it.physics.rows();
            if let Some(f) = it.force {
                for i in 0..f.rows() {
                    z_perm.push(total_z + f_off + i);
                    z_keys.push(keys.id(r, 0.0));
                    f_pos.push(i);
                }
                f_off += f.rows();
            }
            z_spans.push((start, z_perm.len() - start));
        }

        // Conditioning vectors.
        let n_keys = keys.list.len();
        let mut feats = Vec::with_capacity(n_keys * d);
        for &(_, t) in &keys.list {
            feats.extend(timestep_features(t, d));
        }
        let feats = g.constant(Tensor::matrix(n_keys, d, feats)?);
        let temb = linear(g, feats, self.var(b, "t_embed.w1"), self.var(b, "t_embed.b1"))?;
        let temb = g.silu(temb);
        let temb = linear(g, temb, self.var(b, "t_embed.w2"), self.var(b, "t_embed.b2"))?;
        let mut shared_hot = Tensor::zeros(&[n_keys, 4 * vocab]);
        let mut force_hot = Tensor::zeros(&[n_keys, 4 * vocab]);
        for (k, &(r, _)) in keys.list.iter().enumerate() {
            let tok = items[r].context.tokens();
            for (j, s) in SHARED_SLOTS.enumerate() {
                shared_hot.set(k, j * vocab + tok[s] as usize, 1.0);
            }
            if items[r].context.has_force() {
                for (j, s) in FORCE_SLOTS.enumerate() {
                    force_hot.set(k, j * vocab + tok[s] as usize, 1.0);
                }
            }
        }
        let shared_hot = g.constant(shared_hot);
        let ctx = g.matmul(shared_hot, self.var(b, "context.shared"))?;
        let c_v = g.add(temb, ctx)?;
        let force_hot = g.constant(force_hot);
        let fctx = g.matmul(force_hot, self.var(b, "context.force"))?;
        let c_z = g.add(c_v, fctx)?;
        let sc_v = g.silu(c_v);
        let sc_z = g.silu(c_z);

        // Token embeddings.
        let videos: Vec<&Tensor> = items.iter().map(|it| it.video).collect();
        let vx = constant_rows(g, &videos)?;
        let mut hv = linear(g, vx, self.var(b, "video.in.w"), self.var(b, "video.in.b"))?;
        let pos = g.gather_rows(self.var(b, "video.pos"), &v_pos)?;
        hv = g.add(hv, pos)?;

        let physics: Vec<&Tensor> = items.iter().map(|it| it.physics).collect();
        let zx = constant_rows(g, &physics)?;
        let zproj = linear(g, zx, self.var(b, "physics.in.w"), self.var(b, "physics.in.b"))?;
        let zpos = g.gather_rows(self.var(b, "physics.pos"), &z_pos)?;
        let zproj = g.add(zproj, zpos)?;
        let forces: Vec<&Tensor> = items.iter().filter_map(|it| it.force).collect();
        let mut hz = if forces.is_empty() {
            zproj
        } else {
            let fx = constant_rows(g, &forces)?;
            let fproj = linear(g, fx, self.var(b, "physics.force.w"), self.var(b, "physics.force.b"))?;
            let fproj = g.add_row(fproj, self.var(b, "physics.force.type"))?;
            let fpos = g.gather_rows(self.var(b, "physics.pos"), &f_pos)?;
            let fproj = g.add(fproj, fpos)?;
            let all = g.concat_rows(&[zproj, fproj])?;
            g.gather_rows(all, &z_perm)?
        };

        let video_ctx = BranchCtx {
            prefix: "video",
            cond: sc_v,
            keys: &v_keys,
            spans: &v_spans,
        };
        let physics_ctx = BranchCtx {
            prefix: "physics",
            cond: sc_z,
            keys: &z_keys,
            spans: &z_spans,
        };
        let cross = cfg.resolved_cross_depths();
        for i in 0..cfg.depth {
            hv = self.block(g, b, i, hv, &video_ctx)?;
            hz = self.block(g, b, i, hz, &physics_ctx)?;
            if cross.contains(&i) {
                let nv = g.layer_norm(hv, None, None, LN_EPS)?;
                let nz = g.layer_norm(hz, None, None, LN_EPS)?;
                let vis = self.attn_vars(b, &format!("cross{i}.vis"));
                let phy = self.attn_vars(b, &format!("cross{i}.phy"));
                let dv = attend(g, nv, nz, vis, cfg.heads, &v_spans, &z_spans)?;
                let dz = attend(g, nz, nv, phy, cfg.heads, &z_spans, &v_spans)?;
                hv = g.add(hv, dv)?;
                hz = g.add(hz, dz)?;
            }
        }

        let video = self.head(g, b, hv, &video_ctx)?;
        let (hz, z_keys_out) = if z_out.len() == z_perm.len() {
            (hz, z_keys.clone())
        } else {
            (g.gather_rows(hz, &z_out)?, z_out.iter().map(|&i| z_keys[i]).collect())
        };
        let out_ctx = BranchCtx {
            keys: &z_keys_out,
            ..physics_ctx
        };
        let physics = self.head(g, b, hz, &out_ctx)?;
        Ok(ForwardOut {
            video,
            physics,
            video_spans: v_spans,
            physics_spans: phys_out_spans,
        })
    }

    /// Inference-only forward for each record, returning `(u_v, u_z)`.
    pub fn predict(&self, items: &[ForwardItem]) -> Result<Vec<(Tensor, Tensor)>, ModelError> {
        let mut g = Graph::new();
        let b = self.bind_constant(&mut g);
        let out = self.forward(&mut g, &b, items)?;
        let split = |t: &Tensor, (s, n): (usize, usize)| {
            let c = t.cols();
            Tensor::matrix(n, c, t.data()[s * c..(s + n) * c].to_vec()).expect("span")
        };
        let v = g.value(out.video);
        let z = g.value(out.physics);
        Ok(out
            .video_spans
            .iter()
            .zip(&out.physics_spans)
            .map(|(&vs, &zs)| (split(v, vs), split(z, zs)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duomodel::{ModelConfig, Partition};

    fn cfg() -> ModelConfig {
        ModelConfig {
            d: 8,
            depth: 2,
            heads: 2,
            patch: 4,
            height: 8,
            width: 8,
            physics_dim: 6,
            max_tokens: 16,
            ..Default::default()
        }
    }

    fn wave(rows: usize, cols: usize, phase: f64) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|i| (i as f64 * 0.7 + phase).sin()).collect())
            .unwrap()
    }

    struct Inputs {
        v: Tensor,
        z: Tensor,
        vt: Vec<f64>,
        zt: Vec<f64>,
        ctx: ScenarioDescriptor,
        f: Option<Tensor>,
    }

    impl Inputs {
        fn new(phase: f64, force: bool) -> Self {
            Self {
                v: wave(8, 16, phase),
                z: wave(2, 6, phase + 1.0),
                vt: vec![0.0, 0.0, 0.0, 0.0, 0.3, 0.3, 0.3, 0.3],
                zt: vec![0.0, 0.3],
                ctx: ScenarioDescriptor(if force { [1, 1, 2, 1, 3, 4, 5, 6] } else { [1, 1, 2, 0, 0, 0, 0, 0] }),
                f: force.then(|| wave(2, 4, phase + 2.0)),
            }
        }

        fn item(&self) -> ForwardItem<'_> {
            ForwardItem {
                video: &self.v,
                physics: &self.z,
                video_time: &self.vt,
                physics_time: &self.zt,
                context: &self.ctx,
                force: self.f.as_ref(),
            }
        }
    }

    fn randomise(p: &mut ModelParams, seed: u64) {
        for (k, e) in p.entries_mut().iter_mut().enumerate() {
            for (i, x) in e.value.data_mut().iter_mut().enumerate() {
                *x = 0.2 * ((i as f64 + 1.0) * 0.37 + k as f64 * 1.3 + seed as f64).sin();
            }
        }
    }

    #[test]
    fn fresh_model_predicts_zero_with_input_shapes() {
        let p = ModelParams::init(&cfg(), 1).unwrap();
        let a = Inputs::new(0.0, true);
        let out = p.predict(&[a.item()]).unwrap();
        assert_eq!(out[0].0, Tensor::zeros(&[8, 16]));
        assert_eq!(out[0].1, Tensor::zeros(&[2, 6]));
    }

    #[test]
    fn batched_forward_matches_single_records() {
        let mut p = ModelParams::init(&cfg(), 2).unwrap();
        randomise(&mut p, 0);
        let a = Inputs::new(0.0, true);
        let b = Inputs::new(0.5, false);
        let both = p.predict(&[a.item(), b.item()]).unwrap();
        let ra = p.predict(&[a.item()]).unwrap();
        let rb = p.predict(&[b.item()]).unwrap();
        assert!(both[0].0.max_abs_diff(&ra[0].0) < 1e-12);
        assert!(both[0].1.max_abs_diff(&ra[0].1) < 1e-12);
        assert!(both[1].0.max_abs_diff(&rb[0].0) < 1e-12);
        assert!(both[1].1.max_abs_diff(&rb[0].1) < 1e-12);
    }

    #[test]
    fn zero_coupling_isolates_branches() {
        let mut p = ModelParams::init(&cfg(), 3).unwrap();
        randomise(&mut p, 1);
        p.zero_cross();
        let a = Inputs::new(0.0, true);
        let mut b = Inputs::new(0.0, true);
        b.z = wave(2, 6, 9.0);
        b.f = Some(wave(2, 4, 4.0));
        b.ctx.0[4..].copy_from_slice(&[9, 9, 9, 9]);
        let (va, za) = p.predict(&[a.item()]).unwrap().remove(0);
        let (vb, zb) = p.predict(&[b.item()]).unwrap().remove(0);
        assert_eq!(va, vb);
        assert_ne!(za, zb);

        let mut c = Inputs::new(0.0, true);
        c.v = wave(8, 16, 5.0);
        let (vc, zc) = p.predict(&[c.item()]).unwrap().remove(0);
        assert_eq!(za, zc);
        assert_ne!(va, vc);
    }

    #[test]
    fn coupling_lets_physics_reach_video() {
        let mut p = ModelParams::init(&cfg(), 4).unwrap();
        randomise(&mut p, 2);
        let a = Inputs::new(0.0, false);
        let mut b = Inputs::new(0.0, false);
        b.z = wave(2, 6, 3.0);
        let va = &p.predict(&[a.item()]).unwrap()[0].0;
        let vb = &p.predict(&[b.item()]).unwrap()[0].0;
        assert_ne!(va, vb);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = ModelParams::init(&cfg(), 0).unwrap();
        let mut a = Inputs::new(0.0, false);
        a.vt[0] = 1.5;
        assert!(matches!(p.predict(&[a.item()]), Err(ModelError::InvalidInput(_))));
        let mut b = Inputs::new(0.0, false);
        b.z = wave(2, 5, 0.0);
        assert!(matches!(p.predict(&[b.item()]), Err(ModelError::Width { .. })));
        let mut c = Inputs::new(0.0, false);
        c.v = wave(20, 16, 0.0);
        c.vt = vec![0.5; 20];
        assert!(matches!(p.predict(&[c.item()]), Err(ModelError::TokenOverflow { .. })));
    }

    #[test]
    fn frozen_partitions_bind_as_constants() {
        let mut p = ModelParams::init(&cfg(), 0).unwrap();
        p.set_frozen(Partition::Video, true);
        let a = Inputs::new(0.0, false);
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let out = p.forward(&mut g, &b, &[a.item()]).unwrap();
        let s1 = g.sum(out.video);
        let s2 = g.sum(out.physics);
        let loss = g.add(s1, s2).unwrap();
        let grads = g.backward(loss).unwrap();
        for (e, &v) in p.entries().iter().zip(&b.vars) {
            if e.partition == Partition::Video {
                assert!(grads.get(v).is_none(), "{}", e.name);
            }
        }
        let head = p.position("physics.head.b").unwrap();
        assert!(grads.get(b.vars[head]).is_some());
    }

    #[test]
    fn timestep_features_at_zero() {
        let f = timestep_features(0.0, 6);
        assert_eq!(f, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }
}
