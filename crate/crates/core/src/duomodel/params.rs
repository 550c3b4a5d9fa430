use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError};
use crate::diffengine::{Graph, Tensor, Var};

/// Disjoint parameter groups with independent freeze flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Video,
    Physics,
    Cross,
    /// Timestep MLP and the shared context table, read by both branches.
    Shared,
}

impl Partition {
    pub const ALL: [Partition; 4] = [
        Partition::Video,
        Partition::Physics,
        Partition::Cross,
        Partition::Shared,
    ];

    pub fn code(self) -> u8 {
        match self {
            Partition::Video => 0,
            Partition::Physics => 1,
            Partition::Cross => 2,
            Partition::Shared => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub partition: Partition,
    pub value: Tensor,
}

/// Every weight of the model, in a fixed order, plus per-partition freeze
/// flags.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    entries: Vec<ParamEntry>,
    index: BTreeMap<String, usize>,
    frozen: [bool; 4],
}

/// Names and shapes in declaration order.
pub(crate) fn layout(cfg: &ModelConfig) -> Vec<(String, Partition, Vec<usize>, bool)> {
    let d = cfg.d;
    let h = cfg.hidden();
    let v = cfg.context_vocab * 4;
    let mut out = Vec::new();
    let mut add = |name: String, part: Partition, shape: Vec<usize>, zero: bool| {
        out.push((name, part, shape, zero));
    };
    add("t_embed.w1".into(), Partition::Shared, vec![d, d], false);
    add("t_embed.b1".into(), Partition::Shared, vec![1, d], true);
    add("t_embed.w2".into(), Partition::Shared, vec![d, d], false);
    add("t_embed.b2".into(), Partition::Shared, vec![1, d], true);
    add("context.shared".into(), Partition::Shared, vec![v, d], false);

    for (branch, part, in_dim) in [
        ("video", Partition::Video, cfg.video_dim()),
        ("physics", Partition::Physics, cfg.physics_dim),
    ] {
        add(format!("{branch}.in.w"), part, vec![in_dim, d], false);
        add(format!("{branch}.in.b"), part, vec![1, d], true);
        add(format!("{branch}.pos"), part, vec![cfg.max_tokens, d], false);
        if part == Partition::Physics {
            add("physics.force.w".into(), part, vec![cfg.tokens_per_frame(), d], false);
            add("physics.force.b".into(), part, vec![1, d], true);
            add("physics.force.type".into(), part, vec![1, d], false);
            add("context.force".into(), part, vec![v, d], false);
        }
        for i in 0..cfg.depth {
            let p = format!("{branch}.block{i}");
            add(format!("{p}.ada.w"), part, vec![d, 4 * d], false);
            add(format!("{p}.ada.b"), part, vec![1, 4 * d], true);
            for m in ["q", "k", "v", "o"] {
                add(format!("{p}.attn.{m}"), part, vec![d, d], false);
            }
            add(format!("{p}.mlp.w1"), part, vec![d, h], false);
            add(format!("{p}.mlp.b1"), part, vec![1, h], true);
            add(format!("{p}.mlp.w2"), part, vec![h, d], false);
            add(format!("{p}.mlp.b2"), part, vec![1, d], true);
        }
        add(format!("{branch}.final.ada.w"), part, vec![d, 2 * d], false);
        add(format!("{branch}.final.ada.b"), part, vec![1, 2 * d], true);
        add(format!("{branch}.head.w"), part, vec![d, in_dim], true);
        add(format!("{branch}.head.b"), part, vec![1, in_dim], true);
    }
    for i in cfg.resolved_cross_depths() {
        for side in ["vis", "phy"] {
            for m in ["q", "k", "v", "o"] {
                add(format!("cross{i}.{side}.{m}"), Partition::Cross, vec![d, d], m == "o");
            }
        }
    }
    out
}

fn truncated_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

impl ModelParams {
    /// Truncated-normal (`|x| ≤ 2σ`) projections, zero biases, zero velocity
    /// heads and zero cross-attention output projections.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = layout(config)
            .into_iter()
            .map(|(name, partition, shape, zero)| {
                let n: usize = shape.iter().product();
                let data = if zero {
                    vec![0.0; n]
                } else {
                    (0..n).map(|_| truncated_normal(&mut rng, config.init_std)).collect()
                };
                ParamEntry {
                    name,
                    partition,
                    value: Tensor::new(shape, data).expect("layout shape"),
                }
            })
            .collect();
        Ok(Self::from_entries(config.clone(), entries))
    }

    pub(crate) fn from_entries(config: ModelConfig, entries: Vec<ParamEntry>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), i))
            .collect();
        Self {
            config,
            entries,
            index,
            frozen: [false; 4],
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].value)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn count_in(&self, part: Partition) -> usize {
        self.entries
            .iter()
            .filter(|e| e.partition == part)
            .map(|e| e.value.len())
            .sum()
    }

    pub fn is_frozen(&self, part: Partition) -> bool {
        self.frozen[part.code() as usize]
    }

    pub fn set_frozen(&mut self, part: Partition, frozen: bool) {
        self.frozen[part.code() as usize] = frozen;
    }

    pub fn is_trainable(&self, i: usize) -> bool {
        !self.is_frozen(self.entries[i].partition)
    }

    /// Zeroes every cross-attention weight, which isolates the two branches.
    pub fn zero_cross(&mut self) {
        for e in self.entries.iter_mut().filter(|e| e.partition == Partition::Cross) {
            e.value.data_mut().fill(0.0);
        }
    }

    /// Copies every tensor of `part` from `other`, which must share the
    /// same configuration.
    pub fn copy_partition(&mut self, other: &ModelParams, part: Partition) -> Result<(), ModelError> {
        if other.config != self.config {
            return Err(ModelError::InvalidConfig("partition copy between different configs".into()));
        }
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            if a.partition == part {
                a.value = b.value.clone();
            }
        }
        Ok(())
    }

    /// Puts every parameter on `g`: trainable ones as gradient leaves,
    /// frozen ones as constants.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|e| {
                if self.is_frozen(e.partition) {
                    g.constant(e.value.clone())
                } else {
                    g.param(e.value.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// Every parameter as a constant, for inference.
    pub fn bind_constant(&self, g: &mut Graph) -> Bound {
        Bound {
            vars: self.entries.iter().map(|e| g.constant(e.value.clone())).collect(),
        }
    }

    pub(crate) fn var(&self, bound: &Bound, name: &str) -> Var {
        bound.vars[self.index[name]]
    }
}

/// Graph handles for one [`ModelParams`], in entry order.
#[derive(Clone, Debug)]
pub struct Bound {
    pub vars: Vec<Var>,
}

impl Bound {
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }
}
