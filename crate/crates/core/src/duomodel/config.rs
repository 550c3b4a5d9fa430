use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::physworld::DESCRIPTOR_VOCAB;

/// Shape of the dual-branch transformer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub depth: usize,
    pub heads: usize,
    pub patch: usize,
    pub height: usize,
    pub width: usize,
    /// Width of one physics token (6 per ball slot).
    pub physics_dim: usize,
    /// Blocks followed by the vis/phy attention pair; `None` means
    /// `{depth/2 - 1, depth - 1}`.
    pub cross_depths: Option<Vec<usize>>,
    pub context_vocab: usize,
    /// Rows of each branch's positional table.
    pub max_tokens: usize,
    pub mlp_ratio: usize,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 128,
            depth: 4,
            heads: 4,
            patch: 4,
            height: 32,
            width: 32,
            physics_dim: 6,
            cross_depths: None,
            context_vocab: DESCRIPTOR_VOCAB as usize,
            max_tokens: 2112,
            mlp_ratio: 4,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.d == 0 || self.depth == 0 || self.heads == 0 || self.patch == 0 {
            return bad("d, depth, heads and patch must be positive".into());
        }
        if self.d % self.heads != 0 {
            return bad(format!("d = {} is not divisible by heads = {}", self.d, self.heads));
        }
        if self.height % self.patch != 0 || self.width % self.patch != 0 {
            return bad(format!(
                "patch {} does not divide frame {}x{}",
                self.patch, self.height, self.width
            ));
        }
        if self.physics_dim == 0 || self.max_tokens == 0 || self.mlp_ratio == 0 {
            return bad("physics_dim, max_tokens and mlp_ratio must be positive".into());
        }
        if self.context_vocab < 2 {
            return bad("context_vocab must be at least 2".into());
        }
        if !(self.init_std > 0.0) {
            return bad("init_std must be positive".into());
        }
        if let Some(depths) = &self.cross_depths {
            if let Some(&bad_depth) = depths.iter().find(|&&i| i >= self.depth) {
                return bad(format!(
                    "cross depth {bad_depth} outside [0, {})",
                    self.depth
                ));
            }
        }
        Ok(())
    }

    /// Sorted, de-duplicated cross-attention block indices.
    pub fn resolved_cross_depths(&self) -> Vec<usize> {
        let mut v = match &self.cross_depths {
            Some(v) => v.clone(),
            None => vec![(self.depth / 2).saturating_sub(1), self.depth - 1],
        };
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    pub fn hidden(&self) -> usize {
        self.d * self.mlp_ratio
    }

    /// Width of a video token, `p²`.
    pub fn video_dim(&self) -> usize {
        self.patch * self.patch
    }

    /// Video tokens per frame, `(H/p)(W/p)`; also the width of a force token.
    pub fn tokens_per_frame(&self) -> usize {
        (self.height / self.patch) * (self.width / self.patch)
    }
}
