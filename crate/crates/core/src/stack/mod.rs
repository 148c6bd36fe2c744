//! Frozen desk-scale stand-ins for the vision encoder, the text-side target
//! representation, and the language-model head.

mod embedder;
mod encoder;
mod head;

pub use embedder::{cosine, tokenize, TextEmbedder};
pub use encoder::{PatchEncoder, PATCH_FEATURES};
pub use head::{mean_pool, mean_pool_backward, DecoderHead, LoraGrads};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Dimensions of the frozen stack and the connector between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackDims {
    pub grid: usize,
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub embed_dim: usize,
    pub hash_dim: usize,
    pub lora_rank: usize,
}

impl Default for StackDims {
    fn default() -> Self {
        Self {
            grid: 7,
            d_in: 32,
            d_hidden: 64,
            d_out: 48,
            embed_dim: 48,
            hash_dim: 512,
            lora_rank: 4,
        }
    }
}

/// LoRA scale `α / r` with `α = 8`.
pub const LORA_ALPHA: f64 = 8.0;

/// All frozen components, rebuilt bit-identically from `(seed, dims)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyStack {
    pub dims: StackDims,
    pub seed: u64,
    pub encoder: PatchEncoder,
    pub embedder: TextEmbedder,
    pub head: DecoderHead,
}

impl ToyStack {
    pub fn new(dims: StackDims, seed: u64) -> Result<Self> {
        Ok(Self {
            dims,
            seed,
            encoder: PatchEncoder::new(dims.grid, dims.d_in, seed)?,
            embedder: TextEmbedder::new(dims.hash_dim, dims.embed_dim, seed)?,
            head: DecoderHead::new(
                dims.d_out,
                dims.embed_dim,
                dims.lora_rank,
                LORA_ALPHA / dims.lora_rank as f64,
                seed,
            )?,
        })
    }

    pub fn num_tokens(&self) -> usize {
        self.dims.grid * self.dims.grid
    }
}
