use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::seed::{fnv1a, rng_for};

/// Frozen hashed bag-of-tokens text embedder with an L2-normalized output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmbedder {
    proj: Matrix,
}

/// Lowercased maximal alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl TextEmbedder {
    pub fn new(hash_dim: usize, dim: usize, seed: u64) -> Result<Self> {
        if hash_dim == 0 || dim == 0 {
            return Err(Error::Config("embedder dimensions must be positive".into()));
        }
        let mut rng = rng_for(seed, "text-embedder");
        Ok(Self {
            proj: Matrix::random_normal(hash_dim, dim, 1.0, &mut rng),
        })
    }

    pub fn hash_dim(&self) -> usize {
        self.proj.rows()
    }

    pub fn dim(&self) -> usize {
        self.proj.cols()
    }

    pub fn projection(&self) -> &Matrix {
        &self.proj
    }

    /// Embedding as a `1 × dim` row. Text without tokens maps to zero.
    pub fn embed(&self, text: &str) -> Matrix {
        let mut out = vec![0.0; self.dim()];
        for tok in tokenize(text) {
            let bucket = (fnv1a(tok.as_bytes()) % self.hash_dim() as u64) as usize;
            for (o, &p) in out.iter_mut().zip(self.proj.row(bucket)) {
                *o += p;
            }
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
        }
        Matrix::row_vector(&out)
    }
}

pub fn cosine(a: &Matrix, b: &Matrix) -> f64 {
    let dot: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum();
    dot / (a.sum_squares().sqrt() * b.sum_squares().sqrt())
}
