use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{matmul, matmul_nt, matmul_tn, Matrix};
use crate::seed::rng_for;

/// Frozen linear decoder head with a trainable low-rank adapter:
/// `out = pooled · (W + scale · A · B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderHead {
    w: Matrix,
    pub lora_a: Matrix,
    pub lora_b: Matrix,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct LoraGrads {
    pub lora_a: Matrix,
    pub lora_b: Matrix,
    /// Gradient with respect to the pooled input.
    pub pooled: Matrix,
}

impl DecoderHead {
    /// Seeded frozen `W`, Gaussian `A`, zero `B` (step-0 output equals `pooled · W`).
    pub fn new(d_out: usize, dim: usize, rank: usize, scale: f64, seed: u64) -> Result<Self> {
        if d_out == 0 || dim == 0 || rank == 0 {
            return Err(Error::Config(
                "decoder head dimensions must be positive".into(),
            ));
        }
        let mut rng = rng_for(seed, "decoder-head");
        let std = (1.0 / d_out as f64).sqrt();
        let w = Matrix::random_normal(d_out, dim, std, &mut rng);
        let lora_a = Matrix::random_normal(d_out, rank, std, &mut rng);
        Ok(Self {
            w,
            lora_a,
            lora_b: Matrix::zeros(rank, dim),
            scale,
        })
    }

    pub fn from_parts(w: Matrix, lora_a: Matrix, lora_b: Matrix, scale: f64) -> Result<Self> {
        let h = Self {
            w,
            lora_a,
            lora_b,
            scale,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let (d_out, dim) = self.w.shape();
        let rank = self.lora_a.cols();
        self.lora_a.ensure_shape(d_out, rank, "lora A")?;
        self.lora_b.ensure_shape(rank, dim, "lora B")?;
        for (m, name) in [
            (&self.w, "head W"),
            (&self.lora_a, "lora A"),
            (&self.lora_b, "lora B"),
        ] {
            m.ensure_finite(name)?;
        }
        Ok(())
    }

    pub fn frozen_weight(&self) -> &Matrix {
        &self.w
    }

    pub fn d_out(&self) -> usize {
        self.w.rows()
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    pub fn rank(&self) -> usize {
        self.lora_a.cols()
    }

    pub fn effective_weight(&self) -> Result<Matrix> {
        let mut w = matmul(&self.lora_a, &self.lora_b)?;
        w.scale_in_place(self.scale);
        w.add_scaled_in_place(&self.w, 1.0)?;
        Ok(w)
    }

    /// Frozen path only.
    pub fn decode_frozen(&self, pooled: &Matrix) -> Result<Matrix> {
        matmul(pooled, &self.w)
    }

    pub fn decode(&self, pooled: &Matrix) -> Result<Matrix> {
        if pooled.cols() != self.d_out() {
            return Err(Error::Dimension(format!(
                "head expects {} features, got {}",
                self.d_out(),
                pooled.cols()
            )));
        }
        matmul(pooled, &self.effective_weight()?)
    }

    /// Gradients of the adapter factors and the pooled input. `W` never
    /// receives a gradient.
    pub fn backward(&self, pooled: &Matrix, d_out: &Matrix) -> Result<LoraGrads> {
        let d_weff = matmul_tn(pooled, d_out)?;
        let mut lora_a = matmul_nt(&d_weff, &self.lora_b)?;
        lora_a.scale_in_place(self.scale);
        let mut lora_b = matmul_tn(&self.lora_a, &d_weff)?;
        lora_b.scale_in_place(self.scale);
        Ok(LoraGrads {
            lora_a,
            lora_b,
            pooled: matmul_nt(d_out, &self.effective_weight()?)?,
        })
    }

    /// Frozen-path input gradient (alignment stage: no adapter).
    pub fn backward_frozen(&self, d_out: &Matrix) -> Result<Matrix> {
        matmul_nt(d_out, &self.w)
    }

    pub fn lora_blocks_mut(&mut self) -> [&mut Matrix; 2] {
        [&mut self.lora_a, &mut self.lora_b]
    }
}

/// Mean over consecutive groups of `tokens_per_item` rows: `(B·N) × D → B × D`.
pub fn mean_pool(tokens: &Matrix, tokens_per_item: usize) -> Result<Matrix> {
    if tokens_per_item == 0 || !tokens.rows().is_multiple_of(tokens_per_item) {
        return Err(Error::Dimension(format!(
            "{} rows do not split into groups of {tokens_per_item}",
            tokens.rows()
        )));
    }
    let items = tokens.rows() / tokens_per_item;
    let mut out = Matrix::zeros(items, tokens.cols());
    let inv = 1.0 / tokens_per_item as f64;
    for b in 0..items {
        let row = out.row_mut(b);
        for t in 0..tokens_per_item {
            for (o, &v) in row.iter_mut().zip(tokens.row(b * tokens_per_item + t)) {
                *o += v;
            }
        }
        row.iter_mut().for_each(|o| *o *= inv);
    }
    Ok(out)
}

/// Backward of [`mean_pool`].
pub fn mean_pool_backward(d_pooled: &Matrix, tokens_per_item: usize) -> Matrix {
    let mut out = Matrix::zeros(d_pooled.rows() * tokens_per_item, d_pooled.cols());
    let inv = 1.0 / tokens_per_item as f64;
    for b in 0..d_pooled.rows() {
        for t in 0..tokens_per_item {
            for (o, &g) in out
                .row_mut(b * tokens_per_item + t)
                .iter_mut()
                .zip(d_pooled.row(b))
            {
                *o = g * inv;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{grad_check, mse_loss, GradCheckConfig, Param};

    #[test]
    fn zero_adapter_is_frozen_head() {
        let head = DecoderHead::new(6, 5, 2, 2.0, 0).unwrap();
        let mut rng = rng_for(1, "t");
        let x = Matrix::random_normal(3, 6, 1.0, &mut rng);
        assert_eq!(head.decode(&x).unwrap(), head.decode_frozen(&x).unwrap());

        let mut h2 = head.clone();
        h2.lora_b = Matrix::random_normal(2, 5, 1.0, &mut rng);
        h2.lora_a = Matrix::zeros(6, 2);
        assert_eq!(h2.decode(&x).unwrap(), head.decode_frozen(&x).unwrap());
    }

    #[test]
    fn full_rank_adapter_reproduces_any_update() {
        let d = 4;
        let mut rng = rng_for(2, "t");
        let delta = Matrix::random_normal(d, d, 1.0, &mut rng);
        let mut head = DecoderHead::new(d, d, d, 2.0, 3).unwrap();
        head.lora_a = Matrix::identity(d);
        head.lora_b = delta.scale(0.5);
        let want = head.frozen_weight().add(&delta).unwrap();
        assert!(head.effective_weight().unwrap().max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn adapter_gradients_pass_grad_check_and_w_stays_frozen() {
        let mut rng = rng_for(4, "t");
        let base = DecoderHead::new(6, 5, 2, 2.0, 5).unwrap();
        let x = Matrix::random_normal(3, 6, 1.0, &mut rng);
        let target = Matrix::random_normal(3, 5, 1.0, &mut rng);
        let mut params = vec![
            Param::frozen("W", base.frozen_weight().clone()),
            Param::trainable("A", base.lora_a.clone()),
            Param::trainable("B", Matrix::random_normal(2, 5, 0.5, &mut rng)),
        ];
        let report = grad_check(
            &mut params,
            |ps| {
                let h = DecoderHead::from_parts(
                    ps[0].value.clone(),
                    ps[1].value.clone(),
                    ps[2].value.clone(),
                    2.0,
                )?;
                let (loss, d) = mse_loss(&h.decode(&x)?, &target)?;
                let g = h.backward(&x, &d)?;
                Ok((loss, vec![Matrix::zeros(6, 5), g.lora_a, g.lora_b]))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_err <= 1e-4, "{report:?}");
    }

    #[test]
    fn mean_pool_round_trip_shapes() {
        let m = Matrix::from_rows(&[
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![5.0, 6.0],
            vec![7.0, 8.0],
        ])
        .unwrap();
        let p = mean_pool(&m, 2).unwrap();
        assert_eq!(p.as_slice(), &[2.0, 3.0, 6.0, 7.0]);
        assert!(mean_pool(&m, 3).is_err());
        let back = mean_pool_backward(&Matrix::filled(2, 2, 1.0), 2);
        assert_eq!(back.shape(), (4, 2));
        assert!(back.as_slice().iter().all(|&v| v == 0.5));
    }
}
