use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{affine, affine_backward, gelu, gelu_backward, matmul_tn, Matrix};

/// Two-layer MLP connector: `affine -> gelu -> affine`.
///
/// The same struct carries gradients (see [`ExpertMLP::zeros_like`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertMLP {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

/// Activations kept from the forward pass.
#[derive(Debug, Clone)]
pub struct ExpertCache {
    pub input: Matrix,
    pub pre_act: Matrix,
    pub hidden: Matrix,
}

impl ExpertMLP {
    pub fn zeros(d_in: usize, d_hidden: usize, d_out: usize) -> Self {
        Self {
            w1: Matrix::zeros(d_in, d_hidden),
            b1: Matrix::zeros(1, d_hidden),
            w2: Matrix::zeros(d_hidden, d_out),
            b2: Matrix::zeros(1, d_out),
        }
    }

    /// LeCun-normal weights, zero biases.
    pub fn random<R: Rng + ?Sized>(
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w1: Matrix::random_normal(d_in, d_hidden, (1.0 / d_in as f64).sqrt(), rng),
            b1: Matrix::zeros(1, d_hidden),
            w2: Matrix::random_normal(d_hidden, d_out, (1.0 / d_hidden as f64).sqrt(), rng),
            b2: Matrix::zeros(1, d_out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let (d_in, d_h, d_out) = self.dims();
        Self::zeros(d_in, d_h, d_out)
    }

    /// `(d_in, d_hidden, d_out)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w1.rows(), self.w1.cols(), self.w2.cols())
    }

    pub fn validate(&self) -> Result<()> {
        let (d_in, d_h, d_out) = self.dims();
        self.b1.ensure_shape(1, d_h, "expert b1")?;
        self.w2.ensure_shape(d_h, d_out, "expert w2")?;
        self.b2.ensure_shape(1, d_out, "expert b2")?;
        self.w1.ensure_shape(d_in, d_h, "expert w1")?;
        for (m, name) in self.blocks().into_iter().zip(["w1", "b1", "w2", "b2"]) {
            m.ensure_finite(name)?;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|m| m.len()).sum()
    }

    pub fn blocks(&self) -> [&Matrix; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn blocks_mut(&mut self) -> [&mut Matrix; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn forward(&self, v: &Matrix) -> Result<Matrix> {
        self.check_input(v)?;
        let h = affine(v, &self.w1, &self.b1)?;
        affine(&gelu(&h), &self.w2, &self.b2)
    }

    pub fn forward_cached(&self, v: &Matrix) -> Result<(Matrix, ExpertCache)> {
        self.check_input(v)?;
        let pre_act = affine(v, &self.w1, &self.b1)?;
        let hidden = gelu(&pre_act);
        let out = affine(&hidden, &self.w2, &self.b2)?;
        Ok((
            out,
            ExpertCache {
                input: v.clone(),
                pre_act,
                hidden,
            },
        ))
    }

    /// Parameter gradients for upstream gradient `dy`. The input gradient is
    /// not formed: the vision side is frozen everywhere this is used.
    pub fn backward(&self, cache: &ExpertCache, dy: &Matrix) -> Result<ExpertMLP> {
        let g2 = affine_backward(&cache.hidden, &self.w2, dy)?;
        let dpre = gelu_backward(&cache.pre_act, &g2.dx)?;
        Ok(ExpertMLP {
            w1: matmul_tn(&cache.input, &dpre)?,
            b1: dpre.sum_rows(),
            w2: g2.dw,
            b2: g2.db,
        })
    }

    fn check_input(&self, v: &Matrix) -> Result<()> {
        if v.cols() != self.w1.rows() {
            return Err(Error::Dimension(format!(
                "expert expects {} input features, got {}",
                self.w1.rows(),
                v.cols()
            )));
        }
        Ok(())
    }

    /// `self += s * other`, blockwise.
    pub fn add_scaled(&mut self, other: &ExpertMLP, s: f64) -> Result<()> {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.add_scaled_in_place(b, s)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{grad_check, mse_loss, GradCheckConfig, Param};
    use crate::seed::rng_for;

    #[test]
    fn zero_expert_gives_zero_output() {
        let e = ExpertMLP::zeros(4, 6, 3);
        let mut rng = rng_for(0, "test");
        let v = Matrix::random_normal(5, 4, 1.0, &mut rng);
        assert!(e.forward(&v).unwrap().as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_weights_saturate_to_shifted_input() {
        let d = 5;
        let bias = 12.0;
        let e = ExpertMLP {
            w1: Matrix::identity(d),
            b1: Matrix::filled(1, d, bias),
            w2: Matrix::identity(d),
            b2: Matrix::zeros(1, d),
        };
        let mut rng = rng_for(1, "test");
        let v = Matrix::random_normal(3, d, 1.0, &mut rng);
        let y = e.forward(&v).unwrap();
        let want = v.map(|x| x + bias);
        assert!(y.max_abs_diff(&want) < 1e-9);
    }

    #[test]
    fn wrong_input_width_is_dimension_error() {
        let e = ExpertMLP::zeros(4, 6, 3);
        assert!(matches!(
            e.forward(&Matrix::zeros(2, 5)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn five_token_case_passes_grad_check() {
        let mut rng = rng_for(2, "test");
        let e = ExpertMLP::random(6, 8, 4, &mut rng);
        let v = Matrix::random_normal(5, 6, 1.0, &mut rng);
        let target = Matrix::random_normal(5, 4, 1.0, &mut rng);
        let mut params: Vec<Param> = e
            .blocks()
            .into_iter()
            .zip(["w1", "b1", "w2", "b2"])
            .map(|(m, n)| Param::trainable(n, m.clone()))
            .collect();
        let report = grad_check(
            &mut params,
            |ps| {
                let e = ExpertMLP {
                    w1: ps[0].value.clone(),
                    b1: ps[1].value.clone(),
                    w2: ps[2].value.clone(),
                    b2: ps[3].value.clone(),
                };
                let (y, cache) = e.forward_cached(&v)?;
                let (loss, dy) = mse_loss(&y, &target)?;
                let g = e.backward(&cache, &dy)?;
                Ok((loss, vec![g.w1, g.b1, g.w2, g.b2]))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_err <= 1e-4, "{report:?}");
    }
}
