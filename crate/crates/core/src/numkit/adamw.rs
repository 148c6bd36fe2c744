use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Matrix;

/// AdamW hyperparameters. Defaults follow the connector training recipe:
/// β = (0.9, 0.95), ε = 1e-8, decoupled weight decay 0.1, global-norm clip 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.1,
            clip_norm: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamWState {
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamWState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let m: Vec<Matrix> = params
            .into_iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.v
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    /// Global L2 norm of the gradients before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

pub fn global_norm(grads: &[Matrix]) -> f64 {
    grads.iter().map(Matrix::sum_squares).sum::<f64>().sqrt()
}

/// One AdamW update with bias-corrected moments and decoupled weight decay.
///
/// Gradients are clipped by their global L2 norm before the moment update.
pub fn adamw_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut AdamWState,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<StepInfo> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adamw: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Dimension(format!(
                "adamw: param {:?}, grad {:?}, moment {:?}",
                p.shape(),
                g.shape(),
                m.shape()
            )));
        }
    }
    if lr.is_nan() || lr < 0.0 {
        return Err(Error::Config(format!(
            "learning rate must be >= 0, got {lr}"
        )));
    }

    let grad_norm = global_norm(grads);
    if !grad_norm.is_finite() {
        return Err(Error::Numeric("non-finite gradient norm".into()));
    }
    let clip_scale = match cfg.clip_norm {
        Some(max) if grad_norm > max => max / grad_norm,
        _ => 1.0,
    };

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - lr * cfg.weight_decay;

    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        let ps = p.as_mut_slice();
        let gs = g.as_slice();
        let ms = m.as_mut_slice();
        let vs = v.as_mut_slice();
        for i in 0..ps.len() {
            let gi = gs[i] * clip_scale;
            ms[i] = cfg.beta1 * ms[i] + (1.0 - cfg.beta1) * gi;
            vs[i] = cfg.beta2 * vs[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = ms[i] / bc1;
            let v_hat = vs[i] / bc2;
            ps[i] = ps[i] * decay - lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(StepInfo {
        grad_norm,
        clipped: clip_scale < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step_scalar(p: &mut Matrix, g: f64, state: &mut AdamWState, lr: f64, cfg: &AdamWConfig) {
        adamw_step(&mut [p], &[Matrix::row_vector(&[g])], state, lr, cfg).unwrap();
    }

    #[test]
    fn zero_grads_no_decay_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = Matrix::random_normal(3, 4, 1.0, &mut rng);
        let before = p.clone();
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut st = AdamWState::new([&p]);
        for _ in 0..5 {
            adamw_step(&mut [&mut p], &[Matrix::zeros(3, 4)], &mut st, 1e-2, &cfg).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step(), 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        for g in [0.3, -0.02, 0.9] {
            let mut p = Matrix::row_vector(&[1.0]);
            let mut st = AdamWState::new([&p]);
            step_scalar(&mut p, g, &mut st, 1e-3, &cfg);
            let moved = 1.0 - p.get(0, 0);
            assert!(
                (moved - 1e-3 * g.signum()).abs() < 1e-3 * 1e-6,
                "g={g} moved={moved}"
            );
        }
    }

    #[test]
    fn lr_zero_changes_nothing_and_pure_decay_shrinks_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = AdamWConfig::default();
        let mut p = Matrix::random_normal(2, 5, 1.0, &mut rng);
        let g = Matrix::random_normal(2, 5, 1.0, &mut rng);
        let before = p.clone();
        let mut st = AdamWState::new([&p]);
        adamw_step(&mut [&mut p], &[g], &mut st, 0.0, &cfg).unwrap();
        assert_eq!(p, before);

        let lr = 0.01;
        let mut st = AdamWState::new([&p]);
        adamw_step(&mut [&mut p], &[Matrix::zeros(2, 5)], &mut st, lr, &cfg).unwrap();
        let factor = 1.0 - lr * cfg.weight_decay;
        for (a, b) in p.as_slice().iter().zip(before.as_slice()) {
            assert_eq!(*a, b * factor);
        }
    }

    #[test]
    fn three_step_trajectory_matches_hand_derivation() {
        let cfg = AdamWConfig {
            clip_norm: None,
            ..AdamWConfig::default()
        };
        let lr = 0.05;
        let grads = [0.4, -0.1, 0.25];

        // Independent re-derivation of the update rule.
        let (mut x, mut m, mut v) = (0.7f64, 0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as f64;
            m = 0.9 * m + 0.1 * g;
            v = 0.95 * v + 0.05 * g * g;
            let mh = m / (1.0 - 0.9f64.powf(t));
            let vh = v / (1.0 - 0.95f64.powf(t));
            x = x - lr * 0.1 * x - lr * mh / (vh.sqrt() + 1e-8);
            expected.push(x);
        }

        let mut p = Matrix::row_vector(&[0.7]);
        let mut st = AdamWState::new([&p]);
        for (g, want) in grads.iter().zip(&expected) {
            step_scalar(&mut p, *g, &mut st, lr, &cfg);
            assert!(
                (p.get(0, 0) - want).abs() < 1e-15,
                "{} vs {want}",
                p.get(0, 0)
            );
        }
    }

    #[test]
    fn clipping_uses_global_norm() {
        let cfg = AdamWConfig::default();
        let mut a = Matrix::row_vector(&[0.0]);
        let mut b = Matrix::row_vector(&[0.0]);
        let mut st = AdamWState::new([&a, &b]);
        let info = adamw_step(
            &mut [&mut a, &mut b],
            &[Matrix::row_vector(&[3.0]), Matrix::row_vector(&[4.0])],
            &mut st,
            1e-3,
            &cfg,
        )
        .unwrap();
        assert_eq!(info.grad_norm, 5.0);
        assert!(info.clipped);
        assert!((st.first_moments()[0].get(0, 0) - 0.1 * 0.6).abs() < 1e-15);
        assert!((st.first_moments()[1].get(0, 0) - 0.1 * 0.8).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Matrix::zeros(2, 2);
        let mut st = AdamWState::new([&p]);
        let err = adamw_step(
            &mut [&mut p],
            &[Matrix::zeros(1, 2)],
            &mut st,
            0.1,
            &AdamWConfig::default(),
        );
        assert!(matches!(err, Err(Error::Dimension(_))));
    }
}
