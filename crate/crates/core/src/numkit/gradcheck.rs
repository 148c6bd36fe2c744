//! Central-difference gradient oracle.
//!
//! The program under test is a closure from a parameter set to
//! `(loss, per-parameter gradient)`. Every trainable scalar is perturbed by
//! `h = step_scale * max(1, |p|)` in both directions; frozen parameters must
//! report an analytic gradient of exactly zero and are never perturbed.

use serde::Serialize;

use crate::error::{Error, Result};

use super::Matrix;

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub frozen: bool,
}

impl Param {
    pub fn trainable(name: impl Into<String>, value: Matrix) -> Self {
        Self {
            name: name.into(),
            value,
            frozen: false,
        }
    }

    pub fn frozen(name: impl Into<String>, value: Matrix) -> Self {
        Self {
            name: name.into(),
            value,
            frozen: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub step_scale: f64,
    /// Lower bound on the relative-error denominator, so entries whose true
    /// gradient is ~0 are judged on absolute error.
    pub rel_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-4,
            abs_tol: 1e-7,
            step_scale: 1e-5,
            rel_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_param: String,
    pub passed: bool,
    pub checked: usize,
}

impl GradCheckReport {
    /// Combine reports from independent checks into one worst-case report.
    pub fn merge(reports: &[GradCheckReport], cfg: &GradCheckConfig) -> GradCheckReport {
        let mut out = GradCheckReport {
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            worst_param: String::new(),
            passed: true,
            checked: 0,
        };
        for r in reports {
            if r.max_rel_err > out.max_rel_err || out.worst_param.is_empty() {
                out.max_rel_err = r.max_rel_err.max(out.max_rel_err);
                out.worst_param = r.worst_param.clone();
            }
            out.max_abs_err = out.max_abs_err.max(r.max_abs_err);
            out.checked += r.checked;
        }
        out.passed = out.max_rel_err <= cfg.rel_tol || out.max_abs_err <= cfg.abs_tol;
        out
    }
}

pub fn grad_check<F>(
    params: &mut [Param],
    mut loss_fn: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Param]) -> Result<(f64, Vec<Matrix>)>,
{
    if cfg.step_scale.is_nan() || cfg.step_scale <= 0.0 {
        return Err(Error::Config("finite-difference step must be > 0".into()));
    }
    let (base, analytic) = loss_fn(params)?;
    if !base.is_finite() {
        return Err(Error::Numeric(format!("loss is {base} at the base point")));
    }
    if analytic.len() != params.len() {
        return Err(Error::Dimension(format!(
            "{} gradients for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    for (p, g) in params.iter().zip(&analytic) {
        if p.value.shape() != g.shape() {
            return Err(Error::Dimension(format!(
                "gradient for {} has shape {:?}, parameter has {:?}",
                p.name,
                g.shape(),
                p.value.shape()
            )));
        }
    }

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_param: String::new(),
        passed: false,
        checked: 0,
    };
    let note = |name: &str, idx: usize, a: f64, n: f64, report: &mut GradCheckReport| {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(cfg.rel_floor);
        if rel > report.max_rel_err || report.worst_param.is_empty() {
            report.max_rel_err = rel.max(report.max_rel_err);
            report.worst_param = format!("{name}[{idx}]");
        }
        report.max_abs_err = report.max_abs_err.max(abs);
        report.checked += 1;
    };

    for pi in 0..params.len() {
        let grad = analytic[pi].clone();
        if params[pi].frozen {
            let name = params[pi].name.clone();
            for (idx, &a) in grad.as_slice().iter().enumerate() {
                note(&name, idx, a, 0.0, &mut report);
            }
            continue;
        }
        for idx in 0..params[pi].value.len() {
            let original = params[pi].value.as_slice()[idx];
            let h = cfg.step_scale * original.abs().max(1.0);
            let up = original + h;
            let down = original - h;

            params[pi].value.as_mut_slice()[idx] = up;
            let f_up = loss_fn(params)?.0;
            params[pi].value.as_mut_slice()[idx] = down;
            let f_down = loss_fn(params)?.0;
            params[pi].value.as_mut_slice()[idx] = original;

            if !f_up.is_finite() || !f_down.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss while perturbing {}[{idx}]",
                    params[pi].name
                )));
            }
            let numeric = (f_up - f_down) / (up - down);
            let name = params[pi].name.clone();
            note(&name, idx, grad.as_slice()[idx], numeric, &mut report);
        }
    }
    report.passed = report.max_rel_err <= cfg.rel_tol || report.max_abs_err <= cfg.abs_tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{
        affine, affine_backward, gelu, gelu_backward, mse_loss, softmax_rows, softmax_rows_backward,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn half_square_at_three() {
        let mut params = vec![Param::trainable("p", Matrix::row_vector(&[3.0]))];
        let cfg = GradCheckConfig::default();
        let report = grad_check(
            &mut params,
            |ps| {
                let p = ps[0].value.get(0, 0);
                Ok((0.5 * p * p, vec![Matrix::row_vector(&[p])]))
            },
            &cfg,
        )
        .unwrap();
        assert!(report.max_abs_err < 1e-8, "{report:?}");
        assert!(report.passed);
    }

    #[test]
    fn frozen_parameter_reports_zero_both_ways() {
        let mut params = vec![
            Param::trainable("w", Matrix::row_vector(&[2.0])),
            Param::frozen("c", Matrix::row_vector(&[5.0])),
        ];
        let cfg = GradCheckConfig::default();
        let report = grad_check(
            &mut params,
            |ps| {
                let w = ps[0].value.get(0, 0);
                let c = ps[1].value.get(0, 0);
                Ok((w * c, vec![Matrix::row_vector(&[c]), Matrix::zeros(1, 1)]))
            },
            &cfg,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");

        // A frozen parameter that leaks a gradient is caught.
        let report = grad_check(
            &mut params,
            |ps| {
                let w = ps[0].value.get(0, 0);
                let c = ps[1].value.get(0, 0);
                Ok((
                    w * c,
                    vec![Matrix::row_vector(&[c]), Matrix::row_vector(&[w])],
                ))
            },
            &cfg,
        )
        .unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst_param, "c[0]");
    }

    #[test]
    fn non_finite_loss_is_numeric_error() {
        let mut params = vec![Param::trainable("p", Matrix::row_vector(&[1.0]))];
        let err = grad_check(
            &mut params,
            |_| Ok((f64::NAN, vec![Matrix::zeros(1, 1)])),
            &GradCheckConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let mut params = vec![Param::trainable("p", Matrix::row_vector(&[1.5]))];
        let report = grad_check(
            &mut params,
            |ps| {
                let p = ps[0].value.get(0, 0);
                Ok((p * p, vec![Matrix::row_vector(&[p])]))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(!report.passed);
    }

    /// affine -> gelu -> affine -> softmax -> mse, every block trainable.
    #[test]
    fn composed_kernels_pass_on_random_shapes() {
        let cfg = GradCheckConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(1..6);
            let d_in = rng.random_range(1..7);
            let d_h = rng.random_range(1..7);
            let d_out = rng.random_range(2..6);
            let x = Matrix::random_normal(n, d_in, 1.0, &mut rng);
            let target = Matrix::random_normal(n, d_out, 0.3, &mut rng);
            let mut params = vec![
                Param::trainable("w1", Matrix::random_normal(d_in, d_h, 0.7, &mut rng)),
                Param::trainable("b1", Matrix::random_normal(1, d_h, 0.3, &mut rng)),
                Param::trainable("w2", Matrix::random_normal(d_h, d_out, 0.7, &mut rng)),
                Param::trainable("b2", Matrix::random_normal(1, d_out, 0.3, &mut rng)),
            ];
            let report = grad_check(
                &mut params,
                |ps| {
                    let h = affine(&x, &ps[0].value, &ps[1].value)?;
                    let a = gelu(&h);
                    let z = affine(&a, &ps[2].value, &ps[3].value)?;
                    let p = softmax_rows(&z);
                    let (loss, dp) = mse_loss(&p, &target)?;
                    let dz = softmax_rows_backward(&p, &dp)?;
                    let g2 = affine_backward(&a, &ps[2].value, &dz)?;
                    let dh = gelu_backward(&h, &g2.dx)?;
                    let g1 = affine_backward(&x, &ps[0].value, &dh)?;
                    Ok((loss, vec![g1.dw, g1.db, g2.dw, g2.db]))
                },
                &cfg,
            )
            .unwrap();
            assert!(report.passed, "{report:?}");
            assert!(report.max_rel_err <= 1e-4, "{report:?}");
        }
    }

    #[test]
    fn affine_weight_gradient_on_3x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Matrix::random_normal(3, 4, 1.0, &mut rng);
        let target = Matrix::random_normal(3, 2, 1.0, &mut rng);
        let mut params = vec![
            Param::trainable("w", Matrix::random_normal(4, 2, 1.0, &mut rng)),
            Param::trainable("b", Matrix::random_normal(1, 2, 1.0, &mut rng)),
        ];
        let report = grad_check(
            &mut params,
            |ps| {
                let y = affine(&x, &ps[0].value, &ps[1].value)?;
                let (loss, dy) = mse_loss(&y, &target)?;
                let g = affine_backward(&x, &ps[0].value, &dy)?;
                Ok((loss, vec![g.dw, g.db]))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_err <= 1e-4, "{report:?}");
    }
}
