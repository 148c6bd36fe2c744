//! Forward/backward kernels for the fixed set of ops the connector stack uses.

use crate::error::{Error, Result};

use super::Matrix;

fn gemm(a: &Matrix, a_trans: bool, b: &Matrix, b_trans: bool) -> Result<Matrix> {
    let (m, k) = if a_trans {
        (a.cols(), a.rows())
    } else {
        a.shape()
    };
    let (kb, n) = if b_trans {
        (b.cols(), b.rows())
    } else {
        b.shape()
    };
    if k != kb {
        return Err(Error::Dimension(format!(
            "matmul inner dimensions differ: {}x{}{} * {}x{}{}",
            a.rows(),
            a.cols(),
            if a_trans { "^T" } else { "" },
            b.rows(),
            b.cols(),
            if b_trans { "^T" } else { "" },
        )));
    }
    let mut c = Matrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return Ok(c);
    }
    // Row-major storage: element (i, j) lives at i * cols + j.
    let (rsa, csa) = if a_trans {
        (1, a.cols() as isize)
    } else {
        (a.cols() as isize, 1)
    };
    let (rsb, csb) = if b_trans {
        (1, b.cols() as isize)
    } else {
        (b.cols() as isize, 1)
    };
    // SAFETY: strides describe the exact extents of the backing buffers, and
    // `c` is a freshly allocated m x n buffer that does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_slice().as_ptr(),
            rsa,
            csa,
            b.as_slice().as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_slice().as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok(c)
}

/// `A · B`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    gemm(a, false, b, false)
}

/// `Aᵀ · B`.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    gemm(a, true, b, false)
}

/// `A · Bᵀ`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    gemm(a, false, b, true)
}

/// `X · W + b`, with `b` broadcast over rows.
pub fn affine(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(Error::Dimension(format!(
            "bias must be 1x{}, got {}x{}",
            w.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut y = matmul(x, w)?;
    let bias = b.as_slice();
    for r in 0..y.rows() {
        for (v, &bb) in y.row_mut(r).iter_mut().zip(bias) {
            *v += bb;
        }
    }
    Ok(y)
}

/// Gradients of an affine map with respect to its input, weight and bias.
#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub dx: Matrix,
    pub dw: Matrix,
    pub db: Matrix,
}

pub fn affine_backward(x: &Matrix, w: &Matrix, dy: &Matrix) -> Result<AffineGrads> {
    Ok(AffineGrads {
        dx: matmul_nt(dy, w)?,
        dw: matmul_tn(x, dy)?,
        db: dy.sum_rows(),
    })
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    let inner = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + inner.tanh())
}

#[inline]
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let inner = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = inner.tanh();
    let d_inner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
}

/// Tanh-approximation GELU, elementwise.
pub fn gelu(x: &Matrix) -> Matrix {
    x.map(gelu_scalar)
}

/// `dL/dx = dL/dy ⊙ gelu'(x)`.
pub fn gelu_backward(x: &Matrix, dy: &Matrix) -> Result<Matrix> {
    dy.hadamard(&x.map(gelu_grad_scalar))
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Backward through a row-wise softmax given its output `p`.
pub fn softmax_rows_backward(p: &Matrix, dp: &Matrix) -> Result<Matrix> {
    if p.shape() != dp.shape() {
        return Err(Error::Dimension("softmax backward shape mismatch".into()));
    }
    let mut dz = Matrix::zeros(p.rows(), p.cols());
    for r in 0..p.rows() {
        let pr = p.row(r);
        let dpr = dp.row(r);
        let dot: f64 = pr.iter().zip(dpr).map(|(a, b)| a * b).sum();
        for ((o, &pi), &dpi) in dz.row_mut(r).iter_mut().zip(pr).zip(dpr) {
            *o = pi * (dpi - dot);
        }
    }
    Ok(dz)
}

/// Numerically stable `log Σ exp(row)`.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mean squared error over all entries and its gradient.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::Dimension(format!(
            "mse: prediction {}x{} vs target {}x{}",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        )));
    }
    let count = pred.len().max(1) as f64;
    let diff = pred.sub(target)?;
    let loss = diff.sum_squares() / count;
    Ok((loss, diff.scale(2.0 / count)))
}
