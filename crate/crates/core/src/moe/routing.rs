use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{affine, Matrix};

/// Linear router `logits = V · W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateNet {
    pub w: Matrix,
    pub b: Matrix,
}

impl GateNet {
    /// All-zero gate: uniform routing probabilities for every token.
    pub fn zeros(d_in: usize, num_experts: usize) -> Self {
        Self {
            w: Matrix::zeros(d_in, num_experts),
            b: Matrix::zeros(1, num_experts),
        }
    }

    pub fn num_experts(&self) -> usize {
        self.w.cols()
    }

    pub fn logits(&self, v: &Matrix) -> Result<Matrix> {
        affine(v, &self.w, &self.b)
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Indices of the `k` largest entries, largest first; equal values keep the
/// lower expert index first.
pub fn top_k_indices(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Keep the `k` largest routing probabilities and zero the rest. With
/// `renormalize`, kept entries are divided by their sum.
///
/// Returns the dense weight row and the kept indices in selection order.
pub fn route_top_k(
    prob_row: &[f64],
    k: usize,
    renormalize: bool,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if k < 1 || k > prob_row.len() {
        return Err(Error::Config(format!(
            "top-k must satisfy 1 <= k <= {}, got {k}",
            prob_row.len()
        )));
    }
    let kept = top_k_indices(prob_row, k);
    let mut weights = vec![0.0; prob_row.len()];
    let kept_sum: f64 = kept.iter().map(|&j| prob_row[j]).sum();
    for &j in &kept {
        weights[j] = if renormalize {
            prob_row[j] / kept_sum
        } else {
            prob_row[j]
        };
    }
    Ok((weights, kept))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faithful_and_renormalized_closed_form() {
        let p = [0.5, 0.3, 0.15, 0.05];
        let (w, kept) = route_top_k(&p, 2, false).unwrap();
        assert_eq!(w, vec![0.5, 0.3, 0.0, 0.0]);
        assert_eq!(kept, vec![0, 1]);
        let (w, _) = route_top_k(&p, 2, true).unwrap();
        assert!((w[0] - 0.625).abs() < 1e-12);
        assert!((w[1] - 0.375).abs() < 1e-12);
        assert_eq!(&w[2..], &[0.0, 0.0]);
    }

    #[test]
    fn k_equals_l_passes_through() {
        let p = [0.1, 0.4, 0.2, 0.3];
        for renorm in [false, true] {
            let (w, _) = route_top_k(&p, 4, renorm).unwrap();
            for (a, b) in w.iter().zip(&p) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ties_prefer_lower_index() {
        let (_, kept) = route_top_k(&[0.25; 4], 2, true).unwrap();
        assert_eq!(kept, vec![0, 1]);
        let (_, kept) = route_top_k(&[0.2, 0.3, 0.3, 0.2], 3, true).unwrap();
        assert_eq!(kept, vec![1, 2, 0]);
    }

    #[test]
    fn bad_k_is_config_error() {
        assert!(matches!(
            route_top_k(&[0.5, 0.5], 0, true),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            route_top_k(&[0.5, 0.5], 3, true),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_gate_is_uniform() {
        let g = GateNet::zeros(3, 4);
        let logits = g.logits(&Matrix::filled(2, 3, 1.5)).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
    }
}
