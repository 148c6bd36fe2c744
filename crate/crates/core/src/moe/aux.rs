//! Balance loss, router z-loss, and routing usage statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::log_sum_exp;

use super::connector::RoutingTrace;

/// Coefficients for the optional balance + router z-loss ("bz-loss").
/// Off by default; coefficient defaults follow common switch-style MoE practice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxLossConfig {
    pub enabled: bool,
    pub balance_coef: f64,
    pub z_coef: f64,
}

impl Default for AuxLossConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            balance_coef: 0.01,
            z_coef: 0.001,
        }
    }
}

impl AuxLossConfig {
    pub fn on() -> Self {
        Self {
            enabled: true,
            ..Self::default()
        }
    }

    /// Weighted contribution to the training objective.
    pub fn weighted(&self, losses: &AuxLosses) -> f64 {
        if self.enabled {
            self.balance_coef * losses.balance + self.z_coef * losses.z
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxLosses {
    pub balance: f64,
    pub z: f64,
    /// Fraction of (token, kept-slot) assignments per expert.
    pub fractions: Vec<f64>,
    /// Mean routing probability per expert.
    pub mean_probs: Vec<f64>,
}

/// `balance = L · Σ_j f_j · P_j`, `z = mean_i (log Σ_j exp(logit_ij))²`.
pub fn aux_losses(trace: &RoutingTrace) -> AuxLosses {
    let n = trace.num_tokens();
    let l = trace.num_experts();
    let mut counts = vec![0usize; l];
    for kept in &trace.kept {
        for &j in kept {
            counts[j] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let fractions: Vec<f64> = counts
        .iter()
        .map(|&c| {
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        })
        .collect();
    let mut mean_probs = vec![0.0; l];
    for i in 0..n {
        for (m, &p) in mean_probs.iter_mut().zip(trace.probs.row(i)) {
            *m += p;
        }
    }
    if n > 0 {
        mean_probs.iter_mut().for_each(|m| *m /= n as f64);
    }
    let balance = l as f64
        * fractions
            .iter()
            .zip(&mean_probs)
            .map(|(f, p)| f * p)
            .sum::<f64>();
    let z = if n == 0 {
        0.0
    } else {
        (0..n)
            .map(|i| log_sum_exp(trace.logits.row(i)).powi(2))
            .sum::<f64>()
            / n as f64
    };
    AuxLosses {
        balance,
        z,
        fractions,
        mean_probs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageStats {
    /// Share of kept assignments routed to each expert; sums to 1.
    pub shares: Vec<f64>,
    /// `Σ_j (share_j − 1/L)² / (1/L)`; zero at perfectly uniform usage.
    pub chi_square: f64,
    pub assignments: u64,
}

/// Running count of kept assignments per expert.
#[derive(Debug, Clone, Default)]
pub struct UsageCounter {
    counts: Vec<u64>,
}

impl UsageCounter {
    pub fn new(num_experts: usize) -> Self {
        Self {
            counts: vec![0; num_experts],
        }
    }

    pub fn add(&mut self, trace: &RoutingTrace) {
        if self.counts.len() < trace.num_experts() {
            self.counts.resize(trace.num_experts(), 0);
        }
        for kept in &trace.kept {
            for &j in kept {
                self.counts[j] += 1;
            }
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn stats(&self) -> Result<UsageStats> {
        let total: u64 = self.counts.iter().sum();
        if total == 0 {
            return Err(Error::Usage("no routing assignments recorded".into()));
        }
        let l = self.counts.len() as f64;
        let shares: Vec<f64> = self
            .counts
            .iter()
            .map(|&c| c as f64 / total as f64)
            .collect();
        let uniform = 1.0 / l;
        let chi_square = shares.iter().map(|s| (s - uniform).powi(2) / uniform).sum();
        Ok(UsageStats {
            shares,
            chi_square,
            assignments: total,
        })
    }
}

pub fn usage_stats<'a>(traces: impl IntoIterator<Item = &'a RoutingTrace>) -> Result<UsageStats> {
    let mut counter = UsageCounter::default();
    for t in traces {
        counter.add(t);
    }
    counter.stats()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Matrix;

    fn trace(logits: &[Vec<f64>], k: usize) -> RoutingTrace {
        RoutingTrace::from_logits(Matrix::from_rows(logits).unwrap(), k, true).unwrap()
    }

    #[test]
    fn uniform_routing_has_unit_balance() {
        // Four tokens with uniform logits would all tie toward expert 0, so
        // build perfectly uniform f by hand-placing the winners.
        let big = 0.0;
        let t = RoutingTrace {
            logits: Matrix::filled(4, 4, big),
            probs: Matrix::filled(4, 4, 0.25),
            kept: vec![vec![0], vec![1], vec![2], vec![3]],
            weights: Matrix::identity(4),
        };
        let a = aux_losses(&t);
        assert_eq!(a.balance, 1.0);
    }

    #[test]
    fn two_expert_closed_form() {
        let t = RoutingTrace {
            logits: Matrix::from_rows(&[vec![(0.9f64).ln(), (0.1f64).ln()]]).unwrap(),
            probs: Matrix::from_rows(&[vec![0.9, 0.1]]).unwrap(),
            kept: vec![vec![0]],
            weights: Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(),
        };
        let a = aux_losses(&t);
        assert!((a.balance - 1.8).abs() < 1e-15);
    }

    #[test]
    fn z_loss_of_two_zero_logits() {
        let a = aux_losses(&trace(&[vec![0.0, 0.0]], 1));
        assert!((a.z - 2f64.ln().powi(2)).abs() < 1e-15);
        assert!((a.z - 0.4805).abs() < 1e-4);
    }

    #[test]
    fn usage_direct_count() {
        let t = RoutingTrace {
            logits: Matrix::zeros(1, 4),
            probs: Matrix::filled(1, 4, 0.25),
            kept: vec![vec![0, 3]],
            weights: Matrix::from_rows(&[vec![0.5, 0.0, 0.0, 0.5]]).unwrap(),
        };
        let s = usage_stats([&t]).unwrap();
        assert_eq!(s.shares, vec![0.5, 0.0, 0.0, 0.5]);
        assert!((s.chi_square - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_usage_is_error() {
        assert!(matches!(
            usage_stats(std::iter::empty()),
            Err(Error::Usage(_))
        ));
    }
}
