use serde::Serialize;

use super::connector::MoEConnector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCounts {
    /// One expert: `D_in·D_h + D_h + D_h·D_out + D_out`.
    pub expert: usize,
    /// Router: `D_in·L + L`.
    pub gate: usize,
    /// `L · expert + gate`.
    pub total: usize,
}

impl ParamCounts {
    pub fn for_dims(d_in: usize, d_hidden: usize, d_out: usize, num_experts: usize) -> Self {
        let expert = d_in * d_hidden + d_hidden + d_hidden * d_out + d_out;
        let gate = d_in * num_experts + num_experts;
        Self {
            expert,
            gate,
            total: num_experts * expert + gate,
        }
    }

    /// Parameters added over a single dense connector of the same shape.
    pub fn overhead(&self) -> usize {
        self.total - self.expert
    }
}

pub fn param_count(c: &MoEConnector) -> ParamCounts {
    let counted = ParamCounts {
        expert: c.experts()[0].param_count(),
        gate: c.gate().param_count(),
        total: c.experts().iter().map(|e| e.param_count()).sum::<usize>() + c.gate().param_count(),
    };
    let (d_in, d_h, d_out) = c.dims();
    debug_assert_eq!(
        counted,
        ParamCounts::for_dims(d_in, d_h, d_out, c.num_experts())
    );
    counted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moe::ExpertMLP;

    #[test]
    fn single_expert_degenerate() {
        let c = MoEConnector::with_zero_gate(vec![ExpertMLP::zeros(3, 5, 2)], 1, true).unwrap();
        let p = param_count(&c);
        assert_eq!(p.expert, 3 * 5 + 5 + 5 * 2 + 2);
        assert_eq!(p.gate, 3 + 1);
        assert_eq!(p.total, p.expert + p.gate);
    }

    #[test]
    fn doubling_experts() {
        let a = ParamCounts::for_dims(32, 64, 48, 4);
        let b = ParamCounts::for_dims(32, 64, 48, 8);
        assert_eq!(b.total - b.gate, 2 * (a.total - a.gate));
        assert_eq!(b.gate, 2 * a.gate);
    }
}
