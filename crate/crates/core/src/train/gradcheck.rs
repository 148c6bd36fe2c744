//! Finite-difference check of the full SFT objective: MoE connector, pooled
//! LoRA head and optional auxiliary losses, over random configurations.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moe::{AuxLossConfig, ExpertMLP, GateNet, MoEConnector, RoutingTrace};
use crate::numkit::{grad_check, mse_loss, GradCheckConfig, GradCheckReport, Matrix, Param};
use crate::seed::rng_for;
use crate::stack::{mean_pool, mean_pool_backward, DecoderHead};

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckCase {
    pub num_experts: usize,
    pub top_k: usize,
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub embed_dim: usize,
    pub lora_rank: usize,
    pub items: usize,
    pub tokens_per_item: usize,
    pub renormalize: bool,
    pub aux: bool,
    pub report: GradCheckReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckSuite {
    pub cases: Vec<GradCheckCase>,
    pub overall: GradCheckReport,
}

/// Smallest gap between the K-th and (K+1)-th routing probability of any
/// token. Finite differences across a selection boundary are meaningless.
fn selection_margin(trace: &RoutingTrace, k: usize) -> f64 {
    let l = trace.num_experts();
    if k >= l {
        return f64::INFINITY;
    }
    (0..trace.num_tokens())
        .map(|i| {
            let mut p = trace.probs.row(i).to_vec();
            p.sort_by(|a, b| b.total_cmp(a));
            p[k - 1] - p[k]
        })
        .fold(f64::INFINITY, f64::min)
}

fn split_params(
    ps: &[Param],
    l: usize,
    k: usize,
    renormalize: bool,
) -> Result<(MoEConnector, DecoderHead, usize)> {
    let gate = GateNet {
        w: ps[0].value.clone(),
        b: ps[1].value.clone(),
    };
    let experts = (0..l)
        .map(|j| ExpertMLP {
            w1: ps[2 + 4 * j].value.clone(),
            b1: ps[3 + 4 * j].value.clone(),
            w2: ps[4 + 4 * j].value.clone(),
            b2: ps[5 + 4 * j].value.clone(),
        })
        .collect();
    let h = 2 + 4 * l;
    let head = DecoderHead::from_parts(
        ps[h].value.clone(),
        ps[h + 1].value.clone(),
        ps[h + 2].value.clone(),
        2.0,
    )?;
    Ok((
        MoEConnector::new(
            experts,
            gate,
            k,
            renormalize,
            (0..l).map(|j| format!("E{j}")).collect(),
        )?,
        head,
        h,
    ))
}

/// Run `configs` random cases; the expert count cycles through 1, 2, 4, 8.
pub fn moe_grad_check(configs: usize, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckSuite> {
    if configs == 0 {
        return Err(Error::Config(
            "at least one configuration is required".into(),
        ));
    }
    let mut cases = Vec::with_capacity(configs);
    for i in 0..configs {
        let mut rng = rng_for(seed, &format!("grad-check-{i}"));
        let l = [1, 2, 4, 8][i % 4];
        let k = rng.random_range(1..=l);
        let (d_in, d_hidden, d_out) = (
            rng.random_range(2..=8),
            rng.random_range(2..=8),
            rng.random_range(2..=8),
        );
        let embed_dim = rng.random_range(2..=6);
        let lora_rank = rng.random_range(1..=3);
        let items = rng.random_range(1..=2);
        let tokens_per_item = rng.random_range(2..=4);
        let renormalize = rng.random_bool(0.5);
        let aux = AuxLossConfig {
            enabled: rng.random_bool(0.5),
            balance_coef: 0.5,
            z_coef: 0.1,
        };

        let v = Matrix::random_normal(items * tokens_per_item, d_in, 1.0, &mut rng);
        let target = Matrix::random_normal(items, embed_dim, 1.0, &mut rng);
        let experts: Vec<ExpertMLP> = (0..l)
            .map(|_| {
                let mut e = ExpertMLP::random(d_in, d_hidden, d_out, &mut rng);
                e.b1 = Matrix::random_normal(1, d_hidden, 0.3, &mut rng);
                e.b2 = Matrix::random_normal(1, d_out, 0.3, &mut rng);
                e
            })
            .collect();
        // Redraw the gate until no token sits near a selection boundary.
        let gate = (0..1000)
            .map(|_| GateNet {
                w: Matrix::random_normal(d_in, l, 1.0, &mut rng),
                b: Matrix::random_normal(1, l, 0.5, &mut rng),
            })
            .find(|g| {
                g.logits(&v)
                    .and_then(|z| RoutingTrace::from_logits(z, k, renormalize))
                    .is_ok_and(|t| selection_margin(&t, k) > 1e-3)
            })
            .ok_or_else(|| Error::Numeric("could not draw a gate away from routing ties".into()))?;
        let head = DecoderHead::new(d_out, embed_dim, lora_rank, 2.0, seed ^ i as u64)?;

        let mut params = vec![
            Param::trainable("gate.w", gate.w),
            Param::trainable("gate.b", gate.b),
        ];
        for (j, e) in experts.into_iter().enumerate() {
            params.push(Param::trainable(format!("E{j}.w1"), e.w1));
            params.push(Param::trainable(format!("E{j}.b1"), e.b1));
            params.push(Param::trainable(format!("E{j}.w2"), e.w2));
            params.push(Param::trainable(format!("E{j}.b2"), e.b2));
        }
        params.push(Param::frozen("head.W", head.frozen_weight().clone()));
        params.push(Param::trainable("lora.A", head.lora_a.clone()));
        params.push(Param::trainable(
            "lora.B",
            Matrix::random_normal(lora_rank, embed_dim, 0.5, &mut rng),
        ));

        let report = grad_check(
            &mut params,
            |ps| {
                let (c, head, h) = split_params(ps, l, k, renormalize)?;
                let (y, cache) = c.forward_cached(&v)?;
                let pooled = mean_pool(&y, tokens_per_item)?;
                let (loss, d_out) = mse_loss(&head.decode(&pooled)?, &target)?;
                let lora = head.backward(&pooled, &d_out)?;
                let dy = mean_pool_backward(&lora.pooled, tokens_per_item);
                let (grads, losses) = c.backward(&cache, &dy, &aux)?;
                let mut out = grads.into_blocks();
                out.push(Matrix::zeros(ps[h].value.rows(), ps[h].value.cols()));
                out.push(lora.lora_a);
                out.push(lora.lora_b);
                Ok((loss + aux.weighted(&losses), out))
            },
            cfg,
        )?;
        cases.push(GradCheckCase {
            num_experts: l,
            top_k: k,
            d_in,
            d_hidden,
            d_out,
            embed_dim,
            lora_rank,
            items,
            tokens_per_item,
            renormalize,
            aux: aux.enabled,
            report,
        });
    }
    let reports: Vec<GradCheckReport> = cases.iter().map(|c| c.report.clone()).collect();
    Ok(GradCheckSuite {
        overall: GradCheckReport::merge(&reports, cfg),
        cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_cases_pass() {
        let suite = moe_grad_check(4, 9, &GradCheckConfig::default()).unwrap();
        assert_eq!(suite.cases.len(), 4);
        assert!(suite.overall.max_rel_err <= 1e-4, "{:?}", suite.overall);
    }
}
