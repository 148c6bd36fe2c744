use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{log_sum_exp, matmul_tn, softmax_rows, softmax_rows_backward, Matrix};

use super::aux::{aux_losses, AuxLossConfig, AuxLosses};
use super::expert::{ExpertCache, ExpertMLP};
use super::routing::{route_top_k, GateNet};

/// Per-token routing decisions for one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTrace {
    pub logits: Matrix,
    pub probs: Matrix,
    /// Kept expert ids per token, in selection order (largest probability first).
    pub kept: Vec<Vec<usize>>,
    /// Dense `N × L` routing weights, zero outside the kept set.
    pub weights: Matrix,
}

impl RoutingTrace {
    pub fn from_logits(logits: Matrix, top_k: usize, renormalize: bool) -> Result<Self> {
        let probs = softmax_rows(&logits);
        let mut weights = Matrix::zeros(logits.rows(), logits.cols());
        let mut kept = Vec::with_capacity(logits.rows());
        for i in 0..logits.rows() {
            let (w, k) = route_top_k(probs.row(i), top_k, renormalize)?;
            weights.row_mut(i).copy_from_slice(&w);
            kept.push(k);
        }
        Ok(Self {
            logits,
            probs,
            kept,
            weights,
        })
    }

    pub fn num_tokens(&self) -> usize {
        self.logits.rows()
    }

    pub fn num_experts(&self) -> usize {
        self.logits.cols()
    }

    /// Expert with the largest routing probability for each token.
    pub fn top1(&self) -> Vec<usize> {
        self.kept.iter().map(|k| k[0]).collect()
    }
}

/// Mixture-of-experts connector: `v̂_i = Σ_j g_j(v_i) · E_j(v_i)` with
/// `g = Top(softmax(gate(v_i)); K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoEConnector {
    experts: Vec<ExpertMLP>,
    gate: GateNet,
    top_k: usize,
    renormalize: bool,
    labels: Vec<String>,
}

/// Gradients with the same layout as [`MoEConnector`].
#[derive(Debug, Clone)]
pub struct MoEGrads {
    pub gate: GateNet,
    pub experts: Vec<ExpertMLP>,
}

impl MoEGrads {
    pub fn into_blocks(self) -> Vec<Matrix> {
        let mut out = vec![self.gate.w, self.gate.b];
        for e in self.experts {
            out.extend([e.w1, e.b1, e.w2, e.b2]);
        }
        out
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct MoECache {
    input: Matrix,
    pub trace: RoutingTrace,
    /// Token indices dispatched to each expert, in token order.
    dispatch: Vec<Vec<usize>>,
    /// Row of each (token, slot) inside its expert's dispatch batch.
    slot_rows: Vec<Vec<usize>>,
    expert_caches: Vec<Option<ExpertCache>>,
    expert_outputs: Vec<Option<Matrix>>,
}

impl MoEConnector {
    pub fn new(
        experts: Vec<ExpertMLP>,
        gate: GateNet,
        top_k: usize,
        renormalize: bool,
        labels: Vec<String>,
    ) -> Result<Self> {
        let c = Self {
            experts,
            gate,
            top_k,
            renormalize,
            labels,
        };
        c.validate()?;
        Ok(c)
    }

    /// Experts plus a zero-initialized gate and positional labels.
    pub fn with_zero_gate(
        experts: Vec<ExpertMLP>,
        top_k: usize,
        renormalize: bool,
    ) -> Result<Self> {
        let d_in = experts
            .first()
            .ok_or_else(|| Error::Config("an MoE connector needs at least one expert".into()))?
            .dims()
            .0;
        let labels = (0..experts.len()).map(|j| format!("E{j}")).collect();
        let gate = GateNet::zeros(d_in, experts.len());
        Self::new(experts, gate, top_k, renormalize, labels)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.experts.len();
        if l == 0 {
            return Err(Error::Config(
                "an MoE connector needs at least one expert".into(),
            ));
        }
        if self.top_k < 1 || self.top_k > l {
            return Err(Error::Config(format!(
                "top-k must satisfy 1 <= K <= L = {l}, got {}",
                self.top_k
            )));
        }
        if self.labels.len() != l {
            return Err(Error::Config(format!(
                "{} labels for {l} experts",
                self.labels.len()
            )));
        }
        let dims = self.experts[0].dims();
        for (j, e) in self.experts.iter().enumerate() {
            e.validate()?;
            if e.dims() != dims {
                return Err(Error::Config(format!(
                    "expert {j} has dims {:?}, expert 0 has {dims:?}",
                    e.dims()
                )));
            }
        }
        self.gate.w.ensure_shape(dims.0, l, "gate weight")?;
        self.gate.b.ensure_shape(1, l, "gate bias")?;
        self.gate.w.ensure_finite("gate weight")?;
        self.gate.b.ensure_finite("gate bias")?;
        Ok(())
    }

    pub fn experts(&self) -> &[ExpertMLP] {
        &self.experts
    }

    pub fn experts_mut(&mut self) -> &mut [ExpertMLP] {
        &mut self.experts
    }

    pub fn gate(&self) -> &GateNet {
        &self.gate
    }

    pub fn gate_mut(&mut self) -> &mut GateNet {
        &mut self.gate
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn renormalize(&self) -> bool {
        self.renormalize
    }

    pub fn set_renormalize(&mut self, renormalize: bool) {
        self.renormalize = renormalize;
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    /// `(d_in, d_hidden, d_out)`
    pub fn dims(&self) -> (usize, usize, usize) {
        self.experts[0].dims()
    }

    /// Trainable blocks in optimizer order: gate, then each expert.
    pub fn blocks(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.gate.w, &self.gate.b];
        for e in &self.experts {
            out.extend(e.blocks());
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.gate.w, &mut self.gate.b];
        for e in &mut self.experts {
            out.extend(e.blocks_mut());
        }
        out
    }

    pub fn route(&self, v: &Matrix) -> Result<RoutingTrace> {
        let logits = self.gate.logits(v)?;
        RoutingTrace::from_logits(logits, self.top_k, self.renormalize)
    }

    pub fn forward(&self, v: &Matrix) -> Result<(Matrix, RoutingTrace)> {
        let (y, cache) = self.forward_cached(v)?;
        Ok((y, cache.trace))
    }

    pub fn forward_cached(&self, v: &Matrix) -> Result<(Matrix, MoECache)> {
        let (d_in, _, d_out) = self.dims();
        if v.cols() != d_in {
            return Err(Error::Dimension(format!(
                "connector expects {d_in} input features, got {}",
                v.cols()
            )));
        }
        let trace = self.route(v)?;
        let n = v.rows();
        let l = self.num_experts();

        let mut dispatch = vec![Vec::new(); l];
        let mut slot_rows = Vec::with_capacity(n);
        for (i, kept) in trace.kept.iter().enumerate() {
            let rows = kept
                .iter()
                .map(|&j| {
                    dispatch[j].push(i);
                    dispatch[j].len() - 1
                })
                .collect();
            slot_rows.push(rows);
        }

        let mut expert_caches = Vec::with_capacity(l);
        let mut expert_outputs = Vec::with_capacity(l);
        for (expert, tokens) in self.experts.iter().zip(&dispatch) {
            if tokens.is_empty() {
                expert_caches.push(None);
                expert_outputs.push(None);
                continue;
            }
            let (out, cache) = expert.forward_cached(&v.gather_rows(tokens))?;
            expert_caches.push(Some(cache));
            expert_outputs.push(Some(out));
        }

        // Combine in kept (selection) order for a fixed summation order.
        let mut y = Matrix::zeros(n, d_out);
        for (i, rows) in slot_rows.iter().enumerate() {
            let out_row = y.row_mut(i);
            for (&j, &r) in trace.kept[i].iter().zip(rows) {
                let w = trace.weights.get(i, j);
                let src = expert_outputs[j]
                    .as_ref()
                    .expect("dispatched expert has output")
                    .row(r);
                for (o, &s) in out_row.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }

        Ok((
            y,
            MoECache {
                input: v.clone(),
                trace,
                dispatch,
                slot_rows,
                expert_caches,
                expert_outputs,
            },
        ))
    }

    /// Backward pass for upstream gradient `dy` (N × D_out).
    ///
    /// Top-K selection is straight-masked: gradients reach the gate only
    /// through the kept softmax weights. When `aux.enabled`, the gradients of
    /// `balance_coef · balance + z_coef · z` are added and the loss values
    /// are returned alongside.
    pub fn backward(
        &self,
        cache: &MoECache,
        dy: &Matrix,
        aux: &AuxLossConfig,
    ) -> Result<(MoEGrads, AuxLosses)> {
        let trace = &cache.trace;
        let n = trace.num_tokens();
        let l = self.num_experts();
        dy.ensure_shape(n, self.dims().2, "connector upstream gradient")?;

        // d loss / d routing weight, and per-expert output gradients.
        let mut dweights = Matrix::zeros(n, l);
        let mut d_outs: Vec<Option<Matrix>> = cache
            .expert_outputs
            .iter()
            .map(|o| o.as_ref().map(|m| Matrix::zeros(m.rows(), m.cols())))
            .collect();
        for i in 0..n {
            let dyi = dy.row(i);
            for (&j, &r) in trace.kept[i].iter().zip(&cache.slot_rows[i]) {
                let out = cache.expert_outputs[j]
                    .as_ref()
                    .expect("dispatched expert has output");
                let dot: f64 = out.row(r).iter().zip(dyi).map(|(a, b)| a * b).sum();
                dweights.set(i, j, dot);
                let w = trace.weights.get(i, j);
                let d_out = d_outs[j]
                    .as_mut()
                    .expect("dispatched expert has gradient slot");
                for (d, &g) in d_out.row_mut(r).iter_mut().zip(dyi) {
                    *d = w * g;
                }
            }
        }

        let mut expert_grads = Vec::with_capacity(l);
        for (j, expert) in self.experts.iter().enumerate() {
            match (&cache.expert_caches[j], &d_outs[j]) {
                (Some(ec), Some(d_out)) => expert_grads.push(expert.backward(ec, d_out)?),
                _ => expert_grads.push(expert.zeros_like()),
            }
        }

        // Routing weights -> probabilities.
        let mut dprobs = Matrix::zeros(n, l);
        for i in 0..n {
            let kept = &trace.kept[i];
            if self.renormalize {
                let kept_sum: f64 = kept.iter().map(|&j| trace.probs.get(i, j)).sum();
                let c: f64 = kept
                    .iter()
                    .map(|&j| dweights.get(i, j) * trace.weights.get(i, j))
                    .sum();
                for &j in kept {
                    dprobs.set(i, j, (dweights.get(i, j) - c) / kept_sum);
                }
            } else {
                for &j in kept {
                    dprobs.set(i, j, dweights.get(i, j));
                }
            }
        }

        let losses = aux_losses(trace);
        if aux.enabled && aux.balance_coef != 0.0 {
            // balance = L Σ_j f_j P_j, P_j = mean_i p_ij; f is a count and carries no gradient.
            let scale = aux.balance_coef * l as f64 / n as f64;
            for i in 0..n {
                for (d, &f) in dprobs.row_mut(i).iter_mut().zip(&losses.fractions) {
                    *d += scale * f;
                }
            }
        }

        let mut dlogits = softmax_rows_backward(&trace.probs, &dprobs)?;
        if aux.enabled && aux.z_coef != 0.0 {
            // z = mean_i (lse_i)², d/dz_ij = 2 lse_i p_ij / N
            for i in 0..n {
                let lse = log_sum_exp(trace.logits.row(i));
                let s = aux.z_coef * 2.0 * lse / n as f64;
                let probs = trace.probs.row(i);
                for (d, &p) in dlogits.row_mut(i).iter_mut().zip(probs) {
                    *d += s * p;
                }
            }
        }

        let gate = GateNet {
            w: matmul_tn(&cache.input, &dlogits)?,
            b: dlogits.sum_rows(),
        };
        Ok((
            MoEGrads {
                gate,
                experts: expert_grads,
            },
            losses,
        ))
    }

    /// Count of tokens dispatched to each expert in a cached pass.
    pub fn dispatch_counts(cache: &MoECache) -> Vec<usize> {
        cache.dispatch.iter().map(Vec::len).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    fn random_connector(l: usize, k: usize, renorm: bool, seed: u64) -> MoEConnector {
        let mut rng = rng_for(seed, "test-connector");
        let experts = (0..l)
            .map(|_| ExpertMLP::random(6, 8, 5, &mut rng))
            .collect();
        let gate = GateNet {
            w: Matrix::random_normal(6, l, 1.0, &mut rng),
            b: Matrix::random_normal(1, l, 0.5, &mut rng),
        };
        let labels = (0..l).map(|j| format!("E{j}")).collect();
        MoEConnector::new(experts, gate, k, renorm, labels).unwrap()
    }

    /// Independent per-token composition: softmax -> sort -> mask -> weighted sum.
    fn brute_force(c: &MoEConnector, v: &Matrix) -> Matrix {
        let (_, _, d_out) = c.dims();
        let mut y = Matrix::zeros(v.rows(), d_out);
        for i in 0..v.rows() {
            let x = Matrix::row_vector(v.row(i));
            let mut logits = vec![0.0; c.num_experts()];
            for (j, z) in logits.iter_mut().enumerate() {
                *z = c.gate().b.get(0, j)
                    + (0..v.cols())
                        .map(|d| x.get(0, d) * c.gate().w.get(d, j))
                        .sum::<f64>();
            }
            let max = logits.iter().cloned().fold(f64::MIN, f64::max);
            let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
            let mut order: Vec<usize> = (0..probs.len()).collect();
            order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
            let kept = &order[..c.top_k()];
            let norm: f64 = if c.renormalize() {
                kept.iter().map(|&j| probs[j]).sum()
            } else {
                1.0
            };
            for &j in kept {
                let out = c.experts()[j].forward(&x).unwrap();
                for d in 0..d_out {
                    let cur = y.get(i, d);
                    y.set(i, d, cur + probs[j] / norm * out.get(0, d));
                }
            }
        }
        y
    }

    #[test]
    fn matches_brute_force_composition() {
        for (renorm, seed) in [(true, 1), (false, 2)] {
            let c = random_connector(4, 2, renorm, seed);
            let mut rng = rng_for(seed, "tokens");
            let v = Matrix::random_normal(3, 6, 1.0, &mut rng);
            let (y, trace) = c.forward(&v).unwrap();
            assert!(y.max_abs_diff(&brute_force(&c, &v)) < 1e-12);
            assert!(trace.kept.iter().all(|k| k.len() == 2));
        }
    }

    #[test]
    fn single_expert_is_plain_mlp() {
        let c = random_connector(1, 1, false, 3);
        let mut rng = rng_for(3, "tokens");
        let v = Matrix::random_normal(7, 6, 1.0, &mut rng);
        let (y, _) = c.forward(&v).unwrap();
        assert_eq!(y, c.experts()[0].forward(&v).unwrap());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let c = random_connector(2, 1, true, 4);
        assert!(matches!(
            c.forward(&Matrix::zeros(2, 5)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn invalid_top_k_rejected_at_construction() {
        let mut rng = rng_for(5, "x");
        let experts = vec![ExpertMLP::random(3, 4, 2, &mut rng); 2];
        assert!(MoEConnector::with_zero_gate(experts.clone(), 3, true).is_err());
        assert!(MoEConnector::with_zero_gate(experts, 0, true).is_err());
        assert!(MoEConnector::with_zero_gate(vec![], 1, true).is_err());
    }

    #[test]
    fn zero_gate_routes_everything_to_first_experts() {
        let mut rng = rng_for(6, "x");
        let experts = (0..4)
            .map(|_| ExpertMLP::random(3, 4, 2, &mut rng))
            .collect();
        let c = MoEConnector::with_zero_gate(experts, 2, true).unwrap();
        let v = Matrix::random_normal(5, 3, 1.0, &mut rng);
        let (_, trace) = c.forward(&v).unwrap();
        assert!(trace.kept.iter().all(|k| k == &vec![0, 1]));
        assert!(trace.top1().iter().all(|&e| e == 0));
    }
}
