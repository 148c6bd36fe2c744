use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{AlignKind, AlignTask};
use super::schedule::{Schedule, WARMUP_RATIO};
use crate::error::{Error, Result};
use crate::moe::ExpertMLP;
use crate::numkit::{adamw_step, mse_loss, AdamWConfig, AdamWState, Matrix};
use crate::seed::rng_for;
use crate::stack::{mean_pool, mean_pool_backward, ToyStack};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 5e-5,
            batch: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignReport {
    pub kind: AlignKind,
    /// Mean loss over the task before the first step.
    pub initial_loss: f64,
    /// Mean loss over the task after the last step.
    pub final_loss: f64,
    pub step_losses: Vec<f64>,
}

struct Encoded {
    tokens: Vec<Matrix>,
    targets: Vec<Matrix>,
}

fn encode_task(stack: &ToyStack, task: &AlignTask) -> Result<Encoded> {
    let mut tokens = Vec::with_capacity(task.pairs.len());
    let mut targets = Vec::with_capacity(task.pairs.len());
    for (img, text) in &task.pairs {
        tokens.push(stack.encoder.encode(img)?);
        targets.push(stack.embedder.embed(text));
    }
    Ok(Encoded { tokens, targets })
}

fn stack_rows(parts: &[&Matrix]) -> Matrix {
    let cols = parts[0].cols();
    let mut data = Vec::with_capacity(parts.iter().map(|m| m.len()).sum());
    for p in parts {
        data.extend_from_slice(p.as_slice());
    }
    Matrix::from_vec(data.len() / cols, cols, data).expect("rows share a width")
}

/// Loss and gradient of the frozen-head regression for one batch.
fn batch_loss(
    stack: &ToyStack,
    expert: &ExpertMLP,
    tokens: &[&Matrix],
    targets: &[&Matrix],
    want_grad: bool,
) -> Result<(f64, Option<ExpertMLP>)> {
    let per_item = tokens[0].rows();
    let v = stack_rows(tokens);
    let t = stack_rows(targets);
    let (y, cache) = expert.forward_cached(&v)?;
    let pooled = mean_pool(&y, per_item)?;
    let out = stack.head.decode_frozen(&pooled)?;
    let (loss, d_out) = mse_loss(&out, &t)?;
    if !want_grad {
        return Ok((loss, None));
    }
    let d_pooled = stack.head.backward_frozen(&d_out)?;
    let dy = mean_pool_backward(&d_pooled, per_item);
    Ok((loss, Some(expert.backward(&cache, &dy)?)))
}

fn full_loss(stack: &ToyStack, expert: &ExpertMLP, enc: &Encoded, batch: usize) -> Result<f64> {
    let mut total = 0.0;
    let idx: Vec<usize> = (0..enc.tokens.len()).collect();
    for chunk in idx.chunks(batch) {
        let toks: Vec<&Matrix> = chunk.iter().map(|&i| &enc.tokens[i]).collect();
        let tgts: Vec<&Matrix> = chunk.iter().map(|&i| &enc.targets[i]).collect();
        total += batch_loss(stack, expert, &toks, &tgts, false)?.0 * chunk.len() as f64;
    }
    Ok(total / enc.tokens.len() as f64)
}

/// Train a fresh single-MLP connector so the frozen head maps a chart's
/// pooled tokens onto the embedding of the task's target text.
pub fn align_connector(
    task: &AlignTask,
    stack: &ToyStack,
    d_hidden: usize,
    seed: u64,
    cfg: &AlignConfig,
) -> Result<(ExpertMLP, AlignReport)> {
    if task.pairs.is_empty() {
        return Err(Error::Usage(format!(
            "{} alignment task has no pairs",
            task.kind.as_str()
        )));
    }
    if cfg.batch == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let (d_in, d_out) = (stack.encoder.d_in(), stack.head.d_out());
    let mut rng = rng_for(seed, &format!("align-init-{}", task.kind.as_str()));
    let mut expert = ExpertMLP::random(d_in, d_hidden, d_out, &mut rng);
    let enc = encode_task(stack, task)?;
    let initial_loss = full_loss(stack, &expert, &enc, cfg.batch)?;

    let n = enc.tokens.len();
    let steps_per_epoch = n.div_ceil(cfg.batch);
    let schedule = Schedule::new(cfg.lr, cfg.epochs * steps_per_epoch, WARMUP_RATIO);
    let opt = AdamWConfig::default();
    let mut state = AdamWState::new(expert.blocks());
    let mut shuffle = rng_for(seed, &format!("align-shuffle-{}", task.kind.as_str()));
    let mut order: Vec<usize> = (0..n).collect();
    let mut step_losses = Vec::with_capacity(schedule.total_steps);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(cfg.batch) {
            let toks: Vec<&Matrix> = chunk.iter().map(|&i| &enc.tokens[i]).collect();
            let tgts: Vec<&Matrix> = chunk.iter().map(|&i| &enc.targets[i]).collect();
            let (loss, grads) = batch_loss(stack, &expert, &toks, &tgts, true)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "alignment loss is {loss} at step {step}"
                )));
            }
            let grads = grads.expect("gradient requested");
            let g: Vec<Matrix> = grads.blocks().into_iter().cloned().collect();
            let mut params = expert.blocks_mut();
            adamw_step(&mut params, &g, &mut state, schedule.lr_at(step), &opt)?;
            step_losses.push(loss);
            step += 1;
        }
    }
    let final_loss = full_loss(stack, &expert, &enc, cfg.batch)?;
    Ok((
        expert,
        AlignReport {
            kind: task.kind,
            initial_loss,
            final_loss,
            step_losses,
        },
    ))
}

/// The general-purpose connector, trained on non-chart images.
pub fn vanilla_connector(
    general: &AlignTask,
    stack: &ToyStack,
    d_hidden: usize,
    seed: u64,
    cfg: &AlignConfig,
) -> Result<(ExpertMLP, AlignReport)> {
    if general.kind != AlignKind::General {
        return Err(Error::Config(
            "the vanilla connector trains on general images".into(),
        ));
    }
    align_connector(general, stack, d_hidden, seed, cfg)
}
