use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{QaData, QaSample, QA_OUTPUTS};
use super::schedule::{Schedule, WARMUP_RATIO};
use crate::error::{Error, Result};
use crate::evalkit::relaxed_match;
use crate::moe::{AuxLossConfig, AuxLosses, MoEConnector, RoutingTrace, UsageCounter, UsageStats};
use crate::numkit::{adamw_step, AdamWConfig, AdamWState, Matrix};
use crate::seed::rng_for;
use crate::stack::{mean_pool, mean_pool_backward, DecoderHead};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseData {
    /// The full mixed QA pool.
    Pool,
    /// The held-in annealing slice.
    Anneal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub name: String,
    pub lr: f64,
    pub epochs: usize,
    pub data: PhaseData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    pub phases: Vec<PhaseConfig>,
    pub batch: usize,
    pub aux: AuxLossConfig,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            phases: vec![
                PhaseConfig {
                    name: "knowledge".into(),
                    lr: 5e-5,
                    epochs: 30,
                    data: PhaseData::Pool,
                },
                PhaseConfig {
                    name: "anneal".into(),
                    lr: 1e-5,
                    epochs: 10,
                    data: PhaseData::Anneal,
                },
            ],
            batch: 16,
            aux: AuxLossConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub phase: String,
    pub lr: f64,
    /// Task loss plus weighted auxiliary losses.
    pub loss: f64,
    pub task_loss: f64,
    pub balance_loss: f64,
    pub z_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub name: String,
    pub schedule: Schedule,
    pub epochs: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochUsage {
    pub phase: String,
    pub epoch: usize,
    pub usage: UsageStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    pub phases: Vec<PhaseRecord>,
    pub steps: Vec<StepRecord>,
    pub usage: Vec<EpochUsage>,
}

impl TrainLog {
    /// One JSON object per step.
    pub fn steps_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("step records serialize"));
            out.push('\n');
        }
        out
    }
}

fn stack_tokens(samples: &[&QaSample]) -> Matrix {
    let cols = samples[0].tokens.cols();
    let mut data = Vec::with_capacity(samples.len() * samples[0].tokens.len());
    for s in samples {
        data.extend_from_slice(s.tokens.as_slice());
    }
    Matrix::from_vec(data.len() / cols, cols, data).expect("token blocks share a width")
}

/// Head outputs for a batch, plus everything needed to backpropagate.
struct Forward {
    outputs: Matrix,
    pooled: Matrix,
    cache: crate::moe::MoECache,
    per_item: usize,
}

fn forward(c: &MoEConnector, head: &DecoderHead, samples: &[&QaSample]) -> Result<Forward> {
    let per_item = samples[0].tokens.rows();
    let v = stack_tokens(samples);
    let (y, cache) = c.forward_cached(&v)?;
    let pooled = mean_pool(&y, per_item)?;
    Ok(Forward {
        outputs: head.decode(&pooled)?,
        pooled,
        cache,
        per_item,
    })
}

/// Mean squared error over the answer outputs, and its gradient on all outputs.
fn task_loss(outputs: &Matrix, samples: &[&QaSample]) -> (f64, Matrix) {
    let count = (samples.len() * QA_OUTPUTS) as f64;
    let mut grad = Matrix::zeros(outputs.rows(), outputs.cols());
    let mut loss = 0.0;
    for (b, s) in samples.iter().enumerate() {
        for (k, t) in s.truth.targets().iter().enumerate() {
            let d = outputs.get(b, k) - t;
            loss += d * d;
            grad.set(b, k, 2.0 * d / count);
        }
    }
    (loss / count, grad)
}

pub struct BatchGrads {
    pub connector: Vec<Matrix>,
    pub lora: [Matrix; 2],
}

pub struct BatchResult {
    pub task_loss: f64,
    pub aux: AuxLosses,
    pub trace: RoutingTrace,
    pub grads: BatchGrads,
}

/// Loss and gradients of the SFT objective on one batch.
pub fn sft_batch(
    c: &MoEConnector,
    head: &DecoderHead,
    samples: &[&QaSample],
    aux: &AuxLossConfig,
) -> Result<BatchResult> {
    if samples.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let f = forward(c, head, samples)?;
    let (loss, d_out) = task_loss(&f.outputs, samples);
    let lora = head.backward(&f.pooled, &d_out)?;
    let dy = mean_pool_backward(&lora.pooled, f.per_item);
    let (grads, aux_losses) = c.backward(&f.cache, &dy, aux)?;
    Ok(BatchResult {
        task_loss: loss,
        aux: aux_losses,
        trace: f.cache.trace,
        grads: BatchGrads {
            connector: grads.into_blocks(),
            lora: [lora.lora_a, lora.lora_b],
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub task_loss: f64,
    /// Relaxed accuracy at margin 0.05 over all questions.
    pub accuracy: f64,
    pub per_question: [f64; QA_OUTPUTS],
    pub usage: UsageStats,
}

pub const EVAL_MARGIN: f64 = 0.05;

pub fn evaluate(
    c: &MoEConnector,
    head: &DecoderHead,
    samples: &[QaSample],
    batch: usize,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Usage("nothing to evaluate".into()));
    }
    let mut counter = UsageCounter::new(c.num_experts());
    let mut loss = 0.0;
    let mut correct = [0usize; QA_OUTPUTS];
    let refs: Vec<&QaSample> = samples.iter().collect();
    for chunk in refs.chunks(batch.max(1)) {
        let f = forward(c, head, chunk)?;
        loss += task_loss(&f.outputs, chunk).0 * chunk.len() as f64;
        counter.add(&f.cache.trace);
        for (b, s) in chunk.iter().enumerate() {
            let answers = s.truth.answers(&f.outputs.row(b)[..QA_OUTPUTS]);
            for (k, (a, (_, gt))) in answers.iter().zip(s.truth.questions()).enumerate() {
                if relaxed_match(a, &gt, EVAL_MARGIN) {
                    correct[k] += 1;
                }
            }
        }
    }
    let n = samples.len() as f64;
    let per_question = correct.map(|c| c as f64 / n);
    Ok(Evaluation {
        task_loss: loss / n,
        accuracy: per_question.iter().sum::<f64>() / QA_OUTPUTS as f64,
        per_question,
        usage: counter.stats()?,
    })
}

/// Two-phase supervised fine-tuning of gate, experts and LoRA factors.
pub fn sft_run(
    connector: &MoEConnector,
    head: &DecoderHead,
    data: &QaData,
    cfg: &SftConfig,
    seed: u64,
) -> Result<(MoEConnector, DecoderHead, TrainLog)> {
    sft_run_with(connector, head, data, cfg, seed, |_, _, _| Ok(()))
}

/// [`sft_run`] with a callback after each phase (e.g. for checkpoints).
pub fn sft_run_with<F>(
    connector: &MoEConnector,
    head: &DecoderHead,
    data: &QaData,
    cfg: &SftConfig,
    seed: u64,
    mut on_phase_end: F,
) -> Result<(MoEConnector, DecoderHead, TrainLog)>
where
    F: FnMut(&str, &MoEConnector, &DecoderHead) -> Result<()>,
{
    if cfg.batch == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut c = connector.clone();
    let mut h = head.clone();
    let mut log = TrainLog {
        seed,
        ..TrainLog::default()
    };
    let opt = AdamWConfig::default();
    let mut step = 0;
    for phase in &cfg.phases {
        let samples = match phase.data {
            PhaseData::Pool => &data.pool,
            PhaseData::Anneal => &data.anneal,
        };
        if samples.is_empty() {
            return Err(Error::Usage(format!("phase {} has no data", phase.name)));
        }
        let steps_per_epoch = samples.len().div_ceil(cfg.batch);
        let schedule = Schedule::new(phase.lr, phase.epochs * steps_per_epoch, WARMUP_RATIO);
        log.phases.push(PhaseRecord {
            name: phase.name.clone(),
            schedule,
            epochs: phase.epochs,
            samples: samples.len(),
        });
        let mut state = {
            let mut blocks = c.blocks();
            blocks.push(&h.lora_a);
            blocks.push(&h.lora_b);
            AdamWState::new(blocks)
        };
        let mut shuffle = rng_for(seed, &format!("sft-shuffle-{}", phase.name));
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut phase_step = 0;
        for epoch in 0..phase.epochs {
            order.shuffle(&mut shuffle);
            let mut usage = UsageCounter::new(c.num_experts());
            for chunk in order.chunks(cfg.batch) {
                let batch: Vec<&QaSample> = chunk.iter().map(|&i| &samples[i]).collect();
                let r = sft_batch(&c, &h, &batch, &cfg.aux)?;
                let loss = r.task_loss + cfg.aux.weighted(&r.aux);
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "loss is {loss} at step {step} of phase {}",
                        phase.name
                    )));
                }
                usage.add(&r.trace);
                let lr = schedule.lr_at(phase_step);
                let mut grads = r.grads.connector;
                grads.extend(r.grads.lora);
                let mut params = c.blocks_mut();
                let [a, b] = h.lora_blocks_mut();
                params.push(a);
                params.push(b);
                adamw_step(&mut params, &grads, &mut state, lr, &opt)?;
                log.steps.push(StepRecord {
                    step,
                    phase: phase.name.clone(),
                    lr,
                    loss,
                    task_loss: r.task_loss,
                    balance_loss: r.aux.balance,
                    z_loss: r.aux.z,
                });
                step += 1;
                phase_step += 1;
            }
            log.usage.push(EpochUsage {
                phase: phase.name.clone(),
                epoch,
                usage: usage.stats()?,
            });
        }
        on_phase_end(&phase.name, &c, &h)?;
    }
    Ok((c, h, log))
}
