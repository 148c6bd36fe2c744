use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::align::{align_connector, vanilla_connector, AlignConfig, AlignReport};
use super::data::{
    build_qa_data, chart_align_task, general_task, AlignKind, AlignTask, QaData, QaPoolConfig,
};
use super::init::{init_moe, AlignedExperts, InitStrategy};
use super::sft::{evaluate, sft_run, SftConfig};
use crate::error::{Error, Result};
use crate::moe::{AuxLossConfig, ExpertMLP, MoEConnector};
use crate::stack::{StackDims, ToyStack};

/// Everything that stays fixed across seeds and variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    pub dims: StackDims,
    pub stack_seed: u64,
    pub data_seed: u64,
    pub align_charts: usize,
    pub general_images: usize,
    pub align: AlignConfig,
    pub qa: QaPoolConfig,
    pub sft: SftConfig,
    pub num_experts: usize,
    pub top_k: usize,
    pub renormalize: bool,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            dims: StackDims::default(),
            stack_seed: 0,
            data_seed: 0,
            align_charts: 256,
            general_images: 256,
            align: AlignConfig {
                epochs: 30,
                lr: 1e-3,
                batch: 16,
            },
            qa: QaPoolConfig::default(),
            sft: SftConfig::default(),
            num_experts: 4,
            top_k: 2,
            renormalize: true,
        }
    }
}

/// Built once: frozen stack, alignment tasks and QA data.
pub struct Fixture {
    pub config: FixtureConfig,
    pub stack: ToyStack,
    pub tasks: [AlignTask; 4],
    pub data: QaData,
}

impl Fixture {
    pub fn build(config: FixtureConfig) -> Result<Self> {
        let stack = ToyStack::new(config.dims, config.stack_seed)?;
        let chart_task = |k| chart_align_task(k, config.data_seed, config.align_charts);
        let tasks = [
            chart_task(AlignKind::Table)?,
            chart_task(AlignKind::Json)?,
            chart_task(AlignKind::Code)?,
            general_task(config.data_seed, config.general_images),
        ];
        let data = build_qa_data(&stack, config.data_seed, &config.qa)?;
        Ok(Self {
            config,
            stack,
            tasks,
            data,
        })
    }

    /// Vanilla and the three chart-aligned connectors for one seed.
    pub fn align_all(&self, seed: u64) -> Result<(ExpertMLP, AlignedExperts, Vec<AlignReport>)> {
        let d_h = self.config.dims.d_hidden;
        let cfg = &self.config.align;
        let (vanilla, rv) = vanilla_connector(&self.tasks[3], &self.stack, d_h, seed, cfg)?;
        let (table, rt) = align_connector(&self.tasks[0], &self.stack, d_h, seed, cfg)?;
        let (json, rj) = align_connector(&self.tasks[1], &self.stack, d_h, seed, cfg)?;
        let (code, rc) = align_connector(&self.tasks[2], &self.stack, d_h, seed, cfg)?;
        Ok((
            vanilla,
            AlignedExperts {
                table: Some(table),
                json: Some(json),
                code: Some(code),
            },
            vec![rv, rt, rj, rc],
        ))
    }

    pub fn init(
        &self,
        strategy: InitStrategy,
        vanilla: &ExpertMLP,
        aligned: &AlignedExperts,
        seed: u64,
    ) -> Result<MoEConnector> {
        init_moe(
            strategy,
            aligned,
            vanilla,
            self.config.num_experts,
            self.config.top_k,
            self.config.renormalize,
            seed,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variant {
    pub strategy: InitStrategy,
    pub bz_loss: bool,
}

impl Variant {
    pub fn new(strategy: InitStrategy, bz_loss: bool) -> Self {
        Self { strategy, bz_loss }
    }

    pub fn label(&self) -> String {
        format!("{}{}", self.strategy, if self.bz_loss { "+bz" } else { "" })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub variant: Variant,
    pub seed: u64,
    /// Task loss over the full training pool after both phases.
    pub final_loss: f64,
    pub heldout_loss: f64,
    /// Held-out relaxed accuracy at margin 0.05.
    pub accuracy: f64,
    /// Top-K usage on the held-out set.
    pub shares: Vec<f64>,
    pub chi_square: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub mean_final_loss: f64,
    pub mean_accuracy: f64,
    pub mean_chi_square: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationSummary {
    pub seeds: Vec<u64>,
    pub runs: Vec<RunResult>,
    pub variants: Vec<VariantSummary>,
}

impl AblationSummary {
    pub fn run(&self, v: Variant, seed: u64) -> Option<&RunResult> {
        self.runs.iter().find(|r| r.variant == v && r.seed == seed)
    }

    pub fn summary(&self, v: Variant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }

    /// Seeds on which `pred(a_run, b_run)` holds.
    pub fn count_seeds(
        &self,
        a: Variant,
        b: Variant,
        pred: impl Fn(&RunResult, &RunResult) -> bool,
    ) -> usize {
        self.seeds
            .iter()
            .filter(|&&s| match (self.run(a, s), self.run(b, s)) {
                (Some(x), Some(y)) => pred(x, y),
                _ => false,
            })
            .count()
    }
}

/// Train one variant from prepared initial experts.
pub fn run_variant(
    fx: &Fixture,
    variant: Variant,
    seed: u64,
    vanilla: &ExpertMLP,
    aligned: &AlignedExperts,
) -> Result<RunResult> {
    let c = fx.init(variant.strategy, vanilla, aligned, seed)?;
    let mut sft = fx.config.sft.clone();
    sft.aux = AuxLossConfig {
        enabled: variant.bz_loss,
        ..sft.aux
    };
    let (c, h, _) = sft_run(&c, &fx.stack.head, &fx.data, &sft, seed)?;
    let batch = sft.batch.max(1) * 4;
    let train = evaluate(&c, &h, &fx.data.pool, batch)?;
    let held = evaluate(&c, &h, &fx.data.heldout, batch)?;
    Ok(RunResult {
        variant,
        seed,
        final_loss: train.task_loss,
        heldout_loss: held.task_loss,
        accuracy: held.accuracy,
        shares: held.usage.shares,
        chi_square: held.usage.chi_square,
    })
}

/// Every variant on every seed. Alignment runs once per seed and is shared
/// by all variants of that seed.
pub fn ablation_compare(
    fx: &Fixture,
    variants: &[Variant],
    seeds: &[u64],
) -> Result<AblationSummary> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(Error::Config(
            "ablation needs at least one variant and one seed".into(),
        ));
    }
    let per_seed: Vec<Vec<RunResult>> = seeds
        .par_iter()
        .map(|&seed| {
            let (vanilla, aligned, _) = fx.align_all(seed)?;
            variants
                .iter()
                .map(|&v| run_variant(fx, v, seed, &vanilla, &aligned))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let runs: Vec<RunResult> = per_seed.into_iter().flatten().collect();
    let mean = |v: Variant, f: fn(&RunResult) -> f64| {
        let xs: Vec<f64> = runs.iter().filter(|r| r.variant == v).map(f).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let summaries = variants
        .iter()
        .map(|&v| VariantSummary {
            variant: v,
            mean_final_loss: mean(v, |r| r.final_loss),
            mean_accuracy: mean(v, |r| r.accuracy),
            mean_chi_square: mean(v, |r| r.chi_square),
        })
        .collect();
    Ok(AblationSummary {
        seeds: seeds.to_vec(),
        runs,
        variants: summaries,
    })
}

/// Random, co-upcycle and diverse without bz-loss, plus diverse with it.
pub fn default_variants() -> Vec<Variant> {
    vec![
        Variant::new(InitStrategy::Random, false),
        Variant::new(InitStrategy::CoUpcycle, false),
        Variant::new(InitStrategy::Diverse, false),
        Variant::new(InitStrategy::Diverse, true),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::data::QaPoolConfig;

    fn tiny() -> FixtureConfig {
        let mut c = FixtureConfig {
            align_charts: 8,
            general_images: 8,
            qa: QaPoolConfig {
                mix: [8, 4, 4],
                anneal_stride: 4,
                heldout: 8,
            },
            ..FixtureConfig::default()
        };
        c.align.epochs = 2;
        c.sft.phases[0].epochs = 2;
        c.sft.phases[1].epochs = 1;
        c
    }

    #[test]
    fn identical_variants_give_identical_summaries() {
        let fx = Fixture::build(tiny()).unwrap();
        let v = Variant::new(InitStrategy::Diverse, false);
        let s = ablation_compare(&fx, &[v, v], &[0, 1]).unwrap();
        assert_eq!(s.variants[0], s.variants[1]);
        let again = ablation_compare(&fx, &[v], &[0, 1]).unwrap();
        assert_eq!(again.variants[0], s.variants[0]);
    }
}
