//! Alignment pre-training, expert initialization, two-phase SFT and the
//! ablation drivers built on them.

mod ablation;
mod align;
mod data;
mod gradcheck;
mod init;
mod schedule;
mod sft;

pub use ablation::{
    ablation_compare, default_variants, run_variant, AblationSummary, Fixture, FixtureConfig,
    RunResult, Variant, VariantSummary,
};
pub use align::{align_connector, vanilla_connector, AlignConfig, AlignReport};
pub use data::{
    build_qa_data, chart_align_task, derive_seed, general_image, general_task, qa_sample,
    AlignKind, AlignTask, QaData, QaPoolConfig, QaSample, QaTruth, QA_OUTPUTS,
};
pub use gradcheck::{moe_grad_check, GradCheckCase, GradCheckSuite};
pub use init::{init_moe, AlignedExperts, InitStrategy};
pub use schedule::{Schedule, WARMUP_RATIO};
pub use sft::{
    evaluate, sft_batch, sft_run, sft_run_with, EpochUsage, Evaluation, PhaseConfig, PhaseData,
    PhaseRecord, SftConfig, StepRecord, TrainLog, EVAL_MARGIN,
};
