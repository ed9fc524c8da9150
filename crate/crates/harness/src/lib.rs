//! Evaluation harness: prompts, adapters, pairing with reference artifacts,
//! trial aggregation and reports.

pub mod adapter;
pub mod dataset;
pub mod evaluate;
pub mod extract;
pub mod prompt;
pub mod report;
pub mod task;
pub mod trials;

pub use adapter::{Adapter, AdapterError, AdapterSpec, GenerationRequest, ReferenceAdapter, ReplayAdapter, Role, Turn};
pub use dataset::{bundled_dataset_root, load_dataset, DatasetError, ProjectBundle, DATASET_ENV};
pub use evaluate::{evaluate_sample, Filters, SampleResult};
pub use prompt::{build_prompt, PromptOptions};
pub use report::{aggregate, error_stats, success_breakdown, BenchmarkReport};
pub use task::TaskKind;
pub use trials::{refine_loop, run_benchmark, run_trials, EvalConfig, RunPlan, DEFAULT_TRIALS};
