//! Trials, refinement loops and the parallel runner.

use pcbench_core::BoardProfile;
use rayon::prelude::*;
use serde::Serialize;

use crate::adapter::{Adapter, GenerationRequest, Role, Turn};
use crate::dataset::ProjectBundle;
use crate::evaluate::{evaluate_sample, SampleResult};
use crate::prompt::{build_prompt, PromptOptions};
use crate::task::TaskKind;

pub const DEFAULT_TRIALS: usize = 5;
pub const DEFAULT_MAX_TURNS: usize = 5;

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub profile: BoardProfile,
    pub prompt: PromptOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            profile: BoardProfile::arduino_uno(),
            prompt: PromptOptions::default(),
        }
    }
}

/// One fresh adapter call and one fresh simulation.
pub fn run_sample(
    project: &ProjectBundle,
    task: TaskKind,
    trial: usize,
    adapter: &dyn Adapter,
    config: &EvalConfig,
) -> SampleResult {
    let prompt = build_prompt(project, task, config.prompt);
    let request = GenerationRequest {
        project,
        task,
        trial,
        turn: 1,
        prompt: &prompt,
        transcript: &[],
    };
    match adapter.generate(&request) {
        Ok(response) => evaluate_sample(project, task, trial, &response, &config.profile),
        Err(e) => SampleResult::transport_failure(project, task, trial, e.to_string()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    pub results: Vec<SampleResult>,
    pub rate: f64,
}

/// Fraction of gated successes. Zero for an empty slice.
pub fn success_rate(results: &[SampleResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| r.gated_success).count() as f64 / results.len() as f64
}

/// Runs trials `1..=n` sequentially. `n` below one is treated as one.
pub fn run_trials(
    project: &ProjectBundle,
    task: TaskKind,
    adapter: &dyn Adapter,
    n: usize,
    config: &EvalConfig,
) -> TrialOutcome {
    let results: Vec<SampleResult> = (1..=n.max(1))
        .map(|trial| run_sample(project, task, trial, adapter, config))
        .collect();
    let rate = success_rate(&results);
    TrialOutcome { results, rate }
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineOutcome {
    pub result: SampleResult,
    pub transcript: Vec<Turn>,
}

/// What the model sees after a failed turn: the verdict's failures plus the
/// validation report, as JSON.
pub fn failure_feedback(result: &SampleResult) -> String {
    let log = serde_json::json!({
        "passed": result.verdict.passed,
        "failed_steps": result.verdict.failed_steps,
        "sim_errors": result.verdict.sim_errors,
        "timed_out": result.verdict.timed_out,
        "parse_error": result.parse_error,
        "validation": result.validation,
    });
    format!(
        "Your previous answer did not pass evaluation. Structured failure log:\n\n```json\n{}\n```\n\nFix the problems and reply with the complete corrected answer.\n",
        serde_json::to_string_pretty(&log).expect("log serializes")
    )
}

/// Re-queries with structured failure logs until a gated success or
/// `max_turns` turns. A transport failure ends the loop as a failure.
pub fn refine_loop(
    project: &ProjectBundle,
    task: TaskKind,
    trial: usize,
    adapter: &dyn Adapter,
    max_turns: usize,
    config: &EvalConfig,
) -> RefineOutcome {
    let mut transcript: Vec<Turn> = Vec::new();
    let mut prompt = build_prompt(project, task, config.prompt);
    let max_turns = max_turns.max(1);
    let mut turn = 1;
    loop {
        let request = GenerationRequest {
            project,
            task,
            trial,
            turn,
            prompt: &prompt,
            transcript: &transcript,
        };
        let response = adapter.generate(&request);
        transcript.push(Turn {
            role: Role::User,
            content: prompt.clone(),
        });
        let mut result = match response {
            Ok(text) => {
                transcript.push(Turn {
                    role: Role::Assistant,
                    content: text.clone(),
                });
                evaluate_sample(project, task, trial, &text, &config.profile)
            }
            Err(e) => {
                let mut r = SampleResult::transport_failure(project, task, trial, e.to_string());
                r.turns = turn;
                return RefineOutcome { result: r, transcript };
            }
        };
        result.turns = turn;
        if result.gated_success || turn >= max_turns {
            return RefineOutcome { result, transcript };
        }
        prompt = failure_feedback(&result);
        turn += 1;
    }
}

/// One `(project, task, trial)` unit of a benchmark run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unit {
    pub project: usize,
    pub task: TaskKind,
    pub trial: usize,
}

#[derive(Debug, Clone)]
pub struct RunPlan {
    pub tasks: Vec<TaskKind>,
    pub trials: usize,
    pub parallelism: usize,
    /// `Some(k)` runs refinement loops of up to `k` turns instead of single
    /// samples.
    pub refine_turns: Option<usize>,
}

impl Default for RunPlan {
    fn default() -> Self {
        RunPlan {
            tasks: TaskKind::ALL.to_vec(),
            trials: DEFAULT_TRIALS,
            parallelism: 1,
            refine_turns: None,
        }
    }
}

pub fn plan_units(projects: &[ProjectBundle], plan: &RunPlan) -> Vec<Unit> {
    let mut units = Vec::new();
    for project in 0..projects.len() {
        for &task in &plan.tasks {
            for trial in 1..=plan.trials.max(1) {
                units.push(Unit { project, task, trial });
            }
        }
    }
    units
}

/// Runs every unit, in parallel up to the smaller of `plan.parallelism` and
/// the adapter's limit. Results come back in unit order whatever the
/// scheduling.
pub fn run_benchmark(
    projects: &[ProjectBundle],
    adapter: &dyn Adapter,
    plan: &RunPlan,
    config: &EvalConfig,
) -> Vec<SampleResult> {
    let units = plan_units(projects, plan);
    let threads = match adapter.max_concurrency() {
        Some(limit) => plan.parallelism.min(limit),
        None => plan.parallelism,
    }
    .max(1);
    let run_one = |u: &Unit| {
        let project = &projects[u.project];
        match plan.refine_turns {
            Some(k) => refine_loop(project, u.task, u.trial, adapter, k, config).result,
            None => run_sample(project, u.task, u.trial, adapter, config),
        }
    };
    if threads == 1 {
        return units.iter().map(run_one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool starts");
    pool.install(|| units.par_iter().map(run_one).collect())
}
