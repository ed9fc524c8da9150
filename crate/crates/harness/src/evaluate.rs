//! Scoring a single candidate artifact against a project's references.

use pcbench_core::validate::ErrorCategory;
use pcbench_core::{
    new_sim, parse_circuit, parse_program, run_procedure, validate, BoardProfile, CircuitDoc, Program,
    ValidationReport, Verdict,
};
use serde::Serialize;

use crate::dataset::ProjectBundle;
use crate::extract::extract_artifact;
use crate::task::TaskKind;

/// Success under each of the physical-layout criteria. For tasks that do
/// not produce a physical circuit every flag equals `functional`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Filters {
    pub functional: bool,
    pub no_bypass: bool,
    pub no_conflict: bool,
    pub both: bool,
}

impl Filters {
    pub fn from_parts(functional: bool, report: Option<&ValidationReport>) -> Filters {
        let (bypass, conflict) = match report {
            Some(r) => (r.count(ErrorCategory::BreadboardBypass), r.count(ErrorCategory::PinConflict)),
            None => (0, 0),
        };
        Filters {
            functional,
            no_bypass: functional && bypass == 0,
            no_conflict: functional && conflict == 0,
            both: functional && bypass == 0 && conflict == 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleResult {
    pub project: String,
    pub level: u8,
    pub task: TaskKind,
    pub trial: usize,
    /// Turns used; 1 outside refinement loops.
    pub turns: usize,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    /// Present for circuit-generating tasks whose output parsed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    pub filters: Filters,
    pub gated_success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
}

impl SampleResult {
    /// The adapter never produced an artifact.
    pub fn transport_failure(project: &ProjectBundle, task: TaskKind, trial: usize, message: String) -> SampleResult {
        SampleResult {
            project: project.id.clone(),
            level: project.level,
            task,
            trial,
            turns: 1,
            verdict: Verdict::setup_failure(format!("adapter failed: {message}")),
            parse_error: None,
            validation: None,
            filters: Filters::default(),
            gated_success: false,
            transport_error: Some(message),
        }
    }
}

fn simulate(project: &ProjectBundle, circuit: &CircuitDoc, program: &Program, profile: &BoardProfile) -> Verdict {
    match new_sim(circuit, program, profile) {
        Ok(sim) => run_procedure(&project.testproc, sim),
        Err(e) => Verdict::setup_failure(format!("simulation setup failed: {e}")),
    }
}

/// Extracts, parses, pairs and runs a candidate. Nothing here fails: every
/// problem with the candidate ends up in the result.
pub fn evaluate_sample(
    project: &ProjectBundle,
    task: TaskKind,
    trial: usize,
    response: &str,
    profile: &BoardProfile,
) -> SampleResult {
    let artifact = extract_artifact(response);
    let mut parse_error = None;
    let mut validation = None;

    let verdict = if task.generates_circuit() {
        let kind = task.circuit_kind();
        match parse_circuit(&artifact, kind) {
            Ok(candidate) => {
                let reference = match task {
                    TaskKind::GenPhysical => &project.physical,
                    _ => &project.logical,
                };
                validation = Some(validate(&candidate, reference, kind));
                simulate(project, &candidate, &project.program, profile)
            }
            Err(e) => {
                parse_error = Some(e.to_string());
                Verdict::setup_failure(format!("candidate circuit does not parse: {e}"))
            }
        }
    } else {
        match parse_program(&artifact) {
            Ok(program) => {
                let circuit = match task {
                    TaskKind::CodeFromPhysical => &project.physical,
                    _ => &project.logical,
                };
                simulate(project, circuit, &program, profile)
            }
            Err(e) => {
                parse_error = Some(e.to_string());
                Verdict::setup_failure(format!("candidate code does not parse: {e}"))
            }
        }
    };

    let filters = Filters::from_parts(verdict.passed, validation.as_ref());
    let gated_success = match task {
        TaskKind::GenPhysical => filters.both,
        _ => filters.functional,
    };
    SampleResult {
        project: project.id.clone(),
        level: project.level,
        task,
        trial,
        turns: 1,
        verdict,
        parse_error,
        validation,
        filters,
        gated_success,
        transport_error: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pcbench_core::validate::Finding;

    fn report(bypass: usize, conflict: usize) -> ValidationReport {
        let mut findings = Vec::new();
        for _ in 0..bypass {
            findings.push(Finding {
                category: ErrorCategory::BreadboardBypass,
                subject: "x".into(),
                note: String::new(),
            });
        }
        for _ in 0..conflict {
            findings.push(Finding {
                category: ErrorCategory::PinConflict,
                subject: "y".into(),
                note: String::new(),
            });
        }
        ValidationReport::from_findings(findings)
    }

    #[test]
    fn filter_flags() {
        let f = Filters::from_parts(true, Some(&report(0, 1)));
        assert_eq!((f.functional, f.no_bypass, f.no_conflict, f.both), (true, true, false, false));
        let f = Filters::from_parts(true, Some(&report(2, 0)));
        assert_eq!((f.functional, f.no_bypass, f.no_conflict, f.both), (true, false, true, false));
        let f = Filters::from_parts(false, Some(&report(0, 0)));
        assert_eq!(f, Filters::default());
        let f = Filters::from_parts(true, None);
        assert!(f.both);
    }
}
