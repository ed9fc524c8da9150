//! Structural circuit checks.
//!
//! Four checks apply to every circuit (redundant connections, extraneous,
//! missing and isolated components); pin conflicts and breadboard bypasses
//! only apply to physical circuits.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::circuit::{normalize_type, CircuitDoc, CircuitKind, ComponentDecl, Endpoint};
use crate::components::ComponentClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    RedundantConnection,
    ExtraneousComponent,
    MissingComponent,
    IsolatedComponent,
    PinConflict,
    BreadboardBypass,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 6] = [
        ErrorCategory::RedundantConnection,
        ErrorCategory::ExtraneousComponent,
        ErrorCategory::MissingComponent,
        ErrorCategory::IsolatedComponent,
        ErrorCategory::PinConflict,
        ErrorCategory::BreadboardBypass,
    ];

    pub fn physical_only(self) -> bool {
        matches!(self, ErrorCategory::PinConflict | ErrorCategory::BreadboardBypass)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::RedundantConnection => "RedundantConnection",
            ErrorCategory::ExtraneousComponent => "ExtraneousComponent",
            ErrorCategory::MissingComponent => "MissingComponent",
            ErrorCategory::IsolatedComponent => "IsolatedComponent",
            ErrorCategory::PinConflict => "PinConflict",
            ErrorCategory::BreadboardBypass => "BreadboardBypass",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub category: ErrorCategory,
    pub subject: String,
    pub note: String,
}

impl Finding {
    fn new(category: ErrorCategory, subject: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            category,
            subject: subject.into(),
            note: note.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub counts: BTreeMap<ErrorCategory, usize>,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn from_findings(findings: Vec<Finding>) -> Self {
        let mut counts: BTreeMap<ErrorCategory, usize> =
            ErrorCategory::ALL.iter().map(|c| (*c, 0)).collect();
        for f in &findings {
            *counts.entry(f.category).or_default() += 1;
        }
        Self { counts, findings }
    }

    pub fn count(&self, category: ErrorCategory) -> usize {
        self.counts.get(&category).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.findings.len()
    }

    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// One finding per connection occurrence beyond the first for each
/// unordered endpoint pair.
pub fn check_redundant(circuit: &CircuitDoc) -> Vec<Finding> {
    let mut seen: HashMap<(&Endpoint, &Endpoint), usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, conn) in circuit.connections.iter().enumerate() {
        let n = seen.entry(conn.key()).or_default();
        *n += 1;
        if *n > 1 {
            out.push(Finding::new(
                ErrorCategory::RedundantConnection,
                format!("{} <-> {}", conn.a, conn.b),
                format!("connection {i} repeats an earlier connection"),
            ));
        }
    }
    out
}

/// Multiset key for a component: its built-in class when recognized,
/// otherwise its normalized type string.
fn type_key(c: &ComponentDecl) -> String {
    match ComponentClass::classify(&c.type_name) {
        ComponentClass::Unknown => normalize_type(&c.type_name),
        class => format!("{class:?}"),
    }
}

fn type_groups<'a>(circuit: &'a CircuitDoc, skip_breadboards: bool) -> BTreeMap<String, Vec<&'a ComponentDecl>> {
    let mut groups: BTreeMap<String, Vec<&ComponentDecl>> = BTreeMap::new();
    for c in &circuit.components {
        if skip_breadboards && c.is_breadboard() {
            continue;
        }
        groups.entry(type_key(c)).or_default().push(c);
    }
    groups
}

/// Extraneous and missing components by component-type multiset difference.
/// Breadboards are left out when the two circuits are of different kinds.
pub fn check_component_sets(candidate: &CircuitDoc, reference: &CircuitDoc) -> Vec<Finding> {
    let skip_bb = candidate.kind != reference.kind;
    let cand = type_groups(candidate, skip_bb);
    let refr = type_groups(reference, skip_bb);
    let mut out = Vec::new();
    for (key, comps) in &cand {
        let expected = refr.get(key).map_or(0, Vec::len);
        for c in comps.iter().skip(expected) {
            out.push(Finding::new(
                ErrorCategory::ExtraneousComponent,
                c.id.clone(),
                format!("\"{}\" is not in the reference circuit ({} expected)", c.type_name, expected),
            ));
        }
    }
    for (key, comps) in &refr {
        let present = cand.get(key).map_or(0, Vec::len);
        for c in comps.iter().skip(present) {
            out.push(Finding::new(
                ErrorCategory::MissingComponent,
                c.id.clone(),
                format!("reference \"{}\" has no counterpart in the candidate", c.type_name),
            ));
        }
    }
    out
}

/// Non-breadboard components none of whose pins appear in any connection.
pub fn check_isolated(circuit: &CircuitDoc) -> Vec<Finding> {
    let used: std::collections::HashSet<&str> = circuit.endpoints().map(Endpoint::component_id).collect();
    circuit
        .components
        .iter()
        .filter(|c| !c.is_breadboard() && !used.contains(c.id.as_str()))
        .map(|c| Finding::new(ErrorCategory::IsolatedComponent, c.id.clone(), "component has no connections"))
        .collect()
}

/// Every exact endpoint (hole, rail position or component pin) is single-use.
///
/// Uses are counted over distinct connections, so a repeated connection is
/// reported once as redundant and not again as a conflict.
pub fn check_pin_conflicts(physical: &CircuitDoc) -> Vec<Finding> {
    let mut distinct = std::collections::HashSet::new();
    let mut uses: Vec<(&Endpoint, usize)> = Vec::new();
    let mut slot: HashMap<&Endpoint, usize> = HashMap::new();
    for conn in &physical.connections {
        if !distinct.insert(conn.key()) {
            continue;
        }
        for ep in conn.endpoints() {
            let i = *slot.entry(ep).or_insert_with(|| {
                uses.push((ep, 0));
                uses.len() - 1
            });
            uses[i].1 += 1;
        }
    }
    let mut out = Vec::new();
    for (ep, n) in uses {
        for _ in 1..n {
            out.push(Finding::new(
                ErrorCategory::PinConflict,
                ep.to_string(),
                format!("used by {n} connections"),
            ));
        }
    }
    out
}

/// Connections joining two component pins without touching the breadboard.
pub fn check_bypass(physical: &CircuitDoc) -> Vec<Finding> {
    physical
        .connections
        .iter()
        .filter(|c| c.a.is_component_pin() && c.b.is_component_pin())
        .map(|c| {
            Finding::new(
                ErrorCategory::BreadboardBypass,
                format!("{} <-> {}", c.a, c.b),
                "direct pin-to-pin connection",
            )
        })
        .collect()
}

/// Runs every check that applies to `kind`. Never fails: problems with the
/// candidate are the output.
pub fn validate(candidate: &CircuitDoc, reference: &CircuitDoc, kind: CircuitKind) -> ValidationReport {
    let mut findings = check_redundant(candidate);
    findings.extend(check_component_sets(candidate, reference));
    findings.extend(check_isolated(candidate));
    if kind == CircuitKind::Physical {
        findings.extend(check_pin_conflicts(candidate));
        findings.extend(check_bypass(candidate));
    }
    findings.sort_by_key(|f| f.category);
    ValidationReport::from_findings(findings)
}
