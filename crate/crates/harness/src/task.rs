use std::fmt;
use std::str::FromStr;

use pcbench_core::CircuitKind;
use serde::{Deserialize, Serialize};

/// The four generation tasks, named by what the model receives and returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Description + code to logical circuit.
    GenLogical,
    /// Description + code to physical breadboard layout.
    GenPhysical,
    /// Description + logical circuit to code.
    CodeFromLogical,
    /// Description + physical layout to code.
    CodeFromPhysical,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::GenLogical,
        TaskKind::GenPhysical,
        TaskKind::CodeFromLogical,
        TaskKind::CodeFromPhysical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::GenLogical => "gen_logical",
            TaskKind::GenPhysical => "gen_physical",
            TaskKind::CodeFromLogical => "code_from_logical",
            TaskKind::CodeFromPhysical => "code_from_physical",
        }
    }

    pub fn generates_circuit(self) -> bool {
        matches!(self, TaskKind::GenLogical | TaskKind::GenPhysical)
    }

    /// Kind of the circuit the task produces or consumes.
    pub fn circuit_kind(self) -> CircuitKind {
        match self {
            TaskKind::GenLogical | TaskKind::CodeFromLogical => CircuitKind::Logical,
            TaskKind::GenPhysical | TaskKind::CodeFromPhysical => CircuitKind::Physical,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = TaskKind::ALL.iter().map(|t| t.as_str()).collect();
                format!("unknown task `{s}` (expected one of {})", names.join(", "))
            })
    }
}
