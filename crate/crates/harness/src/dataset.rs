//! Project bundles on disk.
//!
//! One directory per project:
//!
//! ```text
//! <root>/projects/<id>/description.md
//!                      logical.json
//!                      physical.json
//!                      firmware.pcfw
//!                      testproc.json
//!                      meta.json       {"name", "level", "mutants"}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use pcbench_core::{parse_circuit, parse_program, parse_testproc, CircuitDoc, CircuitKind, Program, TestProcedure};
use serde::Deserialize;
use thiserror::Error;

pub const DATASET_ENV: &str = "PCBENCH_DATASET";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

/// Documented single-edit mutants that must fail the project's procedure.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Mutants {
    pub firmware: TextEdit,
    pub logical_drop: [String; 2],
    pub physical_drop: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TextEdit {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Deserialize)]
struct Meta {
    name: String,
    level: u8,
    mutants: Option<Mutants>,
}

#[derive(Debug, Clone)]
pub struct ProjectBundle {
    pub id: String,
    pub name: String,
    pub level: u8,
    pub description: String,
    pub logical: CircuitDoc,
    pub logical_text: String,
    pub physical: CircuitDoc,
    pub physical_text: String,
    pub code: String,
    pub program: Program,
    pub testproc: TestProcedure,
    pub mutants: Option<Mutants>,
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn invalid(path: &Path, message: impl ToString) -> DatasetError {
    DatasetError::Invalid {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

impl ProjectBundle {
    pub fn load(dir: &Path) -> Result<ProjectBundle, DatasetError> {
        let id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| invalid(dir, "project directory has no usable name"))?
            .to_string();
        let file = |name: &str| dir.join(name);

        let meta_path = file("meta.json");
        let meta: Meta = serde_json::from_str(&read(&meta_path)?).map_err(|e| invalid(&meta_path, e))?;
        if !(1..=4).contains(&meta.level) {
            return Err(invalid(&meta_path, format!("level {} is not in 1-4", meta.level)));
        }

        let logical_path = file("logical.json");
        let logical_text = read(&logical_path)?;
        let logical = parse_circuit(&logical_text, CircuitKind::Logical).map_err(|e| invalid(&logical_path, e))?;
        let physical_path = file("physical.json");
        let physical_text = read(&physical_path)?;
        let physical =
            parse_circuit(&physical_text, CircuitKind::Physical).map_err(|e| invalid(&physical_path, e))?;
        let code_path = file("firmware.pcfw");
        let code = read(&code_path)?;
        let program = parse_program(&code).map_err(|e| invalid(&code_path, e))?;
        let t_path = file("testproc.json");
        let testproc = parse_testproc(&read(&t_path)?).map_err(|e| invalid(&t_path, e))?;

        Ok(ProjectBundle {
            id,
            name: meta.name,
            level: meta.level,
            description: read(&file("description.md"))?.trim_end().to_string(),
            logical,
            logical_text,
            physical,
            physical_text,
            code,
            program,
            testproc,
            mutants: meta.mutants,
        })
    }
}

/// Project directories under `<root>/projects`, sorted.
pub fn project_dirs(root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let dir = root.join("projects");
    let io = |source| DatasetError::Io {
        path: dir.clone(),
        source,
    };
    let mut dirs = Vec::new();
    for entry in fs::read_dir(&dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Loads every project under `<root>/projects`, sorted by id. Stops at the
/// first broken project.
pub fn load_dataset(root: &Path) -> Result<Vec<ProjectBundle>, DatasetError> {
    project_dirs(root)?.iter().map(|d| ProjectBundle::load(d)).collect()
}

/// The bundled corpus shipped with this repository.
pub fn bundled_dataset_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../dataset")
}
