//! Sources of candidate artifacts. The harness only sees text in and text
//! out; what produces it is the adapter's business.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ProjectBundle;
use crate::task::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub project: &'a ProjectBundle,
    pub task: TaskKind,
    /// 1-based.
    pub trial: usize,
    /// 1-based turn within a refinement loop.
    pub turn: usize,
    pub prompt: &'a str,
    /// Earlier turns, oldest first, not including `prompt`.
    pub transcript: &'a [Turn],
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("no replay file at {0}")]
    Missing(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("bad adapter response: {0}")]
    Protocol(String),
}

pub trait Adapter: Send + Sync {
    fn name(&self) -> String;

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, AdapterError>;

    /// Largest number of calls that may be in flight at once; `None` means
    /// unlimited.
    fn max_concurrency(&self) -> Option<usize> {
        None
    }
}

/// Body sent to subprocess and HTTP generators.
#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    task: TaskKind,
    prompt: &'a str,
    transcript: &'a [Turn],
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    artifact: String,
}

/// Pre-generated responses at `<dir>/<project>/<task>/trial<k>.txt`, with
/// later refinement turns at `trial<k>.turn<t>.txt`.
#[derive(Debug, Clone)]
pub struct ReplayAdapter {
    pub dir: PathBuf,
}

impl ReplayAdapter {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayAdapter { dir: dir.into() }
    }

    pub fn path_for(&self, project: &str, task: TaskKind, trial: usize, turn: usize) -> PathBuf {
        let dir = self.dir.join(project).join(task.as_str());
        if turn <= 1 {
            dir.join(format!("trial{trial}.txt"))
        } else {
            dir.join(format!("trial{trial}.turn{turn}.txt"))
        }
    }
}

impl Adapter for ReplayAdapter {
    fn name(&self) -> String {
        format!("replay:{}", self.dir.display())
    }

    fn generate(&self, r: &GenerationRequest<'_>) -> Result<String, AdapterError> {
        let path = self.path_for(&r.project.id, r.task, r.trial, r.turn);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(AdapterError::Missing(path)),
            Err(source) => Err(AdapterError::Io { path, source }),
        }
    }
}

/// Answers every request with the project's own reference artifact.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceAdapter;

impl Adapter for ReferenceAdapter {
    fn name(&self) -> String {
        "reference".into()
    }

    fn generate(&self, r: &GenerationRequest<'_>) -> Result<String, AdapterError> {
        Ok(match r.task {
            TaskKind::GenLogical => r.project.logical_text.clone(),
            TaskKind::GenPhysical => r.project.physical_text.clone(),
            TaskKind::CodeFromLogical | TaskKind::CodeFromPhysical => r.project.code.clone(),
        })
    }
}

/// Runs `sh -c <command>` per request: JSON request on stdin, JSON
/// `{"artifact": ...}` on stdout.
#[derive(Debug, Clone)]
pub struct ExecAdapter {
    pub command: String,
    pub concurrency: usize,
}

impl Adapter for ExecAdapter {
    fn name(&self) -> String {
        format!("exec:{}", self.command)
    }

    fn generate(&self, r: &GenerationRequest<'_>) -> Result<String, AdapterError> {
        let body = serde_json::to_vec(&WireRequest {
            task: r.task,
            prompt: r.prompt,
            transcript: r.transcript,
        })
        .expect("request serializes");
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| AdapterError::Transport(format!("cannot start `{}`: {e}", self.command)))?;
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            // a generator may exit without reading everything
            let _ = stdin.write_all(&body);
        }
        let out = child
            .wait_with_output()
            .map_err(|e| AdapterError::Transport(e.to_string()))?;
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            return Err(AdapterError::Transport(format!("generator exited with {}: {}", out.status, stderr.trim())));
        }
        let resp: WireResponse =
            serde_json::from_slice(&out.stdout).map_err(|e| AdapterError::Protocol(e.to_string()))?;
        Ok(resp.artifact)
    }

    fn max_concurrency(&self) -> Option<usize> {
        Some(self.concurrency.max(1))
    }
}

/// POSTs the JSON request to a URL and expects `{"artifact": ...}` back.
#[derive(Debug, Clone)]
pub struct HttpAdapter {
    pub url: String,
    pub concurrency: usize,
    pub timeout: Duration,
}

impl Adapter for HttpAdapter {
    fn name(&self) -> String {
        format!("http:{}", self.url)
    }

    fn generate(&self, r: &GenerationRequest<'_>) -> Result<String, AdapterError> {
        let config = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build();
        let agent = ureq::Agent::new_with_config(config);
        let resp = agent
            .post(&self.url)
            .send_json(WireRequest {
                task: r.task,
                prompt: r.prompt,
                transcript: r.transcript,
            })
            .map_err(|e| AdapterError::Transport(e.to_string()))?;
        let body: WireResponse = resp
            .into_body()
            .read_json()
            .map_err(|e| AdapterError::Protocol(e.to_string()))?;
        Ok(body.artifact)
    }

    fn max_concurrency(&self) -> Option<usize> {
        Some(self.concurrency.max(1))
    }
}

/// `replay:DIR`, `exec:CMD`, `http:URL` or `reference`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdapterSpec {
    Replay(PathBuf),
    Exec(String),
    Http(String),
    Reference,
}

impl FromStr for AdapterSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "reference" {
            return Ok(AdapterSpec::Reference);
        }
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("adapter `{s}` must look like replay:DIR, exec:CMD, http:URL or reference"))?;
        if rest.is_empty() {
            return Err(format!("adapter `{s}` is missing its argument"));
        }
        match kind {
            "replay" => Ok(AdapterSpec::Replay(PathBuf::from(rest))),
            "exec" => Ok(AdapterSpec::Exec(rest.to_string())),
            // keep the scheme: "http:http://host/x" or "http:https://..."
            "http" => Ok(AdapterSpec::Http(rest.to_string())),
            _ => Err(format!("unknown adapter kind `{kind}`")),
        }
    }
}

impl AdapterSpec {
    pub fn build(&self, concurrency: usize) -> Box<dyn Adapter> {
        match self {
            AdapterSpec::Replay(dir) => Box::new(ReplayAdapter::new(dir)),
            AdapterSpec::Exec(cmd) => Box::new(ExecAdapter {
                command: cmd.clone(),
                concurrency,
            }),
            AdapterSpec::Http(url) => Box::new(HttpAdapter {
                url: url.clone(),
                concurrency,
                timeout: Duration::from_secs(300),
            }),
            AdapterSpec::Reference => Box::new(ReferenceAdapter),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!("reference".parse::<AdapterSpec>().unwrap(), AdapterSpec::Reference);
        assert_eq!(
            "replay:dataset/replay".parse::<AdapterSpec>().unwrap(),
            AdapterSpec::Replay("dataset/replay".into())
        );
        assert_eq!(
            "http:http://localhost:8080/gen".parse::<AdapterSpec>().unwrap(),
            AdapterSpec::Http("http://localhost:8080/gen".into())
        );
        assert_eq!(
            "exec:python3 gen.py --fast".parse::<AdapterSpec>().unwrap(),
            AdapterSpec::Exec("python3 gen.py --fast".into())
        );
        assert!("ftp:x".parse::<AdapterSpec>().is_err());
        assert!("replay:".parse::<AdapterSpec>().is_err());
        assert!("nonsense".parse::<AdapterSpec>().is_err());
    }

    #[test]
    fn replay_paths() {
        let a = ReplayAdapter::new("/r");
        assert_eq!(a.path_for("blink", TaskKind::GenLogical, 2, 1), PathBuf::from("/r/blink/gen_logical/trial2.txt"));
        assert_eq!(
            a.path_for("blink", TaskKind::CodeFromPhysical, 1, 3),
            PathBuf::from("/r/blink/code_from_physical/trial1.turn3.txt")
        );
    }
}
