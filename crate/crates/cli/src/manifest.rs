use std::fmt::Write as _;
use std::path::Path;

use ricci_lab::flow::FlowConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "ricci-lab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where the mesh of a run came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Input {
    Generator { genus: usize, rounds: usize, perturb: f64, seed: u64 },
    Mesh { path: String },
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input: Input,
    /// `sha256:` of the mesh file bytes, or of the canonical generator parameters.
    pub input_digest: String,
    pub seed: Option<u64>,
    pub config: Option<FlowConfig>,
    pub sigma: Option<f64>,
    pub output_dir: String,
}

impl RunManifest {
    pub fn new(command: &str, input: Input, input_digest: String, output_dir: &Path) -> Self {
        let seed = match input {
            Input::Generator { seed, .. } => Some(seed),
            Input::Mesh { .. } => None,
        };
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            input,
            input_digest,
            seed,
            config: None,
            sigma: None,
            output_dir: output_dir.display().to_string(),
        }
    }

    /// Comment lines for output headers. The output directory is left out so
    /// that artifacts do not depend on where they were written.
    pub fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![format!("{} {} {}", self.tool, self.version, self.command)];
        if let Some(seed) = self.seed {
            lines.push(format!("seed: {seed}"));
        }
        lines.push(format!("input-digest: {}", self.input_digest));
        match &self.input {
            Input::Generator { genus, rounds, perturb, seed } => {
                lines.push(format!("generator: genus={genus} rounds={rounds} perturb={perturb} seed={seed}"))
            }
            Input::Mesh { path } => lines.push(format!("mesh: {path}")),
        }
        if let Some(config) = &self.config {
            lines.push(format!("config: {}", serde_json::to_string(config).expect("config serializes")));
        }
        if let Some(sigma) = self.sigma {
            lines.push(format!("sigma: {sigma}"));
        }
        lines
    }
}

pub fn sha256(bytes: &[u8]) -> String {
    let mut s = String::from("sha256:");
    for b in Sha256::digest(bytes) {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn generator_digest(genus: usize, rounds: usize, perturb: f64, seed: u64) -> String {
    let canonical = serde_json::to_string(&Input::Generator { genus, rounds, perturb, seed }).expect("serializes");
    sha256(canonical.as_bytes())
}
