//! Declarative scenario files, their validation, and result bundles.
//!
//! A scenario is a JSON object
//! `{"schema": "dechist-scenario/1", "name", "kind", "description", "seed", "output"?, "parameters"}`.
//! Results go to `<out>/<name>/summary.json` plus one CSV per table.

pub mod input;
mod kinds;
mod output;

pub use kinds::*;
pub use output::{write_bundle, Cell, Table};

use crate::error::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::Path;

pub const SCHEMA: &str = "dechist-scenario/1";
pub const OUT_ENV: &str = "DECHIST_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Histories,
    Records,
    Lindblad,
    Qsd,
    Qbm,
    Hybrid,
    Timeless,
    Arrival,
    DoubleSlit,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 9] = [
        ScenarioKind::Histories,
        ScenarioKind::Records,
        ScenarioKind::Lindblad,
        ScenarioKind::Qsd,
        ScenarioKind::Qbm,
        ScenarioKind::Hybrid,
        ScenarioKind::Timeless,
        ScenarioKind::Arrival,
        ScenarioKind::DoubleSlit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Histories => "histories",
            ScenarioKind::Records => "records",
            ScenarioKind::Lindblad => "lindblad",
            ScenarioKind::Qsd => "qsd",
            ScenarioKind::Qbm => "qbm",
            ScenarioKind::Hybrid => "hybrid",
            ScenarioKind::Timeless => "timeless",
            ScenarioKind::Arrival => "arrival",
            ScenarioKind::DoubleSlit => "double-slit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// One field-level validation failure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct Issues(pub Vec<Issue>);

impl Issues {
    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Issue { path: path.into(), message: message.into() });
    }

    pub fn positive(&mut self, path: &str, v: f64) {
        if !(v > 0.0) || !v.is_finite() {
            self.push(path, format!("must be positive and finite, got {v}"));
        }
    }

    pub fn non_negative(&mut self, path: &str, v: f64) {
        if !(v >= 0.0) || !v.is_finite() {
            self.push(path, format!("must be non-negative and finite, got {v}"));
        }
    }

    pub fn at_least(&mut self, path: &str, v: usize, min: usize) {
        if v < min {
            self.push(path, format!("must be at least {min}, got {v}"));
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Io(String),
    #[error("{}", format_issues(.0))]
    Invalid(Vec<Issue>),
    #[error("{0}")]
    Run(#[from] Error),
}

fn format_issues(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("{}: {}", i.path, i.message)).collect::<Vec<_>>().join("\n")
}

impl ScenarioError {
    /// 2 for validation errors, 3 for numerical guard trips, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Invalid(_) => 2,
            ScenarioError::Run(e) if e.is_guard() => 3,
            ScenarioError::Run(Error::InvalidParameter { .. } | Error::Dimension(_)) => 2,
            _ => 1,
        }
    }
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(vec![Issue { path: path.into(), message: message.into() }])
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub seed: u64,
    pub output: Option<String>,
    pub job: Job,
    /// SHA-256 of the source text.
    pub sha256: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    name: String,
    kind: ScenarioKind,
    #[serde(default)]
    description: String,
    seed: u64,
    #[serde(default)]
    output: Option<String>,
    parameters: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_value<T: serde::de::DeserializeOwned>(v: serde_json::Value, prefix: &str) -> Result<T, ScenarioError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let p = e.path().to_string();
        let path = if p == "." { prefix.to_string() } else { format!("{prefix}.{p}") };
        invalid(path, e.into_inner().to_string())
    })
}

impl Scenario {
    /// Parses and validates scenario text. Nothing is computed.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| invalid("$", e.to_string()))?;
        let h: Header = parse_value(value, "$")?;
        if h.schema != SCHEMA {
            return Err(invalid("$.schema", format!("unsupported schema `{}`, expected `{SCHEMA}`", h.schema)));
        }
        if h.name.is_empty() || !h.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(invalid("$.name", "must be non-empty and use only letters, digits, '-' and '_'"));
        }
        let job = Job::parse(h.kind, h.parameters)?;
        Ok(Scenario { name: h.name, description: h.description, seed: h.seed, output: h.output, job, sha256: sha256_hex(text.as_bytes()) })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// A scenario built from a bare parameter object of the given kind.
    pub fn from_parameters(kind: ScenarioKind, name: &str, seed: u64, parameters_text: &str) -> Result<Self, ScenarioError> {
        let value: serde_json::Value = serde_json::from_str(parameters_text).map_err(|e| invalid("$", e.to_string()))?;
        let job = Job::parse(kind, value)?;
        Ok(Scenario { name: name.into(), description: String::new(), seed, output: None, job, sha256: sha256_hex(parameters_text.as_bytes()) })
    }

    pub fn kind(&self) -> ScenarioKind {
        self.job.kind()
    }

    pub fn run(&self) -> Result<ResultBundle, ScenarioError> {
        let out = self.job.run(self.seed)?;
        Ok(ResultBundle {
            provenance: Provenance {
                scenario: self.name.clone(),
                kind: self.kind(),
                scenario_sha256: self.sha256.clone(),
                version: env!("CARGO_PKG_VERSION").into(),
                seed: self.seed,
            },
            summary: out.summary,
            tables: out.tables,
        })
    }

    /// Runs on a dedicated pool of `threads` workers.
    pub fn run_with_threads(&self, threads: usize) -> Result<ResultBundle, ScenarioError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| ScenarioError::Io(e.to_string()))?;
        pool.install(|| self.run())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub scenario_sha256: String,
    pub version: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultBundle {
    pub provenance: Provenance,
    pub summary: Vec<(String, f64)>,
    pub tables: Vec<Table>,
}

impl ResultBundle {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Summary values as raw bits, for bitwise comparisons.
    pub fn summary_bits(&self) -> Vec<(String, u64)> {
        self.summary.iter().map(|(k, v)| (k.clone(), v.to_bits())).collect()
    }
}

impl fmt::Display for ResultBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.summary.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &self.summary {
            writeln!(f, "{k:<w$}  {v:.6e}")?;
        }
        Ok(())
    }
}

pub struct BundledScenario {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(BundledScenario { name: $name, text: include_str!(concat!("../../scenarios/", $name, ".json")) }),*]
    };
}

pub const BUNDLED: &[BundledScenario] = bundled![
    "histories-spin-precession",
    "records-conserved",
    "lindblad-amplitude-damping",
    "qsd-amplitude-damping",
    "qbm-path-peaking",
    "qbm-room-temperature",
    "hybrid-superposition",
    "timeless-oscillator",
    "arrival-antisymmetric",
    "arrival-packet",
    "double-slit",
];

pub fn bundled(name: &str) -> Option<&'static BundledScenario> {
    BUNDLED.iter().find(|b| b.name == name)
}

/// The first bundled scenario of each kind serves as that kind's default.
pub fn default_for(kind: ScenarioKind) -> Result<Scenario, ScenarioError> {
    for b in BUNDLED {
        let s = Scenario::parse(b.text)?;
        if s.kind() == kind {
            return Ok(s);
        }
    }
    Err(ScenarioError::Io(format!("no bundled scenario of kind {}", kind.name())))
}
