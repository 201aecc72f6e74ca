//! Experiment configuration: one JSON document, one payload key.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use zeno_schur::ensemble::{Axis, GridSpec};
use zeno_schur::flow::FlowConfig;
use zeno_schur::{ReconstructionRequest, SymMatrix};

use crate::error::CliError;

pub const PAYLOAD_KEYS: [&str; 5] = ["schur", "flow", "grid", "minimal-scan", "reconstruct"];
const META_KEYS: [&str; 4] = ["seed", "workers", "format", "output"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Either the blocks `{a, b, c}` or a full tensor `{q, d_slow}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchurPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<SymMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<SymMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<SymMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_slow: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimalScanPayload {
    #[serde(default = "default_chi")]
    pub chi: Axis,
    #[serde(default = "default_g")]
    pub g: Axis,
    /// Coupling template rows; identity 2×2 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<SymMatrix>,
}

fn default_chi() -> Axis {
    Axis::Range { start: 0.0, stop: 2.0, count: 50 }
}

fn default_g() -> Axis {
    Axis::Range { start: 0.1, stop: 2.0, count: 50 }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Schur(SchurPayload),
    Flow(FlowConfig),
    Grid(GridSpec),
    MinimalScan(MinimalScanPayload),
    Reconstruct(ReconstructionRequest),
}

impl Payload {
    pub fn key(&self) -> &'static str {
        match self {
            Payload::Schur(_) => "schur",
            Payload::Flow(_) => "flow",
            Payload::Grid(_) => "grid",
            Payload::MinimalScan(_) => "minimal-scan",
            Payload::Reconstruct(_) => "reconstruct",
        }
    }

    fn to_value(&self) -> Value {
        let v = match self {
            Payload::Schur(p) => serde_json::to_value(p),
            Payload::Flow(p) => serde_json::to_value(p),
            Payload::Grid(p) => serde_json::to_value(p),
            Payload::MinimalScan(p) => serde_json::to_value(p),
            Payload::Reconstruct(p) => serde_json::to_value(p),
        };
        v.expect("payloads always serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub payload: Payload,
    pub seed: u64,
    pub workers: usize,
    pub format: Format,
    pub output: PathBuf,
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> CliError {
    CliError::ConfigInvalid {
        field: field.into(),
        reason: reason.into(),
    }
}

fn typed<T: DeserializeOwned>(prefix: &str, v: Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { prefix.to_string() } else { format!("{prefix}.{path}") };
        invalid(field, e.into_inner().to_string())
    })
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl ExperimentConfig {
    /// Parses a config document. A previously written manifest is accepted
    /// as well: its `config` member is used.
    pub fn parse(text: &str, over: &Overrides) -> Result<Self, CliError> {
        let doc: Value = serde_json::from_str(text).map_err(|e| invalid("<document>", e.to_string()))?;
        let mut root = match doc {
            Value::Object(m) => m,
            _ => return Err(invalid("<document>", "expected a JSON object")),
        };
        if root.contains_key("manifest_version") {
            root = match root.remove("config") {
                Some(Value::Object(m)) => m,
                _ => return Err(invalid("config", "manifest without a config object")),
            };
        }
        Self::from_map(root, over)
    }

    fn from_map(mut root: Map<String, Value>, over: &Overrides) -> Result<Self, CliError> {
        for key in root.keys() {
            if !META_KEYS.contains(&key.as_str()) && !PAYLOAD_KEYS.contains(&key.as_str()) {
                return Err(invalid(
                    key.clone(),
                    format!("unknown key; expected one of {META_KEYS:?} or a payload {PAYLOAD_KEYS:?}"),
                ));
            }
        }
        let present: Vec<&str> = PAYLOAD_KEYS.iter().copied().filter(|k| root.contains_key(*k)).collect();
        let key = match present.as_slice() {
            [k] => *k,
            [] => return Err(invalid("<payload>", format!("exactly one of {PAYLOAD_KEYS:?} is required"))),
            _ => return Err(invalid("<payload>", format!("found several payloads: {present:?}"))),
        };

        let seed = match (over.seed, root.remove("seed")) {
            (Some(s), _) => Some(s),
            (None, Some(v)) => Some(typed::<u64>("seed", v)?),
            (None, None) => None,
        };
        let workers = match (over.workers, root.remove("workers")) {
            (Some(w), _) => w,
            (None, Some(v)) => typed::<usize>("workers", v)?,
            (None, None) => default_workers(),
        };
        if workers == 0 {
            return Err(invalid("workers", "must be >= 1"));
        }
        let format = match (over.format, root.remove("format")) {
            (Some(f), _) => f,
            (None, Some(v)) => typed::<Format>("format", v)?,
            (None, None) => Format::Csv,
        };
        let output = match (&over.output, root.remove("output")) {
            (Some(p), _) => p.clone(),
            (None, Some(v)) => typed::<PathBuf>("output", v)?,
            (None, None) => PathBuf::from("zeno-out"),
        };

        let body = root.remove(key).expect("payload key is present");
        let (payload, seed) = match key {
            "schur" => (Payload::Schur(typed(key, body)?), seed.unwrap_or(0)),
            "flow" => (Payload::Flow(typed(key, body)?), seed.unwrap_or(0)),
            "grid" => {
                let mut spec: GridSpec = typed(key, body)?;
                // The document-level seed wins over the payload's own.
                let seed = seed.unwrap_or(spec.master_seed);
                spec.master_seed = seed;
                (Payload::Grid(spec), seed)
            }
            "minimal-scan" => (Payload::MinimalScan(typed(key, body)?), seed.unwrap_or(0)),
            "reconstruct" => (Payload::Reconstruct(typed(key, body)?), seed.unwrap_or(0)),
            _ => unreachable!("payload keys are checked above"),
        };
        Ok(Self {
            payload,
            seed,
            workers,
            format,
            output,
        })
    }

    /// Normalized document that reproduces this run when parsed again.
    pub fn echo(&self) -> Value {
        let mut m = Map::new();
        m.insert("seed".into(), self.seed.into());
        m.insert("workers".into(), self.workers.into());
        m.insert("format".into(), serde_json::to_value(self.format).expect("format serializes"));
        m.insert("output".into(), self.output.to_string_lossy().into_owned().into());
        m.insert(self.payload.key().into(), self.payload.to_value());
        Value::Object(m)
    }
}
