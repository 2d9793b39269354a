use std::path::{Path, PathBuf};

use defglm::simlab::ScenarioConfig;
use defglm::tuning::Method;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{load_json, sha256_hex, write_file};
use crate::traffic::{Direction, TrafficConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A fully resolved command: everything needed to produce the outputs again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase", deny_unknown_fields)]
pub enum Invocation {
    Simulate {
        config: ScenarioConfig,
        replicate: usize,
        seed: u64,
    },
    Scenario {
        config: ScenarioConfig,
        methods: Vec<Method>,
        cut_disp: bool,
        seed: u64,
    },
    Cv {
        config: ScenarioConfig,
        methods: Vec<Method>,
        data: Option<PathBuf>,
        seed: u64,
    },
    Fit {
        config: ScenarioConfig,
        method: Method,
        params: [f64; 2],
        data: Option<PathBuf>,
        seed: u64,
    },
    Traffic {
        config: TrafficConfig,
        input: PathBuf,
        sensor: String,
        direction: Direction,
        method: Method,
        samples: usize,
        summer_2019: bool,
        seed: u64,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Simulate { .. } => "simulate",
            Invocation::Scenario { .. } => "scenario",
            Invocation::Cv { .. } => "cv",
            Invocation::Fit { .. } => "fit",
            Invocation::Traffic { .. } => "traffic",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Invocation::Simulate { seed, .. }
            | Invocation::Scenario { seed, .. }
            | Invocation::Cv { seed, .. }
            | Invocation::Fit { seed, .. }
            | Invocation::Traffic { seed, .. } => *seed,
        }
    }

    /// SHA-256 of the canonical JSON form of the configuration document.
    pub fn config_digest(&self) -> String {
        let json = match self {
            Invocation::Simulate { config, .. }
            | Invocation::Scenario { config, .. }
            | Invocation::Cv { config, .. }
            | Invocation::Fit { config, .. } => serde_json::to_vec(config),
            Invocation::Traffic { config, .. } => serde_json::to_vec(config),
        };
        sha256_hex(&json.expect("configs serialize"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub software_version: String,
    pub started: String,
    pub finished: String,
    pub invocation: Invocation,
    pub inputs: Vec<FileDigest>,
    /// Output files relative to the manifest's directory.
    pub outputs: Vec<FileDigest>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        load_json(path)
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Config(format!("cannot encode manifest: {e}")))?;
        text.push('\n');
        write_file(&dir.join(MANIFEST_FILE), text.as_bytes())
    }
}
