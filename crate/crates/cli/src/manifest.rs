//! Artifact writing, the run manifest and replay.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;
use crate::run::{execute, Artifact, Experiment, Outcome};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub subcommand: Experiment,
    /// SHA-256 of the canonical effective config text.
    pub config_sha256: String,
    /// Effective config with every override folded in.
    pub config: ScenarioConfig,
    pub seeds: Vec<u64>,
    pub versions: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Tracks written files so a failed run leaves nothing behind.
struct Writer {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let stale = dir.join(MANIFEST_FILE);
        if stale.exists() {
            fs::remove_file(&stale).with_context(|| format!("cannot replace {}", stale.display()))?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<OutputEntry> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        let back = fs::read(&path).with_context(|| format!("cannot read back {}", path.display()))?;
        if back != bytes {
            bail!("{} does not match what was written", path.display());
        }
        Ok(OutputEntry {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        })
    }

    fn rollback(&self) {
        for path in &self.written {
            if let Err(e) = fs::remove_file(path) {
                if e.kind() != std::io::ErrorKind::NotFound {
                    log::warn!("could not remove partial output {}: {e}", path.display());
                }
            }
        }
    }
}

/// Runs one experiment into `out_dir` and writes the manifest last.
pub fn run(experiment: Experiment, cfg: &ScenarioConfig, out_dir: &Path) -> anyhow::Result<(RunManifest, Outcome)> {
    let started_at = now();
    let outcome = execute(experiment, cfg).with_context(|| format!("`{experiment}` failed"))?;
    let config_text = cfg.to_json();
    let mut artifacts = vec![Artifact {
        name: CONFIG_FILE.to_string(),
        bytes: config_text.clone().into_bytes(),
    }];
    artifacts.extend(outcome.artifacts.iter().cloned());

    let mut writer = Writer::new(out_dir)?;
    let result = (|| -> anyhow::Result<RunManifest> {
        let mut outputs = Vec::with_capacity(artifacts.len());
        for a in &artifacts {
            outputs.push(writer.write(&a.name, &a.bytes)?);
            log::info!("wrote {}", out_dir.join(&a.name).display());
        }
        let manifest = RunManifest {
            subcommand: experiment,
            config_sha256: sha256_hex(config_text.as_bytes()),
            config: cfg.clone(),
            seeds: outcome.seeds.clone(),
            versions: BTreeMap::from([
                ("msa-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
                ("msa-core".to_string(), msa_core::VERSION.to_string()),
            ]),
            started_at,
            finished_at: now(),
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        writer.write(MANIFEST_FILE, text.as_bytes())?;
        Ok(manifest)
    })();
    match result {
        Ok(m) => Ok((m, outcome)),
        Err(e) => {
            writer.rollback();
            Err(e)
        }
    }
}

pub fn load_manifest(path: &Path) -> anyhow::Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
    let m: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("{} is not a valid manifest", path.display()))?;
    let hash = sha256_hex(m.config.to_json().as_bytes());
    if hash != m.config_sha256 {
        bail!("config hash mismatch in {}: recorded {}, computed {hash}", path.display(), m.config_sha256);
    }
    m.config.validate()?;
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub original: RunManifest,
    pub fresh: RunManifest,
    /// Files whose content differs, or that exist in only one run.
    pub mismatches: Vec<String>,
}

/// Re-executes a recorded run into `out_dir` and compares every output.
pub fn rerun(manifest_path: &Path, out_dir: &Path) -> anyhow::Result<Replay> {
    let original = load_manifest(manifest_path)?;
    let (fresh, _) = run(original.subcommand, &original.config, out_dir)?;
    let before: BTreeMap<&str, &str> = original.outputs.iter().map(|o| (o.file.as_str(), o.sha256.as_str())).collect();
    let after: BTreeMap<&str, &str> = fresh.outputs.iter().map(|o| (o.file.as_str(), o.sha256.as_str())).collect();
    let mut mismatches = Vec::new();
    for name in before.keys().chain(after.keys().filter(|k| !before.contains_key(*k))) {
        if *name == MANIFEST_FILE {
            continue;
        }
        if before.get(name) != after.get(name) {
            mismatches.push(name.to_string());
        }
    }
    Ok(Replay {
        original,
        fresh,
        mismatches,
    })
}
