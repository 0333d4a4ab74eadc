//! Run manifests: what was run, with which inputs and which binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::Parser;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stlgame_core::io::write_atomic;

use crate::{usage, Cli, Command};

pub const MANIFEST_FORMAT: &str = "stlgame-manifest";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub command: String,
    /// Arguments as given, program name first.
    pub argv: Vec<String>,
    pub seed: u64,
    /// Named seeds derived from `seed`.
    pub seeds: BTreeMap<String, u64>,
    /// Effective `--out` after defaults.
    pub out: PathBuf,
    /// Fully resolved configuration, when the command has one.
    pub config: Option<String>,
    /// `sha256` over `blob <len>\0<bytes>` of the running executable.
    pub engine_hash: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: Option<u128>,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

pub fn engine_hash() -> String {
    let bytes = std::env::current_exe().and_then(fs::read).unwrap_or_default();
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(&bytes);
    format!("sha256:{}", hex::encode(h.finalize()))
}

/// A manifest being written alongside a command's outputs.
pub struct ManifestWriter {
    path: PathBuf,
    manifest: RunManifest,
}

impl ManifestWriter {
    /// Writes the manifest immediately, before the command does any work.
    pub fn start(
        path: PathBuf,
        command: &str,
        seed: u64,
        seeds: BTreeMap<String, u64>,
        out: &Path,
        config: Option<String>,
    ) -> anyhow::Result<Self> {
        let manifest = RunManifest {
            format: MANIFEST_FORMAT.into(),
            version: 1,
            command: command.into(),
            argv: std::env::args().collect(),
            seed,
            seeds,
            out: out.to_path_buf(),
            config,
            engine_hash: engine_hash(),
            started_unix_ms: now_ms(),
            finished_unix_ms: None,
        };
        let w = Self { path, manifest };
        w.write()?;
        Ok(w)
    }

    fn write(&self) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        write_atomic(&self.path, text.as_bytes()).with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        self.manifest.finished_unix_ms = Some(now_ms());
        self.write()
    }
}

/// Rebuilds the recorded invocation. A `--out` given to `replay` redirects the outputs.
pub fn replay_cli(path: &Path, outer: &Cli) -> anyhow::Result<Cli> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("manifest {}: {e}", path.display())))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| usage(format!("manifest {}: {e}", path.display())))?;
    if m.format != MANIFEST_FORMAT {
        return Err(usage(format!("{} is not a run manifest", path.display())));
    }
    let mut cli = Cli::try_parse_from(&m.argv).map_err(|e| usage(format!("recorded arguments no longer parse: {e}")))?;
    if matches!(cli.command, Command::Replay { .. }) {
        return Err(usage("a manifest cannot replay another replay"));
    }
    if m.engine_hash != engine_hash() {
        eprintln!("warning: manifest was written by a different build ({})", m.engine_hash);
    }
    cli.seed = Some(m.seed);
    cli.out = Some(outer.out.clone().unwrap_or(m.out));
    if outer.workers.is_some() {
        cli.workers = outer.workers;
    }
    Ok(cli)
}
