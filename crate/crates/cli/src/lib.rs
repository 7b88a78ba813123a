//! Command-line front end for the looplab engines.
//!
//! Every command builds its artifacts in memory as a [`Bundle`], which is
//! then written next to a `manifest.json` holding the command, seed and
//! config. `replay` rebuilds a bundle from its manifest and compares bytes.

pub mod args;
pub mod commands;
pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use args::{Cli, Command};
pub use config::RunConfig;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LOOPLAB_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "looplab-out";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("replay mismatch: {}", .0.join(", "))]
    Mismatch(Vec<String>),
    #[error("{0}")]
    NonTermination(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Assertion(_) | CliError::Mismatch(_) => 2,
            CliError::NonTermination(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandName {
    Scenario,
    Mc,
    Optics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: CommandName,
    pub seed: u64,
    pub config: RunConfig,
    pub artifacts: Vec<ArtifactEntry>,
}

/// Artifacts of one command run, keyed by file name.
#[derive(Debug)]
pub struct Bundle {
    pub command: CommandName,
    pub config: RunConfig,
    pub artifacts: BTreeMap<String, Vec<u8>>,
    /// Printed to stdout after writing.
    pub report: String,
    /// Set when the run completed but must exit non-zero.
    pub failure: Option<CliError>,
}

impl Bundle {
    pub fn new(command: CommandName, config: &RunConfig) -> Self {
        Bundle {
            command,
            config: config.embedded(),
            artifacts: BTreeMap::new(),
            report: String::new(),
            failure: None,
        }
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts.insert(name.to_string(), bytes);
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report serialises");
        bytes.push(b'\n');
        self.add(name, bytes);
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            tool: "looplab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            seed: self.config.seed,
            config: self.config.clone(),
            artifacts: self
                .artifacts
                .iter()
                .map(|(name, b)| ArtifactEntry {
                    name: name.clone(),
                    bytes: b.len(),
                })
                .collect(),
        }
    }

    /// Every file including the manifest and a `config.toml` copy.
    pub fn files(&self) -> BTreeMap<String, Vec<u8>> {
        let mut files = self.artifacts.clone();
        files.insert("config.toml".into(), self.config.to_toml().into_bytes());
        let mut manifest = serde_json::to_vec_pretty(&self.manifest()).expect("manifest serialises");
        manifest.push(b'\n');
        files.insert(MANIFEST.into(), manifest);
        files
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        for (name, bytes) in self.files() {
            let path = dir.join(&name);
            std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Output directory: flag, then config, then the environment, then the default.
pub fn resolve_out_dir(flag: Option<PathBuf>, config: &RunConfig) -> PathBuf {
    flag.or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Rebuild the bundle described by `dir/manifest.json` and compare every file.
pub fn replay(dir: &Path) -> Result<String, CliError> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let bundle = commands::run(manifest.command, &manifest.config)?;
    let mut mismatched = Vec::new();
    let files = bundle.files();
    for (name, bytes) in &files {
        match std::fs::read(dir.join(name)) {
            Ok(on_disk) if &on_disk == bytes => {}
            Ok(_) => mismatched.push(format!("{name} differs")),
            Err(_) => mismatched.push(format!("{name} missing")),
        }
    }
    if !mismatched.is_empty() {
        return Err(CliError::Mismatch(mismatched));
    }
    Ok(format!("replay: {} files identical in {}\n", files.len(), dir.display()))
}

/// Parse arguments, run, and return the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Command::Replay { dir } = &cli.command {
        print!("{}", replay(dir)?);
        return Ok(());
    }
    let mut config = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let name = cli.apply(&mut config)?;
    let out_dir = resolve_out_dir(cli.global.out.clone(), &config);
    let mut bundle = commands::run(name, &config)?;
    bundle.write(&out_dir)?;
    print!("{}", bundle.report);
    println!("artifacts written to {}", out_dir.display());
    match bundle.failure.take() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
