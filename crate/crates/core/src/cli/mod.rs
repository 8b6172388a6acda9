//! Batch front end: one subcommand per pipeline stage, each driven by a
//! TOML config and writing into its own run directory.

mod commands;
pub mod config;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use commands::{load_corpus, paired_report, CORPUS_INDEX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Phantom,
    Train,
    Bakeoff,
    Infer,
    Project,
    Eval,
    Stats,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Phantom => "phantom",
            Command::Train => "train",
            Command::Bakeoff => "bakeoff",
            Command::Infer => "infer",
            Command::Project => "project",
            Command::Eval => "eval",
            Command::Stats => "stats",
        }
    }
}

/// Output directory whose files are each written exactly once.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Creates `rel` (and its parent directories); fails if it exists.
    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(rel);
        self.claim(&path)?;
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Returns a fresh path for writers that create their own files.
    pub fn claim_path(&self, rel: &str) -> Result<PathBuf> {
        let path = self.path(rel);
        self.claim(&path)?;
        Ok(path)
    }

    fn claim(&self, path: &Path) -> Result<()> {
        if path.exists() {
            return Err(Error::State(format!(
                "{} already exists; outputs are write-once",
                path.display()
            )));
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(())
    }
}

/// Parses a config, rejecting unknown keys.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))
}

/// Canonical TOML of the resolved config and its SHA-256.
pub fn resolve<T: Serialize>(command: Command, config: &T) -> Result<(String, String)> {
    let body = toml::to_string(config).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))?;
    let text = format!("# {}\n{body}", command.name());
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    Ok((text, hash))
}

/// Runs `command` with the config file at `config_path`. Relative paths
/// inside the config are resolved against the config file's directory.
pub fn run(command: Command, config_path: &Path, run_dir: &Path) -> Result<String> {
    let text = fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    run_text(command, &text, &base, run_dir)
}

/// As [`run`], with the config given as text. Returns the config hash.
pub fn run_text(command: Command, text: &str, base: &Path, run_dir: &Path) -> Result<String> {
    macro_rules! go {
        ($ty:ty, $f:path) => {{
            let cfg: $ty = parse_config(text)?;
            let (resolved, hash) = resolve(command, &cfg)?;
            let out = RunDir::create(run_dir)?;
            out.write("config.toml", resolved.as_bytes())?;
            out.write("config.sha256", format!("{hash}\n").as_bytes())?;
            $f(&cfg, base, &out, &hash)?;
            Ok(hash)
        }};
    }
    match command {
        Command::Phantom => go!(config::PhantomRun, commands::phantom),
        Command::Train => go!(config::TrainRun, commands::train),
        Command::Bakeoff => go!(config::BakeoffRun, commands::bakeoff),
        Command::Infer => go!(config::InferRun, commands::infer),
        Command::Project => go!(config::ProjectRun, commands::project),
        Command::Eval => go!(config::EvalRun, commands::eval),
        Command::Stats => go!(config::StatsRun, commands::stats),
    }
}

/// The single-line failure message printed by the binary.
pub fn error_line(e: &Error) -> String {
    format!("error class={} detail={}", e.class(), e.to_string().replace('\n', " "))
}
