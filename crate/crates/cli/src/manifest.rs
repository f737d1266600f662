use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use monocif::simulator::Split;
use serde::{Deserialize, Serialize};

use crate::error::{Failure, Kind};

pub const MANIFEST: &str = "manifest.json";

/// Record of one command run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// Where the main seed came from: `flag`, `env`, `config` or `default`.
    pub seed_source: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub started_unix_secs: f64,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self, Failure> {
        let path = dir.join(MANIFEST);
        let text =
            fs::read_to_string(&path).map_err(|e| Failure::from(e).context(format!("reading {}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::from(e).context(format!("parsing {}", path.display())))
    }
}

/// Collects outputs in memory and writes them in one go, manifest last.
pub struct Staged {
    command: String,
    started: Instant,
    started_unix: f64,
    files: Vec<(String, Vec<u8>)>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub seed_source: String,
    pub inputs: BTreeMap<String, String>,
    pub split: Option<Split>,
}

impl Staged {
    pub fn new(command: &str) -> Self {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        Self {
            command: command.to_string(),
            started: Instant::now(),
            started_unix,
            files: Vec::new(),
            config: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            seed_source: "default".into(),
            inputs: BTreeMap::new(),
            split: None,
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.to_string(), path.display().to_string());
    }

    pub fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Writes every staged file into `dir`, then the manifest. On failure
    /// the files written so far are removed, and `dir` too if this call
    /// created it.
    pub fn commit(self, dir: &Path) -> Result<RunManifest, Failure> {
        let created = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| Failure::from(e).context(format!("creating {}", dir.display())))?;
        let manifest = RunManifest {
            command: self.command,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            seeds: self.seeds,
            seed_source: self.seed_source,
            inputs: self.inputs,
            outputs: self.files.iter().map(|(n, _)| n.clone()).collect(),
            split: self.split,
            started_unix_secs: self.started_unix,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        };
        let mut files = self.files;
        files.push((MANIFEST.to_string(), serde_json::to_vec_pretty(&manifest).expect("manifest serializes")));
        let mut written: Vec<PathBuf> = Vec::new();
        for (name, bytes) in &files {
            let path = dir.join(name);
            if let Err(e) = fs::write(&path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                let _ = fs::remove_file(&path);
                if created {
                    let _ = fs::remove_dir(dir);
                }
                return Err(Failure::new(Kind::Io, e).context(format!("writing {}", path.display())));
            }
            written.push(path);
        }
        Ok(manifest)
    }
}
