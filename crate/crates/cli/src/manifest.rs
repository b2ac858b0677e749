//! Per-run JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};

/// Record of one command invocation. `config` holds every resolved setting
/// (after flag, file and default precedence) as strings.
#[derive(Debug)]
pub struct RunManifest {
    pub command: &'static str,
    pub config: Map<String, Value>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
    started: Instant,
}

impl RunManifest {
    pub fn new(command: &'static str, seed: u64, threads: Option<usize>) -> Self {
        RunManifest {
            command,
            config: Map::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
            threads,
            started: Instant::now(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), Value::String(value.to_string()));
    }

    /// Records every `key = value` line of a resolved config text.
    pub fn set_kv(&mut self, text: &str) {
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.set(k.trim(), v.trim());
            }
        }
    }

    pub fn to_json(&self) -> Value {
        let paths = |v: &[PathBuf]| v.iter().map(|p| p.display().to_string()).collect::<Vec<_>>();
        json!({
            "command": self.command,
            "config": self.config,
            "inputs": paths(&self.inputs),
            "outputs": paths(&self.outputs),
            "seed": self.seed,
            "threads": self.threads,
            "version": env!("CARGO_PKG_VERSION"),
            "duration_s": self.started.elapsed().as_secs_f64(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())? + "\n";
        fs::write(path, text).with_context(|| format!("manifest: cannot write {}", path.display()))
    }
}

/// `<output>.manifest.json` next to the primary output.
pub fn default_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_lines_become_config_entries() {
        let mut m = RunManifest::new("fit", 3, Some(1));
        m.set_kv("lr = 0.01\nmode = gcn\n");
        let j = m.to_json();
        assert_eq!(j["config"]["lr"], "0.01");
        assert_eq!(j["config"]["mode"], "gcn");
        assert_eq!(j["seed"], 3);
        assert_eq!(j["command"], "fit");
    }

    #[test]
    fn default_path_appends_suffix() {
        assert_eq!(default_path(Path::new("out/a.obj")), PathBuf::from("out/a.obj.manifest.json"));
    }
}
