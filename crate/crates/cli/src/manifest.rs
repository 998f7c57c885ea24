use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// Everything needed to re-run a command and get the same bytes back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Command line after the program name.
    pub args: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_sizes: Option<Vec<u64>>,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(subcommand: &str, args: &[String]) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            subcommand: subcommand.to_owned(),
            args: args.to_vec(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            sizes: None,
            resolved_sizes: None,
            params: serde_json::Map::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("manifest parameters serialize");
        self.params.insert(key.to_owned(), value);
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    /// Writes next to `out` as `<out>.manifest.json`, or to stderr when the
    /// data went to stdout.
    pub fn emit(&self, out: Option<&Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        match out {
            Some(out) => {
                let path = manifest_path(out);
                fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))
            }
            None => {
                eprintln!("manifest: {}", serde_json::to_string(self)?);
                Ok(())
            }
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    sibling(out, "manifest.json")
}

pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut m = RunManifest::new("simulate", &["simulate".into(), "t.csv".into()]);
        m.seed = Some(7);
        m.param("gap_ms", 480_000u64);
        let back: RunManifest = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(manifest_path(Path::new("out/curve.csv")), PathBuf::from("out/curve.csv.manifest.json"));
        assert_eq!(sibling(Path::new("a.csv"), "meta.json"), PathBuf::from("a.csv.meta.json"));
    }
}
