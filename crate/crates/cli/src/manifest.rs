//! Run manifests: resolved parameters, their hash, seed, inputs and
//! outputs, written as `manifest.json` next to the outputs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub config_sha256: String,
    pub versions: Versions,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub summary: Value,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub tactilemap: &'static str,
    pub format: u32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path, relative_to: Option<&Path>) -> Result<FileDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let shown = relative_to
        .and_then(|base| path.strip_prefix(base).ok())
        .unwrap_or(path)
        .to_path_buf();
    Ok(FileDigest {
        path: shown,
        sha256: sha256_hex(&bytes),
    })
}

/// Collects everything a run needs to record, then writes it.
pub struct Recorder {
    out: PathBuf,
    command: String,
    seed: u64,
    config: Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(out: &Path, command: &str, seed: u64, config: Value) -> Result<Self> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            out: out.to_path_buf(),
            command: command.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.out.join(name)
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    /// Registers an output that has already been written.
    pub fn output(&mut self, p: PathBuf) {
        self.outputs.push(p);
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", p.display()))?;
        self.output(p.clone());
        Ok(p)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        self.output(p.clone());
        Ok(p)
    }

    /// Hashes every input and output and writes `manifest.json`.
    pub fn finish(self, summary: Value) -> Result<PathBuf> {
        let config_sha256 = sha256_hex(&serde_json::to_vec(&self.config)?);
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for p in &self.outputs {
            if !p.exists() {
                anyhow::bail!("expected output {} was not written", p.display());
            }
            outputs.push(digest_file(p, Some(&self.out))?);
        }
        let inputs = self
            .inputs
            .iter()
            .map(|p| digest_file(p, None))
            .collect::<Result<Vec<_>>>()?;
        let m = Manifest {
            command: self.command,
            seed: self.seed,
            config: self.config,
            config_sha256,
            versions: Versions {
                tactilemap: env!("CARGO_PKG_VERSION"),
                format: 1,
            },
            inputs,
            outputs,
            summary,
        };
        let p = self.out.join("manifest.json");
        std::fs::write(&p, serde_json::to_vec_pretty(&m)?).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}

/// Resolves parameters with precedence flags > config file > defaults.
///
/// `file` is a JSON object (or absent); `overrides` holds only the flags
/// the user actually passed.
pub fn resolve<T>(file: Option<&Path>, overrides: Value) -> Result<T>
where
    T: Default + Serialize + serde::de::DeserializeOwned,
{
    let mut merged = serde_json::to_value(T::default())?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Value =
            serde_json::from_str(&text).with_context(|| format!("parsing config {} as JSON", path.display()))?;
        merge(&mut merged, cfg);
    }
    merge(&mut merged, overrides);
    serde_json::from_value(merged).context("invalid parameter value")
}

fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                if v.is_null() {
                    continue;
                }
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use serde_json::json;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(default)]
    struct P {
        a: u32,
        b: Option<f64>,
        inner: Inner,
    }

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(default)]
    struct Inner {
        x: u32,
        y: u32,
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.json");
        std::fs::write(&f, r#"{"a": 3, "inner": {"x": 1, "y": 2}}"#).unwrap();
        let p: P = resolve(Some(&f), json!({"a": 5, "b": null, "inner": {"y": 9}})).unwrap();
        assert_eq!(
            p,
            P {
                a: 5,
                b: None,
                inner: Inner { x: 1, y: 9 }
            }
        );
    }

    #[test]
    fn unknown_config_is_an_error() {
        assert!(resolve::<P>(Some(Path::new("/nonexistent/c.json")), json!({})).is_err());
    }
}
