//! Run manifests and crash-safe output files.

use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Ok,
    Failed,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub status: Status,
    pub error: Option<String>,
    pub elapsed_secs: f64,
    #[serde(skip)]
    path: PathBuf,
    #[serde(skip)]
    started: Option<Instant>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    /// Hashes every input and writes the manifest with status `running`
    /// before any work starts. A failure to hash is itself recorded.
    pub fn begin(out_dir: &Path, command: &str, config: serde_json::Value, seed: Option<u64>, inputs: &[&Path]) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let mut manifest = Self {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            status: Status::Running,
            error: None,
            elapsed_secs: 0.0,
            path: out_dir.join("manifest.json"),
            started: Some(Instant::now()),
        };
        let digests = inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.to_path_buf(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>();
        match digests {
            Ok(d) => {
                manifest.inputs = d;
                manifest.save()?;
                Ok(manifest)
            }
            Err(e) => manifest.finish(Err(e)),
        }
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    fn save(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&self.path, text + "\n").with_context(|| format!("writing {}", self.path.display()))
    }

    /// Records the outcome of `result` and rewrites the manifest.
    pub fn finish<T>(mut self, result: Result<T>) -> Result<T> {
        self.elapsed_secs = self.started.map_or(0.0, |t| t.elapsed().as_secs_f64());
        match &result {
            Ok(_) => self.status = Status::Ok,
            Err(e) => {
                self.status = Status::Failed;
                self.error = Some(format!("{e:#}"));
            }
        }
        if let Err(e) = self.save() {
            log::error!("could not write manifest: {e:#}");
        }
        result
    }
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes `bytes` to `path.partial` and renames it into place, so an
/// interrupted write never leaves a truncated file under the final name.
pub fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = partial_path(path);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {}", tmp.display()))
}

/// A line-oriented output that lives under `.partial` until committed.
pub struct PartialWriter {
    path: PathBuf,
    tmp: PathBuf,
    file: io::BufWriter<File>,
}

impl PartialWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let tmp = partial_path(path);
        let file = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            tmp,
            file: io::BufWriter::new(file),
        })
    }

    pub fn line(&mut self, text: &str) -> io::Result<()> {
        self.file.write_all(text.as_bytes())?;
        self.file.write_all(b"\n")
    }

    pub fn commit(mut self) -> Result<()> {
        self.file.flush()?;
        drop(self.file);
        fs::rename(&self.tmp, &self.path).with_context(|| format!("renaming {}", self.tmp.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn partial_names() {
        assert_eq!(partial_path(Path::new("a/b.json")), PathBuf::from("a/b.json.partial"));
    }

    #[test]
    fn uncommitted_writer_leaves_partial() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        let mut w = PartialWriter::create(&p).unwrap();
        w.line("{}").unwrap();
        drop(w);
        assert!(!p.exists());
        assert!(partial_path(&p).exists());

        let mut w = PartialWriter::create(&p).unwrap();
        w.line("{}").unwrap();
        w.commit().unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "{}\n");
        assert!(!partial_path(&p).exists());
    }
}
