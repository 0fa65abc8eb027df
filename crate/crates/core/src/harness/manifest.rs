use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    /// Relative to the bundle root, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed { stage: String, error: String },
}

/// Every artifact of a bundle with its size and checksum. Written as text:
/// `#`-prefixed header lines, then one `path<TAB>bytes<TAB>sha256` line per
/// artifact in path order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub config_digest: String,
    pub status: Status,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, config_digest: impl Into<String>) -> Self {
        Manifest {
            root: root.into(),
            config_digest: config_digest.into(),
            status: Status::Ok,
            artifacts: Vec::new(),
        }
    }

    /// Hashes a file already written under the root; re-recording a path
    /// replaces the earlier entry.
    pub fn record(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let rel = path
            .strip_prefix(&self.root)
            .map_err(|_| Error::Precondition(format!("{} is outside {}", path.display(), self.root.display())))?;
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let entry = Artifact {
            path: rel,
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        };
        match self.artifacts.iter_mut().find(|a| a.path == entry.path) {
            Some(a) => *a = entry,
            None => self.artifacts.push(entry),
        }
        Ok(())
    }

    pub fn fail(&mut self, stage: &str, error: &Error) {
        self.status = Status::Failed {
            stage: stage.to_string(),
            error: error.to_string().replace('\n', " "),
        };
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# spinwire manifest v1\n");
        let _ = writeln!(out, "# config_digest = {}", self.config_digest);
        match &self.status {
            Status::Ok => out.push_str("# status = ok\n"),
            Status::Failed { stage, error } => {
                out.push_str("# status = failed\n");
                let _ = writeln!(out, "# failed_stage = {stage}");
                let _ = writeln!(out, "# error = {error}");
            }
        }
        let mut sorted: Vec<&Artifact> = self.artifacts.iter().collect();
        sorted.sort_by(|a, b| a.path.cmp(&b.path));
        for a in sorted {
            let _ = writeln!(out, "{}\t{}\t{}", a.path, a.bytes, a.sha256);
        }
        out
    }

    pub fn write(&self) -> Result<PathBuf> {
        let path = self.root.join(MANIFEST_FILE);
        std::fs::write(&path, self.render()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn parse(root: impl Into<PathBuf>, text: &str) -> Result<Self> {
        let mut m = Manifest::new(root, "");
        let mut failed: Option<(String, String)> = None;
        for line in text.lines() {
            if let Some(header) = line.strip_prefix("# ") {
                if let Some((k, v)) = header.split_once(" = ") {
                    match k {
                        "config_digest" => m.config_digest = v.to_string(),
                        "status" if v == "failed" => failed = Some(Default::default()),
                        "failed_stage" => failed.get_or_insert_with(Default::default).0 = v.to_string(),
                        "error" => failed.get_or_insert_with(Default::default).1 = v.to_string(),
                        _ => {}
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [path, bytes, sha] = fields[..] else {
                return Err(Error::Format(format!("bad manifest line `{line}`")));
            };
            m.artifacts.push(Artifact {
                path: path.to_string(),
                bytes: bytes.parse().map_err(|_| Error::Format(format!("bad size in `{line}`")))?,
                sha256: sha.to_string(),
            });
        }
        if let Some((stage, error)) = failed {
            m.status = Status::Failed { stage, error };
        }
        Ok(m)
    }

    /// Paths whose current size or checksum differs from the record.
    pub fn verify(&self) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for a in &self.artifacts {
            let path = self.root.join(&a.path);
            match std::fs::read(&path) {
                Ok(bytes) if bytes.len() as u64 == a.bytes && hex::encode(Sha256::digest(&bytes)) == a.sha256 => {}
                _ => bad.push(a.path.clone()),
            }
        }
        Ok(bad)
    }
}
