//! Run manifests and the output directory that records them.
//!
//! Output files never contain wall time or thread counts, so two runs with
//! the same arguments and inputs produce identical bytes; the manifest
//! lists each output's SHA-256 to make that checkable.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CmdResult, Failure};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, replayable by `rerun`.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    /// Relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub seed: Option<u64>,
    pub version: String,
    pub threads: usize,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> CmdResult<RunManifest> {
        let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CmdResult<String> {
    let bytes = fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(sha256_bytes(&bytes))
}

/// `argv` with its `--out` value replaced.
pub fn replace_out(argv: &[String], out: &Path) -> Vec<String> {
    let new = out.display().to_string();
    let mut res = Vec::with_capacity(argv.len() + 2);
    let mut it = argv.iter();
    let mut replaced = false;
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
            res.extend(["--out".to_string(), new.clone()]);
            replaced = true;
        } else if a.starts_with("--out=") {
            res.push(format!("--out={new}"));
            replaced = true;
        } else {
            res.push(a.clone());
        }
    }
    if !replaced {
        res.extend(["--out".to_string(), new]);
    }
    res
}

/// Reads an input file and remembers its digest.
pub struct Inputs {
    files: Vec<FileDigest>,
}

impl Inputs {
    pub fn new() -> Self {
        Inputs { files: Vec::new() }
    }

    pub fn read(&mut self, path: &Path) -> CmdResult<String> {
        let bytes = fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        self.files.push(FileDigest { path: path.display().to_string(), sha256: sha256_bytes(&bytes) });
        String::from_utf8(bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
    }

    pub fn read_json(&mut self, path: &Path) -> CmdResult<serde_json::Value> {
        let text = self.read(path)?;
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
    }
}

pub struct OutDir {
    dir: PathBuf,
    files: Vec<FileDigest>,
    started: Instant,
}

impl OutDir {
    pub fn create(dir: &Path) -> CmdResult<OutDir> {
        fs::create_dir_all(dir).map_err(|e| Failure::Resource(format!("{}: {e}", dir.display())))?;
        Ok(OutDir { dir: dir.to_path_buf(), files: Vec::new(), started: Instant::now() })
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> CmdResult {
        let path = self.dir.join(name);
        fs::write(&path, bytes.as_ref()).map_err(|e| Failure::Resource(format!("{}: {e}", path.display())))?;
        self.files.push(FileDigest { path: name.to_string(), sha256: sha256_bytes(bytes.as_ref()) });
        Ok(())
    }

    /// Pretty JSON at full double precision, newline-terminated.
    pub fn write_json(&mut self, name: &str, value: &serde_json::Value) -> CmdResult {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Resource(e.to_string()))?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn finish(
        self,
        command: &str,
        argv: &[String],
        config: serde_json::Value,
        inputs: Inputs,
        seed: Option<u64>,
    ) -> CmdResult {
        let manifest = RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            config,
            inputs: inputs.files,
            outputs: self.files,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Resource(e.to_string()))?;
        text.push('\n');
        let path = self.dir.join(MANIFEST_NAME);
        fs::write(&path, text).map_err(|e| Failure::Resource(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_flag_is_replaced_in_both_spellings() {
        let argv: Vec<String> = ["gain", "--out", "a", "--rep", "u"].iter().map(|s| s.to_string()).collect();
        assert_eq!(replace_out(&argv, Path::new("b")), ["gain", "--out", "b", "--rep", "u"]);
        let argv: Vec<String> = ["gain", "--out=a"].iter().map(|s| s.to_string()).collect();
        assert_eq!(replace_out(&argv, Path::new("b")), ["gain", "--out=b"]);
    }

    #[test]
    fn digest_matches_known_value() {
        assert_eq!(sha256_bytes(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
