//! Output directory bookkeeping: every file a command writes, and every
//! input it reads, is recorded with its SHA-256 in `manifest.txt`.

use crate::error::CliError;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.txt";

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct RunOutputs {
    dir: PathBuf,
    inputs: Vec<(String, String, String)>,
    outputs: Vec<(String, String)>,
}

impl RunOutputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Reads an input file whole and records its digest under `role`.
    pub fn read_input(&mut self, role: &str, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|source| truend::DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.inputs.push((
            role.to_string(),
            path.display().to_string(),
            sha256_hex(&bytes),
        ));
        Ok(bytes)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| CliError::Output { path, source })?;
        self.outputs.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn finish(self, command: &str, config_echo: &str) -> Result<(), CliError> {
        let mut text = String::new();
        let _ = writeln!(text, "command={command}");
        let _ = writeln!(text, "version={}", env!("CARGO_PKG_VERSION"));
        for line in config_echo.lines() {
            let _ = writeln!(text, "config.{line}");
        }
        for (role, path, digest) in &self.inputs {
            let _ = writeln!(text, "input.{role}={path}");
            let _ = writeln!(text, "input.{role}.sha256={digest}");
        }
        for (name, digest) in &self.outputs {
            let _ = writeln!(text, "output.{name}.sha256={digest}");
        }
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|source| CliError::Output { path, source })
    }
}
