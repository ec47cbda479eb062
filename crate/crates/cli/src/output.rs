use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ehjb_core::model::{GridFunction, PathEnsemble};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects artifacts written during a run so the manifest can list their hashes.
pub struct OutputDir {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes a file outside the output directory, still recorded by hash.
    pub fn write_external(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        self.written.insert(path.display().to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.written
    }
}

/// Columns `x1[,x2],<name>1[,<name>2]` (a single column `<name>` for scalars).
pub fn grid_csv(f: &GridFunction, name: &str) -> String {
    let d = f.grid.dim;
    let k = f.components();
    let mut out = String::new();
    let xs: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    let vs: Vec<String> = if k == 1 {
        vec![name.to_string()]
    } else {
        (1..=k).map(|i| format!("{name}{i}")).collect()
    };
    out.push_str(&xs.join(","));
    out.push(',');
    out.push_str(&vs.join(","));
    out.push('\n');
    let mut x = vec![0.0; d];
    for i in 0..f.grid.len() {
        f.grid.node_into(i, &mut x);
        let row: Vec<String> = x.iter().chain(f.at(i)).map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Columns `path,step,t,x1[,x2]`.
pub fn paths_csv(ens: &PathEnsemble) -> String {
    let mut out = String::from("path,step,t");
    for i in 1..=ens.dim {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for p in 0..ens.n_paths {
        for k in 0..=ens.n_steps {
            let _ = write!(out, "{p},{k},{}", k as f64 * ens.dt);
            for v in ens.state(p, k) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}
