//! Run manifest: configuration hash, seed, timing and content hashes of
//! every input and output file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CONFIG_COPY_FILE: &str = "config.txt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Files below `dir`, as sorted paths relative to it.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
            let path = entry.map_err(|e| CliError::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push(path.strip_prefix(root).expect("below root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub n_chains: usize,
    pub threads: usize,
    pub wall_time_seconds: f64,
    /// `role → sha256` of the dataset files.
    pub inputs: BTreeMap<String, String>,
    /// `relative path → sha256` of the chain outputs.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "premi_version = {}\nconfig_hash = {}\nseed = {}\nn_chains = {}\nthreads = {}\nwall_time_seconds = {}\n",
            self.version, self.config_hash, self.seed, self.n_chains, self.threads, self.wall_time_seconds
        );
        for (k, v) in &self.inputs {
            s.push_str(&format!("input.{k} = {v}\n"));
        }
        for (k, v) in &self.outputs {
            s.push_str(&format!("output.{k} = {v}\n"));
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut m = Self::default();
        for (k, line) in text.lines().enumerate() {
            let bad = |message: String| CliError::Config { path: path.to_path_buf(), line: k + 1, message };
            let Some((key, value)) = line.split_once('=') else {
                continue;
            };
            let (key, value) = (key.trim(), value.trim().to_string());
            fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
                v.parse().map_err(|_| format!("`{v}` is not a number"))
            }
            match key {
                "premi_version" => m.version = value,
                "config_hash" => m.config_hash = value,
                "seed" => m.seed = num(&value).map_err(bad)?,
                "n_chains" => m.n_chains = num(&value).map_err(bad)?,
                "threads" => m.threads = num(&value).map_err(bad)?,
                "wall_time_seconds" => m.wall_time_seconds = num(&value).map_err(bad)?,
                _ => {
                    if let Some(r) = key.strip_prefix("input.") {
                        m.inputs.insert(r.to_string(), value);
                    } else if let Some(r) = key.strip_prefix("output.") {
                        m.outputs.insert(r.to_string(), value);
                    } else {
                        return Err(bad(format!("unknown manifest key `{key}`")));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).map_err(|e| CliError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest {
            version: "0.1.0".into(),
            config_hash: sha256_hex(b"abc"),
            seed: u64::MAX,
            n_chains: 2,
            threads: 1,
            wall_time_seconds: 0.125,
            ..Default::default()
        };
        m.inputs.insert("covariates".into(), sha256_hex(b"x"));
        m.outputs.insert("chain1/trace.csv".into(), sha256_hex(b"y"));
        m.write(dir.path()).unwrap();
        assert_eq!(Manifest::read(&dir.path().join(MANIFEST_FILE)).unwrap(), m);
        assert_eq!(m.config_hash, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn files_listed_recursively_in_order() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("b")).unwrap();
        for f in ["z.txt", "b/a.txt", "a.txt"] {
            fs::write(dir.path().join(f), f).unwrap();
        }
        let names: Vec<String> = list_files(dir.path()).unwrap().iter().map(|p| p.display().to_string()).collect();
        assert_eq!(names, ["a.txt", "b/a.txt", "z.txt"]);
    }
}
