use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{encode_mask, encode_matrix, write_atomic, Dtype, Table};
use crate::types::BrainMask;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(sha256_hex(&bytes))
}

/// Canonical JSON: serde_json maps are ordered, so equal values give equal
/// bytes.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let v = serde_json::to_value(value)?;
    let mut out = serde_json::to_vec_pretty(&v)?;
    out.push(b'\n');
    Ok(out)
}

/// Record of one stage's configuration, inputs and outputs. Paths are
/// relative to the output root (or absolute for inputs outside it).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Written,
    UpToDate,
}

/// Output root shared by all stages.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub root: PathBuf,
    pub force: bool,
}

impl Workspace {
    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    fn display(&self, p: &Path) -> String {
        match p.strip_prefix(&self.root) {
            Ok(rel) => rel.to_string_lossy().replace('\\', "/"),
            Err(_) => p.to_string_lossy().into_owned(),
        }
    }

    /// Loads a finished stage's manifest after checking that every output
    /// still has its recorded hash.
    pub fn verified(&self, stage: &str) -> Result<Manifest> {
        let dir = self.stage_dir(stage);
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Err(Error::InvalidInput(format!(
                "stage {stage:?} has not been run (no {})",
                path.display()
            )));
        }
        let m = Manifest::load(&path)?;
        for (rel, want) in &m.outputs {
            let got = hash_file(&self.root.join(rel))?;
            if &got != want {
                return Err(Error::InvalidInput(format!(
                    "output {rel} of stage {stage:?} changed since it was written; rerun the stage with --force"
                )));
            }
        }
        Ok(m)
    }

    /// Runs `body` into a staging directory and publishes it as the stage
    /// directory with a manifest. An existing stage with the same config
    /// and inputs is left alone; a different one needs `force`.
    pub fn run<C, F>(&self, stage: &str, config: &C, inputs: &[PathBuf], body: F) -> Result<Status>
    where
        C: Serialize,
        F: FnOnce(&mut StageWriter) -> Result<()>,
    {
        let config = serde_json::to_value(config)?;
        let config_sha256 = sha256_hex(&canonical_json(&config)?);
        let mut input_hashes = BTreeMap::new();
        for p in inputs {
            input_hashes.insert(self.display(p), hash_file(p)?);
        }
        let dir = self.stage_dir(stage);
        let manifest_path = dir.join(MANIFEST);
        if manifest_path.exists() {
            let old = Manifest::load(&manifest_path)?;
            let same = old.config_sha256 == config_sha256 && old.inputs == input_hashes;
            if same && self.verified(stage).is_ok() {
                log::info!("{stage}: up to date");
                return Ok(Status::UpToDate);
            }
            if !self.force {
                let why = if old.config_sha256 != config_sha256 {
                    "a different config"
                } else if old.inputs != input_hashes {
                    "different inputs"
                } else {
                    "outputs that have since changed"
                };
                return Err(Error::InvalidInput(format!(
                    "{} holds outputs of stage {stage:?} from {why}; pass --force to overwrite",
                    dir.display()
                )));
            }
        } else if dir.exists() && !self.force {
            return Err(Error::InvalidInput(format!(
                "{} exists without a manifest; pass --force to overwrite",
                dir.display()
            )));
        }

        let parent = dir.parent().unwrap_or(&self.root).to_path_buf();
        fs::create_dir_all(&parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        let leaf = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let staging = tempfile::Builder::new()
            .prefix(&format!(".{leaf}.staging-"))
            .tempdir_in(&parent)
            .map_err(|e| Error::io(format!("creating staging directory in {}", parent.display()), e))?;
        let mut w = StageWriter {
            dir: staging.path().to_path_buf(),
            prefix: self.display(&dir),
            outputs: BTreeMap::new(),
        };
        log::info!("{stage}: running");
        body(&mut w)?;
        let manifest = Manifest {
            stage: stage.into(),
            version: format!("fbn {}", env!("CARGO_PKG_VERSION")),
            config_sha256,
            config,
            inputs: input_hashes,
            outputs: w.outputs,
        };
        write_atomic(&staging.path().join(MANIFEST), &canonical_json(&manifest)?)?;

        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(format!("removing {}", dir.display()), e))?;
        }
        let staged = staging.keep();
        fs::rename(&staged, &dir).map_err(|e| Error::io(format!("publishing {}", dir.display()), e))?;
        self.write_index()?;
        log::info!("{stage}: wrote {}", dir.display());
        Ok(Status::Written)
    }

    /// Rewrites the root manifest listing every stage and its outputs.
    pub fn write_index(&self) -> Result<()> {
        let mut stages = BTreeMap::new();
        let mut stack = vec![self.root.clone()];
        while let Some(d) = stack.pop() {
            let entries = fs::read_dir(&d).map_err(|e| Error::io(format!("listing {}", d.display()), e))?;
            for e in entries {
                let e = e.map_err(|e| Error::io(format!("listing {}", d.display()), e))?;
                let p = e.path();
                let name = e.file_name().to_string_lossy().into_owned();
                if p.is_dir() && !name.starts_with('.') {
                    let m = p.join(MANIFEST);
                    if m.exists() {
                        let man = Manifest::load(&m)?;
                        let mut files: Vec<String> = man.outputs.keys().cloned().collect();
                        files.push(self.display(&m));
                        stages.insert(
                            man.stage.clone(),
                            serde_json::json!({ "manifest_sha256": hash_file(&m)?, "artifacts": files }),
                        );
                    }
                    stack.push(p);
                }
            }
        }
        write_atomic(&self.root.join(MANIFEST), &canonical_json(&serde_json::json!({ "stages": stages }))?)
    }
}

/// Collects a stage's files and their hashes.
pub struct StageWriter {
    dir: PathBuf,
    prefix: String,
    outputs: BTreeMap<String, String>,
}

impl StageWriter {
    /// Absolute staging path of `rel`; for outputs that must reference
    /// each other (catalogs).
    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(rel), bytes)?;
        self.outputs.insert(format!("{}/{rel}", self.prefix), sha256_hex(bytes));
        Ok(())
    }

    /// Registers a file already written under the staging directory.
    pub fn adopt(&mut self, rel: &str) -> Result<()> {
        let h = hash_file(&self.dir.join(rel))?;
        self.outputs.insert(format!("{}/{rel}", self.prefix), h);
        Ok(())
    }

    pub fn matrix(&mut self, rel: &str, values: ArrayView2<'_, f64>, dtype: Dtype) -> Result<()> {
        self.bytes(rel, &encode_matrix(values, dtype)?)
    }

    pub fn mask(&mut self, rel: &str, mask: &BrainMask) -> Result<()> {
        self.bytes(rel, &encode_mask(mask)?)
    }

    pub fn csv(&mut self, rel: &str, table: &Table) -> Result<()> {
        self.bytes(rel, &table.to_csv()?)
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.bytes(rel, &canonical_json(value)?)
    }
}
