//! Run manifests: the resolved command plus digests of every output.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toedit_core::hash::fnv1a64;

use crate::error::{CliError, CliResult};
use crate::run::Output;
use crate::spec::Resolved;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TOOL: &str = "toedit";

const SEEDING: &str = "one global seed; documents draw from streams keyed by (seed, generation, doc id), \
simulation trials from streams keyed by (seed, trial), selection and mixing from streams keyed by seed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seeding: String,
    pub command: Resolved,
    /// Output file name to `fnv1a64:<hex>` digest.
    pub outputs: BTreeMap<String, String>,
}

pub fn digest(bytes: &[u8]) -> String {
    format!("fnv1a64:{:016x}", fnv1a64(bytes))
}

impl Manifest {
    pub fn new(command: Resolved, outputs: &[Output]) -> Self {
        Manifest {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeding: SEEDING.to_string(),
            command,
            outputs: outputs
                .iter()
                .map(|o| (o.name.clone(), digest(&o.bytes)))
                .collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifests serialize to toml")
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: Manifest = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if m.tool != TOOL {
            return Err(CliError::config(format!(
                "{}: written by {:?}, not {TOOL}",
                path.display(),
                m.tool
            )));
        }
        Ok(m)
    }

    /// Names of outputs whose digests differ from `other`, plus outputs
    /// present on only one side.
    pub fn mismatches(&self, other: &Manifest) -> Vec<String> {
        let mut out = Vec::new();
        for (name, d) in &self.outputs {
            match other.outputs.get(name) {
                Some(o) if o == d => {}
                Some(_) => out.push(name.clone()),
                None => out.push(format!("{name} (missing)")),
            }
        }
        for name in other.outputs.keys() {
            if !self.outputs.contains_key(name) {
                out.push(format!("{name} (unexpected)"));
            }
        }
        out
    }
}

/// Writes every output and the manifest into `dir`.
pub fn write_run(dir: &Path, outputs: &[Output], manifest: &Manifest) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for o in outputs {
        let path = dir.join(&o.name);
        fs::write(&path, &o.bytes).map_err(|e| CliError::io(&path, e))?;
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_toml()).map_err(|e| CliError::io(&path, e))
}
