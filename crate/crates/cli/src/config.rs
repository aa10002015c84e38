//! JSON run configuration: module settings over defaults, plus file paths,
//! with command-line flags taking precedence over both.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const MANIFEST_FORMAT: &str = "vbc-run-manifest-v1";

/// Parsed `--config` file. A run manifest is accepted too, in which case its
/// config snapshot is used, so any run can be repeated from its manifest.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    entries: Map<String, Value>,
    dir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| vbc_core::Error::Parse(format!("config {}: {e}", path.display())))?;
        let Value::Object(mut entries) = value else {
            return Err(vbc_core::Error::Parse(format!("config {} is not a JSON object", path.display())).into());
        };
        if entries.get("format").and_then(Value::as_str) == Some(MANIFEST_FORMAT) {
            match entries.remove("config") {
                Some(Value::Object(inner)) => entries = inner,
                _ => return Err(vbc_core::Error::Parse("manifest has no config object".into()).into()),
            }
        }
        Ok(ConfigFile { entries, dir: path.parent().map(Path::to_path_buf) })
    }

    /// Module settings: `defaults` overlaid with the file's entries (nested
    /// objects merge key by key). Keys the module does not know are ignored.
    pub fn settings<C: Serialize + DeserializeOwned>(&self, defaults: &C, section: Option<&str>) -> Result<C> {
        let mut base = serde_json::to_value(defaults)?;
        let overlay = match section {
            Some(name) => match self.entries.get(name) {
                Some(v) => v.clone(),
                None => Value::Object(Map::new()),
            },
            None => Value::Object(self.entries.clone()),
        };
        merge(&mut base, &overlay);
        serde_json::from_value(base).map_err(|e| vbc_core::Error::InvalidConfig(format!("{}: {e}", section.unwrap_or("config"))).into())
    }

    /// A path flag, falling back to the file; relative file paths resolve
    /// against the config's directory.
    pub fn path(&self, cli: Option<&PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        if let Some(p) = cli {
            return Ok(Some(p.clone()));
        }
        match self.entries.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => {
                let p = PathBuf::from(s);
                Ok(Some(match &self.dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p,
                }))
            }
            Some(other) => Err(vbc_core::Error::Parse(format!("config key {key:?} must be a path, got {other}")).into()),
        }
    }

    pub fn require(&self, cli: Option<&PathBuf>, key: &str) -> Result<PathBuf> {
        self.path(cli, key)?
            .ok_or_else(|| anyhow!(vbc_core::Error::Parse(format!("missing --{} (or \"{key}\" in --config)", key.replace('_', "-")))))
    }
}

fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

/// Record of one run: enough to repeat it and to check its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Complete configuration, including paths; usable as `--config`.
    pub config: Value,
    pub inputs: BTreeMap<String, InputFile>,
    pub outputs: Vec<String>,
    pub metrics: Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            format: MANIFEST_FORMAT.into(),
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config: Value::Object(Map::new()),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            metrics: Value::Null,
        }
    }

    /// Records an input path in both the hash table and the config snapshot.
    pub fn input(&mut self, key: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        let shown = path.display().to_string();
        self.inputs.insert(key.into(), InputFile { path: shown.clone(), sha256 });
        self.set(key, Value::String(absolute(path)));
        Ok(())
    }

    pub fn output(&mut self, key: &str, path: &Path) {
        self.outputs.push(path.display().to_string());
        self.set(key, Value::String(absolute(path)));
    }

    pub fn set(&mut self, key: &str, value: Value) {
        if let Value::Object(m) = &mut self.config {
            m.insert(key.into(), value);
        }
    }

    /// Adds every field of a serializable settings struct to the snapshot,
    /// either at the top level or under `section`.
    pub fn settings<C: Serialize>(&mut self, settings: &C, section: Option<&str>) -> Result<()> {
        let v = serde_json::to_value(settings)?;
        match section {
            Some(name) => self.set(name, v),
            None => {
                let Value::Object(m) = v else { bail!("settings must serialize to an object") };
                for (k, v) in m {
                    self.set(&k, v);
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }
}

fn absolute(path: &Path) -> String {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf()).display().to_string()
}

/// `<path>.manifest.json` next to a primary output.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vbc_core::simplex_enum::PruningConfig;

    fn file(entries: Value) -> ConfigFile {
        let Value::Object(entries) = entries else { unreachable!() };
        ConfigFile { entries, dir: Some(PathBuf::from("/runs")) }
    }

    #[test]
    fn file_overrides_defaults_and_keeps_the_rest() {
        let f = file(serde_json::json!({"max_simplices_per_cage_vertex": 3, "cage": "c.json"}));
        let cfg = f.settings(&PruningConfig::defaults_2d(), None).unwrap();
        assert_eq!(cfg.max_per_vertex, 3);
        assert_eq!(cfg.n_inside, PruningConfig::defaults_2d().n_inside);
    }

    #[test]
    fn paths_prefer_flags_and_resolve_relative_to_the_file() {
        let f = file(serde_json::json!({"cage": "c.json", "bad": 3}));
        assert_eq!(f.path(None, "cage").unwrap(), Some(PathBuf::from("/runs/c.json")));
        let flag = PathBuf::from("other.json");
        assert_eq!(f.path(Some(&flag), "cage").unwrap(), Some(flag));
        assert!(f.path(None, "bad").is_err());
        assert!(f.require(None, "out").is_err());
    }

    #[test]
    fn nested_sections_merge_key_by_key() {
        let mut base = serde_json::json!({"a": {"x": 1, "y": 2}, "b": 1});
        merge(&mut base, &serde_json::json!({"a": {"y": 5}, "c": 0}));
        assert_eq!(base, serde_json::json!({"a": {"x": 1, "y": 5}, "b": 1, "c": 0}));
    }

    #[test]
    fn bad_settings_are_config_errors() {
        let f = file(serde_json::json!({"n_inside": "many"}));
        let err = f.settings(&PruningConfig::defaults_2d(), None).unwrap_err();
        assert!(matches!(err.downcast_ref::<vbc_core::Error>(), Some(vbc_core::Error::InvalidConfig(_))));
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(manifest_path_for(Path::new("/x/vss.json")), PathBuf::from("/x/vss.json.manifest.json"));
    }
}
