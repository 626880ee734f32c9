//! Option resolution: an optional JSON config file overlaid by flags.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration. Exit status 2.
    Usage(String),
    /// The run itself failed. Exit status 1.
    Runtime(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Resolves options: keys from the config file (unknown keys rejected),
/// then every flag that was given. A flag counts as given when it is not
/// null and not `false`.
pub fn resolve<T: Serialize + DeserializeOwned + Default>(flags: &T, config: Option<&Path>) -> Result<T, CliError> {
    // Option structs flatten shared groups, which serde cannot combine with
    // `deny_unknown_fields`, so the keys are checked here.
    let known = serde_json::to_value(T::default()).map_err(anyhow::Error::from)?;
    let flags = serde_json::to_value(flags).map_err(anyhow::Error::from)?;
    let mut merged = match config {
        None => Value::Object(Default::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
            let value: Value =
                serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
            let Some(obj) = value.as_object() else {
                return Err(usage(format!("config {} must be a JSON object", path.display())));
            };
            if let Some(key) = obj.keys().find(|k| known.get(k.as_str()).is_none()) {
                return Err(usage(format!("config {}: unknown key '{key}'", path.display())));
            }
            serde_json::from_value::<T>(value.clone()).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
            value
        }
    };
    if let (Some(base), Some(overrides)) = (merged.as_object_mut(), flags.as_object()) {
        for (key, v) in overrides {
            if !v.is_null() && *v != Value::Bool(false) {
                base.insert(key.clone(), v.clone());
            }
        }
    }
    serde_json::from_value(merged).map_err(|e| usage(e.to_string()))
}

pub fn required<T>(value: Option<T>, name: &str) -> Result<T, CliError> {
    value.ok_or_else(|| usage(format!("missing required option '{name}'")))
}

/// The explicit path, or `default_name` inside the output directory.
pub fn output_path(explicit: Option<PathBuf>, out_dir: &Path, default_name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| out_dir.join(default_name))
}

/// `dir/stem.<ext>` next to `path`.
pub fn sibling(path: &Path, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}.{ext}"))
}

pub fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields, default)]
    struct Opts {
        a: Option<u32>,
        b: Option<String>,
        flag: bool,
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"a": 1, "b": "file", "flag": true}"#).unwrap();
        let flags = Opts { a: Some(7), b: None, flag: false };
        let out = resolve(&flags, Some(&path)).unwrap();
        assert_eq!(out, Opts { a: Some(7), b: Some("file".into()), flag: true });
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"zzz": 1}"#).unwrap();
        assert!(matches!(resolve(&Opts::default(), Some(&path)), Err(CliError::Usage(_))));
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("/a/b/set.csv"), "trace.csv"), PathBuf::from("/a/b/set.trace.csv"));
    }
}
