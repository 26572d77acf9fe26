//! Config files: one TOML table per subcommand, layered over built-in
//! defaults and under command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

pub const SECTIONS: [&str; 5] = ["prepare", "train", "reconstruct", "gauss-recon", "eval"];

/// The table for `section` in the config file, or an empty table.
pub fn load_section(path: Option<&Path>, section: &str) -> Result<Table> {
    let Some(path) = path else {
        return Ok(Table::new());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut table: Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    if let Some(key) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        bail!(
            "{}: unknown section `{key}` (expected one of {})",
            path.display(),
            SECTIONS.join(", ")
        );
    }
    match table.remove(section) {
        None => Ok(Table::new()),
        Some(Value::Table(t)) => Ok(t),
        Some(_) => bail!("{}: `{section}` must be a table", path.display()),
    }
}

/// Recursively overlays `top` onto `base`.
pub fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// `base` with `overlay` applied. Keys that `T` does not know are errors.
pub fn resolve<T: Serialize + DeserializeOwned>(base: &T, overlay: Table, what: &str) -> Result<T> {
    let mut table = Table::try_from(base).with_context(|| format!("serializing default {what} settings"))?;
    merge(&mut table, overlay);
    Value::Table(table)
        .try_into()
        .with_context(|| format!("invalid {what} settings"))
}

/// Removes `key` from `table` and converts it.
pub fn take<T: DeserializeOwned>(table: &mut Table, key: &str) -> Result<Option<T>> {
    table
        .remove(key)
        .map(|v| v.try_into().with_context(|| format!("invalid value for `{key}`")))
        .transpose()
}

/// Inserts `value` under `key` when it is set.
pub fn set<V: Into<Value>>(table: &mut Table, key: &str, value: Option<V>) {
    if let Some(v) = value {
        table.insert(key.to_string(), v.into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, serde::Serialize, serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        a: i64,
        b: f64,
    }

    #[derive(Debug, PartialEq, serde::Serialize, serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Outer {
        x: i64,
        inner: Inner,
    }

    fn base() -> Outer {
        Outer {
            x: 1,
            inner: Inner { a: 2, b: 3.0 },
        }
    }

    #[test]
    fn overlay_replaces_nested_keys_only() {
        let top: Table = toml::from_str("[inner]\nb = 9.5").unwrap();
        let out = resolve(&base(), top, "test").unwrap();
        assert_eq!(out, Outer { x: 1, inner: Inner { a: 2, b: 9.5 } });
    }

    #[test]
    fn unknown_keys_are_errors() {
        let top: Table = toml::from_str("y = 2").unwrap();
        assert!(resolve(&base(), top, "test").is_err());
        let top: Table = toml::from_str("[inner]\nc = 2").unwrap();
        assert!(resolve(&base(), top, "test").is_err());
    }

    #[test]
    fn sections_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[train]\nepochs = 3\n[trian]\nx = 1\n").unwrap();
        let err = load_section(Some(&p), "train").unwrap_err();
        assert!(err.to_string().contains("trian"), "{err}");
        std::fs::write(&p, "[train]\nepochs = 3\n").unwrap();
        let t = load_section(Some(&p), "train").unwrap();
        assert_eq!(t["epochs"].as_integer(), Some(3));
        assert!(load_section(Some(&p), "eval").unwrap().is_empty());
    }
}
