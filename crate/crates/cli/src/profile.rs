//! Component selection: which store, which engine, catalog depth, port.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StoreKindName {
    Immutable,
    Mvcc,
    Archive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EngineKindName {
    #[default]
    Batch,
    Oltp,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_spec: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archive_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreProfile {
    pub kind: StoreKindName,
    #[serde(default)]
    pub source: Source,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineProfile {
    #[serde(default)]
    pub kind: EngineKindName,
    #[serde(default = "one")]
    pub shards: u32,
    /// Whether this deployment accepts updates; needs an mvcc store.
    #[serde(default)]
    pub updates: bool,
}

impl Default for EngineProfile {
    fn default() -> Self {
        EngineProfile { kind: EngineKindName::Batch, shards: 1, updates: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogProfile {
    #[serde(default = "two")]
    pub k: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for CatalogProfile {
    fn default() -> Self {
        CatalogProfile { k: 2, path: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerProfile {
    #[serde(default = "default_port")]
    pub port: u16,
}

impl Default for ServerProfile {
    fn default() -> Self {
        ServerProfile { port: default_port() }
    }
}

fn one() -> u32 {
    1
}

fn two() -> u8 {
    2
}

fn default_port() -> u16 {
    7878
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub store: StoreProfile,
    #[serde(default)]
    pub engine: EngineProfile,
    #[serde(default)]
    pub catalog: CatalogProfile,
    #[serde(default)]
    pub server: ServerProfile,
}

impl Profile {
    /// Reads a profile; relative paths inside it resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Profile, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut p: Profile = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut().filter(|x| x.is_relative()) {
                *x = base.join(&*x);
            }
        };
        fix(&mut p.store.source.csv_spec);
        fix(&mut p.store.source.archive_dir);
        fix(&mut p.catalog.path);
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let src = &self.store.source;
        match self.store.kind {
            StoreKindName::Archive if src.archive_dir.is_none() => {
                return Err(CliError::Config("an archive store needs store.source.archive_dir".into()))
            }
            _ if src.csv_spec.is_none() && src.archive_dir.is_none() => {
                return Err(CliError::Config("store.source needs csv_spec or archive_dir".into()))
            }
            _ => {}
        }
        if src.csv_spec.is_some() && src.archive_dir.is_some() {
            return Err(CliError::Config("store.source takes one of csv_spec or archive_dir".into()));
        }
        if self.engine.updates && self.store.kind != StoreKindName::Mvcc {
            return Err(CliError::Config(format!("updates need an mvcc store, not {:?}", self.store.kind).to_lowercase()));
        }
        if self.engine.shards == 0 {
            return Err(CliError::Config("engine.shards must be at least 1".into()));
        }
        Ok(())
    }

    pub fn accepts_updates(&self) -> bool {
        self.store.kind == StoreKindName::Mvcc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let p: Profile = serde_json::from_str(r#"{"store":{"kind":"immutable","source":{"csv_spec":"x.json"}}}"#).unwrap();
        assert_eq!(p.engine, EngineProfile::default());
        assert_eq!(p.catalog.k, 2);
        p.validate().unwrap();
    }

    #[test]
    fn updates_on_archive_are_rejected() {
        let p: Profile = serde_json::from_str(
            r#"{"store":{"kind":"archive","source":{"archive_dir":"a"}},"engine":{"kind":"oltp","shards":2,"updates":true}}"#,
        )
        .unwrap();
        assert_eq!(p.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn unknown_kinds_and_fields_fail_to_parse() {
        assert!(serde_json::from_str::<Profile>(r#"{"store":{"kind":"tape"}}"#).is_err());
        assert!(serde_json::from_str::<Profile>(r#"{"store":{"kind":"mvcc"},"extra":1}"#).is_err());
    }
}
