//! Resolution of run settings from defaults, an optional key=value config
//! file, and explicit flags (flags always win). Every run echoes the fully
//! resolved settings into `run_config.txt` for provenance.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::{Cli, CliError};

pub struct Resolved {
    /// Fully resolved key -> value pairs, echoed to run_config.txt.
    entries: BTreeMap<String, String>,
    file: BTreeMap<String, String>,
}

impl Resolved {
    pub fn new(cli: &Cli, subcommand: &str) -> Result<Self, CliError> {
        let mut file = BTreeMap::new();
        if let Some(path) = &cli.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("config file {path}: {e}")))?;
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| CliError::usage(format!("bad config line: {line}")))?;
                file.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let mut resolved = Resolved {
            entries: BTreeMap::new(),
            file,
        };
        resolved.entries.insert("subcommand".into(), subcommand.into());
        Ok(resolved)
    }

    /// Resolves flag > config file > default, recording the outcome.
    pub fn get<T: ToString + Clone, F>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
        parse: F,
    ) -> Result<T, CliError>
    where
        F: Fn(&str) -> Option<T>,
    {
        let value = if let Some(v) = flag {
            v
        } else if let Some(raw) = self.file.get(key) {
            parse(raw).ok_or_else(|| CliError::usage(format!("bad value for {key}: {raw}")))?
        } else {
            default
        };
        self.entries.insert(key.into(), value.to_string());
        Ok(value)
    }

    pub fn record(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    /// Raw config-file entries not consumed by `get` (e.g. network keys).
    pub fn file_entries(&self) -> &BTreeMap<String, String> {
        &self.file
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("create {}: {e}", dir.display())))?;
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("{k}={v}\n"));
        }
        std::fs::write(dir.join("run_config.txt"), out)
            .map_err(|e| CliError::Runtime(format!("write run_config.txt: {e}")))?;
        Ok(())
    }
}

/// `--out` when given, else `--out-dir`.
pub fn out_path(cli: &Cli, out: &Option<String>) -> PathBuf {
    match out {
        Some(path) => PathBuf::from(path),
        None => PathBuf::from(&cli.out_dir),
    }
}

/// Directory that holds an output file path (for run_config.txt placement).
pub fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
