//! Names and file I/O for the run artifact directory.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::CliError;

pub const ACTORS: &str = "actors.txt";
pub const ROSTER: &str = "roster.txt";
pub const SCHEDULES: &str = "schedules.txt";
pub const CHAIN: &str = "chain.txt";
pub const CREDITS: &str = "credits.txt";
pub const ACCESS_LOG: &str = "access_log.txt";
pub const STORE: &str = "store.txt";
pub const EXECUTION_LOG: &str = "execution_log.txt";
pub const EVENTS: &str = "events.txt";
pub const TRACE: &str = "trace.txt";
pub const NET_TRACE: &str = "net_trace.txt";
pub const SHARING: &str = "sharing.txt";
pub const SUMMARY: &str = "summary.txt";

/// File name to contents; every file is line-delimited text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Artifacts(BTreeMap<&'static str, String>);

impl Artifacts {
    pub fn insert(&mut self, name: &'static str, contents: String) {
        self.0.insert(name, contents);
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.0.keys().copied()
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (name, contents) in &self.0 {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

/// Reads one artifact, reporting absence distinctly from other I/O errors.
pub fn read(dir: &Path, name: &str) -> Result<String, CliError> {
    let path = dir.join(name);
    match std::fs::read_to_string(&path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(CliError::MissingArtifact(path)),
        Err(e) => Err(CliError::io(path, e)),
    }
}
