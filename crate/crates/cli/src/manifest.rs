use std::fmt::Display;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

pub const FILE_NAME: &str = "manifest.txt";

/// Plain `key=value` record of one command invocation, kept in insertion
/// order. Written next to the outputs so a run can be repeated from it.
#[derive(Debug, Default)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        let mut m = RunManifest::default();
        m.set("subcommand", subcommand);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    /// Sets `key`, replacing an earlier value. Newlines in values are escaped
    /// so every entry stays on one line.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string().replace('\\', "\\\\").replace('\n', "\\n");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn set_path(&mut self, key: &str, path: &Path) {
        self.set(key, path.display());
    }

    pub fn set_wall_time(&mut self, elapsed: Duration) {
        self.set("wall_time_s", format!("{:.6}", elapsed.as_secs_f64()));
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Writes `manifest.txt` into `dir`, replacing any previous one.
    pub fn write_to(&self, dir: &Path) -> io::Result<PathBuf> {
        let path = dir.join(FILE_NAME);
        fs::write(&path, self.render())?;
        Ok(path)
    }
}

/// Directory that holds `path`, treating a bare file name as the current
/// directory.
pub fn dir_of(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}
