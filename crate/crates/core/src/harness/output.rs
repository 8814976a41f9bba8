use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Output files buffered in memory and published together.
#[derive(Debug, Default)]
pub struct Outputs {
    prefix: String,
    files: Vec<(String, PathBuf, String)>,
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

impl Outputs {
    pub fn new(prefix: &str) -> Self {
        Outputs {
            prefix: prefix.to_string(),
            files: Vec::new(),
        }
    }

    /// Adds `<prefix><name>`.
    pub fn add(&mut self, name: &str, content: String) {
        let path = PathBuf::from(format!("{}{name}", self.prefix));
        self.files.push((name.to_string(), path, content));
    }

    /// Adds a file outside the prefix.
    pub fn add_path(&mut self, path: PathBuf, content: String) {
        self.files.push((path.display().to_string(), path, content));
    }

    /// Names relative to the prefix (full paths for files added by path).
    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _, _)| n.clone()).collect()
    }

    /// Writes every file to a temporary sibling, then renames them into
    /// place. On failure every file written so far is removed.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut temps: Vec<(PathBuf, PathBuf)> = Vec::new();
        let cleanup = |temps: &[(PathBuf, PathBuf)], published: usize| {
            for (i, (tmp, fin)) in temps.iter().enumerate() {
                let _ = fs::remove_file(if i < published { fin } else { tmp });
            }
        };
        for (_, path, content) in &self.files {
            let tmp = temp_path(path);
            let written = match path.parent().filter(|p| !p.as_os_str().is_empty()) {
                Some(dir) => fs::create_dir_all(dir),
                None => Ok(()),
            }
            .and_then(|_| fs::write(&tmp, content));
            if let Err(e) = written {
                let _ = fs::remove_file(&tmp);
                cleanup(&temps, 0);
                return Err(Error::io(path, e));
            }
            temps.push((tmp, path.clone()));
        }
        for (i, (tmp, fin)) in temps.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, fin) {
                cleanup(&temps, i);
                return Err(Error::io(fin, e));
            }
        }
        Ok(temps.into_iter().map(|(_, p)| p).collect())
    }
}
