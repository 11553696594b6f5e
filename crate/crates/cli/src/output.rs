//! Buffered outputs written only once every artifact has been computed.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    /// Writes every file through a temporary sibling and a rename. On error
    /// the files already placed by this call are removed again.
    pub fn commit(self) -> io::Result<()> {
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
        let mut placed: Vec<PathBuf> = Vec::new();
        let result = (|| {
            for (path, bytes) in &self.files {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
                let tmp = temp_sibling(path);
                let mut f = fs::File::create(&tmp)?;
                staged.push((tmp.clone(), path.clone()));
                f.write_all(bytes)?;
                f.sync_all()?;
            }
            for (tmp, path) in &staged {
                fs::rename(tmp, path)?;
                placed.push(path.clone());
            }
            Ok(())
        })();
        if result.is_err() {
            for (tmp, _) in &staged {
                let _ = fs::remove_file(tmp);
            }
            for path in &placed {
                let _ = fs::remove_file(path);
            }
        }
        result
    }
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

/// Writes to `path` if given, otherwise to standard output.
pub fn emit(path: Option<&Path>, bytes: Vec<u8>) -> io::Result<()> {
    match path {
        Some(p) => {
            let mut out = Outputs::default();
            out.add(p, bytes);
            out.commit()
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(&bytes)?;
            stdout.flush()
        }
    }
}
