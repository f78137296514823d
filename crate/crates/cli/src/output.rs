use crate::Failure;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Output files held in memory until the command has fully succeeded, so a
/// failed run never leaves partial results behind.
#[derive(Default)]
pub struct Staged {
    files: Vec<(String, Vec<u8>)>,
}

impl Staged {
    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_vec_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
        text.push(b'\n');
        self.files.push((name.to_string(), text));
        Ok(())
    }

    pub fn bytes(&mut self, name: &str, data: Vec<u8>) {
        self.files.push((name.to_string(), data));
    }

    /// Builds a CSV from a header and rows of already formatted fields.
    pub fn table(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) {
        let mut out = String::new();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        self.bytes(name, out.into_bytes());
    }

    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
        let mut written = Vec::new();
        for (name, data) in self.files {
            let path = dir.join(name);
            std::fs::write(&path, data).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}
