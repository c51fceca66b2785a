//! Streaming CSV tables and atomically written JSON manifests.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Fixed float format: round-trips every `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV writer that flushes after every row, so an aborted run leaves every
/// completed row on disk.
pub struct CsvSink {
    out: BufWriter<File>,
    columns: usize,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[String]) -> Result<Self, CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = File::create(path)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
        let mut sink = CsvSink {
            out: BufWriter::new(file),
            columns: header.len(),
        };
        sink.write_line(&header.join(","))?;
        Ok(sink)
    }

    fn write_line(&mut self, line: &str) -> Result<(), CliError> {
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        debug_assert_eq!(fields.len(), self.columns);
        self.write_line(&fields.join(","))
    }

    pub fn float_row(&mut self, values: &[f64]) -> Result<(), CliError> {
        let fields: Vec<String> = values.iter().map(|&x| fmt_float(x)).collect();
        self.row(&fields)
    }
}

/// `results.csv` → `results.json`.
pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("cannot serialize manifest: {e}")))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", tmp.display())))?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Io(format!("cannot move manifest into {}: {e}", path.display())))?;
    Ok(())
}
