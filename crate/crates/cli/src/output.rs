use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::{CliError, Format};

/// Rows as CSV with a header, or as one JSON object per line.
pub fn render<T: Serialize>(format: Format, rows: &[T]) -> String {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            for r in rows {
                w.serialize(r).expect("flat record");
            }
            String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
        }
        Format::Jsonl => rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("serializable record") + "\n")
            .collect(),
    }
}

/// Writes to `out` atomically, or to stdout.
pub fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => Ok(rppg_core::io::write_atomic(p, text.as_bytes())?),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Data(rppg_core::Error::Io { path: "<stdout>".into(), source: e }))
        }
    }
}
