//! Line-delimited record files: one JSON object per line, UTF-8.
//!
//! Raw corpus files hold `{"id", "source", "platform"?, "label"?, "text"}`;
//! split files hold [`CleanRecord`]s.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{CleanRecord, RawPost};

#[derive(Debug, thiserror::Error)]
pub enum RecordIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RecordIoError> {
    let io_err = |source| RecordIoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| RecordIoError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), RecordIoError> {
    let io_err = |source| RecordIoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for item in items {
        let line = serde_json::to_string(item).expect("records serialize");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_raw_posts(path: &Path) -> Result<Vec<RawPost>, RecordIoError> {
    read_lines(path)
}

pub fn write_raw_posts(path: &Path, posts: &[RawPost]) -> Result<(), RecordIoError> {
    write_lines(path, posts)
}

pub fn read_clean_records(path: &Path) -> Result<Vec<CleanRecord>, RecordIoError> {
    read_lines(path)
}

pub fn write_clean_records(path: &Path, records: &[CleanRecord]) -> Result<(), RecordIoError> {
    write_lines(path, records)
}
