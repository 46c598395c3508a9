//! Durability log: newline-delimited JSON, one stored reading per line,
//! flushed per insert.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use thiserror::Error;

use crate::model::StoredReading;

pub(crate) struct WalWriter {
    writer: BufWriter<File>,
}

impl WalWriter {
    pub(crate) fn create(path: &Path) -> std::io::Result<WalWriter> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(WalWriter {
            writer: BufWriter::new(file),
        })
    }

    pub(crate) fn append(&mut self, reading: &StoredReading) -> std::io::Result<()> {
        let line = serde_json::to_string(reading).expect("reading serialization cannot fail");
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }
}

#[derive(Debug, Error)]
pub enum RecoverError {
    #[error("cannot read log: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt log at line {line}: {source}")]
    CorruptLog {
        line: usize,
        source: serde_json::Error,
    },
}

/// Replays an NDJSON reading log.
///
/// A final line without a terminating newline that fails to parse is
/// treated as a torn write and discarded with a warning; a parse failure
/// on any complete line is [`RecoverError::CorruptLog`].
pub fn recover_readings(path: &Path) -> Result<Vec<StoredReading>, RecoverError> {
    let mut raw = String::new();
    File::open(path)?.read_to_string(&mut raw)?;

    let ends_with_newline = raw.ends_with('\n');
    let lines: Vec<&str> = raw.lines().collect();
    let mut readings = Vec::with_capacity(lines.len());
    for (index, line) in lines.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str::<StoredReading>(line) {
            Ok(reading) => readings.push(reading),
            Err(source) => {
                let is_final_line = index == lines.len() - 1;
                if is_final_line && !ends_with_newline {
                    warn!("discarding truncated final log line {}", index + 1);
                    break;
                }
                return Err(RecoverError::CorruptLog {
                    line: index + 1,
                    source,
                });
            }
        }
    }
    Ok(readings)
}
