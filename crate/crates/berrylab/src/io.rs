//! Line-delimited JSON helpers shared by the log and stream formats.

use std::io::{BufRead, BufReader, Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Read one record per non-empty line; parse failures carry the line number.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl Read) -> Result<Vec<T>, JsonlError> {
    let mut items = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| JsonlError::Parse {
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    mut writer: impl Write,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<(), JsonlError> {
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| JsonlError::Parse { line: 0, message: e.to_string() })?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::DetectionRecord;

    #[test]
    fn jsonl_roundtrip() {
        let records = vec![
            DetectionRecord { frame: 0, stamp: 0.0, u: 1.0, v: 2.0, depth: 0.5, quality: 0.9 },
            DetectionRecord { frame: 1, stamp: 0.1, u: 3.0, v: 4.0, depth: 0.6, quality: 0.8 },
        ];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &records).unwrap();
        let parsed: Vec<DetectionRecord> = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "{\"frame\":0,\"stamp\":0.0,\"u\":1,\"v\":2,\"depth\":0.5,\"quality\":0.9}\nnot json\n";
        let err = read_jsonl::<DetectionRecord>(text.as_bytes()).unwrap_err();
        match err {
            JsonlError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blank_lines_are_skipped() {
        let text = "\n{\"frame\":0,\"stamp\":0.0,\"u\":1,\"v\":2,\"depth\":0.5,\"quality\":0.9}\n\n";
        let parsed: Vec<DetectionRecord> = read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(parsed.len(), 1);
    }
}
