//! Line-delimited JSON records.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub fn parse_lines<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(n, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                location: format!("{origin}:{}", n + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let origin = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&origin, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            location: format!("{origin}:{}", n + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn to_string<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let origin = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(&origin, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(to_string(records).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&origin, e))
}
