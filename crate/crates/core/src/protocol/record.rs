//! Line-delimited dataset records.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::template::{MultimodalSequence, Protocol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    Single,
    Multi,
    Video,
    Patched,
    Text,
}

/// One item: image references, the prompt texts consumed by the template
/// and an optional response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub task_type: TaskType,
    #[serde(default)]
    pub images: Vec<String>,
    #[serde(default)]
    pub texts: Vec<String>,
    /// Tile counts per row, patched inputs only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

impl DatasetRecord {
    fn one_text(&self) -> Result<&str> {
        match self.texts.as_slice() {
            [] => Ok(""),
            [t] => Ok(t),
            _ => Err(Error::Protocol(format!(
                "{:?} record takes one text, got {}",
                self.task_type,
                self.texts.len()
            ))),
        }
    }

    fn expect_images(&self, n: usize) -> Result<()> {
        if self.images.len() != n {
            return Err(Error::Protocol(format!(
                "{:?} record expects {n} images, got {}",
                self.task_type,
                self.images.len()
            )));
        }
        Ok(())
    }

    /// Prompt sequence; image `i` of the result refers to `images[i]`.
    pub fn prompt(&self, proto: &Protocol) -> Result<MultimodalSequence> {
        match self.task_type {
            TaskType::Text => {
                self.expect_images(0)?;
                Ok(proto.text(self.one_text()?))
            }
            TaskType::Single => {
                self.expect_images(1)?;
                Ok(proto.single(self.one_text()?))
            }
            TaskType::Multi => {
                let texts: Vec<&str> = self.texts.iter().map(String::as_str).collect();
                proto.multi_counted(self.images.len(), &texts)
            }
            TaskType::Video => proto.video(self.images.len(), self.one_text()?),
            TaskType::Patched => {
                let tiles = self.images.len().checked_sub(1).ok_or_else(|| {
                    Error::Protocol("patched record needs an overview image".into())
                })?;
                proto.patched_checked(tiles, &self.rows, self.one_text()?)
            }
        }
    }
}

pub fn write_jsonl(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
