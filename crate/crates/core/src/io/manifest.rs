//! JSON-Lines dataset manifests, one [`AnnotationRecord`] per line.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::heatmap::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    /// Trusted labels.
    #[serde(rename = "e")]
    E,
    /// Auto-generated, mixed-quality labels.
    #[serde(rename = "o")]
    O,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    /// Relative to the manifest's directory.
    pub image_path: String,
    pub instruction: String,
    /// Relative to the manifest's directory.
    pub label_path: String,
    pub source: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    /// Fields this crate does not interpret, kept verbatim.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// `human`, `machine:<name>`, `synthetic:clean` or `synthetic:noisy:<mode>`.
pub fn is_valid_source(source: &str) -> bool {
    if source == "human" || source == "synthetic:clean" {
        return true;
    }
    let tail = |prefix: &str| source.strip_prefix(prefix).is_some_and(|t| !t.is_empty());
    tail("machine:") || tail("synthetic:noisy:")
}

impl AnnotationRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.instruction.trim().is_empty() {
            return Err("blank instruction".into());
        }
        if !is_valid_source(&self.source) {
            return Err(format!("invalid source tag `{}`", self.source));
        }
        Ok(())
    }

    pub fn extra_bool(&self, key: &str) -> Option<bool> {
        self.extra.get(key).and_then(Value::as_bool)
    }

    pub fn extra_str(&self, key: &str) -> Option<&str> {
        self.extra.get(key).and_then(Value::as_str)
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<AnnotationRecord>> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        rec.validate().map_err(|message| Error::MalformedLine {
            line: line_no,
            message,
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn read_manifest(path: &Path) -> Result<Vec<AnnotationRecord>> {
    parse_manifest(&fs::read_to_string(path)?)
}

pub fn render_manifest(records: &[AnnotationRecord]) -> Result<String> {
    let mut seen = HashSet::new();
    let mut out = String::new();
    for r in records {
        r.validate().map_err(Error::InvalidValue)?;
        if !seen.insert(r.id.as_str()) {
            return Err(Error::DuplicateId(r.id.clone()));
        }
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::InvalidValue(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    let text = render_manifest(records)?;
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
