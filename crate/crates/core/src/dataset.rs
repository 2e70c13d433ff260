//! Dataset ingestion (TSV and JSON lines).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{TaskKind, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    Class(usize),
    Value(f64),
}

impl Gold {
    pub fn class(&self) -> Option<usize> {
        match *self {
            Gold::Class(c) => Some(c),
            Gold::Value(_) => None,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Gold::Class(c) => c as f64,
            Gold::Value(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetExample {
    pub id: String,
    pub s1: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s2: Option<String>,
    pub gold: Gold,
}

impl DatasetExample {
    pub fn validate(&self, task: &TaskSpec) -> std::result::Result<(), String> {
        match (task.sentence_count, &self.s2) {
            (2, None) => return Err("task needs a second sentence".into()),
            (1, Some(_)) => return Err("task takes a single sentence".into()),
            _ => {}
        }
        match (task.kind, self.gold) {
            (TaskKind::Classification { classes }, Gold::Class(c)) if c < classes => Ok(()),
            (TaskKind::Classification { classes }, Gold::Class(c)) => {
                Err(format!("label {c} out of range for {classes} classes"))
            }
            (TaskKind::Regression { lower, upper }, Gold::Value(v)) if (lower..=upper).contains(&v) => Ok(()),
            (TaskKind::Regression { lower, upper }, Gold::Value(v)) => {
                Err(format!("value {v} outside [{lower}, {upper}]"))
            }
            (TaskKind::Classification { .. }, Gold::Value(v)) => Err(format!("non-integer class label {v}")),
            (TaskKind::Regression { .. }, Gold::Class(_)) => unreachable!("regression labels parse as values"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Pick from the extension: `.jsonl`/`.json` are JSON lines, anything else TSV.
    #[default]
    Auto,
    Tsv,
    Jsonl,
}

/// How rows map onto examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub format: Format,
    /// TSV only: skip the first line.
    pub header: bool,
    /// TSV column indices.
    pub s1_column: usize,
    pub s2_column: Option<usize>,
    pub label_column: usize,
    pub id_column: Option<usize>,
    /// Raw label strings in class order; when set, the raw label `label_values[i]`
    /// becomes class `i`. Otherwise labels are read as class indices.
    pub label_values: Option<Vec<String>>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            format: Format::Auto,
            header: false,
            s1_column: 0,
            s2_column: None,
            label_column: 1,
            id_column: None,
            label_values: None,
        }
    }
}

impl Schema {
    /// Default column layout for a task: `s1, label` or `s1, s2, label`.
    pub fn for_task(task: &TaskSpec) -> Self {
        if task.sentence_count == 2 {
            Self {
                s2_column: Some(1),
                label_column: 2,
                ..Self::default()
            }
        } else {
            Self::default()
        }
    }
}

pub fn read_dataset(path: &Path, schema: &Schema, task: &TaskSpec) -> Result<Vec<DatasetExample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let format = match schema.format {
        Format::Auto => match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json") => Format::Jsonl,
            _ => Format::Tsv,
        },
        f => f,
    };
    parse_dataset(&text, format, schema, task).map_err(|(line, message)| Error::Dataset {
        path: path.to_path_buf(),
        line,
        message,
    })
}

/// Parses dataset text. Errors carry the 1-based line number.
pub fn parse_dataset(
    text: &str,
    format: Format,
    schema: &Schema,
    task: &TaskSpec,
) -> std::result::Result<Vec<DatasetExample>, (usize, String)> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || (format != Format::Jsonl && schema.header && idx == 0) {
            continue;
        }
        let row = match format {
            Format::Jsonl => parse_json_row(line, schema, task),
            _ => parse_tsv_row(line, schema, task),
        };
        let mut example = row.map_err(|m| (line_no, m))?;
        if example.id.is_empty() {
            example.id = line_no.to_string();
        }
        example.validate(task).map_err(|m| (line_no, m))?;
        out.push(example);
    }
    Ok(out)
}

fn parse_tsv_row(line: &str, schema: &Schema, task: &TaskSpec) -> std::result::Result<DatasetExample, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    let col = |i: usize| -> std::result::Result<&str, String> {
        cols.get(i)
            .copied()
            .ok_or_else(|| format!("missing column {i} (row has {})", cols.len()))
    };
    let s2 = match schema.s2_column {
        Some(i) => Some(col(i)?.to_string()),
        None => None,
    };
    let id = match schema.id_column {
        Some(i) => col(i)?.to_string(),
        None => String::new(),
    };
    Ok(DatasetExample {
        id,
        s1: col(schema.s1_column)?.to_string(),
        s2,
        gold: parse_label(col(schema.label_column)?.trim(), schema, task)?,
    })
}

fn parse_json_row(line: &str, schema: &Schema, task: &TaskSpec) -> std::result::Result<DatasetExample, String> {
    #[derive(Deserialize)]
    struct Row {
        #[serde(default)]
        id: Option<serde_json::Value>,
        s1: String,
        #[serde(default)]
        s2: Option<String>,
        label: serde_json::Value,
    }
    let row: Row = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let raw = match &row.label {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Number(n) => n.to_string(),
        other => return Err(format!("unsupported label {other}")),
    };
    let id = match row.id {
        Some(serde_json::Value::String(s)) => s,
        Some(other) => other.to_string(),
        None => String::new(),
    };
    Ok(DatasetExample {
        id,
        s1: row.s1,
        s2: row.s2,
        gold: parse_label(&raw, schema, task)?,
    })
}

fn parse_label(raw: &str, schema: &Schema, task: &TaskSpec) -> std::result::Result<Gold, String> {
    if task.kind.is_regression() {
        let v: f64 = raw.parse().map_err(|_| format!("bad regression value `{raw}`"))?;
        if !v.is_finite() {
            return Err(format!("non-finite regression value `{raw}`"));
        }
        return Ok(Gold::Value(v));
    }
    if let Some(values) = &schema.label_values {
        return values
            .iter()
            .position(|v| v == raw)
            .map(Gold::Class)
            .ok_or_else(|| format!("label `{raw}` not in {values:?}"));
    }
    if let Ok(c) = raw.parse::<usize>() {
        return Ok(Gold::Class(c));
    }
    match raw.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v >= 0.0 => Ok(Gold::Class(v as usize)),
        Ok(v) => Ok(Gold::Value(v)),
        Err(_) => Err(format!("bad class label `{raw}`")),
    }
}
