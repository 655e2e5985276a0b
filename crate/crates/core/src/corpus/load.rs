use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use super::{ClaimRecord, ClaimType, DocumentRecord, Label};
use crate::error::{Error, Result, RowError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimFormat {
    Jsonl,
    Csv,
}

impl ClaimFormat {
    /// Picks the format from a file extension, defaulting to JSON lines.
    pub fn from_path(path: &Path) -> ClaimFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => ClaimFormat::Csv,
            _ => ClaimFormat::Jsonl,
        }
    }
}

impl FromStr for ClaimFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(ClaimFormat::Jsonl),
            "csv" => Ok(ClaimFormat::Csv),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

/// Raw row, field name → value, as read from either format.
type RawRow = Vec<(String, RawValue)>;

enum RawValue {
    Str(String),
    List(Vec<String>),
    Other(String),
}

fn read_rows(path: &Path, format: ClaimFormat) -> Result<Vec<(usize, Result<RawRow, RowError>)>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        ClaimFormat::Jsonl => Ok(content
            .lines()
            .enumerate()
            .filter(|(_, line)| !line.trim().is_empty())
            .map(|(i, line)| (i + 1, parse_json_row(i + 1, line)))
            .collect()),
        ClaimFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_reader(content.as_bytes());
            let headers = match reader.headers() {
                Ok(h) => h.clone(),
                Err(_) if content.trim().is_empty() => return Ok(Vec::new()),
                Err(e) => return Err(Error::Format(format!("{}: {e}", path.display()))),
            };
            let mut rows = Vec::new();
            for (i, record) in reader.records().enumerate() {
                // header is row 1
                let row = i + 2;
                let parsed = match record {
                    Ok(rec) => Ok(headers
                        .iter()
                        .zip(rec.iter())
                        .map(|(h, v)| {
                            let value = if h == "types" {
                                RawValue::List(
                                    v.split(';')
                                        .map(str::trim)
                                        .filter(|s| !s.is_empty())
                                        .map(String::from)
                                        .collect(),
                                )
                            } else {
                                RawValue::Str(v.to_string())
                            };
                            (h.to_string(), value)
                        })
                        .collect()),
                    Err(e) => Err(RowError {
                        row,
                        field: "*".into(),
                        reason: e.to_string(),
                    }),
                };
                rows.push((row, parsed));
            }
            Ok(rows)
        }
    }
}

fn parse_json_row(row: usize, line: &str) -> Result<RawRow, RowError> {
    let obj: Map<String, Value> = serde_json::from_str(line).map_err(|e| RowError {
        row,
        field: "*".into(),
        reason: e.to_string(),
    })?;
    Ok(obj
        .into_iter()
        .map(|(k, v)| {
            let value = match v {
                Value::String(s) => RawValue::Str(s),
                Value::Array(items) => {
                    let strs: Option<Vec<String>> = items
                        .into_iter()
                        .map(|x| x.as_str().map(String::from))
                        .collect();
                    match strs {
                        Some(s) => RawValue::List(s),
                        None => RawValue::Other("array of non-strings".into()),
                    }
                }
                Value::Null => RawValue::Other("null".into()),
                other => RawValue::Other(other.to_string()),
            };
            (k, value)
        })
        .collect())
}

struct RowReader<'a> {
    row: usize,
    fields: &'a RawRow,
}

impl RowReader<'_> {
    fn err(&self, field: &str, reason: impl Into<String>) -> RowError {
        RowError {
            row: self.row,
            field: field.into(),
            reason: reason.into(),
        }
    }

    fn get(&self, field: &str) -> Option<&RawValue> {
        self.fields.iter().find(|(k, _)| k == field).map(|(_, v)| v)
    }

    fn string(&self, field: &str) -> Result<String, RowError> {
        match self.get(field) {
            Some(RawValue::Str(s)) => Ok(s.clone()),
            Some(RawValue::Other(v)) => Err(self.err(field, format!("expected a string, got {v}"))),
            Some(RawValue::List(_)) => Err(self.err(field, "expected a string, got an array")),
            None => Err(self.err(field, "missing")),
        }
    }

    fn non_empty(&self, field: &str) -> Result<String, RowError> {
        let s = self.string(field)?;
        if s.trim().is_empty() {
            return Err(self.err(field, "empty after trimming"));
        }
        Ok(s)
    }

    fn list(&self, field: &str) -> Result<Vec<String>, RowError> {
        match self.get(field) {
            None => Ok(Vec::new()),
            Some(RawValue::List(items)) => Ok(items.clone()),
            Some(RawValue::Str(s)) if s.is_empty() => Ok(Vec::new()),
            Some(_) => Err(self.err(field, "expected an array of strings")),
        }
    }
}

fn claim_from_row(row: usize, fields: &RawRow) -> Result<ClaimRecord, RowError> {
    let r = RowReader { row, fields };
    let id = r.non_empty("id")?;
    let text = r.non_empty("text")?;
    let label_raw = r.string("label")?;
    let label = label_raw.parse::<Label>().map_err(|e| r.err("label", e))?;
    let claim_source = r.string("claim_source")?;
    let origin_dataset = r.string("origin_dataset")?;
    let types = r
        .list("types")?
        .iter()
        .map(|t| t.parse::<ClaimType>().map_err(|e| r.err("types", e)))
        .collect::<Result<BTreeSet<_>, _>>()?;
    Ok(ClaimRecord {
        id,
        text,
        label,
        claim_source,
        origin_dataset,
        types,
    })
}

fn document_from_row(row: usize, fields: &RawRow) -> Result<DocumentRecord, RowError> {
    let r = RowReader { row, fields };
    Ok(DocumentRecord {
        id: r.non_empty("id")?,
        url: r.string("url")?,
        domain: r.string("domain")?,
        text: r.non_empty("text")?,
    })
}

fn collect<T>(
    rows: Vec<(usize, Result<RawRow, RowError>)>,
    convert: impl Fn(usize, &RawRow) -> Result<T, RowError>,
    id_of: impl Fn(&T) -> &str,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(rows.len());
    let mut bad = Vec::new();
    for (row, raw) in rows {
        match raw.and_then(|fields| convert(row, &fields)) {
            Ok(rec) => out.push(rec),
            Err(e) => bad.push(e),
        }
    }
    if !bad.is_empty() {
        return Err(Error::MalformedRows(bad));
    }
    let mut seen = HashSet::with_capacity(out.len());
    for rec in &out {
        if !seen.insert(id_of(rec)) {
            return Err(Error::DuplicateId(id_of(rec).to_string()));
        }
    }
    Ok(out)
}

/// Loads a claims file. Every failing row is reported, not just the first.
pub fn load_claims(path: &Path, format: ClaimFormat) -> Result<Vec<ClaimRecord>> {
    collect(read_rows(path, format)?, claim_from_row, |c| c.id.as_str())
}

pub fn load_documents(path: &Path, format: ClaimFormat) -> Result<Vec<DocumentRecord>> {
    collect(read_rows(path, format)?, document_from_row, |d| d.id.as_str())
}

pub fn save_claims(path: &Path, claims: &[ClaimRecord], format: ClaimFormat) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        ClaimFormat::Jsonl => {
            for c in claims {
                serde_json::to_writer(&mut buf, c)?;
                buf.push(b'\n');
            }
        }
        ClaimFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["id", "text", "label", "claim_source", "origin_dataset", "types"])
                .map_err(|e| Error::Format(e.to_string()))?;
            for c in claims {
                let types = c
                    .types
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(";");
                w.write_record([
                    c.id.as_str(),
                    c.text.as_str(),
                    c.label.as_str(),
                    c.claim_source.as_str(),
                    c.origin_dataset.as_str(),
                    types.as_str(),
                ])
                .map_err(|e| Error::Format(e.to_string()))?;
            }
            w.flush()?;
        }
    }
    write_file(path, &buf)
}

pub fn save_documents(path: &Path, docs: &[DocumentRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for d in docs {
        serde_json::to_writer(&mut buf, d)?;
        buf.push(b'\n');
    }
    write_file(path, &buf)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
