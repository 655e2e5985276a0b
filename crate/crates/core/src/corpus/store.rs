use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::Paragraph;
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;

/// Resolves a paragraph id to its text.
pub trait PassageLookup: Sync {
    fn passage(&self, id: &str) -> Option<&str>;
}

impl PassageLookup for HashMap<String, String> {
    fn passage(&self, id: &str) -> Option<&str> {
        self.get(id).map(String::as_str)
    }
}

impl PassageLookup for BTreeMap<String, String> {
    fn passage(&self, id: &str) -> Option<&str> {
        self.get(id).map(String::as_str)
    }
}

/// Paragraphs addressable by their `<doc_id>#<ordinal>` id.
#[derive(Debug, Clone, Default)]
pub struct ParagraphStore {
    paragraphs: Vec<Paragraph>,
    by_id: HashMap<String, usize>,
}

impl ParagraphStore {
    pub fn new(paragraphs: Vec<Paragraph>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(paragraphs.len());
        for (i, p) in paragraphs.iter().enumerate() {
            if by_id.insert(p.paragraph_id(), i).is_some() {
                return Err(Error::DuplicateId(p.paragraph_id()));
            }
        }
        Ok(Self { paragraphs, by_id })
    }

    pub fn get(&self, id: &str) -> Option<&Paragraph> {
        self.by_id.get(id).map(|&i| &self.paragraphs[i])
    }

    pub fn paragraphs(&self) -> &[Paragraph] {
        &self.paragraphs
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    /// Paragraphs of one document in ordinal order.
    pub fn of_document(&self, doc_id: &str) -> Vec<&Paragraph> {
        let mut out: Vec<&Paragraph> = self.paragraphs.iter().filter(|p| p.doc_id == doc_id).collect();
        out.sort_by_key(|p| p.ordinal);
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for p in &self.paragraphs {
            serde_json::to_writer(&mut buf, p)?;
            buf.push(b'\n');
        }
        atomic_write(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut paragraphs = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            paragraphs.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), i + 1)))?,
            );
        }
        Self::new(paragraphs)
    }
}

impl PassageLookup for ParagraphStore {
    fn passage(&self, id: &str) -> Option<&str> {
        self.get(id).map(|p| p.text.as_str())
    }
}
