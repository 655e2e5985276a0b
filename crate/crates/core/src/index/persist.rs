//! Single-file index layout (all integers little-endian):
//!
//! ```text
//! magic "VRIX" | version u32 | analyzer id (u32 len + utf8) | doc_count u64 | avg_doc_length f64
//! doc table:   doc_count × (id: u32 len + utf8, length u32)
//! term dict:   term_count u64, term_count × (term: u32 len + utf8, offset u64, count u32)
//! postings:    total u64, total × (doc u32, tf u32)
//! ```

use std::path::Path;

use super::{Analyzer, AnalyzerConfig, InvertedIndex, Posting};
use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, ByteReader, ByteWriter};

const MAGIC: &[u8; 4] = b"VRIX";
pub const INDEX_FORMAT_VERSION: u32 = 1;

pub fn encode_index(index: &InvertedIndex) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.bytes(MAGIC);
    w.u32(INDEX_FORMAT_VERSION);
    w.str(&index.analyzer().config().id());
    w.u64(index.doc_count() as u64);
    w.f64(index.avg_doc_length());
    for (id, &len) in index.ids().iter().zip(index.doc_lengths()) {
        w.str(id);
        w.u32(len);
    }
    w.u64(index.terms().len() as u64);
    let mut offset = 0u64;
    for (term, plist) in index.terms().iter().zip(index.raw_postings()) {
        w.str(term);
        w.u64(offset);
        w.u32(plist.len() as u32);
        offset += plist.len() as u64;
    }
    w.u64(offset);
    for plist in index.raw_postings() {
        for p in plist {
            w.u32(p.doc);
            w.u32(p.tf);
        }
    }
    w.into_inner()
}

pub fn decode_index(bytes: &[u8]) -> Result<InvertedIndex> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not an index file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != INDEX_FORMAT_VERSION {
        return Err(Error::UnknownVersion {
            found: version,
            expected: INDEX_FORMAT_VERSION,
        });
    }
    let analyzer = Analyzer::new(AnalyzerConfig::from_id(&r.str()?)?);
    let doc_count = r.u64()? as usize;
    let stored_avg = r.f64()?;
    let mut ids = Vec::with_capacity(doc_count.min(1 << 20));
    let mut lengths = Vec::with_capacity(doc_count.min(1 << 20));
    for _ in 0..doc_count {
        ids.push(r.str()?);
        lengths.push(r.u32()?);
    }
    let term_count = r.u64()? as usize;
    let mut dict = Vec::with_capacity(term_count.min(1 << 20));
    for _ in 0..term_count {
        let term = r.str()?;
        let offset = r.u64()?;
        let count = r.u32()?;
        dict.push((term, offset, count));
    }
    let total = r.u64()?;
    let mut flat = Vec::with_capacity((total as usize).min(1 << 24));
    for _ in 0..total {
        let doc = r.u32()?;
        let tf = r.u32()?;
        if doc as usize >= doc_count {
            return Err(Error::Format(format!("posting references doc {doc} of {doc_count}")));
        }
        flat.push(Posting { doc, tf });
    }
    r.finish()?;

    let mut terms = Vec::with_capacity(dict.len());
    let mut postings = Vec::with_capacity(dict.len());
    for (term, offset, count) in dict {
        let start = offset as usize;
        let end = start + count as usize;
        let slice = flat
            .get(start..end)
            .ok_or_else(|| Error::Format(format!("postings for {term:?} out of range")))?;
        terms.push(term);
        postings.push(slice.to_vec());
    }
    let index = InvertedIndex::assemble(analyzer, ids, lengths, terms, postings);
    if (index.avg_doc_length() - stored_avg).abs() > 1e-9 * stored_avg.abs().max(1.0) {
        return Err(Error::Format("average document length does not match doc table".into()));
    }
    Ok(index)
}

pub fn write_index(index: &InvertedIndex, path: &Path) -> Result<()> {
    atomic_write(path, &encode_index(index))
}

pub fn read_index(path: &Path) -> Result<InvertedIndex> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_index(&bytes)
}
