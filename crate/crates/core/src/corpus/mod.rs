//! Claims, documents and the text units derived from them.
//!
//! Records are immutable once loaded. Word lists used by the analyzer, the
//! sentence splitter and the claim categoriser ship as versioned data files
//! under `data/` and are compiled into the binary.

mod categorize;
mod load;
mod segment;
mod sentences;
mod store;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use categorize::{categorize_claim, Categorization, EntitySpan, EntityTagger, MediaKeywords};
pub use load::{
    load_claims, load_documents, save_claims, save_documents, ClaimFormat,
};
pub use segment::{segment_paragraphs, TokenCounter, WhitespaceCounter};
pub use sentences::{split_sentences, SentenceSplitter};
pub use store::{ParagraphStore, PassageLookup};

/// Binary veracity label. Nuanced upstream labels are rejected at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    False,
    True,
}

impl Label {
    /// Class index used by the classifiers: `False` is 0, `True` is 1.
    pub fn class_index(self) -> usize {
        match self {
            Label::False => 0,
            Label::True => 1,
        }
    }

    pub fn from_class_index(idx: usize) -> Option<Label> {
        match idx {
            0 => Some(Label::False),
            1 => Some(Label::True),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::False => "False",
            Label::True => "True",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "False" => Ok(Label::False),
            "True" => Ok(Label::True),
            other => Err(format!("label must be \"False\" or \"True\", got {other:?}")),
        }
    }
}

/// Entity kinds kept for the named-entity claim category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityKind {
    Person,
    Organization,
    Gpe,
    Facility,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Person => "PERSON",
            EntityKind::Organization => "ORGANIZATION",
            EntityKind::Gpe => "GPE",
            EntityKind::Facility => "FACILITY",
        }
    }

    /// Parses a tagger label; anything outside the four kept kinds is `None`.
    pub fn parse(s: &str) -> Option<EntityKind> {
        match s.to_ascii_uppercase().as_str() {
            "PERSON" => Some(EntityKind::Person),
            "ORGANIZATION" | "ORG" => Some(EntityKind::Organization),
            "GPE" => Some(EntityKind::Gpe),
            "FACILITY" | "FAC" => Some(EntityKind::Facility),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClaimType {
    Multimodal,
    SocialMedia,
    Question,
    Numerical,
    NamedEntity(EntityKind),
}

impl fmt::Display for ClaimType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClaimType::Multimodal => f.write_str("Multimodal"),
            ClaimType::SocialMedia => f.write_str("SocialMedia"),
            ClaimType::Question => f.write_str("Question"),
            ClaimType::Numerical => f.write_str("Numerical"),
            ClaimType::NamedEntity(kind) => write!(f, "NamedEntity:{}", kind.as_str()),
        }
    }
}

impl FromStr for ClaimType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(kind) = s.strip_prefix("NamedEntity:") {
            return EntityKind::parse(kind)
                .map(ClaimType::NamedEntity)
                .ok_or_else(|| format!("unknown entity kind {kind:?}"));
        }
        match s {
            "Multimodal" => Ok(ClaimType::Multimodal),
            "SocialMedia" => Ok(ClaimType::SocialMedia),
            "Question" => Ok(ClaimType::Question),
            "Numerical" => Ok(ClaimType::Numerical),
            other => Err(format!("unknown claim type {other:?}")),
        }
    }
}

impl Serialize for ClaimType {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClaimType {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub claim_source: String,
    pub origin_dataset: String,
    #[serde(default)]
    pub types: BTreeSet<ClaimType>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub url: String,
    pub domain: String,
    pub text: String,
}

/// A contiguous run of at most `max_tokens` tokens from one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    pub token_count: usize,
}

impl Paragraph {
    /// Identifier used by the index: `<doc_id>#<ordinal>`.
    pub fn paragraph_id(&self) -> String {
        format!("{}#{}", self.doc_id, self.ordinal)
    }
}

/// Recovers the document id from a paragraph id produced by [`Paragraph::paragraph_id`].
pub fn doc_id_of(paragraph_id: &str) -> &str {
    match paragraph_id.rsplit_once('#') {
        Some((doc, ordinal)) if ordinal.bytes().all(|b| b.is_ascii_digit()) && !ordinal.is_empty() => doc,
        _ => paragraph_id,
    }
}

/// Parses a versioned word-list data file: `#` lines are comments, blank
/// lines are skipped, entries are lowercased.
pub(crate) fn parse_word_list(raw: &str) -> Vec<String> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Reads the `# version: N` header of a data file.
pub fn data_file_version(raw: &str) -> Option<u32> {
    raw.lines()
        .find_map(|l| l.trim().strip_prefix("# version:"))
        .and_then(|v| v.trim().parse().ok())
}

pub(crate) const STOPWORDS_EN: &str = include_str!("../../data/stopwords_en.txt");
pub(crate) const ABBREVIATIONS: &str = include_str!("../../data/abbreviations.txt");
pub(crate) const INTERROGATIVES: &str = include_str!("../../data/interrogatives.txt");
pub(crate) const MEDIA_KEYWORDS: &str = include_str!("../../data/media_keywords.txt");
pub(crate) const NUMBER_WORDS: &str = include_str!("../../data/number_words.txt");
