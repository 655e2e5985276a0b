use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{
    parse_word_list, ClaimRecord, ClaimType, EntityKind, INTERROGATIVES, MEDIA_KEYWORDS,
    NUMBER_WORDS,
};
use crate::error::{Error, Result};

/// An entity mention reported by a tagger. `kind` is the tagger's raw label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub kind: String,
}

pub trait EntityTagger {
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Categorization {
    pub types: BTreeSet<ClaimType>,
    /// Set when the entity tagger failed and named-entity tags are missing.
    pub partial: bool,
}

/// Keyword tables for the media categories, parsed from `category: phrase` lines.
#[derive(Debug, Clone)]
pub struct MediaKeywords {
    multimodal: Regex,
    social_media: Regex,
}

impl MediaKeywords {
    pub fn parse(raw: &str) -> Result<Self> {
        let mut multimodal = Vec::new();
        let mut social = Vec::new();
        for line in raw.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (cat, phrase) = line
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("keyword line without category: {line:?}")))?;
            let phrase = regex::escape(&phrase.trim().to_lowercase()).replace(' ', r"\s+");
            match cat.trim() {
                "multimodal" => multimodal.push(phrase),
                "social_media" => social.push(phrase),
                other => return Err(Error::Format(format!("unknown keyword category {other:?}"))),
            }
        }
        let build = |alts: &[String]| {
            let pattern = if alts.is_empty() {
                // matches nothing
                r"[^\s\S]".to_string()
            } else {
                format!(r"(?i)\b(?:{})s?\b", alts.join("|"))
            };
            Regex::new(&pattern).map_err(|e| Error::Format(e.to_string()))
        };
        Ok(Self {
            multimodal: build(&multimodal)?,
            social_media: build(&social)?,
        })
    }
}

struct Lexicons {
    interrogatives: HashSet<String>,
    number_words: HashSet<String>,
    media: MediaKeywords,
    numeric_token: Regex,
}

fn lexicons() -> &'static Lexicons {
    static LEX: OnceLock<Lexicons> = OnceLock::new();
    LEX.get_or_init(|| Lexicons {
        interrogatives: parse_word_list(INTERROGATIVES).into_iter().collect(),
        number_words: parse_word_list(NUMBER_WORDS).into_iter().collect(),
        media: MediaKeywords::parse(MEDIA_KEYWORDS).expect("bundled keyword file parses"),
        // 2019, 1,000, 3.5, 40%, $5, 1990s, 21st, 5k
        numeric_token: Regex::new(r"^[$£€]?\d+(?:[.,]\d+)*(?:%|s|st|nd|rd|th|k|m|bn)?$").unwrap(),
    })
}

fn strip_punct(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric() && !matches!(c, '%' | '$' | '£' | '€'))
}

fn is_question(text: &str, lex: &Lexicons) -> bool {
    if text.contains('?') {
        return true;
    }
    text.split_whitespace()
        .next()
        .map(|w| lex.interrogatives.contains(&strip_punct(w).to_lowercase()))
        .unwrap_or(false)
}

fn is_numerical(text: &str, lex: &Lexicons) -> bool {
    text.split_whitespace().map(strip_punct).any(|tok| {
        let lower = tok.to_lowercase();
        lex.numeric_token.is_match(&lower) || lex.number_words.contains(&lower)
    })
}

/// Assigns category tags to a claim. A tagger failure degrades to a partial
/// result without named-entity tags rather than an error.
pub fn categorize_claim(claim: &ClaimRecord, ner: Option<&dyn EntityTagger>) -> Categorization {
    let lex = lexicons();
    let text = claim.text.as_str();
    let mut types = BTreeSet::new();
    if is_question(text, lex) {
        types.insert(ClaimType::Question);
    }
    if is_numerical(text, lex) {
        types.insert(ClaimType::Numerical);
    }
    if lex.media.multimodal.is_match(text) {
        types.insert(ClaimType::Multimodal);
    }
    if lex.media.social_media.is_match(text) {
        types.insert(ClaimType::SocialMedia);
    }
    let mut partial = false;
    if let Some(tagger) = ner {
        match tagger.tag(text) {
            Ok(spans) => types.extend(
                spans
                    .iter()
                    .filter_map(|s| EntityKind::parse(&s.kind))
                    .map(ClaimType::NamedEntity),
            ),
            Err(_) => partial = true,
        }
    }
    Categorization { types, partial }
}
