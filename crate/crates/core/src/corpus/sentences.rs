use std::collections::HashSet;
use std::sync::OnceLock;

use super::{parse_word_list, ABBREVIATIONS};

/// Rule-based sentence splitter: a sentence ends at `.`, `!` or `?` (plus any
/// trailing closing quotes or brackets) followed by whitespace, unless the
/// word carrying the period is on the abbreviation guard list.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    abbreviations: HashSet<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        Self::with_abbreviations(parse_word_list(ABBREVIATIONS))
    }
}

impl SentenceSplitter {
    pub fn with_abbreviations<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            abbreviations: abbreviations
                .into_iter()
                .map(|a| a.as_ref().to_lowercase())
                .collect(),
        }
    }

    pub fn split(&self, text: &str) -> Vec<String> {
        let mut sentences = Vec::new();
        let mut start = 0usize;
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut i = 0usize;
        while i < chars.len() {
            let (_, c) = chars[i];
            if matches!(c, '.' | '!' | '?') {
                // absorb runs of terminals and closing punctuation
                let mut j = i + 1;
                while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?' | '"' | '\'' | ')' | ']' | '”' | '’') {
                    j += 1;
                }
                let at_boundary = j == chars.len() || chars[j].1.is_whitespace();
                if at_boundary && !(c == '.' && self.is_guarded(text, start, chars[i].0)) {
                    let end = if j == chars.len() { text.len() } else { chars[j].0 };
                    push_trimmed(&mut sentences, &text[start..end]);
                    start = end;
                }
                i = j;
            } else {
                i += 1;
            }
        }
        push_trimmed(&mut sentences, &text[start..]);
        sentences
    }

    /// True when the word ending at the period at byte `dot` is an abbreviation.
    fn is_guarded(&self, text: &str, start: usize, dot: usize) -> bool {
        let before = &text[start..dot];
        let word_start = before
            .rfind(char::is_whitespace)
            .map(|p| p + before[p..].chars().next().map_or(1, char::len_utf8))
            .unwrap_or(0);
        let word = before[word_start..].trim_start_matches(['(', '"', '\'', '“', '‘']);
        if word.is_empty() {
            return false;
        }
        let candidate = format!("{}.", word.to_lowercase());
        self.abbreviations.contains(&candidate)
    }
}

fn push_trimmed(out: &mut Vec<String>, piece: &str) {
    let t = piece.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

/// Splits with the default abbreviation list.
pub fn split_sentences(text: &str) -> Vec<String> {
    static SPLITTER: OnceLock<SentenceSplitter> = OnceLock::new();
    SPLITTER.get_or_init(SentenceSplitter::default).split(text)
}
