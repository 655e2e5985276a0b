use super::{DocumentRecord, Paragraph};
use crate::error::{Error, Result};

/// Counts model tokens. The default is whitespace tokenisation; a service
/// backed counter can report subword counts instead.
pub trait TokenCounter {
    /// Token count for each whitespace-delimited word, index-aligned.
    fn count_words(&self, words: &[&str]) -> Result<Vec<usize>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count_words(&self, words: &[&str]) -> Result<Vec<usize>> {
        Ok(vec![1; words.len()])
    }
}

/// Greedy left-to-right packing of a document's words into paragraphs of at
/// most `max_tokens` tokens. Paragraph text is its words joined by single spaces.
pub fn segment_paragraphs(
    doc: &DocumentRecord,
    max_tokens: usize,
    counter: &dyn TokenCounter,
) -> Result<Vec<Paragraph>> {
    if max_tokens == 0 {
        return Err(Error::invalid("max_tokens must be at least 1"));
    }
    let words: Vec<&str> = doc.text.split_whitespace().collect();
    let counts = counter.count_words(&words)?;
    if counts.len() != words.len() {
        return Err(Error::Service(format!(
            "token counter returned {} counts for {} words",
            counts.len(),
            words.len()
        )));
    }

    let mut paragraphs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut current_tokens = 0usize;
    let mut flush = |current: &mut Vec<&str>, tokens: &mut usize| {
        if !current.is_empty() {
            paragraphs.push(Paragraph {
                doc_id: doc.id.clone(),
                ordinal: paragraphs.len(),
                text: current.join(" "),
                token_count: *tokens,
            });
            current.clear();
            *tokens = 0;
        }
    };

    for (word, &n) in words.iter().zip(&counts) {
        if n > max_tokens {
            return Err(Error::invalid(format!(
                "word {word:?} alone spans {n} tokens (max {max_tokens})"
            )));
        }
        if current_tokens + n > max_tokens {
            flush(&mut current, &mut current_tokens);
        }
        current.push(word);
        current_tokens += n;
    }
    flush(&mut current, &mut current_tokens);
    Ok(paragraphs)
}
