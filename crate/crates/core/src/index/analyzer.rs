use std::collections::HashSet;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::corpus::{parse_word_list, STOPWORDS_EN};
use crate::error::{Error, Result};

/// Text analysis settings shared by indexing and querying.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub lowercase: bool,
    pub remove_stopwords: bool,
    pub stem: bool,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            remove_stopwords: true,
            stem: false,
        }
    }
}

impl AnalyzerConfig {
    /// Stable identifier persisted in index headers.
    pub fn id(&self) -> String {
        format!(
            "alnum{}{}{}/v1",
            if self.lowercase { "+lc" } else { "" },
            if self.remove_stopwords { "+stop" } else { "" },
            if self.stem { "+sstem" } else { "" },
        )
    }

    pub fn from_id(id: &str) -> Result<Self> {
        let body = id
            .strip_suffix("/v1")
            .and_then(|b| b.strip_prefix("alnum"))
            .ok_or_else(|| Error::Format(format!("unknown analyzer id {id:?}")))?;
        let mut cfg = AnalyzerConfig {
            lowercase: false,
            remove_stopwords: false,
            stem: false,
        };
        for part in body.split('+').filter(|p| !p.is_empty()) {
            match part {
                "lc" => cfg.lowercase = true,
                "stop" => cfg.remove_stopwords = true,
                "sstem" => cfg.stem = true,
                other => return Err(Error::Format(format!("unknown analyzer flag {other:?}"))),
            }
        }
        Ok(cfg)
    }
}

/// Splits text into maximal alphanumeric runs, then applies the configured filters.
#[derive(Debug, Clone)]
pub struct Analyzer {
    config: AnalyzerConfig,
    stopwords: Arc<HashSet<String>>,
}

pub(crate) fn default_stopwords() -> Arc<HashSet<String>> {
    static SW: OnceLock<Arc<HashSet<String>>> = OnceLock::new();
    SW.get_or_init(|| Arc::new(parse_word_list(STOPWORDS_EN).into_iter().collect()))
        .clone()
}

impl Default for Analyzer {
    fn default() -> Self {
        Self::new(AnalyzerConfig::default())
    }
}

impl Analyzer {
    pub fn new(config: AnalyzerConfig) -> Self {
        Self {
            config,
            stopwords: default_stopwords(),
        }
    }

    pub fn config(&self) -> AnalyzerConfig {
        self.config
    }

    pub fn is_stopword(&self, term: &str) -> bool {
        self.stopwords.contains(&term.to_lowercase())
    }

    pub fn analyze(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| {
                if self.config.lowercase {
                    t.to_lowercase()
                } else {
                    t.to_string()
                }
            })
            .filter(|t| !(self.config.remove_stopwords && self.is_stopword(t)))
            .map(|t| if self.config.stem { s_stem(&t) } else { t })
            .collect()
    }
}

/// Plural-only "S" stemmer.
fn s_stem(word: &str) -> String {
    let len = word.len();
    if len > 3 && word.ends_with("ies") && !word.ends_with("eies") && !word.ends_with("aies") {
        return format!("{}y", &word[..len - 3]);
    }
    if len > 3 && word.ends_with("es") && !word.ends_with("aes") && !word.ends_with("ees") && !word.ends_with("oes") {
        return word[..len - 1].to_string();
    }
    if len > 2 && word.ends_with('s') && !word.ends_with("us") && !word.ends_with("ss") {
        return word[..len - 1].to_string();
    }
    word.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_pipeline() {
        let a = Analyzer::default();
        assert_eq!(
            a.analyze("The COVID-19 vaccine is safe, and it WORKS."),
            vec!["covid", "19", "vaccine", "safe", "works"]
        );
    }

    #[test]
    fn stemming_flag() {
        let a = Analyzer::new(AnalyzerConfig { stem: true, ..Default::default() });
        assert_eq!(a.analyze("vaccines studies virus glass"), vec!["vaccine", "study", "virus", "glass"]);
    }

    #[test]
    fn id_round_trip() {
        for cfg in [
            AnalyzerConfig::default(),
            AnalyzerConfig { lowercase: false, remove_stopwords: false, stem: true },
        ] {
            assert_eq!(AnalyzerConfig::from_id(&cfg.id()).unwrap(), cfg);
        }
        assert!(AnalyzerConfig::from_id("porter/v9").is_err());
    }
}
