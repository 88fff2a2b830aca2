//! Dictionary topic classifier.

use serde::Deserialize;

use crate::error::ConfigError;

#[derive(Debug, Clone, Deserialize)]
pub struct TopicEntry {
    pub label: String,
    pub terms: Vec<String>,
}

/// Specific topics (e.g. cdb, savings) roll up into `general`; text with no
/// dictionary hit is `fallback`.
#[derive(Debug, Clone, Deserialize)]
pub struct TopicLexicon {
    pub general: TopicEntry,
    pub specific: Vec<TopicEntry>,
    #[serde(default = "default_fallback")]
    pub fallback: String,
}

fn default_fallback() -> String {
    "other".to_string()
}

pub(crate) fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '@' || c == '#'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn hits(entry: &TopicEntry, tokens: &[String]) -> bool {
    entry.terms.iter().any(|term| {
        let phrase = words(term);
        !phrase.is_empty() && tokens.windows(phrase.len()).any(|w| w == phrase.as_slice())
    })
}

impl TopicLexicon {
    pub fn from_json(src: &str) -> Result<Self, ConfigError> {
        let lex: TopicLexicon =
            serde_json::from_str(src).map_err(|e| ConfigError::Parse { line: e.line(), message: e.to_string() })?;
        let mut seen = std::collections::BTreeSet::new();
        for e in std::iter::once(&lex.general).chain(&lex.specific) {
            if !seen.insert(e.label.as_str()) {
                return Err(ConfigError::Duplicate(format!("topic {}", e.label)));
            }
        }
        Ok(lex)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.general.label.as_str())
            .chain(self.specific.iter().map(|e| e.label.as_str()))
            .chain(std::iter::once(self.fallback.as_str()))
    }
}

/// Most specific matching label. Two or more specific hits collapse to the
/// general label since the utterance spans several options.
pub fn classify_topic(text: &str, lexicon: &TopicLexicon) -> String {
    let tokens = words(text);
    let specific: Vec<&TopicEntry> = lexicon.specific.iter().filter(|e| hits(e, &tokens)).collect();
    match specific.as_slice() {
        [one] => one.label.clone(),
        [] if !hits(&lexicon.general, &tokens) => lexicon.fallback.clone(),
        _ => lexicon.general.label.clone(),
    }
}
