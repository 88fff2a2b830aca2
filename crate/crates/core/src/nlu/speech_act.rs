//! Rule-table speech act classifier. Rules are tried in file order and the
//! first match wins; unmatched text falls back to QUERY for interrogatives
//! and INFORM otherwise.

use regex::{Regex, RegexBuilder};
use serde::Deserialize;

use crate::dialog::{SpeechAct, SpeechActRegistry};
use crate::error::ConfigError;

#[derive(Debug, Deserialize)]
struct RuleDef {
    act: String,
    pattern: String,
}

#[derive(Debug, Deserialize)]
struct RuleFile {
    rules: Vec<RuleDef>,
    #[serde(default)]
    interrogatives: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SpeechActRules {
    rules: Vec<(SpeechAct, Regex)>,
    interrogatives: Vec<String>,
}

impl SpeechActRules {
    pub fn from_json(src: &str, registry: &SpeechActRegistry) -> Result<Self, ConfigError> {
        let file: RuleFile =
            serde_json::from_str(src).map_err(|e| ConfigError::Parse { line: e.line(), message: e.to_string() })?;
        let mut rules = Vec::with_capacity(file.rules.len());
        for (i, def) in file.rules.into_iter().enumerate() {
            let act = registry
                .get(&def.act)
                .ok_or_else(|| ConfigError::UnknownReference(format!("speech act {}", def.act)))?;
            let re = RegexBuilder::new(&def.pattern)
                .case_insensitive(true)
                .build()
                .map_err(|e| ConfigError::Invalid(format!("rule {i} ({}): {e}", def.act)))?;
            rules.push((act, re));
        }
        for fallback in ["QUERY", "INFORM"] {
            if !registry.contains(fallback) {
                return Err(ConfigError::UnknownReference(format!("speech act {fallback}")));
            }
        }
        Ok(SpeechActRules {
            rules,
            interrogatives: file.interrogatives.into_iter().map(|w| w.to_lowercase()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    fn interrogative(&self, text: &str) -> bool {
        let t = text.trim();
        if t.ends_with('?') {
            return true;
        }
        let first = t.split(|c: char| !c.is_alphanumeric()).find(|w| !w.is_empty()).map(str::to_lowercase);
        first.is_some_and(|w| self.interrogatives.contains(&w))
    }
}

pub fn classify_speech_act(text: &str, rules: &SpeechActRules) -> SpeechAct {
    let text = text.trim();
    if let Some((act, _)) = rules.rules.iter().find(|(_, re)| re.is_match(text)) {
        return act.clone();
    }
    if rules.interrogative(text) {
        SpeechAct::new("QUERY")
    } else {
        SpeechAct::new("INFORM")
    }
}
