//! Parsing phase: number normalization, dependency trees, frame parsing,
//! topic, speech act and intent classification.

pub mod frame;
pub mod intent;
pub mod numbers;
pub mod speech_act;
pub mod topic;
pub mod tree;

use std::collections::BTreeMap;

use crate::dialog::{Frame, IntentId, SlotValue, SpeechAct};
use frame::{frame_parse, InvestmentVerbs};
use intent::{classify_intent, embed, Embeddings, TrainingSet};
use numbers::{normalize_numbers, NormalizationResult};
use speech_act::{classify_speech_act, SpeechActRules};
use topic::{classify_topic, TopicLexicon};
use tree::{parse_dependencies, DependencyNode, DependencyTree};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Loaded models; immutable and shared by every group.
#[derive(Debug, Clone)]
pub struct Analyzer {
    pub topics: TopicLexicon,
    pub speech_acts: SpeechActRules,
    pub embeddings: Embeddings,
    pub trainset: TrainingSet,
    pub verbs: InvestmentVerbs,
    /// Distances above this are not understood.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub normalization: NormalizationResult,
    pub topic: String,
    pub speech_act: SpeechAct,
    pub canonical: String,
    pub slots: BTreeMap<String, SlotValue>,
    pub intent: Option<IntentId>,
    pub distance: Option<f64>,
    pub understood: bool,
    pub mentions: Vec<String>,
    pub mentions_only: bool,
}

/// `@name` tokens, lowercased, without trailing punctuation, in text order
/// and without repeats.
pub fn extract_mentions(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for tok in text.split_whitespace() {
        if let Some(name) = tok.strip_prefix('@') {
            let name = name.trim_end_matches(|c: char| !(c.is_alphanumeric() || c == '_')).to_lowercase();
            if !name.is_empty() && !out.contains(&name) {
                out.push(name);
            }
        }
    }
    out
}

fn strip_mentions(text: &str) -> String {
    text.split_whitespace().filter(|t| !t.starts_with('@')).collect::<Vec<_>>().join(" ")
}

impl Analyzer {
    pub fn analyze(&self, text: &str, context: &Frame) -> Analysis {
        self.analyze_with_tree(text, context, None)
    }

    /// As [`Analyzer::analyze`]; a supplied tree replaces the built-in parser.
    pub fn analyze_with_tree(&self, text: &str, context: &Frame, tree: Option<&DependencyNode>) -> Analysis {
        let mentions = extract_mentions(text);
        let body = strip_mentions(text);
        let mentions_only = !mentions.is_empty() && !body.chars().any(char::is_alphanumeric);

        let normalization = normalize_numbers(&body);
        let parsed = match tree {
            Some(t) => Some(t.clone()),
            None => parse_dependencies(&normalization.converted).ok(),
        };
        let mut frame = context.clone();
        let (canonical, slots) = match parsed {
            Some(root) => {
                let tree = DependencyTree::from_root(&root);
                let fp = frame_parse(&normalization.converted, &body, &tree, &self.verbs, &mut frame);
                (fp.canonical, fp.slots)
            }
            None => (normalization.converted.clone(), BTreeMap::new()),
        };

        let classification = embed(&canonical, &self.embeddings).and_then(|v| classify_intent(&v, &self.trainset).ok());
        let understood = classification.as_ref().is_some_and(|c| c.distance <= self.threshold);

        Analysis {
            topic: classify_topic(&body, &self.topics),
            speech_act: classify_speech_act(&body, &self.speech_acts),
            canonical,
            slots,
            intent: classification.as_ref().map(|c| c.intent.clone()),
            distance: classification.map(|c| c.distance),
            understood,
            mentions,
            mentions_only,
            normalization,
        }
    }
}
