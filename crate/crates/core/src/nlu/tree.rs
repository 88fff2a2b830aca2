//! Dependency trees: the nested node type, the JSON exchange format with
//! `"<token> <POS> <relation>"` keys, and a small rule-based parser for short
//! finance utterances.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::numbers::{serialize_numbers, NormalizationResult};
use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyNode {
    pub token: String,
    pub pos: String,
    pub relation: String,
    pub children: Vec<DependencyNode>,
}

impl DependencyNode {
    pub fn leaf(token: &str, pos: &str, relation: &str) -> Self {
        DependencyNode {
            token: token.to_string(),
            pos: pos.to_string(),
            relation: relation.to_string(),
            children: Vec::new(),
        }
    }

    pub fn with(mut self, child: DependencyNode) -> Self {
        self.children.push(child);
        self
    }

    pub fn key(&self) -> String {
        format!("{} {} {}", self.token, self.pos, self.relation)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(DependencyNode::node_count).sum::<usize>()
    }

    /// `{"<key>": {children...}}`
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert(self.key(), self.children_json());
        Value::Object(map)
    }

    fn children_json(&self) -> Value {
        let mut map = Map::new();
        for c in &self.children {
            map.insert(c.key(), c.children_json());
        }
        Value::Object(map)
    }

    /// Reads a tree object holding exactly one root key.
    pub fn from_json(value: &Value) -> Result<Self, ConfigError> {
        let obj = value.as_object().ok_or_else(|| ConfigError::Invalid("tree must be an object".into()))?;
        if obj.len() != 1 {
            return Err(ConfigError::Invalid(format!("tree must have exactly one root, found {}", obj.len())));
        }
        let (k, v) = obj.iter().next().unwrap();
        Self::from_entry(k, v)
    }

    fn from_entry(key: &str, value: &Value) -> Result<Self, ConfigError> {
        let mut parts = key.rsplitn(3, ' ');
        let relation = parts.next().unwrap_or_default();
        let pos = parts.next();
        let token = parts.next();
        let (Some(pos), Some(token)) = (pos, token) else {
            return Err(ConfigError::Invalid(format!("malformed tree key \"{key}\"")));
        };
        let children = value
            .as_object()
            .ok_or_else(|| ConfigError::Invalid(format!("children of \"{key}\" must be an object")))?
            .iter()
            .map(|(k, v)| Self::from_entry(k, v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DependencyNode { token: token.to_string(), pos: pos.to_string(), relation: relation.to_string(), children })
    }
}

/// Index of a node inside a [`DependencyTree`].
pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub token: String,
    pub pos: String,
    pub relation: String,
    pub parent: Option<NodeId>,
}

impl TreeNode {
    pub fn is_verb(&self) -> bool {
        self.pos == "VERB" || self.pos.starts_with("VB")
    }

    pub fn is_number(&self) -> bool {
        self.pos == "NUM" || self.pos == "CD" || self.token.parse::<f64>().is_ok()
    }

    pub fn is_adposition(&self) -> bool {
        matches!(self.pos.as_str(), "ADP" | "IN" | "TO") || matches!(self.relation.as_str(), "prep" | "case")
    }
}

/// Flattened view of a dependency tree with parent links, in depth-first
/// pre-order (document order for trees the parser produces).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyTree {
    nodes: Vec<TreeNode>,
}

impl DependencyTree {
    pub fn from_root(root: &DependencyNode) -> Self {
        fn walk(n: &DependencyNode, parent: Option<NodeId>, out: &mut Vec<TreeNode>) {
            let id = out.len();
            out.push(TreeNode { token: n.token.clone(), pos: n.pos.clone(), relation: n.relation.clone(), parent });
            for c in &n.children {
                walk(c, Some(id), out);
            }
        }
        let mut nodes = Vec::new();
        walk(root, None, &mut nodes);
        DependencyTree { nodes }
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        0..self.nodes.len()
    }

    pub fn number_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids().filter(|&i| self.nodes[i].is_number())
    }

    pub fn has_verb(&self) -> bool {
        self.nodes.iter().any(TreeNode::is_verb)
    }
}

/// The JSON document exchanged with external parsers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub original: String,
    pub start_pos: Vec<usize>,
    pub end_pos: Vec<usize>,
    #[serde(serialize_with = "serialize_numbers")]
    pub digits: Vec<f64>,
    pub converted: String,
    pub tree: Value,
}

impl TreeDocument {
    pub fn new(norm: &NormalizationResult, root: &DependencyNode) -> Self {
        TreeDocument {
            original: norm.original.clone(),
            start_pos: norm.start_pos.clone(),
            end_pos: norm.end_pos.clone(),
            digits: norm.digits.clone(),
            converted: norm.converted.clone(),
            tree: root.to_json(),
        }
    }

    pub fn from_json(src: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(src).map_err(|e| ConfigError::Parse { line: e.line(), message: e.to_string() })
    }

    pub fn root(&self) -> Result<DependencyNode, ConfigError> {
        DependencyNode::from_json(&self.tree)
    }

    pub fn normalization(&self) -> NormalizationResult {
        NormalizationResult {
            original: self.original.clone(),
            converted: self.converted.clone(),
            digits: self.digits.clone(),
            start_pos: self.start_pos.clone(),
            end_pos: self.end_pos.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse empty text")]
pub struct EmptyText;

const VERBS: &[&str] = &[
    "invest",
    "apply",
    "put",
    "simulate",
    "want",
    "like",
    "keep",
    "wait",
    "move",
    "go",
    "know",
    "have",
    "launch",
    "tell",
    "show",
    "help",
    "start",
    "click",
    "lend",
    "find",
    "found",
    "compute",
    "calculate",
    "get",
    "make",
    "save",
    "buy",
    "sell",
    "open",
    "think",
    "need",
    "say",
    "choose",
    "do",
    "leave",
    "follow",
    "return",
    "earn",
    "pay",
    "understand",
];
const AUXILIARIES: &[&str] = &[
    "would", "could", "can", "will", "should", "may", "might", "must", "shall", "is", "are", "was", "were", "be",
    "been", "am", "does", "did",
];
const ADPOSITIONS: &[&str] = &[
    "in", "for", "of", "to", "at", "on", "with", "about", "from", "by", "into", "during", "after", "before", "per",
    "within",
];
const PRONOUNS: &[&str] = &[
    "i", "you", "he", "she", "we", "they", "it", "me", "my", "your", "our", "us", "them", "someone", "anyone", "what",
    "which", "who", "one",
];
const DETERMINERS: &[&str] = &["a", "an", "the", "this", "that", "these", "those", "some", "any"];
const INTERJECTIONS: &[&str] = &["hello", "hi", "hey", "thanks", "bye", "goodbye", "ok", "okay", "yes", "no", "sure"];
const CONJUNCTIONS: &[&str] = &["and", "or", "but", "if", "so", "then"];
const ADVERBS: &[&str] = &["how", "when", "where", "why", "not", "very", "much", "nowadays", "now"];

fn tag(token: &str) -> &'static str {
    let t = token.to_lowercase();
    let t = t.as_str();
    if token.parse::<f64>().is_ok() {
        "NUM"
    } else if token.starts_with('@') {
        "PROPN"
    } else if token.chars().all(|c| !c.is_alphanumeric()) {
        if token.contains('$') {
            "SYM"
        } else {
            "PUNCT"
        }
    } else if token.ends_with('$') || t == "usd" || t == "brl" {
        "SYM"
    } else if AUXILIARIES.contains(&t) {
        "AUX"
    } else if VERBS.contains(&t) {
        "VERB"
    } else if ADPOSITIONS.contains(&t) {
        "ADP"
    } else if PRONOUNS.contains(&t) {
        "PRON"
    } else if DETERMINERS.contains(&t) {
        "DET"
    } else if INTERJECTIONS.contains(&t) {
        "INTJ"
    } else if CONJUNCTIONS.contains(&t) {
        "CCONJ"
    } else if ADVERBS.contains(&t) {
        "ADV"
    } else {
        "NOUN"
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    static TOKEN: OnceLock<Regex> = OnceLock::new();
    let re = TOKEN
        .get_or_init(|| Regex::new(r"[A-Za-z]+\$|[#@][\w.]+|\d+(?:\.\d+)?|[^\W\d_]+(?:'[^\W\d_]+)?|[^\w\s]").unwrap());
    re.find_iter(text).map(|m| m.as_str().to_string()).collect()
}

/// Rule-based dependency parser for short utterances.
///
/// Verbs head the clause (the first verb is the root, later verbs hang off the
/// verb before them). A number is attached to an immediately following noun,
/// otherwise to the nearest preceding verb. Nouns right after an adposition
/// are its objects; adpositions attach to the nearest preceding verb.
/// Verbless fragments are rooted at the first noun or free-standing number.
pub fn parse_dependencies(text: &str) -> Result<DependencyNode, EmptyText> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(EmptyText);
    }
    let tags: Vec<&str> = tokens.iter().map(|t| tag(t)).collect();
    let n = tokens.len();
    let is_noun = |i: usize| tags[i] == "NOUN" || tags[i] == "PROPN";

    let verbs: Vec<usize> = (0..n).filter(|&i| tags[i] == "VERB").collect();
    let root = match verbs.first() {
        Some(&v) => v,
        None => (0..n)
            .find(|&i| is_noun(i) || (tags[i] == "NUM" && !(i + 1 < n && is_noun(i + 1))))
            .or_else(|| (0..n).find(|&i| tags[i] != "PUNCT"))
            .unwrap_or(0),
    };

    let prev_verb = |i: usize| verbs.iter().rev().find(|&&v| v < i).copied();
    let next_verb = |i: usize| verbs.iter().find(|&&v| v > i).copied();

    let mut head: Vec<Option<usize>> = vec![None; n];
    let mut rel: Vec<&str> = vec!["dep"; n];
    rel[root] = "ROOT";
    for i in 0..n {
        if i == root {
            continue;
        }
        let (h, r) = match tags[i] {
            "VERB" => (prev_verb(i).unwrap_or(root), "xcomp"),
            "NUM" => {
                if i + 1 < n && is_noun(i + 1) {
                    (i + 1, "nummod")
                } else {
                    (prev_verb(i).unwrap_or(root), "dobj")
                }
            }
            "NOUN" | "PROPN" => {
                // Object of the closest adposition to the left, skipping
                // determiners and number modifiers.
                let mut j = i;
                let mut obj_of = None;
                while j > 0 {
                    j -= 1;
                    match tags[j] {
                        "DET" | "NUM" | "SYM" => continue,
                        "ADP" => obj_of = Some(j),
                        _ => {}
                    }
                    break;
                }
                match obj_of {
                    Some(a) if a != root => (a, "pobj"),
                    _ => (prev_verb(i).unwrap_or(root), "dobj"),
                }
            }
            "ADP" => match prev_verb(i) {
                Some(v) => (v, "prep"),
                None => {
                    let obj = (i + 1..n).find(|&j| is_noun(j) || tags[j] == "NUM");
                    match obj {
                        Some(o) if o == root => (root, "case"),
                        _ => (root, "prep"),
                    }
                }
            },
            "SYM" => match (i + 1 < n && tags[i + 1] == "NUM").then_some(i + 1) {
                Some(num) => (num, "dep"),
                None => (root, "dep"),
            },
            "DET" => match (i + 1..n).find(|&j| is_noun(j)) {
                Some(nn) if nn != i => (nn, "det"),
                _ => (root, "det"),
            },
            "AUX" => (next_verb(i).or(prev_verb(i)).unwrap_or(root), "aux"),
            "PRON" => (next_verb(i).or(prev_verb(i)).unwrap_or(root), "nsubj"),
            "PUNCT" => (root, "punct"),
            "CCONJ" => (root, "cc"),
            "ADV" => (next_verb(i).or(prev_verb(i)).unwrap_or(root), "advmod"),
            _ => (root, "dep"),
        };
        head[i] = Some(h);
        rel[i] = r;
    }

    // Guard against cycles: any node whose head chain does not reach the root
    // is reattached to it.
    for i in 0..n {
        let mut seen = 0;
        let mut cur = i;
        while let Some(h) = head[cur] {
            cur = h;
            seen += 1;
            if seen > n {
                break;
            }
        }
        if cur != root {
            head[i] = Some(root);
        }
    }

    fn build(i: usize, tokens: &[String], tags: &[&str], rel: &[&str], head: &[Option<usize>]) -> DependencyNode {
        DependencyNode {
            token: tokens[i].clone(),
            pos: tags[i].to_string(),
            relation: rel[i].to_string(),
            children: (0..tokens.len())
                .filter(|&j| head[j] == Some(i))
                .map(|j| build(j, tokens, tags, rel, head))
                .collect(),
        }
    }
    Ok(build(root, &tokens, &tags, &rel, &head))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) const REFERENCE_DOC: &str = r#"{ "original": "I would like to invest 10 thousands in 40 months",
  "start_pos": [23, 32],
  "end_pos": [27, 33],
  "digits": [10000, 40],
  "converted": "I would like to invest 10000 in 40 months",
  "tree": {
    "like VERB ROOT": {
        "I PRON nsubj": {},
        "would MD aux":{
            "invest VERB xcomp":{
                 "to TO aux": {},
                 "10000 NUM dobj": {},
                 "in IN prep": {
                      "months NOUN pobj":{
                          "40 NUM num": {}}}}}}}}"#;

    #[test]
    fn ingests_wire_document_in_key_order() {
        let doc = TreeDocument::from_json(REFERENCE_DOC).unwrap();
        let root = doc.root().unwrap();
        assert_eq!(root.key(), "like VERB ROOT");
        assert_eq!(root.children[0].key(), "I PRON nsubj");
        assert_eq!(root.node_count(), 9);
        let tree = DependencyTree::from_root(&root);
        let tokens: Vec<&str> = tree.ids().map(|i| tree.node(i).token.as_str()).collect();
        assert_eq!(tokens, ["like", "I", "would", "invest", "to", "10000", "in", "months", "40"]);
        assert_eq!(doc.digits, vec![10000.0, 40.0]);
    }

    #[test]
    fn parser_attaches_period_under_unit_noun() {
        let root = parse_dependencies("I would like to invest 10000 in 40 months").unwrap();
        let tree = DependencyTree::from_root(&root);
        let find = |t: &str| tree.ids().find(|&i| tree.node(i).token == t).unwrap();
        let forty = find("40");
        let months = tree.parent(forty).unwrap();
        assert_eq!(tree.node(months).token, "months");
        assert_eq!(tree.node(months).pos, "NOUN");
        assert_eq!(tree.node(tree.parent(find("10000")).unwrap()).token, "invest");
        assert_eq!(root.node_count(), tokenize("I would like to invest 10000 in 40 months").len());
    }

    #[test]
    fn single_word_is_single_root() {
        let root = parse_dependencies("hello").unwrap();
        assert_eq!(root.key(), "hello INTJ ROOT");
        assert!(root.children.is_empty());
    }

    #[test]
    fn empty_text_is_an_error() {
        assert_eq!(parse_dependencies("   "), Err(EmptyText));
    }

    #[test]
    fn malformed_key_rejected() {
        let v: Value = serde_json::from_str(r#"{"like": {}}"#).unwrap();
        assert!(DependencyNode::from_json(&v).is_err());
        let v: Value = serde_json::from_str(r#"{"a X ROOT": {}, "b Y ROOT": {}}"#).unwrap();
        assert!(DependencyNode::from_json(&v).is_err());
    }

    // Sibling keys must be unique in the exchange format, so the generated
    // utterances use distinct words.
    proptest! {
        #[test]
        fn serialize_then_ingest_is_identity(
            words in proptest::sample::subsequence(
                vec![
                    "invest", "want", "in", "for", "months", "years", "10000", "3", "the",
                    "cdb", "?", "how", "about", "i", "would",
                ],
                1..12,
            ).prop_shuffle()
        ) {
            let text = words.join(" ");
            let root = parse_dependencies(&text).unwrap();
            prop_assert_eq!(root.node_count(), tokenize(&text).len());
            let back = DependencyNode::from_json(&root.to_json()).unwrap();
            prop_assert_eq!(back, root);
        }
    }
}
