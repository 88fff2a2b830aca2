//! Frame parsing over dependency trees: extracts the investment period and
//! the initial amount, stores them as slots and replaces them in the text by
//! the `#dt` / `#v` placeholders.

use std::collections::{BTreeMap, BTreeSet};

use super::tree::{DependencyTree, NodeId};
use crate::dialog::{Frame, SlotValue, TimeUnit};

pub const PERIOD_SLOT: &str = "period";
pub const AMOUNT_SLOT: &str = "initial_value";
pub const PERIOD_PLACEHOLDER: &str = "#dt";
pub const AMOUNT_PLACEHOLDER: &str = "#v";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvestmentVerbs(BTreeSet<String>);

impl InvestmentVerbs {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(verbs: I) -> Self {
        InvestmentVerbs(verbs.into_iter().map(|v| v.into().to_lowercase()).collect())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(&token.to_lowercase())
    }
}

impl Default for InvestmentVerbs {
    fn default() -> Self {
        InvestmentVerbs::new(["invest", "apply", "put", "simulate"])
    }
}

fn names_time_unit(token: &str) -> bool {
    TimeUnit::from_token(token).is_some()
}

/// Head of a unit noun for the verb check: its parent, skipping adpositions
/// ("in 40 months" hangs off "in", which hangs off the verb).
fn governing_head(tree: &DependencyTree, unit: NodeId) -> Option<NodeId> {
    let mut cur = tree.parent(unit)?;
    while tree.node(cur).is_adposition() {
        cur = tree.parent(cur)?;
    }
    Some(cur)
}

/// First number node (pre-order) whose parent names a day/month/year unit and
/// whose governing head is an investment verb.
pub fn extract_period_of_investment(tree: &DependencyTree, verbs: &InvestmentVerbs) -> Option<NodeId> {
    tree.number_nodes().find(|&num| {
        let Some(parent) = tree.parent(num) else { return false };
        if !names_time_unit(&tree.node(parent).token) {
            return false;
        }
        governing_head(tree, parent).is_some_and(|g| {
            let g = tree.node(g);
            g.is_verb() && verbs.contains(&g.token)
        })
    })
}

/// First number node (pre-order) whose parent does not name a time unit.
pub fn extract_initial_amount_of_investment(tree: &DependencyTree) -> Option<NodeId> {
    tree.number_nodes().find(|&num| tree.parent(num).is_some_and(|p| !names_time_unit(&tree.node(p).token)))
}

/// Outcome of frame parsing one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameParse {
    pub canonical: String,
    pub slots: BTreeMap<String, SlotValue>,
}

impl FrameParse {
    pub fn placeholder_count(&self) -> usize {
        self.canonical.matches(PERIOD_PLACEHOLDER).count() + self.canonical.matches(AMOUNT_PLACEHOLDER).count()
    }
}

/// Currency named in the raw utterance; BRL when none is given.
pub fn detect_currency(original: &str) -> &'static str {
    let lower = original.to_lowercase();
    if lower.contains("r$") || lower.contains("brl") || lower.contains("reais") {
        "BRL"
    } else if lower.contains("usd") || lower.contains('$') || lower.contains("dollar") {
        "USD"
    } else {
        "BRL"
    }
}

/// Replaces one standalone occurrence of `token` in `text`. When `before` is
/// given, an occurrence followed by that word is preferred.
fn replace_token(text: &str, token: &str, placeholder: &str, before: Option<&str>) -> String {
    let bytes = text.as_bytes();
    let is_word = |c: u8| c.is_ascii_alphanumeric() || c == b'.' || c == b'#';
    let candidates: Vec<usize> = text
        .match_indices(token)
        .map(|(i, _)| i)
        .filter(|&i| {
            let end = i + token.len();
            (i == 0 || !is_word(bytes[i - 1])) && (end == bytes.len() || !(bytes[end].is_ascii_alphanumeric()))
        })
        .collect();
    let chosen = before
        .and_then(|w| {
            candidates
                .iter()
                .copied()
                .find(|&i| text[i + token.len()..].trim_start().to_lowercase().starts_with(&w.to_lowercase()))
        })
        .or_else(|| candidates.first().copied());
    match chosen {
        Some(i) => format!("{}{}{}", &text[..i], placeholder, &text[i + token.len()..]),
        None => text.to_string(),
    }
}

/// Extracts period and amount, writes them into `frame` and returns the
/// canonical text with placeholders.
///
/// `text` is the number-normalized utterance and `original` the raw one (used
/// for the currency). Trees without any verb are elliptical follow-ups such as
/// "how about 15 years?"; for those the verb requirement on the period is
/// dropped and a number heading the fragment counts as an amount.
pub fn frame_parse(
    text: &str,
    original: &str,
    tree: &DependencyTree,
    verbs: &InvestmentVerbs,
    frame: &mut Frame,
) -> FrameParse {
    let elliptical = !tree.has_verb();
    let period = extract_period_of_investment(tree, verbs).or_else(|| {
        elliptical.then(|| {
            tree.number_nodes().find(|&n| tree.parent(n).is_some_and(|p| names_time_unit(&tree.node(p).token)))
        })?
    });
    let amount = extract_initial_amount_of_investment(tree).or_else(|| {
        elliptical.then(|| {
            tree.number_nodes()
                .find(|&n| Some(n) != period && tree.parent(n).is_none_or(|p| !names_time_unit(&tree.node(p).token)))
        })?
    });

    let mut canonical = text.to_string();
    let mut slots = BTreeMap::new();
    if let Some(p) = period {
        let node = tree.node(p);
        let unit_token = &tree.node(tree.parent(p).expect("period has a unit parent")).token;
        if let (Ok(v), Some(unit)) = (node.token.parse::<f64>(), TimeUnit::from_token(unit_token)) {
            let value = SlotValue::period(v, unit);
            frame.set(PERIOD_SLOT, value.clone());
            slots.insert(PERIOD_SLOT.to_string(), value);
            canonical = replace_token(&canonical, &node.token, PERIOD_PLACEHOLDER, Some(unit_token));
        }
    }
    if let Some(a) = amount {
        let node = tree.node(a);
        if let Ok(v) = node.token.parse::<f64>() {
            let value = SlotValue::amount(v, detect_currency(original));
            frame.set(AMOUNT_SLOT, value.clone());
            slots.insert(AMOUNT_SLOT.to_string(), value);
            canonical = replace_token(&canonical, &node.token, AMOUNT_PLACEHOLDER, None);
        }
    }
    FrameParse { canonical, slots }
}
