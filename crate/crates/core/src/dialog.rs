//! Shared conversation types: speech acts, intent classes, the intent-flow
//! graph, action specs, members, utterances and slot frames.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Generic speech-act labels.
pub const GENERIC_SPEECH_ACTS: [&str; 13] = [
    "GREETINGS",
    "THANK",
    "INFORM",
    "QUERY",
    "CFP",
    "REQUEST",
    "AGREE",
    "REFUSE",
    "FAILURE",
    "PROPOSE",
    "SUBSCRIBE",
    "NOT-UNDERSTOOD",
    "BYE",
];

/// Finance-domain speech acts registered on top of the generic set.
pub const FINANCE_SPEECH_ACTS: [&str; 6] =
    ["QUERY_DEFINITION", "INFORM_DEFINITION", "QUERY_NEWS", "INFORM_NEWS", "QUERY_CALCULATION", "INFORM_CALCULATION"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeechAct(String);

impl SpeechAct {
    pub fn new(label: impl Into<String>) -> Self {
        SpeechAct(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_question(&self) -> bool {
        matches!(self.0.as_str(), "QUERY" | "CFP" | "QUERY_DEFINITION" | "QUERY_NEWS" | "QUERY_CALCULATION")
    }
}

impl fmt::Display for SpeechAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Registry of known speech acts. Generic labels come first; domain
/// extensions can be added but never replace a generic label.
#[derive(Debug, Clone)]
pub struct SpeechActRegistry {
    acts: BTreeSet<String>,
}

impl SpeechActRegistry {
    pub fn generic() -> Self {
        SpeechActRegistry { acts: GENERIC_SPEECH_ACTS.iter().map(|s| s.to_string()).collect() }
    }

    /// Generic set plus the finance extensions.
    pub fn finance() -> Self {
        let mut reg = Self::generic();
        for act in FINANCE_SPEECH_ACTS {
            reg.register(act).expect("finance acts are distinct");
        }
        reg
    }

    pub fn register(&mut self, label: &str) -> Result<SpeechAct, ConfigError> {
        if label.trim().is_empty() {
            return Err(ConfigError::Invalid("empty speech act label".into()));
        }
        if !self.acts.insert(label.to_string()) {
            return Err(ConfigError::Duplicate(format!("speech act {label}")));
        }
        Ok(SpeechAct::new(label))
    }

    pub fn contains(&self, label: &str) -> bool {
        self.acts.contains(label)
    }

    pub fn get(&self, label: &str) -> Option<SpeechAct> {
        self.contains(label).then(|| SpeechAct::new(label))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.acts.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntentId(String);

impl IntentId {
    pub fn new(id: impl Into<String>) -> Self {
        IntentId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for IntentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for IntentId {
    fn from(s: &str) -> Self {
        IntentId::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentClass {
    #[serde(rename = "intent")]
    pub id: IntentId,
    pub speech_act: SpeechAct,
    #[serde(default)]
    pub entities: Vec<String>,
    #[serde(default)]
    pub features: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct IntentRegistry {
    intents: BTreeMap<IntentId, IntentClass>,
}

impl IntentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, class: IntentClass) -> Result<(), ConfigError> {
        if class.entities.iter().chain(&class.features).any(|n| n.trim().is_empty()) {
            return Err(ConfigError::Invalid(format!("intent {} has an empty entity/feature name", class.id)));
        }
        if self.intents.contains_key(&class.id) {
            return Err(ConfigError::Duplicate(format!("intent {}", class.id)));
        }
        self.intents.insert(class.id.clone(), class);
        Ok(())
    }

    pub fn get(&self, id: &IntentId) -> Option<&IntentClass> {
        self.intents.get(id)
    }

    pub fn contains(&self, id: &IntentId) -> bool {
        self.intents.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.intents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intents.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &IntentClass> {
        self.intents.values()
    }
}

/// One authored edge: an utterance of intent `from_intent` replying to an
/// utterance of intent `replying_to` is answered with `answer_intent`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub from_intent: IntentId,
    #[serde(default)]
    pub replying_to: Option<IntentId>,
    pub answer_intent: IntentId,
}

/// Intent-flow graph. Edges keep their authored order so that duplicate keys
/// can be reported; lookups use the first edge for a key.
#[derive(Debug, Clone, Default)]
pub struct IntentFlow {
    edges: Vec<FlowEdge>,
    index: BTreeMap<(IntentId, Option<IntentId>), IntentId>,
}

impl IntentFlow {
    pub fn new(edges: Vec<FlowEdge>) -> Self {
        let mut index = BTreeMap::new();
        for e in &edges {
            index.entry((e.from_intent.clone(), e.replying_to.clone())).or_insert_with(|| e.answer_intent.clone());
        }
        IntentFlow { edges, index }
    }

    pub fn edges(&self) -> &[FlowEdge] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Answer intent for the pair (incoming intent, intent it replies to).
///
/// An absent pair yields `None` even when `(i_u, None)` exists; callers route
/// `None` to not-understood handling.
pub fn next_intent(flow: &IntentFlow, i_u: &IntentId, i_r: Option<&IntentId>) -> Option<IntentId> {
    flow.index.get(&(i_u.clone(), i_r.cloned())).cloned()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowError {
    UnknownIntent { edge: usize, intent: String },
    DuplicateKey { edge: usize, from_intent: String, replying_to: Option<String> },
}

impl fmt::Display for FlowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowError::UnknownIntent { edge, intent } => {
                write!(f, "edge {edge}: unknown intent \"{intent}\"")
            }
            FlowError::DuplicateKey { edge, from_intent, replying_to } => {
                write!(f, "edge {edge}: duplicate key <{from_intent}, {}>", replying_to.as_deref().unwrap_or("NONE"))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowReport {
    pub errors: Vec<FlowError>,
    pub warnings: Vec<String>,
}

impl FlowReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

pub fn validate_flow(flow: &IntentFlow, registry: &IntentRegistry) -> FlowReport {
    let mut report = FlowReport::default();
    if flow.is_empty() {
        report.warnings.push("empty flow".to_string());
    }
    let mut seen = BTreeSet::new();
    for (i, e) in flow.edges.iter().enumerate() {
        let referenced =
            std::iter::once(&e.from_intent).chain(e.replying_to.iter()).chain(std::iter::once(&e.answer_intent));
        for id in referenced {
            if !registry.contains(id) {
                report.errors.push(FlowError::UnknownIntent { edge: i, intent: id.to_string() });
            }
        }
        if !seen.insert((e.from_intent.clone(), e.replying_to.clone())) {
            report.errors.push(FlowError::DuplicateKey {
                edge: i,
                from_intent: e.from_intent.to_string(),
                replying_to: e.replying_to.as_ref().map(|r| r.to_string()),
            });
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionClass {
    Greet,
    Thank,
    Bye,
    GetDefinition,
    SearchNews,
    Compute,
    AskMore,
    SendInformation,
    SendRefuse,
    NoAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub answer_intent: IntentId,
    pub speech_act: SpeechAct,
    pub required_entities: Vec<String>,
    pub required_features: Vec<String>,
    pub action_class: ActionClass,
}

impl ActionSpec {
    pub fn no_action() -> Self {
        ActionSpec {
            answer_intent: IntentId::new("no_action"),
            speech_act: SpeechAct::new("INFORM"),
            required_entities: Vec::new(),
            required_features: Vec::new(),
            action_class: ActionClass::NoAction,
        }
    }

    /// Required slot names in declaration order: features, then entities.
    pub fn required_slots(&self) -> impl Iterator<Item = &String> {
        self.required_features.iter().chain(&self.required_entities)
    }
}

/// Required slots of `spec` absent from `frame`, in declaration order.
pub fn missing_slots(spec: &ActionSpec, frame: &Frame) -> Vec<String> {
    spec.required_slots().filter(|name| !frame.contains(name)).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    OwnerUser,
    User,
    Mediator,
    ExpertBot,
    GenericBot,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::OwnerUser => "owner_user",
            Role::User => "user",
            Role::Mediator => "mediator",
            Role::ExpertBot => "expert_bot",
            Role::GenericBot => "generic_bot",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Some(match s {
            "owner_user" => Role::OwnerUser,
            "user" => Role::User,
            "mediator" => Role::Mediator,
            "expert_bot" => Role::ExpertBot,
            "generic_bot" => Role::GenericBot,
            _ => return None,
        })
    }

    pub fn is_human(&self) -> bool {
        matches!(self, Role::OwnerUser | Role::User)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberKind {
    Human,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub id: String,
    pub display_name: String,
    pub role: Role,
    pub kind: MemberKind,
}

impl Member {
    pub fn human(id: &str) -> Self {
        Member { id: id.to_string(), display_name: id.to_string(), role: Role::User, kind: MemberKind::Human }
    }

    pub fn bot(id: &str, display_name: &str, role: Role) -> Self {
        Member { id: id.to_string(), display_name: display_name.to_string(), role, kind: MemberKind::Bot }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Day,
    Month,
    Year,
}

impl TimeUnit {
    pub fn days(&self) -> u32 {
        match self {
            TimeUnit::Day => 1,
            TimeUnit::Month => 30,
            TimeUnit::Year => 365,
        }
    }

    /// Unit named by a token such as "months" or "Year".
    pub fn from_token(token: &str) -> Option<TimeUnit> {
        let t = token.to_lowercase();
        if t.contains("day") {
            Some(TimeUnit::Day)
        } else if t.contains("month") {
            Some(TimeUnit::Month)
        } else if t.contains("year") {
            Some(TimeUnit::Year)
        } else {
            None
        }
    }

    fn label(&self, plural: bool) -> &'static str {
        match (self, plural) {
            (TimeUnit::Day, false) => "day",
            (TimeUnit::Day, true) => "days",
            (TimeUnit::Month, false) => "month",
            (TimeUnit::Month, true) => "months",
            (TimeUnit::Year, false) => "year",
            (TimeUnit::Year, true) => "years",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SlotValue {
    Amount { value: f64, currency: String },
    Period { value: f64, unit: TimeUnit },
    Number { value: f64 },
    Text { value: String },
}

impl SlotValue {
    pub fn amount(value: f64, currency: &str) -> Self {
        SlotValue::Amount { value, currency: currency.to_string() }
    }

    pub fn period(value: f64, unit: TimeUnit) -> Self {
        SlotValue::Period { value, unit }
    }

    /// Period length in days (month = 30, year = 365).
    pub fn days(&self) -> Option<f64> {
        match self {
            SlotValue::Period { value, unit } => Some(value * unit.days() as f64),
            _ => None,
        }
    }

    pub fn number(&self) -> Option<f64> {
        match self {
            SlotValue::Amount { value, .. } | SlotValue::Period { value, .. } | SlotValue::Number { value } => {
                Some(*value)
            }
            SlotValue::Text { .. } => None,
        }
    }
}

impl fmt::Display for SlotValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotValue::Amount { value, .. } => f.write_str(&format_number(*value)),
            SlotValue::Period { value, unit } => {
                write!(f, "{} {}", format_number(*value), unit.label(*value != 1.0))
            }
            SlotValue::Number { value } => f.write_str(&format_number(*value)),
            SlotValue::Text { value } => f.write_str(value),
        }
    }
}

/// Currency symbol followed by the value with two decimals.
pub fn format_money(value: f64, currency: &str) -> String {
    let symbol = match currency {
        "BRL" => "R$",
        "USD" => "US$",
        other => other,
    };
    format!("{symbol} {value:.2}")
}

/// Integers print without a fractional part, other values with two decimals.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub slots: BTreeMap<String, SlotValue>,
}

impl Frame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&SlotValue> {
        self.slots.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    pub fn set(&mut self, name: &str, value: SlotValue) -> Option<SlotValue> {
        self.slots.insert(name.to_string(), value)
    }

    pub fn merged(&self, deltas: &BTreeMap<String, SlotValue>) -> Frame {
        let mut out = self.clone();
        for (k, v) in deltas {
            out.slots.insert(k.clone(), v.clone());
        }
        out
    }
}

/// Parse results attached to an utterance by the hub or by the replying bot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    pub topic: Option<String>,
    pub speech_act: Option<SpeechAct>,
    pub intent: Option<IntentId>,
    pub distance: Option<f64>,
    pub understood: bool,
    pub mentions: Vec<String>,
    pub mentions_only: bool,
    pub canonical: Option<String>,
    pub slots: BTreeMap<String, SlotValue>,
    pub template: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub group_id: String,
    pub sender: String,
    pub text: String,
    pub reply_to: Option<String>,
    pub timestamp: u64,
    pub annotations: Option<Annotations>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BindingDef {
    #[serde(default)]
    pub bot: Option<String>,
    pub intent: IntentId,
    pub action_class: ActionClass,
    #[serde(default)]
    pub answer_intent: Option<IntentId>,
    #[serde(default)]
    pub entities: Vec<String>,
    #[serde(default)]
    pub features: Vec<String>,
}

/// Intent registry, flow edges and action bindings as read from a
/// configuration file. Any of the three arrays may be omitted.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DialogConfig {
    #[serde(default)]
    pub intents: Vec<IntentClass>,
    #[serde(default)]
    pub flow: Vec<FlowEdge>,
    #[serde(default)]
    pub bindings: Vec<BindingDef>,
}

impl DialogConfig {
    pub fn from_json(src: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(src).map_err(|e| ConfigError::Parse { line: e.line(), message: e.to_string() })
    }

    /// Combine several files; later arrays are appended.
    pub fn merge(mut self, other: DialogConfig) -> Self {
        self.intents.extend(other.intents);
        self.flow.extend(other.flow);
        self.bindings.extend(other.bindings);
        self
    }

    pub fn registry(&self, acts: &SpeechActRegistry) -> Result<IntentRegistry, ConfigError> {
        let mut reg = IntentRegistry::new();
        for class in &self.intents {
            if !acts.contains(class.speech_act.as_str()) {
                return Err(ConfigError::UnknownReference(format!(
                    "speech act {} of intent {}",
                    class.speech_act, class.id
                )));
            }
            reg.insert(class.clone())?;
        }
        Ok(reg)
    }

    pub fn intent_flow(&self) -> IntentFlow {
        IntentFlow::new(self.flow.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class(id: &str, act: &str) -> IntentClass {
        IntentClass { id: IntentId::new(id), speech_act: SpeechAct::new(act), entities: vec![], features: vec![] }
    }

    fn edge(from: &str, r: Option<&str>, to: &str) -> FlowEdge {
        FlowEdge { from_intent: from.into(), replying_to: r.map(IntentId::new), answer_intent: to.into() }
    }

    fn compute_spec() -> ActionSpec {
        ActionSpec {
            answer_intent: "inform_calculation".into(),
            speech_act: SpeechAct::new("INFORM_CALCULATION"),
            required_entities: vec![],
            required_features: vec!["initial_value".into(), "period".into()],
            action_class: ActionClass::Compute,
        }
    }

    #[test]
    fn single_edge_lookup() {
        let flow = IntentFlow::new(vec![edge("greet", None, "greet_back")]);
        assert_eq!(next_intent(&flow, &"greet".into(), None), Some("greet_back".into()));
        assert_eq!(next_intent(&flow, &"query_news".into(), None), None);
    }

    #[test]
    fn absent_pair_does_not_fall_back_to_none_key() {
        let flow = IntentFlow::new(vec![edge("query_calculation", None, "ask_more")]);
        let r = IntentId::new("inform_news");
        assert_eq!(next_intent(&flow, &"query_calculation".into(), Some(&r)), None);
    }

    #[test]
    fn missing_slots_in_declaration_order() {
        let spec = compute_spec();
        let mut frame = Frame::new();
        assert_eq!(missing_slots(&spec, &frame), vec!["initial_value", "period"]);
        frame.set("initial_value", SlotValue::amount(35000.0, "BRL"));
        assert_eq!(missing_slots(&spec, &frame), vec!["period"]);
        frame.set("period", SlotValue::period(2.0, TimeUnit::Year));
        assert!(missing_slots(&spec, &frame).is_empty());
    }

    #[test]
    fn empty_flow_is_ok_with_warning() {
        let report = validate_flow(&IntentFlow::default(), &IntentRegistry::new());
        assert!(report.is_ok());
        assert_eq!(report.warnings, vec!["empty flow"]);
    }

    #[test]
    fn unregistered_intent_is_named() {
        let mut reg = IntentRegistry::new();
        reg.insert(class("greet", "GREETINGS")).unwrap();
        let flow = IntentFlow::new(vec![edge("greet", None, "xyz")]);
        let report = validate_flow(&flow, &reg);
        assert!(!report.is_ok());
        assert!(report.errors[0].to_string().contains("\"xyz\""));
    }

    #[test]
    fn duplicate_key_is_reported() {
        let mut reg = IntentRegistry::new();
        reg.insert(class("greet", "GREETINGS")).unwrap();
        reg.insert(class("greet_back", "GREETINGS")).unwrap();
        let flow = IntentFlow::new(vec![edge("greet", None, "greet_back"), edge("greet", None, "greet")]);
        let report = validate_flow(&flow, &reg);
        assert!(matches!(report.errors[0], FlowError::DuplicateKey { edge: 1, .. }));
        // first edge wins for lookups
        assert_eq!(next_intent(&flow, &"greet".into(), None), Some("greet_back".into()));
    }

    #[test]
    fn domain_acts_cannot_shadow_generic() {
        let mut reg = SpeechActRegistry::finance();
        assert!(reg.register("QUERY").is_err());
        assert!(reg.register("QUERY_CALCULATION").is_err());
        assert!(reg.register("QUERY_RATES").is_ok());
    }

    #[test]
    fn period_days() {
        assert_eq!(SlotValue::period(6.0, TimeUnit::Month).days(), Some(180.0));
        assert_eq!(SlotValue::period(2.0, TimeUnit::Year).days(), Some(730.0));
        assert_eq!(SlotValue::period(6.0, TimeUnit::Month).to_string(), "6 months");
        assert_eq!(SlotValue::period(1.0, TimeUnit::Year).to_string(), "1 year");
    }

    #[test]
    fn entity_feature_names_must_be_non_empty() {
        let mut reg = IntentRegistry::new();
        let mut c = class("q", "QUERY");
        c.features.push(" ".into());
        assert!(reg.insert(c).is_err());
    }
}
