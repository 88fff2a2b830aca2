//! Interaction norms: trigger, a conjunction of predicates and an ordered
//! list of directives. Norms are loaded from JSON, matched in file order and
//! executed by the hub.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dialog::{Annotations, Frame, Role, SlotValue, SpeechActRegistry, Utterance};
use crate::error::ConfigError;

pub const DEFAULT_WAIT_MS: u64 = 10_000;

/// Member references resolved against the event and group state at
/// execution time.
pub const LATE_BOUND: [&str; 7] =
    ["mentioned", "topic_experts", "experts", "all_bots", "mediator", "sender", "awaited"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    OnGroupCreated,
    OnUtterance,
    OnTimeout,
    OnGroupEnd,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredicateKind {
    TopicIs(String),
    TopicIn(Vec<String>),
    SpeechActIs(String),
    SpeechActIn(Vec<String>),
    SpeechActNot(Vec<String>),
    Mentions(Vec<String>),
    MentionsOnly,
    MembersPresent(Vec<String>),
    MembersAbsent(Vec<String>),
    SlotsPresent(Vec<String>),
    SlotsMissing(Vec<String>),
    SenderRoleIs(Vec<String>),
    AwaitingReplies(AwaitState),
    NotUnderstood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AwaitState {
    /// A wait is active and still missing replies.
    Pending,
    /// A wait is active and every awaited member has replied.
    Complete,
    /// No wait is active.
    Idle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub kind: PredicateKind,
    pub negate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    Join { member: String, role: Role },
    Invite(Vec<String>),
    Forward(Vec<String>),
    Reply { template: String, speaker: String },
    AskMissing(Vec<String>),
    WaitFor { members: Vec<String>, timeout_ms: u64 },
    CancelWait,
    CompareAndInform,
    Handle(Vec<String>),
    ExtractContext,
    LeaveAll,
    RegisterEnd,
    Block(Option<String>),
}

impl Directive {
    pub fn kind(&self) -> &'static str {
        match self {
            Directive::Join { .. } => "join",
            Directive::Invite(_) => "invite",
            Directive::Forward(_) => "forward",
            Directive::Reply { .. } => "reply",
            Directive::AskMissing(_) => "ask_missing",
            Directive::WaitFor { .. } => "wait_for",
            Directive::CancelWait => "cancel_wait",
            Directive::CompareAndInform => "compare_and_inform",
            Directive::Handle(_) => "handle",
            Directive::ExtractContext => "extract_context",
            Directive::LeaveAll => "leave_all",
            Directive::RegisterEnd => "register_end",
            Directive::Block(_) => "block",
        }
    }

    /// Position in the per-event execution order: joins and invites first,
    /// then context capture, forwards, replies, comparison, handling, waits.
    fn rank(&self) -> u8 {
        match self {
            Directive::Block(_) => 0,
            Directive::Join { .. } => 1,
            Directive::Invite(_) => 2,
            Directive::ExtractContext => 3,
            Directive::Forward(_) => 4,
            Directive::Reply { .. } | Directive::AskMissing(_) => 5,
            Directive::CompareAndInform => 6,
            Directive::Handle(_) => 7,
            Directive::WaitFor { .. } => 8,
            Directive::CancelWait => 9,
            Directive::LeaveAll => 10,
            Directive::RegisterEnd => 11,
        }
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = match self {
            Directive::Join { member, role } => vec![member.clone(), role.as_str().to_string()],
            Directive::Invite(m) | Directive::Forward(m) | Directive::Handle(m) | Directive::AskMissing(m) => m.clone(),
            Directive::Reply { template, speaker } => vec![template.clone(), speaker.clone()],
            Directive::WaitFor { members, timeout_ms } => {
                let mut a = members.clone();
                a.push(timeout_ms.to_string());
                a
            }
            Directive::Block(r) => r.iter().cloned().collect(),
            _ => vec![],
        };
        write!(f, "{}({})", self.kind(), args.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Norm {
    pub id: String,
    pub trigger: Trigger,
    pub preconditions: Vec<Predicate>,
    pub behaviors: Vec<Directive>,
    pub consume: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    #[serde(default)]
    pub topics: Vec<String>,
    #[serde(default)]
    pub speech_acts: Vec<String>,
    #[serde(default)]
    pub members: Vec<String>,
    #[serde(default)]
    pub slots: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormSet {
    pub vocabulary: Vocabulary,
    pub norms: Vec<Norm>,
}

#[derive(Deserialize)]
struct RawAtom {
    kind: String,
    #[serde(default)]
    args: Vec<String>,
    #[serde(default)]
    negate: bool,
}

#[derive(Deserialize)]
struct RawNorm {
    id: String,
    trigger: Trigger,
    #[serde(default)]
    when: Vec<RawAtom>,
    then: Vec<RawAtom>,
    #[serde(default)]
    consume: bool,
}

#[derive(Deserialize, Default)]
struct RawFile {
    #[serde(default)]
    vocabulary: Vocabulary,
    #[serde(default)]
    norms: Vec<RawNorm>,
}

struct Checker<'a> {
    vocab: &'a Vocabulary,
    acts: Option<&'a SpeechActRegistry>,
    norm: &'a str,
}

impl Checker<'_> {
    fn err(&self, msg: String) -> ConfigError {
        ConfigError::Invalid(format!("norm {}: {msg}", self.norm))
    }

    fn topic(&self, t: &str) -> Result<String, ConfigError> {
        if self.vocab.topics.iter().any(|x| x == t) {
            Ok(t.to_string())
        } else {
            Err(ConfigError::UnknownReference(format!("topic {t} in norm {}", self.norm)))
        }
    }

    fn act(&self, a: &str) -> Result<String, ConfigError> {
        let declared = self.vocab.speech_acts.iter().any(|x| x == a);
        let registered = self.acts.is_none_or(|r| r.contains(a));
        if declared && registered {
            Ok(a.to_string())
        } else {
            Err(ConfigError::UnknownReference(format!("speech act {a} in norm {}", self.norm)))
        }
    }

    fn member(&self, m: &str) -> Result<String, ConfigError> {
        if LATE_BOUND.contains(&m) || self.vocab.members.iter().any(|x| x == m) {
            Ok(m.to_string())
        } else {
            Err(ConfigError::UnknownReference(format!("member {m} in norm {}", self.norm)))
        }
    }

    fn slot(&self, s: &str) -> Result<String, ConfigError> {
        if self.vocab.slots.iter().any(|x| x == s) {
            Ok(s.to_string())
        } else {
            Err(ConfigError::UnknownReference(format!("slot {s} in norm {}", self.norm)))
        }
    }

    fn role(&self, r: &str) -> Result<String, ConfigError> {
        if Role::parse(r).is_some() || r == "human" || r == "bot" {
            Ok(r.to_string())
        } else {
            Err(ConfigError::UnknownReference(format!("role {r} in norm {}", self.norm)))
        }
    }

    fn all(
        &self,
        args: &[String],
        f: impl Fn(&Self, &str) -> Result<String, ConfigError>,
    ) -> Result<Vec<String>, ConfigError> {
        if args.is_empty() {
            return Err(self.err("expected at least one argument".into()));
        }
        args.iter().map(|a| f(self, a)).collect()
    }

    fn exactly<'b>(&self, kind: &str, args: &'b [String], n: usize) -> Result<&'b [String], ConfigError> {
        if args.len() == n {
            Ok(args)
        } else {
            Err(self.err(format!("{kind} takes {n} argument(s), got {}", args.len())))
        }
    }

    fn predicate(&self, raw: &RawAtom) -> Result<Predicate, ConfigError> {
        let a = &raw.args;
        let kind = match raw.kind.as_str() {
            "topic_is" => PredicateKind::TopicIs(self.topic(&self.exactly("topic_is", a, 1)?[0])?),
            "topic_in" => PredicateKind::TopicIn(self.all(a, Self::topic)?),
            "speech_act_is" => PredicateKind::SpeechActIs(self.act(&self.exactly("speech_act_is", a, 1)?[0])?),
            "speech_act_in" => PredicateKind::SpeechActIn(self.all(a, Self::act)?),
            "speech_act_not" => PredicateKind::SpeechActNot(self.all(a, Self::act)?),
            "mentions" => PredicateKind::Mentions(self.all(a, Self::member)?),
            "mentions_only" => {
                self.exactly("mentions_only", a, 0)?;
                PredicateKind::MentionsOnly
            }
            "members_present" => PredicateKind::MembersPresent(self.all(a, Self::member)?),
            "members_absent" => PredicateKind::MembersAbsent(self.all(a, Self::member)?),
            "slots_present" => PredicateKind::SlotsPresent(self.all(a, Self::slot)?),
            "slots_missing" => PredicateKind::SlotsMissing(self.all(a, Self::slot)?),
            "sender_role_is" => PredicateKind::SenderRoleIs(self.all(a, Self::role)?),
            "awaiting_replies" => {
                let state = match self.exactly("awaiting_replies", a, 1)?[0].as_str() {
                    "pending" => AwaitState::Pending,
                    "complete" => AwaitState::Complete,
                    "idle" => AwaitState::Idle,
                    other => return Err(self.err(format!("unknown wait state {other}"))),
                };
                PredicateKind::AwaitingReplies(state)
            }
            "not_understood" => {
                self.exactly("not_understood", a, 0)?;
                PredicateKind::NotUnderstood
            }
            other => return Err(self.err(format!("unknown predicate kind {other}"))),
        };
        Ok(Predicate { kind, negate: raw.negate })
    }

    fn directive(&self, raw: &RawAtom) -> Result<Directive, ConfigError> {
        let a = &raw.args;
        Ok(match raw.kind.as_str() {
            "join" => {
                let a = self.exactly("join", a, 2)?;
                let role = Role::parse(&a[1])
                    .ok_or_else(|| ConfigError::UnknownReference(format!("role {} in norm {}", a[1], self.norm)))?;
                Directive::Join { member: self.member(&a[0])?, role }
            }
            "invite" => Directive::Invite(self.all(a, Self::member)?),
            "forward" => Directive::Forward(self.all(a, Self::member)?),
            "handle" => Directive::Handle(self.all(a, Self::member)?),
            "reply" => {
                let (template, speaker) = match a.as_slice() {
                    [t] => (t.clone(), "mediator".to_string()),
                    [t, s] => (t.clone(), self.member(s)?),
                    _ => return Err(self.err("reply takes a template id and an optional speaker".into())),
                };
                Directive::Reply { template, speaker }
            }
            "ask_missing" => Directive::AskMissing(self.all(a, Self::slot)?),
            "wait_for" => {
                let (members, timeout_ms) = match a.last().map(|l| l.parse::<u64>()) {
                    Some(Ok(ms)) => (&a[..a.len() - 1], ms),
                    _ => (&a[..], DEFAULT_WAIT_MS),
                };
                Directive::WaitFor { members: self.all(members, Self::member)?, timeout_ms }
            }
            "cancel_wait" => {
                self.exactly("cancel_wait", a, 0)?;
                Directive::CancelWait
            }
            "compare_and_inform" => {
                self.exactly("compare_and_inform", a, 0)?;
                Directive::CompareAndInform
            }
            "extract_context" => {
                self.exactly("extract_context", a, 0)?;
                Directive::ExtractContext
            }
            "leave_all" => {
                self.exactly("leave_all", a, 0)?;
                Directive::LeaveAll
            }
            "register_end" => {
                self.exactly("register_end", a, 0)?;
                Directive::RegisterEnd
            }
            "block" => Directive::Block(a.first().cloned()),
            other => return Err(self.err(format!("unknown directive kind {other}"))),
        })
    }
}

/// Parses a norm file. Speech acts must be declared in the vocabulary and,
/// when a registry is given, registered there too.
pub fn load_norms(src: &str, acts: Option<&SpeechActRegistry>) -> Result<NormSet, ConfigError> {
    if src.trim().is_empty() {
        return Ok(NormSet::default());
    }
    let raw: RawFile =
        serde_json::from_str(src).map_err(|e| ConfigError::Parse { line: e.line(), message: e.to_string() })?;
    let vocabulary = raw.vocabulary;
    let mut ids = BTreeSet::new();
    let mut norms = Vec::with_capacity(raw.norms.len());
    for rn in raw.norms {
        if !ids.insert(rn.id.clone()) {
            return Err(ConfigError::Duplicate(format!("norm id {}", rn.id)));
        }
        let c = Checker { vocab: &vocabulary, acts, norm: &rn.id };
        if rn.then.is_empty() {
            return Err(c.err("no behaviors".into()));
        }
        let preconditions = rn.when.iter().map(|p| c.predicate(p)).collect::<Result<_, _>>()?;
        let behaviors = rn.then.iter().map(|d| c.directive(d)).collect::<Result<_, _>>()?;
        norms.push(Norm { id: rn.id, trigger: rn.trigger, preconditions, behaviors, consume: rn.consume });
    }
    Ok(NormSet { vocabulary, norms })
}

impl NormSet {
    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Norm> {
        self.norms.iter().find(|n| n.id == id)
    }

    /// Template ids named by reply directives, for checking against the
    /// loaded template set.
    pub fn template_ids(&self) -> BTreeSet<&str> {
        self.norms
            .iter()
            .flat_map(|n| &n.behaviors)
            .filter_map(|d| match d {
                Directive::Reply { template, .. } => Some(template.as_str()),
                _ => None,
            })
            .collect()
    }
}

/// A bot the hub can make join a group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotInfo {
    pub id: String,
    pub role: Role,
    #[serde(default)]
    pub topics: Vec<String>,
}

/// Outstanding replies a mediator waits for.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Wait {
    /// Awaited member → deadline (ms since epoch).
    pub members: BTreeMap<String, u64>,
    pub replied: Vec<String>,
    /// Slot values carried by each reply, in arrival order.
    pub results: Vec<(String, BTreeMap<String, SlotValue>)>,
    pub origin: Option<Utterance>,
    /// Human whose request started the wait; addressed by the comparison.
    #[serde(default)]
    pub requester: Option<String>,
}

impl Wait {
    pub fn is_complete(&self) -> bool {
        self.members.keys().all(|m| self.replied.contains(m))
    }

    pub fn deadline(&self) -> Option<u64> {
        self.members.values().copied().min()
    }

    pub fn record(&mut self, member: &str, slots: &BTreeMap<String, SlotValue>) -> bool {
        if !self.members.contains_key(member) || self.replied.iter().any(|r| r == member) {
            return false;
        }
        self.replied.push(member.to_string());
        self.results.push((member.to_string(), slots.clone()));
        true
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupState {
    /// Present members in join order.
    pub members: Vec<(String, Role)>,
    /// Bots available to this hub, in configuration order.
    pub roster: Vec<BotInfo>,
    pub last_topic: Option<String>,
    pub awaiting: Option<Wait>,
    pub last_annotations: Option<Annotations>,
}

impl GroupState {
    pub fn role_of(&self, id: &str) -> Option<Role> {
        self.members.iter().find(|(m, _)| m == id).map(|(_, r)| *r)
    }

    pub fn is_present(&self, id: &str) -> bool {
        self.role_of(id).is_some()
    }

    pub fn mediator(&self) -> Option<&str> {
        self.members
            .iter()
            .find(|(_, r)| *r == Role::Mediator)
            .map(|(m, _)| m.as_str())
            .or_else(|| self.roster.iter().find(|b| b.role == Role::Mediator).map(|b| b.id.as_str()))
    }

    fn is_bot(&self, id: &str) -> bool {
        self.roster.iter().any(|b| b.id == id) || self.role_of(id).is_some_and(|r| !r.is_human())
    }
}

/// An event presented to the norm matcher.
#[derive(Debug, Clone)]
pub struct NormEvent<'a> {
    pub trigger: Trigger,
    pub utterance: Option<&'a Utterance>,
    /// Context frame merged with the utterance's slot deltas.
    pub frame: &'a Frame,
}

impl<'a> NormEvent<'a> {
    pub fn new(trigger: Trigger, utterance: Option<&'a Utterance>, frame: &'a Frame) -> Self {
        NormEvent { trigger, utterance, frame }
    }

    fn annotations(&self) -> Option<&'a Annotations> {
        self.utterance.and_then(|u| u.annotations.as_ref())
    }
}

/// Expands a member reference to member ids.
pub fn resolve(reference: &str, event: &NormEvent, state: &GroupState) -> Vec<String> {
    let ann = event.annotations();
    match reference {
        "mentioned" => {
            ann.map(|a| a.mentions.iter().filter(|m| state.is_bot(m)).cloned().collect()).unwrap_or_default()
        }
        "topic_experts" => {
            let topic = ann.and_then(|a| a.topic.as_deref());
            state
                .roster
                .iter()
                .filter(|b| b.role == Role::ExpertBot && topic.is_some_and(|t| b.topics.iter().any(|x| x == t)))
                .map(|b| b.id.clone())
                .collect()
        }
        "experts" => state.roster.iter().filter(|b| b.role == Role::ExpertBot).map(|b| b.id.clone()).collect(),
        "all_bots" => state.members.iter().filter(|(_, r)| !r.is_human()).map(|(m, _)| m.clone()).collect(),
        "mediator" => state.mediator().map(|m| vec![m.to_string()]).unwrap_or_default(),
        "sender" => event.utterance.map(|u| vec![u.sender.clone()]).unwrap_or_default(),
        "awaited" => state.awaiting.as_ref().map(|w| w.members.keys().cloned().collect()).unwrap_or_default(),
        literal => vec![literal.to_string()],
    }
}

pub fn resolve_all(refs: &[String], event: &NormEvent, state: &GroupState) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in refs {
        for m in resolve(r, event, state) {
            if !out.contains(&m) {
                out.push(m);
            }
        }
    }
    out
}

fn role_matches(spec: &str, role: Role) -> bool {
    match spec {
        "human" => role.is_human(),
        "bot" => !role.is_human(),
        "user" => role.is_human(),
        other => Role::parse(other) == Some(role),
    }
}

fn holds(p: &PredicateKind, event: &NormEvent, state: &GroupState) -> bool {
    let ann = event.annotations();
    let act = ann.and_then(|a| a.speech_act.as_ref()).map(|s| s.as_str());
    let topic = ann.and_then(|a| a.topic.as_deref());
    match p {
        PredicateKind::TopicIs(t) => topic == Some(t.as_str()),
        PredicateKind::TopicIn(ts) => topic.is_some_and(|t| ts.iter().any(|x| x == t)),
        PredicateKind::SpeechActIs(a) => act == Some(a.as_str()),
        PredicateKind::SpeechActIn(acts) => act.is_some_and(|a| acts.iter().any(|x| x == a)),
        PredicateKind::SpeechActNot(acts) => act.is_some_and(|a| !acts.iter().any(|x| x == a)),
        PredicateKind::Mentions(refs) => {
            let targets = resolve_all(refs, event, state);
            ann.is_some_and(|a| a.mentions.iter().any(|m| targets.contains(m)))
        }
        PredicateKind::MentionsOnly => ann.is_some_and(|a| a.mentions_only),
        PredicateKind::MembersPresent(refs) => {
            let ids = resolve_all(refs, event, state);
            !ids.is_empty() && ids.iter().all(|m| state.is_present(m))
        }
        PredicateKind::MembersAbsent(refs) => resolve_all(refs, event, state).iter().any(|m| !state.is_present(m)),
        PredicateKind::SlotsPresent(slots) => slots.iter().all(|s| event.frame.contains(s)),
        PredicateKind::SlotsMissing(slots) => slots.iter().any(|s| !event.frame.contains(s)),
        PredicateKind::SenderRoleIs(roles) => event
            .utterance
            .and_then(|u| state.role_of(&u.sender))
            .is_some_and(|r| roles.iter().any(|spec| role_matches(spec, r))),
        PredicateKind::AwaitingReplies(want) => {
            let now = match &state.awaiting {
                None => AwaitState::Idle,
                Some(w) if w.is_complete() => AwaitState::Complete,
                Some(_) => AwaitState::Pending,
            };
            now == *want
        }
        PredicateKind::NotUnderstood => ann.is_some_and(|a| !a.understood),
    }
}

pub fn predicate_holds(p: &Predicate, event: &NormEvent, state: &GroupState) -> bool {
    holds(&p.kind, event, state) != p.negate
}

/// Norms whose trigger and preconditions hold, in file order, with their
/// directives. Matching stops after a matching norm marked `consume`.
pub fn match_norms(set: &NormSet, event: &NormEvent, state: &GroupState) -> Vec<(String, Vec<Directive>)> {
    let mut out = Vec::new();
    for norm in set.norms.iter().filter(|n| n.trigger == event.trigger) {
        if norm.preconditions.iter().all(|p| predicate_holds(p, event, state)) {
            out.push((norm.id.clone(), norm.behaviors.clone()));
            if norm.consume {
                break;
            }
        }
    }
    out
}

/// Flattens matched directives into execution order. A block directive
/// overrides everything else for the event.
pub fn execution_order(matched: &[(String, Vec<Directive>)]) -> Vec<Directive> {
    let all: Vec<&Directive> = matched.iter().flat_map(|(_, d)| d).collect();
    if let Some(b) = all.iter().find(|d| matches!(d, Directive::Block(_))) {
        return vec![(*b).clone()];
    }
    let mut out: Vec<Directive> = all.into_iter().cloned().collect();
    out.sort_by_key(Directive::rank);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SendDecision {
    Allow,
    Block(String),
}

pub fn enforce_send(set: &NormSet, utterance: &Utterance, state: &GroupState, frame: &Frame) -> SendDecision {
    if !state.is_present(&utterance.sender) {
        return SendDecision::Block("not a member".into());
    }
    let event = NormEvent::new(Trigger::OnUtterance, Some(utterance), frame);
    match_norms(set, &event, state)
        .into_iter()
        .find(|(_, ds)| ds.iter().any(|d| matches!(d, Directive::Block(_))))
        .map_or(SendDecision::Allow, |(id, _)| SendDecision::Block(id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::SpeechAct;

    const TOY: &str = r#"{
      "vocabulary": {"topics": ["cdb"], "speech_acts": ["QUERY", "INFORM"], "members": ["cognia"], "slots": ["period"]},
      "norms": [
        {"id": "quiet_experts", "trigger": "on_utterance",
         "when": [{"kind": "sender_role_is", "args": ["expert_bot"]}, {"kind": "awaiting_replies", "args": ["idle"]}],
         "then": [{"kind": "block", "args": ["experts speak when asked"]}]},
        {"id": "a", "trigger": "on_utterance", "when": [{"kind": "topic_is", "args": ["cdb"]}],
         "then": [{"kind": "reply", "args": ["x", "cognia"]}], "consume": true},
        {"id": "b", "trigger": "on_utterance", "when": [],
         "then": [{"kind": "wait_for", "args": ["mentioned"]}, {"kind": "invite", "args": ["experts"]}]}
      ]}"#;

    fn state() -> GroupState {
        GroupState {
            members: vec![
                ("alice".into(), Role::OwnerUser),
                ("cognia".into(), Role::Mediator),
                ("cdbguru".into(), Role::ExpertBot),
            ],
            ..Default::default()
        }
    }

    fn utt(sender: &str, topic: &str) -> Utterance {
        Utterance {
            id: "u1".into(),
            group_id: "g".into(),
            sender: sender.into(),
            text: "x".into(),
            reply_to: None,
            timestamp: 0,
            annotations: Some(Annotations {
                topic: Some(topic.into()),
                speech_act: Some(SpeechAct::new("QUERY")),
                understood: true,
                ..Default::default()
            }),
        }
    }

    #[test]
    fn empty_file_is_valid() {
        assert!(load_norms("", None).unwrap().is_empty());
        assert!(load_norms("{}", None).unwrap().is_empty());
    }

    #[test]
    fn unknown_vocabulary_is_named() {
        let src = r#"{"vocabulary": {"speech_acts": ["QUERY"]}, "norms": [{"id": "n", "trigger": "on_utterance",
            "when": [{"kind": "speech_act_is", "args": ["FOO"]}], "then": [{"kind": "leave_all"}]}]}"#;
        let err = load_norms(src, None).unwrap_err();
        assert!(err.to_string().contains("FOO"), "{err}");
        let src = r#"{"norms": [{"id": "n", "trigger": "on_utterance", "when": [{"kind": "bogus"}], "then": [{"kind": "leave_all"}]}]}"#;
        assert!(load_norms(src, None).unwrap_err().to_string().contains("bogus"));
        let src = r#"{"norms": [{"id": "n", "trigger": "on_utterance", "then": [{"kind": "dance"}]}]}"#;
        assert!(load_norms(src, None).unwrap_err().to_string().contains("dance"));
        let src = r#"{"norms": [{"id": "n", "trigger": "on_utterance", "then": []}]}"#;
        assert!(load_norms(src, None).is_err());
        let src = "{\n\"norms\": [\n{\"id\": 3}]}";
        assert!(matches!(load_norms(src, None), Err(ConfigError::Parse { line: 3, .. })));
    }

    #[test]
    fn arity_is_checked() {
        let src = r#"{"vocabulary": {"topics": ["cdb"]}, "norms": [{"id": "n", "trigger": "on_utterance",
            "when": [{"kind": "topic_is", "args": ["cdb", "cdb"]}], "then": [{"kind": "leave_all"}]}]}"#;
        assert!(load_norms(src, None).is_err());
    }

    #[test]
    fn consume_and_order() {
        let set = load_norms(TOY, None).unwrap();
        let frame = Frame::new();
        let u = utt("alice", "cdb");
        let ev = NormEvent::new(Trigger::OnUtterance, Some(&u), &frame);
        let m = match_norms(&set, &ev, &state());
        assert_eq!(m.iter().map(|(id, _)| id.as_str()).collect::<Vec<_>>(), vec!["a"]);
        let u = utt("alice", "other");
        let ev = NormEvent::new(Trigger::OnUtterance, Some(&u), &frame);
        let m = match_norms(&set, &ev, &state());
        let order: Vec<String> = execution_order(&m).iter().map(ToString::to_string).collect();
        assert_eq!(order, vec!["invite(experts)", "wait_for(mentioned,10000)"]);
    }

    #[test]
    fn enforce_send_rules() {
        let set = load_norms(TOY, None).unwrap();
        let frame = Frame::new();
        assert_eq!(enforce_send(&set, &utt("alice", "cdb"), &state(), &frame), SendDecision::Allow);
        assert_eq!(
            enforce_send(&set, &utt("mallory", "cdb"), &state(), &frame),
            SendDecision::Block("not a member".into())
        );
        assert_eq!(
            enforce_send(&set, &utt("cdbguru", "other"), &state(), &frame),
            SendDecision::Block("quiet_experts".into())
        );
        let mut waiting = state();
        waiting.awaiting = Some(Wait {
            members: [("cdbguru".to_string(), u64::MAX)].into(),
            replied: vec![],
            results: vec![],
            origin: None,
            requester: None,
        });
        assert_eq!(enforce_send(&set, &utt("cdbguru", "other"), &waiting, &frame), SendDecision::Allow);
    }

    #[test]
    fn block_takes_precedence() {
        let m = vec![("x".to_string(), vec![Directive::LeaveAll]), ("y".to_string(), vec![Directive::Block(None)])];
        assert_eq!(execution_order(&m), vec![Directive::Block(None)]);
    }

    #[test]
    fn wait_bookkeeping() {
        let mut w = Wait {
            members: [("a".to_string(), 5), ("b".to_string(), 7)].into(),
            replied: vec![],
            results: vec![],
            origin: None,
            requester: None,
        };
        assert_eq!(w.deadline(), Some(5));
        assert!(w.record("b", &BTreeMap::new()));
        assert!(!w.record("b", &BTreeMap::new()));
        assert!(!w.record("z", &BTreeMap::new()));
        assert!(!w.is_complete());
        w.record("a", &BTreeMap::new());
        assert!(w.is_complete());
    }
}
