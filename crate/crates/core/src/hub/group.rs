use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use tokio::sync::{mpsc, oneshot};

use super::{now_ms, Event, EventKind, EventObserver, HubError};
use crate::action::{
    self, bot_handle, should_handle, BotProfile, Executor, PipelineDeps, Reply, Services, RESULT_PREFIX,
};
use crate::config::Stack;
use crate::context::{ContextError, ContextStore, GroupContext};
use crate::dialog::{format_money, Annotations, Frame, IntentId, Member, SlotValue, SpeechAct, Utterance};
use crate::domain::{compare_results, Comparison, SimulationResult};
use crate::norms::{
    enforce_send, execution_order, match_norms, resolve_all, Directive, GroupState, NormEvent, SendDecision, Trigger,
    Wait,
};

type Ack<T> = oneshot::Sender<Result<T, HubError>>;

/// Replies produced by each bot for one origin utterance.
type BotBatch = Vec<(String, Vec<Reply>)>;

#[allow(clippy::large_enum_variant)]
pub(crate) enum Command {
    Create { owner: Member, sink: mpsc::UnboundedSender<Event>, reply: Ack<()> },
    Join { member: Member, sink: mpsc::UnboundedSender<Event>, reply: Ack<()> },
    Leave { member: String, reply: Ack<()> },
    Post { sender: String, text: String, reply_to: Option<String>, reply: Ack<Utterance> },
    BotReplies { batch: u64, origin: Utterance, replies: BotBatch },
    Timeout { generation: u64 },
    Snapshot { reply: oneshot::Sender<Vec<u8>> },
    ContextSnapshot { reply: oneshot::Sender<Vec<u8>> },
    RestoreContext { blob: Vec<u8>, reply: Ack<()> },
}

/// An utterance waiting to be posted by the group itself.
struct Outgoing {
    sender: String,
    text: String,
    reply_to: Option<String>,
    meta: Option<Meta>,
}

/// Annotations supplied by the speaker instead of the analyzer.
struct Meta {
    intent: Option<IntentId>,
    speech_act: SpeechAct,
    slots: BTreeMap<String, SlotValue>,
    template: Option<String>,
}

#[derive(Default)]
struct Effects {
    directed: Vec<String>,
    /// Bots that spoke through a directive for this event.
    speakers: BTreeSet<String>,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    group_id: &'a str,
    members: &'a [Member],
    state: &'a GroupState,
    seq: u64,
    next_utterance: u64,
    created_at: u64,
    ended_at: Option<u64>,
    wait_generation: u64,
    pending_ask: &'a Option<String>,
    last_human: &'a Option<String>,
    context: serde_json::Value,
}

pub(crate) struct Group {
    id: String,
    stack: Arc<Stack>,
    state: GroupState,
    /// Present members in join order, mirroring `state.members`.
    members: Vec<Member>,
    sinks: BTreeMap<String, mpsc::UnboundedSender<Event>>,
    context: ContextStore,
    observer: Arc<dyn EventObserver>,
    me: mpsc::WeakUnboundedSender<Command>,
    seq: u64,
    last_ts: u64,
    next_utterance: u64,
    created_at: u64,
    ended_at: Option<u64>,
    wait_generation: u64,
    /// Intent of every accepted utterance, for reply lookups.
    intents: HashMap<String, Option<IntentId>>,
    /// Mediator question a user answer is linked to.
    pending_ask: Option<String>,
    last_human: Option<String>,
    queue: VecDeque<Outgoing>,
    next_batch: u64,
    expected_batch: u64,
    ready: BTreeMap<u64, (Utterance, BotBatch)>,
}

impl Group {
    pub(crate) fn new(
        id: String,
        stack: Arc<Stack>,
        dir: Option<PathBuf>,
        observer: Arc<dyn EventObserver>,
        me: mpsc::WeakUnboundedSender<Command>,
    ) -> Result<Self, HubError> {
        let mut context = ContextStore::new(stack.slots.iter().cloned());
        if let Some(dir) = dir {
            context = context.with_dir(dir)?;
        }
        let state = GroupState { roster: stack.bots.iter().map(BotProfile::info).collect(), ..Default::default() };
        Ok(Group {
            id,
            stack,
            state,
            members: Vec::new(),
            sinks: BTreeMap::new(),
            context,
            observer,
            me,
            seq: 0,
            last_ts: 0,
            next_utterance: 1,
            created_at: 0,
            ended_at: None,
            wait_generation: 0,
            intents: HashMap::new(),
            pending_ask: None,
            last_human: None,
            queue: VecDeque::new(),
            next_batch: 0,
            expected_batch: 0,
            ready: BTreeMap::new(),
        })
    }

    pub(crate) async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Command>) {
        while let Some(cmd) = rx.recv().await {
            self.handle(cmd);
            if let Err(e) = self.context.persist(&self.id) {
                tracing::warn!(group = %self.id, error = %e, "context persist failed");
            }
        }
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Create { mut owner, sink, reply } => {
                owner.role = crate::dialog::Role::OwnerUser;
                self.created_at = self.tick();
                self.sinks.insert(owner.id.clone(), sink);
                self.emit(EventKind::GroupCreated { owner: owner.id.clone() });
                self.add_member(owner, None);
                self.fire(Trigger::OnGroupCreated);
                self.drain();
                let _ = reply.send(Ok(()));
            }
            Command::Join { member, sink, reply } => {
                let _ = reply.send(self.join(member, sink));
                self.drain();
            }
            Command::Leave { member, reply } => {
                let res = self.leave(&member);
                self.drain();
                let _ = reply.send(res);
            }
            Command::Post { sender, text, reply_to, reply } => {
                let res = self.post(Outgoing { sender, text, reply_to, meta: None });
                self.drain();
                let _ = reply.send(res);
            }
            Command::BotReplies { batch, origin, replies } => {
                self.ready.insert(batch, (origin, replies));
                while let Some((origin, replies)) = self.ready.remove(&self.expected_batch) {
                    self.expected_batch += 1;
                    self.bot_replies(origin, replies);
                }
            }
            Command::Timeout { generation } => self.timeout(generation),
            Command::Snapshot { reply } => {
                let _ = reply.send(self.snapshot());
            }
            Command::ContextSnapshot { reply } => {
                let _ = reply.send(self.context.snapshot(&self.id));
            }
            Command::RestoreContext { blob, reply } => {
                let _ = reply.send(self.restore(blob));
            }
        }
    }

    fn tick(&mut self) -> u64 {
        self.last_ts = now_ms().max(self.last_ts);
        self.last_ts
    }

    fn emit(&mut self, kind: EventKind) {
        self.seq += 1;
        let event = Event { group_id: self.id.clone(), seq: self.seq, timestamp: self.tick(), kind };
        let payload = serde_json::to_value(&event).expect("event serializes");
        if let Err(e) = self.context.log_event(&self.id, event.kind.name(), payload, event.timestamp) {
            tracing::warn!(group = %self.id, error = %e, "context log failed");
        }
        self.observer.observe(&event);
        for sink in self.sinks.values() {
            let _ = sink.send(event.clone());
        }
    }

    fn add_member(&mut self, member: Member, sink: Option<mpsc::UnboundedSender<Event>>) {
        self.state.members.push((member.id.clone(), member.role));
        if let Some(sink) = sink {
            self.sinks.insert(member.id.clone(), sink);
        }
        self.members.push(member.clone());
        self.emit(EventKind::MemberJoined { member });
    }

    fn remove_member(&mut self, id: &str) -> Option<Member> {
        let pos = self.members.iter().position(|m| m.id == id)?;
        let member = self.members.remove(pos);
        self.state.members.retain(|(m, _)| m != id);
        self.emit(EventKind::MemberLeft { member: member.clone() });
        self.sinks.remove(id);
        Some(member)
    }

    fn join(&mut self, member: Member, sink: mpsc::UnboundedSender<Event>) -> Result<(), HubError> {
        if self.ended_at.is_some() {
            return Err(HubError::GroupEnded(self.id.clone()));
        }
        let reserved = member.role.is_human() && self.stack.bot(&member.id).is_some();
        if self.state.is_present(&member.id) || reserved {
            return Err(HubError::DuplicateMember(member.id));
        }
        self.add_member(member, Some(sink));
        Ok(())
    }

    fn leave(&mut self, id: &str) -> Result<(), HubError> {
        let member = self.remove_member(id).ok_or_else(|| HubError::UnknownMember(id.to_string()))?;
        let humans_left = self.members.iter().any(|m| m.role.is_human());
        if member.role.is_human() && !humans_left && self.ended_at.is_none() {
            self.fire(Trigger::OnGroupEnd);
            self.end();
        }
        Ok(())
    }

    fn end(&mut self) {
        if self.ended_at.is_none() {
            self.ended_at = Some(self.tick());
            self.state.awaiting = None;
            self.wait_generation += 1;
            self.emit(EventKind::GroupEnded);
        }
    }

    fn fire(&mut self, trigger: Trigger) {
        let frame = self.context.frame(&self.id);
        let event = NormEvent::new(trigger, None, &frame);
        let directives = execution_order(&match_norms(&self.stack.norms, &event, &self.state));
        self.execute(&directives, None, &frame);
    }

    fn drain(&mut self) {
        while let Some(out) = self.queue.pop_front() {
            let sender = out.sender.clone();
            if let Err(e) = self.post(out) {
                tracing::debug!(group = %self.id, sender, error = %e, "queued utterance dropped");
            }
        }
    }

    fn post(&mut self, out: Outgoing) -> Result<Utterance, HubError> {
        if self.ended_at.is_some() {
            return Err(HubError::GroupEnded(self.id.clone()));
        }
        let human = self.state.role_of(&out.sender).is_some_and(|r| r.is_human());
        let context = self.context.frame(&self.id);
        let a = self.stack.analyzer.analyze(&out.text, &context);
        let mut ann = Annotations {
            topic: Some(a.topic),
            speech_act: Some(a.speech_act),
            intent: a.intent,
            distance: a.distance,
            understood: a.understood,
            mentions: a.mentions,
            mentions_only: a.mentions_only,
            canonical: Some(a.canonical),
            slots: a.slots,
            template: None,
        };
        let mut reply_to = out.reply_to;
        if human && !ann.slots.is_empty() && self.pending_ask.is_some() {
            if reply_to.is_none() {
                reply_to = self.pending_ask.clone();
            }
            if reply_to == self.pending_ask {
                ann.speech_act = Some(SpeechAct::new("QUERY_CALCULATION"));
            }
        }
        if let Some(meta) = out.meta {
            ann.intent = meta.intent;
            ann.speech_act = Some(meta.speech_act);
            ann.slots = meta.slots;
            ann.template = meta.template;
            ann.understood = true;
            ann.distance = None;
        }
        let merged = context.merged(&ann.slots);
        let mut utt = Utterance {
            id: format!("{}-u{}", self.id, self.next_utterance),
            group_id: self.id.clone(),
            sender: out.sender,
            text: out.text,
            reply_to,
            timestamp: 0,
            annotations: Some(ann),
        };
        if let SendDecision::Block(reason) = enforce_send(&self.stack.norms, &utt, &self.state, &merged) {
            return Err(HubError::Rejected(reason));
        }

        self.next_utterance += 1;
        utt.timestamp = self.tick();
        let ann = utt.annotations.as_ref().expect("annotated above");
        if let Some(w) = self.state.awaiting.as_mut() {
            w.record(&utt.sender, &ann.slots);
        }
        self.intents.insert(utt.id.clone(), ann.intent.clone());
        if human {
            self.last_human = Some(utt.sender.clone());
            self.pending_ask = None;
        } else if ann.template.as_deref().is_some_and(|t| t.starts_with("ask_"))
            && self.state.mediator() == Some(utt.sender.as_str())
        {
            self.pending_ask = Some(utt.id.clone());
        }
        self.state.last_topic = ann.topic.clone();
        self.state.last_annotations = Some(ann.clone());
        let present_bots: Vec<String> =
            self.members.iter().filter(|m| !m.role.is_human()).map(|m| m.id.clone()).collect();
        self.emit(EventKind::Utterance { utterance: utt.clone() });

        let event = NormEvent::new(Trigger::OnUtterance, Some(&utt), &merged);
        let directives = execution_order(&match_norms(&self.stack.norms, &event, &self.state));
        let effects = self.execute(&directives, Some(&utt), &merged);
        self.dispatch(&utt, &present_bots, &effects, human);
        Ok(utt)
    }

    fn requester(&self, utt: Option<&Utterance>) -> Option<String> {
        match utt {
            Some(u) if self.state.role_of(&u.sender).is_some_and(|r| r.is_human()) => Some(u.sender.clone()),
            _ => self.last_human.clone(),
        }
    }

    fn present_mediator(&self) -> Option<String> {
        self.state.mediator().filter(|m| self.state.is_present(m)).map(str::to_string)
    }

    fn render(&self, template: &str, vars: &[(String, String)]) -> Option<String> {
        let map: BTreeMap<&str, String> = vars.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        match self.stack.templates.render(template, &map) {
            Ok(text) => Some(text),
            Err(e) => {
                tracing::warn!(group = %self.id, template, error = %e, "template failed");
                None
            }
        }
    }

    fn say(&mut self, speaker: &str, text: String, reply_to: Option<&Utterance>, meta: Meta) {
        self.queue.push_back(Outgoing {
            sender: speaker.to_string(),
            text,
            reply_to: reply_to.map(|u| u.id.clone()),
            meta: Some(meta),
        });
    }

    fn execute(&mut self, directives: &[Directive], utt: Option<&Utterance>, frame: &Frame) -> Effects {
        let mut fx = Effects::default();
        for d in directives {
            let targets = |refs: &[String], g: &Group| {
                let event = NormEvent::new(Trigger::OnUtterance, utt, frame);
                resolve_all(refs, &event, &g.state)
            };
            match d {
                Directive::Join { member, role } => {
                    if self.state.is_present(member) {
                        continue;
                    }
                    match self.stack.bot(member) {
                        Some(bot) => {
                            let m = Member::bot(&bot.id, &bot.display_name, *role);
                            self.add_member(m, None);
                        }
                        None => tracing::warn!(group = %self.id, member, "join names an unknown bot"),
                    }
                }
                Directive::Invite(refs) => {
                    for id in targets(refs, self) {
                        if self.state.is_present(&id) {
                            continue;
                        }
                        if let Some(bot) = self.stack.bot(&id) {
                            let m = Member::bot(&bot.id, &bot.display_name, bot.role);
                            self.add_member(m, None);
                        }
                    }
                }
                Directive::ExtractContext => {
                    let Some(u) = utt else { continue };
                    let slots = u.annotations.as_ref().map(|a| a.slots.clone()).unwrap_or_default();
                    for (name, value) in slots {
                        if !self.context.declares(&name) {
                            continue;
                        }
                        let ts = self.tick();
                        if let Err(e) = self.context.put_slot(&self.id, &name, value, &u.sender, ts) {
                            tracing::warn!(group = %self.id, error = %e, "context write failed");
                        }
                    }
                }
                Directive::Forward(refs) => {
                    let Some(u) = utt else { continue };
                    let Some(mediator) = self.present_mediator() else { continue };
                    let to: Vec<String> =
                        targets(refs, self).into_iter().filter(|t| self.state.is_present(t)).collect();
                    if to.is_empty() {
                        continue;
                    }
                    if let Some((text, meta)) = self.forward(u, &to, frame) {
                        self.say(&mediator, text, Some(u), meta);
                        fx.speakers.insert(mediator);
                    }
                }
                Directive::Reply { template, speaker } => {
                    let Some(u) = utt else { continue };
                    let user = self.requester(Some(u)).unwrap_or_default();
                    let vars = vec![("user".to_string(), user), ("topic".to_string(), self.stack.topic_name.clone())];
                    for s in targets(std::slice::from_ref(speaker), self) {
                        if !self.state.is_present(&s) {
                            continue;
                        }
                        let Some(text) = self.render(template, &vars) else { continue };
                        let act = if text.trim_end().ends_with('?') { "QUERY" } else { "INFORM" };
                        let meta = Meta {
                            intent: None,
                            speech_act: SpeechAct::new(act),
                            slots: BTreeMap::new(),
                            template: Some(template.clone()),
                        };
                        self.say(&s, text, Some(u), meta);
                        fx.speakers.insert(s);
                    }
                }
                Directive::AskMissing(slots) => {
                    let Some(u) = utt else { continue };
                    let Some(mediator) = self.present_mediator() else { continue };
                    let Some(slot) = slots.iter().find(|s| !frame.contains(s)) else { continue };
                    let template = format!("ask_{slot}");
                    let Some(text) = self.render(&template, &[]) else { continue };
                    let meta = Meta {
                        intent: Some(IntentId::new("ask_more")),
                        speech_act: SpeechAct::new("QUERY"),
                        slots: BTreeMap::new(),
                        template: Some(template),
                    };
                    self.say(&mediator, text, Some(u), meta);
                    fx.speakers.insert(mediator);
                }
                Directive::CompareAndInform => {
                    let Some(mediator) = self.present_mediator() else { continue };
                    let Some((text, template)) = self.compare(frame) else { continue };
                    let meta = Meta {
                        intent: None,
                        speech_act: SpeechAct::new("INFORM"),
                        slots: BTreeMap::new(),
                        template: Some(template),
                    };
                    self.say(&mediator, text, utt, meta);
                    fx.speakers.insert(mediator);
                }
                Directive::Handle(refs) => {
                    for id in targets(refs, self) {
                        if !fx.directed.contains(&id) {
                            fx.directed.push(id);
                        }
                    }
                }
                Directive::WaitFor { members, timeout_ms } => {
                    let ids: Vec<String> = targets(members, self)
                        .into_iter()
                        .filter(|m| self.state.role_of(m).is_some_and(|r| !r.is_human()))
                        .collect();
                    if ids.is_empty() {
                        continue;
                    }
                    let deadline = now_ms() + timeout_ms;
                    let requester = self.requester(utt);
                    match self.state.awaiting.as_mut() {
                        Some(w) if !w.is_complete() => {
                            for id in ids {
                                w.members.entry(id).or_insert(deadline);
                            }
                        }
                        _ => {
                            self.state.awaiting = Some(Wait {
                                members: ids.into_iter().map(|m| (m, deadline)).collect(),
                                origin: utt.cloned(),
                                requester,
                                ..Default::default()
                            });
                        }
                    }
                    self.wait_generation += 1;
                    self.arm_timer(*timeout_ms);
                }
                Directive::CancelWait => {
                    self.state.awaiting = None;
                    self.wait_generation += 1;
                }
                Directive::LeaveAll => {
                    let bots: Vec<String> =
                        self.members.iter().filter(|m| !m.role.is_human()).map(|m| m.id.clone()).collect();
                    for b in bots {
                        self.remove_member(&b);
                    }
                }
                Directive::RegisterEnd => self.end(),
                Directive::Block(_) => {}
            }
        }
        fx
    }

    /// Text and annotations of the mediator's forward of `u` to `to`.
    fn forward(&self, u: &Utterance, to: &[String], frame: &Frame) -> Option<(String, Meta)> {
        let ann = u.annotations.as_ref()?;
        let mentions = to.iter().map(|t| format!("@{t}")).collect::<Vec<_>>().join(" and ");
        let calculation = ann.speech_act.as_ref().is_some_and(|a| a.as_str() == "QUERY_CALCULATION")
            && self.stack.slots.iter().all(|s| frame.contains(s));
        let mut vars = vec![("mentions".to_string(), mentions), ("text".to_string(), action::strip_mentions(&u.text))];
        let mut slots = ann.slots.clone();
        if calculation {
            slots = BTreeMap::new();
            for (k, v) in &frame.slots {
                if self.stack.slots.contains(k) {
                    slots.insert(k.clone(), v.clone());
                }
                if let SlotValue::Amount { value, currency } = v {
                    vars.push(("amount".to_string(), format_money(*value, currency)));
                }
                vars.push((k.clone(), v.to_string()));
            }
        }
        let template = if calculation { "forward_simulation" } else { "forward_query" };
        let text = self.render(template, &vars)?;
        let meta = Meta {
            intent: ann.intent.clone(),
            speech_act: ann.speech_act.clone().unwrap_or_else(|| SpeechAct::new("QUERY")),
            slots,
            template: Some(template.to_string()),
        };
        Some((text, meta))
    }

    /// Comparison of the simulation results collected by the active wait.
    fn compare(&self, frame: &Frame) -> Option<(String, String)> {
        let wait = self.state.awaiting.as_ref()?;
        let iv = frame.get("initial_value").and_then(SlotValue::number).unwrap_or_default();
        let days = frame.get("period").and_then(SlotValue::days).unwrap_or_default();
        let mut currency = "BRL".to_string();
        let mut results = Vec::new();
        for (_, slots) in &wait.results {
            for (k, v) in slots {
                let Some(entity) = k.strip_prefix(RESULT_PREFIX) else { continue };
                let Some(amount) = v.number() else { continue };
                if let SlotValue::Amount { currency: c, .. } = v {
                    currency = c.clone();
                }
                results.push(SimulationResult {
                    option: self.stack.services.label(entity),
                    final_amount: amount,
                    initial_value: iv,
                    days,
                });
            }
        }
        let cmp = match compare_results(&results, self.stack.epsilon) {
            Ok(c) => c,
            Err(e) => {
                tracing::debug!(group = %self.id, error = %e, "nothing to compare");
                return None;
            }
        };
        let mut vars =
            vec![("user".to_string(), wait.requester.clone().or(self.last_human.clone()).unwrap_or_default())];
        match &cmp {
            Comparison::Better { option, amount, .. } | Comparison::ReportOnly { option, amount } => {
                vars.push(("option".to_string(), option.clone()));
                vars.push(("result".to_string(), format_money(*amount, &currency)));
            }
            Comparison::NoDifference { .. } => {}
        }
        let template = cmp.template_id();
        Some((self.render(template, &vars)?, template.to_string()))
    }

    fn arm_timer(&self, ms: u64) {
        let me = self.me.clone();
        let generation = self.wait_generation;
        tokio::spawn(async move {
            tokio::time::sleep(Duration::from_millis(ms)).await;
            if let Some(tx) = me.upgrade() {
                let _ = tx.send(Command::Timeout { generation });
            }
        });
    }

    fn timeout(&mut self, generation: u64) {
        if generation != self.wait_generation || self.ended_at.is_some() {
            return;
        }
        let Some(wait) = self.state.awaiting.clone() else { return };
        if !wait.is_complete() {
            let origin = wait.origin.clone();
            let slots =
                origin.as_ref().and_then(|u| u.annotations.as_ref()).map(|a| a.slots.clone()).unwrap_or_default();
            let frame = self.context.frame(&self.id).merged(&slots);
            let event = NormEvent::new(Trigger::OnTimeout, origin.as_ref(), &frame);
            let directives = execution_order(&match_norms(&self.stack.norms, &event, &self.state));
            self.execute(&directives, origin.as_ref(), &frame);
        }
        self.state.awaiting = None;
        self.wait_generation += 1;
        self.drain();
    }

    /// Runs the pipelines of the bots that should handle `utt`, concurrently;
    /// their replies come back as one batch in mention order, then join order.
    fn dispatch(&mut self, utt: &Utterance, present_bots: &[String], fx: &Effects, human: bool) {
        let Some(ann) = utt.annotations.as_ref() else { return };
        let mut runs: Vec<(usize, usize, BotProfile, bool)> = Vec::new();
        for (join_idx, id) in present_bots.iter().enumerate() {
            if *id == utt.sender || !self.state.is_present(id) {
                continue;
            }
            let Some(profile) = self.stack.bot(id) else { continue };
            let directed = fx.directed.contains(id);
            match should_handle(profile, utt, directed, human) {
                None => continue,
                Some(action::Trigger::Owner) if fx.speakers.contains(id) => continue,
                Some(_) => {}
            }
            let mention_idx = ann.mentions.iter().position(|m| m == id).unwrap_or(usize::MAX);
            runs.push((mention_idx, join_idx, profile.clone(), directed));
        }
        if runs.is_empty() {
            return;
        }
        runs.sort_by_key(|r| (r.0, r.1));
        let batch = self.next_batch;
        self.next_batch += 1;
        let replied = utt.reply_to.as_ref().and_then(|r| self.intents.get(r).cloned().flatten());
        let frame = self.context.frame(&self.id).merged(&ann.slots);
        let stack = self.stack.clone();
        let origin = utt.clone();
        let me = self.me.clone();
        tokio::spawn(async move {
            let tasks: Vec<_> = runs
                .into_iter()
                .map(|(_, _, bot, directed)| {
                    let (stack, utt, frame, replied) = (stack.clone(), origin.clone(), frame.clone(), replied.clone());
                    tokio::spawn(async move {
                        let deps = PipelineDeps {
                            bindings: &stack.bindings,
                            flow: &stack.flow,
                            registry: &stack.registry,
                            executor: Executor { templates: &stack.templates, services: stack.services.as_ref() },
                        };
                        let replies = bot_handle(&bot, &utt, replied.as_ref(), &frame, directed, human, &deps);
                        (bot.id, replies)
                    })
                })
                .collect();
            let mut replies = Vec::with_capacity(tasks.len());
            for t in tasks {
                match t.await {
                    Ok(r) => replies.push(r),
                    Err(e) => tracing::warn!(error = %e, "bot pipeline panicked"),
                }
            }
            if let Some(tx) = me.upgrade() {
                let _ = tx.send(Command::BotReplies { batch, origin, replies });
            }
        });
    }

    fn bot_replies(&mut self, origin: Utterance, replies: BotBatch) {
        for (bot, rs) in replies {
            for r in rs {
                if !self.state.is_present(&bot) {
                    break;
                }
                let meta = Meta {
                    intent: Some(r.intent),
                    speech_act: r.speech_act,
                    slots: r.slots,
                    template: Some(r.template),
                };
                let out =
                    Outgoing { sender: bot.clone(), text: r.text, reply_to: Some(origin.id.clone()), meta: Some(meta) };
                if let Err(e) = self.post(out) {
                    tracing::debug!(group = %self.id, bot, error = %e, "bot reply dropped");
                }
                self.drain();
            }
        }
    }

    fn snapshot(&self) -> Vec<u8> {
        let context = serde_json::from_slice(&self.context.snapshot(&self.id)).expect("context snapshot is json");
        let snap = Snapshot {
            group_id: &self.id,
            members: &self.members,
            state: &self.state,
            seq: self.seq,
            next_utterance: self.next_utterance,
            created_at: self.created_at,
            ended_at: self.ended_at,
            wait_generation: self.wait_generation,
            pending_ask: &self.pending_ask,
            last_human: &self.last_human,
            context,
        };
        serde_json::to_vec(&snap).expect("snapshot serializes")
    }

    fn restore(&mut self, blob: Vec<u8>) -> Result<(), HubError> {
        let ctx: GroupContext = serde_json::from_slice(&blob).map_err(|e| ContextError::Corrupt(e.to_string()))?;
        if ctx.group_id != self.id {
            return Err(ContextError::Corrupt(format!("snapshot belongs to group {}", ctx.group_id)).into());
        }
        self.context.restore(&blob)?;
        Ok(())
    }
}
