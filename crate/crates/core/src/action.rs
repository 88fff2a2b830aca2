//! Acting phase: intent → action bindings, reply templates, action execution
//! and the per-bot parse → filter → act pipeline.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialog::{
    format_money, missing_slots, next_intent, ActionClass, ActionSpec, BindingDef, Frame, IntentFlow, IntentId,
    IntentRegistry, Role, SlotValue, SpeechAct, Utterance,
};
use crate::domain::SimulationResult;
use crate::error::ConfigError;
use crate::norms::BotInfo;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActionError {
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("template {template} needs {{{var}}}")]
    MissingVar { template: String, var: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Templates(BTreeMap<String, String>);

impl Templates {
    pub fn from_json(src: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(src).map_err(|e| ConfigError::Parse { line: e.line(), message: e.to_string() })
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Substitutes `{name}` placeholders.
    pub fn render(&self, id: &str, vars: &BTreeMap<&str, String>) -> Result<String, ActionError> {
        let src = self.0.get(id).ok_or_else(|| ActionError::UnknownTemplate(id.to_string()))?;
        let mut out = String::with_capacity(src.len());
        let mut rest = src.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let Some(close) = rest[open..].find('}') else {
                out.push_str(&rest[open..]);
                rest = "";
                break;
            };
            let name = &rest[open + 1..open + close];
            let value = vars
                .get(name)
                .ok_or_else(|| ActionError::MissingVar { template: id.to_string(), var: name.to_string() })?;
            out.push_str(value);
            rest = &rest[open + close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Bindings keyed by (bot, intent). A binding without a bot applies to every
/// bot that has no specific binding for that intent.
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    specific: HashMap<(String, IntentId), ActionSpec>,
    shared: HashMap<IntentId, ActionSpec>,
}

impl Bindings {
    pub fn build(defs: &[BindingDef], registry: &IntentRegistry) -> Result<Self, ConfigError> {
        let mut b = Bindings::default();
        for def in defs {
            if !registry.contains(&def.intent) {
                return Err(ConfigError::UnknownReference(format!("binding intent {}", def.intent)));
            }
            let answer = def.answer_intent.clone().unwrap_or_else(|| def.intent.clone());
            let class = registry
                .get(&answer)
                .ok_or_else(|| ConfigError::UnknownReference(format!("answer intent {answer}")))?;
            let spec = ActionSpec {
                answer_intent: answer,
                speech_act: class.speech_act.clone(),
                required_entities: def.entities.clone(),
                required_features: def.features.clone(),
                action_class: def.action_class,
            };
            let dup = match &def.bot {
                Some(bot) => b.specific.insert((bot.clone(), def.intent.clone()), spec).is_some(),
                None => b.shared.insert(def.intent.clone(), spec).is_some(),
            };
            if dup {
                return Err(ConfigError::Duplicate(format!(
                    "binding for intent {} (bot {})",
                    def.intent,
                    def.bot.as_deref().unwrap_or("*")
                )));
            }
        }
        Ok(b)
    }

    /// Bots named by bot-specific bindings.
    pub fn bots(&self) -> std::collections::BTreeSet<&str> {
        self.specific.keys().map(|(b, _)| b.as_str()).collect()
    }

    pub fn get(&self, bot: &str, intent: &IntentId) -> Option<&ActionSpec> {
        self.specific.get(&(bot.to_string(), intent.clone())).or_else(|| self.shared.get(intent))
    }
}

/// Bound spec for `intent`, or NoAction when nothing is bound.
pub fn classify_action(bot: &str, intent: &IntentId, bindings: &Bindings) -> ActionSpec {
    bindings.get(bot, intent).cloned().unwrap_or_else(ActionSpec::no_action)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub text: String,
    pub intent: IntentId,
    pub speech_act: SpeechAct,
    #[serde(default)]
    pub addressed_to: Vec<String>,
    pub template: String,
    #[serde(default)]
    pub slots: BTreeMap<String, SlotValue>,
}

/// Domain hooks used by action execution.
pub trait Services: Send + Sync {
    fn define(&self, query: &str) -> Option<String>;
    fn search_news(&self, query: &str) -> Option<String>;
    /// Final amount of investing according to `frame` in `entity`.
    fn compute(&self, entity: &str, frame: &Frame) -> Result<SimulationResult, String>;
    /// Display name of an entity ("CDB", "Savings Account").
    fn label(&self, entity: &str) -> String;
}

pub const RESULT_PREFIX: &str = "roi_";

#[derive(Debug, Clone)]
pub struct ActionContext<'a> {
    pub bot: &'a str,
    pub sender: &'a str,
    /// Utterance text without mentions.
    pub text: &'a str,
    pub frame: &'a Frame,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// Leading greeting or farewell phrase of `text`, capitalized.
fn rapport_phrase(text: &str, phrases: &[&str], default: &str) -> String {
    let lower = text.trim().to_lowercase();
    phrases
        .iter()
        .find(|p| lower.starts_with(*p) && !lower[p.len()..].starts_with(|c: char| c.is_alphanumeric()))
        .map(|p| capitalize(p))
        .unwrap_or_else(|| default.to_string())
}

const GREETINGS: [&str; 9] =
    ["good morning", "good afternoon", "good evening", "hello", "hey", "hiya", "hi", "howdy", "greetings"];
const FAREWELLS: [&str; 7] = ["see you later", "see you", "goodbye", "bye bye", "bye", "farewell", "good night"];

pub struct Executor<'a> {
    pub templates: &'a Templates,
    pub services: &'a dyn Services,
}

impl Executor<'_> {
    fn reply(&self, spec: &ActionSpec, template: &str, vars: &BTreeMap<&str, String>) -> Result<Reply, ActionError> {
        Ok(Reply {
            text: self.templates.render(template, vars)?,
            intent: spec.answer_intent.clone(),
            speech_act: spec.speech_act.clone(),
            addressed_to: vec![],
            template: template.to_string(),
            slots: BTreeMap::new(),
        })
    }

    fn failure(&self, task: &str) -> Reply {
        let mut vars = BTreeMap::new();
        vars.insert("task", task.to_string());
        Reply {
            text: self.templates.render("failure", &vars).unwrap_or_else(|_| format!("I can not {task} right now.")),
            intent: IntentId::new("failure"),
            speech_act: SpeechAct::new("FAILURE"),
            addressed_to: vec![],
            template: "failure".into(),
            slots: BTreeMap::new(),
        }
    }

    pub fn execute_action(&self, spec: &ActionSpec, ctx: &ActionContext) -> Vec<Reply> {
        match self.try_execute(spec, ctx) {
            Ok(r) => r,
            Err(e) => {
                tracing::warn!(bot = ctx.bot, error = %e, "action failed");
                vec![self.failure("answer that")]
            }
        }
    }

    fn try_execute(&self, spec: &ActionSpec, ctx: &ActionContext) -> Result<Vec<Reply>, ActionError> {
        let mut vars: BTreeMap<&str, String> = BTreeMap::new();
        vars.insert("user", ctx.sender.to_string());
        let one = |t: &str, vars: &BTreeMap<&str, String>| self.reply(spec, t, vars).map(|r| vec![r]);
        match spec.action_class {
            ActionClass::NoAction => Ok(vec![]),
            ActionClass::Greet => {
                vars.insert("greeting", rapport_phrase(ctx.text, &GREETINGS, "Hello"));
                one("greet_rapport", &vars)
            }
            ActionClass::Bye => {
                vars.insert("farewell", rapport_phrase(ctx.text, &FAREWELLS, "Bye"));
                one("bye_rapport", &vars)
            }
            ActionClass::Thank => one("thank_welcome", &vars),
            ActionClass::GetDefinition => {
                if let Some(def) = self.services.define(ctx.text) {
                    vars.insert("definition", def);
                    one("definition_answer", &vars)
                } else if let Some(post) = self.services.search_news(ctx.text) {
                    vars.insert("post", post);
                    one("news_answer", &vars)
                } else {
                    one("refuse", &vars)
                }
            }
            ActionClass::SearchNews => match self.services.search_news(ctx.text) {
                Some(post) => {
                    vars.insert("post", post);
                    one("news_answer", &vars)
                }
                None => one("refuse", &vars),
            },
            ActionClass::AskMore => match missing_slots(spec, ctx.frame).first() {
                Some(slot) => one(&format!("ask_{slot}"), &vars),
                None => Ok(vec![]),
            },
            ActionClass::Compute => {
                if let Some(slot) = missing_slots(spec, ctx.frame).first() {
                    let ask = ActionSpec {
                        answer_intent: IntentId::new("ask_more"),
                        speech_act: SpeechAct::new("QUERY"),
                        ..spec.clone()
                    };
                    return self.reply(&ask, &format!("ask_{slot}"), &vars).map(|r| vec![r]);
                }
                let mut out = Vec::new();
                for entity in &spec.required_entities {
                    let result = match self.services.compute(entity, ctx.frame) {
                        Ok(r) => r,
                        Err(e) => {
                            tracing::warn!(bot = ctx.bot, entity, error = %e, "compute failed");
                            out.push(self.failure("compute that simulation"));
                            continue;
                        }
                    };
                    let mut v = vars.clone();
                    v.insert("option", self.services.label(entity));
                    v.insert("value", frame_text(ctx.frame, "initial_value"));
                    v.insert("period", frame_text(ctx.frame, "period"));
                    let currency = match ctx.frame.get("initial_value") {
                        Some(SlotValue::Amount { currency, .. }) => currency.clone(),
                        _ => "BRL".into(),
                    };
                    v.insert("result", format_money(result.final_amount, &currency));
                    let mut r = self.reply(spec, &format!("simulation_{entity}"), &v)?;
                    r.slots
                        .insert(format!("{RESULT_PREFIX}{entity}"), SlotValue::amount(result.final_amount, &currency));
                    out.push(r);
                }
                Ok(out)
            }
            ActionClass::SendInformation | ActionClass::SendRefuse => one(spec.answer_intent.as_str(), &vars),
        }
    }
}

fn frame_text(frame: &Frame, slot: &str) -> String {
    frame.get(slot).map(ToString::to_string).unwrap_or_default()
}

/// Bot configuration: which topics and intents it answers on its own and
/// which entities its computations provide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotProfile {
    pub id: String,
    pub display_name: String,
    pub role: Role,
    #[serde(default)]
    pub topics: Vec<String>,
    #[serde(default)]
    pub intents: Vec<IntentId>,
    #[serde(default)]
    pub provides: Vec<String>,
}

impl BotProfile {
    pub fn info(&self) -> BotInfo {
        BotInfo { id: self.id.clone(), role: self.role, topics: self.topics.clone() }
    }

    pub fn is_expert(&self) -> bool {
        self.role == Role::ExpertBot
    }

    /// Frame as seen by this bot: the context plus the entities it provides.
    pub fn view(&self, frame: &Frame) -> Frame {
        let mut f = frame.clone();
        for e in &self.provides {
            f.set(e, SlotValue::Text { value: e.clone() });
        }
        f
    }
}

/// Why a bot's pipeline runs for an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    Mentioned,
    Directed,
    Owner,
}

/// Filtering phase: mention > norm directive > topic or intent ownership.
pub fn should_handle(
    bot: &BotProfile,
    utterance: &Utterance,
    directed: bool,
    sender_is_human: bool,
) -> Option<Trigger> {
    if utterance.sender == bot.id {
        return None;
    }
    let ann = utterance.annotations.as_ref()?;
    if ann.mentions.contains(&bot.id) {
        return Some(Trigger::Mentioned);
    }
    if directed {
        return Some(Trigger::Directed);
    }
    let owns_topic = ann.topic.as_ref().is_some_and(|t| bot.topics.contains(t));
    let owns_intent = ann.intent.as_ref().is_some_and(|i| bot.intents.contains(i));
    (sender_is_human && (owns_topic || owns_intent)).then_some(Trigger::Owner)
}

/// Everything a bot pipeline reads besides the utterance.
pub struct PipelineDeps<'a> {
    pub bindings: &'a Bindings,
    pub flow: &'a IntentFlow,
    pub registry: &'a IntentRegistry,
    pub executor: Executor<'a>,
}

/// Runs one bot's pipeline on an annotated utterance. `replied_intent` is the
/// intent of the utterance this one replies to; `frame` is the group context
/// merged with the utterance's slot deltas.
pub fn bot_handle(
    bot: &BotProfile,
    utterance: &Utterance,
    replied_intent: Option<&IntentId>,
    frame: &Frame,
    directed: bool,
    sender_is_human: bool,
    deps: &PipelineDeps,
) -> Vec<Reply> {
    if should_handle(bot, utterance, directed, sender_is_human).is_none() {
        return vec![];
    }
    let ann = utterance.annotations.as_ref().expect("filter checked annotations");
    let text = strip_mentions(&utterance.text);
    let ctx = ActionContext { bot: &bot.id, sender: &utterance.sender, text: &text, frame: &bot.view(frame) };
    let understood = ann.understood && ann.intent.is_some();
    if !understood {
        if bot.is_expert() {
            return vec![];
        }
        let question = ann.speech_act.as_ref().is_some_and(SpeechAct::is_question);
        let template = if question { "dont_know_topic" } else { "didnt_understand" };
        let spec = ActionSpec {
            answer_intent: IntentId::new("not_understood"),
            speech_act: SpeechAct::new("NOT-UNDERSTOOD"),
            ..ActionSpec::no_action()
        };
        let mut vars = BTreeMap::new();
        vars.insert("user", utterance.sender.clone());
        vars.insert("topic", bot.topics.first().cloned().unwrap_or_else(|| "investments".into()));
        return deps.executor.reply(&spec, template, &vars).map(|r| vec![r]).unwrap_or_default();
    }
    let intent = ann.intent.as_ref().expect("understood implies intent");
    let mut spec = classify_action(&bot.id, intent, deps.bindings);
    if spec.action_class == ActionClass::NoAction {
        return vec![];
    }
    if let Some(answer) = next_intent(deps.flow, intent, replied_intent) {
        if let Some(class) = deps.registry.get(&answer) {
            spec.speech_act = class.speech_act.clone();
        }
        spec.answer_intent = answer;
    }
    deps.executor.execute_action(&spec, &ctx)
}

pub fn strip_mentions(text: &str) -> String {
    text.split_whitespace().filter(|t| !t.starts_with('@')).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::{Annotations, FlowEdge, IntentClass};

    struct Fake;

    impl Services for Fake {
        fn define(&self, q: &str) -> Option<String> {
            q.contains("cdb").then(|| "CDB is a type of investment.".into())
        }
        fn search_news(&self, q: &str) -> Option<String> {
            q.contains("better").then(|| "cdb wins".into())
        }
        fn compute(&self, entity: &str, frame: &Frame) -> Result<SimulationResult, String> {
            let iv = frame.get("initial_value").and_then(SlotValue::number).ok_or("no value")?;
            if entity == "broken" {
                return Err("offline".into());
            }
            Ok(SimulationResult { option: entity.into(), final_amount: iv * 2.0, initial_value: iv, days: 1.0 })
        }
        fn label(&self, entity: &str) -> String {
            entity.to_uppercase()
        }
    }

    fn templates() -> Templates {
        Templates::from_json(
            r#"{"greet_rapport": "{greeting}", "bye_rapport": "{farewell}", "thank_welcome": "You are welcome.",
                "definition_answer": "{definition}", "news_answer": "I found a post in the social media for you: {post}",
                "refuse": "Sorry, I can not help with that.", "failure": "I can not {task} right now.",
                "ask_initial_value": "What is the initial amount of investment?",
                "ask_period": "For how long would you keep the money invested?",
                "simulation_cdb": "If you invest in {option}, you will have {result} after {period}.",
                "simulation_broken": "x", "how_can_i_help": "How can I help you?",
                "dont_know_topic": "I don't know... I can only talk about {topic}.",
                "didnt_understand": "I didn't understand.", "invest_link": "Sure, follow this link to your bank."}"#,
        )
        .unwrap()
    }

    fn spec(class: ActionClass, entities: &[&str], features: &[&str]) -> ActionSpec {
        ActionSpec {
            answer_intent: IntentId::new("a"),
            speech_act: SpeechAct::new("INFORM"),
            required_entities: entities.iter().map(|s| s.to_string()).collect(),
            required_features: features.iter().map(|s| s.to_string()).collect(),
            action_class: class,
        }
    }

    fn run(class: ActionClass, text: &str, frame: &Frame, e: &[&str], f: &[&str]) -> Vec<Reply> {
        let t = templates();
        let ex = Executor { templates: &t, services: &Fake };
        let ctx = ActionContext { bot: "b", sender: "alice", text, frame };
        ex.execute_action(&spec(class, e, f), &ctx)
    }

    #[test]
    fn render_placeholders() {
        let t = templates();
        let mut v = BTreeMap::new();
        v.insert("greeting", "Hi".to_string());
        assert_eq!(t.render("greet_rapport", &v).unwrap(), "Hi");
        assert!(matches!(t.render("bye_rapport", &v), Err(ActionError::MissingVar { .. })));
        assert!(matches!(t.render("nope", &v), Err(ActionError::UnknownTemplate(_))));
    }

    #[test]
    fn rapport_and_simple_actions() {
        let f = Frame::new();
        assert_eq!(run(ActionClass::Greet, "Hi", &f, &[], &[])[0].text, "Hi");
        assert_eq!(run(ActionClass::Greet, "hello there", &f, &[], &[])[0].text, "Hello");
        assert_eq!(run(ActionClass::Greet, "highly", &f, &[], &[])[0].text, "Hello");
        assert_eq!(run(ActionClass::Bye, "see you", &f, &[], &[])[0].text, "See you");
        assert_eq!(run(ActionClass::Thank, "thanks", &f, &[], &[])[0].text, "You are welcome.");
        assert!(run(ActionClass::NoAction, "x", &f, &[], &[]).is_empty());
    }

    #[test]
    fn definition_falls_back_to_news_then_refusal() {
        let f = Frame::new();
        assert_eq!(run(ActionClass::GetDefinition, "what is cdb?", &f, &[], &[])[0].template, "definition_answer");
        assert_eq!(run(ActionClass::GetDefinition, "what is better?", &f, &[], &[])[0].template, "news_answer");
        assert_eq!(run(ActionClass::GetDefinition, "what is x?", &f, &[], &[])[0].template, "refuse");
        assert_eq!(run(ActionClass::SearchNews, "what is x?", &f, &[], &[])[0].template, "refuse");
    }

    #[test]
    fn ask_more_and_compute() {
        let mut f = Frame::new();
        f.set("initial_value", SlotValue::amount(35000.0, "BRL"));
        let r = run(ActionClass::AskMore, "", &f, &[], &["initial_value", "period"]);
        assert_eq!(r[0].template, "ask_period");
        let r = run(ActionClass::Compute, "", &f, &["cdb"], &["initial_value", "period"]);
        assert_eq!(r[0].template, "ask_period");
        f.set("period", SlotValue::period(2.0, crate::dialog::TimeUnit::Year));
        let r = run(ActionClass::Compute, "", &f, &["cdb"], &["initial_value", "period"]);
        assert_eq!(r[0].template, "failure");
        let f = profile_with("cdb").view(&f);
        let r = run(ActionClass::Compute, "", &f, &["cdb"], &["initial_value", "period"]);
        assert_eq!(r[0].text, "If you invest in CDB, you will have R$ 70000.00 after 2 years.");
        assert_eq!(r[0].slots.get("roi_cdb"), Some(&SlotValue::amount(70000.0, "BRL")));
        let f = profile_with("broken").view(&f);
        let r = run(ActionClass::Compute, "", &f, &["broken"], &["initial_value"]);
        assert_eq!(r[0].speech_act.as_str(), "FAILURE");
    }

    fn registry() -> IntentRegistry {
        let mut reg = IntentRegistry::new();
        for (id, act) in [
            ("greet", "GREETINGS"),
            ("query_definition", "QUERY_DEFINITION"),
            ("inform_definition", "INFORM_DEFINITION"),
        ] {
            reg.insert(IntentClass {
                id: id.into(),
                speech_act: SpeechAct::new(act),
                entities: vec![],
                features: vec![],
            })
            .unwrap();
        }
        reg
    }

    fn binding(bot: Option<&str>, intent: &str, class: ActionClass, answer: &str) -> BindingDef {
        BindingDef {
            bot: bot.map(String::from),
            intent: intent.into(),
            action_class: class,
            answer_intent: Some(answer.into()),
            entities: vec![],
            features: vec![],
        }
    }

    #[test]
    fn classify_action_lookup() {
        let reg = registry();
        let b = Bindings::build(
            &[
                binding(None, "greet", ActionClass::Greet, "greet"),
                binding(Some("cdbguru"), "query_definition", ActionClass::GetDefinition, "inform_definition"),
            ],
            &reg,
        )
        .unwrap();
        assert_eq!(classify_action("x", &"greet".into(), &b).action_class, ActionClass::Greet);
        let s = classify_action("cdbguru", &"query_definition".into(), &b);
        assert_eq!((s.action_class, s.speech_act.as_str()), (ActionClass::GetDefinition, "INFORM_DEFINITION"));
        assert_eq!(classify_action("cognia", &"query_definition".into(), &b).action_class, ActionClass::NoAction);
        assert_eq!(classify_action("x", &"zzz".into(), &b).action_class, ActionClass::NoAction);
        assert!(Bindings::build(&[binding(None, "zzz", ActionClass::Greet, "greet")], &reg).is_err());
    }

    fn utterance(sender: &str, text: &str, ann: Annotations) -> Utterance {
        Utterance {
            id: "u".into(),
            group_id: "g".into(),
            sender: sender.into(),
            text: text.into(),
            reply_to: None,
            timestamp: 0,
            annotations: Some(ann),
        }
    }

    fn profile_with(entity: &str) -> BotProfile {
        BotProfile { provides: vec![entity.into()], ..profile("x", Role::ExpertBot, &[]) }
    }

    fn profile(id: &str, role: Role, topics: &[&str]) -> BotProfile {
        BotProfile {
            id: id.into(),
            display_name: id.into(),
            role,
            topics: topics.iter().map(|s| s.to_string()).collect(),
            intents: vec![],
            provides: vec![],
        }
    }

    #[test]
    fn pipeline_filter_and_answers() {
        let reg = registry();
        let bindings = Bindings::build(
            &[
                binding(None, "greet", ActionClass::Greet, "greet"),
                binding(Some("cdbguru"), "query_definition", ActionClass::GetDefinition, "inform_definition"),
            ],
            &reg,
        )
        .unwrap();
        let flow = IntentFlow::new(vec![FlowEdge {
            from_intent: "query_definition".into(),
            replying_to: None,
            answer_intent: "inform_definition".into(),
        }]);
        let t = templates();
        let deps = PipelineDeps {
            bindings: &bindings,
            flow: &flow,
            registry: &reg,
            executor: Executor { templates: &t, services: &Fake },
        };
        let cdb = profile("cdbguru", Role::ExpertBot, &["cdb"]);
        let cognia = profile("cognia", Role::Mediator, &["finance", "other"]);
        let f = Frame::new();

        let def = Annotations {
            topic: Some("cdb".into()),
            speech_act: Some(SpeechAct::new("QUERY_DEFINITION")),
            intent: Some("query_definition".into()),
            understood: true,
            ..Default::default()
        };
        let u = utterance("alice", "what is cdb?", def.clone());
        let r = bot_handle(&cdb, &u, None, &f, false, true, &deps);
        assert_eq!(r[0].intent.as_str(), "inform_definition");
        assert!(bot_handle(&cognia, &u, None, &f, false, true, &deps).is_empty());
        assert!(bot_handle(&cdb, &utterance("cdbguru", "what is cdb?", def), None, &f, false, true, &deps).is_empty());

        let off = Annotations { topic: Some("other".into()), understood: false, ..Default::default() };
        let u = utterance(
            "alice",
            "where is the moon?",
            Annotations { speech_act: Some(SpeechAct::new("QUERY")), ..off.clone() },
        );
        assert!(bot_handle(&cdb, &u, None, &f, true, true, &deps).is_empty());
        let r = bot_handle(&cognia, &u, None, &f, false, true, &deps);
        assert_eq!(r[0].text, "I don't know... I can only talk about finance.");
        let u = utterance("alice", "blorf", Annotations { speech_act: Some(SpeechAct::new("INFORM")), ..off });
        assert_eq!(bot_handle(&cognia, &u, None, &f, false, true, &deps)[0].template, "didnt_understand");
    }
}
