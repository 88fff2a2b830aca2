//! Loads every model the hub needs into one immutable [`Stack`], either from
//! files or from the built-in Cognia configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::Deserialize;

use crate::action::{Bindings, BotProfile, Services, Templates};
use crate::dialog::{DialogConfig, Frame, IntentFlow, IntentRegistry, SpeechActRegistry};
use crate::domain::{lookup_definition, parse_jsonl, search_news, Definition, NewsDoc, RatesProfile, SimulationResult};
use crate::error::{read_file, ConfigError};
use crate::nlu::frame::InvestmentVerbs;
use crate::nlu::intent::{Embeddings, TrainingSet};
use crate::nlu::speech_act::SpeechActRules;
use crate::nlu::topic::TopicLexicon;
use crate::nlu::{Analyzer, DEFAULT_THRESHOLD};
use crate::norms::{load_norms, Directive, NormSet, LATE_BOUND};

/// Raw text of every configuration file.
#[derive(Debug, Clone)]
pub struct Sources {
    pub domain: String,
    pub norms: String,
    pub flow: String,
    pub bindings: String,
    pub embeddings: String,
    pub trainset: String,
    pub definitions: String,
    pub news: String,
}

/// Optional file overrides; unset entries use the built-in files.
#[derive(Debug, Clone, Default)]
pub struct Paths {
    pub domain: Option<PathBuf>,
    pub norms: Option<PathBuf>,
    pub flow: Option<PathBuf>,
    pub bindings: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub trainset: Option<PathBuf>,
    /// Directory holding `definitions.jsonl` and `news.jsonl`.
    pub corpus: Option<PathBuf>,
}

impl Sources {
    pub fn builtin() -> Self {
        Sources {
            domain: include_str!("../data/cognia.json").into(),
            norms: include_str!("../data/norms.json").into(),
            flow: include_str!("../data/flow.json").into(),
            bindings: include_str!("../data/bindings.json").into(),
            embeddings: include_str!("../data/embeddings.txt").into(),
            trainset: include_str!("../data/trainset.jsonl").into(),
            definitions: include_str!("../data/corpus/definitions.jsonl").into(),
            news: include_str!("../data/corpus/news.jsonl").into(),
        }
    }

    pub fn load(paths: &Paths) -> Result<Self, ConfigError> {
        let mut s = Self::builtin();
        let pick = |slot: &mut String, p: &Option<PathBuf>| -> Result<(), ConfigError> {
            if let Some(p) = p {
                *slot = read_file(p)?;
            }
            Ok(())
        };
        pick(&mut s.domain, &paths.domain)?;
        pick(&mut s.norms, &paths.norms)?;
        pick(&mut s.flow, &paths.flow)?;
        pick(&mut s.bindings, &paths.bindings)?;
        pick(&mut s.embeddings, &paths.embeddings)?;
        pick(&mut s.trainset, &paths.trainset)?;
        if let Some(dir) = &paths.corpus {
            s.definitions = read_file(dir.join("definitions.jsonl"))?;
            s.news = read_file(dir.join("news.jsonl"))?;
        }
        Ok(s)
    }
}

#[derive(Debug, Deserialize)]
struct DomainFile {
    bots: Vec<BotProfile>,
    #[serde(default)]
    labels: BTreeMap<String, String>,
    #[serde(default = "default_topic_name")]
    topic_name: String,
    slots: Vec<String>,
    #[serde(default)]
    investment_verbs: Vec<String>,
    #[serde(default = "default_threshold")]
    threshold: f64,
    topics: serde_json::Value,
    speech_acts: serde_json::Value,
    templates: Templates,
    rates: serde_json::Value,
}

fn default_topic_name() -> String {
    "investments".into()
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

/// Corpora and rates behind the bots' services.
#[derive(Debug, Clone)]
pub struct CogniaServices {
    pub definitions: Vec<Definition>,
    pub news: Vec<NewsDoc>,
    pub rates: RatesProfile,
    pub labels: BTreeMap<String, String>,
}

impl Services for CogniaServices {
    fn define(&self, query: &str) -> Option<String> {
        lookup_definition(query, &self.definitions).map(|d| d.text.clone())
    }

    fn search_news(&self, query: &str) -> Option<String> {
        search_news(query, &self.news).map(|d| d.text.clone())
    }

    fn compute(&self, entity: &str, frame: &Frame) -> Result<SimulationResult, String> {
        let iv = frame.get("initial_value").and_then(|v| v.number()).ok_or("no initial value")?;
        let days = frame.get("period").and_then(|v| v.days()).ok_or("no period")?;
        let final_amount = match entity {
            "savings_account" => self.rates.savings(iv, days),
            "certificate_of_deposit" => self.rates.cdb(iv, days),
            other => return Err(format!("unknown entity {other}")),
        }
        .map_err(|e| e.to_string())?;
        Ok(SimulationResult { option: entity.into(), final_amount, initial_value: iv, days })
    }

    fn label(&self, entity: &str) -> String {
        self.labels.get(entity).cloned().unwrap_or_else(|| entity.to_string())
    }
}

/// Every loaded model; shared read-only by all groups.
pub struct Stack {
    pub acts: SpeechActRegistry,
    pub registry: IntentRegistry,
    pub flow: IntentFlow,
    pub bindings: Bindings,
    pub norms: NormSet,
    pub analyzer: Analyzer,
    pub templates: Templates,
    pub bots: Vec<BotProfile>,
    pub services: Arc<CogniaServices>,
    /// Slots the context store accepts.
    pub slots: Vec<String>,
    /// Subject the mediator names when it cannot help.
    pub topic_name: String,
    pub epsilon: f64,
}

impl std::fmt::Debug for Stack {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stack")
            .field("norms", &self.norms.len())
            .field("bots", &self.bots.iter().map(|b| &b.id).collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

fn parse<T: serde::de::DeserializeOwned>(src: &str) -> Result<T, ConfigError> {
    serde_json::from_str(src).map_err(|e| ConfigError::Parse { line: e.line(), message: e.to_string() })
}

impl Stack {
    /// The built-in configuration; it is validated by the test suite.
    pub fn builtin() -> Self {
        Self::build(&Sources::builtin()).expect("built-in configuration is valid")
    }

    pub fn from_paths(paths: &Paths) -> Result<Self, ConfigError> {
        Self::build(&Sources::load(paths)?)
    }

    pub fn build(src: &Sources) -> Result<Self, ConfigError> {
        let acts = SpeechActRegistry::finance();
        let domain: DomainFile = parse(&src.domain)?;
        let dialog = DialogConfig::from_json(&src.flow)?.merge(DialogConfig::from_json(&src.bindings)?);
        let registry = dialog.registry(&acts)?;
        let flow = dialog.intent_flow();
        let report = crate::dialog::validate_flow(&flow, &registry);
        if let Some(e) = report.errors.first() {
            return Err(ConfigError::Invalid(format!("intent flow: {e}")));
        }
        for w in &report.warnings {
            tracing::warn!("intent flow: {w}");
        }
        let bindings = Bindings::build(&dialog.bindings, &registry)?;
        let norms = load_norms(&src.norms, Some(&acts))?;

        let embeddings = Embeddings::parse(&src.embeddings)?;
        let trainset = TrainingSet::from_jsonl(&src.trainset, &embeddings)?;
        let verbs = if domain.investment_verbs.is_empty() {
            InvestmentVerbs::default()
        } else {
            InvestmentVerbs::new(domain.investment_verbs.iter().cloned())
        };
        let analyzer = Analyzer {
            topics: TopicLexicon::from_json(&domain.topics.to_string())?,
            speech_acts: SpeechActRules::from_json(&domain.speech_acts.to_string(), &acts)?,
            embeddings,
            trainset,
            verbs,
            threshold: domain.threshold,
        };
        let rates = RatesProfile::from_json(&domain.rates.to_string())?;
        let services = CogniaServices {
            definitions: parse_jsonl(&src.definitions)?,
            news: parse_jsonl(&src.news)?,
            rates: rates.clone(),
            labels: domain.labels,
        };
        let stack = Stack {
            acts,
            registry,
            flow,
            bindings,
            norms,
            analyzer,
            templates: domain.templates,
            bots: domain.bots,
            services: Arc::new(services),
            slots: domain.slots,
            topic_name: domain.topic_name,
            epsilon: rates.epsilon,
        };
        stack.check()?;
        Ok(stack)
    }

    pub fn bot(&self, id: &str) -> Option<&BotProfile> {
        self.bots.iter().find(|b| b.id == id)
    }

    /// Cross-file references: bots, templates, slots.
    fn check(&self) -> Result<(), ConfigError> {
        let mut ids = std::collections::BTreeSet::new();
        for b in &self.bots {
            if !ids.insert(b.id.as_str()) {
                return Err(ConfigError::Duplicate(format!("bot {}", b.id)));
            }
        }
        let need = |id: &str| -> Result<(), ConfigError> {
            if self.templates.contains(id) {
                Ok(())
            } else {
                Err(ConfigError::UnknownReference(format!("template {id}")))
            }
        };
        for id in self.norms.template_ids() {
            need(id)?;
        }
        for slot in &self.norms.vocabulary.slots {
            if !self.slots.contains(slot) {
                return Err(ConfigError::UnknownReference(format!("slot {slot} is not a context slot")));
            }
            need(&format!("ask_{slot}"))?;
        }
        for m in &self.norms.vocabulary.members {
            if !LATE_BOUND.contains(&m.as_str()) && self.bot(m).is_none() {
                return Err(ConfigError::UnknownReference(format!("member {m} is not a known bot")));
            }
        }
        for n in &self.norms.norms {
            for d in &n.behaviors {
                if matches!(d, Directive::Forward(_)) {
                    need("forward_query")?;
                    need("forward_simulation")?;
                }
                if matches!(d, Directive::CompareAndInform) {
                    for c in ["compare_better", "compare_no_difference", "compare_report", "thanks_experts"] {
                        need(c)?;
                    }
                }
            }
        }
        for b in &self.bots {
            for e in &b.provides {
                need(&format!("simulation_{e}"))?;
            }
        }
        for bot in self.bindings.bots() {
            if self.bot(bot).is_none() {
                return Err(ConfigError::UnknownReference(format!("binding for unknown bot {bot}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::{SlotValue, TimeUnit};
    use crate::nlu::intent::classify_intent;

    #[test]
    fn builtin_loads() {
        let s = Stack::builtin();
        assert_eq!(s.norms.len(), 18);
        assert_eq!(s.bots.len(), 3);
        assert!(s.bot("cognia").is_some_and(|b| b.role == crate::dialog::Role::Mediator));
    }

    #[test]
    fn training_samples_are_their_own_nearest_neighbour() {
        let s = Stack::builtin();
        let ts = &s.analyzer.trainset;
        for sample in ts.samples() {
            let c = classify_intent(&sample.vector, ts).unwrap();
            assert_eq!(c.distance, 0.0, "{}", sample.text);
            assert_eq!(c.intent, sample.intent, "{}", sample.text);
        }
    }

    #[test]
    fn d1_user_turns() {
        let s = Stack::builtin();
        let brl = |v| SlotValue::amount(v, "BRL");
        type Case<'a> = (&'a str, &'a str, &'a str, &'a str, Vec<(&'a str, SlotValue)>);
        let cases: Vec<Case> = vec![
            ("hello", "GREETINGS", "other", "greet", vec![]),
            ("what is cdb?", "QUERY_DEFINITION", "cdb", "query_definition", vec![]),
            ("which is better: cdb or savings account?", "QUERY_NEWS", "finance", "query_news", vec![]),
            (
                "i would like to invest R$ 50 in six months",
                "QUERY_CALCULATION",
                "finance",
                "query_calculation",
                vec![("initial_value", brl(50.0)), ("period", SlotValue::period(6.0, TimeUnit::Month))],
            ),
            (
                "so i want to invest R$ 10000 in 2 years",
                "QUERY_CALCULATION",
                "finance",
                "query_calculation",
                vec![("initial_value", brl(10000.0)), ("period", SlotValue::period(2.0, TimeUnit::Year))],
            ),
            (
                "what if i invest R$10,000 in 5 years?",
                "QUERY_CALCULATION",
                "finance",
                "query_calculation",
                vec![("initial_value", brl(10000.0)), ("period", SlotValue::period(5.0, TimeUnit::Year))],
            ),
            (
                "how about 15 years?",
                "QUERY_CALCULATION",
                "other",
                "query_calculation",
                vec![("period", SlotValue::period(15.0, TimeUnit::Year))],
            ),
            ("and 50,0000?", "QUERY_CALCULATION", "other", "query_calculation", vec![("initial_value", brl(500000.0))]),
            (
                "I want to invest in 50,000 for 15 years in CDB",
                "REQUEST",
                "cdb",
                "invest_request",
                vec![("initial_value", brl(50000.0)), ("period", SlotValue::period(15.0, TimeUnit::Year))],
            ),
            ("thanks", "THANK", "other", "thank", vec![]),
        ];
        for (text, act, topic, intent, slots) in cases {
            let a = s.analyzer.analyze(text, &Frame::new());
            assert_eq!(a.speech_act.as_str(), act, "{text}");
            assert_eq!(a.topic, topic, "{text}");
            assert!(a.understood, "{text}: {:?} {:?}", a.canonical, a.distance);
            assert_eq!(a.intent.as_ref().map(|i| i.as_str()), Some(intent), "{text}");
            let want: BTreeMap<String, SlotValue> = slots.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            assert_eq!(a.slots, want, "{text}");
        }
    }

    #[test]
    fn bad_reference_is_rejected() {
        let mut src = Sources::builtin();
        src.norms = src.norms.replace("\"only_investments\"", "\"no_such_template\"");
        assert!(matches!(Stack::build(&src), Err(ConfigError::UnknownReference(_))));
        let mut src = Sources::builtin();
        src.domain = src.domain.replace("\"id\": \"cdbguru\"", "\"id\": \"poupancaguru\"");
        assert!(matches!(Stack::build(&src), Err(ConfigError::Duplicate(_))));
    }

    #[test]
    fn services_compute_d1_values() {
        let s = Stack::builtin();
        let mut f = Frame::new();
        f.set("initial_value", SlotValue::amount(50.0, "BRL"));
        f.set("period", SlotValue::period(6.0, TimeUnit::Month));
        let sav = s.services.compute("savings_account", &f).unwrap().final_amount;
        let cdb = s.services.compute("certificate_of_deposit", &f).unwrap().final_amount;
        assert!((sav - 50.0 * (1.0 + 6.0 / 288.0)).abs() < 1e-9);
        let gross = 50.0 * 0.0708 * 180.0 / 365.0;
        assert!((cdb - (50.0 + gross * 0.8)).abs() < 1e-9);
        assert!(s.services.compute("gold", &f).is_err());
    }
}
