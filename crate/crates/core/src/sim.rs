//! Scripted replay over the WebSocket gateway.
//!
//! Each simulated user opens its own connection and group per dialogue,
//! posts the scripted turns and waits for the expected bot responses in
//! order. Bot utterances that match nothing expected are tolerated as
//! extras; one that matches a later expectation of the same step is an
//! ordering failure.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use crate::hub::wire::{FrameType, WireFrame};

/// The bundled finance-advisory dialogue.
pub const BUILTIN_SUITE: &str = include_str!("../data/suites/d1.json");

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("cannot read suite: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed suite: {0}")]
    Parse(String),
    #[error("dialogue {dialogue}, step {step}: {message}")]
    Step { dialogue: String, step: usize, message: String },
    #[error("suite has no dialogues")]
    Empty,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot connect to {endpoint}: {message}")]
    Connect { endpoint: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub enum Matcher {
    Template(String),
    Pattern(Regex),
}

#[derive(Debug, Clone)]
pub struct Expected {
    pub bot: String,
    pub matcher: Matcher,
}

impl Expected {
    pub fn matches(&self, sender: &str, text: &str, template: Option<&str>) -> bool {
        sender == self.bot
            && match &self.matcher {
                Matcher::Template(t) => template == Some(t.as_str()),
                Matcher::Pattern(re) => re.is_match(text),
            }
    }

    fn describe(&self) -> String {
        match &self.matcher {
            Matcher::Template(t) => format!("{} [{t}]", self.bot),
            Matcher::Pattern(re) => format!("{} /{}/", self.bot, re.as_str()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Step {
    pub user: String,
    pub expect: Vec<Expected>,
}

#[derive(Debug, Clone)]
pub struct Dialogue {
    pub id: String,
    pub steps: Vec<Step>,
}

impl Dialogue {
    pub fn response_count(&self) -> usize {
        self.steps.iter().map(|s| s.expect.len()).sum()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    dialogues: Vec<DialogueFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DialogueFile {
    id: String,
    steps: Vec<StepFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepFile {
    user: String,
    #[serde(default)]
    expect: Vec<ExpectFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpectFile {
    bot: String,
    template: Option<String>,
    pattern: Option<String>,
}

pub fn load_suite(src: &str) -> Result<Vec<Dialogue>, SuiteError> {
    let file: SuiteFile = serde_json::from_str(src).map_err(|e| SuiteError::Parse(e.to_string()))?;
    if file.dialogues.is_empty() {
        return Err(SuiteError::Empty);
    }
    let mut out = Vec::new();
    for d in file.dialogues {
        let mut steps = Vec::new();
        for (i, s) in d.steps.into_iter().enumerate() {
            let err = |message: String| SuiteError::Step { dialogue: d.id.clone(), step: i + 1, message };
            if s.user.trim().is_empty() {
                return Err(err("empty user text".into()));
            }
            let mut expect = Vec::new();
            for e in s.expect {
                if e.bot.trim().is_empty() {
                    return Err(err("empty bot id".into()));
                }
                let matcher = match (e.template, e.pattern) {
                    (Some(t), None) => Matcher::Template(t),
                    (None, Some(p)) => Matcher::Pattern(Regex::new(&p).map_err(|x| err(x.to_string()))?),
                    _ => return Err(err("expectation needs exactly one of template or pattern".into())),
                };
                expect.push(Expected { bot: e.bot, matcher });
            }
            steps.push(Step { user: s.user, expect });
        }
        if steps.is_empty() {
            return Err(SuiteError::Step { dialogue: d.id, step: 0, message: "no steps".into() });
        }
        out.push(Dialogue { id: d.id, steps });
    }
    Ok(out)
}

pub fn load_suite_file(path: &Path) -> Result<Vec<Dialogue>, SuiteError> {
    load_suite(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub endpoint: String,
    pub users: usize,
    pub max_wait: Duration,
    pub repeat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub run: usize,
    pub user: usize,
    pub dialogue: String,
    pub step: usize,
    /// 1-based index over the dialogue's expected responses.
    pub response: usize,
    pub bot: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub run: usize,
    pub user: usize,
    pub dialogue: String,
    pub step: usize,
    pub response: usize,
    pub expected: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Report {
    pub runs: usize,
    pub users: usize,
    pub records: Vec<ResponseRecord>,
    pub failures: Vec<Failure>,
    pub extras: usize,
    /// Events received for a group other than the user's own.
    pub foreign_events: usize,
    pub elapsed_ms: f64,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.foreign_events == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseStats {
    pub dialogue: String,
    pub response: usize,
    pub bot: String,
    pub count: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub stddev_ms: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Population standard deviation.
pub fn stddev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Latency statistics per expected response, across users and runs.
pub fn summarize(report: &Report) -> Vec<ResponseStats> {
    let mut groups: BTreeMap<(String, usize), (String, Vec<f64>)> = BTreeMap::new();
    for r in &report.records {
        groups
            .entry((r.dialogue.clone(), r.response))
            .or_insert_with(|| (r.bot.clone(), Vec::new()))
            .1
            .push(r.latency_ms);
    }
    groups
        .into_iter()
        .map(|((dialogue, response), (bot, v))| ResponseStats {
            dialogue,
            response,
            bot,
            count: v.len(),
            median_ms: median(&v),
            min_ms: v.iter().copied().fold(f64::INFINITY, f64::min),
            max_ms: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            stddev_ms: stddev(&v),
        })
        .collect()
}

pub fn render_summary(stats: &[ResponseStats]) -> String {
    let mut out = format!(
        "{:<10} {:>4} {:<14} {:>5} {:>10} {:>10} {:>10} {:>10}\n",
        "dialogue", "resp", "bot", "n", "median_ms", "min_ms", "max_ms", "stddev_ms"
    );
    for s in stats {
        out.push_str(&format!(
            "{:<10} {:>4} {:<14} {:>5} {:>10.2} {:>10.2} {:>10.2} {:>10.2}\n",
            s.dialogue, s.response, s.bot, s.count, s.median_ms, s.min_ms, s.max_ms, s.stddev_ms
        ));
    }
    out
}

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Outcome {
    records: Vec<ResponseRecord>,
    failure: Option<Failure>,
    extras: usize,
    foreign: usize,
}

async fn send(ws: &mut Ws, frame: &WireFrame) -> Result<(), String> {
    ws.send(Message::Text(frame.to_text())).await.map_err(|e| e.to_string())
}

async fn recv(ws: &mut Ws, deadline: Instant) -> Result<WireFrame, String> {
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        match tokio::time::timeout(left, ws.next()).await {
            Err(_) => return Err("timed out".into()),
            Ok(None) => return Err("connection closed".into()),
            Ok(Some(Err(e))) => return Err(e.to_string()),
            Ok(Some(Ok(Message::Text(t)))) => return WireFrame::parse(&t).map_err(|e| e.to_string()),
            Ok(Some(Ok(Message::Close(_)))) => return Err("connection closed".into()),
            Ok(Some(Ok(_))) => continue,
        }
    }
}

async fn run_dialogue(
    endpoint: &str,
    run: usize,
    user: usize,
    d: &Dialogue,
    max_wait: Duration,
) -> Result<Outcome, SimError> {
    let (mut ws, _) = tokio_tungstenite::connect_async_with_config(endpoint, None, true)
        .await
        .map_err(|e| SimError::Connect { endpoint: endpoint.to_string(), message: e.to_string() })?;
    let member = format!("user{user}");
    let mut out = Outcome { records: Vec::new(), failure: None, extras: 0, foreign: 0 };
    let fail = |step: usize, response: usize, expected: String, reason: String| Failure {
        run,
        user,
        dialogue: d.id.clone(),
        step,
        response,
        expected,
        reason,
    };

    let setup_deadline = Instant::now() + max_wait;
    let group = match send(&mut ws, &WireFrame::create_group(&member, None)).await {
        Err(e) => Err(e),
        Ok(()) => loop {
            match recv(&mut ws, setup_deadline).await {
                Ok(f) if f.kind == FrameType::Ack => break Ok(f.group_id.unwrap_or_default()),
                Ok(f) if f.kind == FrameType::Error => break Err(f.message.unwrap_or_default()),
                Ok(_) => continue,
                Err(e) => break Err(e),
            }
        },
    };
    let group = match group {
        Ok(g) => g,
        Err(e) => {
            out.failure = Some(fail(0, 0, "group creation".into(), e));
            return Ok(out);
        }
    };

    let mut response = 0;
    'steps: for (si, step) in d.steps.iter().enumerate() {
        let step_no = si + 1;
        let sent = Instant::now();
        if let Err(e) = send(&mut ws, &WireFrame::utterance(&group, &member, &step.user, None)).await {
            out.failure = Some(fail(step_no, response + 1, "send".into(), e));
            break;
        }
        let mut next = 0;
        while next < step.expect.len() {
            let exp = &step.expect[next];
            let deadline = sent + max_wait;
            let frame = match recv(&mut ws, deadline).await {
                Ok(f) => f,
                Err(e) => {
                    out.failure = Some(fail(step_no, response + next + 1, exp.describe(), e));
                    break 'steps;
                }
            };
            if frame.group_id.as_deref().is_some_and(|g| g != group) {
                out.foreign += 1;
                continue;
            }
            match frame.kind {
                FrameType::Error => {
                    let reason = frame.message.unwrap_or_default();
                    out.failure = Some(fail(step_no, response + next + 1, exp.describe(), reason));
                    break 'steps;
                }
                FrameType::Event if frame.event.as_deref() == Some("utterance") => {}
                _ => continue,
            }
            let sender = frame.member_id.as_deref().unwrap_or_default();
            if sender == member {
                continue;
            }
            let text = frame.text.as_deref().unwrap_or_default();
            let template = frame.template.as_deref();
            if exp.matches(sender, text, template) {
                out.records.push(ResponseRecord {
                    run,
                    user,
                    dialogue: d.id.clone(),
                    step: step_no,
                    response: response + next + 1,
                    bot: exp.bot.clone(),
                    latency_ms: sent.elapsed().as_secs_f64() * 1000.0,
                });
                next += 1;
            } else if let Some(k) = step.expect[next + 1..].iter().position(|e| e.matches(sender, text, template)) {
                let reason = format!(
                    "out of order: got {sender} [{}] matching response {}",
                    template.unwrap_or(text),
                    response + next + k + 2
                );
                out.failure = Some(fail(step_no, response + next + 1, exp.describe(), reason));
                break 'steps;
            } else {
                out.extras += 1;
            }
        }
        response += step.expect.len();
    }
    let _ = send(&mut ws, &WireFrame::leave(&group, &member)).await;
    let _ = ws.close(None).await;
    Ok(out)
}

/// Runs every dialogue for `users` concurrent users, `repeat` times over.
/// A failure stops that user's run; connection errors abort the whole run.
pub async fn run_simulation(suite: &[Dialogue], config: &SimConfig) -> Result<Report, SimError> {
    if config.users == 0 || config.repeat == 0 {
        return Err(SimError::Config("users and repeat must be at least 1".into()));
    }
    let started = Instant::now();
    let mut report = Report { runs: config.repeat, users: config.users, ..Default::default() };
    for run in 1..=config.repeat {
        let mut tasks = Vec::new();
        for user in 1..=config.users {
            let suite = suite.to_vec();
            let endpoint = config.endpoint.clone();
            let max_wait = config.max_wait;
            tasks.push(tokio::spawn(async move {
                let mut outcomes = Vec::new();
                for d in &suite {
                    let o = run_dialogue(&endpoint, run, user, d, max_wait).await?;
                    let stop = o.failure.is_some();
                    outcomes.push(o);
                    if stop {
                        break;
                    }
                }
                Ok::<_, SimError>(outcomes)
            }));
        }
        for t in tasks {
            let outcomes = t.await.map_err(|e| SimError::Config(e.to_string()))??;
            for o in outcomes {
                report.records.extend(o.records);
                report.failures.extend(o.failure);
                report.extras += o.extras;
                report.foreign_events += o.foreign;
            }
        }
    }
    report
        .records
        .sort_by(|a, b| (a.run, a.user, &a.dialogue, a.response).cmp(&(b.run, b.user, &b.dialogue, b.response)));
    report.elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_errors_name_the_step() {
        assert!(matches!(load_suite(r#"{"dialogues":[]}"#), Err(SuiteError::Empty)));
        let bad = r#"{"dialogues":[{"id":"x","steps":[
            {"user":"hi","expect":[{"bot":"cognia","template":"greet_rapport"}]},
            {"user":"what?","expect":[{"bot":"cognia"}]}]}]}"#;
        match load_suite(bad) {
            Err(SuiteError::Step { step, .. }) => assert_eq!(step, 2),
            other => panic!("unexpected {other:?}"),
        }
        let bad_re = r#"{"dialogues":[{"id":"x","steps":[{"user":"hi","expect":[{"bot":"c","pattern":"("}]}]}]}"#;
        assert!(matches!(load_suite(bad_re), Err(SuiteError::Step { step: 1, .. })));
        assert!(matches!(load_suite("{"), Err(SuiteError::Parse(_))));
    }

    #[test]
    fn builtin_suite_loads() {
        let s = load_suite(BUILTIN_SUITE).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].steps.len(), 10);
        assert_eq!(s[0].response_count(), 31);
    }

    #[test]
    fn statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(stddev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]), 2.0);
        let rec = |user, latency_ms| ResponseRecord {
            run: 1,
            user,
            dialogue: "d".into(),
            step: 1,
            response: 1,
            bot: "b".into(),
            latency_ms,
        };
        let report = Report { records: vec![rec(1, 10.0), rec(2, 30.0), rec(3, 20.0)], ..Default::default() };
        let s = summarize(&report);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].count, s[0].median_ms, s[0].min_ms, s[0].max_ms), (3, 20.0, 10.0, 30.0));
    }
}
