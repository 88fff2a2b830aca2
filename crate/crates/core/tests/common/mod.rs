//! Shared fixtures for integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use mpcs_core::config::Stack;
use mpcs_core::dialog::{Annotations, Frame, Role, SlotValue, SpeechAct, TimeUnit, Utterance};
use mpcs_core::norms::{execution_order, match_norms, GroupState, NormEvent, Trigger, Wait};

pub struct Scenario {
    pub norm: &'static str,
    pub trigger: Trigger,
    pub utterance: Option<Utterance>,
    pub frame: Frame,
    pub state: GroupState,
}

pub fn ann(act: &str, topic: Option<&str>, mentions: &[&str]) -> Annotations {
    Annotations {
        topic: topic.map(Into::into),
        speech_act: Some(SpeechAct::new(act)),
        understood: true,
        mentions: mentions.iter().map(|m| m.to_string()).collect(),
        ..Default::default()
    }
}

pub fn utt(sender: &str, a: Annotations) -> Utterance {
    Utterance {
        id: "g-u1".into(),
        group_id: "g".into(),
        sender: sender.into(),
        text: "scripted".into(),
        reply_to: None,
        timestamp: 0,
        annotations: Some(a),
    }
}

fn state(stack: &Stack, members: &[(&str, Role)]) -> GroupState {
    GroupState {
        members: members.iter().map(|(m, r)| (m.to_string(), *r)).collect(),
        roster: stack.bots.iter().map(|b| b.info()).collect(),
        ..Default::default()
    }
}

fn complete_wait(member: &str) -> Wait {
    let mut w = Wait::default();
    w.members.insert(member.into(), u64::MAX);
    w.record(member, &BTreeMap::new());
    w
}

fn full_frame() -> Frame {
    let mut f = Frame::new();
    f.set("initial_value", SlotValue::amount(50.0, "BRL"));
    f.set("period", SlotValue::period(6.0, TimeUnit::Month));
    f
}

/// One event per norm row, built so that exactly that row matches.
pub fn norm_scenarios(stack: &Stack) -> Vec<Scenario> {
    use Role::*;
    let base = [("alice", OwnerUser), ("cognia", Mediator)];
    let with = |extra: &[(&'static str, Role)]| {
        let mut m = base.to_vec();
        m.extend_from_slice(extra);
        state(stack, &m)
    };
    let both = [("poupancaguru", ExpertBot), ("cdbguru", ExpertBot)];
    let on = |norm, utterance: Utterance, frame: Frame, state: GroupState| Scenario {
        norm,
        trigger: Trigger::OnUtterance,
        utterance: Some(utterance),
        frame,
        state,
    };
    let not_understood = |act: &str| Annotations { understood: false, ..ann(act, None, &[]) };
    let mut expert_waiting = with(&[("cdbguru", ExpertBot)]);
    expert_waiting.awaiting = Some(complete_wait("cdbguru"));
    let mut calc_waiting = with(&[("calcbot", GenericBot)]);
    calc_waiting.awaiting = Some(complete_wait("calcbot"));

    vec![
        Scenario {
            norm: "mediator_joins",
            trigger: Trigger::OnGroupCreated,
            utterance: None,
            frame: Frame::new(),
            state: state(stack, &[("alice", OwnerUser)]),
        },
        on("invite_topic_experts", utt("alice", ann("QUERY_DEFINITION", Some("cdb"), &[])), Frame::new(), with(&[])),
        on(
            "route_to_topic_experts",
            utt("alice", ann("QUERY_DEFINITION", Some("cdb"), &[])),
            Frame::new(),
            with(&[("cdbguru", ExpertBot)]),
        ),
        on(
            "experts_answered",
            utt("cdbguru", ann("INFORM_DEFINITION", Some("cdb"), &[])),
            Frame::new(),
            expert_waiting,
        ),
        on(
            "mentioned_experts_answer",
            utt("cognia", ann("QUERY_DEFINITION", Some("cdb"), &["cdbguru"])),
            Frame::new(),
            with(&[("cdbguru", ExpertBot)]),
        ),
        Scenario {
            norm: "timeout_on_calculation",
            trigger: Trigger::OnTimeout,
            utterance: Some(utt("cognia", ann("QUERY_CALCULATION", None, &["poupancaguru", "cdbguru"]))),
            frame: full_frame(),
            state: with(&both),
        },
        Scenario {
            norm: "timeout_on_question",
            trigger: Trigger::OnTimeout,
            utterance: Some(utt("cognia", ann("QUERY_DEFINITION", Some("cdb"), &["cdbguru"]))),
            frame: Frame::new(),
            state: with(&[("cdbguru", ExpertBot)]),
        },
        on("ask_missing_values", utt("alice", ann("QUERY_CALCULATION", Some("finance"), &[])), Frame::new(), with(&[])),
        on(
            "invite_experts_to_simulate",
            utt("alice", ann("QUERY_CALCULATION", Some("finance"), &[])),
            full_frame(),
            with(&[]),
        ),
        on(
            "forward_simulation",
            utt("alice", ann("QUERY_CALCULATION", Some("finance"), &[])),
            full_frame(),
            with(&both),
        ),
        on("record_values", utt("cognia", ann("QUERY_CALCULATION", None, &[])), full_frame(), with(&both)),
        on(
            "experts_simulate",
            utt("cognia", ann("QUERY_CALCULATION", None, &["poupancaguru", "cdbguru"])),
            full_frame(),
            with(&both),
        ),
        on("compare_simulations", utt("calcbot", ann("INFORM_CALCULATION", None, &[])), full_frame(), calc_waiting),
        on(
            "mention_only",
            utt("alice", Annotations { mentions_only: true, ..ann("INFORM", None, &["cdbguru"]) }),
            Frame::new(),
            with(&[("cdbguru", ExpertBot)]),
        ),
        on("unknown_question", utt("alice", not_understood("QUERY")), Frame::new(), with(&[])),
        on("unknown_statement", utt("alice", not_understood("INFORM")), Frame::new(), with(&[])),
        on("social_acts", utt("alice", ann("GREETINGS", None, &[])), Frame::new(), with(&both)),
        Scenario {
            norm: "group_end",
            trigger: Trigger::OnGroupEnd,
            utterance: None,
            frame: Frame::new(),
            state: with(&both),
        },
    ]
}

/// Runs the matcher on a scenario; Ok when only the scenario's row fires
/// and the directives are exactly that row's, in execution order.
pub fn check_scenario(stack: &Stack, sc: &Scenario) -> Result<(), String> {
    let event = NormEvent::new(sc.trigger, sc.utterance.as_ref(), &sc.frame);
    let matched = match_norms(&stack.norms, &event, &sc.state);
    let ids: Vec<&str> = matched.iter().map(|(id, _)| id.as_str()).collect();
    if ids != [sc.norm] {
        return Err(format!("{}: matched {ids:?}", sc.norm));
    }
    let norm = stack.norms.get(sc.norm).ok_or_else(|| format!("{}: not in the norm set", sc.norm))?;
    let got = execution_order(&matched);
    let want = execution_order(&[(norm.id.clone(), norm.behaviors.clone())]);
    if got != want {
        return Err(format!("{}: directives {got:?}, expected {want:?}", sc.norm));
    }
    Ok(())
}

pub mod replay {
    use std::time::{Duration, Instant};

    use mpcs_core::hub::Session;
    use mpcs_core::sim::{load_suite, Dialogue, BUILTIN_SUITE};

    #[derive(Debug, Clone)]
    pub struct Got {
        pub step: usize,
        pub sender: String,
        pub template: Option<String>,
        pub text: String,
        pub latency: Duration,
    }

    pub fn d1() -> Dialogue {
        load_suite(BUILTIN_SUITE).unwrap().remove(0)
    }

    /// Posts steps `range` of `d` and waits for each step's expected bot
    /// replies in order, skipping extras.
    pub async fn run_steps(
        s: &mut Session,
        d: &Dialogue,
        range: std::ops::Range<usize>,
        wait: Duration,
    ) -> Result<Vec<Got>, String> {
        let mut out = Vec::new();
        for i in range {
            let step = &d.steps[i];
            let sent = Instant::now();
            s.post(&step.user, None).await.map_err(|e| format!("step {}: {e}", i + 1))?;
            for (k, exp) in step.expect.iter().enumerate() {
                loop {
                    let left = (sent + wait).saturating_duration_since(Instant::now());
                    let ev = tokio::time::timeout(left, s.next_event())
                        .await
                        .map_err(|_| format!("step {} response {}: timed out waiting for {}", i + 1, k + 1, exp.bot))?
                        .ok_or_else(|| format!("step {}: event stream closed", i + 1))?;
                    let Some(u) = ev.utterance() else { continue };
                    let template = u.annotations.as_ref().and_then(|a| a.template.clone());
                    if exp.matches(&u.sender, &u.text, template.as_deref()) {
                        out.push(Got {
                            step: i + 1,
                            sender: u.sender.clone(),
                            template,
                            text: u.text.clone(),
                            latency: sent.elapsed(),
                        });
                        break;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Collects events until nothing arrives for `quiet`.
    pub async fn settle(s: &mut Session, quiet: Duration) -> Vec<mpcs_core::hub::Event> {
        let mut out = Vec::new();
        while let Ok(Some(e)) = tokio::time::timeout(quiet, s.next_event()).await {
            out.push(e);
        }
        out
    }
}
