mod common;

use std::collections::BTreeSet;

use mpcs_core::config::Stack;
use mpcs_core::norms::{execution_order, match_norms, resolve_all, Directive, NormEvent};

#[test]
fn every_row_fires_alone() {
    let stack = Stack::builtin();
    let scenarios = common::norm_scenarios(&stack);
    let covered: BTreeSet<&str> = scenarios.iter().map(|s| s.norm).collect();
    let all: BTreeSet<&str> = stack.norms.norms.iter().map(|n| n.id.as_str()).collect();
    assert_eq!(covered, all);
    assert_eq!(stack.norms.len(), 18);
    for sc in &scenarios {
        common::check_scenario(&stack, sc).unwrap();
    }
}

#[test]
fn late_bound_targets_resolve_per_event() {
    let stack = Stack::builtin();
    let scenarios = common::norm_scenarios(&stack);
    let targets = |norm: &str| {
        let sc = scenarios.iter().find(|s| s.norm == norm).unwrap();
        let event = NormEvent::new(sc.trigger, sc.utterance.as_ref(), &sc.frame);
        let directives = execution_order(&match_norms(&stack.norms, &event, &sc.state));
        directives
            .iter()
            .filter_map(|d| match d {
                Directive::Invite(m) | Directive::Forward(m) | Directive::Handle(m) => {
                    Some(resolve_all(m, &event, &sc.state))
                }
                Directive::WaitFor { members, .. } => Some(resolve_all(members, &event, &sc.state)),
                _ => None,
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(targets("invite_topic_experts"), vec![vec!["cdbguru".to_string()]; 2]);
    assert_eq!(targets("experts_simulate"), vec![vec!["poupancaguru".to_string(), "cdbguru".to_string()]; 2]);
    assert_eq!(
        targets("social_acts"),
        vec![vec!["cognia".to_string(), "poupancaguru".to_string(), "cdbguru".to_string()]]
    );
}

#[test]
fn consume_stops_later_rows() {
    let stack = Stack::builtin();
    let scenarios = common::norm_scenarios(&stack);
    let sc = scenarios.iter().find(|s| s.norm == "forward_simulation").unwrap();
    let event = NormEvent::new(sc.trigger, sc.utterance.as_ref(), &sc.frame);
    let ids: Vec<String> = match_norms(&stack.norms, &event, &sc.state).into_iter().map(|(id, _)| id).collect();
    // record_values would also hold for this utterance
    assert_eq!(ids, ["forward_simulation"]);
}
