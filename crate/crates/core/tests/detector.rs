use std::sync::Arc;

use agentplan::detector::{parse_detection, PlanDetector, PASS_PHRASE};
use agentplan::gateway::{Gateway, ScriptEntry, ScriptedBackend};
use agentplan::planner::{MetaPlanner, Plan, Query, Roster, SubTask};
use agentplan::prompts::Prompts;

const VERDICT: &str = "Analyse: This plan does not satisfy completeness because the subtask loses the information of 'a plane can carry 300 passengers' of the original task. This plan satisfies non-redundancy because each subtask has a unique focus and there is no overlap in the information covered.\nSuggestions: Add the information of 'a plane can carry 300 passengers' to subtask 1 and subtask 2.";

const REVISED: &str = r#"[{"task":"Passengers from Brazil to Nigeria with a full load of 300.","id":1,"name":"math_agent","reason":"","dep":[]},
{"task":"Passengers back with 75% of 300 seats filled.","id":2,"name":"math_agent","reason":"","dep":[]},
{"task":"Total passengers in one round trip.","id":3,"name":"math_agent","reason":"","dep":[1,2]}]"#;

fn plan(r: &Roster) -> Plan {
    Plan::new(
        "brazil",
        vec![
            SubTask::new(
                1,
                "Passengers from Brazil to Nigeria with a full load.",
                "math_agent",
                vec![],
            ),
            SubTask::new(2, "Passengers back with 75% capacity.", "math_agent", vec![]),
            SubTask::new(3, "Total passengers in one round trip.", "math_agent", vec![1, 2]),
        ],
        r,
    )
    .unwrap()
}

#[test]
fn verdicts() {
    let pass = parse_detection(&format!("After review: {PASS_PHRASE}")).unwrap();
    assert!(pass.complete && pass.non_redundant && pass.passed());

    let v = parse_detection(VERDICT).unwrap();
    assert!(!v.complete);
    assert!(v.non_redundant);
    assert_eq!(
        v.suggestions,
        "Add the information of 'a plane can carry 300 passengers' to subtask 1 and subtask 2."
    );

    let both = parse_detection(
        "Analyse: The plan does not satisfy completeness since a number is dropped, and it does not satisfy non-redundancy because 1 and 2 repeat.\nSuggestions: merge them.",
    )
    .unwrap();
    assert!(!both.complete && !both.non_redundant);
}

#[test]
fn always_failing_detector_stops_at_the_round_budget() {
    let r = Roster::standard();
    let prompts = Arc::new(Prompts::builtin());
    let q = Query::new(
        "brazil",
        "If a plane can carry 300 passengers ... how many in one round trip?",
    )
    .unwrap();
    for rounds in 0..=4u32 {
        let gw = Arc::new(Gateway::scripted(ScriptedBackend::new(vec![
            ScriptEntry::new("reviewed by a plan detector", REVISED),
            ScriptEntry::new("plan detector", VERDICT),
        ])));
        let planner = MetaPlanner::new(gw.clone(), r.clone(), prompts.clone());
        let detector = PlanDetector::new(gw.clone(), prompts.clone()).with_max_rounds(rounds);
        let out = detector.refine(&planner, &q, plan(&r)).unwrap();
        let usage = gw.usage_report();
        let calls = |tag: &str| usage.entries.iter().find(|e| e.tag == tag).map_or(0, |e| e.calls);
        assert_eq!(calls("detector"), u64::from(rounds));
        assert_eq!(calls("revise"), u64::from(rounds));
        assert_eq!(out.unresolved, rounds > 0);
        if rounds > 0 {
            assert_eq!(
                out.plan.subtasks()[0].task,
                "Passengers from Brazil to Nigeria with a full load of 300."
            );
        }
    }
}
