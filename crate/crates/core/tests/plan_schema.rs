use agentplan::error::{Error, PlanViolation};
use agentplan::planner::{parse_plan, Plan, Roster, SubTask};
use agentplan::prompts::ONE_SHOT_PLAN;

#[test]
fn one_shot_plan_shape() {
    let r = Roster::standard();
    let plan = parse_plan(ONE_SHOT_PLAN, "q", &r).unwrap();
    assert_eq!(plan.len(), 3);
    let deps: Vec<Vec<u32>> = plan.subtasks().iter().map(|s| s.deps.clone()).collect();
    assert_eq!(deps, vec![vec![], vec![1], vec![2]]);
    assert_eq!(plan.topological_order(), vec![1, 2, 3]);
}

#[test]
fn serialization_round_trips() {
    let r = Roster::standard();
    let plan = parse_plan(ONE_SHOT_PLAN, "q", &r).unwrap();
    let again = parse_plan(&plan.to_json_string(), "q", &r).unwrap();
    assert_eq!(again, plan);
    let via_serde: Plan = serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap();
    assert_eq!(via_serde, plan);
}

#[test]
fn cyclic_plan_rejected() {
    let r = Roster::standard();
    let raw = r#"[{"id":1,"name":"math_agent","task":"a","dep":[2]},
                  {"id":2,"name":"math_agent","task":"b","dep":[1]}]"#;
    let err = parse_plan(raw, "q", &r).unwrap_err();
    assert!(matches!(err, Error::PlanValidation(PlanViolation::Cycle(_))), "{err:?}");
    let direct = Plan::new("q", vec![SubTask::new(1, "a", "math_agent", vec![1])], &r);
    assert!(direct.is_err());
}

#[test]
fn unknown_agent_rejected() {
    let r = Roster::standard();
    let raw = r#"[{"id":1,"name":"wizard_agent","task":"a","dep":[]}]"#;
    let err = parse_plan(raw, "q", &r).unwrap_err();
    assert!(
        matches!(err, Error::PlanValidation(PlanViolation::UnknownAgent { .. })),
        "{err:?}"
    );
}

#[test]
fn topological_order_is_valid_on_shuffled_input() {
    let r = Roster::standard();
    let plan = Plan::new(
        "q",
        vec![
            SubTask::new(4, "d", "math_agent", vec![2, 3]),
            SubTask::new(2, "b", "math_agent", vec![1]),
            SubTask::new(3, "c", "math_agent", vec![1]),
            SubTask::new(1, "a", "math_agent", vec![]),
        ],
        &r,
    )
    .unwrap();
    let order = plan.topological_order();
    let pos = |id: u32| order.iter().position(|&x| x == id).unwrap();
    for s in plan.subtasks() {
        for d in &s.deps {
            assert!(pos(*d) < pos(s.id));
        }
    }
}
