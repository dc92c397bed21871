//! Completeness and non-redundancy checks on a plan, and the bounded
//! detect-then-revise loop.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::planner::{MetaPlanner, Plan, Query};
use crate::prompts::{ask_parsed, Prompts};

pub const PASS_PHRASE: &str = "The plan satisfies completeness and non-redundancy.";
pub const DEFAULT_MAX_DETECTOR_ROUNDS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub complete: bool,
    pub non_redundant: bool,
    pub analysis: String,
    pub suggestions: String,
}

impl DetectionReport {
    pub fn passed(&self) -> bool {
        self.complete && self.non_redundant
    }
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    haystack.to_ascii_lowercase().find(&needle.to_ascii_lowercase())
}

/// Interprets a detector response.
///
/// The pass phrase is matched exactly. Otherwise an `Analyse:` (or
/// `Analysis:`) section is required; a violation is recognised by the
/// phrases "does not satisfy completeness" / "does not satisfy
/// non-redundancy". An analysis naming neither violation is treated as
/// violating both, since a response without the pass phrase is not a pass.
pub fn parse_detection(raw: &str) -> Result<DetectionReport> {
    if raw.contains(PASS_PHRASE) {
        return Ok(DetectionReport {
            complete: true,
            non_redundant: true,
            analysis: String::new(),
            suggestions: String::new(),
        });
    }
    let start = ["analyse:", "analysis:"]
        .iter()
        .filter_map(|h| find_ci(raw, h).map(|i| (i, h.len())))
        .min()
        .ok_or_else(|| Error::DetectParse(raw.chars().take(160).collect()))?;
    let body = &raw[start.0 + start.1..];
    let (analysis, suggestions) = match find_ci(body, "suggestions:") {
        Some(i) => (&body[..i], body[i + "suggestions:".len()..].trim()),
        None => (body, ""),
    };
    let analysis = analysis.trim().to_string();
    let lower = analysis.to_ascii_lowercase();
    let mut complete = !lower.contains("does not satisfy completeness");
    let mut non_redundant = !lower.contains("does not satisfy non-redundancy");
    if complete && non_redundant {
        complete = false;
        non_redundant = false;
    }
    Ok(DetectionReport {
        complete,
        non_redundant,
        analysis,
        suggestions: suggestions.to_string(),
    })
}

/// The outcome of the detect-revise loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub plan: Plan,
    /// Every report, in order; the last one judges `plan` unless the budget
    /// ran out.
    pub reports: Vec<DetectionReport>,
    /// Intermediate plans produced by revision.
    pub revisions: Vec<Plan>,
    /// Set when the plan still violated a principle after the last round.
    pub unresolved: bool,
}

pub struct PlanDetector {
    gateway: Arc<Gateway>,
    prompts: Arc<Prompts>,
    max_rounds: u32,
}

impl PlanDetector {
    pub fn new(gateway: Arc<Gateway>, prompts: Arc<Prompts>) -> Self {
        Self {
            gateway,
            prompts,
            max_rounds: DEFAULT_MAX_DETECTOR_ROUNDS,
        }
    }

    pub fn with_max_rounds(mut self, rounds: u32) -> Self {
        self.max_rounds = rounds;
        self
    }

    pub fn max_rounds(&self) -> u32 {
        self.max_rounds
    }

    pub fn detect(&self, query: &Query, plan: &Plan) -> Result<DetectionReport> {
        let prompt = self.prompts.render(
            "detector",
            &[("query", &query.text), ("subtasks", &plan.detector_listing())],
        )?;
        ask_parsed(
            &self.gateway,
            "detector",
            prompt,
            "Answer with an 'Analyse:' section and a 'Suggestions:' section, or with the pass sentence.",
            |e| matches!(e, Error::DetectParse(_)),
            parse_detection,
        )
    }

    pub fn revise(&self, planner: &MetaPlanner, query: &Query, plan: &Plan, report: &DetectionReport) -> Result<Plan> {
        if report.passed() {
            return Err(Error::precondition("the plan has no violation to revise"));
        }
        planner.revise(query, plan, &report.analysis, &report.suggestions)
    }

    /// Alternates detection and revision until a pass or until `max_rounds`
    /// revisions have been made; the final revision is not re-checked.
    pub fn refine(&self, planner: &MetaPlanner, query: &Query, plan: Plan) -> Result<Refined> {
        let mut current = plan;
        let mut reports = Vec::new();
        let mut revisions = Vec::new();
        for _ in 0..self.max_rounds {
            let report = self.detect(query, &current)?;
            let passed = report.passed();
            let revised = if passed {
                None
            } else {
                Some(self.revise(planner, query, &current, &report)?)
            };
            reports.push(report);
            match revised {
                None => {
                    return Ok(Refined {
                        plan: current,
                        reports,
                        revisions,
                        unresolved: false,
                    })
                }
                Some(p) => {
                    revisions.push(p.clone());
                    current = p;
                }
            }
        }
        let unresolved = !revisions.is_empty();
        if unresolved {
            log::warn!(
                "query `{}`: plan still flagged after {} detector round(s)",
                query.id,
                self.max_rounds
            );
        }
        Ok(Refined {
            plan: current,
            reports,
            revisions,
            unresolved,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ScriptEntry, ScriptedBackend};
    use crate::planner::{Roster, SubTask};

    const BRAZIL_VERDICT: &str = "Analyse: This plan does not satisfy completeness because the subtask loses the information of 'a plane can carry 300 passengers' of the original task. This plan satisfies non-redundancy because each subtask has a unique focus and there is no overlap in the information covered.\nSuggestions: Add the information of 'a plane can carry 300 passengers' to subtask 1 and subtask 2.";

    #[test]
    fn pass_phrase() {
        let r = parse_detection("The plan satisfies completeness and non-redundancy.").unwrap();
        assert!(r.complete && r.non_redundant);
        assert!(r.suggestions.is_empty());
        assert!(!parse_detection("the plan satisfies completeness and non-redundancy.").is_ok_and(|r| r.passed()));
    }

    #[test]
    fn brazil_verdict() {
        let r = parse_detection(BRAZIL_VERDICT).unwrap();
        assert!(!r.complete);
        assert!(r.non_redundant);
        assert!(r.suggestions.contains("a plane can carry 300 passengers"));
        assert!(r.suggestions.contains("subtask 1 and subtask 2"));
    }

    #[test]
    fn untyped_and_unrelated() {
        let r = parse_detection("Analysis: something feels off.").unwrap();
        assert!(!r.complete && !r.non_redundant);
        assert!(matches!(
            parse_detection("Looks great to me!"),
            Err(Error::DetectParse(_))
        ));
    }

    fn brazil_plan(r: &Roster) -> Plan {
        Plan::new(
            "brazil",
            vec![
                SubTask::new(1, "Determine the number of passengers transported from Brazil to Nigeria in one flight with a full load.", "math_agent", vec![]),
                SubTask::new(2, "Determine the number of passengers transported from Nigeria to Brazil in one flight with 75% capacity filled.", "math_agent", vec![]),
                SubTask::new(3, "Calculate the total number of passengers transported between Brazil and Nigeria in one round trip.", "math_agent", vec![1, 2]),
            ],
            r,
        )
        .unwrap()
    }

    const FIXED: &str = r#"[{"task":"Determine the number of passengers transported from Brazil to Nigeria in one flight with a full load, given that a plane can carry 300 passengers.","id":1,"name":"math_agent","reason":"","dep":[]},
{"task":"Determine the number of passengers transported from Nigeria to Brazil in one flight with 75% capacity filled, given that a plane can carry 300 passengers.","id":2,"name":"math_agent","reason":"","dep":[]},
{"task":"Calculate the total number of passengers transported between Brazil and Nigeria in one round trip.","id":3,"name":"math_agent","reason":"","dep":[1,2]}]"#;

    #[test]
    fn refine_applies_suggestions_then_passes() {
        let gw = Arc::new(Gateway::scripted(ScriptedBackend::new(vec![
            ScriptEntry::new(
                r"re:given that a plane can carry 300 passengers\.\s+Dependency",
                PASS_PHRASE,
            ),
            ScriptEntry::new("reviewed by a plan detector", FIXED),
            ScriptEntry::new("plan detector", BRAZIL_VERDICT),
        ])));
        let prompts = Arc::new(Prompts::builtin());
        let r = Roster::standard();
        let planner = MetaPlanner::new(gw.clone(), r.clone(), prompts.clone());
        let detector = PlanDetector::new(gw, prompts);
        let q = Query::new("brazil", "If a plane can carry 300 passengers ... one round trip?").unwrap();
        let out = detector.refine(&planner, &q, brazil_plan(&r)).unwrap();
        assert!(!out.unresolved);
        assert_eq!(out.reports.len(), 2);
        assert_eq!(out.revisions.len(), 1);
        let with_phrase = out
            .plan
            .subtasks()
            .iter()
            .filter(|s| s.task.contains("300 passengers"))
            .count();
        assert_eq!(with_phrase, 2);
    }

    #[test]
    fn refine_is_bounded_under_a_never_satisfied_detector() {
        let gw = Arc::new(Gateway::scripted(ScriptedBackend::new(vec![
            ScriptEntry::new("reviewed by a plan detector", FIXED),
            ScriptEntry::new("plan detector", BRAZIL_VERDICT),
        ])));
        let prompts = Arc::new(Prompts::builtin());
        let r = Roster::standard();
        let planner = MetaPlanner::new(gw.clone(), r.clone(), prompts.clone());
        let q = Query::new("brazil", "round trip?").unwrap();
        for rounds in 0..4 {
            let detector = PlanDetector::new(gw.clone(), prompts.clone()).with_max_rounds(rounds);
            let out = detector.refine(&planner, &q, brazil_plan(&r)).unwrap();
            assert_eq!(out.reports.len(), rounds as usize);
            assert_eq!(out.revisions.len(), rounds as usize);
            assert_eq!(out.unresolved, rounds > 0);
        }
    }

    #[test]
    fn revise_needs_a_violation() {
        let gw = Arc::new(Gateway::scripted(ScriptedBackend::new(vec![])));
        let prompts = Arc::new(Prompts::builtin());
        let r = Roster::standard();
        let planner = MetaPlanner::new(gw.clone(), r.clone(), prompts.clone());
        let d = PlanDetector::new(gw, prompts);
        let pass = parse_detection(PASS_PHRASE).unwrap();
        let q = Query::new("q", "x").unwrap();
        assert!(matches!(
            d.revise(&planner, &q, &brazil_plan(&r), &pass),
            Err(Error::Precondition(_))
        ));
    }
}
