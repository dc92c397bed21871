//! The plan data model: queries, agent rosters, sub-tasks and the
//! dependency DAG that ties them together.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, PlanViolation, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::precondition("query text must be non-empty"));
        }
        Ok(Self { id: id.into(), text })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Code,
    Math,
    Search,
    Commonsense,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentDescriptor {
    pub name: String,
    pub description: String,
    pub kind: AgentKind,
}

impl AgentDescriptor {
    pub fn new(name: impl Into<String>, description: impl Into<String>, kind: AgentKind) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            kind,
        }
    }
}

/// The agents available to the meta-agent, in a fixed order. Ties in any
/// ranking over agents are broken by this order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AgentDescriptor>", into = "Vec<AgentDescriptor>")]
pub struct Roster {
    agents: Vec<AgentDescriptor>,
}

impl Roster {
    pub fn new(agents: Vec<AgentDescriptor>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::precondition("roster must contain at least one agent"));
        }
        let mut seen = HashSet::new();
        for a in &agents {
            if a.name.trim().is_empty() || a.description.trim().is_empty() {
                return Err(Error::precondition("agent name and description must be non-empty"));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(Error::precondition(format!("duplicate agent name `{}`", a.name)));
            }
        }
        Ok(Self { agents })
    }

    /// The four general-purpose agents: code, math, search and commonsense.
    pub fn standard() -> Self {
        Self::new(vec![
            AgentDescriptor::new(
                "code_agent",
                "Generate code in Python for precise computations to solve the given task.",
                AgentKind::Code,
            ),
            AgentDescriptor::new(
                "math_agent",
                "Answer math questions by reasoning step-by-step.",
                AgentKind::Math,
            ),
            AgentDescriptor::new(
                "search_agent",
                "Call Bing Search API for obtaining information regarding the given task.",
                AgentKind::Search,
            ),
            AgentDescriptor::new(
                "commonsense_agent",
                "Answer the given question using commonsense reasoning.",
                AgentKind::Commonsense,
            ),
        ])
        .expect("standard roster is valid")
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AgentDescriptor> {
        self.agents.iter()
    }

    pub fn agents(&self) -> &[AgentDescriptor] {
        &self.agents
    }

    pub fn get(&self, name: &str) -> Option<&AgentDescriptor> {
        self.agents.iter().find(|a| a.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.name == name)
    }

    pub fn by_description(&self, description: &str) -> Option<&AgentDescriptor> {
        self.agents.iter().find(|a| a.description == description)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// `name: description` pairs joined by spaces, as interpolated into
    /// planning prompts.
    pub fn prompt_listing(&self) -> String {
        self.agents
            .iter()
            .map(|a| format!("{}: {}", a.name, a.description))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl TryFrom<Vec<AgentDescriptor>> for Roster {
    type Error = Error;
    fn try_from(agents: Vec<AgentDescriptor>) -> Result<Self> {
        Roster::new(agents)
    }
}

impl From<Roster> for Vec<AgentDescriptor> {
    fn from(r: Roster) -> Self {
        r.agents
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubTask {
    pub id: u32,
    pub task: String,
    #[serde(rename = "name")]
    pub agent_name: String,
    #[serde(default)]
    pub reason: String,
    #[serde(rename = "dep", default)]
    pub deps: Vec<u32>,
}

impl SubTask {
    pub fn new(id: u32, task: impl Into<String>, agent: impl Into<String>, deps: Vec<u32>) -> Self {
        Self {
            id,
            task: task.into(),
            agent_name: agent.into(),
            reason: String::new(),
            deps,
        }
    }
}

/// A validated decomposition of one query.
///
/// Construction always validates; modifications produce new plans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    query_id: String,
    subtasks: Vec<SubTask>,
}

impl Plan {
    pub fn new(query_id: impl Into<String>, subtasks: Vec<SubTask>, roster: &Roster) -> Result<Self> {
        validate(&subtasks, Some(roster))?;
        Ok(Self {
            query_id: query_id.into(),
            subtasks,
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn subtasks(&self) -> &[SubTask] {
        &self.subtasks
    }

    pub fn len(&self) -> usize {
        self.subtasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtasks.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&SubTask> {
        self.subtasks.iter().find(|s| s.id == id)
    }

    pub fn max_id(&self) -> u32 {
        self.subtasks.iter().map(|s| s.id).max().unwrap_or(0)
    }

    /// A copy with one sub-task replaced (matched by id). The replacement
    /// must keep the plan valid.
    pub fn with_subtask(&self, replacement: SubTask, roster: &Roster) -> Result<Plan> {
        let mut subtasks = self.subtasks.clone();
        let slot = subtasks
            .iter_mut()
            .find(|s| s.id == replacement.id)
            .ok_or_else(|| Error::precondition(format!("no sub-task {}", replacement.id)))?;
        *slot = replacement;
        Plan::new(self.query_id.clone(), subtasks, roster)
    }

    /// Deterministic topological order: among ready sub-tasks the one
    /// listed first in the plan goes first.
    pub fn topological_order(&self) -> Vec<u32> {
        topological_order(&self.subtasks).expect("validated plans are acyclic")
    }

    /// Transitive dependencies of `id`, in topological order.
    pub fn ancestors(&self, id: u32) -> Vec<u32> {
        let by_id: HashMap<u32, &SubTask> = self.subtasks.iter().map(|s| (s.id, s)).collect();
        let mut seen = BTreeSet::new();
        let mut stack: Vec<u32> = by_id.get(&id).map(|s| s.deps.clone()).unwrap_or_default();
        while let Some(d) = stack.pop() {
            if seen.insert(d) {
                stack.extend(by_id[&d].deps.iter().copied());
            }
        }
        self.topological_order()
            .into_iter()
            .filter(|i| seen.contains(i))
            .collect()
    }

    /// Sub-tasks that depend directly on `id`.
    pub fn dependents(&self, id: u32) -> Vec<u32> {
        self.subtasks
            .iter()
            .filter(|s| s.deps.contains(&id))
            .map(|s| s.id)
            .collect()
    }

    /// The plan as a JSON array in the planner output schema.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.subtasks).expect("sub-tasks serialize")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.subtasks).expect("sub-tasks serialize")
    }

    /// One line per sub-task in the `Subtask k: ...    Dependency: [...]`
    /// layout used by the plan detector.
    pub fn detector_listing(&self) -> String {
        self.subtasks
            .iter()
            .map(|s| {
                let deps = s.deps.iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
                format!("Subtask {}: {}    Dependency: [{}]", s.id, s.task, deps)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Checks every plan invariant. Agent names are only checked when a roster
/// is supplied.
pub fn validate(subtasks: &[SubTask], roster: Option<&Roster>) -> Result<(), PlanViolation> {
    if subtasks.is_empty() {
        return Err(PlanViolation::Empty);
    }
    let mut ids = HashSet::new();
    for s in subtasks {
        if s.id == 0 {
            return Err(PlanViolation::ZeroId);
        }
        if !ids.insert(s.id) {
            return Err(PlanViolation::DuplicateId(s.id));
        }
        if s.task.trim().is_empty() {
            return Err(PlanViolation::EmptyTask(s.id));
        }
        if let Some(r) = roster {
            if !r.contains(&s.agent_name) {
                return Err(PlanViolation::UnknownAgent {
                    id: s.id,
                    name: s.agent_name.clone(),
                });
            }
        }
    }
    for s in subtasks {
        for &d in &s.deps {
            if d == s.id {
                return Err(PlanViolation::SelfDependency(s.id));
            }
            if !ids.contains(&d) {
                return Err(PlanViolation::MissingDependency { id: s.id, dep: d });
            }
        }
    }
    topological_order(subtasks).map(|_| ())
}

/// Kahn's algorithm with plan-order tie breaking. Assumes ids are unique
/// and deps resolvable.
fn topological_order(subtasks: &[SubTask]) -> Result<Vec<u32>, PlanViolation> {
    let index: HashMap<u32, usize> = subtasks.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
    let mut indegree: Vec<usize> = subtasks
        .iter()
        .map(|s| s.deps.iter().collect::<HashSet<_>>().len())
        .collect();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); subtasks.len()];
    for (i, s) in subtasks.iter().enumerate() {
        for d in s.deps.iter().collect::<HashSet<_>>() {
            children[index[d]].push(i);
        }
    }
    let mut ready: BTreeSet<usize> = (0..subtasks.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(subtasks.len());
    while let Some(i) = ready.pop_first() {
        order.push(subtasks[i].id);
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() < subtasks.len() {
        let done: HashSet<u32> = order.iter().copied().collect();
        let stuck = subtasks.iter().map(|s| s.id).filter(|id| !done.contains(id)).collect();
        return Err(PlanViolation::Cycle(stuck));
    }
    Ok(order)
}
