use std::collections::HashMap;
use std::sync::Arc;

use agentplan::orchestrator::{Artifacts, ExecutionRecord, RecordStatus};
use agentplan::planner::{AgentDescriptor, AgentKind, Plan, Roster, SubTask};
use agentplan::reward::{cosine, Embedder, Embedding, HashEmbedder};
use agentplan::works::WorksStore;
use agentplan::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Looks texts up in a fixed table of vectors.
struct Table(HashMap<String, Vec<f64>>);

impl Embedder for Table {
    fn provider_id(&self) -> String {
        "table".into()
    }
    fn dim(&self) -> usize {
        8
    }
    fn embed(&self, text: &str) -> Result<Embedding> {
        Embedding::new(self.0[text].clone())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn brute_cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

fn roster(n: usize) -> Roster {
    Roster::new(
        (0..n)
            .map(|i| AgentDescriptor::new(format!("agent{i}"), format!("does job {i}"), AgentKind::Custom))
            .collect(),
    )
    .unwrap()
}

fn ok_record(id: u32, task: &str, agent: &str) -> ExecutionRecord {
    ExecutionRecord {
        subtask_id: id,
        task: task.into(),
        agent_name: agent.into(),
        response: "done".into(),
        status: RecordStatus::Ok,
        error: None,
        artifacts: Artifacts::default(),
    }
}

type RandomStore = (WorksStore, Roster, Vec<(String, Vec<f64>)>, Vec<f64>);

/// Fills a store with up to 100 random works spread over four agents by
/// feeding them through `record_success`.
fn random_store(rng: &mut ChaCha8Rng) -> RandomStore {
    let r = roster(4);
    let n = rng.random_range(0..=100);
    let mut table = HashMap::new();
    let mut works = Vec::new();
    let mut tasks = Vec::new();
    for i in 0..n {
        let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let text = format!("work {i}");
        table.insert(text.clone(), v.clone());
        let agent = format!("agent{}", rng.random_range(0..4));
        tasks.push(SubTask::new(i as u32 + 1, text.clone(), agent.clone(), vec![]));
        works.push((agent, v));
    }
    let q: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    table.insert("query".into(), q.clone());
    // Deduplication is disabled so the brute-force set is exactly what was
    // inserted.
    let store = WorksStore::new(Arc::new(Table(table)), &r).with_dedup_threshold(f64::INFINITY);
    if !tasks.is_empty() {
        let records: Vec<_> = tasks.iter().map(|t| ok_record(t.id, &t.task, &t.agent_name)).collect();
        let plan = Plan::new("q", tasks, &r).unwrap();
        assert_eq!(store.record_success(&plan, &records).unwrap(), n);
    }
    (store, r, works, q)
}

#[test]
fn best_match_equals_brute_force_on_random_stores() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let (store, roster, works, q) = random_store(&mut rng);
        let report = store.best_match("query", &roster).unwrap();

        let mut global: Option<(String, f64)> = None;
        for (k, agent) in roster.iter().enumerate() {
            let best = works
                .iter()
                .filter(|(a, _)| *a == agent.name)
                .map(|(_, v)| brute_cos(&q, v))
                .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))));
            let got = report.per_agent[k].1.as_ref().map(|w| w.sim);
            match (best, got) {
                (None, None) => {}
                (Some(b), Some(g)) => assert!((b - g).abs() < 1e-12, "{b} vs {g}"),
                other => panic!("mismatch for {}: {other:?}", agent.name),
            }
            assert_eq!(store.similarity("query", &agent.name).unwrap(), got);
            if let Some(b) = best {
                if global.as_ref().is_none_or(|(_, g)| b > *g) {
                    global = Some((agent.name.clone(), b));
                }
            }
        }
        match (global, report.global_best) {
            (None, None) => {}
            (Some((a, s)), Some(w)) => {
                assert_eq!(a, w.agent_name);
                assert!((s - w.sim).abs() < 1e-12);
                assert!((-1.0..=1.0).contains(&w.sim));
            }
            other => panic!("global mismatch: {other:?}"),
        }
    }
}

#[test]
fn a_work_is_maximally_similar_to_itself() {
    let e = Arc::new(HashEmbedder::new(1));
    let r = Roster::standard();
    let store = WorksStore::new(e.clone(), &r);
    let texts = [
        "Determine the population of China in 2022.",
        "Calculate the number of days between 2021-03-01 and 2022-07-04.",
        "Find the capital city of Australia.",
    ];
    let tasks: Vec<SubTask> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| SubTask::new(i as u32 + 1, *t, "search_agent", vec![]))
        .collect();
    let records: Vec<_> = tasks.iter().map(|t| ok_record(t.id, &t.task, "search_agent")).collect();
    store
        .record_success(&Plan::new("q", tasks, &r).unwrap(), &records)
        .unwrap();
    for t in texts {
        let s = store.similarity(t, "search_agent").unwrap().unwrap();
        assert!((s - 1.0).abs() < 1e-6, "{s}");
    }
}

#[test]
fn cosine_stays_in_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let n = rng.random_range(1..16);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let scale = rng.random_range(1e-3..1e3);
        let b: Vec<f64> = a.iter().map(|x| -x * scale).collect();
        assert!((-1.0..=1.0).contains(&cosine(&a, &b)));
        assert!((cosine(&a, &b) + 1.0).abs() < 1e-9);
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-9);
    }
    assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
}
