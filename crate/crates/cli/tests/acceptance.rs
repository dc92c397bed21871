//! One PASS/FAIL line per acceptance criterion. Every expected value comes
//! from an oracle written here, not from the library.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use agentplan::detector::{parse_detection, PlanDetector, PASS_PHRASE};
use agentplan::error::{Error, PlanViolation};
use agentplan::gateway::{
    BackendError, ChatBackend, ChatRequest, ChatResponse, Gateway, ManualClock, RetryPolicy, ScriptEntry,
    ScriptedBackend,
};
use agentplan::orchestrator::{
    route, Artifacts, ExecutionRecord, RecordStatus, RewardScorer, RoutingConfig, SimilaritySource, Verdict,
};
use agentplan::planner::{parse_plan, AgentDescriptor, AgentKind, MetaPlanner, Plan, Query, Roster, SubTask};
use agentplan::prompts::{Prompts, ONE_SHOT_PLAN};
use agentplan::reward::synthetic::{planted_dataset, PlantedConfig};
use agentplan::reward::{
    level_score, loss_and_gradients, train_features, weighted_loss, Embedder, Embedding, HashEmbedder, RewardModel,
    TrainConfig, TrainingExample, TriScore, DEFAULT_HIDDEN,
};
use agentplan::works::{Witness, WorksStore};
use agentplan_cli::eval::read_queries;
use agentplan_cli::setup::Runtime;
use agentplan_cli::{evaluate_suite, RunConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn suite_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/suite")
}

// 1 ------------------------------------------------------------------------

/// Correctness dominates, then completeness, then relevance; any zero
/// component gives zero.
fn level_oracle(c: u8, r: u8, p: u8) -> u8 {
    if c == 0 || r == 0 || p == 0 {
        0
    } else {
        4 * (c - 1) + 2 * (p - 1) + (r - 1) + 1
    }
}

fn c1_level_score() -> Check {
    let mut seen = HashSet::new();
    for c in 0..=2 {
        for r in 0..=2 {
            for p in 0..=2 {
                let got = level_score(TriScore::new(c, r, p).map_err(|e| e.to_string())?);
                ensure!(got == level_oracle(c, r, p), "({c},{r},{p}) gave {got}");
                seen.insert((c, r, p));
            }
        }
    }
    ensure!(seen.len() == 27, "covered {} combinations", seen.len());
    Ok(())
}

// 2 ------------------------------------------------------------------------

struct TwoScores {
    assigned: String,
    other: String,
    s0: f64,
    s_other: f64,
}

impl RewardScorer for TwoScores {
    fn score(&self, _: &str, agent: &AgentDescriptor) -> agentplan::Result<f64> {
        Ok(if agent.name == self.assigned {
            self.s0
        } else if agent.name == self.other {
            self.s_other
        } else {
            0.0
        })
    }
}

struct FixedSim(f64);

impl SimilaritySource for FixedSim {
    fn nearest(&self, _: &str, _: &Roster) -> agentplan::Result<Option<Witness>> {
        Ok(Some(Witness {
            agent_name: "search_agent".into(),
            task_text: "Find the capital of France.".into(),
            sim: self.0,
        }))
    }
}

/// Thresholds 7 / 1 / 0.8. The best-scoring agent wins, earliest in the
/// roster on ties.
fn route_oracle(names: &[String], assigned: &str, other: &str, s0: u8, s: u8, sim: f64, allow: bool) -> String {
    if s0 >= 7 {
        return "accept".into();
    }
    let score = |n: &str| {
        if n == assigned {
            s0
        } else if n == other {
            s
        } else {
            0
        }
    };
    let best = names
        .iter()
        .fold(&names[0], |b, n| if score(n) > score(b) { n } else { b });
    match score(best) {
        x if x <= 1 => "replan".into(),
        x if x >= 7 && best == assigned => "accept".into(),
        x if x >= 7 => format!("reassign:{best}"),
        _ if allow && sim >= 0.8 => "redescribe".into(),
        _ => "detail".into(),
    }
}

fn c2_routing_grid() -> Check {
    let roster = Roster::standard();
    let cfg = RoutingConfig::default();
    let names: Vec<String> = roster.iter().map(|a| a.name.clone()).collect();
    let mut cases = 0;
    for (a, o) in [(1, 3), (2, 0), (0, 1), (3, 2)] {
        for s0 in 0..=8u8 {
            for s in 0..=8u8 {
                for sim in [0.0, 0.5, 0.79, 0.80, 1.0] {
                    for allow in [true, false] {
                        let scorer = TwoScores {
                            assigned: names[a].clone(),
                            other: names[o].clone(),
                            s0: f64::from(s0),
                            s_other: f64::from(s),
                        };
                        let task = SubTask::new(1, "Compute something.", names[a].as_str(), vec![]);
                        let d =
                            route(&task, &roster, &scorer, &FixedSim(sim), &cfg, allow).map_err(|e| e.to_string())?;
                        let got = match d.verdict {
                            Verdict::Accept => "accept".to_string(),
                            Verdict::Reassign { agent } => format!("reassign:{agent}"),
                            Verdict::Replan => "replan".into(),
                            Verdict::ReDescribe { .. } => "redescribe".into(),
                            Verdict::PlanInDetail => "detail".into(),
                        };
                        let want = route_oracle(&names, &names[a], &names[o], s0, s, sim, allow);
                        ensure!(
                            got == want,
                            "{} s0={s0} s*={s} sim={sim} allow={allow}: {got} != {want}",
                            names[a]
                        );
                        cases += 1;
                    }
                }
            }
        }
    }
    println!("      {cases} routing cases");
    Ok(())
}

// 3 ------------------------------------------------------------------------

fn c3_gradient_check() -> Check {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for instance in 0..20u64 {
        let sizes = [
            rng.random_range(2..8),
            rng.random_range(2..7),
            rng.random_range(2..5),
            1,
        ];
        let batch = rng.random_range(1..10);
        let mut model = RewardModel::new(&sizes, instance).map_err(|e| e.to_string())?;
        for b in model.biases_mut() {
            b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let x = Array2::from_shape_fn((batch, sizes[0]), |_| rng.random_range(-2.0..2.0));
        let t = Array1::from_shape_fn(batch, |_| f64::from(rng.random_range(0..=8u8)));
        let w = Array1::from_shape_fn(batch, |_| rng.random_range(0.05..1.0));
        let (_, grads) = loss_and_gradients(&model, x.view(), t.view(), w.view());
        let f = |m: &RewardModel| weighted_loss(m, x.view(), t.view(), w.view());
        let mut compare = |analytic: f64, plus: RewardModel, minus: RewardModel, what: String| -> Check {
            let numeric = (f(&plus) - f(&minus)) / (2.0 * H);
            let scale = analytic.abs().max(numeric.abs());
            let err = if scale < 1e-7 {
                (analytic - numeric).abs()
            } else {
                (analytic - numeric).abs() / scale
            };
            worst = worst.max(err);
            ensure!(err < 1e-4, "instance {instance} {what}: {analytic} vs {numeric}");
            Ok(())
        };
        for l in 0..model.num_layers() {
            let (rows, cols) = model.weights()[l].dim();
            for i in 0..rows {
                for j in 0..cols {
                    let (mut p, mut m) = (model.clone(), model.clone());
                    p.weights_mut()[l][[i, j]] += H;
                    m.weights_mut()[l][[i, j]] -= H;
                    compare(grads.weights[l][[i, j]], p, m, format!("W{l}[{i},{j}]"))?;
                }
            }
            for k in 0..model.biases()[l].len() {
                let (mut p, mut m) = (model.clone(), model.clone());
                p.biases_mut()[l][k] += H;
                m.biases_mut()[l][k] -= H;
                compare(grads.biases[l][k], p, m, format!("b{l}[{k}]"))?;
            }
        }
    }
    println!("      worst relative error {worst:.2e}");
    Ok(())
}

// 4 ------------------------------------------------------------------------

fn c4_planted_training() -> Check {
    let pc = PlantedConfig::default();
    ensure!(pc.examples == 2000, "planted set has {} examples", pc.examples);
    let data = planted_dataset(&pc);
    let tc = TrainConfig::default();
    ensure!(
        (tc.epochs, tc.batch_size, tc.learning_rate) == (50, 32, 1e-3),
        "defaults are {:?}",
        (tc.epochs, tc.batch_size, tc.learning_rate)
    );
    let model =
        RewardModel::new(&[2 * pc.dim, DEFAULT_HIDDEN[0], DEFAULT_HIDDEN[1], 1], 0).map_err(|e| e.to_string())?;
    let w = Array1::from_elem(pc.examples, 1.0 / pc.examples as f64);
    let report =
        train_features(model, data.features.view(), data.targets.view(), w.view(), &tc).map_err(|e| e.to_string())?;
    let (first, last) = (report.initial(), report.last());

    // Recompute the final MSE independently from the returned model.
    let pred = report.model.forward(data.features.view());
    let mse = (&pred - &data.targets).mapv(|d| d * d).sum() / pred.len() as f64;
    println!(
        "      initial loss {:.4}, final loss {:.4}, final mse {mse:.4}",
        first.loss, last.loss
    );
    ensure!(report.history.len() == 51, "history has {} rows", report.history.len());
    ensure!(
        (mse - last.mse).abs() < 1e-9,
        "reported mse {} vs recomputed {mse}",
        last.mse
    );
    ensure!(mse < 0.5, "final mse {mse}");
    ensure!(last.loss < 0.5 * first.loss, "loss {} -> {}", first.loss, last.loss);
    Ok(())
}

// 5 ------------------------------------------------------------------------

struct Table(HashMap<String, Vec<f64>>);

impl Embedder for Table {
    fn provider_id(&self) -> String {
        "table".into()
    }
    fn dim(&self) -> usize {
        6
    }
    fn embed(&self, text: &str) -> agentplan::Result<Embedding> {
        Embedding::new(self.0[text].clone())
    }
}

fn ok_record(t: &SubTask, ok: bool) -> ExecutionRecord {
    ExecutionRecord {
        subtask_id: t.id,
        task: t.task.clone(),
        agent_name: t.agent_name.clone(),
        response: if ok { "done".into() } else { String::new() },
        status: if ok { RecordStatus::Ok } else { RecordStatus::Failed },
        error: None,
        artifacts: Artifacts::default(),
    }
}

fn c5_similarity() -> Check {
    let cos = |a: &[f64], b: &[f64]| {
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
    };
    let roster = Roster::new(
        (0..3)
            .map(|i| AgentDescriptor::new(format!("a{i}"), format!("agent {i}"), AgentKind::Custom))
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for store_no in 0..200 {
        let n = rng.random_range(0..=100usize);
        let mut table = HashMap::new();
        let mut works = Vec::new();
        let mut tasks = Vec::new();
        for i in 0..n {
            let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let agent = format!("a{}", rng.random_range(0..3));
            table.insert(format!("w{i}"), v.clone());
            tasks.push(SubTask::new(i as u32 + 1, format!("w{i}"), agent.clone(), vec![]));
            works.push((agent, v));
        }
        let q: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        table.insert("q".into(), q.clone());
        let store = WorksStore::new(Arc::new(Table(table)), &roster).with_dedup_threshold(f64::INFINITY);
        if n > 0 {
            let recs: Vec<_> = tasks.iter().map(|t| ok_record(t, true)).collect();
            store
                .record_success(&Plan::new("s", tasks, &roster).map_err(|e| e.to_string())?, &recs)
                .map_err(|e| e.to_string())?;
        }
        let report = store.best_match("q", &roster).map_err(|e| e.to_string())?;
        let mut global: Option<(String, f64)> = None;
        for (k, a) in roster.iter().enumerate() {
            let brute = works
                .iter()
                .filter(|(owner, _)| *owner == a.name)
                .map(|(_, v)| cos(&q, v))
                .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))));
            let got = report.per_agent[k].1.as_ref().map(|w| w.sim);
            match (brute, got) {
                (None, None) => {}
                (Some(b), Some(g)) => {
                    ensure!((b - g).abs() < 1e-12, "store {store_no} {}: {g} vs {b}", a.name);
                    ensure!((-1.0..=1.0).contains(&g), "similarity {g} out of range");
                }
                other => return Err(format!("store {store_no} {}: {other:?}", a.name)),
            }
            if let Some(b) = brute {
                if global.as_ref().is_none_or(|(_, g)| b > *g) {
                    global = Some((a.name.clone(), b));
                }
            }
        }
        match (global, report.global_best) {
            (None, None) => {}
            (Some((a, s)), Some(w)) => ensure!(
                a == w.agent_name && (s - w.sim).abs() < 1e-12,
                "store {store_no} global"
            ),
            other => return Err(format!("store {store_no} global: {other:?}")),
        }
    }

    // A stored work is maximally similar to itself, and similarity is
    // symmetric.
    let e = HashEmbedder::new(4);
    let r = Roster::standard();
    let store = WorksStore::new(Arc::new(HashEmbedder::new(4)), &r);
    let texts = [
        "Find the capital city of Australia.",
        "Count the days between 2023-01-01 and 2023-03-01.",
    ];
    let tasks: Vec<SubTask> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| SubTask::new(i as u32 + 1, *t, "search_agent", vec![]))
        .collect();
    let recs: Vec<_> = tasks.iter().map(|t| ok_record(t, true)).collect();
    store
        .record_success(&Plan::new("s", tasks, &r).map_err(|e| e.to_string())?, &recs)
        .map_err(|e| e.to_string())?;
    for t in texts {
        let s = store
            .similarity(t, "search_agent")
            .map_err(|e| e.to_string())?
            .unwrap_or(f64::NAN);
        ensure!((s - 1.0).abs() < 1e-6, "self similarity {s}");
    }
    let (a, b) = (
        e.embed(texts[0]).map_err(|x| x.to_string())?,
        e.embed(texts[1]).map_err(|x| x.to_string())?,
    );
    ensure!((a.cosine(&b) - b.cosine(&a)).abs() < 1e-15, "asymmetric cosine");
    Ok(())
}

// 6 ------------------------------------------------------------------------

fn c6_plan_schema() -> Check {
    let r = Roster::standard();
    let plan = parse_plan(ONE_SHOT_PLAN, "q", &r).map_err(|e| e.to_string())?;
    let deps: Vec<Vec<u32>> = plan.subtasks().iter().map(|s| s.deps.clone()).collect();
    ensure!(plan.len() == 3, "m = {}", plan.len());
    ensure!(deps == vec![vec![], vec![1], vec![2]], "deps {deps:?}");
    let again = parse_plan(&plan.to_json_string(), "q", &r).map_err(|e| e.to_string())?;
    ensure!(again == plan, "round trip changed the plan");

    let cyclic = r#"[{"id":1,"name":"math_agent","task":"a","dep":[3]},
                     {"id":2,"name":"math_agent","task":"b","dep":[1]},
                     {"id":3,"name":"math_agent","task":"c","dep":[2]}]"#;
    ensure!(
        matches!(
            parse_plan(cyclic, "q", &r),
            Err(Error::PlanValidation(PlanViolation::Cycle(_)))
        ),
        "cycle accepted"
    );
    let unknown = r#"[{"id":1,"name":"oracle_agent","task":"a","dep":[]}]"#;
    ensure!(
        matches!(
            parse_plan(unknown, "q", &r),
            Err(Error::PlanValidation(PlanViolation::UnknownAgent { .. }))
        ),
        "unknown agent accepted"
    );
    Ok(())
}

// 7 ------------------------------------------------------------------------

const WORDS: &[&str] = &[
    "compute",
    "population",
    "china",
    "days",
    "between",
    "dates",
    "capital",
    "peru",
    "sum",
    "primes",
    "height",
    "tower",
    "convert",
    "miles",
    "year",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..7);
    (0..n)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn c7_feedback() -> Check {
    let r = Roster::standard();
    let names: Vec<String> = r.iter().map(|a| a.name.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..100 {
        let store = WorksStore::new(Arc::new(HashEmbedder::with_dim(case, 64)), &r);
        let m = rng.random_range(1..8);
        let tasks: Vec<SubTask> = (0..m)
            .map(|i| SubTask::new(i + 1, sentence(&mut rng), names[rng.random_range(0..4)].clone(), vec![]))
            .collect();
        let recs: Vec<_> = tasks.iter().map(|t| ok_record(t, rng.random_bool(0.8))).collect();
        let plan = Plan::new("q", tasks, &r).map_err(|e| e.to_string())?;
        store.record_success(&plan, &recs).map_err(|e| e.to_string())?;
        let snap = store.snapshot().map_err(|e| e.to_string())?;
        let second = store.record_success(&plan, &recs).map_err(|e| e.to_string())?;
        ensure!(second == 0, "case {case}: second call added {second}");
        ensure!(
            store.snapshot().map_err(|e| e.to_string())? == snap,
            "case {case}: store changed"
        );
    }

    for case in 0..100 {
        let store = WorksStore::new(Arc::new(HashEmbedder::with_dim(case, 64)), &r).with_dedup_threshold(f64::INFINITY);
        let rows: Vec<TrainingExample> = (0..rng.random_range(0..25))
            .map(|_| TrainingExample {
                subtask: sentence(&mut rng),
                agent_description: r.agents()[rng.random_range(0..4)].description.clone(),
                score: rng.random_range(0..=8),
                query_id: None,
            })
            .collect();
        let added = store.init_from_training(&rows, &r, 7).map_err(|e| e.to_string())?;
        let want = rows.iter().filter(|e| e.score >= 7).count();
        ensure!(added == want, "case {case}: admitted {added}, expected {want}");
        let by_desc: HashMap<&str, &str> = r.iter().map(|a| (a.description.as_str(), a.name.as_str())).collect();
        for (agent, ws) in store.snapshot().map_err(|e| e.to_string())? {
            for w in ws {
                let ok = rows.iter().any(|e| {
                    e.score >= 7 && e.subtask == w.task_text && by_desc[e.agent_description.as_str()] == agent
                });
                ensure!(ok, "case {case}: `{}` admitted for {agent}", w.task_text);
            }
        }
    }
    Ok(())
}

// 8 ------------------------------------------------------------------------

fn suite_config() -> Result<RunConfig, String> {
    RunConfig::load(&suite_dir().join("config.toml")).map_err(|e| format!("{e:#}"))
}

fn c8_scripted_suite() -> Check {
    let items = read_queries(&suite_dir().join("queries.jsonl")).map_err(|e| e.to_string())?;
    ensure!(items.len() == 10, "{} queries", items.len());
    let mut runs = Vec::new();
    for _ in 0..2 {
        let rt = Runtime::build(&suite_config()?).map_err(|e| format!("{e:#}"))?;
        runs.push(evaluate_suite(&rt.engine, &items).map_err(|e| format!("{e:#}"))?);
    }
    let (a, ta) = &runs[0];
    let (b, tb) = &runs[1];
    ensure!(a.accuracy == 100.0, "accuracy {}%", a.accuracy);
    ensure!(a.without_timing() == b.without_timing(), "reports differ between runs");
    for (x, y) in ta.iter().zip(tb) {
        ensure!(
            x.fingerprint() == y.fingerprint(),
            "trace {} differs between runs",
            x.query.id
        );
        let plan = x.final_plan().ok_or(format!("{} has no plan", x.query.id))?;
        let mut done = HashSet::new();
        for rec in &x.records {
            let st = plan
                .get(rec.subtask_id)
                .ok_or(format!("{}: record for unknown sub-task", x.query.id))?;
            ensure!(
                st.deps.iter().all(|d| done.contains(d)),
                "{}: {} ran before its deps",
                x.query.id,
                st.id
            );
            done.insert(st.id);
        }
        ensure!(
            done.len() == plan.len(),
            "{}: {} of {} sub-tasks ran",
            x.query.id,
            done.len(),
            plan.len()
        );
    }
    let paths: BTreeMap<&str, Vec<&str>> = ta
        .iter()
        .map(|t| (t.query.id.as_str(), t.plans.iter().map(|p| p.cause.as_str()).collect()))
        .collect();
    println!("      plan histories {paths:?}");
    Ok(())
}

// 9 ------------------------------------------------------------------------

const BRAZIL: &str = "Analyse: This plan does not satisfy completeness because the subtask loses the information of 'a plane can carry 300 passengers' of the original task. This plan satisfies non-redundancy because each subtask has a unique focus and there is no overlap in the information covered.\nSuggestions: Add the information of 'a plane can carry 300 passengers' to subtask 1 and subtask 2.";

fn c9_detector() -> Check {
    let pass = parse_detection(PASS_PHRASE).map_err(|e| e.to_string())?;
    ensure!(pass.complete && pass.non_redundant, "pass phrase not accepted");
    let v = parse_detection(BRAZIL).map_err(|e| e.to_string())?;
    ensure!(
        !v.complete && v.non_redundant,
        "brazil verdict {:?}",
        (v.complete, v.non_redundant)
    );
    ensure!(
        v.suggestions == "Add the information of 'a plane can carry 300 passengers' to subtask 1 and subtask 2.",
        "suggestions {:?}",
        v.suggestions
    );

    let r = Roster::standard();
    let prompts = Arc::new(Prompts::builtin());
    let q = Query::new(
        "brazil",
        "If a plane can carry 300 passengers, how many travel in one round trip?",
    )
    .map_err(|e| e.to_string())?;
    let plan = parse_plan(ONE_SHOT_PLAN, "brazil", &r).map_err(|e| e.to_string())?;
    for rounds in 0..=4u32 {
        let gw = Arc::new(Gateway::scripted(ScriptedBackend::new(vec![
            ScriptEntry::new("reviewed by a plan detector", ONE_SHOT_PLAN),
            ScriptEntry::new("plan detector", BRAZIL),
        ])));
        let planner = MetaPlanner::new(gw.clone(), r.clone(), prompts.clone());
        let out = PlanDetector::new(gw.clone(), prompts.clone())
            .with_max_rounds(rounds)
            .refine(&planner, &q, plan.clone())
            .map_err(|e| e.to_string())?;
        let usage = gw.usage_report();
        let calls = |tag: &str| {
            usage
                .entries
                .iter()
                .filter(|e| e.tag == tag)
                .map(|e| e.calls)
                .sum::<u64>()
        };
        ensure!(
            calls("detector") == u64::from(rounds),
            "{rounds} rounds made {} detector calls",
            calls("detector")
        );
        ensure!(
            calls("revise") == u64::from(rounds),
            "{rounds} rounds made {} revisions",
            calls("revise")
        );
        ensure!(
            out.unresolved == (rounds > 0),
            "unresolved flag wrong at {rounds} rounds"
        );
    }
    Ok(())
}

// 10 -----------------------------------------------------------------------

/// Wraps the scripted backend, stamps each reply with synthetic token
/// counts and advances a manual clock by a synthetic latency. The sums of
/// everything injected are kept for comparison.
struct Metered {
    inner: ScriptedBackend,
    clock: Arc<ManualClock>,
    prompt: AtomicU64,
    completion: AtomicU64,
    millis: AtomicU64,
    calls: AtomicU64,
}

impl ChatBackend for Metered {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let mut resp = self.inner.complete(request)?;
        let p = request.user_prompt.len() as u64 / 4 + 11;
        let c = resp.text.len() as u64 / 3 + 1;
        let ms = 3 + (p + c) % 17;
        self.clock.advance(Duration::from_millis(ms));
        resp.prompt_tokens = p;
        resp.completion_tokens = c;
        self.prompt.fetch_add(p, Ordering::SeqCst);
        self.completion.fetch_add(c, Ordering::SeqCst);
        self.millis.fetch_add(ms, Ordering::SeqCst);
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(resp)
    }
}

fn c10_usage_report() -> Check {
    let mut cfg = suite_config()?;
    // Calls must not overlap for per-call latencies to add up exactly on a
    // shared manual clock.
    cfg.routing.concurrency = 1;
    let script = cfg.gateway.script.clone().ok_or("suite has no script")?;
    let clock = Arc::new(ManualClock::default());
    let metered = Arc::new(Metered {
        inner: ScriptedBackend::from_file(&script).map_err(|e| e.to_string())?,
        clock: clock.clone(),
        prompt: AtomicU64::new(0),
        completion: AtomicU64::new(0),
        millis: AtomicU64::new(0),
        calls: AtomicU64::new(0),
    });
    let gateway = Arc::new(Gateway::with_retry(metered.clone(), RetryPolicy::none()).with_clock(clock));
    let rt = Runtime::with_gateway(&cfg, gateway).map_err(|e| format!("{e:#}"))?;
    let items = read_queries(&suite_dir().join("queries.jsonl")).map_err(|e| e.to_string())?;
    let (report, _) = evaluate_suite(&rt.engine, &items).map_err(|e| format!("{e:#}"))?;

    let injected = (
        metered.prompt.load(Ordering::SeqCst),
        metered.completion.load(Ordering::SeqCst),
        metered.calls.load(Ordering::SeqCst),
        metered.millis.load(Ordering::SeqCst),
    );
    let reported = (
        report.prompt_tokens,
        report.completion_tokens,
        report.calls,
        report.llm_time_ms,
    );
    println!("      injected {injected:?}, reported {reported:?}");
    ensure!(injected.2 > 0 && injected.0 > 0, "nothing injected");
    ensure!(reported == injected, "report {reported:?} != injected {injected:?}");
    let shown = report.to_string();
    ensure!(
        shown.contains(&format!("prompt tokens     {}", injected.0)),
        "printed report disagrees"
    );
    ensure!(
        shown.contains(&format!("llm time          {:.3} s", injected.3 as f64 / 1000.0)),
        "printed time disagrees"
    );
    Ok(())
}

fn main() {
    let checks: [Criterion; 10] = [
        ("level score over all 27 combinations", c1_level_score),
        ("routing grid matches the decision table", c2_routing_grid),
        ("analytic gradients match finite differences", c3_gradient_check),
        ("planted data: mse < 0.5 and loss halves", c4_planted_training),
        ("similarity properties and brute-force best match", c5_similarity),
        ("plan schema: one-shot shape, round trip, rejections", c6_plan_schema),
        ("feedback idempotence and score-gated import", c7_feedback),
        ("scripted suite: 100% accuracy, reproducible traces", c8_scripted_suite),
        ("detector verdicts and bounded refinement", c9_detector),
        ("eval report equals injected usage", c10_usage_report),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(()) => println!("PASS {:>2} {name}", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {e}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
