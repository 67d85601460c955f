//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use digknow::action::{ActionStep, Verb};
use digknow::distiller::{distill, select_keyframes, ActionRecord, DistillOptions, ObjectPattern, TaskPattern};
use digknow::eval::{
    build_knowledge_base, normalized_levenshtein, run_episode, run_planning_suite, run_robot_suite, EvalOptions,
    SuiteContext, TaskKind, TaskSuite,
};
use digknow::knowledge_base::{BagOfClasses, KnowledgeBase, KnowledgeEntry};
use digknow::llm_gateway::{Gateway, RecordingClient, ReplayClient, ScriptedClient};
use digknow::planner::{
    check_preconditions, plan_task, run_task, validate_plan, Ablation, CorrectionConfig, RunOptions,
};
use digknow::scene_graph::{Relation, SceneGraph, SceneNode, RelationEdge};
use digknow::simulator::{
    bundled_scenario, goal_satisfied, ContainerState, FaultConfig, FaultMode, World, SCENARIO_NAMES,
};

type Check = Result<(), String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

/// Written past the test harness capture so the lines always show.
fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Check {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))
}

// Metric --------------------------------------------------------------------

fn oracle_distance(a: &[u8], b: &[u8]) -> usize {
    fn go(a: &[u8], b: &[u8], i: usize, j: usize, memo: &mut [[Option<usize>; 7]; 7]) -> usize {
        if let Some(v) = memo[i][j] {
            return v;
        }
        let v = if i == a.len() {
            b.len() - j
        } else if j == b.len() {
            a.len() - i
        } else if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo).min(go(a, b, i, j + 1, memo)).min(go(a, b, i + 1, j + 1, memo))
        };
        memo[i][j] = Some(v);
        v
    }
    go(a, b, 0, 0, &mut [[None; 7]; 7])
}

fn oracle_normalized(a: &[u8], b: &[u8]) -> f64 {
    1.0 - oracle_distance(a, b) as f64 / a.len().max(b.len()).max(1) as f64
}

/// Sequences of length `len` over at most five symbols in which symbol k
/// first appears after symbols 0..k (one representative per relabeling),
/// alongside their step sequences.
fn canonical_strings(
    len: usize,
    prefix: &mut Vec<u8>,
    as_steps: &mut Vec<ActionStep>,
    alphabet: &[ActionStep],
    used: u8,
    out: &mut dyn FnMut(&[u8], &[ActionStep]),
) {
    if prefix.len() == len {
        out(prefix, as_steps);
        return;
    }
    for s in 0..=used.min(4) {
        prefix.push(s);
        as_steps.push(alphabet[s as usize].clone());
        canonical_strings(len, prefix, as_steps, alphabet, used.max(s + 1), out);
        prefix.pop();
        as_steps.pop();
    }
}

fn metric_oracle() -> Check {
    let start = Instant::now();
    let alphabet = [
        ActionStep::pick("a"),
        ActionStep::pick("b"),
        ActionStep::open("c"),
        ActionStep::place_on("a", "t"),
        ActionStep::give("b"),
    ];
    let steps = |s: &[u8]| s.iter().map(|&k| alphabet[k as usize].clone()).collect::<Vec<_>>();
    let mut mismatches = Vec::new();
    let mut pairs = 0u64;
    // Both sides only compare symbols for equality, so every pair is a
    // relabeling of exactly one canonical concatenation.
    for total in 0..=12 {
        canonical_strings(total, &mut Vec::new(), &mut Vec::new(), &alphabet, 0, &mut |s, as_steps| {
            for split in total.saturating_sub(6)..=total.min(6) {
                let (a, b) = s.split_at(split);
                let (sa, sb) = as_steps.split_at(split);
                pairs += 1;
                if normalized_levenshtein(sa, sb) != oracle_normalized(a, b) && mismatches.len() < 5 {
                    mismatches.push(format!("{a:?} vs {b:?}"));
                }
            }
        });
    }
    // Direct sample of raw pairs, without relabeling.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200_000 {
        let a: Vec<u8> = (0..rng.random_range(0..=6)).map(|_| rng.random_range(0..5)).collect();
        let b: Vec<u8> = (0..rng.random_range(0..=6)).map(|_| rng.random_range(0..5)).collect();
        if normalized_levenshtein(&steps(&a), &steps(&b)) != oracle_normalized(&a, &b) && mismatches.len() < 5 {
            mismatches.push(format!("{a:?} vs {b:?}"));
        }
    }
    ensure(mismatches.is_empty(), || format!("{pairs} canonical pairs; mismatches: {mismatches:?}"))?;
    within(start, Duration::from_secs(10))
}

// Keyframes -----------------------------------------------------------------

/// Pool graph `k`, with nodes and edges inserted in a shuffled order.
fn pool_graph(k: usize, rng: &mut ChaCha8Rng) -> SceneGraph {
    let drawer = if k & 1 == 0 { "open" } else { "closed" };
    let mut nodes = vec![
        SceneNode::new("hand", "hand"),
        SceneNode::new("table", "table"),
        SceneNode::new("drawer", "drawer").with_state(drawer),
        SceneNode::new("cup", "cup"),
        SceneNode::new("pen", "pen"),
    ];
    let cup = if k & 2 == 0 { RelationEdge::new("cup", Relation::On, "table") } else { RelationEdge::new("cup", Relation::Held, "hand") };
    let pen = match k >> 2 {
        0 => RelationEdge::new("pen", Relation::In, "drawer"),
        _ => RelationEdge::new("pen", Relation::On, "table"),
    };
    let mut edges = vec![RelationEdge::new("drawer", Relation::On, "table"), cup, pen];
    nodes.shuffle(rng);
    edges.shuffle(rng);
    SceneGraph::new(nodes, edges).unwrap()
}

fn keyframe_law() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000 {
        let len = rng.random_range(1..=50);
        let mut idx = vec![rng.random_range(0..8)];
        while idx.len() < len {
            let prev = *idx.last().unwrap();
            idx.push(if rng.random_bool(0.6) { prev } else { rng.random_range(0..8) });
        }
        let graphs: Vec<SceneGraph> = idx.iter().map(|&k| pool_graph(k, &mut rng)).collect();
        let expected = 1 + idx.windows(2).filter(|w| w[0] != w[1]).count();
        let got = select_keyframes(&graphs).map_err(|e| e.to_string())?;
        ensure(got.len() == expected, || format!("case {case}: {} keyframes, expected {expected}", got.len()))?;
    }
    within(start, Duration::from_secs(5))
}

// Action records ------------------------------------------------------------

fn action_length_contract() -> Check {
    let gw = common::golden_gateway();
    let suite = TaskSuite::bundled();
    let mut plan_lengths: HashMap<String, usize> =
        suite.of_kind(TaskKind::Seen).iter().map(|t| (t.demo_id(), t.ground_truth.len())).collect();
    plan_lengths.extend(suite.demonstrations.iter().map(|d| (d.id.clone(), d.plan.len())));
    let dir = common::fixtures().join("recordings");
    let mut files: Vec<_> = std::fs::read_dir(&dir).map_err(|e| e.to_string())?.map(|e| e.unwrap().path()).collect();
    files.sort();
    ensure(files.len() == plan_lengths.len(), || format!("{} recordings on disk", files.len()))?;
    for path in files {
        let rec = digknow::scene_graph::Recording::load(&path).map_err(|e| e.to_string())?;
        let id = rec.id.clone().unwrap_or_default();
        let d = distill(&rec, &DistillOptions::default(), &gw).map_err(|e| format!("{id}: {e}"))?;
        ensure(d.records.len() + 1 == d.keyframes.len(), || {
            format!("{id}: {} records for {} keyframes", d.records.len(), d.keyframes.len())
        })?;
        let steps = plan_lengths.get(&id).copied().unwrap_or(usize::MAX);
        ensure(d.keyframes.len() == steps + 1, || format!("{id}: {} keyframes for {steps} demonstrated steps", d.keyframes.len()))?;
    }
    Ok(())
}

// Golden end-to-end ---------------------------------------------------------

fn golden_run() -> Result<(String, String), String> {
    let gw = common::golden_gateway();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let kb = common::kb_from_fixtures(dir.path(), &gw);
    let embedder = BagOfClasses::default();
    let ctx = SuiteContext { kb: &kb, gateway: &gw, embedder: &embedder, backend: "scripted" };
    let suite = TaskSuite::bundled();
    let seen = suite.of_kind(TaskKind::Seen);
    let options = EvalOptions::default();
    let planning = run_planning_suite(&ctx, &seen, &options).map_err(|e| e.to_string())?;
    let robot = run_robot_suite(&ctx, &seen, &options).map_err(|e| e.to_string())?;
    for e in &planning.episodes {
        ensure(e.score == 1.0, || format!("task {} seed {} plan score {}", e.task, e.seed, e.score))?;
    }
    for e in &robot.episodes {
        ensure(e.success == Some(true), || format!("task {} seed {} failed in simulation", e.task, e.seed))?;
    }
    ensure(planning.tasks.len() == 9 && robot.tasks.len() == 9, || "expected 9 task rows".into())?;
    Ok((planning.to_json(), robot.to_json()))
}

fn golden_end_to_end() -> Check {
    let start = Instant::now();
    let first = golden_run()?;
    let second = golden_run()?;
    ensure(first == second, || "reports differ between runs".into())?;
    within(start, Duration::from_secs(60))
}

// Planning corrector --------------------------------------------------------

fn planning_corrector(kb: &KnowledgeBase, gw: &Gateway) -> Check {
    let suite = TaskSuite::bundled();
    let task = suite.task(11).ok_or("task 11 missing")?;
    let embedder = BagOfClasses::default();
    let faults = FaultConfig::none();
    let config = CorrectionConfig::default();
    let mut opts = RunOptions::new(Some(kb), &embedder, &faults);
    let world = task.world(0).map_err(|e| e.to_string())?;

    opts.ablation = Ablation { no_pc: true, ..Ablation::default() };
    let raw = plan_task(&task.description, &world, &gw.fork(Some(config.planning_budget())), &opts);
    let flawed = raw.last.ok_or("no plan without correction")?;
    let oracle = world.clone().rollout(&flawed.steps).err().map(|(i, _)| i);
    ensure(oracle == Some(2), || format!("uncorrected plan breaks at {oracle:?}"))?;
    let (_, found) = check_preconditions(&flawed, &world.observe(), &[], gw, &config).map_err(|e| e.to_string())?;
    let at = found.and_then(|d| d.step_index);
    ensure(at == oracle, || format!("validator flagged {at:?}, rollout fails at {oracle:?}"))?;

    opts.ablation = Ablation::default();
    let fixed = plan_task(&task.description, &world, &gw.fork(Some(config.planning_budget())), &opts);
    ensure(fixed.accepted, || "no accepted plan with correction".into())?;
    let revised = fixed.last.ok_or("no plan with correction")?;
    let mut w = world.clone();
    w.rollout(&revised.steps).map_err(|(i, e)| format!("revised plan breaks at {i}: {e}"))?;
    ensure(goal_satisfied(&w, &task.goal), || "revised plan misses the goal".into())?;

    let mut w = world.clone();
    let on = run_task(&task.description, &mut w, &task.goal, gw, &opts);
    opts.ablation = Ablation { no_pc: true, ..Ablation::default() };
    let mut w = world.clone();
    let off = run_task(&task.description, &mut w, &task.goal, gw, &opts);
    ensure(on.success && !off.success, || format!("episode success with/without correction: {}/{}", on.success, off.success))
}

// Execution corrector -------------------------------------------------------

fn execution_corrector(kb: &KnowledgeBase, gw: &Gateway) -> Check {
    let start = Instant::now();
    let suite = TaskSuite::bundled();
    let task = suite.task(1).ok_or("task 1 missing")?;
    let embedder = BagOfClasses::default();
    let ctx = SuiteContext { kb, gateway: gw, embedder: &embedder, backend: "scripted" };
    let on = EvalOptions { fault_probability: 0.3, fault_mode: FaultMode::DropAfterPick, ..EvalOptions::default() };
    let off = EvalOptions { ablation: Ablation { no_ec: true, ..Ablation::default() }, ..on.clone() };
    let (mut won, mut woff) = (0u32, 0u32);
    for seed in 0..200 {
        won += u32::from(run_episode(&ctx, task, seed, &on).map_err(|e| e.to_string())?.success == Some(true));
        woff += u32::from(run_episode(&ctx, task, seed, &off).map_err(|e| e.to_string())?.success == Some(true));
    }
    let gap = (f64::from(won) - f64::from(woff)) / 200.0;
    ensure(gap >= 0.25, || format!("success {won}/200 with correction, {woff}/200 without; gap {gap:.3}"))?;
    report(&format!("    execution correction: {won}/200 vs {woff}/200, gap {gap:.3}"));
    within(start, Duration::from_secs(120))
}

// Validator -----------------------------------------------------------------

fn entity_ids(w: &World) -> (Vec<String>, Vec<String>, Vec<String>) {
    (
        w.objects().keys().cloned().collect(),
        w.containers().keys().cloned().collect(),
        w.surfaces().keys().cloned().collect(),
    )
}

/// Any well-formed step over the world's entities, feasible or not.
fn random_step(w: &World, rng: &mut ChaCha8Rng) -> ActionStep {
    let (objects, containers, surfaces) = entity_ids(w);
    let any: Vec<String> = objects.iter().chain(&containers).chain(&surfaces).cloned().collect();
    let pick = |v: &[String], rng: &mut ChaCha8Rng| v.choose(rng).or(any.choose(rng)).unwrap().clone();
    let verb = *Verb::ALL.choose(rng).unwrap();
    let target = if rng.random_bool(0.85) {
        match verb {
            Verb::Open | Verb::Close => pick(&containers, rng),
            _ => pick(&objects, rng),
        }
    } else {
        pick(&any, rng)
    };
    let args = match verb {
        Verb::PlaceIn => vec![target, pick(&containers, rng)],
        Verb::PlaceOn => vec![target, pick(&surfaces, rng)],
        _ => vec![target],
    };
    ActionStep::new(verb, args).unwrap()
}

/// Mostly feasible steps, so plans get past their first action.
fn guided_step(w: &World, rng: &mut ChaCha8Rng) -> ActionStep {
    for _ in 0..40 {
        let s = random_step(w, rng);
        if w.check(&s).is_ok() {
            return s;
        }
    }
    random_step(w, rng)
}

fn validator_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in SCENARIO_NAMES {
        let scenario = bundled_scenario(name).ok_or("missing scenario")?;
        let (mut valid, mut invalid) = (0, 0);
        for case in 0..200u64 {
            let world = scenario.instantiate(case % 5).map_err(|e| e.to_string())?;
            let mut shadow = world.clone();
            let mut plan = Vec::new();
            for _ in 0..rng.random_range(1..=8) {
                let s = if rng.random_bool(0.85) { guided_step(&shadow, &mut rng) } else { random_step(&shadow, &mut rng) };
                if shadow.check(&s).is_ok() {
                    shadow.apply(&s, &FaultConfig::none()).unwrap();
                }
                plan.push(s);
            }
            let expected = world.clone().rollout(&plan).err();
            let got = validate_plan(&world.observe(), &plan).map_err(|e| e.to_string())?.violation.map(|v| (v.step_index, v.error));
            ensure(got == expected, || format!("{name} case {case}: validator {got:?}, rollout {expected:?}"))?;
            if expected.is_none() { valid += 1 } else { invalid += 1 }
        }
        ensure(valid > 20 && invalid > 20, || format!("{name}: unbalanced sample {valid}/{invalid}"))?;
    }
    Ok(())
}

// Retrieval -----------------------------------------------------------------

fn random_entry(id: String, rng: &mut ChaCha8Rng, dim: usize) -> KnowledgeEntry {
    let word = |rng: &mut ChaCha8Rng| ["put", "cake", "drawer", "pen", "close", "box", "é", "\"q\"", "a\nb"][rng.random_range(0..9)].to_string();
    let text: Vec<String> = (0..rng.random_range(1..6)).map(|_| word(rng)).collect();
    let graph = pool_graph(rng.random_range(0..8), rng);
    KnowledgeEntry {
        entry_id: id,
        instruction: text.join(" "),
        text_key: text.join(" "),
        visual_key: (0..dim).map(|_| rng.random::<f64>() * 3.0 - 1.0).collect(),
        visual_source: "bag_of_classes".into(),
        keyframe_graphs: vec![graph.clone(); rng.random_range(0..3)],
        action_records: (0..rng.random_range(0..3))
            .map(|i| ActionRecord {
                index: i,
                description: word(rng),
                step: rng.random_bool(0.5).then(|| ActionStep::pick("cup")),
                preceding_graph: graph.clone(),
                resulting_graph: graph.clone(),
            })
            .collect(),
        task_pattern: TaskPattern { text: text.join(", ") },
        object_patterns: vec![ObjectPattern::text("cup", &word(rng)), ObjectPattern::snippet("pen", graph)],
    }
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
}

fn retrieval_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dim = 6;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut kb = KnowledgeBase::create(dir.path(), dim, "bag_of_classes").map_err(|e| e.to_string())?;
    // Small integer keys drawn from a pool so that exact ties occur.
    let pool: Vec<Vec<f64>> = (0..12).map(|_| (0..dim).map(|_| f64::from(rng.random_range(0..3u8))).collect()).collect();
    for i in 0..50 {
        let mut e = random_entry(format!("entry{i:02}"), &mut rng, dim);
        e.visual_key = pool.choose(&mut rng).unwrap().clone();
        kb.store(e).map_err(|e| e.to_string())?;
    }
    for q in 0..40 {
        let query: Vec<f64> = pool.get(q).cloned().unwrap_or_else(|| (0..dim).map(|_| f64::from(rng.random_range(0..3u8))).collect());
        let mut expected: Vec<(usize, f64)> =
            kb.entries().iter().enumerate().map(|(i, e)| (i, oracle_cosine(&query, &e.visual_key))).collect();
        // Stable sort keeps insertion order among equal scores.
        expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let got = kb.rank_visual(&query).map_err(|e| e.to_string())?;
        for n in 1..=50 {
            let g: Vec<usize> = got.iter().take(n).map(|p| p.0).collect();
            let x: Vec<usize> = expected.iter().take(n).map(|p| p.0).collect();
            ensure(g == x, || format!("query {q} top-{n}: {g:?} vs {x:?}"))?;
        }
    }
    Ok(())
}

// Simulator invariants ------------------------------------------------------

fn support(g: &SceneGraph) -> BTreeMap<String, Vec<(Relation, String)>> {
    let mut out: BTreeMap<String, Vec<(Relation, String)>> = BTreeMap::new();
    for e in g.edges() {
        if matches!(e.relation, Relation::In | Relation::On | Relation::Held) {
            out.entry(e.subject.clone()).or_default().push((e.relation, e.object.clone()));
        }
    }
    out
}

fn contents(g: &SceneGraph, container: &str) -> BTreeSet<String> {
    g.edges().iter().filter(|e| e.relation == Relation::In && e.object == container).map(|e| e.subject.clone()).collect()
}

fn simulator_invariants() -> Check {
    let modes = [FaultMode::DropAfterPick, FaultMode::NoOp, FaultMode::WrongPlacement];
    for name in SCENARIO_NAMES {
        let scenario = bundled_scenario(name).ok_or("missing scenario")?;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut world = scenario.instantiate(0).map_err(|e| e.to_string())?;
        let objects: BTreeSet<String> = world.objects().keys().cloned().collect();
        let containers: Vec<String> = world.containers().keys().cloned().collect();
        let mut fault = FaultConfig::new(0.3, modes[0], 5).unwrap();
        for n in 0..10_000u32 {
            if n % 1000 == 0 {
                world = scenario.instantiate(u64::from(n / 1000) % 5).map_err(|e| e.to_string())?;
                fault.mode = modes[(n / 1000) as usize % 3];
            }
            let step = if rng.random_bool(0.6) { guided_step(&world, &mut rng) } else { random_step(&world, &mut rng) };
            let before = world.observe();
            let closed_before: Vec<&String> =
                containers.iter().filter(|c| world.container_state(c) == Some(ContainerState::Closed)).collect();
            let inside_closed = step.verb() == Verb::Pick
                && closed_before.iter().any(|c| contents(&before, c).contains(step.target()));
            let into_closed = step.verb() == Verb::PlaceIn && closed_before.iter().any(|c| Some(c.as_str()) == step.destination());
            let result = world.apply(&step, &fault);
            let after = world.observe();
            let ctx = || format!("{name} action {n} {}", step.canonical());
            if inside_closed || into_closed {
                ensure(result.is_err(), || format!("{}: reached through a closed lid", ctx()))?;
            }
            if result.is_err() {
                ensure(before == after, || format!("{}: rejected action changed the world", ctx()))?;
            }
            let s = support(&after);
            let present: BTreeSet<String> = after.nodes().iter().map(|n| n.id.clone()).filter(|id| objects.contains(id)).collect();
            ensure(present == objects, || format!("{}: objects not conserved", ctx()))?;
            for o in &objects {
                let n = s.get(o).map_or(0, Vec::len);
                ensure(n == 1, || format!("{}: `{o}` has {n} locations", ctx()))?;
            }
            let held = after.edges().iter().filter(|e| e.relation == Relation::Held).count();
            ensure(held <= 1, || format!("{}: {held} objects held", ctx()))?;
            for c in &closed_before {
                if world.container_state(c) == Some(ContainerState::Closed) {
                    ensure(contents(&before, c) == contents(&after, c), || format!("{}: contents of closed `{c}` changed", ctx()))?;
                }
            }
            world.check_invariants().map_err(|e| format!("{}: {e}", ctx()))?;
        }
    }
    Ok(())
}

// Persistence ---------------------------------------------------------------

fn persistence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dim = 29;
    let mut originals = Vec::new();
    {
        let mut kb = KnowledgeBase::create(dir.path(), dim, "bag_of_classes").map_err(|e| e.to_string())?;
        for i in 0..100 {
            let e = random_entry(format!("e{i:03}-{:x}", rng.random::<u32>()), &mut rng, dim);
            originals.push(serde_json::to_string(&e).unwrap());
            kb.store(e).map_err(|e| e.to_string())?;
        }
    }
    let kb = KnowledgeBase::open(dir.path()).map_err(|e| e.to_string())?;
    ensure(kb.len() == 100, || format!("{} entries after reopen", kb.len()))?;
    for (orig, id) in originals.iter().zip(kb.list()) {
        let loaded = serde_json::to_string(kb.load(id).map_err(|e| e.to_string())?).unwrap();
        ensure(&loaded == orig, || format!("entry {id} changed across reopen"))?;
    }

    // Record a session, then answer the same session from the log alone.
    let suite = TaskSuite::bundled();
    let task = suite.task(1).ok_or("task 1 missing")?;
    let log = dir.path().join("session.jsonl");
    let session = |gw: &Gateway| -> Result<String, String> {
        let kb_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let embedder = BagOfClasses::default();
        let kb = build_knowledge_base(&suite, kb_dir.path(), gw, &embedder, &DistillOptions::default()).map_err(|e| e.to_string())?;
        let faults = FaultConfig::new(0.3, FaultMode::DropAfterPick, 3).unwrap();
        let opts = RunOptions::new(Some(&kb), &embedder, &faults);
        let mut world = task.world(3).map_err(|e| e.to_string())?;
        let r = run_task(&task.description, &mut world, &task.goal, gw, &opts);
        let entries = serde_json::to_string(kb.entries()).unwrap();
        Ok(format!("{}\n{entries}", serde_json::to_string(&r).unwrap()))
    };
    let recording = RecordingClient::new(ScriptedClient::golden(), &log).map_err(|e| e.to_string())?;
    let live = session(&Gateway::new(Arc::new(recording)))?;
    let replay = Arc::new(ReplayClient::load(&log).map_err(|e| e.to_string())?);
    let replayed = session(&Gateway::new(replay.clone()))?;
    ensure(live == replayed, || "replayed session differs".into())?;
    ensure(replay.remaining() == 0, || format!("{} logged exchanges unused", replay.remaining()))
}

// Ablation ------------------------------------------------------------------

fn ablation_structure() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("ablation.json");
    let code = digknow::cli::run(["digknow", "ablate", "--out", out.to_str().unwrap()]);
    ensure(code == 0, || format!("`digknow ablate` exited {code}"))?;
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let variants = report["variants"].as_array().ok_or("no variants array")?;
    let names: Vec<&str> = variants.iter().filter_map(|v| v["variant"].as_str()).collect();
    ensure(names == ["full", "no_kb", "no_sg", "no_pc", "no_ec"], || format!("variants {names:?}"))?;
    let mut rates = Vec::new();
    for v in variants {
        let episodes = v["report"]["episodes"].as_array().ok_or("no episodes")?;
        ensure(!episodes.is_empty(), || "empty variant".into())?;
        let wins = episodes.iter().filter(|e| e["success"] == serde_json::Value::Bool(true)).count();
        let rate = wins as f64 / episodes.len() as f64;
        let reported = v["success_rate"].as_f64().ok_or("no success_rate")?;
        ensure((rate - reported).abs() < 1e-12, || format!("{}: reported {reported}, episodes give {rate}", v["variant"]))?;
        rates.push(rate);
    }
    ensure(rates[1..].iter().all(|&r| rates[0] >= r), || format!("full {} below an ablated variant {:?}", rates[0], &rates[1..]))
}

#[test]
fn acceptance() {
    let gw = common::golden_gateway();
    let kb_dir = tempfile::tempdir().unwrap();
    let embedder = BagOfClasses::default();
    let kb = build_knowledge_base(&TaskSuite::bundled(), kb_dir.path(), &gw, &embedder, &DistillOptions::default()).unwrap();

    let criteria: Vec<Criterion> = vec![
        ("metric oracle", Box::new(metric_oracle)),
        ("keyframe law", Box::new(keyframe_law)),
        ("action-length contract", Box::new(action_length_contract)),
        ("golden end-to-end", Box::new(golden_end_to_end)),
        ("planning corrector", Box::new(|| planning_corrector(&kb, &gw))),
        ("execution corrector", Box::new(|| execution_corrector(&kb, &gw))),
        ("precondition validator oracle", Box::new(validator_oracle)),
        ("retrieval oracle", Box::new(retrieval_oracle)),
        ("simulator invariants", Box::new(simulator_invariants)),
        ("persistence and replay", Box::new(persistence)),
        ("ablation structure", Box::new(ablation_structure)),
    ];
    let mut failed = Vec::new();
    for (name, check) in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(()) => report(&format!("PASS {name} ({:.2?})", start.elapsed())),
            Err(why) => {
                report(&format!("FAIL {name}: {why}"));
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
