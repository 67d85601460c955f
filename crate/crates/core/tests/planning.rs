mod common;

use std::sync::Arc;

use digknow::distiller::DistillOptions;
use digknow::eval::{build_knowledge_base, TaskSuite};
use digknow::knowledge_base::{BagOfClasses, KnowledgeBase};
use digknow::llm_gateway::{Gateway, RecordingClient, ReplayClient, ScriptedClient};
use digknow::planner::{
    check_preconditions, plan_task, run_task, Ablation, CorrectionConfig, DiscrepancyKind, RunOptions,
};
use digknow::simulator::{FaultConfig, FaultMode};

fn base(gw: &Gateway) -> (tempfile::TempDir, KnowledgeBase) {
    let dir = tempfile::tempdir().unwrap();
    let kb = build_knowledge_base(&TaskSuite::bundled(), dir.path(), gw, &BagOfClasses::default(), &DistillOptions::default())
        .unwrap();
    (dir, kb)
}

#[test]
fn model_precondition_check_flags_the_flawed_plan_under_replay() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("check.jsonl");
    let suite = TaskSuite::bundled();
    let task = suite.task(11).unwrap();
    let embedder = BagOfClasses::default();
    let faults = FaultConfig::none();
    let config = CorrectionConfig { use_deterministic_validator: false, ..CorrectionConfig::default() };

    let check = |gw: &Gateway| {
        let (_d, kb) = base(gw);
        let mut opts = RunOptions::new(Some(&kb), &embedder, &faults);
        opts.ablation = Ablation { no_pc: true, ..Ablation::default() };
        let world = task.world(0).unwrap();
        let out = plan_task(&task.description, &world, &gw.fork(None), &opts);
        let flawed = out.last.unwrap();
        let records: Vec<_> = kb.entries().iter().flat_map(|e| e.action_records.clone()).collect();
        check_preconditions(&flawed, &world.observe(), &records, gw, &config).unwrap()
    };
    let recorded = check(&Gateway::new(Arc::new(RecordingClient::new(ScriptedClient::golden(), &log).unwrap())));
    let replay = Arc::new(ReplayClient::load(&log).unwrap());
    let replayed = check(&Gateway::new(replay.clone()));
    assert_eq!(recorded, replayed);
    assert_eq!(replay.remaining(), 0);
    let d = replayed.1.expect("the flawed plan is flagged");
    assert_eq!(d.kind, DiscrepancyKind::PreconditionViolation);
}

#[test]
fn a_forced_drop_is_corrected_and_stays_in_budget() {
    let gw = common::golden_gateway();
    let (_d, kb) = base(&gw);
    let suite = TaskSuite::bundled();
    let task = suite.task(1).unwrap();
    let embedder = BagOfClasses::default();
    let config = CorrectionConfig::default();
    // Ordinal 1 is the first pick of the plan.
    let faults = FaultConfig::forced(FaultMode::DropAfterPick, vec![1]);
    let opts = RunOptions::new(Some(&kb), &embedder, &faults);
    let mut world = task.world(0).unwrap();
    let r = run_task(&task.description, &mut world, &task.goal, &gw, &opts);
    assert!(r.success, "{:?}", r.cause);
    assert!(r.exec_corrections >= 1);
    assert_eq!(r.executed.len(), task.ground_truth.len() + 1);
    assert!(r.gateway_calls <= config.episode_budget(r.planned.len()), "{} calls", r.gateway_calls);

    let off = RunOptions { ablation: Ablation { no_ec: true, ..Ablation::default() }, ..RunOptions::new(Some(&kb), &embedder, &faults) };
    let mut world = task.world(0).unwrap();
    assert!(!run_task(&task.description, &mut world, &task.goal, &gw, &off).success);
}

#[test]
fn every_task_is_solved_without_faults() {
    let gw = common::golden_gateway();
    let (_d, kb) = base(&gw);
    let embedder = BagOfClasses::default();
    let faults = FaultConfig::none();
    let opts = RunOptions::new(Some(&kb), &embedder, &faults);
    for task in &TaskSuite::bundled().tasks {
        let mut world = task.world(1).unwrap();
        let r = run_task(&task.description, &mut world, &task.goal, &gw, &opts);
        assert!(r.success, "task {}: {:?}", task.id, r.cause);
        assert_eq!(r.executed, task.ground_truth, "task {}", task.id);
        assert_eq!(r.exec_corrections, 0);
    }
}
