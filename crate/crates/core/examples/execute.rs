//! Run seeded episodes with injected grasp failures.

use std::sync::Arc;

use digknow::distiller::DistillOptions;
use digknow::eval::{build_knowledge_base, TaskSuite};
use digknow::knowledge_base::BagOfClasses;
use digknow::llm_gateway::{Gateway, ScriptedClient};
use digknow::planner::{run_task, RunOptions};
use digknow::simulator::{FaultConfig, FaultMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let gateway = Gateway::new(Arc::new(ScriptedClient::golden()));
    let embedder = BagOfClasses::default();
    let suite = TaskSuite::bundled();
    let kb = build_knowledge_base(&suite, dir.path(), &gateway, &embedder, &DistillOptions::default())?;
    let task = suite.task(4).ok_or("task 4 missing")?;
    for seed in 0..5 {
        let faults = FaultConfig::new(0.3, FaultMode::DropAfterPick, seed)?;
        let mut world = task.world(seed)?;
        let r = run_task(&task.description, &mut world, &task.goal, &gateway, &RunOptions::new(Some(&kb), &embedder, &faults));
        println!(
            "seed {seed}: success={} steps={} corrections={} calls={}",
            r.success,
            r.executed.len(),
            r.exec_corrections,
            r.gateway_calls
        );
    }
    Ok(())
}
