//! Plan an unseen task with and without the planning corrector.

use std::sync::Arc;

use digknow::distiller::DistillOptions;
use digknow::eval::{build_knowledge_base, TaskSuite};
use digknow::knowledge_base::BagOfClasses;
use digknow::llm_gateway::{Gateway, ScriptedClient};
use digknow::planner::{describe_plan, plan_task, Ablation, RunOptions};
use digknow::simulator::FaultConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let gateway = Gateway::new(Arc::new(ScriptedClient::golden()));
    let embedder = BagOfClasses::default();
    let suite = TaskSuite::bundled();
    let kb = build_knowledge_base(&suite, dir.path(), &gateway, &embedder, &DistillOptions::default())?;
    let task = suite.task(11).ok_or("task 11 missing")?;
    let world = task.world(0)?;
    let faults = FaultConfig::none();
    for name in ["no_pc", "full"] {
        let ablation = Ablation::named(name).ok_or("unknown variant")?;
        let opts = RunOptions { ablation, ..RunOptions::new(Some(&kb), &embedder, &faults) };
        let out = plan_task(&task.description, &world, &gateway.fork(None), &opts);
        let plan = out.last.ok_or("no plan")?;
        println!("{name} (accepted: {})", out.accepted);
        println!("  {}", describe_plan(&plan.steps, &world.observe()));
    }
    Ok(())
}
