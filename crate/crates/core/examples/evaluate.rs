//! Score the planning suite and run the ablation study.

use std::sync::Arc;

use digknow::distiller::DistillOptions;
use digknow::eval::{
    build_knowledge_base, run_ablation, run_planning_suite, select_tasks, EvalOptions, SuiteContext, TaskSuite,
    ABLATION_TASKS,
};
use digknow::knowledge_base::BagOfClasses;
use digknow::llm_gateway::{Gateway, ScriptedClient};
use digknow::planner::Ablation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let gateway = Gateway::new(Arc::new(ScriptedClient::golden()));
    let embedder = BagOfClasses::default();
    let suite = TaskSuite::bundled();
    let kb = build_knowledge_base(&suite, dir.path(), &gateway, &embedder, &DistillOptions::default())?;
    let ctx = SuiteContext { kb: &kb, gateway: &gateway, embedder: &embedder, backend: "scripted" };
    let all: Vec<_> = suite.tasks.iter().collect();
    print!("{}", run_planning_suite(&ctx, &all, &EvalOptions::default())?.render_table());
    let tasks = select_tasks(&suite, &ABLATION_TASKS)?;
    print!("\n{}", run_ablation(&ctx, &tasks, &EvalOptions::ablation_suite(), &Ablation::VARIANTS)?.render_table());
    Ok(())
}
