//! Build a base from the bundled demonstrations and query it.

use std::sync::Arc;

use digknow::distiller::DistillOptions;
use digknow::eval::{build_knowledge_base, TaskSuite};
use digknow::knowledge_base::{BagOfClasses, Embedder};
use digknow::llm_gateway::{Gateway, ScriptedClient};
use digknow::simulator::render_frame;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let gateway = Gateway::new(Arc::new(ScriptedClient::golden()));
    let embedder = BagOfClasses::default();
    let suite = TaskSuite::bundled();
    let kb = build_knowledge_base(&suite, dir.path(), &gateway, &embedder, &DistillOptions::default())?;
    println!("{} entries: {}", kb.len(), kb.list().join(", "));

    let task = suite.task(12).ok_or("task 12 missing")?;
    for p in kb.retrieve_task_knowledge(&task.description, &gateway)? {
        println!("task pattern: {}", p.text);
    }
    let frame = render_frame(&task.world(0)?, 0);
    for (i, score) in kb.rank_visual(&embedder.embed(&frame))?.into_iter().take(3) {
        println!("{:.3} {}", score, kb.entries()[i].entry_id);
    }
    Ok(())
}
