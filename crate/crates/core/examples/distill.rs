//! Distill one demonstration into action records and patterns.

use std::path::Path;
use std::sync::Arc;

use digknow::distiller::{distill, DistillOptions};
use digknow::llm_gateway::{Gateway, ScriptedClient};
use digknow::scene_graph::Recording;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/recordings/tidy_desk.json");
    let recording = Recording::load(&path)?;
    let gateway = Gateway::new(Arc::new(ScriptedClient::golden()));
    let d = distill(&recording, &DistillOptions::default(), &gateway)?;
    println!("{} frames -> {} keyframes", recording.frames.len(), d.keyframes.len());
    for r in &d.records {
        println!("{}. {}", r.index + 1, r.description);
    }
    println!("task pattern: {}", d.task_pattern.text);
    for p in &d.object_patterns {
        println!("{}: {}", p.object_class, p.render());
    }
    Ok(())
}
