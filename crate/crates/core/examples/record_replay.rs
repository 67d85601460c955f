//! Record every model exchange of a run, then answer the same run offline.

use std::sync::Arc;

use digknow::distiller::{distill, DistillOptions};
use digknow::eval::TaskSuite;
use digknow::llm_gateway::{Gateway, RecordingClient, ReplayClient, ScriptedClient};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let log = dir.path().join("session.jsonl");
    let recording = TaskSuite::bundled().recordings()?.remove(0);

    let recorder = Gateway::new(Arc::new(RecordingClient::new(ScriptedClient::golden(), &log)?));
    let first = distill(&recording, &DistillOptions::default(), &recorder)?;
    println!("recorded {} exchanges", std::fs::read_to_string(&log)?.lines().count());

    let replay = Arc::new(ReplayClient::load(&log)?);
    let second = distill(&recording, &DistillOptions::default(), &Gateway::new(replay.clone()))?;
    println!("replay identical: {}, unused: {}", first == second, replay.remaining());
    Ok(())
}
