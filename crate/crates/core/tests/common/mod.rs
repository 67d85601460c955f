#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use digknow::distiller::{distill, DistillOptions};
use digknow::eval::TaskSuite;
use digknow::knowledge_base::{BagOfClasses, Embedder, KnowledgeBase, KnowledgeEntry};
use digknow::llm_gateway::{Gateway, ScriptedClient};
use digknow::scene_graph::Recording;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn golden_gateway() -> Gateway {
    Gateway::new(Arc::new(ScriptedClient::golden()))
}

/// Demonstration ids in the order the base is built.
pub fn demo_ids(suite: &TaskSuite) -> Vec<String> {
    suite.recordings().unwrap().into_iter().map(|r| r.id.unwrap()).collect()
}

pub fn fixture_recording(id: &str) -> Recording {
    Recording::load(&fixtures().join("recordings").join(format!("{id}.json"))).unwrap()
}

/// Distill the committed fixture recordings into a fresh base at `dir`.
pub fn kb_from_fixtures(dir: &Path, gateway: &Gateway) -> KnowledgeBase {
    let embedder = BagOfClasses::default();
    let mut kb = KnowledgeBase::open_or_create(dir, &embedder).unwrap();
    for id in demo_ids(&TaskSuite::bundled()) {
        let d = distill(&fixture_recording(&id), &DistillOptions::default(), gateway).unwrap();
        kb.store(KnowledgeEntry::from_distillation(&id, &d, &embedder as &dyn Embedder)).unwrap();
    }
    kb
}
