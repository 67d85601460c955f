//! Demonstration-to-knowledge pipeline for tabletop task planning: distill
//! recorded demonstrations into scene-graph, action and pattern knowledge,
//! retrieve it for new instructions, and plan with a corrected LLM loop.

pub mod action;
pub mod cli;
pub mod config;
pub mod distiller;
pub mod eval;
pub mod knowledge_base;
pub mod llm_gateway;
pub mod planner;
pub mod scene_graph;
pub mod simulator;
