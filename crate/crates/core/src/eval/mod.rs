mod metric;
mod suite;
mod tasks;

pub use metric::{levenshtein, normalized_levenshtein};
pub use suite::{
    build_knowledge_base, config_digest, run_ablation, run_episode, run_planning_suite, run_robot_suite, select_tasks,
    AblationReport, EpisodeRecord, EvalError, EvalOptions, EvalReport, SuiteContext, SuiteKind, TaskResult,
    VariantResult, ABLATION_TASKS,
};
pub use tasks::{DemoSpec, TaskKind, TaskSpec, TaskSuite};
