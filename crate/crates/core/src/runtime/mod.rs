//! Model-in-the-loop buffer management and trace replay.

mod advisor;
mod buffer;
mod replay;

pub use advisor::{Advice, Advisor, Combined, ModelAdvisor, NullAdvisor, OracleAdvisor};
pub use buffer::{Entry, PriorityBuffer, ScanOrder, DEFAULT_EVICTION_SPEED};
pub use replay::{
    breakdown_csv, coverage, replay, replay_models, replay_policy_only, BreakdownReport, ReplayConfig, BREAKDOWN_HEADER,
};
