pub mod control;
pub mod graph;
pub mod postdom;

pub use control::{control_deps, project, static_control_deps, ControlDeps};
pub use graph::{Cfg, SINK};
pub use postdom::{build_cfg, post_dominators, PostDomTree};
