pub mod bounds;
pub mod discover;
pub mod enumerate;
pub mod state;
pub mod value;

pub use bounds::{compute_loop_bounds, LoopBounds};
pub use discover::{discover_cfg, StaticCfg};
pub use enumerate::{enumerate_partial, enumerate_traces, EnumerateOptions, Trace, TraceSet};
pub use state::{step_symbolic, SymbolicState, TraceStep};
pub use value::{eval_symbolic, SymbolicValue};
