pub mod address;
pub mod graph;
pub mod oracle;

pub use address::{address_range, ranges_intersect, AddressRange, AddressStats, Base, Resolved, TransformCount};
pub use graph::{
    closure_of, full_dependency, stack_operands, DepOptions, DependencyRelation, EdgeKind, Occurrence, PathStep, PcEdge,
};
pub use oracle::{oracle_data_deps, oracle_data_deps_many, OracleOptions, Scenario};
