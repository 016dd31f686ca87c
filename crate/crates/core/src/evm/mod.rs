pub mod concrete;
pub mod gas;
pub mod opcode;
pub mod program;

pub use concrete::{run_concrete, step_concrete, ConcreteRun, ConcreteState, ExecutionEnv, HaltKind};
pub use gas::GasTable;
pub use opcode::{Mnemonic, Opcode, RuleGroup};
pub use program::{decode_program, FunctionInfo, Program};
