//! Explicit-state verification of SCOOP programs: parsing, lowering to
//! control-flow graphs, an operational semantics and a state-space explorer.

pub mod ast;
pub mod model;
pub mod semantics;
pub mod explorer;
pub mod corpus;
