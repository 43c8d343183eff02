//! Text formats: the `.machine` behavior DSL and the `.scenario`
//! mission DSL. Both are strict line-oriented `key: value` documents;
//! see `docs/format.md` for the grammar.

mod diag;
mod machine;
mod reader;
mod scenario;

pub use diag::{has_error_diags, DiagSeverity, ParseDiagnostic};
pub use machine::{parse_machine, parse_machine_bytes, serialize_machine, ParseResult};
pub use scenario::{
    only_warnings, parse_scenario, parse_scenario_bytes, BehaviorSource, DirSource, MapSource,
};
