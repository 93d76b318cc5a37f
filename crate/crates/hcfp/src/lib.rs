//! Reachability and model checking for higher-order pushdown stores.
//!
//! A level-1 store is a word; a level-n store is a nonempty sequence of
//! level-(n-1) stores. Processes rewrite the topmost word, duplicate the
//! first child, or drop it, guarded by the top letter. Backward reachability
//! sets of such processes stay regular, and [`saturation::prestar`] computes
//! them as automata over nested store encodings. On top of that sit
//! constrained variants (closure inside a regular invariant, see
//! [`constrained`]), a small branching-time logic ([`logic`]), and
//! brute-force cross-checking oracles ([`oracle`]).

pub mod constrained;
pub mod flat;
pub mod format;
pub mod logic;
pub mod nested;
pub mod oracle;
pub mod process;
pub mod saturation;
pub mod store;

pub use constrained::{
    constrain, flatten_constrained, literal_prestar_constrained, member_constrained,
    prestar_constrained, remove_alternation, saturate_step_constrained,
    AlternatingFlatAutomaton, ConstrainedNestedAutomaton, ConstrainedSaturationError,
};
pub use flat::{universe_flat, FlatAutomaton, FlatSym, StateLevels};
pub use format::{
    flat_to_dot, load_automaton, load_formula, load_model, nested_to_dot, parse_flat,
    parse_formula, parse_model, write_flat, FormatError, ParsedFormula,
};
pub use logic::{check, sat, Atoms, Formula, LogicError, SatResult};
pub use nested::{Labels, NestedAutomaton, NestedError};
pub use oracle::{
    bounded_language_eq, crosscheck_constrained, crosscheck_prestar, curated_suite,
    enumerate_stores, sat_explicit, saturation_mutants, Bounds, CrosscheckReport,
    CuratedInstance, StoreLanguage,
};
pub use process::{Hcfp, ProcessError, ReachVerdict, Transition};
pub use saturation::{
    prestar, prestar_observed, saturate_step, SaturationConfig, SaturationError, SaturationReport,
};
pub use store::{Letter, Operation, Store};
