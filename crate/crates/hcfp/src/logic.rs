//! Formulas of the existential next/until fragment and their evaluation to
//! store languages.
//!
//! Satisfying sets are computed bottom-up: atoms are registered languages,
//! booleans go through the flat automaton (union, product, complement within
//! the encodings of the right level), `EX` is the exact one-step predecessor
//! image, `EF` is plain saturation, and `E φ U ψ` reduces to constrained
//! saturation: the stores satisfying it are ⟦ψ⟧ together with everything
//! that reaches ⟦φ⟧ ∩ pre(⟦ψ⟧) through steps that stay inside ⟦φ⟧.
//!
//! Saturation budgets are not fatal: the partial result under-approximates
//! the satisfying set, and the evaluation carries an exactness flag instead
//! of aborting. The one exception is negation — complementing an
//! under-approximation over-approximates, so negating a partial result is
//! refused outright.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::constrained::{prestar_constrained, ConstrainedSaturationError};
use crate::flat::{FlatError, DEFAULT_SUBSET_BUDGET};
use crate::nested::{Labels, NestedAutomaton, NestedError};
use crate::process::Hcfp;
use crate::saturation::{pre, prestar, SaturationConfig, SaturationError};
use crate::store::Store;

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Formula {
    True,
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    EX(Box<Formula>),
    EF(Box<Formula>),
    EU(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(name: impl Into<String>) -> Formula {
        Formula::Atom(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(f: Formula, g: Formula) -> Formula {
        Formula::And(Box::new(f), Box::new(g))
    }

    pub fn or(f: Formula, g: Formula) -> Formula {
        Formula::Or(Box::new(f), Box::new(g))
    }

    pub fn ex(f: Formula) -> Formula {
        Formula::EX(Box::new(f))
    }

    pub fn ef(f: Formula) -> Formula {
        Formula::EF(Box::new(f))
    }

    pub fn eu(f: Formula, g: Formula) -> Formula {
        Formula::EU(Box::new(f), Box::new(g))
    }

    /// Every atom name the formula mentions.
    pub fn atom_names(&self) -> std::collections::BTreeSet<&str> {
        let mut out = std::collections::BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut std::collections::BTreeSet<&'a str>) {
        match self {
            Formula::True => {}
            Formula::Atom(name) => {
                out.insert(name.as_str());
            }
            Formula::Not(g) | Formula::EX(g) | Formula::EF(g) => g.collect_atoms(out),
            Formula::And(g, k) | Formula::Or(g, k) | Formula::EU(g, k) => {
                g.collect_atoms(out);
                k.collect_atoms(out);
            }
        }
    }

    /// Binding strength for printing: `|` < `&` < unary forms < leaves.
    fn prec(&self) -> u8 {
        match self {
            Formula::Or(..) => 0,
            Formula::And(..) => 1,
            Formula::Not(_) | Formula::EX(_) | Formula::EF(_) | Formula::EU(..) => 2,
            Formula::True | Formula::Atom(_) => 3,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, ctx: u8) -> fmt::Result {
        if self.prec() < ctx {
            write!(f, "(")?;
            self.fmt_prec(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Formula::True => write!(f, "true"),
            Formula::Atom(name) => write!(f, "atom {name}"),
            Formula::Not(g) => {
                write!(f, "! ")?;
                g.fmt_prec(f, 2)
            }
            Formula::And(g, k) => {
                g.fmt_prec(f, 1)?;
                write!(f, " & ")?;
                k.fmt_prec(f, 2)
            }
            Formula::Or(g, k) => {
                g.fmt_prec(f, 0)?;
                write!(f, " | ")?;
                k.fmt_prec(f, 1)
            }
            Formula::EX(g) => {
                write!(f, "EX ")?;
                g.fmt_prec(f, 2)
            }
            Formula::EF(g) => {
                write!(f, "EF ")?;
                g.fmt_prec(f, 2)
            }
            Formula::EU(g, k) => {
                write!(f, "E ")?;
                g.fmt_prec(f, 0)?;
                write!(f, " U ")?;
                k.fmt_prec(f, 2)
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Error, Debug)]
pub enum LogicError {
    #[error("unknown atom {0:?}")]
    UnknownAtom(String),
    #[error("atom {name:?} is a level-{got} language, the process runs at level {want}")]
    AtomLevel { name: String, got: u32, want: u32 },
    /// Complementing an under-approximation over-approximates, which would
    /// make accepting answers unsound.
    #[error("refusing to negate the under-approximate result of {formula}")]
    NegatedPartial { formula: String },
    #[error(transparent)]
    Nested(#[from] NestedError),
    #[error(transparent)]
    Flat(#[from] FlatError),
}

/// Named store languages the formulas refer to. All registered automata are
/// rebased onto one shared label table.
#[derive(Clone)]
pub struct Atoms {
    table: Labels,
    map: BTreeMap<String, NestedAutomaton>,
}

impl Atoms {
    pub fn new(table: &Labels) -> Atoms {
        Atoms {
            table: table.clone(),
            map: BTreeMap::new(),
        }
    }

    pub fn table(&self) -> &Labels {
        &self.table
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        set: &NestedAutomaton,
    ) -> Result<(), LogicError> {
        let set = if set.table().same_table(&self.table) {
            set.clone()
        } else {
            NestedAutomaton::inflate(&self.table, &set.flatten(), set.level())?
        };
        self.map.insert(name.into(), set);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&NestedAutomaton> {
        self.map.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }
}

/// A satisfying set plus whether it is exact. `exact = false` means some
/// saturation budget ran out below: the language is then a sound
/// under-approximation (every accepted store really satisfies the formula).
#[derive(Clone, Debug)]
pub struct SatResult {
    pub language: NestedAutomaton,
    pub exact: bool,
}

/// The set of stores satisfying `f` under `h`, as a nested automaton.
pub fn sat(
    h: &Hcfp,
    f: &Formula,
    atoms: &Atoms,
    cfg: &SaturationConfig,
) -> Result<SatResult, LogicError> {
    let mut memo = HashMap::new();
    sat_memo(h, f, atoms, cfg, &mut memo)
}

/// Membership of `s` in the satisfying set (the partial set if inexact).
pub fn check(
    h: &Hcfp,
    f: &Formula,
    s: &Store,
    atoms: &Atoms,
    cfg: &SaturationConfig,
) -> Result<bool, LogicError> {
    Ok(sat(h, f, atoms, cfg)?.language.member(s))
}

fn sat_memo(
    h: &Hcfp,
    f: &Formula,
    atoms: &Atoms,
    cfg: &SaturationConfig,
    memo: &mut HashMap<Formula, SatResult>,
) -> Result<SatResult, LogicError> {
    if let Some(r) = memo.get(f) {
        return Ok(r.clone());
    }
    let n = h.level();
    let out = match f {
        Formula::True => SatResult {
            language: NestedAutomaton::universe(&atoms.table, n),
            exact: true,
        },
        Formula::Atom(name) => {
            let a = atoms
                .get(name)
                .ok_or_else(|| LogicError::UnknownAtom(name.clone()))?;
            if a.level() != n {
                return Err(LogicError::AtomLevel {
                    name: name.clone(),
                    got: a.level(),
                    want: n,
                });
            }
            SatResult {
                language: a.clone(),
                exact: true,
            }
        }
        Formula::Not(g) => {
            let sub = sat_memo(h, g, atoms, cfg, memo)?;
            if !sub.exact {
                return Err(LogicError::NegatedPartial {
                    formula: g.to_string(),
                });
            }
            let flat = sub.language.flatten().complement_within(n)?;
            SatResult {
                language: NestedAutomaton::inflate(&atoms.table, &flat, n)?,
                exact: true,
            }
        }
        Formula::And(g, k) => {
            let a = sat_memo(h, g, atoms, cfg, memo)?;
            let b = sat_memo(h, k, atoms, cfg, memo)?;
            SatResult {
                language: a.language.intersect(&b.language)?,
                exact: a.exact && b.exact,
            }
        }
        Formula::Or(g, k) => {
            let a = sat_memo(h, g, atoms, cfg, memo)?;
            let b = sat_memo(h, k, atoms, cfg, memo)?;
            SatResult {
                language: a.language.union(&b.language),
                exact: a.exact && b.exact,
            }
        }
        Formula::EX(g) => {
            let sub = sat_memo(h, g, atoms, cfg, memo)?;
            SatResult {
                language: pre(h, &sub.language)?,
                exact: sub.exact,
            }
        }
        Formula::EF(g) => {
            let sub = sat_memo(h, g, atoms, cfg, memo)?;
            match prestar(h, &sub.language, cfg) {
                Ok((language, _)) => SatResult {
                    language,
                    exact: sub.exact,
                },
                Err(SaturationError::BudgetExhausted { partial, .. }) => SatResult {
                    language: partial,
                    exact: false,
                },
            }
        }
        Formula::EU(g, k) => {
            let left = sat_memo(h, g, atoms, cfg, memo)?;
            let right = sat_memo(h, k, atoms, cfg, memo)?;
            // reach ⟦g⟧ ∩ pre(⟦k⟧) through ⟦g⟧, then step into ⟦k⟧ — plus
            // the immediate ⟦k⟧ stores (zero-length paths)
            let into_right = pre(h, &right.language)?;
            let target = left.language.intersect(&into_right)?;
            let constraint = left.language.flatten();
            let (closure, fixpoint) = match prestar_constrained(h, &target, &constraint, cfg) {
                Ok((c, _)) => (c, true),
                Err(ConstrainedSaturationError::BudgetExhausted { partial, .. }) => {
                    (*partial, false)
                }
                Err(ConstrainedSaturationError::Nested(e)) => return Err(e.into()),
            };
            let plain = closure.to_nested(DEFAULT_SUBSET_BUDGET)?;
            SatResult {
                language: right.language.union(&plain),
                exact: left.exact && right.exact && fixpoint,
            }
        }
    };
    memo.insert(f.clone(), out.clone());
    Ok(out)
}
