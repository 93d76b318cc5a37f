//! Brute-force reference implementations used as ground truth at desk scale.
//!
//! The saturation result claims to accept exactly the stores that reach a
//! target language. One direction of that claim is checkable by explicit
//! forward search: whenever a bounded breadth-first search finds a witness
//! run, the automaton must accept — a rejection there is a hard failure.
//! The other direction is not: predecessor sets are infinite (a pop's
//! predecessors prepend arbitrary stores), so acceptance without a bounded
//! witness is only a warning. The curated suite is engineered so that every
//! witness fits the bounds and warnings are zero.

use std::collections::BTreeSet;
use std::fmt;

use crate::constrained::{AlternatingFlatAutomaton, ConstrainedNestedAutomaton};
use crate::flat::FlatAutomaton;
use crate::logic::{Atoms, Formula, LogicError};
use crate::nested::NestedAutomaton;
use crate::process::{Hcfp, ReachVerdict, Transition};
use crate::store::{word, Letter, Operation, Store};

/// Desk-scale search bounds.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Bounds {
    /// Encoded-length cap for the enumerated store universe.
    pub max_enum_size: usize,
    /// Step bound for the forward witness search.
    pub max_depth: usize,
    /// Encoded-length cap on intermediate stores during the witness search
    /// (runs may grow past the enumeration bound before shrinking back).
    pub max_encoded_size: usize,
}

impl Bounds {
    pub fn new(max_enum_size: usize, max_depth: usize, max_encoded_size: usize) -> Bounds {
        assert!(max_enum_size > 0 && max_depth > 0 && max_encoded_size > 0);
        Bounds {
            max_enum_size,
            max_depth,
            max_encoded_size,
        }
    }
}

impl Default for Bounds {
    fn default() -> Bounds {
        Bounds {
            max_enum_size: 8,
            max_depth: 20,
            max_encoded_size: 25,
        }
    }
}

/// Anything that answers store membership.
pub trait StoreLanguage {
    fn contains(&self, s: &Store) -> bool;
}

impl StoreLanguage for NestedAutomaton {
    fn contains(&self, s: &Store) -> bool {
        self.member(s)
    }
}

impl StoreLanguage for FlatAutomaton {
    fn contains(&self, s: &Store) -> bool {
        self.accepts_store(s)
    }
}

impl StoreLanguage for ConstrainedNestedAutomaton {
    fn contains(&self, s: &Store) -> bool {
        self.member(s)
    }
}

impl StoreLanguage for AlternatingFlatAutomaton {
    fn contains(&self, s: &Store) -> bool {
        self.accepts_store(s)
    }
}

impl StoreLanguage for BTreeSet<Store> {
    fn contains(&self, s: &Store) -> bool {
        BTreeSet::contains(self, s)
    }
}

#[derive(Clone, Debug)]
pub struct Finding {
    pub store: Store,
    pub note: String,
}

#[derive(Clone, Debug, Default)]
pub struct CrosscheckReport {
    pub instances_checked: usize,
    /// The oracle found a witness but the automaton rejects.
    pub hard_failures: Vec<Finding>,
    /// The automaton accepts but the bounded search found no witness.
    pub warnings: Vec<Finding>,
}

impl CrosscheckReport {
    pub fn ok(&self) -> bool {
        self.hard_failures.is_empty()
    }

    pub fn clean(&self) -> bool {
        self.hard_failures.is_empty() && self.warnings.is_empty()
    }

    /// Associative merge, so checks can be sharded and recombined.
    pub fn merge(mut self, other: CrosscheckReport) -> CrosscheckReport {
        self.instances_checked += other.instances_checked;
        self.hard_failures.extend(other.hard_failures);
        self.warnings.extend(other.warnings);
        self
    }

    /// Machine-readable key-value records, one per line.
    pub fn render_records(&self) -> String {
        let mut out = format!(
            "checked={} hard_failures={} warnings={}\n",
            self.instances_checked,
            self.hard_failures.len(),
            self.warnings.len()
        );
        for f in &self.hard_failures {
            out.push_str(&format!("kind=hard store={} note={}\n", f.store, f.note));
        }
        for f in &self.warnings {
            out.push_str(&format!("kind=warning store={} note={}\n", f.store, f.note));
        }
        out
    }
}

impl fmt::Display for CrosscheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "stores checked   {:>6}\nhard failures    {:>6}\nwarnings         {:>6}",
            self.instances_checked,
            self.hard_failures.len(),
            self.warnings.len()
        )?;
        for finding in &self.hard_failures {
            writeln!(f, "  HARD     {}  {}", finding.store, finding.note)?;
        }
        for finding in &self.warnings {
            writeln!(f, "  warning  {}  {}", finding.store, finding.note)?;
        }
        Ok(())
    }
}

/// All well-formed level-`n` stores with encoded length at most the bound,
/// each exactly once, in store order.
pub fn enumerate_stores(
    alphabet: &BTreeSet<Letter>,
    n: u32,
    max_encoded_size: usize,
) -> Vec<Store> {
    assert!(n >= 1);
    let mut out: BTreeSet<Store> = BTreeSet::new();
    if n == 1 {
        let mut layer: Vec<Vec<Letter>> = vec![Vec::new()];
        while let Some(w) = layer.pop() {
            if w.len() + 2 > max_encoded_size {
                continue;
            }
            out.insert(Store::word(w.clone()));
            for &c in alphabet {
                let mut grown = w.clone();
                grown.push(c);
                layer.push(grown);
            }
        }
    } else if max_encoded_size >= 2 {
        let children = enumerate_stores(alphabet, n - 1, max_encoded_size - 2);
        let mut layer: Vec<(Vec<Store>, usize)> = vec![(Vec::new(), 2)];
        while let Some((seq, len)) = layer.pop() {
            if !seq.is_empty() {
                out.insert(Store::seq(seq.clone()).expect("nonempty sequences are valid"));
            }
            for c in &children {
                let grown = len + c.encoded_len();
                if grown <= max_encoded_size {
                    let mut s = seq.clone();
                    s.push(c.clone());
                    layer.push((s, grown));
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Checks a claimed backward-reachability result against forward search:
/// every enumerated store with a bounded witness into `targets` must be
/// accepted by `result`; acceptance without a witness is recorded as a
/// warning.
pub fn crosscheck_prestar(
    h: &Hcfp,
    targets: &dyn StoreLanguage,
    result: &dyn StoreLanguage,
    b: &Bounds,
) -> CrosscheckReport {
    let mut report = CrosscheckReport::default();
    for s in enumerate_stores(h.alphabet(), h.level(), b.max_enum_size) {
        report.instances_checked += 1;
        let verdict = h.bounded_reach(
            &s,
            &|t| targets.contains(t),
            b.max_depth,
            b.max_encoded_size,
        );
        let accepted = result.contains(&s);
        match (verdict, accepted) {
            (ReachVerdict::ReachesWithin, false) => report.hard_failures.push(Finding {
                store: s,
                note: "bounded witness found but the automaton rejects".into(),
            }),
            (ReachVerdict::NotWithinBounds, true) => report.warnings.push(Finding {
                store: s,
                note: "accepted without a bounded witness".into(),
            }),
            _ => {}
        }
    }
    report
}

/// Forward search where every step must keep both endpoints inside the
/// constraint; the start itself must be inside to count at depth zero.
fn bounded_reach_constrained(
    h: &Hcfp,
    s: &Store,
    targets: &dyn StoreLanguage,
    constraint: &FlatAutomaton,
    b: &Bounds,
) -> ReachVerdict {
    if !constraint.accepts_store(s) {
        return ReachVerdict::NotWithinBounds;
    }
    let mut seen: BTreeSet<Store> = BTreeSet::from([s.clone()]);
    let mut frontier: Vec<(Store, usize)> = vec![(s.clone(), 0)];
    let mut cursor = 0;
    while cursor < frontier.len() {
        let (cur, depth) = frontier[cursor].clone();
        cursor += 1;
        if targets.contains(&cur) {
            return ReachVerdict::ReachesWithin;
        }
        if depth == b.max_depth {
            continue;
        }
        for next in h.step(&cur) {
            if next.encoded_len() <= b.max_encoded_size
                && constraint.accepts_store(&next)
                && seen.insert(next.clone())
            {
                frontier.push((next, depth + 1));
            }
        }
    }
    ReachVerdict::NotWithinBounds
}

/// Like [`crosscheck_prestar`] with steps restricted to the constraint.
pub fn crosscheck_constrained(
    h: &Hcfp,
    targets: &dyn StoreLanguage,
    constraint: &FlatAutomaton,
    result: &dyn StoreLanguage,
    b: &Bounds,
) -> CrosscheckReport {
    let mut report = CrosscheckReport::default();
    for s in enumerate_stores(h.alphabet(), h.level(), b.max_enum_size) {
        report.instances_checked += 1;
        let verdict = bounded_reach_constrained(h, &s, targets, constraint, b);
        let accepted = result.contains(&s);
        match (verdict, accepted) {
            (ReachVerdict::ReachesWithin, false) => report.hard_failures.push(Finding {
                store: s,
                note: "bounded constrained witness found but the automaton rejects".into(),
            }),
            (ReachVerdict::NotWithinBounds, true) => report.warnings.push(Finding {
                store: s,
                note: "accepted without a bounded constrained witness".into(),
            }),
            _ => {}
        }
    }
    report
}

/// First membership disagreement over the bounded universe, or None.
pub fn bounded_language_eq(
    alphabet: &BTreeSet<Letter>,
    n: u32,
    a: &dyn StoreLanguage,
    b: &dyn StoreLanguage,
    max_enum_size: usize,
) -> Option<Store> {
    enumerate_stores(alphabet, n, max_enum_size)
        .into_iter()
        .find(|s| a.contains(s) != b.contains(s))
}

/// The satisfying set of a formula by explicit-state evaluation over the
/// bounded store universe. Successors outside the universe are dropped, so
/// this matches the symbolic checker only when no needed witness leaves the
/// bound — which the curated instances guarantee.
pub fn sat_explicit(
    h: &Hcfp,
    f: &Formula,
    atoms: &Atoms,
    universe: &[Store],
) -> Result<BTreeSet<Store>, LogicError> {
    let all: BTreeSet<Store> = universe.iter().cloned().collect();
    let successors = |s: &Store| -> Vec<Store> {
        h.step(s).into_iter().filter(|t| all.contains(t)).collect()
    };
    Ok(match f {
        Formula::True => all,
        Formula::Atom(name) => {
            let a = atoms
                .get(name)
                .ok_or_else(|| LogicError::UnknownAtom(name.clone()))?;
            if a.level() != h.level() {
                return Err(LogicError::AtomLevel {
                    name: name.clone(),
                    got: a.level(),
                    want: h.level(),
                });
            }
            all.iter().filter(|s| a.member(s)).cloned().collect()
        }
        Formula::Not(g) => {
            let sub = sat_explicit(h, g, atoms, universe)?;
            all.difference(&sub).cloned().collect()
        }
        Formula::And(g, k) => {
            let a = sat_explicit(h, g, atoms, universe)?;
            let b = sat_explicit(h, k, atoms, universe)?;
            a.intersection(&b).cloned().collect()
        }
        Formula::Or(g, k) => {
            let a = sat_explicit(h, g, atoms, universe)?;
            let b = sat_explicit(h, k, atoms, universe)?;
            a.union(&b).cloned().collect()
        }
        Formula::EX(g) => {
            let sub = sat_explicit(h, g, atoms, universe)?;
            all.iter()
                .filter(|s| successors(s).iter().any(|t| sub.contains(t)))
                .cloned()
                .collect()
        }
        Formula::EF(g) => {
            let sub = sat_explicit(h, g, atoms, universe)?;
            backward_fixpoint(&all, &sub, successors)
        }
        Formula::EU(g, k) => {
            let left = sat_explicit(h, g, atoms, universe)?;
            let right = sat_explicit(h, k, atoms, universe)?;
            backward_fixpoint(&left, &right, successors)
        }
    })
}

/// Grows `base` backwards through `through`: adds every store of `through`
/// with some successor already in the set, until nothing changes.
fn backward_fixpoint(
    through: &BTreeSet<Store>,
    base: &BTreeSet<Store>,
    successors: impl Fn(&Store) -> Vec<Store>,
) -> BTreeSet<Store> {
    let mut acc = base.clone();
    loop {
        let mut grew = false;
        for s in through {
            if !acc.contains(s) && successors(s).iter().any(|t| acc.contains(t)) {
                acc.insert(s.clone());
                grew = true;
            }
        }
        if !grew {
            return acc;
        }
    }
}

/// Every single-transition deletion mutant of the transitions saturation
/// added on top of the original automaton. Deleting any of them should lose
/// some reachable store — the crosschecks must flag each mutant.
pub fn saturation_mutants(
    original: &NestedAutomaton,
    saturated: &NestedAutomaton,
) -> Vec<NestedAutomaton> {
    let base = original.core().normalize_initial();
    let sat_core = saturated.core();
    let mut out = Vec::new();
    for t in &sat_core.transitions {
        if base.transitions.contains(t) {
            continue;
        }
        let mut mutant = (*sat_core).clone();
        mutant.transitions.remove(t);
        out.push(NestedAutomaton::from_core(saturated.table(), mutant));
    }
    out
}

/// One ready-made desk-scale process with target stores and bounds sized so
/// that every witness fits (the crosscheck must come back clean).
#[derive(Clone, Debug)]
pub struct CuratedInstance {
    pub name: &'static str,
    pub process: Hcfp,
    pub targets: Vec<Store>,
    pub bounds: Bounds,
}

fn letters(s: &str) -> BTreeSet<Letter> {
    s.chars().map(Letter::new).collect()
}

fn rule(guard: char, op: Operation) -> Transition {
    Transition {
        guard: Letter::new(guard),
        op,
    }
}

fn inst(
    name: &'static str,
    alphabet: &str,
    level: u32,
    rules: Vec<Transition>,
    targets: &[&str],
    max_enum_size: usize,
) -> CuratedInstance {
    CuratedInstance {
        name,
        process: Hcfp::new(letters(alphabet), level, rules).expect("curated instances are valid"),
        targets: targets
            .iter()
            .map(|s| Store::parse(s, level).expect("curated targets parse"))
            .collect(),
        bounds: Bounds {
            max_enum_size,
            ..Bounds::default()
        },
    }
}

/// The fixed desk-scale suite: levels 1 and 2, at most two letters and three
/// rules, witnesses within the default bounds.
pub fn curated_suite() -> Vec<CuratedInstance> {
    vec![
        inst("pop-chain", "a", 1, vec![rule('a', Operation::pop_k(1))], &["[a]"], 8),
        inst("pop-to-empty", "a", 1, vec![rule('a', Operation::pop_k(1))], &["[]"], 8),
        inst(
            "rewrite-letter",
            "ab",
            1,
            vec![rule('a', Operation::push1(word("b")))],
            &["[bb]"],
            8,
        ),
        inst(
            "swap-letters",
            "ab",
            1,
            vec![
                rule('a', Operation::push1(word("b"))),
                rule('b', Operation::push1(word("a"))),
            ],
            &["[ab]"],
            8,
        ),
        inst(
            "grow-then-shrink",
            "ab",
            1,
            vec![
                rule('a', Operation::push1(word("ab"))),
                rule('b', Operation::pop_k(1)),
            ],
            &["[a]"],
            8,
        ),
        inst(
            "two-targets",
            "ab",
            1,
            vec![
                rule('a', Operation::pop_k(1)),
                rule('b', Operation::pop_k(1)),
            ],
            &["[ab]", "[ba]"],
            8,
        ),
        inst(
            "rewrite-then-pop",
            "ab",
            1,
            vec![
                rule('a', Operation::push1(word("b"))),
                rule('b', Operation::pop_k(1)),
            ],
            &["[a]"],
            8,
        ),
        inst(
            "unary-growth",
            "a",
            1,
            vec![rule('a', Operation::push1(word("aa")))],
            &["[aaaa]"],
            8,
        ),
        inst("empty-rules", "a", 1, vec![], &["[aa]"], 8),
        inst(
            "three-rules",
            "ab",
            1,
            vec![
                rule('a', Operation::pop_k(1)),
                rule('b', Operation::pop_k(1)),
                rule('a', Operation::push1(word("ab"))),
            ],
            &["[b]"],
            8,
        ),
        inst(
            "pop-after-push",
            "ab",
            1,
            vec![
                rule('b', Operation::push1(word("aa"))),
                rule('a', Operation::pop_k(1)),
            ],
            &["[aa]"],
            8,
        ),
        inst(
            "level2-pop",
            "a",
            2,
            vec![rule('a', Operation::pop_k(2))],
            &["[[a]]"],
            8,
        ),
        inst(
            "level2-pop-two-children",
            "a",
            2,
            vec![rule('a', Operation::pop_k(2))],
            &["[[a][a]]"],
            11,
        ),
        inst(
            "level2-duplicate",
            "a",
            2,
            vec![rule('a', Operation::push_k(2))],
            &["[[a][a]]"],
            8,
        ),
        inst(
            "level2-letter-rule",
            "ab",
            2,
            vec![rule('a', Operation::push1(word("b")))],
            &["[[b][a]]"],
            8,
        ),
        inst(
            "level2-mixed",
            "ab",
            2,
            vec![
                rule('a', Operation::push_k(2)),
                rule('b', Operation::pop_k(2)),
            ],
            &["[[ab]]"],
            9,
        ),
        inst(
            "level2-guard-switch",
            "ab",
            2,
            vec![
                rule('b', Operation::push_k(2)),
                rule('a', Operation::pop_k(2)),
            ],
            &["[[ab]]"],
            9,
        ),
        inst(
            "level2-three-rules",
            "ab",
            2,
            vec![
                rule('a', Operation::push_k(2)),
                rule('b', Operation::pop_k(2)),
                rule('a', Operation::pop_k(2)),
            ],
            &["[[b]]"],
            8,
        ),
        inst(
            "level2-dead-guard",
            "a",
            2,
            vec![rule('a', Operation::pop_k(2))],
            &["[[][a]]"],
            10,
        ),
        inst(
            "level2-two-letter-rules",
            "ab",
            2,
            vec![
                rule('a', Operation::push1(word("b"))),
                rule('b', Operation::push1(word(""))),
            ],
            &["[[b][a]]"],
            8,
        ),
    ]
}
