//! Backward reachability restricted to a regular set of stores.
//!
//! A constraint is a flat automaton over store encodings. Where plain
//! saturation closes the target language under arbitrary predecessor steps,
//! constrained saturation only admits a step when both endpoints lie inside
//! the constraint. The automata here carry, on each transition, a set of
//! constraint states as *obligations*: each obligation must accept the rest
//! of the input word from the point where the transition's label ends. A
//! global run of the constraint over the whole word keeps the store itself
//! inside the constraint; the obligations keep every rewritten successor
//! inside it too.
//!
//! Obligations make the flattened semantics alternating (a step may require
//! several branches to accept), so the module also provides the standard
//! subset-style alternation removal back to a plain flat automaton.
//!
//! When a saturation step traverses transitions that already carry
//! obligations, those obligations are not dropped: they are walked forward
//! through the constraint over the text the step consumes and re-imposed on
//! the new transition. Dropping them instead would certify predecessor
//! chains whose intermediate stores fall outside the constraint.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::flat::{syms, FlatAutomaton, FlatError, FlatSym, StateId, StateLevels};
use crate::nested::{build_core, LabelId, Labels, NestedAutomaton, NestedError};
use crate::process::Hcfp;
use crate::saturation::{SaturationConfig, SaturationReport};
use crate::store::{Letter, Operation, Store};

pub(crate) type CLabelId = usize;

#[derive(Error, Debug)]
pub enum ConstrainedSaturationError {
    /// The loop stopped before the fixpoint; `partial` under-approximates the
    /// answer (everything it accepts genuinely reaches the target through
    /// constrained steps).
    #[error("constrained saturation budget exhausted ({report})")]
    BudgetExhausted {
        partial: Box<ConstrainedNestedAutomaton>,
        report: SaturationReport,
    },
    #[error(transparent)]
    Nested(#[from] NestedError),
}

/// The constraint, preprocessed once: leveled, ε-free, single-final, plus the
/// states reachable by reading exactly m opening brackets from the start.
#[derive(Debug)]
struct Constraint {
    flat: FlatAutomaton,
    levels: StateLevels,
    level: u32,
    bracket_reach: Vec<BTreeSet<StateId>>,
}

impl Constraint {
    fn build(b: &FlatAutomaton, n: u32) -> Result<Constraint, NestedError> {
        let (flat, levels) = b.assign_levels(n).map_err(|e| match e {
            FlatError::LevelingFailed(_) => NestedError::NotAStoreLanguage(n),
            other => other.into(),
        })?;
        let mut bracket_reach = Vec::with_capacity(n as usize + 1);
        let mut cur = BTreeSet::from([flat.initial()]);
        bracket_reach.push(cur.clone());
        for _ in 0..n {
            let mut next = BTreeSet::new();
            for &(p, sym, q) in flat.transitions() {
                if sym == Some(FlatSym::Open) && cur.contains(&p) {
                    next.insert(q);
                }
            }
            bracket_reach.push(next.clone());
            cur = next;
        }
        Ok(Constraint {
            flat,
            levels,
            level: n,
            bracket_reach,
        })
    }

    /// Constraint states reachable from `b` by one letter step.
    fn letter_choices(&self, b: StateId, a: Letter) -> Vec<StateId> {
        self.flat
            .transitions()
            .iter()
            .filter(|&&(p, sym, _)| p == b && sym == Some(FlatSym::Letter(a)))
            .map(|&(_, _, q)| q)
            .collect()
    }

    fn letter_step(&self, from: &BTreeSet<StateId>, a: Letter) -> BTreeSet<StateId> {
        let mut out = BTreeSet::new();
        for &b in from {
            out.extend(self.letter_choices(b, a));
        }
        out
    }
}

/// A nested core whose transitions carry obligation sets: constraint states
/// that must each accept the input suffix after the transition's label.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub(crate) struct CCore {
    level: u32,
    num_states: usize,
    transitions: BTreeSet<(StateId, CLabelId, StateId, BTreeSet<StateId>)>,
    initial: StateId,
    final_: StateId,
    initial_accepting: bool,
}

impl CCore {
    fn outgoing(
        &self,
        p: StateId,
    ) -> impl Iterator<Item = &(StateId, CLabelId, StateId, BTreeSet<StateId>)> + '_ {
        self.transitions
            .range((p, 0, 0, BTreeSet::new())..(p + 1, 0, 0, BTreeSet::new()))
    }

    /// Adds an edge, keeping the diversion discipline: an edge into a flagged
    /// initial gets a twin into the final.
    fn add_edge(&mut self, p: StateId, l: CLabelId, q: StateId, u: BTreeSet<StateId>) -> bool {
        let mut added = false;
        if q == self.initial && self.initial_accepting {
            added |= self.transitions.insert((p, l, self.final_, u.clone()));
        }
        added |= self.transitions.insert((p, l, q, u));
        added
    }

    /// Re-roots at a fresh initial with no in-edges, copying the old
    /// initial's outgoing edges. The language is unchanged.
    fn normalize_initial(&self) -> CCore {
        let reentrant = self
            .transitions
            .iter()
            .any(|&(_, _, q, _)| q == self.initial);
        if !reentrant {
            return self.clone();
        }
        let fresh = self.num_states;
        let mut tr = self.transitions.clone();
        for (p, l, q, u) in &self.transitions {
            if *p == self.initial {
                tr.insert((fresh, *l, *q, u.clone()));
            }
        }
        CCore {
            level: self.level,
            num_states: self.num_states + 1,
            transitions: tr,
            initial: fresh,
            final_: self.final_,
            initial_accepting: self.initial_accepting,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
enum CLabelKey {
    Letter(Letter),
    Base(CCore),
    Product(Vec<CLabelId>),
}

struct CEntry {
    key: CLabelKey,
    level: u32,
    core: Option<Arc<CCore>>,
    empty: bool,
}

struct CInner {
    entries: Vec<CEntry>,
    index: HashMap<CLabelKey, CLabelId>,
    converted: HashMap<LabelId, CLabelId>,
    segments: HashMap<(StateId, StateId, u32), Option<CLabelId>>,
    product_budget: usize,
}

impl CInner {
    fn label_empty(&self, id: CLabelId) -> bool {
        self.entries[id].empty
    }

    /// Emptiness of the underlying automaton, ignoring obligations (an
    /// unsatisfiable obligation rejects inputs but is not visible locally).
    fn core_empty(&self, core: &CCore) -> bool {
        if core.initial_accepting {
            return false;
        }
        let mut seen = BTreeSet::from([core.initial]);
        let mut queue = vec![core.initial];
        while let Some(p) = queue.pop() {
            if p == core.final_ {
                return false;
            }
            for &(_, l, q, _) in core.outgoing(p) {
                if !self.label_empty(l) && seen.insert(q) {
                    queue.push(q);
                }
            }
        }
        true
    }

    /// Canonical form mirroring the plain label table: drop edges with empty
    /// labels, keep useful states plus the endpoints, renumber breadth-first
    /// with the final last. Idempotent.
    fn canonical(&self, core: &CCore) -> CCore {
        let live: BTreeSet<(StateId, CLabelId, StateId, BTreeSet<StateId>)> = core
            .transitions
            .iter()
            .filter(|&&(_, l, _, _)| !self.label_empty(l))
            .cloned()
            .collect();
        let mut fwd = BTreeSet::from([core.initial]);
        let mut queue = vec![core.initial];
        while let Some(p) = queue.pop() {
            for &(src, _, tgt, _) in &live {
                if src == p && fwd.insert(tgt) {
                    queue.push(tgt);
                }
            }
        }
        let mut bwd = BTreeSet::from([core.final_]);
        let mut queue = vec![core.final_];
        while let Some(q) = queue.pop() {
            for &(src, _, tgt, _) in &live {
                if tgt == q && bwd.insert(src) {
                    queue.push(src);
                }
            }
        }
        let mut useful: BTreeSet<StateId> = fwd.intersection(&bwd).copied().collect();
        useful.insert(core.initial);
        useful.insert(core.final_);
        let mut order: Vec<StateId> = vec![core.initial];
        let mut placed: BTreeSet<StateId> = BTreeSet::from([core.initial, core.final_]);
        let mut cursor = 0;
        while cursor < order.len() {
            let p = order[cursor];
            cursor += 1;
            for &(_, l, q, _) in core.outgoing(p) {
                if !useful.contains(&q) || self.label_empty(l) {
                    continue;
                }
                if placed.insert(q) {
                    order.push(q);
                }
            }
        }
        let mut remap: BTreeMap<StateId, StateId> = BTreeMap::new();
        for (i, &q) in order.iter().enumerate() {
            remap.insert(q, i);
        }
        let final_new = order.len();
        remap.insert(core.final_, final_new);
        let transitions: BTreeSet<_> = live
            .iter()
            .filter(|(p, _, q, _)| remap.contains_key(p) && remap.contains_key(q))
            .map(|(p, l, q, u)| (remap[p], *l, remap[q], u.clone()))
            .collect();
        CCore {
            level: core.level,
            num_states: final_new + 1,
            transitions,
            initial: 0,
            final_: final_new,
            initial_accepting: core.initial_accepting,
        }
    }

    fn insert_entry(&mut self, key: CLabelKey, level: u32, core: Option<CCore>) -> CLabelId {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let empty = match &core {
            Some(c) => self.core_empty(c),
            None => false,
        };
        let id = self.entries.len();
        self.entries.push(CEntry {
            key: key.clone(),
            level,
            core: core.map(Arc::new),
            empty,
        });
        self.index.insert(key, id);
        id
    }
}

/// Shared state of one constrained run: the plain label table the input came
/// from, the preprocessed constraint, and the constrained-label table.
#[derive(Clone)]
struct CSession {
    labels: Labels,
    constraint: Arc<Constraint>,
    inner: Arc<RwLock<CInner>>,
}

impl CSession {
    fn new(labels: Labels, constraint: Arc<Constraint>) -> CSession {
        CSession {
            labels,
            constraint,
            inner: Arc::new(RwLock::new(CInner {
                entries: Vec::new(),
                index: HashMap::new(),
                converted: HashMap::new(),
                segments: HashMap::new(),
                product_budget: crate::nested::DEFAULT_PRODUCT_BUDGET,
            })),
        }
    }

    fn len(&self) -> usize {
        self.inner.read().unwrap().entries.len()
    }

    fn cletter(&self, a: Letter) -> CLabelId {
        let mut inner = self.inner.write().unwrap();
        inner.insert_entry(CLabelKey::Letter(a), 0, None)
    }

    fn letter_of(&self, id: CLabelId) -> Option<Letter> {
        match self.inner.read().unwrap().entries[id].key {
            CLabelKey::Letter(l) => Some(l),
            _ => None,
        }
    }

    fn level(&self, id: CLabelId) -> u32 {
        self.inner.read().unwrap().entries[id].level
    }

    fn core_of(&self, id: CLabelId) -> Option<Arc<CCore>> {
        self.inner.read().unwrap().entries[id].core.clone()
    }

    fn label_is_empty(&self, id: CLabelId) -> bool {
        self.inner.read().unwrap().entries[id].empty
    }

    fn intern(&self, core: CCore) -> CLabelId {
        let mut inner = self.inner.write().unwrap();
        let canon = inner.canonical(&core);
        let level = canon.level;
        inner.insert_entry(CLabelKey::Base(canon.clone()), level, Some(canon))
    }

    /// Converts a plain label: same structure, no obligations anywhere.
    fn from_plain(&self, id: LabelId) -> CLabelId {
        if let Some(&c) = self.inner.read().unwrap().converted.get(&id) {
            return c;
        }
        let out = match self.labels.core(id) {
            None => self.cletter(
                self.labels
                    .letter_of(id)
                    .expect("labels without cores are letters"),
            ),
            Some(core) => {
                let transitions = core
                    .transitions()
                    .iter()
                    .map(|&(p, l, q)| (p, self.from_plain(l), q, BTreeSet::new()))
                    .collect();
                self.intern(CCore {
                    level: core.level(),
                    num_states: core.num_states(),
                    transitions,
                    initial: core.initial(),
                    final_: core.final_state(),
                    initial_accepting: core.initial_accepting(),
                })
            }
        };
        self.inner.write().unwrap().converted.insert(id, out);
        out
    }

    fn catom(&self, a: Letter, level: u32) -> CLabelId {
        self.from_plain(self.labels.atom(a, level))
    }

    /// The constraint sub-automaton between two states of level `lvl` (paths
    /// through states strictly below), as a constrained label, or None when
    /// no such path carries a store.
    fn segment(&self, p: StateId, q: StateId, lvl: u32) -> Option<CLabelId> {
        if let Some(&r) = self.inner.read().unwrap().segments.get(&(p, q, lvl)) {
            return r;
        }
        let c = &self.constraint;
        let r = match c.flat.leads(&c.levels, p, q, lvl) {
            None => None,
            Some((seg, seg_levels)) => {
                let plain = self
                    .labels
                    .intern(build_core(&self.labels, &seg, &seg_levels, lvl));
                if self.labels.label_is_empty(plain) {
                    None
                } else {
                    Some(self.from_plain(plain))
                }
            }
        };
        self.inner.write().unwrap().segments.insert((p, q, lvl), r);
        r
    }

    /// Intersection of factor languages with obligations pooled; hash-consed
    /// like the plain product (flattening, deduplication, factor order).
    fn cproduct(&self, ids: &[CLabelId]) -> Result<CLabelId, NestedError> {
        assert!(!ids.is_empty());
        let mut factors: BTreeSet<CLabelId> = BTreeSet::new();
        {
            let inner = self.inner.read().unwrap();
            for &id in ids {
                match &inner.entries[id].key {
                    CLabelKey::Product(fs) => factors.extend(fs.iter().copied()),
                    _ => {
                        factors.insert(id);
                    }
                }
            }
        }
        let factors: Vec<CLabelId> = factors.into_iter().collect();
        if factors.len() == 1 {
            return Ok(factors[0]);
        }
        let level = self.level(factors[0]);
        assert!(
            factors.iter().all(|&f| self.level(f) == level),
            "product factors must share a level"
        );
        assert!(level >= 1, "letter labels cannot be multiplied");
        let key = CLabelKey::Product(factors.clone());
        if let Some(&id) = self.inner.read().unwrap().index.get(&key) {
            return Ok(id);
        }
        let mut acc = (*self.core_of(factors[0]).expect("level >= 1")).clone();
        for &f in &factors[1..] {
            let fc = self.core_of(f).expect("level >= 1");
            acc = self.product_core(&acc, &fc)?;
        }
        let mut inner = self.inner.write().unwrap();
        let canon = inner.canonical(&acc);
        Ok(inner.insert_entry(key, level, Some(canon)))
    }

    /// Pairwise product: runs must agree on the text; obligations of both
    /// sides all apply, so a pair edge takes the union.
    fn product_core(&self, a: &CCore, b: &CCore) -> Result<CCore, NestedError> {
        assert_eq!(a.level, b.level);
        let budget = self.inner.read().unwrap().product_budget;
        let mut index: HashMap<(StateId, StateId), StateId> = HashMap::new();
        let mut pairs: Vec<(StateId, StateId)> = Vec::new();
        index.insert((a.initial, b.initial), 0);
        pairs.push((a.initial, b.initial));
        let mut tr: BTreeSet<(StateId, CLabelId, StateId, BTreeSet<StateId>)> = BTreeSet::new();
        let mut cursor = 0;
        while cursor < pairs.len() {
            let (p, q) = pairs[cursor];
            let a_out: Vec<_> = a.outgoing(p).cloned().collect();
            let b_out: Vec<_> = b.outgoing(q).cloned().collect();
            for (_, la, ta, ua) in &a_out {
                for (_, lb, tb, ub) in &b_out {
                    let label = if a.level == 1 {
                        if la == lb {
                            *la
                        } else {
                            continue;
                        }
                    } else {
                        let l = self.cproduct(&[*la, *lb])?;
                        if self.label_is_empty(l) {
                            continue;
                        }
                        l
                    };
                    let key = (*ta, *tb);
                    let id = match index.get(&key) {
                        Some(&id) => id,
                        None => {
                            if pairs.len() >= budget {
                                return Err(NestedError::ResourceExceeded {
                                    during: "constrained label product".into(),
                                    detail: format!("more than {budget} pair states"),
                                });
                            }
                            index.insert(key, pairs.len());
                            pairs.push(key);
                            pairs.len() - 1
                        }
                    };
                    let u: BTreeSet<StateId> = ua.union(ub).copied().collect();
                    tr.insert((cursor, label, id, u));
                }
            }
            cursor += 1;
        }
        let fkey = (a.final_, b.final_);
        let final_ = match index.get(&fkey) {
            Some(&id) => id,
            None => {
                index.insert(fkey, pairs.len());
                pairs.push(fkey);
                pairs.len() - 1
            }
        };
        Ok(CCore {
            level: a.level,
            num_states: pairs.len(),
            transitions: tr,
            initial: 0,
            final_,
            initial_accepting: a.initial_accepting && b.initial_accepting,
        })
    }
}

/// A nested automaton whose acceptance additionally threads the constraint:
/// a global constraint run over the whole encoding, plus per-transition
/// obligation states that must accept the rest of the input.
#[derive(Clone)]
pub struct ConstrainedNestedAutomaton {
    session: CSession,
    core: CCore,
}

impl fmt::Debug for ConstrainedNestedAutomaton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ConstrainedNestedAutomaton(level {}, {} states, {} transitions)",
            self.core.level,
            self.core.num_states,
            self.core.transitions.len()
        )
    }
}

impl ConstrainedNestedAutomaton {
    pub fn level(&self) -> u32 {
        self.core.level
    }

    pub fn num_states(&self) -> usize {
        self.core.num_states
    }

    pub fn num_transitions(&self) -> usize {
        self.core.transitions.len()
    }

    /// The preprocessed (leveled, ε-free) form of the constraint.
    pub fn constraint(&self) -> &FlatAutomaton {
        &self.session.constraint.flat
    }

    pub fn table(&self) -> &Labels {
        &self.session.labels
    }

    pub fn member(&self, s: &Store) -> bool {
        member_constrained(self, s)
    }

    /// The plain nested automaton with the same language, by alternation
    /// removal and re-inflation. Exponential in the worst case.
    pub fn to_nested(&self, budget: usize) -> Result<NestedAutomaton, NestedError> {
        let flat = remove_alternation(&flatten_constrained(self), budget)?;
        NestedAutomaton::inflate(&self.session.labels, &flat, self.core.level)
    }
}

/// Restricts a nested automaton by a constraint over encodings: the result
/// accepts L(a) ∩ {s | encode(s) ∈ L(b)}. No obligations are added; the
/// restriction is the global constraint run alone.
pub fn constrain(
    a: &NestedAutomaton,
    b: &FlatAutomaton,
) -> Result<ConstrainedNestedAutomaton, NestedError> {
    let n = a.level();
    let constraint = Arc::new(Constraint::build(b, n)?);
    let session = CSession::new(a.table().clone(), constraint);
    let top = session.from_plain(a.id());
    let core = match session.core_of(top) {
        Some(c) => (*c).clone(),
        None => unreachable!("store languages live at level >= 1"),
    };
    Ok(ConstrainedNestedAutomaton { session, core })
}

/// A flat automaton whose transitions lead to conjunctions of states: a word
/// is accepted when some run tree gets every branch to a final state exactly
/// at the end. Disjunction is separate transitions on the same symbol.
#[derive(Clone, Debug)]
pub struct AlternatingFlatAutomaton {
    num_states: usize,
    alphabet: BTreeSet<Letter>,
    transitions: BTreeSet<(StateId, FlatSym, BTreeSet<StateId>)>,
    initial: BTreeSet<StateId>,
    finals: BTreeSet<StateId>,
}

impl AlternatingFlatAutomaton {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    /// Backward dynamic programming over positions: a state is good at a
    /// position when some transition's conjunction is all good one step on.
    pub fn member_syms(&self, word: &[FlatSym]) -> bool {
        let mut good = vec![false; self.num_states];
        for &q in &self.finals {
            good[q] = true;
        }
        for pos in (0..word.len()).rev() {
            let mut prev = vec![false; self.num_states];
            for (p, sym, conj) in &self.transitions {
                if *sym == word[pos] && !prev[*p] && conj.iter().all(|&t| good[t]) {
                    prev[*p] = true;
                }
            }
            good = prev;
        }
        self.initial.iter().all(|&s| good[s])
    }

    pub fn member(&self, word: &str) -> bool {
        self.member_syms(&syms(word))
    }

    pub fn accepts_store(&self, s: &Store) -> bool {
        self.member(&s.encode())
    }
}

/// A flat fragment with conjunction targets: state 0 is the entry, state 1
/// the exit; obligations are constraint states, kept apart from the locals.
struct CPiece {
    num_states: usize,
    transitions: BTreeSet<(StateId, FlatSym, StateId, BTreeSet<StateId>)>,
}

fn cflatten_label(
    sess: &CSession,
    id: CLabelId,
    memo: &mut HashMap<CLabelId, Arc<CPiece>>,
) -> Arc<CPiece> {
    if let Some(p) = memo.get(&id) {
        return p.clone();
    }
    let core = sess.core_of(id).expect("flatten needs a core label");
    let piece = Arc::new(cflatten_core(sess, &core, memo));
    memo.insert(id, piece.clone());
    piece
}

/// Splices constrained label pieces like the plain flattening; an obligation
/// rides on the step that finishes its transition's label — the letter
/// itself at level 1, the closing bracket of the component above.
fn cflatten_core(
    sess: &CSession,
    core: &CCore,
    memo: &mut HashMap<CLabelId, Arc<CPiece>>,
) -> CPiece {
    let base = |s: StateId| 2 + s;
    let mut tr: BTreeSet<(StateId, FlatSym, StateId, BTreeSet<StateId>)> = BTreeSet::new();
    let mut num_states = 2 + core.num_states;
    tr.insert((0, FlatSym::Open, base(core.initial), BTreeSet::new()));
    tr.insert((base(core.final_), FlatSym::Close, 1, BTreeSet::new()));
    if core.initial_accepting {
        tr.insert((base(core.initial), FlatSym::Close, 1, BTreeSet::new()));
    }
    if core.level == 1 {
        for (p, l, q, u) in &core.transitions {
            let letter = sess.letter_of(*l).expect("level-1 labels are letters");
            tr.insert((base(*p), FlatSym::Letter(letter), base(*q), u.clone()));
        }
    } else {
        let mut groups: BTreeMap<(StateId, CLabelId), Vec<(StateId, BTreeSet<StateId>)>> =
            BTreeMap::new();
        for (p, l, q, u) in &core.transitions {
            if sess.label_is_empty(*l) {
                continue;
            }
            groups.entry((*p, *l)).or_default().push((*q, u.clone()));
        }
        for ((p, l), exits) in groups {
            let inner = cflatten_label(sess, l, memo);
            let comp_base = num_states;
            num_states += inner.num_states.saturating_sub(2);
            for (x, sym, y, ue) in &inner.transitions {
                debug_assert_ne!(*y, 0, "piece entries have no in-edges");
                debug_assert_ne!(*x, 1, "piece exits have no out-edges");
                let src = if *x == 0 { base(p) } else { comp_base + (x - 2) };
                if *y == 1 {
                    // the component-closing step: impose the outer edge's
                    // obligations here, branching to every exit
                    for (q, u) in &exits {
                        let mut obs = ue.clone();
                        obs.extend(u.iter().copied());
                        tr.insert((src, *sym, base(*q), obs));
                    }
                } else {
                    tr.insert((src, *sym, comp_base + (y - 2), ue.clone()));
                }
            }
        }
    }
    CPiece {
        num_states,
        transitions: tr,
    }
}

/// The alternating word semantics of a constrained automaton: flatten the
/// nested structure, send every obligation to a conjunctive branch of the
/// constraint, include the constraint's own transitions, and conjoin the
/// constraint's start with the automaton's.
pub fn flatten_constrained(a: &ConstrainedNestedAutomaton) -> AlternatingFlatAutomaton {
    let mut memo = HashMap::new();
    let piece = cflatten_core(&a.session, &a.core, &mut memo);
    let c = &a.session.constraint;
    let b_off = piece.num_states;
    let mut transitions: BTreeSet<(StateId, FlatSym, BTreeSet<StateId>)> = BTreeSet::new();
    for (p, sym, q, u) in &piece.transitions {
        let mut conj = BTreeSet::from([*q]);
        conj.extend(u.iter().map(|r| b_off + r));
        transitions.insert((*p, *sym, conj));
    }
    for &(p, sym, q) in c.flat.transitions() {
        let sym = sym.expect("leveled constraints are ε-free");
        transitions.insert((b_off + p, sym, BTreeSet::from([b_off + q])));
    }
    let mut finals = BTreeSet::from([1]);
    finals.extend(c.flat.finals().iter().map(|&f| b_off + f));
    AlternatingFlatAutomaton {
        num_states: b_off + c.flat.num_states(),
        alphabet: a.session.labels.alphabet(),
        transitions,
        initial: BTreeSet::from([0, b_off + c.flat.initial()]),
        finals,
    }
}

/// Membership decided directly on the nested structure (independent of the
/// flattening): label spans are matched recursively over the encoding, every
/// obligation must accept the whole-word suffix at its span's end, and the
/// constraint must accept the whole word.
pub fn member_constrained(a: &ConstrainedNestedAutomaton, s: &Store) -> bool {
    if s.level() != a.core.level {
        return false;
    }
    let word = syms(&s.encode());
    let len = word.len();
    let c = &a.session.constraint;
    // suffix table: btab[r][pos] = the constraint accepts word[pos..] from r
    let nb = c.flat.num_states();
    let mut btab = vec![vec![false; len + 1]; nb];
    for &r in c.flat.finals() {
        btab[r][len] = true;
    }
    for pos in (0..len).rev() {
        for &(p, sym, q) in c.flat.transitions() {
            if sym == Some(word[pos]) && btab[q][pos + 1] {
                btab[p][pos] = true;
            }
        }
    }
    let mut memo: HashMap<(CLabelId, usize), Arc<BTreeSet<usize>>> = HashMap::new();
    let ends = spans_core(&a.session, &a.core, 0, &word, &btab, &mut memo);
    ends.contains(&len) && btab[c.flat.initial()][0]
}

fn spans_label(
    sess: &CSession,
    id: CLabelId,
    i: usize,
    word: &[FlatSym],
    btab: &[Vec<bool>],
    memo: &mut HashMap<(CLabelId, usize), Arc<BTreeSet<usize>>>,
) -> Arc<BTreeSet<usize>> {
    if let Some(r) = memo.get(&(id, i)) {
        return r.clone();
    }
    let ends = match sess.letter_of(id) {
        Some(a) => {
            let mut e = BTreeSet::new();
            if word.get(i) == Some(&FlatSym::Letter(a)) {
                e.insert(i + 1);
            }
            e
        }
        None => {
            let core = sess.core_of(id).expect("level >= 1");
            spans_core(sess, &core, i, word, btab, memo)
        }
    };
    let ends = Arc::new(ends);
    memo.insert((id, i), ends.clone());
    ends
}

/// End positions j such that word[i..j] is a component of the core with all
/// internal obligations satisfied against the whole-word suffix table.
fn spans_core(
    sess: &CSession,
    core: &CCore,
    i: usize,
    word: &[FlatSym],
    btab: &[Vec<bool>],
    memo: &mut HashMap<(CLabelId, usize), Arc<BTreeSet<usize>>>,
) -> BTreeSet<usize> {
    let mut ends = BTreeSet::new();
    if word.get(i) != Some(&FlatSym::Open) {
        return ends;
    }
    if core.initial_accepting && word.get(i + 1) == Some(&FlatSym::Close) {
        ends.insert(i + 2);
    }
    let mut seen: BTreeSet<(StateId, usize)> = BTreeSet::from([(core.initial, i + 1)]);
    let mut queue: Vec<(StateId, usize)> = vec![(core.initial, i + 1)];
    while let Some((p, m)) = queue.pop() {
        if p == core.final_ && word.get(m) == Some(&FlatSym::Close) {
            ends.insert(m + 1);
        }
        for (_, l, q, u) in core.outgoing(p) {
            for &j in spans_label(sess, *l, m, word, btab, memo).iter() {
                if u.iter().all(|&r| btab[r][j]) && seen.insert((*q, j)) {
                    queue.push((*q, j));
                }
            }
        }
    }
    ends
}

/// Subset-style alternation removal: a state is a set of alternating states
/// that must all accept the rest; a step picks one transition per member and
/// unions the chosen conjunctions. Language-preserving; exponential.
pub fn remove_alternation(
    a: &AlternatingFlatAutomaton,
    budget: usize,
) -> Result<FlatAutomaton, FlatError> {
    let mut index: HashMap<BTreeSet<StateId>, usize> = HashMap::new();
    let mut sets: Vec<BTreeSet<StateId>> = vec![a.initial.clone()];
    index.insert(a.initial.clone(), 0);
    let syms_used: BTreeSet<FlatSym> = a.transitions.iter().map(|&(_, s, _)| s).collect();
    let mut trans: BTreeSet<(StateId, Option<FlatSym>, StateId)> = BTreeSet::new();
    let mut cursor = 0;
    while cursor < sets.len() {
        let cur = sets[cursor].clone();
        for &sym in &syms_used {
            let mut options: Vec<Vec<&BTreeSet<StateId>>> = Vec::new();
            let mut stuck = false;
            for &m in &cur {
                let opts: Vec<&BTreeSet<StateId>> = a
                    .transitions
                    .iter()
                    .filter(|&&(p, s, _)| p == m && s == sym)
                    .map(|(_, _, conj)| conj)
                    .collect();
                if opts.is_empty() {
                    stuck = true;
                    break;
                }
                options.push(opts);
            }
            if stuck {
                continue;
            }
            let mut succs: BTreeSet<BTreeSet<StateId>> = BTreeSet::from([BTreeSet::new()]);
            for opts in &options {
                let mut grown: BTreeSet<BTreeSet<StateId>> = BTreeSet::new();
                for acc in &succs {
                    for &opt in opts {
                        let mut u = acc.clone();
                        u.extend(opt.iter().copied());
                        grown.insert(u);
                        if grown.len() > budget {
                            return Err(FlatError::ResourceExceeded {
                                during: "alternation removal".into(),
                                detail: format!("more than {budget} choice combinations"),
                            });
                        }
                    }
                }
                succs = grown;
            }
            for succ in succs {
                let id = match index.get(&succ) {
                    Some(&id) => id,
                    None => {
                        if sets.len() >= budget {
                            return Err(FlatError::ResourceExceeded {
                                during: "alternation removal".into(),
                                detail: format!("more than {budget} subset states"),
                            });
                        }
                        index.insert(succ.clone(), sets.len());
                        sets.push(succ);
                        sets.len() - 1
                    }
                };
                trans.insert((cursor, Some(sym), id));
            }
        }
        cursor += 1;
    }
    let finals: Vec<StateId> = sets
        .iter()
        .enumerate()
        .filter(|(_, s)| s.iter().all(|q| a.finals.contains(q)))
        .map(|(i, _)| i)
        .collect();
    Ok(FlatAutomaton::new(sets.len(), a.alphabet.clone(), trans, 0, finals, None).trim())
}

/// Every way of picking one element from each list.
fn choice_tuples<T: Clone>(options: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for opts in options {
        let mut grown = Vec::new();
        for acc in &out {
            for o in opts {
                let mut t = acc.clone();
                t.push(o.clone());
                grown.push(t);
            }
        }
        out = grown;
    }
    out
}

/// One constrained saturation step for one rule. Mirrors the unconstrained
/// step, with two additions per new transition: a constraint state that
/// certifies the rewritten successor stays inside the constraint (carried as
/// the transition's obligation), and the forward-walked obligations of every
/// transition the step traversed.
fn t_d_b(
    sess: &CSession,
    core: &CCore,
    guard: Letter,
    op: &Operation,
) -> Result<CCore, NestedError> {
    let lvl = core.level;
    let k = op.level();
    debug_assert!(k <= lvl, "rule level exceeds automaton level");
    let mut out = core.clone();
    let init = core.initial;
    if k < lvl {
        let edges: Vec<_> = core.outgoing(init).cloned().collect();
        for (_, l, q, u) in edges {
            let lc = sess.core_of(l).expect("labels above level 0 have cores");
            let nl = sess.intern(t_d_b(sess, &lc, guard, op)?);
            if nl != l {
                out.transitions.remove(&(init, l, q, u.clone()));
                out.add_edge(init, nl, q, u);
            }
        }
        return Ok(out);
    }
    let cst = &sess.constraint;
    let n = cst.level;
    let m = (n - k + 1) as usize;
    match op {
        Operation::Push1(w) => {
            // follow w from the initial, walking traversed obligations along
            let start: (StateId, BTreeSet<StateId>) = (init, BTreeSet::new());
            let mut frontier: BTreeSet<(StateId, BTreeSet<StateId>)> = BTreeSet::from([start]);
            for &c in w {
                let mut next = BTreeSet::new();
                for (x, obs) in &frontier {
                    for (_, l, y, u_edge) in core.outgoing(*x) {
                        if sess.letter_of(*l) != Some(c) {
                            continue;
                        }
                        let choices: Vec<Vec<StateId>> =
                            obs.iter().map(|&b| cst.letter_choices(b, c)).collect();
                        if choices.iter().any(|v| v.is_empty()) {
                            continue;
                        }
                        for tuple in choice_tuples(&choices) {
                            let mut walked: BTreeSet<StateId> = tuple.into_iter().collect();
                            walked.extend(u_edge.iter().copied());
                            next.insert((*y, walked));
                        }
                    }
                }
                frontier = next;
            }
            // the successor w·v must be in the constraint: reach past the
            // opening brackets, read w, and oblige the landing state on v
            let mut b_cur = cst.bracket_reach[m].clone();
            for &c in w {
                b_cur = cst.letter_step(&b_cur, c);
            }
            let la = sess.cletter(guard);
            for (p, obs) in frontier {
                for &q in &b_cur {
                    let mut u = obs.clone();
                    u.insert(q);
                    out.add_edge(init, la, p, u);
                }
            }
        }
        Operation::PushK(_) => {
            let child = k - 1;
            let atom = sess.catom(guard, child);
            let b_states = cst.levels.states_of_level(child);
            let first: Vec<_> = core.outgoing(init).cloned().collect();
            for (_, c1, x, u1) in &first {
                let second: Vec<_> = core.outgoing(*x).cloned().collect();
                for (_, c2, y, u2) in &second {
                    // traversed obligations walk over the duplicated child:
                    // each picks a landing state through some segment
                    let walks: Vec<Vec<(StateId, CLabelId)>> = u1
                        .iter()
                        .map(|&b| {
                            b_states
                                .iter()
                                .filter_map(|&b2| sess.segment(b, b2, child).map(|s| (b2, s)))
                                .collect()
                        })
                        .collect();
                    if walks.iter().any(|v: &Vec<_>| v.is_empty()) {
                        continue;
                    }
                    let tuples = choice_tuples(&walks);
                    for &q1 in &cst.bracket_reach[m] {
                        debug_assert_eq!(cst.levels.level(q1), Some(child));
                        for &q2 in &b_states {
                            let Some(b1) = sess.segment(q1, q2, child) else {
                                continue;
                            };
                            for &q in &b_states {
                                let Some(b2) = sess.segment(q2, q, child) else {
                                    continue;
                                };
                                for tuple in &tuples {
                                    let mut factors = vec![*c1, *c2, b1, b2, atom];
                                    factors.extend(tuple.iter().map(|&(_, s)| s));
                                    let label = sess.cproduct(&factors)?;
                                    if sess.label_is_empty(label) {
                                        continue;
                                    }
                                    let mut u: BTreeSet<StateId> = u2.clone();
                                    u.insert(q);
                                    u.extend(tuple.iter().map(|&(b2, _)| b2));
                                    out.add_edge(init, label, *y, u);
                                }
                            }
                        }
                    }
                }
            }
        }
        Operation::PopK(_) => {
            let child = k - 1;
            let atom = sess.catom(guard, child);
            for &q in &cst.bracket_reach[m] {
                debug_assert_eq!(cst.levels.level(q), Some(child));
                out.add_edge(init, atom, init, BTreeSet::from([q]));
            }
        }
    }
    Ok(out)
}

/// Applies one rule's constrained saturation step once.
pub fn saturate_step_constrained(
    a: &ConstrainedNestedAutomaton,
    guard: Letter,
    op: &Operation,
) -> Result<ConstrainedNestedAutomaton, NestedError> {
    let core = t_d_b(&a.session, &a.core, guard, op)?;
    Ok(ConstrainedNestedAutomaton {
        session: a.session.clone(),
        core,
    })
}

/// Saturates under the constraint until fixpoint: the result accepts exactly
/// the stores that reach L(a) ∩ C through steps whose endpoints all lie in C
/// (zero steps included, so the base is L(a) ∩ C, not L(a)).
pub fn prestar_constrained(
    h: &Hcfp,
    a: &NestedAutomaton,
    c: &FlatAutomaton,
    cfg: &SaturationConfig,
) -> Result<(ConstrainedNestedAutomaton, SaturationReport), ConstrainedSaturationError> {
    assert_eq!(h.level(), a.level(), "process and automaton levels differ");
    let a0 = constrain(a, c)?;
    let session = a0.session;
    let mut core = a0.core.normalize_initial();
    let labels_before = session.len();
    let trans_before = core.transitions.len();
    let mut passes = 0usize;
    let mut fixpoint = false;
    let mut exhausted: Option<String> = None;
    while passes < cfg.max_passes {
        passes += 1;
        let before = core.clone();
        for t in h.transitions() {
            match t_d_b(&session, &core, t.guard, &t.op) {
                Ok(c) => core = c,
                Err(e) => {
                    exhausted = Some(e.to_string());
                    break;
                }
            }
            if session.len() > cfg.max_interned_labels {
                exhausted = Some(format!(
                    "label table grew past {}",
                    cfg.max_interned_labels
                ));
                break;
            }
            if core.transitions.len() > cfg.max_total_transitions {
                exhausted = Some(format!(
                    "transition count grew past {}",
                    cfg.max_total_transitions
                ));
                break;
            }
        }
        if exhausted.is_some() {
            break;
        }
        if core == before {
            fixpoint = true;
            break;
        }
    }
    let report = SaturationReport {
        passes_run: passes,
        transitions_added: core.transitions.len().saturating_sub(trans_before),
        labels_interned: session.len().saturating_sub(labels_before),
        fixpoint_reached: fixpoint,
    };
    let result = ConstrainedNestedAutomaton { session, core };
    if fixpoint {
        Ok((result, report))
    } else {
        Err(ConstrainedSaturationError::BudgetExhausted {
            partial: Box::new(result),
            report,
        })
    }
}

/// The literal reflexive reading: zero-step predecessors are unconstrained,
/// so the result is L(a) itself united with the constrained closure, as a
/// plain nested automaton.
pub fn literal_prestar_constrained(
    h: &Hcfp,
    a: &NestedAutomaton,
    c: &FlatAutomaton,
    cfg: &SaturationConfig,
) -> Result<(NestedAutomaton, SaturationReport), ConstrainedSaturationError> {
    let (constrained, report) = prestar_constrained(h, a, c, cfg)?;
    let closure = constrained.to_nested(crate::flat::DEFAULT_SUBSET_BUDGET)?;
    Ok((a.union(&closure), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::Transition;
    use crate::store::word;

    fn letters(s: &str) -> BTreeSet<Letter> {
        s.chars().map(Letter::new).collect()
    }

    fn stores_up_to(alphabet: &str, level: u32, max_len: usize) -> Vec<Store> {
        if level == 1 {
            let mut out = Vec::new();
            let mut words: Vec<String> = vec![String::new()];
            while let Some(w) = words.pop() {
                if w.len() + 2 <= max_len {
                    out.push(Store::word(word(&w)));
                    for c in alphabet.chars() {
                        words.push(format!("{w}{c}"));
                    }
                }
            }
            out
        } else {
            let children = stores_up_to(alphabet, level - 1, max_len.saturating_sub(2));
            let mut out: Vec<Store> = Vec::new();
            let mut seqs: Vec<(Vec<Store>, usize)> = vec![(Vec::new(), 2)];
            while let Some((seq, len)) = seqs.pop() {
                if !seq.is_empty() {
                    out.push(Store::seq(seq.clone()).unwrap());
                }
                for c in &children {
                    let clen = c.encode().len();
                    if len + clen <= max_len {
                        let mut s = seq.clone();
                        s.push(c.clone());
                        seqs.push((s, len + clen));
                    }
                }
            }
            out
        }
    }

    /// Brute-force constrained backward closure over a finite constraint set.
    fn oracle(h: &Hcfp, targets: &[Store], inside: &[Store]) -> BTreeSet<Store> {
        let c: BTreeSet<Store> = inside.iter().cloned().collect();
        let mut acc: BTreeSet<Store> = targets
            .iter()
            .filter(|s| c.contains(s))
            .cloned()
            .collect();
        loop {
            let mut grew = false;
            for s in &c {
                if !acc.contains(s) && h.step(s).iter().any(|t| acc.contains(t)) {
                    acc.insert(s.clone());
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        acc
    }

    fn pop1() -> Hcfp {
        Hcfp::new(
            letters("a"),
            1,
            vec![Transition {
                guard: Letter::new('a'),
                op: Operation::pop_k(1),
            }],
        )
        .unwrap()
    }

    #[test]
    fn constrain_restricts_by_membership() {
        let table = Labels::new(letters("ab"));
        let stores = [
            Store::word(word("a")),
            Store::word(word("ab")),
            Store::word(word("")),
        ];
        let a = NestedAutomaton::from_store_set(&table, 1, &stores);
        let b = FlatAutomaton::from_encodings(letters("ab"), &["[a]", "[b]", "[]"]);
        let restricted = constrain(&a, &b).unwrap();
        for s in stores_up_to("ab", 1, 8) {
            assert_eq!(
                restricted.member(&s),
                a.member(&s) && b.accepts_store(&s),
                "disagree on {s}"
            );
        }
    }

    #[test]
    fn constrain_with_universe_and_empty() {
        let table = Labels::new(letters("ab"));
        let stores = [Store::word(word("a")), Store::word(word("ab"))];
        let a = NestedAutomaton::from_store_set(&table, 1, &stores);
        let universe = crate::flat::universe_flat(&letters("ab"), 1);
        let all = constrain(&a, &universe).unwrap();
        let none = constrain(&a, &FlatAutomaton::empty_language(letters("ab"), Some(1))).unwrap();
        for s in stores_up_to("ab", 1, 8) {
            assert_eq!(all.member(&s), a.member(&s));
            assert!(!none.member(&s));
        }
    }

    #[test]
    fn constrain_level_two_membership() {
        let table = Labels::new(letters("ab"));
        let s1 = Store::seq(vec![Store::word(word("a")), Store::word(word("b"))]).unwrap();
        let s2 = Store::seq(vec![Store::word(word("a"))]).unwrap();
        let a = NestedAutomaton::from_store_set(&table, 2, &[s1.clone(), s2.clone()]);
        let b = FlatAutomaton::from_store_set(letters("ab"), &[s1.clone()]);
        let restricted = constrain(&a, &b).unwrap();
        assert!(restricted.member(&s1));
        assert!(!restricted.member(&s2));
        for s in stores_up_to("ab", 2, 10) {
            assert_eq!(restricted.member(&s), a.member(&s) && b.accepts_store(&s));
        }
    }

    #[test]
    fn flattened_semantics_agrees_with_direct_membership() {
        let table = Labels::new(letters("ab"));
        let stores = [
            Store::word(word("a")),
            Store::word(word("aa")),
            Store::word(word("ba")),
        ];
        let a = NestedAutomaton::from_store_set(&table, 1, &stores);
        let b = FlatAutomaton::from_encodings(letters("ab"), &["[a]", "[aa]", "[bb]"]);
        let restricted = constrain(&a, &b).unwrap();
        let alt = flatten_constrained(&restricted);
        for s in stores_up_to("ab", 1, 8) {
            assert_eq!(alt.accepts_store(&s), restricted.member(&s), "on {s}");
        }
    }

    #[test]
    fn remove_alternation_matches_flat_intersection() {
        let table = Labels::new(letters("ab"));
        let stores = [
            Store::word(word("a")),
            Store::word(word("aa")),
            Store::word(word("ab")),
        ];
        let a = NestedAutomaton::from_store_set(&table, 1, &stores);
        let b = FlatAutomaton::from_encodings(letters("ab"), &["[a]", "[ab]", "[ba]"]);
        let restricted = constrain(&a, &b).unwrap();
        let removed = remove_alternation(&flatten_constrained(&restricted), 100_000).unwrap();
        let direct = a.flatten().intersect(&b);
        assert!(removed.language_equal(&direct, 1).unwrap());
        for s in stores_up_to("ab", 1, 10) {
            assert_eq!(removed.accepts_store(&s), restricted.member(&s));
        }
    }

    #[test]
    fn remove_alternation_respects_budget() {
        let table = Labels::new(letters("ab"));
        let a = NestedAutomaton::universe(&table, 1);
        let b = crate::flat::universe_flat(&letters("ab"), 1);
        let restricted = constrain(&a, &b).unwrap();
        let alt = flatten_constrained(&restricted);
        assert!(matches!(
            remove_alternation(&alt, 1),
            Err(FlatError::ResourceExceeded { .. })
        ));
    }

    #[test]
    fn worked_pop_chain_is_exact() {
        let h = pop1();
        let table = Labels::new(letters("a"));
        let s = NestedAutomaton::from_store_set(&table, 1, &[Store::word(word("a"))]);
        let c = FlatAutomaton::from_encodings(letters("a"), &["[a]", "[aa]", "[aaa]"]);
        let (result, report) = prestar_constrained(&h, &s, &c, &SaturationConfig::default())
            .expect("small instance saturates");
        assert!(report.fixpoint_reached);
        assert!(result.member(&Store::word(word("a"))));
        assert!(result.member(&Store::word(word("aa"))));
        assert!(result.member(&Store::word(word("aaa"))));
        assert!(!result.member(&Store::word(word("aaaa"))), "outside the constraint");
        assert!(!result.member(&Store::word(word(""))));
    }

    #[test]
    fn single_step_adds_annotated_transition() {
        let h = pop1();
        let table = Labels::new(letters("a"));
        let s = NestedAutomaton::from_store_set(&table, 1, &[Store::word(word("a"))]);
        let c = FlatAutomaton::from_encodings(letters("a"), &["[a]", "[aa]", "[aaa]"]);
        let a0 = constrain(&s, &c).unwrap();
        let t = &h.transitions()[0];
        let a1 = saturate_step_constrained(&a0, t.guard, &t.op).unwrap();
        assert!(a1.num_transitions() > a0.num_transitions());
        assert!(a1.member(&Store::word(word("aa"))));
        assert!(!a1.member(&Store::word(word("aaaa"))));
    }

    #[test]
    fn universal_constraint_degenerates_to_prestar() {
        let h = pop1();
        let table = Labels::new(letters("a"));
        let s = NestedAutomaton::from_store_set(&table, 1, &[Store::word(word("a"))]);
        let universe = crate::flat::universe_flat(&letters("a"), 1);
        let (constrained, _) =
            prestar_constrained(&h, &s, &universe, &SaturationConfig::default()).unwrap();
        let (plain, _) =
            crate::saturation::prestar(&h, &s, &SaturationConfig::default()).unwrap();
        for st in stores_up_to("a", 1, 10) {
            assert_eq!(constrained.member(&st), plain.member(&st), "on {st}");
        }
    }

    #[test]
    fn blocking_constraint_freezes_language() {
        let h = pop1();
        let table = Labels::new(letters("a"));
        let s = NestedAutomaton::from_store_set(&table, 1, &[Store::word(word("a"))]);
        let c = FlatAutomaton::from_encodings(letters("a"), &["[a]"]);
        let (result, report) = prestar_constrained(&h, &s, &c, &SaturationConfig::default())
            .unwrap();
        assert!(report.fixpoint_reached);
        for st in stores_up_to("a", 1, 8) {
            assert_eq!(result.member(&st), st == Store::word(word("a")));
        }
    }

    #[test]
    fn disjoint_constraint_gives_empty() {
        let h = pop1();
        let table = Labels::new(letters("ab"));
        let s = NestedAutomaton::from_store_set(&table, 1, &[Store::word(word("b"))]);
        let c = FlatAutomaton::from_encodings(letters("ab"), &["[a]", "[aa]"]);
        let (result, _) = prestar_constrained(&h, &s, &c, &SaturationConfig::default()).unwrap();
        for st in stores_up_to("ab", 1, 8) {
            assert!(!result.member(&st));
        }
    }

    #[test]
    fn literal_variant_keeps_zero_step_stores() {
        let h = pop1();
        let table = Labels::new(letters("ab"));
        let s = NestedAutomaton::from_store_set(&table, 1, &[Store::word(word("b"))]);
        let c = FlatAutomaton::from_encodings(letters("ab"), &["[a]", "[aa]"]);
        let (result, _) =
            literal_prestar_constrained(&h, &s, &c, &SaturationConfig::default()).unwrap();
        for st in stores_up_to("ab", 1, 8) {
            assert_eq!(result.member(&st), st == Store::word(word("b")), "on {st}");
        }
    }

    #[test]
    fn traversed_obligations_are_carried_not_dropped() {
        // two-rule chain where the intermediate store's own rewrite leaves
        // the constraint: [ae] steps to [be], but [be] only reaches the
        // target via [ce] which is outside the constraint
        let h = Hcfp::new(
            letters("abcde"),
            1,
            vec![
                Transition {
                    guard: Letter::new('b'),
                    op: Operation::push1(word("c")),
                },
                Transition {
                    guard: Letter::new('a'),
                    op: Operation::push1(word("b")),
                },
            ],
        )
        .unwrap();
        let table = Labels::new(letters("abcde"));
        let targets = [Store::word(word("ce")), Store::word(word("cd"))];
        let s = NestedAutomaton::from_store_set(&table, 1, &targets);
        let inside = [
            Store::word(word("ae")),
            Store::word(word("be")),
            Store::word(word("cd")),
        ];
        let c = FlatAutomaton::from_store_set(letters("abcde"), &inside);
        let (result, report) =
            prestar_constrained(&h, &s, &c, &SaturationConfig::default()).unwrap();
        assert!(report.fixpoint_reached);
        let truth = oracle(&h, &targets, &inside);
        assert!(truth.contains(&Store::word(word("cd"))));
        assert!(!truth.contains(&Store::word(word("ae"))));
        for st in stores_up_to("abcde", 1, 6) {
            assert_eq!(result.member(&st), truth.contains(&st), "on {st}");
        }
    }

    #[test]
    fn constraint_growth_is_monotone() {
        let h = pop1();
        let table = Labels::new(letters("a"));
        let s = NestedAutomaton::from_store_set(&table, 1, &[Store::word(word("a"))]);
        let small = FlatAutomaton::from_encodings(letters("a"), &["[a]", "[aa]"]);
        let large = FlatAutomaton::from_encodings(letters("a"), &["[a]", "[aa]", "[aaa]"]);
        let (rs, _) = prestar_constrained(&h, &s, &small, &SaturationConfig::default()).unwrap();
        let (rl, _) = prestar_constrained(&h, &s, &large, &SaturationConfig::default()).unwrap();
        for st in stores_up_to("a", 1, 8) {
            assert!(!rs.member(&st) || rl.member(&st), "monotonicity broken on {st}");
        }
    }

    #[test]
    fn result_stays_inside_constraint() {
        let h = Hcfp::new(
            letters("ab"),
            1,
            vec![
                Transition {
                    guard: Letter::new('a'),
                    op: Operation::pop_k(1),
                },
                Transition {
                    guard: Letter::new('b'),
                    op: Operation::push1(word("a")),
                },
            ],
        )
        .unwrap();
        let table = Labels::new(letters("ab"));
        let s = NestedAutomaton::from_store_set(
            &table,
            1,
            &[Store::word(word("a")), Store::word(word("ab"))],
        );
        let inside = [
            Store::word(word("a")),
            Store::word(word("ab")),
            Store::word(word("bab")),
            Store::word(word("ba")),
        ];
        let c = FlatAutomaton::from_store_set(letters("ab"), &inside);
        let (result, _) = prestar_constrained(&h, &s, &c, &SaturationConfig::default()).unwrap();
        let truth = oracle(&h, &[Store::word(word("a")), Store::word(word("ab"))], &inside);
        for st in stores_up_to("ab", 1, 8) {
            assert_eq!(result.member(&st), truth.contains(&st), "on {st}");
            assert!(!result.member(&st) || c.accepts_store(&st));
        }
    }

    #[test]
    fn level_two_pop_respects_constraint() {
        let h = Hcfp::new(
            letters("a"),
            2,
            vec![Transition {
                guard: Letter::new('a'),
                op: Operation::pop_k(2),
            }],
        )
        .unwrap();
        let table = Labels::new(letters("a"));
        let one = Store::seq(vec![Store::word(word("a"))]).unwrap();
        let two = Store::seq(vec![Store::word(word("a")), Store::word(word("a"))]).unwrap();
        let three = Store::seq(vec![
            Store::word(word("a")),
            Store::word(word("a")),
            Store::word(word("a")),
        ])
        .unwrap();
        let s = NestedAutomaton::from_store_set(&table, 2, &[one.clone()]);
        let inside = [one.clone(), two.clone()];
        let c = FlatAutomaton::from_store_set(letters("a"), &inside);
        let (result, report) =
            prestar_constrained(&h, &s, &c, &SaturationConfig::default()).unwrap();
        assert!(report.fixpoint_reached);
        assert!(result.member(&one));
        assert!(result.member(&two));
        assert!(!result.member(&three), "blocked by the constraint");
        let truth = oracle(&h, &[one.clone()], &inside);
        for st in stores_up_to("a", 2, 10) {
            assert_eq!(result.member(&st), truth.contains(&st), "on {st}");
        }
    }

    #[test]
    fn level_two_duplication_respects_constraint() {
        let h = Hcfp::new(
            letters("ab"),
            2,
            vec![Transition {
                guard: Letter::new('a'),
                op: Operation::push_k(2),
            }],
        )
        .unwrap();
        let table = Labels::new(letters("ab"));
        let one = Store::seq(vec![Store::word(word("a"))]).unwrap();
        let two = Store::seq(vec![Store::word(word("a")), Store::word(word("a"))]).unwrap();
        let s = NestedAutomaton::from_store_set(&table, 2, &[two.clone()]);
        let inside = [one.clone(), two.clone()];
        let c = FlatAutomaton::from_store_set(letters("ab"), &inside);
        let (result, report) =
            prestar_constrained(&h, &s, &c, &SaturationConfig::default()).unwrap();
        assert!(report.fixpoint_reached);
        let truth = oracle(&h, &[two.clone()], &inside);
        assert!(truth.contains(&one), "duplication predecessor inside constraint");
        for st in stores_up_to("ab", 2, 10) {
            assert_eq!(result.member(&st), truth.contains(&st), "on {st}");
        }
    }

    #[test]
    fn low_level_rule_propagates_under_constraint() {
        let h = Hcfp::new(
            letters("ab"),
            2,
            vec![Transition {
                guard: Letter::new('a'),
                op: Operation::push1(word("b")),
            }],
        )
        .unwrap();
        let table = Labels::new(letters("ab"));
        let target = Store::seq(vec![Store::word(word("b"))]).unwrap();
        let pred = Store::seq(vec![Store::word(word("a"))]).unwrap();
        let s = NestedAutomaton::from_store_set(&table, 2, &[target.clone()]);
        let inside = [target.clone(), pred.clone()];
        let c = FlatAutomaton::from_store_set(letters("ab"), &inside);
        let (result, _) = prestar_constrained(&h, &s, &c, &SaturationConfig::default()).unwrap();
        let truth = oracle(&h, &[target.clone()], &inside);
        assert!(truth.contains(&pred));
        for st in stores_up_to("ab", 2, 8) {
            assert_eq!(result.member(&st), truth.contains(&st), "on {st}");
        }
    }

    #[test]
    fn empty_word_store_under_constraint() {
        let h = pop1();
        let table = Labels::new(letters("a"));
        let empty = Store::word(word(""));
        let s = NestedAutomaton::from_store_set(
            &table,
            1,
            &[empty.clone(), Store::word(word("a"))],
        );
        let c = FlatAutomaton::from_encodings(letters("a"), &["[]", "[a]"]);
        let (result, _) = prestar_constrained(&h, &s, &c, &SaturationConfig::default()).unwrap();
        // [a] pops to [] and both sit inside the constraint
        assert!(result.member(&empty));
        assert!(result.member(&Store::word(word("a"))));
        assert!(!result.member(&Store::word(word("aa"))));
        let alt = flatten_constrained(&result);
        for st in stores_up_to("a", 1, 8) {
            assert_eq!(alt.accepts_store(&st), result.member(&st));
        }
    }

    #[test]
    fn budget_exhaustion_returns_partial() {
        let h = pop1();
        let table = Labels::new(letters("a"));
        let s = NestedAutomaton::from_store_set(&table, 1, &[Store::word(word("a"))]);
        let c = FlatAutomaton::from_encodings(letters("a"), &["[a]", "[aa]", "[aaa]", "[aaaa]"]);
        let cfg = SaturationConfig {
            max_passes: 1,
            ..SaturationConfig::default()
        };
        match prestar_constrained(&h, &s, &c, &cfg) {
            Err(ConstrainedSaturationError::BudgetExhausted { partial, report }) => {
                assert!(!report.fixpoint_reached);
                assert_eq!(report.passes_run, 1);
                // sound under-approximation
                assert!(partial.member(&Store::word(word("a"))));
                assert!(!partial.member(&Store::word(word("aaaaa"))));
            }
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn to_nested_round_trips_language() {
        let h = pop1();
        let table = Labels::new(letters("a"));
        let s = NestedAutomaton::from_store_set(&table, 1, &[Store::word(word("a"))]);
        let c = FlatAutomaton::from_encodings(letters("a"), &["[a]", "[aa]", "[aaa]"]);
        let (result, _) = prestar_constrained(&h, &s, &c, &SaturationConfig::default()).unwrap();
        let plain = result.to_nested(100_000).unwrap();
        for st in stores_up_to("a", 1, 10) {
            assert_eq!(plain.member(&st), result.member(&st), "on {st}");
        }
    }
}
