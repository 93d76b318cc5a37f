//! Finite automata over bracket encodings of stores.
//!
//! Flat automata are the exchange format of the crate: boolean operations,
//! complement, and (de)serialization all happen here. They read words over
//! the store alphabet extended with `[` and `]`. States are dense indices;
//! transition sets are ordered so every construction is deterministic.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use thiserror::Error;

use crate::store::{Letter, Store};

pub type StateId = usize;

/// Default ceiling on subset-construction states for determinization.
pub const DEFAULT_SUBSET_BUDGET: usize = 100_000;

/// A symbol of the extended alphabet.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum FlatSym {
    Open,
    Close,
    Letter(Letter),
}

impl FlatSym {
    pub fn from_char(c: char) -> FlatSym {
        match c {
            '[' => FlatSym::Open,
            ']' => FlatSym::Close,
            _ => FlatSym::Letter(Letter::new(c)),
        }
    }
}

impl fmt::Display for FlatSym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlatSym::Open => write!(f, "["),
            FlatSym::Close => write!(f, "]"),
            FlatSym::Letter(l) => write!(f, "{l}"),
        }
    }
}

/// Converts an encoded word to symbols (any non-bracket char is a letter).
pub fn syms(word: &str) -> Vec<FlatSym> {
    word.chars().map(FlatSym::from_char).collect()
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum FlatError {
    #[error("resource budget exceeded during {during}: {detail}")]
    ResourceExceeded { during: String, detail: String },
    #[error("cannot assign levels: {0}")]
    LevelingFailed(String),
}

/// A map from automaton state to bracket level, produced by [`FlatAutomaton::assign_levels`].
///
/// A state has level 0 when it has no `[`-successor and no `]`-predecessor;
/// level k when all of those lie at level k-1.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StateLevels(pub Vec<Option<u32>>);

impl StateLevels {
    pub fn level(&self, q: StateId) -> Option<u32> {
        self.0.get(q).copied().flatten()
    }

    /// All states of the given level.
    pub fn states_of_level(&self, k: u32) -> Vec<StateId> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(k))
            .map(|(q, _)| q)
            .collect()
    }
}

/// A nondeterministic finite automaton over `alphabet ∪ {[, ]}` with optional
/// ε-transitions. Languages of interest are sets of store encodings, but the
/// type itself is permissive; [`FlatAutomaton::validate_store_language`]
/// checks containment in the encodings of level-n stores.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FlatAutomaton {
    num_states: usize,
    alphabet: BTreeSet<Letter>,
    /// (source, symbol-or-ε, target)
    transitions: BTreeSet<(StateId, Option<FlatSym>, StateId)>,
    initial: StateId,
    finals: BTreeSet<StateId>,
    declared_level: Option<u32>,
}

impl FlatAutomaton {
    pub fn new(
        num_states: usize,
        alphabet: BTreeSet<Letter>,
        transitions: impl IntoIterator<Item = (StateId, Option<FlatSym>, StateId)>,
        initial: StateId,
        finals: impl IntoIterator<Item = StateId>,
        declared_level: Option<u32>,
    ) -> FlatAutomaton {
        let transitions: BTreeSet<_> = transitions.into_iter().collect();
        let finals: BTreeSet<_> = finals.into_iter().collect();
        assert!(initial < num_states, "initial state out of range");
        for &(p, _, q) in &transitions {
            assert!(p < num_states && q < num_states, "transition out of range");
        }
        for &f in &finals {
            assert!(f < num_states, "final state out of range");
        }
        FlatAutomaton {
            num_states,
            alphabet,
            transitions,
            initial,
            finals,
            declared_level,
        }
    }

    /// The canonical empty-language automaton: an initial state and an
    /// unreachable final state.
    pub fn empty_language(alphabet: BTreeSet<Letter>, declared_level: Option<u32>) -> FlatAutomaton {
        FlatAutomaton::new(2, alphabet, [], 0, [1], declared_level)
    }

    /// A chain automaton accepting exactly the given encoded words.
    pub fn from_encodings(alphabet: BTreeSet<Letter>, words: &[&str]) -> FlatAutomaton {
        let mut trans = BTreeSet::new();
        let mut next = 2usize; // 0 = initial, 1 = shared final
        for w in words {
            let s = syms(w);
            assert!(!s.is_empty(), "store encodings are never empty");
            let mut cur = 0usize;
            for (i, sym) in s.iter().enumerate() {
                let tgt = if i + 1 == s.len() {
                    1
                } else {
                    next += 1;
                    next - 1
                };
                trans.insert((cur, Some(*sym), tgt));
                cur = tgt;
            }
        }
        FlatAutomaton::new(next, alphabet, trans, 0, [1], None)
    }

    /// A finite-set automaton from stores (all of one level).
    pub fn from_store_set(alphabet: BTreeSet<Letter>, stores: &[Store]) -> FlatAutomaton {
        let level = stores.first().map(Store::level);
        let words: Vec<String> = stores.iter().map(Store::encode).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let mut a = FlatAutomaton::from_encodings(alphabet, &refs);
        a.declared_level = level;
        a
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn alphabet(&self) -> &BTreeSet<Letter> {
        &self.alphabet
    }

    pub fn transitions(&self) -> &BTreeSet<(StateId, Option<FlatSym>, StateId)> {
        &self.transitions
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn finals(&self) -> &BTreeSet<StateId> {
        &self.finals
    }

    pub fn declared_level(&self) -> Option<u32> {
        self.declared_level
    }

    pub fn set_declared_level(&mut self, level: Option<u32>) {
        self.declared_level = level;
    }

    fn eps_closure(&self, seed: &BTreeSet<StateId>) -> BTreeSet<StateId> {
        let mut out = seed.clone();
        let mut queue: VecDeque<StateId> = seed.iter().copied().collect();
        while let Some(p) = queue.pop_front() {
            for &(src, sym, tgt) in self.transitions.range((p, None, 0)..=(p, None, usize::MAX)) {
                debug_assert_eq!(src, p);
                if sym.is_none() && out.insert(tgt) {
                    queue.push_back(tgt);
                }
            }
        }
        out
    }

    fn sym_step(&self, from: &BTreeSet<StateId>, sym: FlatSym) -> BTreeSet<StateId> {
        let mut out = BTreeSet::new();
        for &p in from {
            for &(_, s, tgt) in self
                .transitions
                .range((p, Some(sym), 0)..=(p, Some(sym), usize::MAX))
            {
                if s == Some(sym) {
                    out.insert(tgt);
                }
            }
        }
        out
    }

    pub fn member_syms(&self, word: &[FlatSym]) -> bool {
        let mut cur = self.eps_closure(&BTreeSet::from([self.initial]));
        for &sym in word {
            cur = self.eps_closure(&self.sym_step(&cur, sym));
            if cur.is_empty() {
                return false;
            }
        }
        cur.iter().any(|q| self.finals.contains(q))
    }

    pub fn member(&self, word: &str) -> bool {
        self.member_syms(&syms(word))
    }

    pub fn accepts_store(&self, s: &Store) -> bool {
        self.member(&s.encode())
    }

    pub fn is_empty(&self) -> bool {
        let mut seen = BTreeSet::from([self.initial]);
        let mut queue = VecDeque::from([self.initial]);
        while let Some(p) = queue.pop_front() {
            if self.finals.contains(&p) {
                return false;
            }
            for &(src, _, tgt) in &self.transitions {
                if src == p && seen.insert(tgt) {
                    queue.push_back(tgt);
                }
            }
        }
        true
    }

    /// Removes ε-transitions, preserving the language.
    pub fn eliminate_epsilon(&self) -> FlatAutomaton {
        let mut closures: Vec<BTreeSet<StateId>> = Vec::with_capacity(self.num_states);
        for q in 0..self.num_states {
            closures.push(self.eps_closure(&BTreeSet::from([q])));
        }
        let mut trans = BTreeSet::new();
        let mut finals = BTreeSet::new();
        for q in 0..self.num_states {
            if closures[q].iter().any(|r| self.finals.contains(r)) {
                finals.insert(q);
            }
            for &r in &closures[q] {
                for &(src, sym, tgt) in &self.transitions {
                    if src == r {
                        if let Some(s) = sym {
                            trans.insert((q, Some(s), tgt));
                        }
                    }
                }
            }
        }
        FlatAutomaton {
            num_states: self.num_states,
            alphabet: self.alphabet.clone(),
            transitions: trans,
            initial: self.initial,
            finals,
            declared_level: self.declared_level,
        }
    }

    fn reachable(&self) -> BTreeSet<StateId> {
        let mut seen = BTreeSet::from([self.initial]);
        let mut queue = VecDeque::from([self.initial]);
        while let Some(p) = queue.pop_front() {
            for &(src, _, tgt) in &self.transitions {
                if src == p && seen.insert(tgt) {
                    queue.push_back(tgt);
                }
            }
        }
        seen
    }

    fn coreachable(&self) -> BTreeSet<StateId> {
        let mut seen: BTreeSet<StateId> = self.finals.clone();
        let mut queue: VecDeque<StateId> = self.finals.iter().copied().collect();
        while let Some(q) = queue.pop_front() {
            for &(src, _, tgt) in &self.transitions {
                if tgt == q && seen.insert(src) {
                    queue.push_back(src);
                }
            }
        }
        seen
    }

    /// Keeps only useful states (reachable and co-reachable). An empty
    /// language collapses to the canonical two-state form.
    pub fn trim(&self) -> FlatAutomaton {
        let useful: BTreeSet<StateId> = self
            .reachable()
            .intersection(&self.coreachable())
            .copied()
            .collect();
        if !useful.contains(&self.initial) {
            return FlatAutomaton::empty_language(self.alphabet.clone(), self.declared_level);
        }
        let mut remap: BTreeMap<StateId, StateId> = BTreeMap::new();
        for &q in &useful {
            let id = remap.len();
            remap.insert(q, id);
        }
        let trans = self
            .transitions
            .iter()
            .filter(|(p, _, q)| useful.contains(p) && useful.contains(q))
            .map(|&(p, sym, q)| (remap[&p], sym, remap[&q]))
            .collect();
        FlatAutomaton {
            num_states: remap.len(),
            alphabet: self.alphabet.clone(),
            transitions: trans,
            initial: remap[&self.initial],
            finals: self
                .finals
                .iter()
                .filter(|q| useful.contains(q))
                .map(|q| remap[q])
                .collect(),
            declared_level: self.declared_level,
        }
    }

    /// Normalizes to exactly one final state by diverting last steps into a
    /// fresh sink final. Assumes ε is not in the language (true for every
    /// store-encoding language — encodings have length >= 2); the input must
    /// be ε-free.
    pub fn single_final(&self) -> FlatAutomaton {
        debug_assert!(self.transitions.iter().all(|(_, s, _)| s.is_some()));
        if self.finals.len() == 1 {
            let f = *self.finals.iter().next().unwrap();
            let sink = !self.transitions.iter().any(|&(p, _, _)| p == f);
            if sink && f != self.initial {
                return self.clone();
            }
        }
        debug_assert!(
            !self.finals.contains(&self.initial),
            "single_final requires ε not in the language"
        );
        let fresh = self.num_states;
        let mut trans = self.transitions.clone();
        for &(p, sym, q) in &self.transitions {
            if self.finals.contains(&q) {
                trans.insert((p, sym, fresh));
            }
        }
        FlatAutomaton {
            num_states: self.num_states + 1,
            alphabet: self.alphabet.clone(),
            transitions: trans,
            initial: self.initial,
            finals: BTreeSet::from([fresh]),
            declared_level: self.declared_level,
        }
    }

    /// ε-elimination, trim, single final — the precondition of the nested
    /// automaton boundary.
    pub fn normalize(&self) -> FlatAutomaton {
        self.eliminate_epsilon().trim().single_final()
    }

    fn all_syms(&self) -> Vec<FlatSym> {
        let mut v = vec![FlatSym::Open, FlatSym::Close];
        v.extend(self.alphabet.iter().map(|&l| FlatSym::Letter(l)));
        v
    }

    /// Subset construction; the result is a complete DFA (a dead subset is ∅).
    pub fn determinize(&self, budget: usize) -> Result<FlatAutomaton, FlatError> {
        let nfa = self.eliminate_epsilon();
        let symbols = nfa.all_syms();
        let start = nfa.eps_closure(&BTreeSet::from([nfa.initial]));
        let mut index: HashMap<BTreeSet<StateId>, StateId> = HashMap::new();
        let mut subsets: Vec<BTreeSet<StateId>> = Vec::new();
        let mut trans = BTreeSet::new();
        index.insert(start.clone(), 0);
        subsets.push(start);
        let mut next = 0usize;
        while next < subsets.len() {
            let cur = subsets[next].clone();
            for &sym in &symbols {
                let tgt = nfa.sym_step(&cur, sym);
                let id = match index.get(&tgt) {
                    Some(&id) => id,
                    None => {
                        if subsets.len() >= budget {
                            return Err(FlatError::ResourceExceeded {
                                during: "determinization".into(),
                                detail: format!("more than {budget} subset states"),
                            });
                        }
                        let id = subsets.len();
                        index.insert(tgt.clone(), id);
                        subsets.push(tgt);
                        id
                    }
                };
                trans.insert((next, Some(sym), id));
            }
            next += 1;
        }
        let finals: BTreeSet<StateId> = subsets
            .iter()
            .enumerate()
            .filter(|(_, s)| s.iter().any(|q| nfa.finals.contains(q)))
            .map(|(i, _)| i)
            .collect();
        Ok(FlatAutomaton {
            num_states: subsets.len(),
            alphabet: self.alphabet.clone(),
            transitions: trans,
            initial: 0,
            finals,
            declared_level: self.declared_level,
        })
    }

    /// Union by a fresh initial state with ε-edges, then ε-elimination.
    pub fn union(&self, other: &FlatAutomaton) -> FlatAutomaton {
        let off_a = 1;
        let off_b = 1 + self.num_states;
        let mut trans = BTreeSet::new();
        trans.insert((0, None, off_a + self.initial));
        trans.insert((0, None, off_b + other.initial));
        for &(p, sym, q) in &self.transitions {
            trans.insert((off_a + p, sym, off_a + q));
        }
        for &(p, sym, q) in &other.transitions {
            trans.insert((off_b + p, sym, off_b + q));
        }
        let mut finals = BTreeSet::new();
        finals.extend(self.finals.iter().map(|&f| off_a + f));
        finals.extend(other.finals.iter().map(|&f| off_b + f));
        let alphabet: BTreeSet<Letter> =
            self.alphabet.union(&other.alphabet).copied().collect();
        let level = if self.declared_level == other.declared_level {
            self.declared_level
        } else {
            None
        };
        FlatAutomaton {
            num_states: 1 + self.num_states + other.num_states,
            alphabet,
            transitions: trans,
            initial: 0,
            finals,
            declared_level: level,
        }
        .eliminate_epsilon()
        .trim()
    }

    /// Product intersection.
    pub fn intersect(&self, other: &FlatAutomaton) -> FlatAutomaton {
        let a = self.eliminate_epsilon();
        let b = other.eliminate_epsilon();
        let mut index: HashMap<(StateId, StateId), StateId> = HashMap::new();
        let mut pairs: Vec<(StateId, StateId)> = Vec::new();
        let start = (a.initial, b.initial);
        index.insert(start, 0);
        pairs.push(start);
        let mut trans = BTreeSet::new();
        let mut next = 0usize;
        while next < pairs.len() {
            let (p, q) = pairs[next];
            for &(src, sym, tgt) in &a.transitions {
                if src != p {
                    continue;
                }
                let sym = sym.expect("ε-free");
                for &(src2, sym2, tgt2) in &b.transitions {
                    if src2 == q && sym2 == Some(sym) {
                        let key = (tgt, tgt2);
                        let id = *index.entry(key).or_insert_with(|| {
                            pairs.push(key);
                            pairs.len() - 1
                        });
                        trans.insert((next, Some(sym), id));
                    }
                }
            }
            next += 1;
        }
        let finals: BTreeSet<StateId> = pairs
            .iter()
            .enumerate()
            .filter(|(_, (p, q))| a.finals.contains(p) && b.finals.contains(q))
            .map(|(i, _)| i)
            .collect();
        let alphabet: BTreeSet<Letter> =
            self.alphabet.union(&other.alphabet).copied().collect();
        let level = self.declared_level.or(other.declared_level);
        FlatAutomaton {
            num_states: pairs.len(),
            alphabet,
            transitions: trans,
            initial: 0,
            finals,
            declared_level: level,
        }
        .trim()
    }

    /// Complement *relative to the encodings of level-n stores*: the result
    /// accepts `encode(S_n) \ L(self)`. Complement is never taken against all
    /// words — only store encodings are meaningful.
    pub fn complement_within(&self, n: u32) -> Result<FlatAutomaton, FlatError> {
        self.complement_within_budget(n, DEFAULT_SUBSET_BUDGET)
    }

    pub fn complement_within_budget(
        &self,
        n: u32,
        budget: usize,
    ) -> Result<FlatAutomaton, FlatError> {
        let dfa = self.determinize(budget)?;
        let flipped = FlatAutomaton {
            num_states: dfa.num_states,
            alphabet: dfa.alphabet.clone(),
            transitions: dfa.transitions.clone(),
            initial: dfa.initial,
            finals: (0..dfa.num_states)
                .filter(|q| !dfa.finals.contains(q))
                .collect(),
            declared_level: dfa.declared_level,
        };
        let mut out = flipped.intersect(&universe_flat(&self.alphabet, n));
        out.declared_level = Some(n);
        Ok(out)
    }

    /// True iff every accepted word encodes a level-n store.
    pub fn validate_store_language(&self, n: u32) -> bool {
        // complement of the universe, absolutely: determinize universe, flip
        let uni = universe_flat(&self.alphabet, n);
        let dfa = uni
            .determinize(DEFAULT_SUBSET_BUDGET)
            .expect("universe automata are tiny");
        let not_uni = FlatAutomaton {
            num_states: dfa.num_states,
            alphabet: dfa.alphabet.clone(),
            transitions: dfa.transitions.clone(),
            initial: dfa.initial,
            finals: (0..dfa.num_states)
                .filter(|q| !dfa.finals.contains(q))
                .collect(),
            declared_level: dfa.declared_level,
        };
        self.intersect(&not_uni).is_empty()
    }

    /// Exact language equality as store languages (both must be store-valid).
    pub fn language_equal(&self, other: &FlatAutomaton, n: u32) -> Result<bool, FlatError> {
        let not_other = other.complement_within(n)?;
        if !self.intersect(&not_other).is_empty() {
            return Ok(false);
        }
        let not_self = self.complement_within(n)?;
        Ok(other.intersect(&not_self).is_empty())
    }

    /// Splits states by bracket depth so every state gets a level
    /// (level = n - depth), via a product with the depth tracker underlying
    /// [`universe_flat`]. Requires a store-valid language.
    pub fn assign_levels(&self, n: u32) -> Result<(FlatAutomaton, StateLevels), FlatError> {
        if !self.validate_store_language(n) {
            return Err(FlatError::LevelingFailed(format!(
                "language is not contained in the encodings of level-{n} stores"
            )));
        }
        let a = self.eliminate_epsilon().trim().single_final();
        if a.is_empty() {
            // canonical empty: initial at level n, unreachable final at level n
            return Ok((
                a.clone(),
                StateLevels(vec![Some(n); a.num_states]),
            ));
        }
        let depth = depth_tracker(&self.alphabet, n);
        // product of `a` with the tracker, remembering the tracker's depth
        let mut index: HashMap<(StateId, StateId), StateId> = HashMap::new();
        let mut pairs: Vec<(StateId, StateId)> = Vec::new();
        let start = (a.initial, depth.auto.initial);
        index.insert(start, 0);
        pairs.push(start);
        let mut trans = BTreeSet::new();
        let mut next = 0usize;
        while next < pairs.len() {
            let (p, q) = pairs[next];
            for &(src, sym, tgt) in &a.transitions {
                if src != p {
                    continue;
                }
                let sym = sym.expect("ε-free");
                for &(src2, sym2, tgt2) in &depth.auto.transitions {
                    if src2 == q && sym2 == Some(sym) {
                        let key = (tgt, tgt2);
                        let id = *index.entry(key).or_insert_with(|| {
                            pairs.push(key);
                            pairs.len() - 1
                        });
                        trans.insert((next, Some(sym), id));
                    }
                }
            }
            next += 1;
        }
        let finals: BTreeSet<StateId> = pairs
            .iter()
            .enumerate()
            .filter(|(_, (p, q))| a.finals.contains(p) && depth.auto.finals.contains(q))
            .map(|(i, _)| i)
            .collect();
        let product = FlatAutomaton {
            num_states: pairs.len(),
            alphabet: a.alphabet.clone(),
            transitions: trans,
            initial: 0,
            finals,
            declared_level: Some(n),
        };
        // trim, tracking surviving pair info
        let useful: BTreeSet<StateId> = product
            .reachable()
            .intersection(&product.coreachable())
            .copied()
            .collect();
        if !useful.contains(&product.initial) {
            let e = FlatAutomaton::empty_language(self.alphabet.clone(), Some(n));
            let lv = StateLevels(vec![Some(n); e.num_states]);
            return Ok((e, lv));
        }
        let mut remap: BTreeMap<StateId, StateId> = BTreeMap::new();
        for &q in &useful {
            let id = remap.len();
            remap.insert(q, id);
        }
        let trans: BTreeSet<_> = product
            .transitions
            .iter()
            .filter(|(p, _, q)| useful.contains(p) && useful.contains(q))
            .map(|&(p, sym, q)| (remap[&p], sym, remap[&q]))
            .collect();
        let mut levels = vec![None; remap.len()];
        for (&old, &new) in &remap {
            let (_, d) = pairs[old];
            levels[new] = Some(n - depth.depth_of[d]);
        }
        let leveled = FlatAutomaton {
            num_states: remap.len(),
            alphabet: product.alphabet.clone(),
            transitions: trans,
            initial: remap[&product.initial],
            finals: product
                .finals
                .iter()
                .filter(|q| useful.contains(q))
                .map(|q| remap[q])
                .collect(),
            declared_level: Some(n),
        };
        // single_final may have been undone by the trim only if the final was
        // split; re-normalize and extend the level map for the possible sink.
        let normd = leveled.single_final();
        let mut lv = levels;
        if normd.num_states > lv.len() {
            lv.push(Some(n)); // the fresh sink final closes the outer bracket
        }
        Ok((normd, StateLevels(lv)))
    }

    /// The labels of level-k paths from `p1` to `p2`: paths whose intermediate
    /// states all lie strictly below level k. Returns the sub-automaton with
    /// copied endpoints (initial with no in-edges, final with no out-edges),
    /// or `None` when no such path exists.
    pub fn leads(
        &self,
        levels: &StateLevels,
        p1: StateId,
        p2: StateId,
        k: u32,
    ) -> Option<(FlatAutomaton, StateLevels)> {
        debug_assert!(self.transitions.iter().all(|(_, s, _)| s.is_some()));
        let below: BTreeSet<StateId> = (0..self.num_states)
            .filter(|&q| levels.level(q).is_some_and(|l| l < k))
            .collect();
        // states of level < k reachable from p1 and co-reachable to p2
        let mut fwd: BTreeSet<StateId> = BTreeSet::new();
        let mut queue: VecDeque<StateId> = VecDeque::new();
        for &(src, _, tgt) in &self.transitions {
            if src == p1 && below.contains(&tgt) && fwd.insert(tgt) {
                queue.push_back(tgt);
            }
        }
        while let Some(p) = queue.pop_front() {
            for &(src, _, tgt) in &self.transitions {
                if src == p && below.contains(&tgt) && fwd.insert(tgt) {
                    queue.push_back(tgt);
                }
            }
        }
        let mut bwd: BTreeSet<StateId> = BTreeSet::new();
        let mut queue: VecDeque<StateId> = VecDeque::new();
        for &(src, _, tgt) in &self.transitions {
            if tgt == p2 && below.contains(&src) && bwd.insert(src) {
                queue.push_back(src);
            }
        }
        while let Some(q) = queue.pop_front() {
            for &(src, _, tgt) in &self.transitions {
                if tgt == q && below.contains(&src) && bwd.insert(src) {
                    queue.push_back(src);
                }
            }
        }
        let mid: Vec<StateId> = fwd.intersection(&bwd).copied().collect();
        if mid.is_empty() {
            return None;
        }
        // 0 = copy of p1 (entry), 1 = copy of p2 (exit), 2.. = mid states
        let mut remap: BTreeMap<StateId, StateId> = BTreeMap::new();
        for &q in &mid {
            remap.insert(q, 2 + remap.len());
        }
        let mut trans = BTreeSet::new();
        for &(src, sym, tgt) in &self.transitions {
            let s_mid = remap.get(&src).copied();
            let t_mid = remap.get(&tgt).copied();
            if let (Some(s), Some(t)) = (s_mid, t_mid) {
                trans.insert((s, sym, t));
            }
            if src == p1 {
                if let Some(t) = t_mid {
                    trans.insert((0, sym, t));
                }
            }
            if tgt == p2 {
                if let Some(s) = s_mid {
                    trans.insert((s, sym, 1));
                }
            }
            if src == p1 && tgt == p2 {
                trans.insert((0, sym, 1));
            }
        }
        let num_states = 2 + mid.len();
        let sub = FlatAutomaton {
            num_states,
            alphabet: self.alphabet.clone(),
            transitions: trans,
            initial: 0,
            finals: BTreeSet::from([1]),
            declared_level: Some(k),
        };
        let trimmed = sub.trim();
        if trimmed.is_empty() {
            return None;
        }
        // rebuild the level map for the trimmed sub-automaton
        let mut lv = vec![None; num_states];
        lv[0] = levels.level(p1);
        lv[1] = levels.level(p2);
        for (&old, &new) in &remap {
            lv[new] = levels.level(old);
        }
        // trim again with an explicit remap so levels stay aligned
        let useful: BTreeSet<StateId> = sub
            .reachable()
            .intersection(&sub.coreachable())
            .copied()
            .collect();
        let mut remap2: BTreeMap<StateId, StateId> = BTreeMap::new();
        for &q in &useful {
            let id = remap2.len();
            remap2.insert(q, id);
        }
        let trans2: BTreeSet<_> = sub
            .transitions
            .iter()
            .filter(|(p, _, q)| useful.contains(p) && useful.contains(q))
            .map(|&(p, sym, q)| (remap2[&p], sym, remap2[&q]))
            .collect();
        let mut lv2 = vec![None; remap2.len()];
        for (&old, &new) in &remap2 {
            lv2[new] = lv[old];
        }
        let out = FlatAutomaton {
            num_states: remap2.len(),
            alphabet: sub.alphabet.clone(),
            transitions: trans2,
            initial: remap2[&0],
            finals: BTreeSet::from([remap2[&1]]),
            declared_level: Some(k),
        };
        Some((out, StateLevels(lv2)))
    }
}

struct DepthTracker {
    auto: FlatAutomaton,
    /// depth of each tracker state
    depth_of: Vec<u32>,
}

/// The depth tracker accepts exactly the encodings of level-n stores:
/// letters only at depth n, sequences at depths 1..n-1 nonempty, one
/// top-level group. States are (depth, seen-a-child) pairs plus a final.
fn depth_tracker(alphabet: &BTreeSet<Letter>, n: u32) -> DepthTracker {
    assert!(n >= 1);
    // state ids: (d, fresh) = 2d, (d, seen) = 2d + 1 for d in 0..=n; final = 2n + 2
    let id = |d: u32, seen: bool| (2 * d + u32::from(seen)) as usize;
    let fin = (2 * n + 2) as usize;
    let mut trans = BTreeSet::new();
    let mut depth_of = vec![0u32; fin + 1];
    for d in 0..=n {
        depth_of[id(d, false)] = d;
        depth_of[id(d, true)] = d;
    }
    depth_of[fin] = 0;
    for d in 0..n {
        // open a bracket: only one top-level group, so depth 0 must be fresh
        if d == 0 {
            trans.insert((id(0, false), Some(FlatSym::Open), id(1, false)));
        } else {
            trans.insert((id(d, false), Some(FlatSym::Open), id(d + 1, false)));
            trans.insert((id(d, true), Some(FlatSym::Open), id(d + 1, false)));
        }
    }
    for &l in alphabet {
        trans.insert((id(n, false), Some(FlatSym::Letter(l)), id(n, true)));
        trans.insert((id(n, true), Some(FlatSym::Letter(l)), id(n, true)));
    }
    for d in 1..=n {
        // closing depth d: letters (d == n) may be empty, child sequences may not
        let up = d - 1;
        let tgt = if up == 0 { fin } else { id(up, true) };
        if d == n {
            trans.insert((id(d, false), Some(FlatSym::Close), tgt));
        }
        trans.insert((id(d, true), Some(FlatSym::Close), tgt));
    }
    let auto = FlatAutomaton {
        num_states: fin + 1,
        alphabet: alphabet.clone(),
        transitions: trans,
        initial: 0,
        finals: BTreeSet::from([fin]),
        declared_level: Some(n),
    };
    DepthTracker { auto, depth_of }
}

/// The encodings of *all* level-n stores over the alphabet.
pub fn universe_flat(alphabet: &BTreeSet<Letter>, n: u32) -> FlatAutomaton {
    depth_tracker(alphabet, n).auto.trim()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn letters(s: &str) -> BTreeSet<Letter> {
        s.chars().map(Letter::new).collect()
    }

    #[test]
    fn member_basic() {
        let a = FlatAutomaton::from_encodings(letters("ab"), &["[ab]", "[a]"]);
        assert!(a.member("[ab]"));
        assert!(a.member("[a]"));
        assert!(!a.member("[b]"));
        assert!(!a.member("[ab"));
        assert!(!a.member(""));
    }

    #[test]
    fn epsilon_elimination_preserves_language() {
        // 0 -ε-> 1 -[-> 2 -a-> 3 -]-> 4, plus 0 -ε-> 4? no: keep ε-chain simple
        let a = FlatAutomaton::new(
            5,
            letters("a"),
            [
                (0, None, 1),
                (1, Some(FlatSym::Open), 2),
                (2, Some(FlatSym::Letter(Letter::new('a'))), 3),
                (2, None, 3),
                (3, Some(FlatSym::Close), 4),
            ],
            0,
            [4],
            None,
        );
        let b = a.eliminate_epsilon();
        assert!(b.transitions().iter().all(|(_, s, _)| s.is_some()));
        for w in ["[a]", "[]"] {
            assert_eq!(a.member(w), b.member(w), "{w}");
        }
        assert!(!b.member("[aa]"));
    }

    #[test]
    fn trim_to_canonical_empty() {
        let a = FlatAutomaton::new(
            3,
            letters("a"),
            [(0, Some(FlatSym::Open), 2)],
            0,
            [1],
            None,
        );
        let t = a.trim();
        assert!(t.is_empty());
        assert_eq!(t.num_states(), 2);
        assert_eq!(t.finals().len(), 1);
    }

    #[test]
    fn single_final_merges() {
        let a = FlatAutomaton::new(
            4,
            letters("a"),
            [
                (0, Some(FlatSym::Open), 2),
                (2, Some(FlatSym::Letter(Letter::new('a'))), 3),
                (3, Some(FlatSym::Close), 1),
                (2, Some(FlatSym::Close), 3),
            ],
            0,
            [1, 3],
            None,
        );
        let s = a.single_final();
        assert_eq!(s.finals().len(), 1);
        for w in ["[a]", "[", "[a", "[]"] {
            assert_eq!(a.member(w), s.member(w), "{w}");
        }
    }

    #[test]
    fn universe_level_1() {
        let u = universe_flat(&letters("ab"), 1);
        for w in ["[]", "[a]", "[b]", "[ab]", "[bba]"] {
            assert!(u.member(w), "{w}");
        }
        for w in ["", "[", "]", "[[a]]", "a", "[a][b]", "[a]b"] {
            assert!(!u.member(w), "{w}");
        }
    }

    #[test]
    fn universe_level_2() {
        let u = universe_flat(&letters("ab"), 2);
        for w in ["[[]]", "[[a]]", "[[ab][b]]", "[[][]]"] {
            assert!(u.member(w), "{w}");
        }
        for w in ["[]", "[a]", "[[a]", "[[a]][[b]]", "[[[a]]]", "[a[b]]"] {
            assert!(!u.member(w), "{w}");
        }
    }

    #[test]
    fn universe_level_3_spot() {
        let u = universe_flat(&letters("a"), 3);
        assert!(u.member("[[[a]]]"));
        assert!(u.member("[[[]][[a][a]]]"));
        assert!(!u.member("[[[a]][]]")); // a level-2 child with no children
        assert!(!u.member("[[]]"));
    }

    #[test]
    fn boolean_ops() {
        let g = letters("ab");
        let x = FlatAutomaton::from_encodings(g.clone(), &["[a]", "[ab]"]);
        let y = FlatAutomaton::from_encodings(g.clone(), &["[ab]", "[b]"]);
        let u = x.union(&y);
        for w in ["[a]", "[ab]", "[b]"] {
            assert!(u.member(w));
        }
        assert!(!u.member("[ba]"));
        let i = x.intersect(&y);
        assert!(i.member("[ab]"));
        assert!(!i.member("[a]"));
        assert!(!i.member("[b]"));
        let empty = x.intersect(&FlatAutomaton::from_encodings(g, &["[b]"]));
        assert!(empty.is_empty());
    }

    #[test]
    fn complement_is_relative_to_store_encodings() {
        let g = letters("a");
        let x = FlatAutomaton::from_encodings(g, &["[a]"]);
        let c = x.complement_within(1).unwrap();
        assert!(c.member("[]"));
        assert!(c.member("[aa]"));
        assert!(c.member("[aaa]"));
        assert!(!c.member("[a]"));
        assert!(!c.member("a")); // not an encoding at all
        assert!(!c.member("[[a]]"));
        // double complement restores the language
        let cc = c.complement_within(1).unwrap();
        assert!(cc.language_equal(&x, 1).unwrap());
    }

    #[test]
    fn validate_store_language_works() {
        let g = letters("a");
        let ok = FlatAutomaton::from_encodings(g.clone(), &["[a]", "[aa]"]);
        assert!(ok.validate_store_language(1));
        assert!(!ok.validate_store_language(2));
        let bad = FlatAutomaton::new(
            2,
            g,
            [(0, Some(FlatSym::Letter(Letter::new('a'))), 1)],
            0,
            [1],
            None,
        );
        assert!(!bad.validate_store_language(1));
    }

    #[test]
    fn assign_levels_splits_by_depth() {
        let g = letters("a");
        let a = FlatAutomaton::from_encodings(g, &["[[a][a]]"]);
        let (b, lv) = a.assign_levels(2).unwrap();
        assert_eq!(b.initial(), {
            let i = b.initial();
            assert_eq!(lv.level(i), Some(2));
            i
        });
        let f = *b.finals().iter().next().unwrap();
        assert_eq!(lv.level(f), Some(2));
        // levels respect transitions: [ goes down, ] goes up
        for &(p, sym, q) in b.transitions() {
            match sym.unwrap() {
                FlatSym::Open => assert_eq!(lv.level(p).unwrap(), lv.level(q).unwrap() + 1),
                FlatSym::Close => assert_eq!(lv.level(p).unwrap() + 1, lv.level(q).unwrap()),
                FlatSym::Letter(_) => {
                    assert_eq!(lv.level(p), Some(0));
                    assert_eq!(lv.level(q), Some(0));
                }
            }
        }
        for w in ["[[a][a]]", "[[a]]", "[[a][a][a]]"] {
            assert_eq!(a.member(w), b.member(w), "{w}");
        }
    }

    #[test]
    fn leads_extracts_level_path_labels() {
        // the universe at level 2: level-1 paths between the two level-1 states
        let u = universe_flat(&letters("a"), 2);
        let (b, lv) = u.assign_levels(2).unwrap();
        let ones = lv.states_of_level(1);
        assert!(!ones.is_empty());
        // collect all (p1, p2) segment languages; all must be level-1 encodings
        let mut found = false;
        for &p1 in &ones {
            for &p2 in &ones {
                if let Some((seg, seg_lv)) = b.leads(&lv, p1, p2, 1) {
                    found = true;
                    assert!(seg.validate_store_language(1));
                    assert_eq!(seg_lv.level(seg.initial()), Some(1));
                    // paths through the segment never revisit level-1 states
                    assert!(seg.member("[a]") || seg.member("[]") || !seg.is_empty());
                    assert!(!seg.member("[a][a]"));
                    assert!(!seg.member("[[a]]"));
                }
            }
        }
        assert!(found);
    }

    #[test]
    fn leads_none_without_path() {
        let g = letters("a");
        let a = FlatAutomaton::from_encodings(g, &["[[a]]"]);
        let (b, lv) = a.assign_levels(2).unwrap();
        let twos = lv.states_of_level(2);
        // no level-2 path between initial and itself
        let i = b.initial();
        assert!(b.leads(&lv, i, i, 2).is_none());
        assert!(twos.len() >= 2);
    }

    #[test]
    fn determinization_budget() {
        let g = letters("ab");
        let a = FlatAutomaton::from_encodings(g, &["[ab]", "[aa]", "[bb]"]);
        let err = a.determinize(2);
        assert!(matches!(err, Err(FlatError::ResourceExceeded { .. })));
    }

    #[test]
    fn exhaustive_boolean_algebra_against_word_enumeration() {
        // small universe of level-1 encodings over {a, b}, length <= 6
        let g = letters("ab");
        let mut words: Vec<String> = vec![];
        let ls = ["", "a", "b", "aa", "ab", "ba", "bb", "aaa", "abab"];
        for w in ls {
            if w.len() + 2 <= 8 {
                words.push(format!("[{w}]"));
            }
        }
        let x = FlatAutomaton::from_encodings(g.clone(), &["[a]", "[ab]", "[aaa]"]);
        let y = FlatAutomaton::from_encodings(g.clone(), &["[ab]", "[bb]", "[]"]);
        let u = x.union(&y);
        let i = x.intersect(&y);
        let cx = x.complement_within(1).unwrap();
        for w in &words {
            assert_eq!(u.member(w), x.member(w) || y.member(w), "{w} in union");
            assert_eq!(i.member(w), x.member(w) && y.member(w), "{w} in intersection");
            assert_eq!(cx.member(w), !x.member(w), "{w} in complement");
        }
    }
}
