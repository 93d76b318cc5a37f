//! Nested store automata: a level-n automaton reads a level-n store as a
//! sequence of level-(n-1) children, and its transition labels are level-(n-1)
//! automata (plain letters at level 1).
//!
//! All automata of one analysis share a [`Labels`] table that hash-conses
//! labels: structurally equal constructions get equal ids and products are
//! built once. Every automaton core is kept in a normal form — one initial
//! state and one final state that is a sink — plus an `initial_accepting`
//! flag meaning the empty sequence is additionally accepted (this is how a
//! level-1 automaton contains the empty store; a strict single-final shape
//! cannot hold both the empty word and a nonempty one without closing under
//! concatenation). Every constructor that adds an edge into a flagged initial
//! also adds a diverted twin into the final, so runs that stop at the initial
//! are accounted for.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, RwLock};
use thiserror::Error;

use crate::flat::{FlatAutomaton, FlatError, FlatSym, StateId, StateLevels};
use crate::store::{Letter, Store};

pub type LabelId = usize;

/// Default ceiling on pair states when materializing a label product.
pub const DEFAULT_PRODUCT_BUDGET: usize = 100_000;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum NestedError {
    #[error("resource budget exceeded during {during}: {detail}")]
    ResourceExceeded { during: String, detail: String },
    #[error("the automaton does not describe a set of level-{0} stores")]
    NotAStoreLanguage(u32),
}

impl From<FlatError> for NestedError {
    fn from(e: FlatError) -> NestedError {
        match e {
            FlatError::ResourceExceeded { during, detail } => {
                NestedError::ResourceExceeded { during, detail }
            }
            FlatError::LevelingFailed(msg) => NestedError::ResourceExceeded {
                during: "leveling".into(),
                detail: msg,
            },
        }
    }
}

/// The body of a level-n automaton. Labels on transitions are ids into the
/// shared [`Labels`] table; at level 1 they are letter labels.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Core {
    pub(crate) level: u32,
    pub(crate) num_states: usize,
    pub(crate) transitions: BTreeSet<(StateId, LabelId, StateId)>,
    pub(crate) initial: StateId,
    pub(crate) final_: StateId,
    pub(crate) initial_accepting: bool,
}

impl Core {
    pub(crate) fn empty_language(level: u32) -> Core {
        Core {
            level,
            num_states: 2,
            transitions: BTreeSet::new(),
            initial: 0,
            final_: 1,
            initial_accepting: false,
        }
    }

    /// The singleton {empty word}; only meaningful at level 1.
    pub(crate) fn empty_word_only() -> Core {
        Core {
            initial_accepting: true,
            ..Core::empty_language(1)
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn final_state(&self) -> StateId {
        self.final_
    }

    pub fn initial_accepting(&self) -> bool {
        self.initial_accepting
    }

    pub fn transitions(&self) -> &BTreeSet<(StateId, LabelId, StateId)> {
        &self.transitions
    }

    pub(crate) fn outgoing(&self, p: StateId) -> impl Iterator<Item = (LabelId, StateId)> + '_ {
        self.transitions
            .range((p, 0, 0)..=(p, usize::MAX, usize::MAX))
            .map(|&(_, l, q)| (l, q))
    }

    /// Adds an edge, keeping the diversion discipline: an edge into a flagged
    /// initial gets a twin into the final.
    pub(crate) fn add_edge(&mut self, p: StateId, l: LabelId, q: StateId) -> bool {
        let mut added = self.transitions.insert((p, l, q));
        if q == self.initial && self.initial_accepting {
            added |= self.transitions.insert((p, l, self.final_));
        }
        added
    }

    /// Re-roots the automaton at a fresh initial with no in-edges, copying
    /// the old initial's outgoing edges. The language is unchanged.
    pub(crate) fn normalize_initial(&self) -> Core {
        let reentrant = self.transitions.iter().any(|&(_, _, q)| q == self.initial);
        if !reentrant {
            return self.clone();
        }
        let fresh = self.num_states;
        let mut tr = self.transitions.clone();
        for &(p, l, q) in &self.transitions {
            if p == self.initial {
                tr.insert((fresh, l, q));
            }
        }
        Core {
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
enum LabelKey {
    Letter(Letter),
    /// All level-`level` stores whose top letter is `letter`.
    Atom { letter: Letter, level: u32 },
    /// An interned core in canonical numbering.
    Base(Core),
    /// Intersection of the factor languages (sorted, deduplicated).
    Product(Vec<LabelId>),
}

struct Entry {
    key: LabelKey,
    level: u32,
    core: Option<Arc<Core>>,
    empty: bool,
}

struct LabelsInner {
    entries: Vec<Entry>,
    index: HashMap<LabelKey, LabelId>,
    alphabet: BTreeSet<Letter>,
    product_budget: usize,
}

impl LabelsInner {
    fn label_empty(&self, id: LabelId) -> bool {
        self.entries[id].empty
    }

    /// Emptiness of a not-yet-interned core, via edges with nonempty labels.
    fn core_empty(&self, core: &Core) -> bool {
        if core.initial_accepting {
            return false;
        }
        let mut seen = BTreeSet::from([core.initial]);
        let mut queue = vec![core.initial];
        while let Some(p) = queue.pop() {
            if p == core.final_ {
                return false;
            }
            for (l, q) in core.outgoing(p) {
                if !self.label_empty(l) && seen.insert(q) {
                    queue.push(q);
                }
            }
        }
        true
    }

    /// Canonical form: drop edges with empty labels, keep only useful states
    /// (plus the initial and final), renumber by search order with the final
    /// last. Idempotent, so structurally equal automata intern equal.
    fn canonical(&self, core: &Core) -> Core {
        let live: BTreeSet<(StateId, LabelId, StateId)> = core
            .transitions
            .iter()
            .filter(|&&(_, l, _)| !self.label_empty(l))
            .copied()
            .collect();
        let mut fwd = BTreeSet::from([core.initial]);
        let mut queue = vec![core.initial];
        while let Some(p) = queue.pop() {
            for &(src, _, tgt) in &live {
                if src == p && fwd.insert(tgt) {
                    queue.push(tgt);
                }
            }
        }
        let mut bwd = BTreeSet::from([core.final_]);
        let mut queue = vec![core.final_];
        while let Some(q) = queue.pop() {
            for &(src, _, tgt) in &live {
                if tgt == q && bwd.insert(src) {
                    queue.push(src);
                }
            }
        }
        let mut useful: BTreeSet<StateId> = fwd.intersection(&bwd).copied().collect();
        useful.insert(core.initial);
        useful.insert(core.final_);
        // breadth-first renumbering over sorted edges, final forced last
        let mut order: Vec<StateId> = vec![core.initial];
        let mut placed: BTreeSet<StateId> = BTreeSet::from([core.initial, core.final_]);
        let mut cursor = 0;
        while cursor < order.len() {
            let p = order[cursor];
            cursor += 1;
            for (l, q) in core.outgoing(p) {
                if !useful.contains(&q) || self.label_empty(l) {
                    continue;
                }
                if placed.insert(q) {
                    order.push(q);
                }
            }
        }
        // stragglers (useful but not forward-reachable: only co-reachable
        // states kept for the final's sake are dropped with their edges)
        let mut remap: BTreeMap<StateId, StateId> = BTreeMap::new();
        for (i, &q) in order.iter().enumerate() {
            remap.insert(q, i);
        }
        let final_new = order.len();
        remap.insert(core.final_, final_new);
        let transitions: BTreeSet<_> = live
            .iter()
            .filter(|(p, _, q)| remap.contains_key(p) && remap.contains_key(q))
            .map(|&(p, l, q)| (remap[&p], l, remap[&q]))
            .collect();
        Core {
            level: core.level,
            num_states: final_new + 1,
            transitions,
            initial: 0,
            final_: final_new,
            initial_accepting: core.initial_accepting,
        }
    }

    fn insert_entry(&mut self, key: LabelKey, level: u32, core: Option<Core>) -> LabelId {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let empty = match &core {
            Some(c) => self.core_empty(c),
            None => false, // letters
        };
        let id = self.entries.len();
        self.entries.push(Entry {
            key: key.clone(),
            level,
            core: core.map(Arc::new),
            empty,
        });
        self.index.insert(key, id);
        id
    }
}

/// The shared label table. Cloning the handle shares the table; automata
/// combined together must come from the same table.
#[derive(Clone)]
pub struct Labels {
    inner: Arc<RwLock<LabelsInner>>,
}

impl fmt::Debug for Labels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.read().unwrap();
        write!(f, "Labels({} entries)", inner.entries.len())
    }
}

impl Labels {
    pub fn new(alphabet: BTreeSet<Letter>) -> Labels {
        Labels::with_product_budget(alphabet, DEFAULT_PRODUCT_BUDGET)
    }

    pub fn with_product_budget(alphabet: BTreeSet<Letter>, product_budget: usize) -> Labels {
        Labels {
            inner: Arc::new(RwLock::new(LabelsInner {
                entries: Vec::new(),
                index: HashMap::new(),
                alphabet,
                product_budget,
            })),
        }
    }

    pub fn same_table(&self, other: &Labels) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    pub fn alphabet(&self) -> BTreeSet<Letter> {
        self.inner.read().unwrap().alphabet.clone()
    }

    /// Number of interned labels (a saturation budget dimension).
    pub fn len(&self) -> usize {
        self.inner.read().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn letter(&self, l: Letter) -> LabelId {
        let mut inner = self.inner.write().unwrap();
        inner.insert_entry(LabelKey::Letter(l), 0, None)
    }

    pub(crate) fn letter_of(&self, id: LabelId) -> Option<Letter> {
        match self.inner.read().unwrap().entries[id].key {
            LabelKey::Letter(l) => Some(l),
            _ => None,
        }
    }

    pub fn level(&self, id: LabelId) -> u32 {
        self.inner.read().unwrap().entries[id].level
    }

    pub fn core(&self, id: LabelId) -> Option<Arc<Core>> {
        self.inner.read().unwrap().entries[id].core.clone()
    }

    pub fn label_is_empty(&self, id: LabelId) -> bool {
        self.inner.read().unwrap().entries[id].empty
    }

    pub(crate) fn intern(&self, core: Core) -> LabelId {
        let mut inner = self.inner.write().unwrap();
        let canon = inner.canonical(&core);
        let level = canon.level;
        inner.insert_entry(LabelKey::Base(canon.clone()), level, Some(canon))
    }

    /// All level-`level` stores with the given top letter.
    pub fn atom(&self, letter: Letter, level: u32) -> LabelId {
        assert!(level >= 1, "atoms live at level >= 1");
        if let Some(&id) = self
            .inner
            .read()
            .unwrap()
            .index
            .get(&LabelKey::Atom { letter, level })
        {
            return id;
        }
        // states: 0 = initial, 1 = final sink, 2 = body loop
        let mut tr = BTreeSet::new();
        if level == 1 {
            let first = self.letter(letter);
            tr.insert((0, first, 2));
            tr.insert((0, first, 1));
            for b in self.alphabet() {
                let lb = self.letter(b);
                tr.insert((2, lb, 2));
                tr.insert((2, lb, 1));
            }
        } else {
            let first = self.atom(letter, level - 1);
            let rest = self.universe(level - 1);
            tr.insert((0, first, 2));
            tr.insert((0, first, 1));
            tr.insert((2, rest, 2));
            tr.insert((2, rest, 1));
        }
        let core = Core {
            level,
            num_states: 3,
            transitions: tr,
            initial: 0,
            final_: 1,
            initial_accepting: false,
        };
        let mut inner = self.inner.write().unwrap();
        inner.insert_entry(LabelKey::Atom { letter, level }, level, Some(core))
    }

    /// All level-`level` stores.
    pub fn universe(&self, level: u32) -> LabelId {
        assert!(level >= 1);
        let mut tr = BTreeSet::new();
        let flag = level == 1;
        if level == 1 {
            for b in self.alphabet() {
                let lb = self.letter(b);
                tr.insert((0, lb, 0));
                tr.insert((0, lb, 1)); // diverted twin of the flagged self-loop
            }
        } else {
            let child = self.universe(level - 1);
            tr.insert((0, child, 0));
            tr.insert((0, child, 1));
        }
        self.intern(Core {
            level,
            num_states: 2,
            transitions: tr,
            initial: 0,
            final_: 1,
            initial_accepting: flag,
        })
    }

    /// Intersection of the factor languages, hash-consed: `product([x]) = x`,
    /// `product([x, x]) = x`, factor order is irrelevant, and nested products
    /// flatten.
    pub fn product(&self, ids: &[LabelId]) -> Result<LabelId, NestedError> {
        assert!(!ids.is_empty());
        let mut factors: BTreeSet<LabelId> = BTreeSet::new();
        {
            let inner = self.inner.read().unwrap();
            for &id in ids {
                match &inner.entries[id].key {
                    LabelKey::Product(fs) => factors.extend(fs.iter().copied()),
                    _ => {
                        factors.insert(id);
                    }
                }
            }
        }
        let factors: Vec<LabelId> = factors.into_iter().collect();
        if factors.len() == 1 {
            return Ok(factors[0]);
        }
        let level = self.level(factors[0]);
        assert!(
            factors.iter().all(|&f| self.level(f) == level),
            "product factors must share a level"
        );
        assert!(level >= 1, "letter labels cannot be multiplied");
        let key = LabelKey::Product(factors.clone());
        if let Some(&id) = self.inner.read().unwrap().index.get(&key) {
            return Ok(id);
        }
        let mut acc = (*self.core(factors[0]).expect("level >= 1")).clone();
        for &f in &factors[1..] {
            let fc = self.core(f).expect("level >= 1");
            acc = self.product_core(&acc, &fc)?;
        }
        let mut inner = self.inner.write().unwrap();
        let canon = inner.canonical(&acc);
        Ok(inner.insert_entry(key, level, Some(canon)))
    }

    /// Pairwise product under the empty-sequence flag semantics: the flag of
    /// the product is the conjunction of the factors' flags.
    fn product_core(&self, a: &Core, b: &Core) -> Result<Core, NestedError> {
        assert_eq!(a.level, b.level);
        let budget = self.inner.read().unwrap().product_budget;
        let mut index: HashMap<(StateId, StateId), StateId> = HashMap::new();
        let mut pairs: Vec<(StateId, StateId)> = Vec::new();
        index.insert((a.initial, b.initial), 0);
        pairs.push((a.initial, b.initial));
        let mut tr: BTreeSet<(StateId, LabelId, StateId)> = BTreeSet::new();
        let mut cursor = 0;
        while cursor < pairs.len() {
            let (p, q) = pairs[cursor];
            let a_out: Vec<(LabelId, StateId)> = a.outgoing(p).collect();
            let b_out: Vec<(LabelId, StateId)> = b.outgoing(q).collect();
            for &(la, ta) in &a_out {
                for &(lb, tb) in &b_out {
                    let label = if a.level == 1 {
                        if la == lb {
                            la
                        } else {
                            continue;
                        }
                    } else {
                        let l = self.product(&[la, lb])?;
                        if self.label_is_empty(l) {
                            continue;
                        }
                        l
                    };
                    let key = (ta, tb);
                    let id = match index.get(&key) {
                        Some(&id) => id,
                        None => {
                            if pairs.len() >= budget {
                                return Err(NestedError::ResourceExceeded {
                                    during: "label product".into(),
                                    detail: format!("more than {budget} pair states"),
                                });
                            }
                            index.insert(key, pairs.len());
                            pairs.push(key);
                            pairs.len() - 1
                        }
                    };
                    tr.insert((cursor, label, id));
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
        Ok(Core {
            level: a.level,
            num_states: pairs.len(),
            transitions: tr,
            initial: 0,
            final_,
            initial_accepting: a.initial_accepting && b.initial_accepting,
        })
    }

    /// Short human-readable name for DOT legends and debugging.
    pub fn describe(&self, id: LabelId) -> String {
        let inner = self.inner.read().unwrap();
        match &inner.entries[id].key {
            LabelKey::Letter(l) => format!("{l}"),
            LabelKey::Atom { letter, level } => format!("top({letter})@{level}"),
            LabelKey::Base(core) => format!("#{id}@{}", core.level),
            LabelKey::Product(fs) => {
                let parts: Vec<String> = fs.iter().map(|f| format!("#{f}")).collect();
                format!("#{id}={}", parts.join("&"))
            }
        }
    }

    fn member_label(
        &self,
        id: LabelId,
        s: &Store,
        memo: &mut HashMap<(LabelId, Store), bool>,
    ) -> bool {
        let key = (id, s.clone());
        if let Some(&r) = memo.get(&key) {
            return r;
        }
        let core = self.core(id).expect("letter labels never read stores");
        let r = self.member_core(&core, s, memo);
        memo.insert(key, r);
        r
    }

    fn member_core(
        &self,
        core: &Core,
        s: &Store,
        memo: &mut HashMap<(LabelId, Store), bool>,
    ) -> bool {
        if s.level() != core.level {
            return false;
        }
        match s {
            Store::Word(w) => {
                if w.is_empty() {
                    return core.initial_accepting;
                }
                let mut cur = BTreeSet::from([core.initial]);
                for &l in w {
                    let lid = self.letter(l);
                    let mut next = BTreeSet::new();
                    for &p in &cur {
                        for (lab, q) in core.outgoing(p) {
                            if lab == lid {
                                next.insert(q);
                            }
                        }
                    }
                    cur = next;
                    if cur.is_empty() {
                        return false;
                    }
                }
                cur.contains(&core.final_)
            }
            Store::Seq(children) => {
                let mut cur = BTreeSet::from([core.initial]);
                for child in children {
                    let mut next = BTreeSet::new();
                    for &p in &cur {
                        for (lab, q) in core.outgoing(p) {
                            if self.member_label(lab, child, memo) {
                                next.insert(q);
                            }
                        }
                    }
                    cur = next;
                    if cur.is_empty() {
                        return false;
                    }
                }
                cur.contains(&core.final_)
            }
        }
    }
}

/// Membership against a working core that has not been interned yet.
pub fn core_member(table: &Labels, core: &Core, s: &Store) -> bool {
    let mut memo = HashMap::new();
    table.member_core(core, s, &mut memo)
}

/// A flat fragment with the convention: state 0 is the entry (no in-edges),
/// state 1 is the exit (no out-edges).
struct Piece {
    num_states: usize,
    transitions: BTreeSet<(StateId, FlatSym, StateId)>,
}

/// A level-n automaton over a shared label table.
#[derive(Clone)]
pub struct NestedAutomaton {
    table: Labels,
    id: LabelId,
}

impl fmt::Debug for NestedAutomaton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NestedAutomaton(#{} level {})", self.id, self.level())
    }
}

impl NestedAutomaton {
    pub(crate) fn from_id(table: &Labels, id: LabelId) -> NestedAutomaton {
        assert!(table.level(id) >= 1);
        NestedAutomaton {
            table: table.clone(),
            id,
        }
    }

    pub fn from_core(table: &Labels, core: Core) -> NestedAutomaton {
        let id = table.intern(core);
        NestedAutomaton::from_id(table, id)
    }

    pub fn empty(table: &Labels, level: u32) -> NestedAutomaton {
        NestedAutomaton::from_core(table, Core::empty_language(level))
    }

    pub fn universe(table: &Labels, level: u32) -> NestedAutomaton {
        NestedAutomaton::from_id(table, table.universe(level))
    }

    /// All level-`level` stores whose top letter is `a`.
    pub fn top_letter(table: &Labels, a: Letter, level: u32) -> NestedAutomaton {
        NestedAutomaton::from_id(table, table.atom(a, level))
    }

    /// The finite set of the given stores, all of the stated level.
    pub fn from_store_set(table: &Labels, level: u32, stores: &[Store]) -> NestedAutomaton {
        let set: BTreeSet<&Store> = stores.iter().collect();
        let mut acc: Option<Core> = None;
        for s in set {
            assert_eq!(s.level(), level, "store level mismatch in set");
            let c = store_core(table, s);
            acc = Some(match acc {
                None => c,
                Some(a) => union_core(&a, &c),
            });
        }
        NestedAutomaton::from_core(table, acc.unwrap_or_else(|| Core::empty_language(level)))
    }

    pub fn table(&self) -> &Labels {
        &self.table
    }

    pub fn id(&self) -> LabelId {
        self.id
    }

    pub fn level(&self) -> u32 {
        self.table.level(self.id)
    }

    pub fn core(&self) -> Arc<Core> {
        self.table.core(self.id).expect("nested automata have cores")
    }

    pub fn num_states(&self) -> usize {
        self.core().num_states
    }

    pub fn num_transitions(&self) -> usize {
        self.core().transitions.len()
    }

    pub fn is_empty_language(&self) -> bool {
        self.table.label_is_empty(self.id)
    }

    pub fn member(&self, s: &Store) -> bool {
        let mut memo = HashMap::new();
        self.table.member_label(self.id, s, &mut memo)
    }

    pub fn union(&self, other: &NestedAutomaton) -> NestedAutomaton {
        assert!(self.table.same_table(&other.table), "label tables differ");
        assert_eq!(self.level(), other.level(), "levels differ");
        let c = union_core(&self.core(), &other.core());
        NestedAutomaton::from_core(&self.table, c)
    }

    /// Intersection via the label product.
    pub fn intersect(&self, other: &NestedAutomaton) -> Result<NestedAutomaton, NestedError> {
        assert!(self.table.same_table(&other.table), "label tables differ");
        assert_eq!(self.level(), other.level(), "levels differ");
        let id = self.table.product(&[self.id, other.id])?;
        Ok(NestedAutomaton::from_id(&self.table, id))
    }

    /// The flat automaton of the encodings of the accepted stores.
    pub fn flatten(&self) -> FlatAutomaton {
        let mut memo: HashMap<LabelId, Arc<Piece>> = HashMap::new();
        let piece = flatten_label(&self.table, self.id, &mut memo);
        let mut out = FlatAutomaton::new(
            piece.num_states,
            self.table.alphabet(),
            piece
                .transitions
                .iter()
                .map(|&(p, sym, q)| (p, Some(sym), q)),
            0,
            [1],
            Some(self.level()),
        )
        .trim();
        out.set_declared_level(Some(self.level()));
        out
    }

    /// Rebuilds a nested automaton from a flat one. Fails when the flat
    /// language is not a set of level-`level` store encodings.
    pub fn inflate(
        table: &Labels,
        a: &FlatAutomaton,
        level: u32,
    ) -> Result<NestedAutomaton, NestedError> {
        if !a.validate_store_language(level) {
            return Err(NestedError::NotAStoreLanguage(level));
        }
        let (leveled, levels) = a.normalize().assign_levels(level)?;
        let core = build_core(table, &leveled, &levels, level);
        Ok(NestedAutomaton::from_core(table, core))
    }
}

fn store_core(table: &Labels, s: &Store) -> Core {
    match s {
        Store::Word(w) => {
            if w.is_empty() {
                return Core::empty_word_only();
            }
            let mut tr = BTreeSet::new();
            // states: 0 = initial, 1 = final, 2.. = chain
            let mut cur = 0;
            let mut next_free = 2;
            for (i, &l) in w.iter().enumerate() {
                let tgt = if i + 1 == w.len() {
                    1
                } else {
                    next_free += 1;
                    next_free - 1
                };
                tr.insert((cur, table.letter(l), tgt));
                cur = tgt;
            }
            Core {
                level: 1,
                num_states: next_free,
                transitions: tr,
                initial: 0,
                final_: 1,
                initial_accepting: false,
            }
        }
        Store::Seq(children) => {
            let labels: Vec<LabelId> = children
                .iter()
                .map(|c| table.intern(store_core(table, c)))
                .collect();
            let mut tr = BTreeSet::new();
            let mut cur = 0;
            let mut next_free = 2;
            for (i, &b) in labels.iter().enumerate() {
                let tgt = if i + 1 == labels.len() {
                    1
                } else {
                    next_free += 1;
                    next_free - 1
                };
                tr.insert((cur, b, tgt));
                cur = tgt;
            }
            Core {
                level: s.level(),
                num_states: next_free,
                transitions: tr,
                initial: 0,
                final_: 1,
                initial_accepting: false,
            }
        }
    }
}

pub(crate) fn union_core(a: &Core, b: &Core) -> Core {
    assert_eq!(a.level, b.level);
    // states: 0 = fresh initial, 1 = merged final, then a's states, b's states
    let ra = |s: StateId| if s == a.final_ { 1 } else { 2 + s };
    let off = 2 + a.num_states;
    let rb = |s: StateId| if s == b.final_ { 1 } else { off + s };
    let mut tr = BTreeSet::new();
    for &(p, l, q) in &a.transitions {
        tr.insert((ra(p), l, ra(q)));
        if p == a.initial {
            tr.insert((0, l, ra(q)));
        }
    }
    for &(p, l, q) in &b.transitions {
        tr.insert((rb(p), l, rb(q)));
        if p == b.initial {
            tr.insert((0, l, rb(q)));
        }
    }
    Core {
        level: a.level,
        num_states: off + b.num_states,
        transitions: tr,
        initial: 0,
        final_: 1,
        initial_accepting: a.initial_accepting || b.initial_accepting,
    }
}

/// Splices label pieces into a word automaton over brackets and letters.
fn flatten_label(table: &Labels, id: LabelId, memo: &mut HashMap<LabelId, Arc<Piece>>) -> Arc<Piece> {
    if let Some(p) = memo.get(&id) {
        return p.clone();
    }
    let core = table.core(id).expect("flatten needs a core label");
    let n = core.level;
    let base = |s: StateId| 2 + s;
    let mut tr: BTreeSet<(StateId, FlatSym, StateId)> = BTreeSet::new();
    let mut num_states = 2 + core.num_states;
    tr.insert((0, FlatSym::Open, base(core.initial)));
    tr.insert((base(core.final_), FlatSym::Close, 1));
    if core.initial_accepting {
        tr.insert((base(core.initial), FlatSym::Close, 1));
    }
    if n == 1 {
        for &(p, l, q) in &core.transitions {
            let letter = table.letter_of(l).expect("level-1 labels are letters");
            tr.insert((base(p), FlatSym::Letter(letter), base(q)));
        }
    } else {
        // group edges by (source, label); runs through a child automaton are
        // shared and branch to every target on exit
        let mut groups: BTreeMap<(StateId, LabelId), BTreeSet<StateId>> = BTreeMap::new();
        for &(p, l, q) in &core.transitions {
            if table.label_is_empty(l) {
                continue;
            }
            groups.entry((p, l)).or_default().insert(q);
        }
        for ((p, l), targets) in groups {
            let inner = flatten_label(table, l, memo);
            // composite ids for the inner states other than entry/exit
            let comp_base = num_states;
            num_states += inner.num_states.saturating_sub(2);
            let map_inner = |r: StateId| -> Vec<StateId> {
                match r {
                    0 => vec![base(p)],
                    1 => targets.iter().map(|&q| base(q)).collect(),
                    _ => vec![comp_base + (r - 2)],
                }
            };
            for &(x, sym, y) in &inner.transitions {
                debug_assert_ne!(y, 0, "piece entries have no in-edges");
                debug_assert_ne!(x, 1, "piece exits have no out-edges");
                for &src in &map_inner(x) {
                    for &dst in &map_inner(y) {
                        tr.insert((src, sym, dst));
                    }
                }
            }
        }
    }
    let piece = Arc::new(Piece {
        num_states,
        transitions: tr,
    });
    memo.insert(id, piece.clone());
    piece
}

/// Builds a level-n core from a leveled flat automaton (normalized: ε-free,
/// trimmed, single final). Children correspond to flat path segments between
/// level-(n-1) states whose interiors stay below level n-1.
pub(crate) fn build_core(
    table: &Labels,
    flat: &FlatAutomaton,
    levels: &StateLevels,
    n: u32,
) -> Core {
    if flat.is_empty() {
        return Core::empty_language(n);
    }
    let i = flat.initial();
    let f = *flat.finals().iter().next().expect("single final");
    let starts: BTreeSet<StateId> = flat
        .transitions()
        .iter()
        .filter(|&&(p, sym, _)| p == i && sym == Some(FlatSym::Open))
        .map(|&(_, _, q)| q)
        .collect();
    let enders: BTreeSet<StateId> = flat
        .transitions()
        .iter()
        .filter(|&&(_, sym, q)| q == f && sym == Some(FlatSym::Close))
        .map(|&(p, _, _)| p)
        .collect();
    if n == 1 {
        let zeros = levels.states_of_level(0);
        let m: BTreeMap<StateId, StateId> = zeros
            .iter()
            .enumerate()
            .map(|(idx, &s)| (s, 2 + idx))
            .collect();
        let flag = starts.intersection(&enders).next().is_some();
        let mut tr = BTreeSet::new();
        for &(p, sym, q) in flat.transitions() {
            let Some(FlatSym::Letter(a)) = sym else {
                continue;
            };
            let (Some(&mp), Some(&mq)) = (m.get(&p), m.get(&q)) else {
                continue;
            };
            let lid = table.letter(a);
            let mut srcs = vec![mp];
            if starts.contains(&p) {
                srcs.push(0);
            }
            let mut dsts = vec![mq];
            if enders.contains(&q) {
                dsts.push(1);
            }
            for &s in &srcs {
                for &d in &dsts {
                    tr.insert((s, lid, d));
                }
            }
        }
        return Core {
            level: 1,
            num_states: 2 + zeros.len(),
            transitions: tr,
            initial: 0,
            final_: 1,
            initial_accepting: flag,
        };
    }
    let ps = levels.states_of_level(n - 1);
    let m: BTreeMap<StateId, StateId> = ps
        .iter()
        .enumerate()
        .map(|(idx, &s)| (s, 2 + idx))
        .collect();
    debug_assert!(
        starts.intersection(&enders).next().is_none(),
        "level >= 2 stores have at least one child"
    );
    let mut tr = BTreeSet::new();
    for &p in &ps {
        for &q in &ps {
            let Some((seg, seg_levels)) = flat.leads(levels, p, q, n - 1) else {
                continue;
            };
            let b = table.intern(build_core(table, &seg, &seg_levels, n - 1));
            if table.label_is_empty(b) {
                continue;
            }
            let mut srcs = vec![m[&p]];
            if starts.contains(&p) {
                srcs.push(0);
            }
            let mut dsts = vec![m[&q]];
            if enders.contains(&q) {
                dsts.push(1);
            }
            for &s in &srcs {
                for &d in &dsts {
                    tr.insert((s, b, d));
                }
            }
        }
    }
    Core {
        level: n,
        num_states: 2 + ps.len(),
        transitions: tr,
        initial: 0,
        final_: 1,
        initial_accepting: false,
    }
}
