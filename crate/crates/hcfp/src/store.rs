//! Higher-order stores and the operations that rewrite them.
//!
//! A level-1 store is a (possibly empty) word `[a1 .. al]` over an alphabet;
//! a level-n store (n >= 2) is a nonempty sequence `[s1 .. sl]` of level-(n-1)
//! stores. Operations act on the "top": the spine of first children down to
//! the first letter of the top-most level-1 store.

use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// A single alphabet symbol. Brackets and whitespace are reserved by the
/// textual encoding and cannot be letters.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Letter(char);

impl Letter {
    /// Panics on `[`, `]` and whitespace — those are reserved by [`Store::encode`].
    pub fn new(c: char) -> Letter {
        assert!(
            c != '[' && c != ']' && !c.is_whitespace(),
            "letter {c:?} is reserved by the store encoding"
        );
        Letter(c)
    }

    pub fn ch(self) -> char {
        self.0
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Convenience for building words in tests and examples.
pub fn word(s: &str) -> Vec<Letter> {
    s.chars().map(Letter::new).collect()
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("top_1 is undefined: the top-most level-1 store is empty")]
    EmptyTop,
    #[error("{op} is undefined here: {reason}")]
    Undefined { op: String, reason: String },
    #[error("operation level {op_level} exceeds store level {store_level}")]
    LevelExceeded { op_level: u32, store_level: u32 },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("level mismatch: expected level {expected}, found level {found}")]
    LevelMismatch { expected: u32, found: u32 },
}

/// A higher-order store. Children of a sequence are `Arc`-shared so that
/// `push k` duplication is O(1) in the untouched child.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Store {
    /// A level-1 store: a possibly empty word.
    Word(Vec<Letter>),
    /// A store of level >= 2: a nonempty sequence of same-level children.
    Seq(Vec<Arc<Store>>),
}

/// Result of [`Store::top`]: level 1 yields a letter, higher levels a child store.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum TopK {
    Letter(Letter),
    Store(Arc<Store>),
}

impl Store {
    pub fn word(letters: Vec<Letter>) -> Store {
        Store::Word(letters)
    }

    /// Builds a sequence store; children must be nonempty and share a level.
    pub fn seq(children: Vec<Store>) -> Result<Store, StoreError> {
        if children.is_empty() {
            return Err(StoreError::Undefined {
                op: "seq".into(),
                reason: "stores of level >= 2 need at least one child".into(),
            });
        }
        let lv = children[0].level();
        for c in &children[1..] {
            if c.level() != lv {
                return Err(StoreError::LevelMismatch {
                    expected: lv,
                    found: c.level(),
                });
            }
        }
        Ok(Store::Seq(children.into_iter().map(Arc::new).collect()))
    }

    pub fn level(&self) -> u32 {
        match self {
            Store::Word(_) => 1,
            Store::Seq(cs) => 1 + cs[0].level(),
        }
    }

    /// `top(k)`: the first letter (k = 1) or the level-k spine store (k >= 2).
    pub fn top(&self, k: u32) -> Result<TopK, StoreError> {
        let n = self.level();
        assert!(k >= 1 && k <= n, "top level {k} out of range 1..={n}");
        match self {
            Store::Word(ls) => ls
                .first()
                .map(|&a| TopK::Letter(a))
                .ok_or(StoreError::EmptyTop),
            Store::Seq(cs) => {
                if k == n {
                    Ok(TopK::Store(cs[0].clone()))
                } else {
                    cs[0].top(k)
                }
            }
        }
    }

    /// The top-most letter, or `None` when the top-most level-1 store is empty.
    pub fn top_letter(&self) -> Option<Letter> {
        match self {
            Store::Word(ls) => ls.first().copied(),
            Store::Seq(cs) => cs[0].top_letter(),
        }
    }

    pub fn apply(&self, op: &Operation) -> Result<Store, StoreError> {
        let n = self.level();
        let k = op.level();
        if k > n {
            return Err(StoreError::LevelExceeded {
                op_level: k,
                store_level: n,
            });
        }
        match self {
            Store::Word(ls) => match op {
                Operation::Push1(w) => {
                    if ls.is_empty() {
                        return Err(StoreError::Undefined {
                            op: op.to_string(),
                            reason: "the top-most level-1 store is empty".into(),
                        });
                    }
                    let mut out = w.clone();
                    out.extend_from_slice(&ls[1..]);
                    Ok(Store::Word(out))
                }
                // PopK(1) is normally canonicalized to Push1(""), but behave
                // correctly if one was built directly.
                Operation::PopK(1) => {
                    if ls.is_empty() {
                        Err(StoreError::Undefined {
                            op: op.to_string(),
                            reason: "the top-most level-1 store is empty".into(),
                        })
                    } else {
                        Ok(Store::Word(ls[1..].to_vec()))
                    }
                }
                _ => unreachable!("operation level > 1 on a level-1 store is caught above"),
            },
            Store::Seq(cs) => {
                if k == n {
                    match op {
                        Operation::PushK(_) => {
                            let mut out = Vec::with_capacity(cs.len() + 1);
                            out.push(cs[0].clone());
                            out.extend(cs.iter().cloned());
                            Ok(Store::Seq(out))
                        }
                        Operation::PopK(_) => {
                            if cs.len() < 2 {
                                Err(StoreError::Undefined {
                                    op: op.to_string(),
                                    reason: "cannot discard the only child".into(),
                                })
                            } else {
                                Ok(Store::Seq(cs[1..].to_vec()))
                            }
                        }
                        Operation::Push1(_) => {
                            unreachable!("Push1 has level 1 < n on a sequence")
                        }
                    }
                } else {
                    let first = cs[0].apply(op)?;
                    let mut out = Vec::with_capacity(cs.len());
                    out.push(Arc::new(first));
                    out.extend(cs[1..].iter().cloned());
                    Ok(Store::Seq(out))
                }
            }
        }
    }

    /// The bracket encoding: letters appear at nesting depth exactly `level`.
    pub fn encode(&self) -> String {
        let mut out = String::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    fn encode_into(&self, out: &mut String) {
        out.push('[');
        match self {
            Store::Word(ls) => {
                for l in ls {
                    out.push(l.ch());
                }
            }
            Store::Seq(cs) => {
                for c in cs {
                    c.encode_into(out);
                }
            }
        }
        out.push(']');
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            Store::Word(ls) => 2 + ls.len(),
            Store::Seq(cs) => 2 + cs.iter().map(|c| c.encoded_len()).sum::<usize>(),
        }
    }

    /// Parses an encoding, inferring the level from the bracket structure.
    /// Whitespace between tokens is ignored. `[]` always parses as the empty
    /// level-1 store.
    pub fn parse_any(input: &str) -> Result<Store, StoreError> {
        let bytes: Vec<(usize, char)> = input.char_indices().collect();
        let mut pos = 0usize;
        let skip_ws = |pos: &mut usize| {
            while *pos < bytes.len() && bytes[*pos].1.is_whitespace() {
                *pos += 1;
            }
        };
        fn node(
            bytes: &[(usize, char)],
            pos: &mut usize,
            skip_ws: &dyn Fn(&mut usize),
        ) -> Result<Store, StoreError> {
            skip_ws(pos);
            if *pos >= bytes.len() || bytes[*pos].1 != '[' {
                return Err(StoreError::Parse {
                    pos: bytes.get(*pos).map_or(usize::MAX, |b| b.0),
                    msg: "expected '['".into(),
                });
            }
            *pos += 1;
            let mut letters: Vec<Letter> = Vec::new();
            let mut children: Vec<Store> = Vec::new();
            loop {
                skip_ws(pos);
                let Some(&(bpos, c)) = bytes.get(*pos) else {
                    return Err(StoreError::Parse {
                        pos: usize::MAX,
                        msg: "unexpected end of input, expected ']'".into(),
                    });
                };
                match c {
                    ']' => {
                        *pos += 1;
                        break;
                    }
                    '[' => {
                        if !letters.is_empty() {
                            return Err(StoreError::Parse {
                                pos: bpos,
                                msg: "letters and child stores cannot mix".into(),
                            });
                        }
                        children.push(node(bytes, pos, skip_ws)?);
                    }
                    _ => {
                        if !children.is_empty() {
                            return Err(StoreError::Parse {
                                pos: bpos,
                                msg: "letters and child stores cannot mix".into(),
                            });
                        }
                        letters.push(Letter::new(c));
                        *pos += 1;
                    }
                }
            }
            if children.is_empty() {
                Ok(Store::Word(letters))
            } else {
                let lv = children[0].level();
                for c in &children[1..] {
                    if c.level() != lv {
                        return Err(StoreError::Parse {
                            pos: bytes[*pos - 1].0,
                            msg: "children of one store must share a level".into(),
                        });
                    }
                }
                Ok(Store::Seq(children.into_iter().map(Arc::new).collect()))
            }
        }
        let s = node(&bytes, &mut pos, &skip_ws)?;
        skip_ws(&mut pos);
        if pos < bytes.len() {
            return Err(StoreError::Parse {
                pos: bytes[pos].0,
                msg: "trailing input after store".into(),
            });
        }
        Ok(s)
    }

    /// Parses an encoding and checks it has level `n`.
    pub fn parse(input: &str, n: u32) -> Result<Store, StoreError> {
        let s = Store::parse_any(input)?;
        if s.level() != n {
            return Err(StoreError::LevelMismatch {
                expected: n,
                found: s.level(),
            });
        }
        Ok(s)
    }
}

impl fmt::Display for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.encode())
    }
}

/// A store operation.
///
/// `pop 1` is represented as `Push1` with the empty word (discarding the top
/// letter and rewriting it to the empty word are the same thing); the
/// [`Operation::pop_k`] constructor canonicalizes this.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Operation {
    /// Replace the top-most letter by a word (requires a top-most letter).
    Push1(Vec<Letter>),
    /// Duplicate the first child at level k >= 2.
    PushK(u32),
    /// Discard the first child at level k >= 2 (undefined on a single child).
    PopK(u32),
}

impl Operation {
    pub fn push1(w: Vec<Letter>) -> Operation {
        Operation::Push1(w)
    }

    pub fn push_k(k: u32) -> Operation {
        assert!(k >= 2, "push with k = {k}; level-1 pushes take a word");
        Operation::PushK(k)
    }

    /// `pop_k(1)` canonicalizes to `Push1(vec![])`.
    pub fn pop_k(k: u32) -> Operation {
        assert!(k >= 1);
        if k == 1 {
            Operation::Push1(Vec::new())
        } else {
            Operation::PopK(k)
        }
    }

    /// The store level the operation acts on.
    pub fn level(&self) -> u32 {
        match self {
            Operation::Push1(_) => 1,
            Operation::PushK(k) | Operation::PopK(k) => *k,
        }
    }

    /// Letters mentioned by the operation (the rewrite word of `Push1`).
    pub fn letters(&self) -> &[Letter] {
        match self {
            Operation::Push1(w) => w,
            _ => &[],
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::Push1(w) if w.is_empty() => write!(f, "pop 1"),
            Operation::Push1(w) => {
                write!(f, "push1 \"")?;
                for l in w {
                    write!(f, "{l}")?;
                }
                write!(f, "\"")
            }
            Operation::PushK(k) => write!(f, "push {k}"),
            Operation::PopK(k) => write!(f, "pop {k}"),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn st(s: &str) -> Store {
        Store::parse_any(s).unwrap()
    }

    #[test]
    fn levels() {
        assert_eq!(st("[]").level(), 1);
        assert_eq!(st("[ab]").level(), 1);
        assert_eq!(st("[[ab][c]]").level(), 2);
        assert_eq!(st("[[[a]][[b][c]]]").level(), 3);
    }

    #[test]
    fn top() {
        assert_eq!(
            st("[[ab][c]]").top(1).unwrap(),
            TopK::Letter(Letter::new('a'))
        );
        assert_eq!(
            st("[[ab][c]]").top(2).unwrap(),
            TopK::Store(Arc::new(st("[ab]")))
        );
        assert_eq!(st("[[][c]]").top(1), Err(StoreError::EmptyTop));
        assert_eq!(st("[]").top(1), Err(StoreError::EmptyTop));
        assert_eq!(st("[a]").top_letter(), Some(Letter::new('a')));
    }

    #[test]
    fn apply_push1() {
        let op = Operation::push1(word("bc"));
        assert_eq!(st("[ad]").apply(&op).unwrap(), st("[bcd]"));
        assert_eq!(st("[[ad][e]]").apply(&op).unwrap(), st("[[bcd][e]]"));
        assert!(st("[]").apply(&op).is_err());
        assert!(st("[[][e]]").apply(&op).is_err());
    }

    #[test]
    fn apply_pop1_is_push1_empty() {
        let op = Operation::pop_k(1);
        assert_eq!(op, Operation::Push1(vec![]));
        assert_eq!(st("[ab]").apply(&op).unwrap(), st("[b]"));
        assert_eq!(st("[a]").apply(&op).unwrap(), st("[]"));
        assert!(st("[]").apply(&op).is_err());
    }

    #[test]
    fn apply_pushk() {
        let op = Operation::push_k(2);
        assert_eq!(st("[[ab][c]]").apply(&op).unwrap(), st("[[ab][ab][c]]"));
        // duplication does not require a top letter
        assert_eq!(st("[[][a]]").apply(&op).unwrap(), st("[[][][a]]"));
        // recursion into the first child at k < n
        assert_eq!(
            st("[[[a][b]][[c]]]").apply(&op).unwrap(),
            st("[[[a][a][b]][[c]]]")
        );
    }

    #[test]
    fn apply_popk() {
        let op = Operation::pop_k(2);
        assert_eq!(st("[[ab][c]]").apply(&op).unwrap(), st("[[c]]"));
        assert!(st("[[ab]]").apply(&op).is_err());
        assert_eq!(
            st("[[[a][b]][[c]]]").apply(&op).unwrap(),
            st("[[[b]][[c]]]")
        );
        assert!(st("[[[a]][[c]]]").apply(&op).is_err());
    }

    #[test]
    fn apply_level_exceeded() {
        assert_eq!(
            st("[ab]").apply(&Operation::push_k(2)),
            Err(StoreError::LevelExceeded {
                op_level: 2,
                store_level: 1
            })
        );
    }

    #[test]
    fn encode_roundtrip() {
        for s in ["[]", "[a]", "[ab]", "[[ab][c]]", "[[][a]]", "[[[a]][[b][c]]]"] {
            let parsed = st(s);
            assert_eq!(parsed.encode(), s);
            assert_eq!(parsed.encoded_len(), s.len());
        }
        // whitespace is tolerated on input only
        assert_eq!(Store::parse_any("[[ ]]").unwrap().encode(), "[[]]");
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            Store::parse("[[a]", 2),
            Err(StoreError::Parse { .. })
        ));
        assert_eq!(
            Store::parse("[]", 2),
            Err(StoreError::LevelMismatch {
                expected: 2,
                found: 1
            })
        );
        assert!(matches!(
            Store::parse_any("[a[b]]"),
            Err(StoreError::Parse { .. })
        ));
        assert!(matches!(
            Store::parse_any("[[a][[b]]]"),
            Err(StoreError::Parse { .. })
        ));
        assert!(matches!(
            Store::parse_any("[a]x"),
            Err(StoreError::Parse { .. })
        ));
    }

    /// Direct transliteration of the operation equations, cloning everything.
    /// Used as an oracle for `apply` over a small exhaustive universe.
    fn naive_apply(op: &Operation, s: &Store) -> Option<Store> {
        match s {
            Store::Word(ls) => match op {
                Operation::Push1(w) => {
                    if ls.is_empty() {
                        None
                    } else {
                        let mut out = w.clone();
                        out.extend_from_slice(&ls[1..]);
                        Some(Store::Word(out))
                    }
                }
                _ => None,
            },
            Store::Seq(cs) => {
                let n = s.level();
                let k = op.level();
                if k > n {
                    return None;
                }
                if k == n {
                    match op {
                        Operation::PushK(_) => {
                            let mut out = vec![cs[0].clone()];
                            out.extend(cs.iter().cloned());
                            Some(Store::Seq(out))
                        }
                        Operation::PopK(_) => {
                            if cs.len() >= 2 {
                                Some(Store::Seq(cs[1..].to_vec()))
                            } else {
                                None
                            }
                        }
                        Operation::Push1(_) => unreachable!(),
                    }
                } else {
                    let first = naive_apply(op, &cs[0])?;
                    let mut out = vec![Arc::new(first)];
                    out.extend(cs[1..].iter().cloned());
                    Some(Store::Seq(out))
                }
            }
        }
    }

    #[test]
    fn apply_matches_naive_oracle_exhaustively() {
        // All stores of level <= 2 over {a, b} with at most 4 letters total.
        let mut universe: Vec<Store> = Vec::new();
        let letters = ["", "a", "b", "aa", "ab", "ba", "bb", "aab", "abb", "abab"];
        for w in letters {
            if w.len() <= 4 {
                universe.push(st(&format!("[{w}]")));
            }
        }
        let words: Vec<&str> = letters.iter().copied().filter(|w| w.len() <= 2).collect();
        for w1 in &words {
            universe.push(st(&format!("[[{w1}]]")));
            for w2 in &words {
                if w1.len() + w2.len() <= 4 {
                    universe.push(st(&format!("[[{w1}][{w2}]]")));
                }
            }
        }
        let ops = [
            Operation::push1(word("")),
            Operation::push1(word("a")),
            Operation::push1(word("ba")),
            Operation::push_k(2),
            Operation::pop_k(2),
        ];
        let mut checked = 0;
        for s in &universe {
            for op in &ops {
                let got = s.apply(op).ok();
                assert_eq!(got, naive_apply(op, s), "op {op} on {s}");
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn sharing_survives_duplication() {
        let s = st("[[ab][c]]");
        let dup = s.apply(&Operation::push_k(2)).unwrap();
        let Store::Seq(cs) = &dup else { unreachable!() };
        assert!(Arc::ptr_eq(&cs[0], &cs[1]));
    }

    mod props {
        use super::super::strategies::{any_store, store_at_level};
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn parse_inverts_encode(s in any_store()) {
                let enc = s.encode();
                prop_assert_eq!(&Store::parse(&enc, s.level()).unwrap(), &s);
                prop_assert_eq!(&Store::parse_any(&enc).unwrap(), &s);
                prop_assert_eq!(s.encoded_len(), enc.chars().count());
            }

            #[test]
            fn rewriting_the_top_letter_to_itself_changes_nothing(s in any_store()) {
                if let Some(l) = s.top_letter() {
                    prop_assert_eq!(s.apply(&Operation::push1(vec![l])).unwrap(), s);
                }
            }

            #[test]
            fn duplicate_then_drop_is_identity(s in any_store(), k in 2u32..=3) {
                if k > s.level() {
                    return Ok(());
                }
                let dup = s.apply(&Operation::push_k(k)).unwrap();
                prop_assert_eq!(dup.level(), s.level());
                prop_assert_eq!(dup.apply(&Operation::pop_k(k)).unwrap(), s);
            }

            #[test]
            fn applying_never_changes_the_level(s in store_at_level(2), w in "[abc]{0,3}") {
                for op in [
                    Operation::push1(word(&w)),
                    Operation::push_k(2),
                    Operation::pop_k(1),
                    Operation::pop_k(2),
                ] {
                    if let Ok(t) = s.apply(&op) {
                        prop_assert_eq!(t.level(), s.level());
                    }
                }
            }
        }
    }
}
