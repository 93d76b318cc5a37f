//! Higher-order context-free processes: an alphabet, a store level, and an
//! ordered list of guarded operations. A step picks any rule whose guard
//! matches the top-most letter and applies its operation.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use thiserror::Error;

use crate::nested::NestedAutomaton;
use crate::store::{Letter, Operation, Store};

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Transition {
    pub guard: Letter,
    pub op: Operation,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.guard, self.op)
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ProcessError {
    #[error("invalid process: {}", violations.join("; "))]
    Invalid { violations: Vec<String> },
    #[error(
        "symbolic post-images are not supported: the forward image of a regular \
         store set need not be regular (duplication pumps non-regular languages); \
         use post_explicit on a finite set instead"
    )]
    SymbolicPostNonRegular,
}

/// A higher-order context-free process. The rule list is ordered; saturation
/// and enumeration walk it round-robin, so order is part of the value.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Hcfp {
    alphabet: BTreeSet<Letter>,
    level: u32,
    transitions: Vec<Transition>,
}

impl Hcfp {
    pub fn new(
        alphabet: BTreeSet<Letter>,
        level: u32,
        transitions: Vec<Transition>,
    ) -> Result<Hcfp, ProcessError> {
        let mut violations = Vec::new();
        if level == 0 {
            violations.push("store level must be >= 1".to_string());
        }
        let mut seen: HashSet<(Letter, &Operation)> = HashSet::new();
        for t in &transitions {
            if !alphabet.contains(&t.guard) {
                violations.push(format!("guard {} is not in the alphabet", t.guard));
            }
            for l in t.op.letters() {
                if !alphabet.contains(l) {
                    violations.push(format!(
                        "rule ({}, {}) writes letter {} outside the alphabet",
                        t.guard, t.op, l
                    ));
                }
            }
            if t.op.level() > level {
                violations.push(format!(
                    "rule ({}, {}) has level {} > process level {}",
                    t.guard,
                    t.op,
                    t.op.level(),
                    level
                ));
            }
            if let Operation::PopK(1) | Operation::PushK(0..=1) = t.op {
                violations.push(format!(
                    "rule ({}, {}) is not canonical (pop 1 is push1 \"\")",
                    t.guard, t.op
                ));
            }
            if !seen.insert((t.guard, &t.op)) {
                violations.push(format!("duplicate rule ({}, {})", t.guard, t.op));
            }
        }
        if violations.is_empty() {
            Ok(Hcfp {
                alphabet,
                level,
                transitions,
            })
        } else {
            Err(ProcessError::Invalid { violations })
        }
    }

    pub fn alphabet(&self) -> &BTreeSet<Letter> {
        &self.alphabet
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Rules enabled at `s`, in rule order: guard matches the top letter and
    /// the operation is defined.
    pub fn enabled(&self, s: &Store) -> Vec<&Transition> {
        let Some(top) = s.top_letter() else {
            return Vec::new();
        };
        self.transitions
            .iter()
            .filter(|t| t.guard == top && s.apply(&t.op).is_ok())
            .collect()
    }

    /// All one-step successors of `s`, deduplicated, in rule order.
    pub fn step(&self, s: &Store) -> Vec<Store> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for t in self.enabled(s) {
            let next = s.apply(&t.op).expect("enabled implies defined");
            if seen.insert(next.clone()) {
                out.push(next);
            }
        }
        out
    }

    /// One-step forward image of a finite set.
    pub fn post_explicit(&self, set: &BTreeSet<Store>) -> BTreeSet<Store> {
        let mut out = BTreeSet::new();
        for s in set {
            out.extend(self.step(s));
        }
        out
    }

    /// Symbolic forward images are rejected: `post` of a regular store set is
    /// not regular in general, so no automaton-level `post` exists.
    pub fn post_symbolic(&self, _set: &NestedAutomaton) -> Result<NestedAutomaton, ProcessError> {
        Err(ProcessError::SymbolicPostNonRegular)
    }

    /// Breadth-first search for `target` from `s`.
    ///
    /// `ReachesWithin` is a proof of reachability; `NotWithinBounds` is *not*
    /// a proof of unreachability — a longer or larger run may exist. The start
    /// store is always tested (depth 0) regardless of `max_encoded_size`;
    /// successors larger than the bound are pruned.
    pub fn bounded_reach(
        &self,
        s: &Store,
        target: &dyn Fn(&Store) -> bool,
        max_depth: usize,
        max_encoded_size: usize,
    ) -> ReachVerdict {
        let mut queue: VecDeque<(Store, usize)> = VecDeque::new();
        let mut seen: HashSet<Store> = HashSet::new();
        seen.insert(s.clone());
        queue.push_back((s.clone(), 0));
        while let Some((cur, depth)) = queue.pop_front() {
            if target(&cur) {
                return ReachVerdict::ReachesWithin;
            }
            if depth == max_depth {
                continue;
            }
            for next in self.step(&cur) {
                if next.encoded_len() <= max_encoded_size && seen.insert(next.clone()) {
                    queue.push_back((next, depth + 1));
                }
            }
        }
        ReachVerdict::NotWithinBounds
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ReachVerdict {
    ReachesWithin,
    NotWithinBounds,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::word;

    fn letters(s: &str) -> BTreeSet<Letter> {
        s.chars().map(Letter::new).collect()
    }

    fn st(s: &str) -> Store {
        Store::parse_any(s).unwrap()
    }

    #[test]
    fn validation_reports_all_violations() {
        let err = Hcfp::new(
            letters("a"),
            2,
            vec![
                Transition {
                    guard: Letter::new('b'),
                    op: Operation::push1(word("a")),
                },
                Transition {
                    guard: Letter::new('a'),
                    op: Operation::PushK(3),
                },
            ],
        )
        .unwrap_err();
        let ProcessError::Invalid { violations } = err else {
            panic!("expected Invalid");
        };
        assert_eq!(violations.len(), 2);
    }

    #[test]
    fn rejects_noncanonical_pop1() {
        let err = Hcfp::new(
            letters("a"),
            1,
            vec![Transition {
                guard: Letter::new('a'),
                op: Operation::PopK(1),
            }],
        );
        assert!(err.is_err());
    }

    #[test]
    fn enabled_and_step_follow_rule_order() {
        let h = Hcfp::new(
            letters("ab"),
            2,
            vec![
                Transition {
                    guard: Letter::new('a'),
                    op: Operation::pop_k(2),
                },
                Transition {
                    guard: Letter::new('a'),
                    op: Operation::push1(word("b")),
                },
                Transition {
                    guard: Letter::new('b'),
                    op: Operation::push_k(2),
                },
            ],
        )
        .unwrap();
        let s = st("[[ab][b]]");
        let en = h.enabled(&s);
        assert_eq!(en.len(), 2);
        assert_eq!(en[0].op, Operation::pop_k(2));
        assert_eq!(h.step(&s), vec![st("[[b]]"), st("[[bb][b]]")]);
        // pop 2 undefined on a single child, push1 still fires
        let s1 = st("[[ab]]");
        assert_eq!(h.step(&s1), vec![st("[[bb]]")]);
        // empty top: nothing is enabled
        assert!(h.step(&st("[[][a]]")).is_empty());
    }

    #[test]
    fn step_deduplicates() {
        let h = Hcfp::new(
            letters("ab"),
            1,
            vec![
                Transition {
                    guard: Letter::new('a'),
                    op: Operation::push1(word("b")),
                },
                Transition {
                    guard: Letter::new('a'),
                    op: Operation::push1(word("b")),
                },
            ],
        );
        // duplicate rules are rejected at validation
        assert!(h.is_err());
        let h = Hcfp::new(
            letters("ab"),
            1,
            vec![
                Transition {
                    guard: Letter::new('a'),
                    op: Operation::push1(word("b")),
                },
                Transition {
                    guard: Letter::new('b'),
                    op: Operation::push1(word("b")),
                },
            ],
        )
        .unwrap();
        assert_eq!(h.step(&st("[ab]")), vec![st("[bb]")]);
    }

    #[test]
    fn post_explicit_small() {
        let h = Hcfp::new(
            letters("a"),
            2,
            vec![
                Transition {
                    guard: Letter::new('a'),
                    op: Operation::push_k(2),
                },
                Transition {
                    guard: Letter::new('a'),
                    op: Operation::pop_k(2),
                },
            ],
        )
        .unwrap();
        let set: BTreeSet<Store> = [st("[[a]]"), st("[[a][a]]")].into_iter().collect();
        let post = h.post_explicit(&set);
        let expect: BTreeSet<Store> = [st("[[a][a]]"), st("[[a][a][a]]"), st("[[a]]")]
            .into_iter()
            .collect();
        assert_eq!(post, expect);
    }

    #[test]
    fn bounded_reach_self_is_depth_zero() {
        let h = Hcfp::new(letters("a"), 1, vec![]).unwrap();
        let s = st("[a]");
        let verdict = h.bounded_reach(&s, &|t| t == &s, 0, 0);
        assert_eq!(verdict, ReachVerdict::ReachesWithin);
    }

    #[test]
    fn bounded_reach_monotone_in_bounds() {
        // [a^5] -> ... -> [a] by pop 1 needs depth 4.
        let h = Hcfp::new(
            letters("a"),
            1,
            vec![Transition {
                guard: Letter::new('a'),
                op: Operation::pop_k(1),
            }],
        )
        .unwrap();
        let s = st("[aaaaa]");
        let target = |t: &Store| t == &st("[a]");
        assert_eq!(
            h.bounded_reach(&s, &target, 3, 10),
            ReachVerdict::NotWithinBounds
        );
        assert_eq!(
            h.bounded_reach(&s, &target, 4, 10),
            ReachVerdict::ReachesWithin
        );
        // size bound prunes: intermediate [aaaa] has length 6
        assert_eq!(
            h.bounded_reach(&s, &target, 4, 5),
            ReachVerdict::NotWithinBounds
        );
        assert_eq!(
            h.bounded_reach(&s, &target, 4, 6),
            ReachVerdict::ReachesWithin
        );
    }
}
