//! Saturation-based backward reachability: compute, as one automaton, every
//! store from which a process can reach a target set.

use std::collections::BTreeSet;

use hcfp::store::{word, Letter};
use hcfp::{
    prestar, Hcfp, Labels, NestedAutomaton, Operation, SaturationConfig, Store, Transition,
};

fn main() {
    let alphabet: BTreeSet<Letter> = "ab".chars().map(Letter::new).collect();

    // A level-1 process: on a, pop the top letter; on b, rewrite b to a.
    let h = Hcfp::new(
        alphabet.clone(),
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

    let table = Labels::new(alphabet);
    let targets = NestedAutomaton::from_store_set(&table, 1, &[Store::parse("[a]", 1).unwrap()]);

    let (closure, report) = prestar(&h, &targets, &SaturationConfig::default()).unwrap();
    println!("saturation: {report}");

    // The closure is exactly: nonempty words over {a,b} whose letters can be
    // consumed down to a single a — here, all nonempty words.
    for enc in ["[a]", "[b]", "[aab]", "[bbbb]", "[]"] {
        let s = Store::parse(enc, 1).unwrap();
        println!("  {:7} reaches target: {}", enc, closure.member(&s));
    }

    // Every claim has a forward witness within small bounds.
    let target_store = Store::parse("[a]", 1).unwrap();
    for enc in ["[b]", "[aab]"] {
        let s = Store::parse(enc, 1).unwrap();
        let verdict = h.bounded_reach(&s, &|t| *t == target_store, 10, 20);
        println!("  witness search from {enc}: {verdict:?}");
    }

    // Budgets make saturation total: a starved run returns the partial
    // automaton it built, which under-approximates the closure.
    let tiny = SaturationConfig {
        max_passes: 0,
        ..SaturationConfig::default()
    };
    match prestar(&h, &targets, &tiny) {
        Err(hcfp::SaturationError::BudgetExhausted { partial, report }) => {
            println!("starved run: {report}");
            assert!(partial.member(&Store::parse("[a]", 1).unwrap()));
            assert!(!partial.member(&Store::parse("[b]", 1).unwrap()));
        }
        Ok(_) => panic!("expected budget exhaustion"),
    }
}
