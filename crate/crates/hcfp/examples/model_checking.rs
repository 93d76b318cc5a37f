//! Branching-time checking over a process: EX, EF, EU, and boolean structure,
//! with satisfying sets computed as nested automata.

use std::collections::BTreeSet;

use hcfp::logic::{check, sat, Atoms, Formula};
use hcfp::store::{word, Letter};
use hcfp::{Hcfp, Labels, NestedAutomaton, Operation, SaturationConfig, Store, Transition};

fn main() {
    let alphabet: BTreeSet<Letter> = "ab".chars().map(Letter::new).collect();
    let s = |enc: &str| Store::parse(enc, 1).unwrap();

    // Two rules: pop an a, or rewrite b to a.
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
    let mut atoms = Atoms::new(&table);
    atoms
        .register("empty", &NestedAutomaton::from_store_set(&table, 1, &[s("[]")]))
        .unwrap();
    atoms
        .register(
            "all_b",
            &NestedAutomaton::from_store_set(&table, 1, &[s("[b]"), s("[bb]"), s("[bbb]")]),
        )
        .unwrap();

    let cfg = SaturationConfig::default();

    // "Can the store drain completely?"
    let drain = Formula::ef(Formula::atom("empty"));
    println!("formula: {drain}");
    for enc in ["[]", "[ab]", "[bba]", "[b]"] {
        println!("  {:6} |= EF empty: {}", enc, check(&h, &drain, &s(enc), &atoms, &cfg).unwrap());
    }

    // EX sees exactly one step ahead: [ab] steps to [b] only.
    let next_b = Formula::ex(Formula::atom("all_b"));
    assert!(check(&h, &next_b, &s("[ab]"), &atoms, &cfg).unwrap());
    assert!(!check(&h, &next_b, &s("[aa]"), &atoms, &cfg).unwrap());

    // Until keeps every intermediate store inside the left set.
    let until = Formula::eu(Formula::atom("all_b"), Formula::atom("empty"));
    println!("formula: {until}");
    // No b-only store can reach [] through b-only stores: the first move
    // rewrites b to a, leaving the left set immediately.
    for enc in ["[b]", "[bb]"] {
        assert!(!check(&h, &until, &s(enc), &atoms, &cfg).unwrap());
    }
    // The right side alone still satisfies the until.
    assert!(check(&h, &until, &s("[]"), &atoms, &cfg).unwrap());
    println!("  no b-only store satisfies it; [] does");

    // EF f is the same set as E true U f.
    let a = sat(&h, &drain, &atoms, &cfg).unwrap();
    let b = sat(
        &h,
        &Formula::eu(Formula::True, Formula::atom("empty")),
        &atoms,
        &cfg,
    )
    .unwrap();
    assert!(a.exact && b.exact);
    assert!(a
        .language
        .flatten()
        .language_equal(&b.language.flatten(), 1)
        .unwrap());
    println!("EF empty == E true U empty, as languages");

    // Negation needs an exact operand; the satisfying set of the negation is
    // everything (level 1) outside the operand's set.
    let not_drain = Formula::not(drain);
    assert!(!check(&h, &not_drain, &s("[ab]"), &atoms, &cfg).unwrap());
    println!("formula: {not_drain} holds nowhere at level 1 here");
}
