//! Backward reachability through a corridor: only runs whose every
//! intermediate store satisfies a regular constraint count.

use std::collections::BTreeSet;

use hcfp::store::Letter;
use hcfp::{
    prestar, prestar_constrained, universe_flat, FlatAutomaton, Hcfp, Labels, NestedAutomaton,
    Operation, SaturationConfig, Store, Transition,
};

fn main() {
    let alphabet: BTreeSet<Letter> = "a".chars().map(Letter::new).collect();
    let s = |enc: &str| Store::parse(enc, 1).unwrap();

    // One rule: pop an a. Unconstrained, every [a^i] with i >= 1 reaches [a].
    let h = Hcfp::new(
        alphabet.clone(),
        1,
        vec![Transition {
            guard: Letter::new('a'),
            op: Operation::pop_k(1),
        }],
    )
    .unwrap();

    let table = Labels::new(alphabet.clone());
    let targets = NestedAutomaton::from_store_set(&table, 1, &[s("[a]")]);
    let cfg = SaturationConfig::default();

    // Constraint: stay within {[a], [aa], [aaa]} the whole run.
    let corridor = FlatAutomaton::from_store_set(alphabet.clone(), &[s("[a]"), s("[aa]"), s("[aaa]")]);
    let (constrained, report) = prestar_constrained(&h, &targets, &corridor, &cfg).unwrap();
    println!("constrained saturation: {report}");
    for enc in ["[a]", "[aa]", "[aaa]", "[aaaa]"] {
        println!("  {:7} in closure: {}", enc, constrained.member(&s(enc)));
    }
    // [aaaa] is out: it would have to pass through itself, and the corridor
    // already rejects the starting store.
    assert!(!constrained.member(&s("[aaaa]")));
    assert!(constrained.member(&s("[aaa]")));

    // A constraint equal to the whole universe changes nothing.
    let everything = universe_flat(&alphabet, 1);
    let (free, _) = prestar_constrained(&h, &targets, &everything, &cfg).unwrap();
    let (plain, _) = prestar(&h, &targets, &cfg).unwrap();
    let plain_flat = plain.flatten();
    let free_flat = free.to_nested(100_000).unwrap().flatten();
    assert!(plain_flat.language_equal(&free_flat, 1).unwrap());
    println!("universe-constrained closure equals the plain closure");

    // The constrained result is an annotated automaton; conversion back to a
    // plain nested automaton is available but can be exponential.
    println!(
        "annotated automaton: {} states, {} annotated transitions",
        constrained.num_states(),
        constrained.num_transitions()
    );
}
