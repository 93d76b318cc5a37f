//! Work with flat automata over store encodings: boolean operations,
//! equivalence, and splitting states by bracket depth.

use std::collections::BTreeSet;

use hcfp::store::Letter;
use hcfp::{universe_flat, FlatAutomaton, Store};

fn main() {
    let alphabet: BTreeSet<Letter> = "ab".chars().map(Letter::new).collect();

    // Finite sets come straight from encodings.
    let small = FlatAutomaton::from_encodings(alphabet.clone(), &["[a]", "[ab]", "[b]"]);
    println!("small automaton: {} states", small.num_states());
    for enc in ["[a]", "[ab]", "[ba]", "[]"] {
        println!("  member {:5} -> {}", enc, small.member(enc));
    }

    // The universe automaton accepts every level-n encoding.
    let uni = universe_flat(&alphabet, 1);
    assert!(uni.member("[abba]") && uni.member("[]"));
    assert!(!uni.member("[[a]]"), "wrong level");
    assert!(!uni.member("ab"), "not an encoding at all");

    // Complement stays inside the encodings of the level.
    let rest = small.complement_within(1).unwrap();
    assert!(rest.member("[ba]") && !rest.member("[ab]"));
    assert!(!rest.member("ab"), "junk words are outside the universe");

    // union/intersect/language_equal close the loop.
    let both = small.union(&rest);
    assert!(both.language_equal(&uni, 1).unwrap());
    assert!(small.intersect(&rest).is_empty());
    println!("small + complement = universe (level 1)");

    // assign_levels recovers, for every state, the bracket depth at which it
    // can sit; only well-formed store languages pass.
    let set = FlatAutomaton::from_store_set(
        alphabet,
        &[
            Store::parse("[[a][b]]", 2).unwrap(),
            Store::parse("[[ab]]", 2).unwrap(),
        ],
    );
    let (leveled, levels) = set.normalize().assign_levels(2).unwrap();
    println!("leveled automaton has {} states:", leveled.num_states());
    for q in 0..leveled.num_states() {
        println!("  state {:2} sits at level {:?}", q, levels.level(q));
    }
}
