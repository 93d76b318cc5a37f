//! Nested store automata: one automaton per level, transitions labeled by
//! automata one level down, all hash-consed in a shared table.

use std::collections::BTreeSet;

use hcfp::store::Letter;
use hcfp::{Labels, NestedAutomaton, Store};

fn main() {
    let alphabet: BTreeSet<Letter> = "ab".chars().map(Letter::new).collect();
    let table = Labels::new(alphabet);

    let s = |enc: &str| Store::parse_any(enc).unwrap();

    // A finite level-2 set.
    let set = NestedAutomaton::from_store_set(&table, 2, &[s("[[a][b]]"), s("[[ab]]")]);
    println!(
        "finite set: {} states, {} transitions, {} labels interned",
        set.num_states(),
        set.num_transitions(),
        table.len()
    );
    assert!(set.member(&s("[[a][b]]")) && !set.member(&s("[[b][a]]")));

    // Interning is structural: building the same set again is free and
    // yields the very same identifier.
    let again = NestedAutomaton::from_store_set(&table, 2, &[s("[[ab]]"), s("[[a][b]]")]);
    assert_eq!(set.id(), again.id());
    println!("rebuilt set shares id {}", set.id());

    // Boolean structure works level-wise. Interning is structural, so the
    // combined automaton gets its own id, but the language is unchanged.
    let uni = NestedAutomaton::universe(&table, 2);
    let same = set.union(&uni.intersect(&set).unwrap());
    for enc in ["[[a][b]]", "[[ab]]", "[[b][a]]", "[[a]]"] {
        assert_eq!(same.member(&s(enc)), set.member(&s(enc)), "{enc}");
    }

    // "Stores whose outermost top letter is a."
    let top_a = NestedAutomaton::top_letter(&table, Letter::new('a'), 2);
    assert!(top_a.member(&s("[[ab][b]]")));
    assert!(!top_a.member(&s("[[ba]]")));

    // flatten/inflate convert to and from flat automata over encodings.
    let flat = set.flatten();
    println!(
        "flattened to {} states over the bracketed alphabet",
        flat.num_states()
    );
    assert!(flat.member("[[a][b]]") && !flat.member("[[a]]"));

    let back = NestedAutomaton::inflate(&table, &flat, 2).unwrap();
    for enc in ["[[a][b]]", "[[ab]]", "[[b][a]]", "[[]]"] {
        assert_eq!(back.member(&s(enc)), set.member(&s(enc)), "{enc}");
    }
    println!("inflate(flatten(A)) matches A on every probe");

    // Inflation rejects automata that are not store languages of the level.
    let junk = hcfp::FlatAutomaton::from_encodings("ab".chars().map(Letter::new).collect(), &["[a]"]);
    println!(
        "inflating a level-1 language at level 2: {:?}",
        NestedAutomaton::inflate(&table, &junk, 2).err().unwrap()
    );
}
