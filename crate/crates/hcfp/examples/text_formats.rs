//! The text formats behind the CLI: models, automata, formulas, DOT.

use hcfp::format::{flat_to_dot, parse_flat, parse_formula, parse_model, write_flat};

fn main() {
    // Models are line- or semicolon-separated statements.
    let h = parse_model("level 2; letters a b; rule a pop 2; rule b push1 \"ab\"", "demo").unwrap();
    println!(
        "model: level {}, {} letters, {} rules",
        h.level(),
        h.alphabet().len(),
        h.transitions().len()
    );

    // Automata are either explicit machines or finite store sets.
    let explicit = "level 1
states p q r
initial p
final r
trans p [ q
trans q a q
trans q ] r";
    let a = parse_flat(explicit, "demo").unwrap();
    assert!(a.member("[aaa]") && !a.member("[b]"));

    let b = parse_flat("stores { [a], [aa], [aaa] }", "demo").unwrap();
    assert!(b.member("[aa]") && !b.member("[aaaa]"));

    // Writing is canonical: reparsing reproduces the bytes exactly.
    let text = write_flat(&b);
    println!("canonical form of the finite set:\n{text}");
    let reparsed = parse_flat(&text, "demo").unwrap();
    assert_eq!(text, write_flat(&reparsed));
    assert!(b.language_equal(&reparsed, 1).unwrap());

    // Formulas use the CLI grammar; inline store sets become fresh atoms.
    let f = parse_formula("EF (atom goal & ! {[aa]})", "demo").unwrap();
    println!("formula: {}", f.formula);
    println!("literal atoms: {:?}", f.literals.iter().map(|(n, _)| n).collect::<Vec<_>>());

    // DOT output for quick inspection.
    let dot = flat_to_dot(&b);
    println!("DOT rendering has {} lines", dot.lines().count());

    // Parse errors carry file and line.
    let err = parse_flat("states q0\ninitial q0\ntrans q0 a q9", "broken.auto").unwrap_err();
    println!("diagnostic: {err}");
}
