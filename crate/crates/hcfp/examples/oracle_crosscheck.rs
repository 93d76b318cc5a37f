//! Cross-check a symbolic reachability result against explicit bounded
//! search, and show how corrupted results get caught.

use hcfp::{
    crosscheck_prestar, curated_suite, prestar, Bounds, Labels, NestedAutomaton, SaturationConfig,
};

fn main() {
    // The suite bundles small processes with known target sets.
    let suite = curated_suite();
    println!("curated suite: {} instances", suite.len());

    let inst = &suite[0];
    println!("checking {:?}", inst.name);

    let table = Labels::new(inst.process.alphabet().clone());
    let targets =
        NestedAutomaton::from_store_set(&table, inst.process.level(), &inst.targets);
    let (closure, _) = prestar(&inst.process, &targets, &SaturationConfig::default()).unwrap();

    // The oracle enumerates every small store and compares the automaton's
    // verdict with a forward breadth-first witness search.
    let report = crosscheck_prestar(&inst.process, &targets, &closure, &inst.bounds);
    print!("{report}");
    assert!(report.clean());

    // A result automaton that wrongly rejects a reachable store is a hard
    // failure: the oracle has the witness in hand.
    let too_small = targets.clone();
    let report = crosscheck_prestar(&inst.process, &targets, &too_small, &inst.bounds);
    println!("\nclaiming the targets alone are the closure:");
    print!("{report}");
    assert!(!report.ok());

    // A result that accepts too much only warns: the bounded search cannot
    // distinguish "unreachable" from "reachable via a longer run".
    let too_big = NestedAutomaton::universe(&table, inst.process.level());
    let report = crosscheck_prestar(&inst.process, &targets, &too_big, &inst.bounds);
    println!("\nclaiming everything is the closure:");
    println!(
        "{} hard failures, {} warnings",
        report.hard_failures.len(),
        report.warnings.len()
    );
    assert!(report.ok() && !report.clean());

    // Tighter or looser bounds trade time for confidence.
    let loose = Bounds::new(6, 30, 40);
    let report = crosscheck_prestar(&inst.process, &targets, &closure, &loose);
    assert!(report.clean());
    println!("\nre-checked {:?} with wider search bounds: clean", inst.name);
}
