//! End-to-end acceptance checks, one test per shipping criterion. Each test
//! prints a single PASS/FAIL line (visible with `--nocapture`) and lists the
//! concrete disagreements when something breaks.

use std::collections::BTreeSet;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hcfp::logic::{sat, Atoms, Formula};
use hcfp::nested::core_member;
use hcfp::store::Letter;
use hcfp::{
    crosscheck_prestar, curated_suite, enumerate_stores, prestar, prestar_constrained,
    prestar_observed, sat_explicit, saturate_step, saturation_mutants, universe_flat,
    FlatAutomaton, Hcfp, Labels, NestedAutomaton, Operation, ReachVerdict, SaturationConfig,
    Store, Transition,
};

fn letters(s: &str) -> BTreeSet<Letter> {
    s.chars().map(Letter::new).collect()
}

fn rule(guard: char, op: Operation) -> Transition {
    Transition {
        guard: Letter::new(guard),
        op,
    }
}

fn verdict(number: usize, name: &str, problems: Vec<String>) {
    if problems.is_empty() {
        println!("acceptance {number}/8 {name}: PASS");
    } else {
        println!("acceptance {number}/8 {name}: FAIL");
        for p in &problems {
            println!("  - {p}");
        }
        panic!("{name}: {} problem(s)", problems.len());
    }
}

/// Builds the target set of a curated instance in a fresh table.
fn instance_targets(inst: &hcfp::CuratedInstance) -> (Labels, NestedAutomaton) {
    let table = Labels::new(inst.process.alphabet().clone());
    let targets = NestedAutomaton::from_store_set(&table, inst.process.level(), &inst.targets);
    (table, targets)
}

#[test]
fn pop_chain_closure() {
    let started = Instant::now();
    let mut problems = Vec::new();

    let h = Hcfp::new(letters("a"), 1, vec![rule('a', Operation::pop_k(1))]).unwrap();
    let table = Labels::new(letters("a"));
    let targets = NestedAutomaton::from_store_set(&table, 1, &[Store::parse("[a]", 1).unwrap()]);
    let (closure, report) = prestar(&h, &targets, &SaturationConfig::default()).unwrap();

    if !report.fixpoint_reached {
        problems.push(format!("no fixpoint: {report}"));
    }
    for i in 1..=20 {
        let s = Store::word(vec![Letter::new('a'); i]);
        if !closure.member(&s) {
            problems.push(format!("[a^{i}] missing from the closure"));
        }
    }
    if closure.member(&Store::word(vec![])) {
        problems.push("[] wrongly accepted".into());
    }
    let flat = closure.flatten();
    for junk in ["", "a", "aa", "[a", "a]", "][", "[]]", "[[a]]"] {
        if flat.member(junk) {
            problems.push(format!("non-store word {junk:?} wrongly accepted"));
        }
    }
    let elapsed = started.elapsed();
    if elapsed.as_secs_f64() >= 1.0 {
        problems.push(format!("took {elapsed:?}, budget is 1s"));
    }
    verdict(1, "pop-chain closure", problems);
}

#[test]
fn suite_crosscheck() {
    let started = Instant::now();
    let mut problems = Vec::new();

    let suite = curated_suite();
    if suite.len() != 20 {
        problems.push(format!("expected 20 instances, found {}", suite.len()));
    }
    for inst in &suite {
        let (_, targets) = instance_targets(inst);
        let (closure, report) =
            prestar(&inst.process, &targets, &SaturationConfig::default()).unwrap();
        if !report.fixpoint_reached {
            problems.push(format!("{}: no fixpoint", inst.name));
            continue;
        }
        let report = crosscheck_prestar(&inst.process, &targets, &closure, &inst.bounds);
        if !report.clean() {
            problems.push(format!(
                "{}: {} hard failures, {} warnings",
                inst.name,
                report.hard_failures.len(),
                report.warnings.len()
            ));
        }
    }
    let elapsed = started.elapsed();
    if elapsed.as_secs() >= 300 {
        problems.push(format!("took {elapsed:?}, budget is 5min"));
    }
    verdict(2, "curated-suite crosscheck", problems);
}

#[test]
fn constrained_degeneracy() {
    let mut problems = Vec::new();
    let cfg = SaturationConfig::default();

    // A constraint equal to the universe must not change any closure. The
    // languages are compared exactly, which subsumes any bounded check.
    for inst in &curated_suite() {
        let (_, targets) = instance_targets(inst);
        let n = inst.process.level();
        let everything = universe_flat(inst.process.alphabet(), n);
        let (plain, _) = prestar(&inst.process, &targets, &cfg).unwrap();
        let (constrained, report) =
            prestar_constrained(&inst.process, &targets, &everything, &cfg).unwrap();
        if !report.fixpoint_reached {
            problems.push(format!("{}: constrained run hit a budget", inst.name));
            continue;
        }
        let back = match constrained.to_nested(1_000_000) {
            Ok(a) => a,
            Err(e) => {
                problems.push(format!("{}: flattening failed: {e}", inst.name));
                continue;
            }
        };
        match plain.flatten().language_equal(&back.flatten(), n) {
            Ok(true) => {}
            Ok(false) => problems.push(format!(
                "{}: universe-constrained closure differs from the plain one",
                inst.name
            )),
            Err(e) => problems.push(format!("{}: equality check failed: {e}", inst.name)),
        }
    }

    // Finite corridor: pops through {[a],[aa],[aaa]} keep exactly that set.
    let h = Hcfp::new(letters("a"), 1, vec![rule('a', Operation::pop_k(1))]).unwrap();
    let table = Labels::new(letters("a"));
    let targets = NestedAutomaton::from_store_set(&table, 1, &[Store::parse("[a]", 1).unwrap()]);
    let corridor: Vec<Store> = ["[a]", "[aa]", "[aaa]"]
        .iter()
        .map(|e| Store::parse(e, 1).unwrap())
        .collect();
    let constraint = FlatAutomaton::from_store_set(letters("a"), &corridor);
    let (got, _) = prestar_constrained(&h, &targets, &constraint, &cfg).unwrap();
    let expected: BTreeSet<Store> = corridor.into_iter().collect();
    for s in enumerate_stores(h.alphabet(), 1, 8) {
        if got.member(&s) != expected.contains(&s) {
            problems.push(format!(
                "corridor: {} should be {}",
                s,
                if expected.contains(&s) { "in" } else { "out" }
            ));
        }
    }
    verdict(3, "constraint degeneracy and corridor", problems);
}

fn random_store(rng: &mut ChaCha8Rng, level: u32) -> Store {
    if level == 1 {
        let len = rng.gen_range(0..=3);
        let pick = |rng: &mut ChaCha8Rng| Letter::new(if rng.gen_bool(0.5) { 'a' } else { 'b' });
        Store::word((0..len).map(|_| pick(rng)).collect())
    } else {
        let width = rng.gen_range(1..=2);
        Store::seq((0..width).map(|_| random_store(rng, level - 1)).collect()).unwrap()
    }
}

fn random_store_within(rng: &mut ChaCha8Rng, level: u32, cap: usize) -> Store {
    loop {
        let s = random_store(rng, level);
        if s.encoded_len() <= cap {
            return s;
        }
    }
}

#[test]
fn representation_round_trips() {
    let mut problems = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let alphabet = letters("ab");

    for level in 1..=3u32 {
        let table = Labels::new(alphabet.clone());
        for i in 0..50 {
            let k = rng.gen_range(1..=3);
            let stores: Vec<Store> = (0..k)
                .map(|_| random_store_within(&mut rng, level, 10))
                .collect();
            let mut a = NestedAutomaton::from_store_set(&table, level, &stores);
            match rng.gen_range(0..3) {
                1 => a = a.union(&NestedAutomaton::top_letter(&table, Letter::new('a'), level)),
                2 => a = a.union(&NestedAutomaton::universe(&table, level)),
                _ => {}
            }

            let f0 = a.flatten();
            let b = match NestedAutomaton::inflate(&table, &f0, level) {
                Ok(b) => b,
                Err(e) => {
                    problems.push(format!("level {level} #{i}: inflate failed: {e}"));
                    continue;
                }
            };
            if let Some(s) = hcfp::bounded_language_eq(&alphabet, level, &a, &b, 10) {
                problems.push(format!(
                    "level {level} #{i}: inflate(flatten(A)) differs from A at {s}"
                ));
            }
            let f1 = b.flatten();
            if let Some(s) = hcfp::bounded_language_eq(&alphabet, level, &f0, &f1, 10) {
                problems.push(format!(
                    "level {level} #{i}: flatten(inflate(F)) differs from F at {s}"
                ));
            }
        }
    }

    for i in 0..1000 {
        let level = rng.gen_range(1..=3);
        let s = random_store(&mut rng, level);
        let enc = s.encode();
        if Store::parse(&enc, level).ok().as_ref() != Some(&s) {
            problems.push(format!("store #{i}: parse(encode) lost {enc}"));
        }
        if Store::parse_any(&enc).ok().as_ref() != Some(&s) {
            problems.push(format!("store #{i}: parse_any(encode) lost {enc}"));
        }
    }
    verdict(4, "representation round trips", problems);
}

#[test]
fn saturation_discipline() {
    let mut problems = Vec::new();
    let cfg = SaturationConfig::default();

    for inst in &curated_suite() {
        let (table, targets) = instance_targets(inst);
        let sample = enumerate_stores(
            inst.process.alphabet(),
            inst.process.level(),
            inst.bounds.max_enum_size,
        );
        let mut states_seen: Vec<usize> = Vec::new();
        let mut accepted: Vec<Vec<bool>> = Vec::new();
        let run = prestar_observed(&inst.process, &targets, &cfg, &mut |_, core| {
            states_seen.push(core.num_states());
            accepted.push(sample.iter().map(|s| core_member(&table, core, s)).collect());
        });
        let Ok((closure, report)) = run else {
            problems.push(format!("{}: saturation hit a budget", inst.name));
            continue;
        };
        if !report.fixpoint_reached {
            problems.push(format!("{}: no fixpoint", inst.name));
        }
        if states_seen.iter().any(|&n| n != states_seen[0]) {
            problems.push(format!(
                "{}: state count changed across passes: {states_seen:?}",
                inst.name
            ));
        }
        for w in accepted.windows(2) {
            let lost = sample
                .iter()
                .zip(w[0].iter().zip(w[1].iter()))
                .find(|(_, (before, after))| **before && !**after);
            if let Some((s, _)) = lost {
                problems.push(format!("{}: pass dropped accepted store {s}", inst.name));
            }
        }
        // At the fixpoint every rule's saturation step is a structural no-op,
        // which interning makes visible as identifier equality.
        for t in inst.process.transitions() {
            match saturate_step(&closure, t.guard, &t.op) {
                Ok(stepped) if stepped.id() == closure.id() => {}
                Ok(_) => problems.push(format!(
                    "{}: rule ({}, {}) still changes the fixpoint",
                    inst.name, t.guard, t.op
                )),
                Err(e) => problems.push(format!("{}: step failed at fixpoint: {e}", inst.name)),
            }
        }
    }
    verdict(5, "saturation discipline", problems);
}

#[test]
fn logic_agreement() {
    let mut problems = Vec::new();
    let cfg = SaturationConfig::default();

    // EF f and E true U f must produce the same language on every instance.
    for inst in &curated_suite() {
        let (table, targets) = instance_targets(inst);
        let mut atoms = Atoms::new(&table);
        atoms.register("t", &targets).unwrap();
        let ef = sat(
            &inst.process,
            &Formula::ef(Formula::atom("t")),
            &atoms,
            &cfg,
        )
        .unwrap();
        let eu = sat(
            &inst.process,
            &Formula::eu(Formula::True, Formula::atom("t")),
            &atoms,
            &cfg,
        )
        .unwrap();
        if !(ef.exact && eu.exact) {
            problems.push(format!("{}: inexact satisfying sets", inst.name));
            continue;
        }
        match ef
            .language
            .flatten()
            .language_equal(&eu.language.flatten(), inst.process.level())
        {
            Ok(true) => {}
            Ok(false) => problems.push(format!("{}: EF differs from E true U", inst.name)),
            Err(e) => problems.push(format!("{}: equality check failed: {e}", inst.name)),
        }
    }

    // Symbolic answers agree with explicit-state evaluation on a model whose
    // moves never grow the store, so the bounded universe is step-closed.
    let h = Hcfp::new(
        letters("ab"),
        1,
        vec![
            rule('a', Operation::pop_k(1)),
            rule('b', Operation::push1(vec![Letter::new('a')])),
        ],
    )
    .unwrap();
    let table = Labels::new(letters("ab"));
    let st = |e: &str| Store::parse(e, 1).unwrap();
    let mut atoms = Atoms::new(&table);
    atoms
        .register("p", &NestedAutomaton::from_store_set(&table, 1, &[st("[a]")]))
        .unwrap();
    atoms
        .register(
            "q",
            &NestedAutomaton::from_store_set(&table, 1, &[st("[b]"), st("[ab]")]),
        )
        .unwrap();
    atoms
        .register("r", &NestedAutomaton::from_store_set(&table, 1, &[st("[]")]))
        .unwrap();

    let formulas = vec![
        Formula::atom("p"),
        Formula::not(Formula::atom("p")),
        Formula::or(Formula::atom("p"), Formula::atom("q")),
        Formula::and(
            Formula::not(Formula::atom("p")),
            Formula::not(Formula::atom("q")),
        ),
        Formula::ex(Formula::atom("p")),
        Formula::ex(Formula::or(Formula::atom("p"), Formula::atom("r"))),
        Formula::ef(Formula::atom("r")),
        Formula::ef(Formula::and(Formula::atom("q"), Formula::not(Formula::atom("p")))),
        Formula::eu(Formula::atom("q"), Formula::atom("p")),
        Formula::eu(Formula::True, Formula::atom("r")),
    ];
    let universe = enumerate_stores(h.alphabet(), 1, 8);
    for f in &formulas {
        let explicit = match sat_explicit(&h, f, &atoms, &universe) {
            Ok(set) => set,
            Err(e) => {
                problems.push(format!("{f}: explicit evaluation failed: {e}"));
                continue;
            }
        };
        let symbolic = match sat(&h, f, &atoms, &cfg) {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("{f}: symbolic evaluation failed: {e}"));
                continue;
            }
        };
        if !symbolic.exact {
            problems.push(format!("{f}: symbolic result inexact"));
            continue;
        }
        for s in &universe {
            if explicit.contains(s) != symbolic.language.member(s) {
                problems.push(format!("{f}: disagreement at {s}"));
                break;
            }
        }
    }
    verdict(6, "logic agreement", problems);
}

#[test]
fn mutation_sensitivity() {
    let mut problems = Vec::new();

    let mut total = 0usize;
    for inst in &curated_suite() {
        let (_, targets) = instance_targets(inst);
        let (closure, _) = prestar(&inst.process, &targets, &SaturationConfig::default()).unwrap();
        for (i, mutant) in saturation_mutants(&targets, &closure).iter().enumerate() {
            total += 1;
            let report = crosscheck_prestar(&inst.process, &targets, mutant, &inst.bounds);
            if report.ok() {
                problems.push(format!(
                    "{}: deleting added transition {i} went unnoticed",
                    inst.name
                ));
            }
        }
    }
    if total == 0 {
        problems.push("no saturation-added transitions to mutate".into());
    }
    println!("  ({total} deletion mutants, each caught by the crosscheck)");
    verdict(7, "mutation sensitivity", problems);
}

#[test]
fn budget_stress_cli() {
    let mut problems = Vec::new();

    let dir = std::env::temp_dir().join(format!("hcfp-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let model = dir.join("stress.hcfp");
    let set = dir.join("targets.auto");
    let out = dir.join("partial.auto");
    std::fs::write(
        &model,
        "level 3\nletters a b\nrule a push 3\nrule b push 2\nrule a pop 2\nrule b pop 3\n",
    )
    .unwrap();
    std::fs::write(&set, "stores { [[[a][b]][[a]]] }\n").unwrap();

    let output = Command::new(env!("CARGO_BIN_EXE_hcfp"))
        .args(["prestar", "--model"])
        .arg(&model)
        .arg("--set")
        .arg(&set)
        .args(["--max-labels", "60", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    if output.status.code() != Some(2) {
        problems.push(format!(
            "expected exit code 2, got {:?}; stdout: {stdout}",
            output.status.code()
        ));
    }
    if !stdout.contains("PARTIAL") {
        problems.push(format!("no PARTIAL banner in: {stdout}"));
    }

    // The partial automaton is a sound under-approximation: everything it
    // accepts, within enumeration bounds, has a forward witness to a target.
    match hcfp::load_automaton(&out) {
        Err(e) => problems.push(format!("partial automaton unreadable: {e}")),
        Ok(partial) => {
            let h = hcfp::load_model(&model).unwrap();
            let targets = hcfp::load_automaton(&set).unwrap();
            let mut accepted = 0usize;
            for s in enumerate_stores(h.alphabet(), 3, 15) {
                if !partial.accepts_store(&s) {
                    continue;
                }
                accepted += 1;
                let verdict = h.bounded_reach(&s, &|t| targets.accepts_store(t), 10, 40);
                if !matches!(verdict, ReachVerdict::ReachesWithin) {
                    problems.push(format!("partial accepts {s} but no witness was found"));
                }
            }
            if accepted == 0 {
                problems.push("partial automaton accepts nothing in bounds".into());
            }
            println!("  (partial accepts {accepted} stores in bounds, all witnessed)");
        }
    }
    std::fs::remove_dir_all(&dir).ok();
    verdict(8, "budget stress through the CLI", problems);
}
