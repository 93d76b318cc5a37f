//! Command-line front end. Exit codes: 0 success, 1 analysis or input error,
//! 2 saturation budget exhausted (a partial, sound under-approximation is
//! still written when one exists).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hcfp::constrained::ConstrainedSaturationError;
use hcfp::format::{
    flat_to_dot, load_automaton, load_formula, load_model, nested_to_dot, write_flat,
};
use hcfp::logic::{sat, Atoms, LogicError};
use hcfp::saturation::{pre, prestar, SaturationConfig, SaturationError};
use hcfp::{
    crosscheck_constrained, crosscheck_prestar, prestar_constrained, Bounds, CrosscheckReport,
    FlatAutomaton, Hcfp, Labels, NestedAutomaton, NestedError, Store,
};

#[derive(Parser)]
#[command(
    name = "hcfp",
    version,
    about = "Backward reachability and branching-time checking for higher-order store processes"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct BudgetArgs {
    /// Full saturation passes before giving up
    #[arg(long, default_value_t = SaturationConfig::default().max_passes)]
    max_passes: usize,
    /// Cap on interned labels
    #[arg(long, default_value_t = SaturationConfig::default().max_interned_labels)]
    max_labels: usize,
}

impl BudgetArgs {
    fn config(&self) -> SaturationConfig {
        SaturationConfig {
            max_passes: self.max_passes,
            max_interned_labels: self.max_labels,
            ..SaturationConfig::default()
        }
    }
}

#[derive(Args)]
struct OutArgs {
    /// Write the result automaton (text format) here; stdout otherwise
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a DOT rendering here
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    /// Encoded-size cap for the enumerated store universe
    #[arg(long, default_value_t = Bounds::default().max_enum_size)]
    max_enum: usize,
    /// Step bound for the forward witness search
    #[arg(long, default_value_t = Bounds::default().max_depth)]
    max_depth: usize,
    /// Encoded-size cap on intermediate stores during the witness search
    #[arg(long = "max-size", default_value_t = Bounds::default().max_encoded_size)]
    max_size: usize,
}

impl BoundArgs {
    fn bounds(&self) -> Bounds {
        Bounds::new(self.max_enum, self.max_depth, self.max_size)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// One-step predecessors of a target set
    Pre {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        set: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Backward-reachability closure of a target set
    Prestar {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        set: PathBuf,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Backward closure restricted to a regular constraint
    PrestarConstrained {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        constraint: PathBuf,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Evaluate a branching-time formula over a model
    Mc {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        formula: PathBuf,
        /// Bind a named atom to an automaton file (repeatable)
        #[arg(long = "atom", value_name = "NAME=PATH")]
        atoms: Vec<String>,
        /// Answer membership for this store instead of emitting the set
        #[arg(long)]
        store: Option<String>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Ask whether a store belongs to an automaton's language
    Member {
        #[arg(long)]
        auto: PathBuf,
        #[arg(long)]
        store: String,
    },
    /// Cross-check a claimed result against bounded brute force
    Oracle {
        #[command(subcommand)]
        cmd: OracleCmd,
    },
    /// Re-serialize an automaton as canonical text and/or DOT
    Export {
        #[arg(long)]
        auto: PathBuf,
        /// Render the DOT with nested labels and a legend
        #[arg(long)]
        nested: bool,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Validate a claimed backward-reachability closure
    Prestar {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        result: PathBuf,
        #[command(flatten)]
        bounds: BoundArgs,
    },
    /// Validate a claimed constrained closure
    Constrained {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        constraint: PathBuf,
        #[arg(long)]
        result: PathBuf,
        #[command(flatten)]
        bounds: BoundArgs,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

type Fallible<T> = Result<T, String>;

/// Letters an automaton uses beyond the model's alphabet are input errors:
/// saturation and complements are relative to the model's alphabet.
fn check_alphabet(h: &Hcfp, a: &FlatAutomaton, path: &Path) -> Fallible<()> {
    let extra: BTreeSet<char> = a
        .alphabet()
        .difference(h.alphabet())
        .map(|l| l.ch())
        .collect();
    if extra.is_empty() {
        Ok(())
    } else {
        Err(format!(
            "{}: letters {:?} are not in the model alphabet",
            path.display(),
            extra
        ))
    }
}

fn check_level(h: &Hcfp, a: &FlatAutomaton, path: &Path) -> Fallible<()> {
    match a.declared_level() {
        Some(n) if n != h.level() => Err(format!(
            "level mismatch: model is level {}, {} declares level {}",
            h.level(),
            path.display(),
            n
        )),
        _ => Ok(()),
    }
}

fn load_flat_for(h: &Hcfp, path: &Path) -> Fallible<FlatAutomaton> {
    let a = load_automaton(path).map_err(|e| e.to_string())?;
    check_alphabet(h, &a, path)?;
    check_level(h, &a, path)?;
    Ok(a)
}

fn inflate_for(h: &Hcfp, table: &Labels, a: &FlatAutomaton, path: &Path) -> Fallible<NestedAutomaton> {
    NestedAutomaton::inflate(table, a, h.level())
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn load_inputs(model: &Path, set: &Path) -> Fallible<(Hcfp, Labels, NestedAutomaton)> {
    let h = load_model(model).map_err(|e| e.to_string())?;
    let flat = load_flat_for(&h, set)?;
    let table = Labels::new(h.alphabet().clone());
    let a = inflate_for(&h, &table, &flat, set)?;
    Ok((h, table, a))
}

/// Writes the result automaton and optional DOT; prints the text to stdout
/// when no destination was named.
fn emit(flat: &FlatAutomaton, nested: Option<&NestedAutomaton>, out: &OutArgs) -> Fallible<()> {
    let text = write_flat(flat);
    if let Some(p) = &out.out {
        fs::write(p, &text).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    if let Some(p) = &out.dot {
        let dot = match nested {
            Some(n) => nested_to_dot(n),
            None => flat_to_dot(flat),
        };
        fs::write(p, dot).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    if out.out.is_none() && out.dot.is_none() {
        print!("{text}");
    }
    Ok(())
}

fn print_crosscheck(report: &CrosscheckReport) {
    println!(
        "{} hard failures, {} warnings ({} stores checked)",
        report.hard_failures.len(),
        report.warnings.len(),
        report.instances_checked
    );
    for f in &report.hard_failures {
        println!("  HARD     {}  {}", f.store, f.note);
    }
    for f in &report.warnings {
        println!("  warning  {}  {}", f.store, f.note);
    }
}

fn run(cli: Cli) -> Fallible<u8> {
    match cli.cmd {
        Cmd::Pre { model, set, out } => {
            let (h, _, a) = load_inputs(&model, &set)?;
            match pre(&h, &a) {
                Ok(res) => {
                    emit(&res.flatten(), Some(&res), &out)?;
                    Ok(0)
                }
                Err(NestedError::ResourceExceeded { .. }) => {
                    println!("PARTIAL: label budget exhausted; no result written");
                    Ok(2)
                }
                Err(e) => Err(e.to_string()),
            }
        }
        Cmd::Prestar {
            model,
            set,
            budget,
            out,
        } => {
            let (h, _, a) = load_inputs(&model, &set)?;
            match prestar(&h, &a, &budget.config()) {
                Ok((res, report)) => {
                    println!("{report}");
                    emit(&res.flatten(), Some(&res), &out)?;
                    Ok(0)
                }
                Err(SaturationError::BudgetExhausted { partial, report }) => {
                    println!("PARTIAL: {report}; the written set under-approximates the closure");
                    emit(&partial.flatten(), Some(&partial), &out)?;
                    Ok(2)
                }
            }
        }
        Cmd::PrestarConstrained {
            model,
            set,
            constraint,
            budget,
            out,
        } => {
            let (h, _, a) = load_inputs(&model, &set)?;
            let c = load_flat_for(&h, &constraint)?;
            let flatten_budget = hcfp::flat::DEFAULT_SUBSET_BUDGET;
            match prestar_constrained(&h, &a, &c, &budget.config()) {
                Ok((res, report)) => {
                    println!("{report}");
                    let nested = res
                        .to_nested(flatten_budget)
                        .map_err(|e| format!("result too large to flatten: {e}"))?;
                    emit(&nested.flatten(), Some(&nested), &out)?;
                    Ok(0)
                }
                Err(ConstrainedSaturationError::BudgetExhausted { partial, report }) => {
                    println!("PARTIAL: {report}; the written set under-approximates the closure");
                    match partial.to_nested(flatten_budget) {
                        Ok(nested) => emit(&nested.flatten(), Some(&nested), &out)?,
                        Err(e) => println!("partial result too large to flatten: {e}"),
                    }
                    Ok(2)
                }
                Err(ConstrainedSaturationError::Nested(e)) => Err(e.to_string()),
            }
        }
        Cmd::Mc {
            model,
            formula,
            atoms,
            store,
            budget,
            out,
        } => {
            let h = load_model(&model).map_err(|e| e.to_string())?;
            let parsed = load_formula(&formula).map_err(|e| e.to_string())?;
            let table = Labels::new(h.alphabet().clone());
            let mut env = Atoms::new(&table);
            for (name, stores) in &parsed.literals {
                if let Some(s) = stores.iter().find(|s| s.level() != h.level()) {
                    return Err(format!(
                        "{}: literal store {} has level {}, model is level {}",
                        formula.display(),
                        s.encode(),
                        s.level(),
                        h.level()
                    ));
                }
                let set = NestedAutomaton::from_store_set(&table, h.level(), stores);
                env.register(name, &set).map_err(|e| e.to_string())?;
            }
            for spec in &atoms {
                let (name, path) = spec
                    .split_once('=')
                    .ok_or_else(|| format!("--atom takes NAME=PATH, got {spec:?}"))?;
                let path = Path::new(path);
                let flat = load_flat_for(&h, path)?;
                let set = inflate_for(&h, &table, &flat, path)?;
                env.register(name, &set).map_err(|e| e.to_string())?;
            }
            let known: BTreeSet<&str> = env.names().collect();
            for name in parsed.formula.atom_names() {
                if !known.contains(name) {
                    return Err(format!(
                        "{}: unknown atom {name:?} (bind it with --atom {name}=PATH)",
                        formula.display()
                    ));
                }
            }
            match sat(&h, &parsed.formula, &env, &budget.config()) {
                Ok(res) => {
                    if !res.exact {
                        println!(
                            "PARTIAL: a saturation budget ran out; the set under-approximates"
                        );
                    }
                    if let Some(enc) = &store {
                        let s = Store::parse(enc, h.level()).map_err(|e| e.to_string())?;
                        println!("{}", if res.language.member(&s) { "yes" } else { "no" });
                    } else {
                        emit(&res.language.flatten(), Some(&res.language), &out)?;
                    }
                    Ok(if res.exact { 0 } else { 2 })
                }
                Err(e @ LogicError::NegatedPartial { .. }) => Err(e.to_string()),
                Err(e) => Err(e.to_string()),
            }
        }
        Cmd::Member { auto, store } => {
            let a = load_automaton(&auto).map_err(|e| e.to_string())?;
            let s = match a.declared_level() {
                Some(n) => Store::parse(&store, n),
                None => Store::parse_any(&store),
            }
            .map_err(|e| format!("store {store:?}: {e}"))?;
            println!("{}", if a.accepts_store(&s) { "yes" } else { "no" });
            Ok(0)
        }
        Cmd::Oracle { cmd } => match cmd {
            OracleCmd::Prestar {
                model,
                set,
                result,
                bounds,
            } => {
                let h = load_model(&model).map_err(|e| e.to_string())?;
                let targets = load_flat_for(&h, &set)?;
                let claimed = load_flat_for(&h, &result)?;
                let report = crosscheck_prestar(&h, &targets, &claimed, &bounds.bounds());
                print_crosscheck(&report);
                Ok(if report.ok() { 0 } else { 1 })
            }
            OracleCmd::Constrained {
                model,
                set,
                constraint,
                result,
                bounds,
            } => {
                let h = load_model(&model).map_err(|e| e.to_string())?;
                let targets = load_flat_for(&h, &set)?;
                let c = load_flat_for(&h, &constraint)?;
                let claimed = load_flat_for(&h, &result)?;
                let report = crosscheck_constrained(&h, &targets, &c, &claimed, &bounds.bounds());
                print_crosscheck(&report);
                Ok(if report.ok() { 0 } else { 1 })
            }
        },
        Cmd::Export { auto, nested, out } => {
            let a = load_automaton(&auto).map_err(|e| e.to_string())?;
            let inflated = if nested {
                let n = a.declared_level().ok_or_else(|| {
                    format!("{}: --nested needs a level line in the file", auto.display())
                })?;
                let table = Labels::new(a.alphabet().clone());
                Some(
                    NestedAutomaton::inflate(&table, &a, n)
                        .map_err(|e| format!("{}: {e}", auto.display()))?,
                )
            } else {
                None
            };
            emit(&a, inflated.as_ref(), &out)?;
            Ok(0)
        }
    }
}
