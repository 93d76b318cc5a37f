//! Backward reachability over nested automata.
//!
//! A rule (a, o) contributes transitions that recognize every store from
//! which one application of o lands in the current language. The saturation
//! loop applies the rules round-robin until a full pass changes nothing
//! structurally. State sets never grow — only transitions and labels — which
//! is what makes the loop terminate; budgets guard the label table and
//! transition count anyway and return the partial result when exhausted.
//!
//! Rules are applied at the position they govern: a rule whose operation
//! lives at the automaton's own level adds edges out of the initial state,
//! while lower-level rules rewrite the labels of initial-outgoing edges
//! (those labels read the first child, the only child an operation can
//! touch; by the time a later child is read, every child before it has been
//! popped, so rewriting self-loop labels on the initial is sound for the
//! reflexive-transitive closure).

use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

use crate::flat::StateId;
use crate::nested::{union_core, Core, Labels, NestedAutomaton, NestedError};
use crate::process::Hcfp;
use crate::store::{Letter, Operation};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SaturationConfig {
    /// Full passes over the rule list.
    pub max_passes: usize,
    /// Total labels in the shared table.
    pub max_interned_labels: usize,
    /// Transitions of the automaton being saturated.
    pub max_total_transitions: usize,
}

impl Default for SaturationConfig {
    fn default() -> Self {
        SaturationConfig {
            max_passes: 500,
            max_interned_labels: 200_000,
            max_total_transitions: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SaturationReport {
    pub passes_run: usize,
    pub transitions_added: usize,
    pub labels_interned: usize,
    pub fixpoint_reached: bool,
}

impl fmt::Display for SaturationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "passes={} transitions_added={} labels_interned={} fixpoint={}",
            self.passes_run, self.transitions_added, self.labels_interned, self.fixpoint_reached
        )
    }
}

#[derive(Error, Debug)]
pub enum SaturationError {
    /// The loop stopped before the fixpoint; `partial` under-approximates the
    /// answer (everything it accepts genuinely reaches the target).
    #[error("saturation budget exhausted ({report})")]
    BudgetExhausted {
        partial: NestedAutomaton,
        report: SaturationReport,
    },
}

/// States reachable from `from` along the letter word `w`.
fn letter_targets(
    table: &Labels,
    core: &Core,
    from: StateId,
    w: &[Letter],
) -> BTreeSet<StateId> {
    let mut cur = BTreeSet::from([from]);
    for &l in w {
        let lid = table.letter(l);
        let mut next = BTreeSet::new();
        for &p in &cur {
            for (lab, q) in core.outgoing(p) {
                if lab == lid {
                    next.insert(q);
                }
            }
        }
        cur = next;
        if cur.is_empty() {
            break;
        }
    }
    cur
}

/// One saturation step for one rule. Adds edges at the rule's level, rewrites
/// first-child labels above it; monotone in the language, constant in states.
fn t_d(table: &Labels, core: &Core, guard: Letter, op: &Operation) -> Result<Core, NestedError> {
    let n = core.level();
    let k = op.level();
    debug_assert!(k <= n, "rule level exceeds automaton level");
    let mut out = core.clone();
    if k < n {
        let init_edges: Vec<_> = core.outgoing(core.initial()).collect();
        for (l, q) in init_edges {
            let lc = table.core(l).expect("labels above level 0 have cores");
            let nl = table.intern(t_d(table, &lc, guard, op)?);
            if nl != l {
                out.transitions.remove(&(core.initial(), l, q));
                out.add_edge(core.initial(), nl, q);
            }
        }
        return Ok(out);
    }
    match op {
        Operation::Push1(w) => {
            // s = a·v is a predecessor iff w·v is accepted: follow w from the
            // initial and shortcut with an a-edge
            let la = table.letter(guard);
            for q1 in letter_targets(table, core, core.initial(), w) {
                out.add_edge(core.initial(), la, q1);
            }
        }
        Operation::PushK(_) => {
            // s1 s2.. is a predecessor iff s1 s1 s2.. is accepted: collapse
            // two steps into one whose label demands both plus the guard
            let atom = table.atom(guard, n - 1);
            let first: Vec<_> = core.outgoing(core.initial()).collect();
            for (b1, q1) in first {
                let second: Vec<_> = core.outgoing(q1).collect();
                for (b2, q2) in second {
                    let label = table.product(&[b1, b2, atom])?;
                    if table.label_is_empty(label) {
                        continue;
                    }
                    out.add_edge(core.initial(), label, q2);
                }
            }
        }
        Operation::PopK(_) => {
            // s1 s2.. is a predecessor iff s2.. is accepted and s1 starts
            // with the guard: loop on the initial
            let atom = table.atom(guard, n - 1);
            out.add_edge(core.initial(), atom, core.initial());
        }
    }
    Ok(out)
}

/// Applies one rule's saturation step once. Saturation fixpoints are exactly
/// the automata this leaves unchanged.
pub fn saturate_step(
    a: &NestedAutomaton,
    guard: Letter,
    op: &Operation,
) -> Result<NestedAutomaton, NestedError> {
    let c = t_d(a.table(), &a.core(), guard, op)?;
    Ok(NestedAutomaton::from_core(a.table(), c))
}

/// Exact one-step predecessors for one rule: a fresh initial keeps the new
/// edges apart from the original language.
fn pre_step_core(
    table: &Labels,
    core: &Core,
    guard: Letter,
    op: &Operation,
) -> Result<Core, NestedError> {
    let n = core.level();
    let k = op.level();
    debug_assert!(k <= n);
    let fresh = core.num_states();
    let mut out = core.clone();
    out.num_states = fresh + 1;
    out.initial = fresh;
    out.initial_accepting = false;
    // edges landing on the old initial need a twin into the final when the
    // old automaton accepted the empty word (the run may stop right there)
    let old_init = core.initial();
    let old_flag = core.initial_accepting();
    let connect = |out: &mut Core, label, q| {
        out.transitions.insert((fresh, label, q));
        if q == old_init && old_flag {
            out.transitions.insert((fresh, label, core.final_state()));
        }
    };
    if k < n {
        for (l, q) in core.outgoing(old_init) {
            let lc = table.core(l).expect("labels above level 0 have cores");
            let nl = table.intern(pre_step_core(table, &lc, guard, op)?);
            if !table.label_is_empty(nl) {
                connect(&mut out, nl, q);
            }
        }
        return Ok(out);
    }
    match op {
        Operation::Push1(w) => {
            let la = table.letter(guard);
            for q1 in letter_targets(table, core, old_init, w) {
                connect(&mut out, la, q1);
            }
        }
        Operation::PushK(_) => {
            let atom = table.atom(guard, n - 1);
            let first: Vec<_> = core.outgoing(old_init).collect();
            for (b1, q1) in first {
                let second: Vec<_> = core.outgoing(q1).collect();
                for (b2, q2) in second {
                    let label = table.product(&[b1, b2, atom])?;
                    if table.label_is_empty(label) {
                        continue;
                    }
                    connect(&mut out, label, q2);
                }
            }
        }
        Operation::PopK(_) => {
            let atom = table.atom(guard, n - 1);
            connect(&mut out, atom, old_init);
        }
    }
    Ok(out)
}

/// The stores with some one-step successor in the given language (the union
/// over all rules of their exact one-step predecessors).
pub fn pre(h: &Hcfp, a: &NestedAutomaton) -> Result<NestedAutomaton, NestedError> {
    assert_eq!(h.level(), a.level(), "process and automaton levels differ");
    let table = a.table();
    let core = a.core();
    let mut acc: Option<Core> = None;
    for t in h.transitions() {
        let c = pre_step_core(table, &core, t.guard, &t.op)?;
        acc = Some(match acc {
            None => c,
            Some(x) => union_core(&x, &c),
        });
    }
    let core = acc.unwrap_or_else(|| Core::empty_language(a.level()));
    Ok(NestedAutomaton::from_core(table, core))
}

/// Saturates until fixpoint: the result accepts exactly the stores that can
/// reach the input language in any number of steps (including zero).
pub fn prestar(
    h: &Hcfp,
    a: &NestedAutomaton,
    cfg: &SaturationConfig,
) -> Result<(NestedAutomaton, SaturationReport), SaturationError> {
    prestar_observed(h, a, cfg, &mut |_, _| {})
}

/// Like [`prestar`], invoking `observer(pass, core)` on the starting core
/// (pass 0) and after every full pass over the rules.
pub fn prestar_observed(
    h: &Hcfp,
    a: &NestedAutomaton,
    cfg: &SaturationConfig,
    observer: &mut dyn FnMut(usize, &Core),
) -> Result<(NestedAutomaton, SaturationReport), SaturationError> {
    assert_eq!(h.level(), a.level(), "process and automaton levels differ");
    let table = a.table();
    let labels_before = table.len();
    let mut core = a.core().normalize_initial();
    let trans_before = core.num_transitions();
    observer(0, &core);
    let mut passes = 0usize;
    let mut fixpoint = false;
    let mut exhausted: Option<String> = None;
    while passes < cfg.max_passes {
        passes += 1;
        let before = core.clone();
        for t in h.transitions() {
            match t_d(table, &core, t.guard, &t.op) {
                Ok(c) => core = c,
                Err(e) => {
                    exhausted = Some(e.to_string());
                    break;
                }
            }
            if table.len() > cfg.max_interned_labels {
                exhausted = Some(format!(
                    "label table grew past {}",
                    cfg.max_interned_labels
                ));
                break;
            }
            if core.num_transitions() > cfg.max_total_transitions {
                exhausted = Some(format!(
                    "transition count grew past {}",
                    cfg.max_total_transitions
                ));
                break;
            }
        }
        observer(passes, &core);
        if exhausted.is_some() {
            break;
        }
        if core == before {
            fixpoint = true;
            break;
        }
    }
    let report = SaturationReport {
        passes_run: passes,
        transitions_added: core.num_transitions().saturating_sub(trans_before),
        labels_interned: table.len().saturating_sub(labels_before),
        fixpoint_reached: fixpoint,
    };
    let out = NestedAutomaton::from_core(table, core);
    if fixpoint {
        Ok((out, report))
    } else {
        Err(SaturationError::BudgetExhausted {
            partial: out,
            report,
        })
    }
}
