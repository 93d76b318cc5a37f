//! Text formats for models, automata, and formulas, plus DOT export.
//!
//! Writers are deterministic: equal values serialize to equal bytes, so
//! exported artifacts diff cleanly and tests can freeze expected output.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::flat::{FlatAutomaton, FlatSym};
use crate::logic::Formula;
use crate::nested::NestedAutomaton;
use crate::process::{Hcfp, Transition};
use crate::store::{Letter, Operation, Store};

#[derive(Error, Debug)]
pub enum FormatError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: invalid model: {msg}")]
    Model { path: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn perr(path: &str, line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn read(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_letter(tok: &str, path: &str, line: usize) -> Result<Letter, FormatError> {
    let mut chars = tok.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c != '[' && c != ']' => Ok(Letter::new(c)),
        (Some(c), None) => Err(perr(path, line, format!("letter {c:?} is reserved"))),
        _ => Err(perr(path, line, format!("expected a single letter, got {tok:?}"))),
    }
}

fn parse_usize(tok: &str, path: &str, line: usize, what: &str) -> Result<u32, FormatError> {
    tok.parse::<u32>()
        .map_err(|_| perr(path, line, format!("expected a {what}, got {tok:?}")))
}

/// Statements are separated by newlines or semicolons; `#` starts a comment.
fn statements(src: &str) -> impl Iterator<Item = (usize, &str)> {
    src.lines().enumerate().flat_map(|(i, raw)| {
        let body = raw.split('#').next().unwrap_or("");
        body.split(';')
            .map(move |frag| (i + 1, frag.trim()))
            .filter(|(_, frag)| !frag.is_empty())
    })
}

/// Parses the model format: `level N`, `letters a b`, and one `rule` line per
/// transition (`rule a push1 "ab"`, `rule a push 2`, `rule b pop 2`).
pub fn parse_model(src: &str, path: &str) -> Result<Hcfp, FormatError> {
    let mut level: Option<u32> = None;
    let mut alphabet: BTreeSet<Letter> = BTreeSet::new();
    let mut saw_letters = false;
    let mut rules: Vec<Transition> = Vec::new();

    for (line, stmt) in statements(src) {
        let toks: Vec<&str> = stmt.split_whitespace().collect();
        match toks[0] {
            "level" => {
                if toks.len() != 2 {
                    return Err(perr(path, line, "usage: level N"));
                }
                if level.is_some() {
                    return Err(perr(path, line, "duplicate level statement"));
                }
                level = Some(parse_usize(toks[1], path, line, "level")?);
            }
            "letters" => {
                saw_letters = true;
                for tok in &toks[1..] {
                    alphabet.insert(parse_letter(tok, path, line)?);
                }
            }
            "rule" => {
                if toks.len() < 3 {
                    return Err(perr(path, line, "usage: rule <letter> <op> ..."));
                }
                let guard = parse_letter(toks[1], path, line)?;
                let op = match (toks[2], toks.get(3)) {
                    ("push1", Some(quoted)) => {
                        let inner = quoted
                            .strip_prefix('"')
                            .and_then(|s| s.strip_suffix('"'))
                            .ok_or_else(|| perr(path, line, "push1 takes a quoted word"))?;
                        let mut w = Vec::new();
                        for c in inner.chars() {
                            w.push(parse_letter(&c.to_string(), path, line)?);
                        }
                        Operation::push1(w)
                    }
                    ("push", Some(k)) => {
                        let k = parse_usize(k, path, line, "push order")?;
                        if k < 2 {
                            return Err(perr(path, line, "push order must be >= 2"));
                        }
                        Operation::push_k(k)
                    }
                    ("pop", Some(k)) => {
                        let k = parse_usize(k, path, line, "pop order")?;
                        if k < 1 {
                            return Err(perr(path, line, "pop order must be >= 1"));
                        }
                        Operation::pop_k(k)
                    }
                    (other, _) => {
                        return Err(perr(
                            path,
                            line,
                            format!("unknown operation {other:?} (push1/push/pop)"),
                        ));
                    }
                };
                rules.push(Transition { guard, op });
            }
            other => {
                return Err(perr(path, line, format!("unknown statement {other:?}")));
            }
        }
    }

    let level = level.ok_or_else(|| perr(path, 1, "missing level statement"))?;
    if !saw_letters {
        return Err(perr(path, 1, "missing letters statement"));
    }
    Hcfp::new(alphabet, level, rules).map_err(|e| FormatError::Model {
        path: path.to_string(),
        msg: e.to_string(),
    })
}

pub fn load_model(path: &Path) -> Result<Hcfp, FormatError> {
    parse_model(&read(path)?, &path.display().to_string())
}

fn parse_sym(tok: &str, path: &str, line: usize) -> Result<Option<FlatSym>, FormatError> {
    match tok {
        "[" => Ok(Some(FlatSym::Open)),
        "]" => Ok(Some(FlatSym::Close)),
        "eps" => Ok(None),
        _ => Ok(Some(FlatSym::Letter(parse_letter(tok, path, line)?))),
    }
}

/// Parses the automaton format. Either an explicit machine:
///
/// ```text
/// level 1
/// letters a
/// states q0 q1 q2
/// initial q0
/// final q1
/// trans q0 [ q2
/// trans q2 a q1
/// ```
///
/// or a finite set written directly, `stores { [a] [ab] }`. The `letters`
/// line is optional; letters used by transitions or stores always join the
/// alphabet.
pub fn parse_flat(src: &str, path: &str) -> Result<FlatAutomaton, FormatError> {
    let mut level: Option<u32> = None;
    let mut alphabet: BTreeSet<Letter> = BTreeSet::new();
    let mut names: Vec<String> = Vec::new();
    let mut initial: Option<(usize, usize)> = None;
    let mut finals: Vec<usize> = Vec::new();
    let mut transitions: Vec<(usize, Option<FlatSym>, usize)> = Vec::new();
    let mut store_toks: Vec<(usize, String)> = Vec::new();
    let mut in_stores = false;
    let mut stores_closed = false;

    let lookup = |names: &[String], tok: &str, path: &str, line: usize| {
        names
            .iter()
            .position(|n| n == tok)
            .ok_or_else(|| perr(path, line, format!("unknown state {tok:?}")))
    };

    for (line, stmt) in statements(src) {
        let mut toks: Vec<&str> = stmt.split_whitespace().collect();
        if in_stores {
            // Inside a stores block: encodings until the closing brace.
            for (i, tok) in toks.iter().enumerate() {
                if *tok == "}" {
                    if i + 1 != toks.len() {
                        return Err(perr(path, line, "tokens after closing brace"));
                    }
                    in_stores = false;
                    stores_closed = true;
                    break;
                }
                store_toks.push((line, tok.trim_matches(',').to_string()));
            }
            continue;
        }
        match toks[0] {
            "level" => {
                if toks.len() != 2 {
                    return Err(perr(path, line, "usage: level N"));
                }
                level = Some(parse_usize(toks[1], path, line, "level")?);
            }
            "letters" => {
                for tok in &toks[1..] {
                    alphabet.insert(parse_letter(tok, path, line)?);
                }
            }
            "states" => {
                for tok in &toks[1..] {
                    if names.iter().any(|n| n == tok) {
                        return Err(perr(path, line, format!("duplicate state {tok:?}")));
                    }
                    names.push(tok.to_string());
                }
            }
            "initial" => {
                if toks.len() != 2 {
                    return Err(perr(path, line, "usage: initial <state>"));
                }
                if initial.is_some() {
                    return Err(perr(path, line, "duplicate initial statement"));
                }
                initial = Some((lookup(&names, toks[1], path, line)?, line));
            }
            "final" => {
                for tok in &toks[1..] {
                    finals.push(lookup(&names, tok, path, line)?);
                }
            }
            "trans" => {
                if toks.len() != 4 {
                    return Err(perr(path, line, "usage: trans <state> <symbol> <state>"));
                }
                let p = lookup(&names, toks[1], path, line)?;
                let sym = parse_sym(toks[2], path, line)?;
                let q = lookup(&names, toks[3], path, line)?;
                if let Some(FlatSym::Letter(l)) = sym {
                    alphabet.insert(l);
                }
                transitions.push((p, sym, q));
            }
            "stores" => {
                if stores_closed || !store_toks.is_empty() {
                    return Err(perr(path, line, "duplicate stores block"));
                }
                toks.remove(0);
                if toks.first() != Some(&"{") {
                    return Err(perr(path, line, "usage: stores { <store> ... }"));
                }
                toks.remove(0);
                in_stores = true;
                for tok in toks {
                    if tok == "}" {
                        in_stores = false;
                        stores_closed = true;
                    } else if stores_closed {
                        return Err(perr(path, line, "tokens after closing brace"));
                    } else {
                        store_toks.push((line, tok.trim_matches(',').to_string()));
                    }
                }
            }
            other => {
                return Err(perr(path, line, format!("unknown statement {other:?}")));
            }
        }
    }
    if in_stores {
        return Err(perr(path, 1, "unterminated stores block"));
    }

    if stores_closed {
        if !names.is_empty() || initial.is_some() || !finals.is_empty() || !transitions.is_empty()
        {
            return Err(perr(
                path,
                1,
                "a stores block cannot be mixed with explicit states",
            ));
        }
        let mut stores = Vec::new();
        for (line, tok) in &store_toks {
            if tok.is_empty() {
                continue;
            }
            let s = Store::parse_any(tok).map_err(|e| perr(path, *line, e.to_string()))?;
            if let Some(n) = level {
                if s.level() != n {
                    return Err(perr(
                        path,
                        *line,
                        format!("store {tok} has level {}, file declares {n}", s.level()),
                    ));
                }
            }
            for l in s.encode().chars().filter(|c| *c != '[' && *c != ']') {
                alphabet.insert(Letter::new(l));
            }
            stores.push(s);
        }
        if let Some(first) = stores.first() {
            if let Some(bad) = stores.iter().find(|s| s.level() != first.level()) {
                return Err(perr(
                    path,
                    1,
                    format!("stores mix levels {} and {}", first.level(), bad.level()),
                ));
            }
        }
        let mut a = FlatAutomaton::from_store_set(alphabet, &stores);
        if level.is_some() {
            a.set_declared_level(level);
        }
        return Ok(a);
    }

    let (initial, _) = initial.ok_or_else(|| perr(path, 1, "missing initial statement"))?;
    Ok(FlatAutomaton::new(
        names.len(),
        alphabet,
        transitions,
        initial,
        finals,
        level,
    ))
}

pub fn load_automaton(path: &Path) -> Result<FlatAutomaton, FormatError> {
    parse_flat(&read(path)?, &path.display().to_string())
}

fn write_sym(sym: Option<FlatSym>) -> String {
    match sym {
        None => "eps".to_string(),
        Some(FlatSym::Open) => "[".to_string(),
        Some(FlatSym::Close) => "]".to_string(),
        Some(FlatSym::Letter(l)) => l.ch().to_string(),
    }
}

/// Serializes an automaton in the text format; `parse_flat` reads it back.
pub fn write_flat(a: &FlatAutomaton) -> String {
    let mut out = String::new();
    if let Some(n) = a.declared_level() {
        let _ = writeln!(out, "level {n}");
    }
    let _ = write!(out, "letters");
    for l in a.alphabet() {
        let _ = write!(out, " {}", l.ch());
    }
    out.push('\n');
    let _ = write!(out, "states");
    for i in 0..a.num_states() {
        let _ = write!(out, " q{i}");
    }
    out.push('\n');
    let _ = writeln!(out, "initial q{}", a.initial());
    let _ = write!(out, "final");
    for q in a.finals() {
        let _ = write!(out, " q{q}");
    }
    out.push('\n');
    for &(p, sym, q) in a.transitions() {
        let _ = writeln!(out, "trans q{p} {} q{q}", write_sym(sym));
    }
    out
}

/// A parsed formula plus any inline store-set literals it mentioned. Literals
/// get positional names (`#0`, `#1`, ...) and must be registered as atoms
/// before satisfiability runs.
#[derive(Debug, Clone)]
pub struct ParsedFormula {
    pub formula: Formula,
    pub literals: Vec<(String, Vec<Store>)>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Bang,
    Amp,
    Pipe,
    LParen,
    RParen,
    Stores(Vec<Store>),
}

fn lex_formula(src: &str, path: &str) -> Result<Vec<(usize, Tok)>, FormatError> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                line += 1;
                chars.next();
            }
            _ if c.is_whitespace() => {
                chars.next();
            }
            '#' => {
                // comment to end of line
                for c in chars.by_ref() {
                    if c == '\n' {
                        line += 1;
                        break;
                    }
                }
            }
            '!' => {
                toks.push((line, Tok::Bang));
                chars.next();
            }
            '&' => {
                toks.push((line, Tok::Amp));
                chars.next();
            }
            '|' => {
                toks.push((line, Tok::Pipe));
                chars.next();
            }
            '(' => {
                toks.push((line, Tok::LParen));
                chars.next();
            }
            ')' => {
                toks.push((line, Tok::RParen));
                chars.next();
            }
            '{' => {
                chars.next();
                let start = line;
                let mut body = String::new();
                let mut closed = false;
                for c in chars.by_ref() {
                    if c == '}' {
                        closed = true;
                        break;
                    }
                    if c == '\n' {
                        line += 1;
                        body.push(' ');
                    } else {
                        body.push(if c == ',' { ' ' } else { c });
                    }
                }
                if !closed {
                    return Err(perr(path, start, "unterminated store set"));
                }
                let mut stores = Vec::new();
                for enc in body.split_whitespace() {
                    stores.push(
                        Store::parse_any(enc).map_err(|e| perr(path, start, e.to_string()))?,
                    );
                }
                toks.push((start, Tok::Stores(stores)));
            }
            _ if c.is_alphanumeric() || c == '_' => {
                let mut ident = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        ident.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                toks.push((line, Tok::Ident(ident)));
            }
            other => {
                return Err(perr(path, line, format!("unexpected character {other:?}")));
            }
        }
    }
    Ok(toks)
}

struct FormulaParser<'a> {
    toks: &'a [(usize, Tok)],
    pos: usize,
    path: &'a str,
    literals: Vec<(String, Vec<Store>)>,
}

impl<'a> FormulaParser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map_or(1, |(l, _)| *l)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn fail(&self, msg: impl Into<String>) -> FormatError {
        perr(self.path, self.line(), msg)
    }

    /// `|` binds loosest.
    fn or_level(&mut self) -> Result<Formula, FormatError> {
        let mut f = self.and_level()?;
        while self.peek() == Some(&Tok::Pipe) {
            self.bump();
            f = Formula::or(f, self.and_level()?);
        }
        Ok(f)
    }

    fn and_level(&mut self) -> Result<Formula, FormatError> {
        let mut f = self.unary()?;
        while self.peek() == Some(&Tok::Amp) {
            self.bump();
            f = Formula::and(f, self.unary()?);
        }
        Ok(f)
    }

    fn unary(&mut self) -> Result<Formula, FormatError> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::Ident(w)) if w == "EX" => {
                self.bump();
                Ok(Formula::ex(self.unary()?))
            }
            Some(Tok::Ident(w)) if w == "EF" => {
                self.bump();
                Ok(Formula::ef(self.unary()?))
            }
            Some(Tok::Ident(w)) if w == "E" => {
                self.bump();
                let left = self.or_level()?;
                match self.bump() {
                    Some(Tok::Ident(w)) if w == "U" => {}
                    _ => return Err(self.fail("expected U in E..U form")),
                }
                Ok(Formula::eu(left, self.unary()?))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, FormatError> {
        match self.bump() {
            Some(Tok::Ident(w)) if w == "true" => Ok(Formula::True),
            Some(Tok::Ident(w)) if w == "atom" => match self.bump() {
                Some(Tok::Ident(name)) => Ok(Formula::atom(name)),
                _ => Err(self.fail("atom needs a name")),
            },
            Some(Tok::LParen) => {
                let f = self.or_level()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(f),
                    _ => Err(self.fail("missing closing parenthesis")),
                }
            }
            Some(Tok::Stores(stores)) => {
                let name = format!("#{}", self.literals.len());
                self.literals.push((name.clone(), stores));
                Ok(Formula::atom(name))
            }
            Some(other) => Err(self.fail(format!("unexpected token {other:?}"))),
            None => Err(self.fail("unexpected end of formula")),
        }
    }
}

/// Parses a formula. Grammar, loosest to tightest: `f | g`, `f & g`, then
/// `! f` / `EX f` / `EF f` / `E f U g`, then `true`, `atom NAME`,
/// parenthesized formulas, and inline store sets `{[a] [aa]}`.
pub fn parse_formula(src: &str, path: &str) -> Result<ParsedFormula, FormatError> {
    let toks = lex_formula(src, path)?;
    let mut p = FormulaParser {
        toks: &toks,
        pos: 0,
        path,
        literals: Vec::new(),
    };
    let formula = p.or_level()?;
    if p.pos != toks.len() {
        return Err(p.fail("trailing tokens after formula"));
    }
    Ok(ParsedFormula {
        formula,
        literals: p.literals,
    })
}

pub fn load_formula(path: &Path) -> Result<ParsedFormula, FormatError> {
    parse_formula(&read(path)?, &path.display().to_string())
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// DOT rendering of a flat automaton; purely for inspection.
pub fn flat_to_dot(a: &FlatAutomaton) -> String {
    let mut out = String::from("digraph flat {\n  rankdir=LR;\n");
    let _ = writeln!(out, "  start [shape=point];");
    for i in 0..a.num_states() {
        let shape = if a.finals().contains(&i) {
            "doublecircle"
        } else {
            "circle"
        };
        let _ = writeln!(out, "  q{i} [shape={shape}];");
    }
    let _ = writeln!(out, "  start -> q{};", a.initial());
    for &(p, sym, q) in a.transitions() {
        let _ = writeln!(
            out,
            "  q{p} -> q{q} [label=\"{}\"];",
            dot_escape(&write_sym(sym))
        );
    }
    out.push_str("}\n");
    out
}

/// DOT rendering of a nested automaton. Edges carry interned label ids; a
/// legend box spells out what each id denotes. Inspection only — the label
/// table cannot be reconstructed from the drawing.
pub fn nested_to_dot(a: &NestedAutomaton) -> String {
    let core = a.core();
    let table = a.table();
    let mut out = String::from("digraph nested {\n  rankdir=LR;\n");
    let _ = writeln!(out, "  start [shape=point];");
    for i in 0..core.num_states() {
        let is_final = i == core.final_state() || (i == core.initial() && core.initial_accepting());
        let shape = if is_final { "doublecircle" } else { "circle" };
        let _ = writeln!(out, "  q{i} [shape={shape}];");
    }
    let _ = writeln!(out, "  start -> q{};", core.initial());
    let mut used = BTreeSet::new();
    for &(p, label, q) in core.transitions() {
        used.insert(label);
        let _ = writeln!(out, "  q{p} -> q{q} [label=\"L{label}\"];");
    }
    let mut legend = String::new();
    for id in used {
        let _ = write!(legend, "L{id} = {}\\l", dot_escape(&table.describe(id)));
    }
    let _ = writeln!(out, "  legend [shape=box, label=\"{legend}\"];");
    out.push_str("}\n");
    out
}
