//! Canonical textual form of terms, conjunctions, assertions and
//! machine feedback lines.

use std::collections::{HashMap, HashSet};
use std::fmt::Write;

use crate::parser::AssertionKind;
use crate::term::{Term, Var, VarId, CONS, NIL};

/// Chooses display names for the variables of one rendering unit: source
/// names are kept, unnamed singletons print as `_`, other unnamed
/// variables get `V0`, `V1`, ... by first occurrence.
struct Namer {
    names: HashMap<VarId, String>,
}

impl Namer {
    fn new(terms: &[&Term]) -> Namer {
        let mut counts: HashMap<VarId, usize> = HashMap::new();
        let mut order: Vec<Var> = Vec::new();
        fn walk(t: &Term, counts: &mut HashMap<VarId, usize>, order: &mut Vec<Var>) {
            match t {
                Term::Var(v) => {
                    let c = counts.entry(v.id).or_insert(0);
                    if *c == 0 {
                        order.push(v.clone());
                    }
                    *c += 1;
                }
                Term::Compound(_, args) => args.iter().for_each(|a| walk(a, counts, order)),
                _ => {}
            }
        }
        for t in terms {
            walk(t, &mut counts, &mut order);
        }
        let mut taken: HashSet<String> = HashSet::new();
        let mut names = HashMap::new();
        let mut pending = Vec::new();
        for v in &order {
            match v.name.as_deref() {
                Some(n) if n != "_" && !taken.contains(n) => {
                    taken.insert(n.to_owned());
                    names.insert(v.id, n.to_owned());
                }
                _ => pending.push(v.clone()),
            }
        }
        let mut next = 0usize;
        for v in pending {
            if counts[&v.id] == 1 {
                names.insert(v.id, "_".to_owned());
                continue;
            }
            let name = loop {
                let candidate = format!("V{next}");
                next += 1;
                if !taken.contains(&candidate) {
                    break candidate;
                }
            };
            taken.insert(name.clone());
            names.insert(v.id, name);
        }
        Namer { names }
    }

    fn name(&self, v: &Var) -> &str {
        &self.names[&v.id]
    }
}

fn atom_needs_quotes(a: &str) -> bool {
    if a == NIL {
        return false;
    }
    let mut chars = a.chars();
    match chars.next() {
        Some(c) if c.is_lowercase() => !chars.all(|c| c.is_alphanumeric() || c == '_'),
        _ => true,
    }
}

fn write_atom(out: &mut String, a: &str) {
    if atom_needs_quotes(a) {
        out.push('\'');
        for c in a.chars() {
            match c {
                '\'' => out.push_str("\\'"),
                '\\' => out.push_str("\\\\"),
                '\n' => out.push_str("\\n"),
                c => out.push(c),
            }
        }
        out.push('\'');
    } else {
        out.push_str(a);
    }
}

fn is_infix(t: &Term) -> Option<(&str, &Term, &Term)> {
    match t {
        Term::Compound(f, args) if args.len() == 2 && (&**f == "=" || &**f == "\\=") => Some((f, &args[0], &args[1])),
        _ => None,
    }
}

fn write_term(out: &mut String, t: &Term, namer: &Namer, nested: bool) {
    match t {
        Term::Var(v) => out.push_str(namer.name(v)),
        Term::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Term::Atom(a) => write_atom(out, a),
        Term::Compound(f, args) if &**f == CONS && args.len() == 2 => {
            let (items, tail) = t.list_parts();
            out.push('[');
            for (i, it) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_term(out, it, namer, true);
            }
            if !tail.is_atom(NIL) {
                out.push('|');
                write_term(out, tail, namer, true);
            }
            out.push(']');
        }
        Term::Compound(..) if is_infix(t).is_some() => {
            let (op, l, r) = is_infix(t).expect("checked");
            if nested {
                out.push('(');
            }
            write_term(out, l, namer, true);
            let _ = write!(out, " {op} ");
            write_term(out, r, namer, true);
            if nested {
                out.push(')');
            }
        }
        Term::Compound(f, args) => {
            write_atom(out, f);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_term(out, a, namer, true);
            }
            out.push(')');
        }
    }
}

pub fn render_term(t: &Term) -> String {
    let namer = Namer::new(&[t]);
    let mut out = String::new();
    write_term(&mut out, t, &namer, false);
    out
}

/// Renders `G1, ..., Gn` with one naming scope. An empty conjunction is `true`.
pub fn render_conj(goals: &[Term]) -> String {
    render_group(goals, &[]).0
}

/// Renders several groups of terms sharing one naming scope: the
/// conjunction `goals` followed by each extra term separately.
pub fn render_group(goals: &[Term], extra: &[Term]) -> (String, Vec<String>) {
    let refs: Vec<&Term> = goals.iter().chain(extra.iter()).collect();
    let namer = Namer::new(&refs);
    let conj = if goals.is_empty() {
        "true".to_owned()
    } else {
        goals
            .iter()
            .map(|g| {
                let mut s = String::new();
                write_term(&mut s, g, &namer, false);
                s
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    let extras = extra
        .iter()
        .map(|t| {
            let mut s = String::new();
            write_term(&mut s, t, &namer, false);
            s
        })
        .collect();
    (conj, extras)
}

pub fn render_assertion(kind: AssertionKind, goals: &[Term]) -> String {
    format!("{} {}.", kind.token(), render_conj(goals))
}

/// Severity tag of a machine-written line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    DefMissing,
    RefMismatch,
    CodeFail,
    CodeWrongAnswer,
    Nontermination,
    FairMismatch,
    Inconclusive,
    Suggestion,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeedbackLine {
    pub severity: Severity,
    pub text: String,
    pub anchor_line: usize,
}

impl FeedbackLine {
    pub fn prefix(&self) -> &'static str {
        match self.severity {
            Severity::Suggestion => "%@@ ",
            _ => "%@ ",
        }
    }

    /// The line as written into a file, without terminator.
    pub fn render(&self) -> String {
        format!("{}{}", self.prefix(), self.text.replace('\n', " "))
    }
}

/// A suggested assertion plus an optional comment note, each on its own
/// `%@@ ` line. Deleting the prefix turns the second line into a real
/// assertion.
pub fn render_suggestion(
    kind: AssertionKind,
    equations: &[(Var, Term)],
    goals: &[Term],
    note: &str,
    anchor_line: usize,
) -> Vec<FeedbackLine> {
    let mut out = Vec::new();
    if !note.is_empty() {
        out.push(FeedbackLine { severity: Severity::Suggestion, text: format!("% {note}"), anchor_line });
    }
    let mut all: Vec<Term> =
        equations.iter().map(|(v, t)| Term::compound("=", vec![Term::Var(v.clone()), t.clone()])).collect();
    all.extend(goals.iter().cloned());
    out.push(FeedbackLine { severity: Severity::Suggestion, text: render_assertion(kind, &all), anchor_line });
    out
}
