//! Terms, variables and clause databases.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct VarId(pub u32);

/// A logic variable. Identity is the id alone; the name is only kept for
/// display.
#[derive(Clone, Debug)]
pub struct Var {
    pub id: VarId,
    pub name: Option<Arc<str>>,
}

impl Var {
    pub fn new(id: u32) -> Var {
        Var { id: VarId(id), name: None }
    }
}

impl PartialEq for Var {
    fn eq(&self, other: &Var) -> bool {
        self.id == other.id
    }
}

impl Eq for Var {}

impl Hash for Var {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.id.hash(state)
    }
}

impl PartialOrd for Var {
    fn partial_cmp(&self, other: &Var) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Var {
    fn cmp(&self, other: &Var) -> std::cmp::Ordering {
        self.id.cmp(&other.id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Var),
    Atom(Arc<str>),
    Int(i64),
    /// Functor and arguments; never built with zero arguments.
    Compound(Arc<str>, Arc<[Term]>),
}

pub const NIL: &str = "[]";
pub const CONS: &str = ".";

impl Term {
    pub fn atom(name: &str) -> Term {
        Term::Atom(name.into())
    }

    /// Builds `name(args...)`, collapsing to an atom when `args` is empty.
    pub fn compound(name: &str, args: Vec<Term>) -> Term {
        if args.is_empty() {
            Term::atom(name)
        } else {
            Term::Compound(name.into(), args.into())
        }
    }

    pub fn var(v: Var) -> Term {
        Term::Var(v)
    }

    pub fn nil() -> Term {
        Term::atom(NIL)
    }

    pub fn cons(head: Term, tail: Term) -> Term {
        Term::Compound(CONS.into(), vec![head, tail].into())
    }

    pub fn list(items: Vec<Term>, tail: Term) -> Term {
        items.into_iter().rev().fold(tail, |acc, t| Term::cons(t, acc))
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn is_atom(&self, name: &str) -> bool {
        matches!(self, Term::Atom(a) if &**a == name)
    }

    pub fn is_callable(&self) -> bool {
        matches!(self, Term::Atom(_) | Term::Compound(..))
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Compound(_, args) => args,
            _ => &[],
        }
    }

    pub fn key(&self) -> Option<PredKey> {
        match self {
            Term::Atom(name) => Some(PredKey { name: name.clone(), arity: 0 }),
            Term::Compound(name, args) => Some(PredKey { name: name.clone(), arity: args.len() }),
            _ => None,
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Atom(_) | Term::Int(_) => true,
            Term::Compound(_, args) => args.iter().all(Term::is_ground),
        }
    }

    /// Number of nodes in the term tree.
    pub fn size(&self) -> usize {
        match self {
            Term::Compound(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
            _ => 1,
        }
    }

    pub fn occurs(&self, id: VarId) -> bool {
        match self {
            Term::Var(v) => v.id == id,
            Term::Compound(_, args) => args.iter().any(|a| a.occurs(id)),
            _ => false,
        }
    }

    /// Distinct variables in left-to-right order of first occurrence.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        collect_vars(self, &mut out);
        out
    }

    pub fn max_var_id(&self) -> Option<u32> {
        match self {
            Term::Var(v) => Some(v.id.0),
            Term::Compound(_, args) => args.iter().filter_map(Term::max_var_id).max(),
            _ => None,
        }
    }

    /// Rewrites every variable through `f`.
    pub fn map_vars(&self, f: &mut impl FnMut(&Var) -> Term) -> Term {
        match self {
            Term::Var(v) => f(v),
            Term::Compound(name, args) => {
                Term::Compound(name.clone(), args.iter().map(|a| a.map_vars(f)).collect())
            }
            other => other.clone(),
        }
    }

    /// Splits a list into its items and its tail (`[]` for proper lists).
    pub fn list_parts(&self) -> (Vec<&Term>, &Term) {
        let mut items = Vec::new();
        let mut cur = self;
        while let Term::Compound(f, args) = cur {
            if &**f != CONS || args.len() != 2 {
                break;
            }
            items.push(&args[0]);
            cur = &args[1];
        }
        (items, cur)
    }
}

pub fn vars_of_all(terms: &[Term]) -> Vec<Var> {
    let mut out = Vec::new();
    for t in terms {
        collect_vars(t, &mut out);
    }
    out
}

fn collect_vars(t: &Term, out: &mut Vec<Var>) {
    match t {
        Term::Var(v) => {
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
        Term::Compound(_, args) => args.iter().for_each(|a| collect_vars(a, out)),
        _ => {}
    }
}

pub fn max_var_id_all(terms: &[Term]) -> Option<u32> {
    terms.iter().filter_map(Term::max_var_id).max()
}

/// Predicate indicator `name/arity`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PredKey {
    pub name: Arc<str>,
    pub arity: usize,
}

impl PredKey {
    pub fn new(name: &str, arity: usize) -> PredKey {
        PredKey { name: name.into(), arity }
    }
}

impl fmt::Display for PredKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

/// Hands out fresh variable ids. Always passed explicitly.
#[derive(Clone, Debug, Default)]
pub struct VarAllocator {
    next: u32,
}

impl VarAllocator {
    pub fn new() -> VarAllocator {
        VarAllocator { next: 0 }
    }

    pub fn starting_at(next: u32) -> VarAllocator {
        VarAllocator { next }
    }

    /// An allocator whose ids do not clash with any variable in `terms`.
    pub fn above(terms: &[Term]) -> VarAllocator {
        VarAllocator::starting_at(max_var_id_all(terms).map_or(0, |m| m + 1))
    }

    pub fn bump_above(&mut self, terms: &[Term]) {
        if let Some(m) = max_var_id_all(terms) {
            self.next = self.next.max(m + 1);
        }
    }

    pub fn fresh(&mut self) -> Var {
        let v = Var::new(self.next);
        self.next += 1;
        v
    }

    pub fn fresh_named(&mut self, name: &str) -> Var {
        let mut v = self.fresh();
        v.name = Some(name.into());
        v
    }

    pub fn peek(&self) -> u32 {
        self.next
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub head: Term,
    pub body: Vec<Term>,
    /// 1-based line of the head.
    pub line: usize,
    /// 1-based line of each body goal.
    pub goal_lines: Vec<usize>,
}

impl Clause {
    pub fn new(head: Term, body: Vec<Term>) -> Clause {
        let n = body.len();
        Clause { head, body, line: 0, goal_lines: vec![0; n] }
    }

    pub fn key(&self) -> PredKey {
        self.head.key().expect("clause head is callable")
    }

    pub fn terms(&self) -> Vec<Term> {
        let mut v = vec![self.head.clone()];
        v.extend(self.body.iter().cloned());
        v
    }
}

/// Replaces every variable of the clause with a fresh one, preserving sharing.
pub fn rename_apart(clause: &Clause, alloc: &mut VarAllocator) -> Clause {
    let mut map: HashMap<VarId, Term> = HashMap::new();
    let mut rename = |v: &Var| map.entry(v.id).or_insert_with(|| Term::Var(alloc.fresh())).clone();
    Clause {
        head: clause.head.map_vars(&mut rename),
        body: clause.body.iter().map(|g| g.map_vars(&mut rename)).collect(),
        line: clause.line,
        goal_lines: clause.goal_lines.clone(),
    }
}

/// Clause database in source order with a predicate index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    clauses: Vec<Clause>,
    index: BTreeMap<PredKey, Vec<usize>>,
}

impl Program {
    pub fn new(clauses: Vec<Clause>) -> Program {
        let mut index: BTreeMap<PredKey, Vec<usize>> = BTreeMap::new();
        for (i, c) in clauses.iter().enumerate() {
            index.entry(c.key()).or_default().push(i);
        }
        Program { clauses, index }
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn clauses_for(&self, key: &PredKey) -> Option<&[usize]> {
        self.index.get(key).map(|v| v.as_slice())
    }

    pub fn defines(&self, key: &PredKey) -> bool {
        self.index.contains_key(key)
    }

    pub fn predicates(&self) -> impl Iterator<Item = &PredKey> {
        self.index.keys()
    }

    /// Appends the clauses of `other`, keeping order.
    pub fn extend(&mut self, other: &Program) {
        let mut all = std::mem::take(&mut self.clauses);
        all.extend(other.clauses.iter().cloned());
        *self = Program::new(all);
    }

    /// Number of program lines: one per head plus one per body goal.
    pub fn line_count(&self) -> usize {
        self.clauses.iter().map(|c| 1 + c.body.len()).sum()
    }
}
