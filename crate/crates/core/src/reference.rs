//! Hidden reference implementations and the three-valued verdict that
//! assertions are checked against.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::chr::{chr_verdict, ChrProgram};
use crate::engine::{is_builtin, Answer, Budget, Engine, EngineError, Outcome, Want};
use crate::parser::{parse_file, parse_implications, ParseError};
use crate::term::{vars_of_all, PredKey, Program, Term, Var, VarAllocator};
use crate::unify::{dif_status, ground_with_any_all, instantiate, match_term, Bindings, DifStatus, Substitution};

const LISTS: &str = include_str!("../refs/lists.ref.pl");
const FAMILY: &str = include_str!("../refs/family.ref.chr");
const LIST_IMPLICATIONS: &str = include_str!("../refs/lists.imp");

/// Budget the shipped list references run under. Small enough that the
/// deliberately looping cases give up quickly.
pub const BUILTIN_BUDGET: Budget = Budget { max_steps: 2000, max_depth: 12, per_depth_steps: 2000 };

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Unspecified {
    Budget,
    Pending,
    UnknownPredicate(PredKey),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// `answer` is the raw answer; `grounding` binds its remaining free
    /// variables to distinct fresh constants, which discharges every
    /// disequation the answer carried.
    True { answer: Substitution, grounding: Vec<(Var, Term)> },
    False,
    Unspecified(Unspecified),
}

impl Verdict {
    pub fn is_true(&self) -> bool {
        matches!(self, Verdict::True { .. })
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Verdict::False)
    }

    pub fn is_decisive(&self) -> bool {
        !matches!(self, Verdict::Unspecified(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImplicationRule {
    pub lhs: Term,
    pub rhs: Vec<Term>,
}

#[derive(Clone, Debug)]
pub enum ReferenceBody {
    Clauses,
    Chr(Arc<ChrProgram>),
}

#[derive(Clone, Debug)]
pub struct ReferenceEntry {
    pub key: PredKey,
    pub body: ReferenceBody,
    pub budget: Option<Budget>,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{}:{}: {}", .source.line, .source.col, .source.message)]
    Parse { path: PathBuf, source: ParseError },
}

#[derive(Clone, Debug, Default)]
pub struct Registry {
    entries: BTreeMap<PredKey, ReferenceEntry>,
    program: Program,
    chr: Vec<Arc<ChrProgram>>,
    implications: Vec<ImplicationRule>,
}

impl Registry {
    pub fn empty() -> Registry {
        Registry::default()
    }

    /// The shipped references: list predicates, the family constraints and
    /// the list implication.
    pub fn builtin() -> Registry {
        let mut r = Registry::empty();
        r.add_clauses(LISTS, Some(BUILTIN_BUDGET)).expect("shipped clauses parse");
        r.add_chr(FAMILY).expect("shipped rules parse");
        r.add_implications(LIST_IMPLICATIONS).expect("shipped implications parse");
        r
    }

    pub fn add_clauses(&mut self, text: &str, budget: Option<Budget>) -> Result<(), ParseError> {
        let file = parse_file(text)?;
        let extra = Program::new(file.clauses());
        for key in extra.predicates() {
            self.entries.entry(key.clone()).or_insert(ReferenceEntry { key: key.clone(), body: ReferenceBody::Clauses, budget });
        }
        self.program.extend(&extra);
        Ok(())
    }

    pub fn add_chr(&mut self, text: &str) -> Result<(), ParseError> {
        let chr = Arc::new(ChrProgram::parse(text)?);
        for key in chr.constraint_keys() {
            self.entries.insert(key.clone(), ReferenceEntry { key, body: ReferenceBody::Chr(chr.clone()), budget: None });
        }
        self.chr.push(chr);
        Ok(())
    }

    pub fn add_implications(&mut self, text: &str) -> Result<(), ParseError> {
        self.implications.extend(parse_implications(text)?.into_iter().map(|(lhs, rhs)| ImplicationRule { lhs, rhs }));
        Ok(())
    }

    /// Loads `*.ref.pl`, `*.ref.chr` and `*.imp` files from `dir`, in file
    /// name order.
    pub fn load_dir(&mut self, dir: &Path) -> Result<(), LoadError> {
        fn io(path: &Path) -> impl FnOnce(std::io::Error) -> LoadError + '_ {
            move |source| LoadError::Io { path: path.to_owned(), source }
        }
        let mut paths: Vec<PathBuf> =
            std::fs::read_dir(dir).map_err(io(dir))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
            let kind = if name.ends_with(".ref.pl") {
                0
            } else if name.ends_with(".ref.chr") {
                1
            } else if name.ends_with(".imp") {
                2
            } else {
                continue;
            };
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            let res = match kind {
                0 => self.add_clauses(&text, None),
                1 => self.add_chr(&text),
                _ => self.add_implications(&text),
            };
            res.map_err(|source| LoadError::Parse { path: path.clone(), source })?;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn defines(&self, key: &PredKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn entry(&self, key: &PredKey) -> Option<&ReferenceEntry> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &PredKey> {
        self.entries.keys()
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn implications(&self) -> &[ImplicationRule] {
        &self.implications
    }

    /// Whether every goal can be given a verdict.
    pub fn covers(&self, goals: &[Term]) -> bool {
        goals.iter().all(|g| g.key().is_some_and(|k| is_builtin(&k) || self.defines(&k)))
    }

    fn budget_for(&self, goals: &[Term], budget: &Budget) -> Budget {
        let mut b = *budget;
        for o in goals.iter().filter_map(|g| g.key()).filter_map(|k| self.entries.get(&k)?.budget) {
            b.max_steps = b.max_steps.min(o.max_steps);
            b.max_depth = b.max_depth.min(o.max_depth);
            b.per_depth_steps = b.per_depth_steps.min(o.per_depth_steps);
        }
        b
    }

    pub fn reference_verdict(&self, goals: &[Term], budget: &Budget) -> Verdict {
        for g in goals {
            match g.key() {
                Some(k) if is_builtin(&k) || self.defines(&k) => {}
                Some(k) => return Verdict::Unspecified(Unspecified::UnknownPredicate(k)),
                None => return Verdict::Unspecified(Unspecified::Pending),
            }
        }
        let budget = self.budget_for(goals, budget);
        let chr = goals.iter().find_map(|g| match &self.entries.get(&g.key()?)?.body {
            ReferenceBody::Chr(c) => Some(c.clone()),
            ReferenceBody::Clauses => None,
        });
        let engine = Engine::new(&self.program);
        let result = match chr {
            Some(c) => chr_verdict(&c, &self.program, goals, &budget),
            None => clause_verdict(engine, goals, &budget),
        };
        result.unwrap_or_else(|EngineError::UnknownPredicate(k)| Verdict::Unspecified(Unspecified::UnknownPredicate(k)))
    }

    /// Right-hand sides of the implication rules whose left-hand side
    /// matches `goal`. Matching is one-way so that the goal is never
    /// instantiated.
    pub fn lookup_implications(&self, goal: &Term) -> Vec<Vec<Term>> {
        self.lookup_implications_with(goal, &mut VarAllocator::above(std::slice::from_ref(goal)))
    }

    /// As [`Registry::lookup_implications`], drawing fresh variables from `alloc`.
    pub fn lookup_implications_with(&self, goal: &Term, alloc: &mut VarAllocator) -> Vec<Vec<Term>> {
        let mut out = Vec::new();
        for rule in &self.implications {
            let mut binds = HashMap::new();
            if match_term(&rule.lhs, goal, &mut binds) {
                out.push(rule.rhs.iter().map(|t| instantiate(t, &mut binds, alloc)).collect());
            }
        }
        out
    }
}

/// Grounds the free variables of an answer with `any0`, `any1`, ... and
/// returns the equations if every pending disequation then holds.
pub fn ground_answer(goals: &[Term], answer: &Answer) -> Option<Vec<(Var, Term)>> {
    let mut terms = answer.subst.apply_all(goals);
    let query_vars = vars_of_all(goals);
    terms.extend(query_vars.iter().map(|v| answer.subst.apply(&Term::Var(v.clone()))));
    for (l, r) in answer.difs.pairs() {
        terms.push(l.clone());
        terms.push(r.clone());
    }
    let (_, equations) = ground_with_any_all(&terms, 0);
    let grounding: Substitution = {
        let mut s = Substitution::new();
        for (v, t) in &equations {
            s.insert(v.clone(), t.clone());
        }
        s
    };
    let mut b = Bindings::new();
    let ok = answer
        .difs
        .pairs()
        .iter()
        .all(|(l, r)| dif_status(&mut b, &grounding.apply(l), &grounding.apply(r)) == DifStatus::Entailed);
    ok.then_some(equations)
}

fn first_witness(goals: &[Term], answers: &[Answer]) -> Option<Verdict> {
    answers.iter().find_map(|a| {
        if a.is_unconditional() {
            return Some(Verdict::True { answer: a.subst.clone(), grounding: Vec::new() });
        }
        ground_answer(goals, a).map(|grounding| Verdict::True { answer: a.subst.clone(), grounding })
    })
}

fn clause_verdict(engine: Engine<'_>, goals: &[Term], budget: &Budget) -> Result<Verdict, EngineError> {
    match engine.solve_dfs(goals, budget, Want::All)? {
        Outcome::FiniteFailure { .. } => Ok(Verdict::False),
        Outcome::Solutions { answers, exhausted, .. } => Ok(first_witness(goals, &answers).unwrap_or(if exhausted {
            Verdict::Unspecified(Unspecified::Pending)
        } else {
            Verdict::Unspecified(Unspecified::Budget)
        })),
        Outcome::BudgetExhausted { .. } => {
            let fair = engine.solve_fair(goals, budget)?;
            Ok(match &fair {
                Outcome::Solutions { answers, .. } => first_witness(goals, answers),
                Outcome::FiniteFailure { .. } => Some(Verdict::False),
                Outcome::BudgetExhausted { .. } => None,
            }
            .unwrap_or(Verdict::Unspecified(Unspecified::Budget)))
        }
    }
}
