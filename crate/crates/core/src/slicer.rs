//! Program slices that localize an error: generalization by goal deletion
//! for unexpected failure, specialization by `false` insertion for
//! unexpected success and for non-termination.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::diagnosis::{generalize, Stage};
use crate::engine::{Budget, Engine, EngineError, Outcome, Termination, Want};
use crate::parser::AssertionKind;
use crate::reference::Registry;
use crate::render::{render_assertion, render_group};
use crate::term::{Clause, Program, Term};
use crate::unify::{ground_with_any_all, Substitution};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ClauseMark {
    Removed,
    /// `deleted` are generalized away; `false_at = Some(k)` inserts `false`
    /// before goal `k` and hides the goals from `k` on.
    Kept { deleted: BTreeSet<usize>, false_at: Option<usize> },
}

impl ClauseMark {
    pub fn kept() -> ClauseMark {
        ClauseMark::Kept { deleted: BTreeSet::new(), false_at: None }
    }

    fn is_removed(&self) -> bool {
        matches!(self, ClauseMark::Removed | ClauseMark::Kept { false_at: Some(0), .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Part {
    Head,
    Goal(usize),
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Part::Head => write!(f, "head"),
            Part::Goal(i) => write!(f, "goal {i}"),
        }
    }
}

/// Clause index and part.
pub type LineSet = BTreeSet<(usize, Part)>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramFragment {
    pub base: Program,
    pub marks: Vec<ClauseMark>,
    pub query_kind: AssertionKind,
    pub query: Vec<Term>,
    /// Set when some check gave up on its budget.
    pub inconclusive: bool,
}

impl ProgramFragment {
    pub fn unmodified(base: &Program, query_kind: AssertionKind, query: &[Term]) -> ProgramFragment {
        ProgramFragment {
            base: base.clone(),
            marks: vec![ClauseMark::kept(); base.len()],
            query_kind,
            query: query.to_vec(),
            inconclusive: false,
        }
    }

    /// The program this fragment stands for. Removed clauses keep their
    /// head, with body `false`, so their predicate stays defined.
    pub fn compile(&self) -> Program {
        let clauses = self
            .base
            .clauses()
            .iter()
            .zip(&self.marks)
            .map(|(c, m)| {
                let body = match m {
                    ClauseMark::Removed => vec![Term::atom("false")],
                    ClauseMark::Kept { deleted, false_at } => {
                        let end = false_at.unwrap_or(c.body.len()).min(c.body.len());
                        let mut body: Vec<Term> =
                            (0..end).filter(|i| !deleted.contains(i)).map(|i| c.body[i].clone()).collect();
                        if false_at.is_some() {
                            body.push(Term::atom("false"));
                        }
                        body
                    }
                };
                Clause { head: c.head.clone(), body, line: c.line, goal_lines: c.goal_lines.clone() }
            })
            .collect();
        Program::new(clauses)
    }

    pub fn active_parts(&self) -> LineSet {
        let mut out = LineSet::new();
        for (ci, (c, m)) in self.base.clauses().iter().zip(&self.marks).enumerate() {
            if m.is_removed() {
                continue;
            }
            out.insert((ci, Part::Head));
            if let ClauseMark::Kept { deleted, false_at } = m {
                for gi in 0..c.body.len() {
                    if !deleted.contains(&gi) && false_at.is_none_or(|k| gi < k) {
                        out.insert((ci, Part::Goal(gi)));
                    }
                }
            }
        }
        out
    }
}

/// Every head and every goal of `program`.
pub fn all_parts(program: &Program) -> LineSet {
    ProgramFragment::unmodified(program, AssertionKind::Pos, &[]).active_parts()
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SliceError {
    #[error("precondition not met: {0}")]
    Precondition(&'static str),
    #[error("no evidence within the budget")]
    Inconclusive,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("fragments are over different programs")]
    MismatchedBase,
}

fn fails_finitely(p: &Program, goals: &[Term], budget: &Budget) -> bool {
    matches!(Engine::new(p).unknown_fails(true).solve_dfs(goals, budget, Want::First), Ok(Outcome::FiniteFailure { .. }))
}

fn succeeds(p: &Program, goals: &[Term], budget: &Budget) -> bool {
    matches!(Engine::new(p).unknown_fails(true).solve_dfs(goals, budget, Want::First), Ok(Outcome::Solutions { .. }))
}

fn loops(p: &Program, goals: &[Term], budget: &Budget) -> bool {
    matches!(
        Engine::new(p).unknown_fails(true).check_universal_termination(goals, budget),
        Ok(Termination::NonTerminating { .. })
    )
}

/// Deletes as many goals as possible while the query still fails.
pub fn slice_insufficiency(program: &Program, goals: &[Term], budget: &Budget) -> Result<ProgramFragment, SliceError> {
    if !fails_finitely(program, goals, budget) {
        return Err(SliceError::Precondition("the query must fail finitely"));
    }
    let mut frag = ProgramFragment::unmodified(program, AssertionKind::Pos, goals);
    loop {
        let mut changed = false;
        for ci in 0..program.len() {
            for gi in 0..program.clauses()[ci].body.len() {
                let ClauseMark::Kept { deleted, .. } = &frag.marks[ci] else { continue };
                if deleted.contains(&gi) {
                    continue;
                }
                let mut trial = frag.clone();
                if let ClauseMark::Kept { deleted, .. } = &mut trial.marks[ci] {
                    deleted.insert(gi);
                }
                if fails_finitely(&trial.compile(), goals, budget) {
                    frag = trial;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(frag);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncorrectnessSlice {
    /// Generalizations of the witness that the program still proves and
    /// the reference refutes.
    pub stages: Vec<Stage>,
    /// The goal the fragment must still derive.
    pub target: Vec<Term>,
    pub fragment: ProgramFragment,
}

/// Removes clauses, then hides clause suffixes, as long as the most
/// general incorrect goal still succeeds.
pub fn slice_incorrectness(
    program: &Program,
    goals: &[Term],
    witness: &Substitution,
    registry: &Registry,
    budget: &Budget,
) -> Result<IncorrectnessSlice, SliceError> {
    let (instance, _) = ground_with_any_all(&witness.apply_all(goals), 0);
    if !succeeds(program, &instance, budget) {
        return Err(SliceError::Precondition("the witness must succeed"));
    }
    if !registry.reference_verdict(&instance, budget).is_false() {
        return Err(SliceError::Precondition("the reference must refute the witness"));
    }
    // the reference runs on a small budget, so it filters first
    let mut verify =
        |c: &[Term]| registry.reference_verdict(c, budget).is_false() && succeeds(program, c, budget);
    let stages = generalize(&instance, registry, &mut verify);
    let target = stages.last().map(|s| s.goals.clone()).unwrap_or_else(|| instance.clone());
    let mut frag = ProgramFragment::unmodified(program, AssertionKind::Neg, &target);
    // last clause first, so that earlier clauses (typically the base
    // cases) are the ones that stay
    for ci in (0..program.len()).rev() {
        let mut trial = frag.clone();
        trial.marks[ci] = ClauseMark::Removed;
        if succeeds(&trial.compile(), &target, budget) {
            frag = trial;
        }
    }
    for ci in 0..program.len() {
        if frag.marks[ci].is_removed() {
            continue;
        }
        for k in 1..program.clauses()[ci].body.len() {
            let mut trial = frag.clone();
            if let ClauseMark::Kept { false_at, .. } = &mut trial.marks[ci] {
                *false_at = Some(k);
            }
            if succeeds(&trial.compile(), &target, budget) {
                frag = trial;
                break;
            }
        }
    }
    Ok(IncorrectnessSlice { stages, target, fragment: frag })
}

/// The query `goals, false`, without doubling a trailing `false`.
pub fn failing_query(goals: &[Term]) -> Vec<Term> {
    let mut q = goals.to_vec();
    if !q.last().is_some_and(|g| g.is_atom("false")) {
        q.push(Term::atom("false"));
    }
    q
}

/// Removes clauses, then inserts `false` as early as possible, while the
/// query keeps a loop certificate.
pub fn slice_nontermination(program: &Program, goals: &[Term], budget: &Budget) -> Result<ProgramFragment, SliceError> {
    let query = failing_query(goals);
    match Engine::new(program).unknown_fails(true).check_universal_termination(&query, budget)? {
        Termination::NonTerminating { .. } => {}
        Termination::Unknown { .. } => return Err(SliceError::Inconclusive),
        Termination::Terminates { .. } => return Err(SliceError::Precondition("the query must not terminate")),
    }
    let mut frag = ProgramFragment::unmodified(program, AssertionKind::Neg, &query);
    for ci in 0..program.len() {
        let mut trial = frag.clone();
        trial.marks[ci] = ClauseMark::Removed;
        if loops(&trial.compile(), &query, budget) {
            frag = trial;
        }
    }
    for ci in 0..program.len() {
        if frag.marks[ci].is_removed() {
            continue;
        }
        for k in (1..=program.clauses()[ci].body.len()).rev() {
            let mut trial = frag.clone();
            if let ClauseMark::Kept { false_at, .. } = &mut trial.marks[ci] {
                *false_at = Some(k);
            }
            if !loops(&trial.compile(), &query, budget) {
                break;
            }
            frag = trial;
        }
    }
    Ok(frag)
}

/// Parts active in every fragment.
pub fn intersect_fragments(fragments: &[ProgramFragment]) -> Result<LineSet, SliceError> {
    let Some(first) = fragments.first() else { return Ok(LineSet::new()) };
    if fragments.iter().any(|f| f.base != first.base) {
        return Err(SliceError::MismatchedBase);
    }
    Ok(fragments.iter().skip(1).fold(first.active_parts(), |acc, f| acc.intersection(&f.active_parts()).cloned().collect()))
}

fn strike(s: &str) -> String {
    format!("~~{s}~~")
}

/// The query, then each clause on one line: deleted goals as
/// `* ~~goal~~`, an inserted `false` followed by struck hidden goals, and
/// removed clauses struck as a whole.
pub fn render_fragment(f: &ProgramFragment) -> String {
    let mut out = render_assertion(f.query_kind, &f.query);
    out.push('\n');
    for (c, m) in f.base.clauses().iter().zip(&f.marks) {
        let mut terms = vec![c.head.clone()];
        terms.extend(c.body.iter().cloned());
        let (_, parts) = render_group(&[], &terms);
        let (head, body) = parts.split_first().expect("head is present");
        let line = match m {
            ClauseMark::Removed | ClauseMark::Kept { false_at: Some(0), .. } => {
                let mut goals = vec!["false".to_owned()];
                goals.extend(body.iter().cloned());
                strike(&format!("{head} :- {}.", goals.join(", ")))
            }
            ClauseMark::Kept { deleted, false_at } => {
                let mut goals = Vec::new();
                for (gi, g) in body.iter().enumerate() {
                    if *false_at == Some(gi) {
                        goals.push("false".to_owned());
                    }
                    if false_at.is_some_and(|k| gi >= k) {
                        goals.push(strike(g));
                    } else if deleted.contains(&gi) {
                        goals.push(format!("* {}", strike(g)));
                    } else {
                        goals.push(g.clone());
                    }
                }
                if *false_at == Some(body.len()) {
                    goals.push("false".to_owned());
                }
                if goals.is_empty() {
                    format!("{head}.")
                } else {
                    format!("{head} :- {}.", goals.join(", "))
                }
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}
