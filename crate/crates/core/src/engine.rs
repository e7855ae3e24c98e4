//! SLD resolution: depth-first search, iterative deepening, a variant
//! loop-checking prover and the universal-termination check.
//!
//! The selection rule is leftmost goal, clauses are tried in source order.
//! Every head-unification attempt costs one step. Builtins (`true`,
//! `false`, `fail`, `=/2`, `dif/2`) cost nothing.

use std::rc::Rc;

use thiserror::Error;

use crate::term::{vars_of_all, PredKey, Program, Term, VarAllocator};
use crate::unify::{canonical, variant_of, Bindings, DifMark, DifStore, DifTrail, Substitution};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    /// Resolution attempts allowed for one run.
    pub max_steps: u64,
    /// Deepest bound tried by iterative deepening.
    pub max_depth: u32,
    /// Resolution attempts allowed per deepening pass.
    pub per_depth_steps: u64,
}

impl Default for Budget {
    fn default() -> Budget {
        Budget { max_steps: 100_000, max_depth: 64, per_depth_steps: 50_000 }
    }
}

impl Budget {
    pub fn is_valid(&self) -> bool {
        self.max_steps > 0 && self.max_depth > 0 && self.per_depth_steps > 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("unknown predicate {0}")]
    UnknownPredicate(PredKey),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Want {
    First,
    All,
}

/// One answer: bindings of the query variables and the disequations still
/// pending on them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Answer {
    pub subst: Substitution,
    pub difs: DifStore,
    /// Clause resolutions on the branch that produced the answer.
    pub depth: u32,
}

impl Answer {
    pub fn is_unconditional(&self) -> bool {
        self.difs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Solutions { answers: Vec<Answer>, exhausted: bool, steps: u64 },
    FiniteFailure { steps: u64 },
    BudgetExhausted { steps: u64 },
}

impl Outcome {
    pub fn steps(&self) -> u64 {
        match self {
            Outcome::Solutions { steps, .. } | Outcome::FiniteFailure { steps } | Outcome::BudgetExhausted { steps } => *steps,
        }
    }

    pub fn first_answer(&self) -> Option<&Answer> {
        match self {
            Outcome::Solutions { answers, .. } => answers.first(),
            _ => None,
        }
    }
}

/// Derivation path from the root to a selected goal that is a variant of
/// one of its ancestors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopCertificate {
    pub goals: Vec<Term>,
    pub ancestor_index: usize,
}

impl LoopCertificate {
    pub fn repeated(&self) -> &Term {
        self.goals.last().expect("certificate is never empty")
    }

    pub fn is_valid(&self) -> bool {
        self.goals.len() >= 2
            && self.ancestor_index < self.goals.len() - 1
            && variant_of(&self.goals[self.ancestor_index], self.repeated())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoopProof {
    Proven { pruned: u64, steps: u64 },
    Disproven(Answer),
    Unknown { steps: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Termination {
    /// The whole tree was explored. `solutions` counts the answers seen.
    Terminates { solutions: usize },
    NonTerminating { certificate: LoopCertificate, solutions: usize },
    Unknown { solutions: usize },
}

impl Termination {
    pub fn solutions(&self) -> usize {
        match self {
            Termination::Terminates { solutions }
            | Termination::NonTerminating { solutions, .. }
            | Termination::Unknown { solutions } => *solutions,
        }
    }
}

pub fn is_builtin(key: &PredKey) -> bool {
    matches!((&*key.name, key.arity), ("true", 0) | ("false", 0) | ("fail", 0) | ("=", 2) | ("dif", 2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Dfs,
    DepthLimited(u32),
    /// Prune selected goals that are variants of an ancestor.
    LoopPrune,
    /// Stop at the first selected goal that is a variant of an ancestor.
    LoopDetect,
}

impl Mode {
    fn tracks_ancestors(self) -> bool {
        matches!(self, Mode::LoopPrune | Mode::LoopDetect)
    }
}

/// A goal as it stood when it was selected.
struct Ancestor {
    goal: Term,
    canon: Term,
    hash: u64,
    parent: Option<Rc<Ancestor>>,
}

fn hash_of(t: &Term) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    t.hash(&mut h);
    h.finish()
}

enum Goals {
    Nil,
    Cons { goal: Term, anc: Option<Rc<Ancestor>>, next: Rc<Goals> },
}

// Long chains are unlinked iteratively; recursive drops would overflow
// the stack on deep derivations.
impl Drop for Goals {
    fn drop(&mut self) {
        let Goals::Cons { next, .. } = self else { return };
        let mut cur = std::mem::replace(next, Rc::new(Goals::Nil));
        while let Ok(mut node) = Rc::try_unwrap(cur) {
            match &mut node {
                Goals::Cons { next, .. } => cur = std::mem::replace(next, Rc::new(Goals::Nil)),
                Goals::Nil => break,
            }
        }
    }
}

impl Drop for Ancestor {
    fn drop(&mut self) {
        let mut cur = self.parent.take();
        while let Some(rc) = cur {
            match Rc::try_unwrap(rc) {
                Ok(mut node) => cur = node.parent.take(),
                Err(_) => break,
            }
        }
    }
}

struct Choice {
    goals: Rc<Goals>,
    next_clause: usize,
    mark: usize,
    difs: DifMark,
    depth: u32,
}

#[derive(Default)]
struct RunResult {
    answers: Vec<Answer>,
    aborted: bool,
    cutoff: bool,
    /// Choice points remained when the run stopped early on a first answer.
    stopped_early: bool,
    steps: u64,
    pruned: u64,
    certificate: Option<LoopCertificate>,
}

struct Machine<'p> {
    engine: &'p Engine<'p>,
    mode: Mode,
    max_steps: u64,
    want: Want,
    query_vars: Vec<crate::term::Var>,
    alloc: VarAllocator,
    bindings: Bindings,
    difs: DifTrail,
    depth: u32,
    choices: Vec<Choice>,
    result: RunResult,
}

enum Step {
    Continue(Rc<Goals>),
    Fail,
    Stop,
}

impl<'p> Machine<'p> {
    fn new(engine: &'p Engine<'p>, goals: &[Term], mode: Mode, max_steps: u64, want: Want) -> Machine<'p> {
        Machine {
            engine,
            mode,
            max_steps,
            want,
            query_vars: vars_of_all(goals),
            alloc: VarAllocator::above(goals),
            bindings: Bindings::new(),
            difs: DifTrail::new(),
            depth: 0,
            choices: Vec::new(),
            result: RunResult::default(),
        }
    }

    fn push_goals(&self, goals: &[Term], anc: Option<Rc<Ancestor>>, next: Rc<Goals>) -> Rc<Goals> {
        goals.iter().rev().fold(next, |acc, g| Rc::new(Goals::Cons { goal: g.clone(), anc: anc.clone(), next: acc }))
    }

    fn run(mut self, goals: &[Term]) -> Result<RunResult, EngineError> {
        let mut current = Some(self.push_goals(goals, None, Rc::new(Goals::Nil)));
        loop {
            let goals = match current.take() {
                Some(g) => g,
                None => match self.backtrack()? {
                    Step::Continue(g) => g,
                    Step::Fail | Step::Stop => return Ok(self.result),
                },
            };
            match self.step(goals)? {
                Step::Continue(g) => current = Some(g),
                Step::Fail => {}
                Step::Stop => return Ok(self.result),
            }
        }
    }

    fn backtrack(&mut self) -> Result<Step, EngineError> {
        while let Some(choice) = self.choices.pop() {
            self.bindings.undo_to(choice.mark);
            self.difs.undo_to(choice.difs);
            self.depth = choice.depth;
            match self.try_clauses(choice.goals, choice.next_clause)? {
                Step::Fail => continue,
                other => return Ok(other),
            }
        }
        Ok(Step::Fail)
    }

    fn record_answer(&mut self) -> Step {
        let subst = Substitution::from_bindings(&self.bindings, &self.query_vars);
        let difs = self.difs.pending(&mut self.bindings);
        self.result.answers.push(Answer { subst, difs, depth: self.depth });
        match self.want {
            Want::First => {
                self.result.stopped_early = !self.choices.is_empty();
                Step::Stop
            }
            Want::All => Step::Fail,
        }
    }

    fn step(&mut self, goals: Rc<Goals>) -> Result<Step, EngineError> {
        let (goal, anc, next) = match &*goals {
            Goals::Nil => return Ok(self.record_answer()),
            Goals::Cons { goal, anc, next } => (goal, anc, next),
        };
        let g = self.bindings.walk(goal);
        let key = match g.key() {
            Some(k) => k,
            None => {
                // an unbound or numeric goal cannot be called; it fails
                return Ok(Step::Fail);
            }
        };
        if is_builtin(&key) {
            // builtins cost a step too, so the budget bounds the work done
            // between resolutions
            if self.result.steps >= self.max_steps {
                self.result.aborted = true;
                return Ok(Step::Stop);
            }
            self.result.steps += 1;
        }
        match (&*key.name, key.arity) {
            ("true", 0) => return Ok(Step::Continue(next.clone())),
            ("false", 0) | ("fail", 0) => return Ok(Step::Fail),
            ("=", 2) => {
                let args = g.args();
                let mark = self.bindings.mark();
                if self.bindings.unify(&args[0], &args[1]) && self.difs.wake(&mut self.bindings, mark) {
                    return Ok(Step::Continue(next.clone()));
                }
                return Ok(Step::Fail);
            }
            ("dif", 2) => {
                let args = g.args();
                if self.difs.push(&mut self.bindings, args[0].clone(), args[1].clone()) {
                    return Ok(Step::Continue(next.clone()));
                }
                return Ok(Step::Fail);
            }
            _ => {}
        }
        if let Mode::DepthLimited(limit) = self.mode {
            if self.depth >= limit {
                self.result.cutoff = true;
                return Ok(Step::Fail);
            }
        }
        if self.mode.tracks_ancestors() {
            let resolved = self.bindings.resolve(&g);
            let canon = canonical(&resolved);
            let hash = hash_of(&canon);
            let mut hit = None;
            let mut cur = anc.as_ref();
            let mut offset = 0usize;
            while let Some(a) = cur {
                if a.hash == hash && a.canon == canon {
                    hit = Some(offset);
                    break;
                }
                offset += 1;
                cur = a.parent.as_ref();
            }
            if let Some(offset) = hit {
                let mut chain = Vec::new();
                let mut cur = anc.as_ref();
                while let Some(a) = cur {
                    chain.push(a.goal.clone());
                    cur = a.parent.as_ref();
                }
                chain.reverse();
                let ancestor_index = chain.len() - 1 - offset;
                chain.push(resolved);
                let cert = LoopCertificate { goals: chain, ancestor_index };
                debug_assert!(cert.is_valid());
                match self.mode {
                    Mode::LoopDetect => {
                        self.result.certificate = Some(cert);
                        return Ok(Step::Stop);
                    }
                    _ => {
                        self.result.pruned += 1;
                        if self.result.certificate.is_none() {
                            self.result.certificate = Some(cert);
                        }
                        return Ok(Step::Fail);
                    }
                }
            }
        }
        if self.engine.program.clauses_for(&key).is_none() {
            if self.engine.unknown_fails {
                return Ok(Step::Fail);
            }
            return Err(EngineError::UnknownPredicate(key));
        }
        self.try_clauses(goals, 0)
    }

    /// Resolves the head goal of `goals` against clauses from `start` on.
    fn try_clauses(&mut self, goals: Rc<Goals>, start: usize) -> Result<Step, EngineError> {
        let (goal, anc, next) = match &*goals {
            Goals::Cons { goal, anc, next } => (goal, anc, next),
            Goals::Nil => unreachable!("choice points always hold a selected goal"),
        };
        let g = self.bindings.walk(goal);
        let key = g.key().expect("selected goal is callable");
        let positions = self.engine.program.clauses_for(&key).unwrap_or(&[]);
        let body_anc = if self.mode.tracks_ancestors() {
            let resolved = self.bindings.resolve(&g);
            let canon = canonical(&resolved);
            Some(Rc::new(Ancestor { hash: hash_of(&canon), canon, goal: resolved, parent: anc.clone() }))
        } else {
            None
        };
        for (offset, &ci) in positions.iter().enumerate().skip(start) {
            if self.result.steps >= self.max_steps {
                self.result.aborted = true;
                return Ok(Step::Stop);
            }
            self.result.steps += 1;
            let mark = self.bindings.mark();
            let saved = self.difs.mark();
            let clause = crate::term::rename_apart(&self.engine.program.clauses()[ci], &mut self.alloc);
            if self.bindings.unify(&clause.head, &g) && self.difs.wake(&mut self.bindings, mark) {
                if offset + 1 < positions.len() {
                    self.choices.push(Choice {
                        goals: goals.clone(),
                        next_clause: offset + 1,
                        mark,
                        difs: saved,
                        depth: self.depth,
                    });
                }
                self.depth += 1;
                return Ok(Step::Continue(self.push_goals(&clause.body, body_anc, next.clone())));
            }
            self.bindings.undo_to(mark);
            self.difs.undo_to(saved);
        }
        Ok(Step::Fail)
    }
}

/// Resolution engine over one immutable program.
#[derive(Clone, Copy, Debug)]
pub struct Engine<'p> {
    program: &'p Program,
    unknown_fails: bool,
}

impl<'p> Engine<'p> {
    pub fn new(program: &'p Program) -> Engine<'p> {
        Engine { program, unknown_fails: false }
    }

    /// Treat calls to undefined predicates as failing instead of an error.
    pub fn unknown_fails(mut self, yes: bool) -> Engine<'p> {
        self.unknown_fails = yes;
        self
    }

    pub fn program(&self) -> &Program {
        self.program
    }

    fn run(&self, goals: &[Term], mode: Mode, max_steps: u64, want: Want) -> Result<RunResult, EngineError> {
        Machine::new(self, goals, mode, max_steps, want).run(goals)
    }

    pub fn solve_dfs(&self, goals: &[Term], budget: &Budget, want: Want) -> Result<Outcome, EngineError> {
        let r = self.run(goals, Mode::Dfs, budget.max_steps, want)?;
        Ok(match (r.answers.is_empty(), r.aborted) {
            (true, true) => Outcome::BudgetExhausted { steps: r.steps },
            (true, false) => Outcome::FiniteFailure { steps: r.steps },
            (false, aborted) => Outcome::Solutions { answers: r.answers, exhausted: !aborted && !r.stopped_early, steps: r.steps },
        })
    }

    /// Iterative deepening on the number of clause resolutions per branch.
    pub fn solve_fair(&self, goals: &[Term], budget: &Budget) -> Result<Outcome, EngineError> {
        let mut used = 0u64;
        for depth in 1..=budget.max_depth {
            let allowance = budget.per_depth_steps.min(budget.max_steps - used);
            if allowance == 0 {
                break;
            }
            let r = self.run(goals, Mode::DepthLimited(depth), allowance, Want::First)?;
            used += r.steps;
            if !r.answers.is_empty() {
                return Ok(Outcome::Solutions { answers: r.answers, exhausted: false, steps: used });
            }
            if !r.aborted && !r.cutoff {
                return Ok(Outcome::FiniteFailure { steps: used });
            }
        }
        Ok(Outcome::BudgetExhausted { steps: used })
    }

    /// Tries to show that `goals` has no solution, pruning every selected
    /// goal that is a variant of an ancestor on its branch.
    pub fn prove_failure_loopcheck(&self, goals: &[Term], budget: &Budget) -> Result<LoopProof, EngineError> {
        let r = self.run(goals, Mode::LoopPrune, budget.max_steps, Want::First)?;
        Ok(if let Some(a) = r.answers.into_iter().next() {
            LoopProof::Disproven(a)
        } else if r.aborted {
            LoopProof::Unknown { steps: r.steps }
        } else {
            LoopProof::Proven { pruned: r.pruned, steps: r.steps }
        })
    }

    /// Searches depth-first for a selected goal that repeats an ancestor.
    pub fn find_loop(&self, goals: &[Term], budget: &Budget) -> Result<Option<LoopCertificate>, EngineError> {
        Ok(self.run(goals, Mode::LoopDetect, budget.max_steps, Want::All)?.certificate)
    }

    /// Explores all answers of `goals`, which has the same termination
    /// behavior as `goals, false`.
    pub fn check_universal_termination(&self, goals: &[Term], budget: &Budget) -> Result<Termination, EngineError> {
        let outcome = self.solve_dfs(goals, budget, Want::All)?;
        let solutions = match &outcome {
            Outcome::Solutions { answers, exhausted: true, .. } => return Ok(Termination::Terminates { solutions: answers.len() }),
            Outcome::FiniteFailure { .. } => return Ok(Termination::Terminates { solutions: 0 }),
            Outcome::Solutions { answers, .. } => answers.len(),
            Outcome::BudgetExhausted { .. } => 0,
        };
        Ok(match self.find_loop(goals, budget)? {
            Some(certificate) => Termination::NonTerminating { certificate, solutions },
            None => Termination::Unknown { solutions },
        })
    }
}

pub fn solve_dfs(program: &Program, goals: &[Term], budget: &Budget, want: Want) -> Result<Outcome, EngineError> {
    Engine::new(program).solve_dfs(goals, budget, want)
}

pub fn solve_fair(program: &Program, goals: &[Term], budget: &Budget) -> Result<Outcome, EngineError> {
    Engine::new(program).solve_fair(goals, budget)
}

pub fn prove_failure_loopcheck(program: &Program, goals: &[Term], budget: &Budget) -> Result<LoopProof, EngineError> {
    Engine::new(program).prove_failure_loopcheck(goals, budget)
}

pub fn check_universal_termination(program: &Program, goals: &[Term], budget: &Budget) -> Result<Termination, EngineError> {
    Engine::new(program).check_universal_termination(goals, budget)
}
