//! A small Constraint Handling Rules interpreter: simplification and
//! propagation rules over a store of constraints, used for partial
//! reference implementations that can only refute.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::engine::{Budget, Engine, EngineError, Outcome, Want};
use crate::parser::{parse_chr, ChrKind, ParseError};
use crate::reference::{Unspecified, Verdict};
use crate::term::{PredKey, Program, Term, VarAllocator, VarId};
use crate::unify::{instantiate, match_term, Bindings, DifStore, Substitution};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChrBody {
    False,
    True,
    Add(Vec<Term>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChrRule {
    pub name: String,
    pub kind: ChrKind,
    pub heads: Vec<Term>,
    /// Pairs that must be distinct for the rule to fire.
    pub guard: Vec<(Term, Term)>,
    pub body: ChrBody,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChrProgram {
    pub rules: Vec<ChrRule>,
    pub already_in_store: bool,
}

impl ChrProgram {
    pub fn parse(text: &str) -> Result<ChrProgram, ParseError> {
        let syntax = parse_chr(text)?;
        let rules = syntax
            .rules
            .into_iter()
            .map(|r| {
                let body = match r.body.as_slice() {
                    [f] if f.is_atom("false") || f.is_atom("fail") => ChrBody::False,
                    goals if goals.iter().all(|g| g.is_atom("true")) => ChrBody::True,
                    goals => ChrBody::Add(goals.iter().filter(|g| !g.is_atom("true")).cloned().collect()),
                };
                ChrRule { name: r.name, kind: r.kind, heads: r.heads, guard: r.guard, body }
            })
            .collect();
        Ok(ChrProgram { rules, already_in_store: syntax.already_in_store })
    }

    /// Every constraint symbol mentioned by a head or a body.
    pub fn constraint_keys(&self) -> BTreeSet<PredKey> {
        let mut keys = BTreeSet::new();
        for r in &self.rules {
            keys.extend(r.heads.iter().filter_map(Term::key));
            if let ChrBody::Add(body) = &r.body {
                keys.extend(body.iter().filter_map(Term::key));
            }
        }
        keys
    }

    pub fn is_constraint(&self, t: &Term) -> bool {
        t.key().is_some_and(|k| self.constraint_keys().contains(&k))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub id: usize,
    pub term: Term,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintStore {
    constraints: Vec<Constraint>,
    history: HashSet<(String, Vec<usize>)>,
    next_id: usize,
}

impl ConstraintStore {
    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn terms(&self) -> Vec<Term> {
        self.constraints.iter().map(|c| c.term.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    /// Propagations fired so far, as rule name and matched identities.
    pub fn history(&self) -> &HashSet<(String, Vec<usize>)> {
        &self.history
    }

    fn add(&mut self, t: Term, suppress_duplicates: bool) {
        if suppress_duplicates && self.constraints.iter().any(|c| c.term == t) {
            return;
        }
        self.constraints.push(Constraint { id: self.next_id, term: t });
        self.next_id += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChrOutcome {
    Consistent(ConstraintStore),
    /// Names of the rules fired, the last one derived `false`.
    Inconsistent(Vec<String>),
    BudgetExhausted,
}

fn guard_holds(guard: &[(Term, Term)], binds: &mut HashMap<VarId, Term>, alloc: &mut VarAllocator, difs: &DifStore) -> bool {
    guard.iter().all(|(l, r)| {
        let l = instantiate(l, binds, alloc);
        let r = instantiate(r, binds, alloc);
        difs.entails(&mut Bindings::new(), &l, &r)
    })
}

/// Finds the first tuple of distinct store positions matching `heads`.
fn find_match(
    rule: &ChrRule,
    store: &ConstraintStore,
    difs: &DifStore,
    alloc: &mut VarAllocator,
) -> Option<(Vec<usize>, HashMap<VarId, Term>)> {
    fn go(
        rule: &ChrRule,
        store: &ConstraintStore,
        difs: &DifStore,
        alloc: &mut VarAllocator,
        chosen: &mut Vec<usize>,
        binds: &HashMap<VarId, Term>,
    ) -> Option<(Vec<usize>, HashMap<VarId, Term>)> {
        if chosen.len() == rule.heads.len() {
            if rule.kind == ChrKind::Propagation {
                let ids: Vec<usize> = chosen.iter().map(|&i| store.constraints[i].id).collect();
                if store.history.contains(&(rule.name.clone(), ids)) {
                    return None;
                }
            }
            let mut b = binds.clone();
            return guard_holds(&rule.guard, &mut b, alloc, difs).then(|| (chosen.clone(), b));
        }
        let head = &rule.heads[chosen.len()];
        for i in 0..store.constraints.len() {
            if chosen.contains(&i) {
                continue;
            }
            let mut b = binds.clone();
            if match_term(head, &store.constraints[i].term, &mut b) {
                chosen.push(i);
                if let Some(found) = go(rule, store, difs, alloc, chosen, &b) {
                    return Some(found);
                }
                chosen.pop();
            }
        }
        None
    }
    go(rule, store, difs, alloc, &mut Vec::new(), &HashMap::new())
}

/// Applies rules to a fixpoint. Each firing costs one step.
pub fn chr_run(program: &ChrProgram, initial: &[Term], difs: &DifStore, budget: &Budget) -> ChrOutcome {
    let mut store = ConstraintStore::default();
    for t in initial {
        store.add(t.clone(), program.already_in_store);
    }
    let mut alloc = VarAllocator::above(initial);
    let dif_terms: Vec<Term> = difs.pairs().iter().flat_map(|(l, r)| [l.clone(), r.clone()]).collect();
    alloc.bump_above(&dif_terms);
    let mut trace = Vec::new();
    let mut steps = 0u64;
    'fixpoint: loop {
        for rule in &program.rules {
            let Some((positions, mut binds)) = find_match(rule, &store, difs, &mut alloc) else { continue };
            if steps >= budget.max_steps {
                return ChrOutcome::BudgetExhausted;
            }
            steps += 1;
            trace.push(rule.name.clone());
            let ids: Vec<usize> = positions.iter().map(|&i| store.constraints[i].id).collect();
            match rule.kind {
                ChrKind::Simplification => {
                    store.constraints.retain(|c| !ids.contains(&c.id));
                }
                ChrKind::Propagation => {
                    store.history.insert((rule.name.clone(), ids));
                }
            }
            match &rule.body {
                ChrBody::False => return ChrOutcome::Inconsistent(trace),
                ChrBody::True => {}
                ChrBody::Add(goals) => {
                    for g in goals {
                        let t = instantiate(g, &mut binds, &mut alloc);
                        store.add(t, program.already_in_store);
                    }
                }
            }
            continue 'fixpoint;
        }
        return ChrOutcome::Consistent(store);
    }
}

/// Verdict for a conjunction mixing constraints of `chr` with ordinary
/// goals answered by `program`. The ordinary goals run first; every answer
/// then feeds its constraints and pending disequations to the rules.
pub fn chr_verdict(chr: &ChrProgram, program: &Program, goals: &[Term], budget: &Budget) -> Result<Verdict, EngineError> {
    if goals.is_empty() {
        return Ok(Verdict::True { answer: Substitution::new(), grounding: Vec::new() });
    }
    let keys = chr.constraint_keys();
    let (constraints, ordinary): (Vec<Term>, Vec<Term>) =
        goals.iter().cloned().partition(|g| g.key().is_some_and(|k| keys.contains(&k)));
    let outcome = Engine::new(program).solve_dfs(&ordinary, budget, Want::All)?;
    let (answers, exhausted) = match outcome {
        Outcome::FiniteFailure { .. } => return Ok(Verdict::False),
        Outcome::BudgetExhausted { .. } => return Ok(Verdict::Unspecified(Unspecified::Budget)),
        Outcome::Solutions { answers, exhausted, .. } => (answers, exhausted),
    };
    let mut pending = false;
    let mut budget_hit = !exhausted;
    for ans in &answers {
        let store: Vec<Term> = ans.subst.apply_all(&constraints);
        match chr_run(chr, &store, &ans.difs, budget) {
            ChrOutcome::Inconsistent(_) => {}
            ChrOutcome::BudgetExhausted => budget_hit = true,
            ChrOutcome::Consistent(s) if s.is_empty() && ans.difs.is_empty() => {
                return Ok(Verdict::True { answer: ans.subst.clone(), grounding: Vec::new() });
            }
            ChrOutcome::Consistent(_) => pending = true,
        }
    }
    Ok(if pending {
        Verdict::Unspecified(Unspecified::Pending)
    } else if budget_hit {
        Verdict::Unspecified(Unspecified::Budget)
    } else {
        Verdict::False
    })
}
