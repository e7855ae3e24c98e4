//! Slicer validity, maximality and error persistence.

use std::collections::BTreeSet;

use exemplar_core::engine::Termination;
use exemplar_core::parser::parse_conjunction;
use exemplar_core::render::render_term;
use exemplar_core::slicer::{
    failing_query, slice_incorrectness, slice_insufficiency, slice_nontermination, ClauseMark, ProgramFragment,
};
use exemplar_core::{parse_file, AssertionKind, Budget, Clause, Engine, Outcome, Program, Registry, Term, Want};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::programs::{most_general_query, random_datalog, CONSTS, PREDS};
use super::Check;

pub const BUGGY: &str = "alldifferent([]).\n\
    alldifferent([X|Xs]) :- nonmember_of(Xs, X), alldifferent(Xs).\n\
    nonmember_of(_X, []).\n\
    nonmember_of(X, [E|Es]) :- dif(X, E), nonmember_of(X, Es).\n";

pub const GROUND_POSITIVE: &str = "X = any1, Y = any2, alldifferent([X,Y])";
pub const PAIR_QUERY: &str = "Xs = [_,_], alldifferent(Xs)";

const SMALL: Budget = Budget { max_steps: 5_000, max_depth: 16, per_depth_steps: 5_000 };

pub fn setup(program: &str, query: &str) -> (Program, Vec<Term>) {
    let f = parse_file(program).expect("program parses");
    let mut a = f.var_allocator();
    let q = parse_conjunction(query, &mut a).expect("query parses");
    (Program::new(f.clauses()), q)
}

fn fails(p: &Program, goals: &[Term], budget: &Budget) -> bool {
    matches!(Engine::new(p).unknown_fails(true).solve_dfs(goals, budget, Want::First), Ok(Outcome::FiniteFailure { .. }))
}

fn succeeds(p: &Program, goals: &[Term], budget: &Budget) -> bool {
    matches!(Engine::new(p).unknown_fails(true).solve_dfs(goals, budget, Want::First), Ok(Outcome::Solutions { .. }))
}

fn loop_certified(p: &Program, goals: &[Term], budget: &Budget) -> bool {
    match Engine::new(p).unknown_fails(true).check_universal_termination(goals, budget) {
        Ok(Termination::NonTerminating { certificate, .. }) => certificate.is_valid(),
        _ => false,
    }
}

fn with_deleted(program: &Program, deleted: &BTreeSet<(usize, usize)>) -> ProgramFragment {
    let mut f = ProgramFragment::unmodified(program, AssertionKind::Pos, &[]);
    for &(ci, gi) in deleted {
        if let ClauseMark::Kept { deleted, .. } = &mut f.marks[ci] {
            deleted.insert(gi);
        }
    }
    f
}

fn deleted_of(f: &ProgramFragment) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for (ci, m) in f.marks.iter().enumerate() {
        if let ClauseMark::Kept { deleted, .. } = m {
            out.extend(deleted.iter().map(|gi| (ci, *gi)));
        }
    }
    out
}

fn random_failing(rng: &mut ChaCha8Rng, max_goals: usize) -> Option<(String, Program, Term)> {
    let text = random_datalog(rng, max_goals);
    let program = Program::new(parse_file(&text).ok()?.clauses());
    let (name, arity) = *PREDS.choose(rng).expect("preds");
    let q = if rng.gen_bool(0.5) {
        most_general_query(name, arity)
    } else {
        Term::compound(name, (0..arity).map(|_| Term::atom(CONSTS.choose(rng).expect("consts"))).collect())
    };
    fails(&program, std::slice::from_ref(&q), &SMALL).then_some((text, program, q))
}

/// The insufficiency slice still fails, and no strict superset of its
/// deletions does: checked against every subset of the body goals.
pub fn check_insufficiency_maximal(needed: usize, seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let (mut done, mut tries, mut subsets) = (0, 0, 0usize);
    while done < needed {
        tries += 1;
        if tries > needed * 50 {
            return Err(format!("only {done} failing programs generated"));
        }
        let Some((text, program, q)) = random_failing(&mut rng, 8) else { continue };
        let goals = [q.clone()];
        let frag = slice_insufficiency(&program, &goals, &SMALL).map_err(|e| format!("{text}: {e}"))?;
        let context = || format!("program:\n{text}query {}", render_term(&q));
        if !fails(&frag.compile(), &goals, &SMALL) {
            return Err(format!("{}: the fragment does not fail", context()));
        }
        let restored = ProgramFragment::unmodified(&frag.base, AssertionKind::Pos, &goals).compile();
        if restored != program {
            return Err(format!("{}: re-adding the deletions does not restore the program", context()));
        }
        let all: Vec<(usize, usize)> = program
            .clauses()
            .iter()
            .enumerate()
            .flat_map(|(ci, c)| (0..c.body.len()).map(move |gi| (ci, gi)))
            .collect();
        let chosen = deleted_of(&frag);
        for mask in 0u32..(1 << all.len()) {
            let s: BTreeSet<(usize, usize)> =
                all.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, g)| *g).collect();
            if s.len() > chosen.len() && s.is_superset(&chosen) {
                subsets += 1;
                if fails(&with_deleted(&program, &s).compile(), &goals, &SMALL) {
                    return Err(format!("{}: deleting {s:?} also fails, slice deleted only {chosen:?}", context()));
                }
            }
        }
        done += 1;
    }
    Ok(format!("{done} programs, {subsets} larger deletion sets refuted"))
}

/// A reference under which every user answer is wrong.
fn refuting_registry() -> Registry {
    let mut r = Registry::empty();
    r.add_clauses("p(zz).\nq(zz).\nr(zz, zz).\ns(zz).\n", None).expect("parses");
    r
}

/// The incorrectness slice still derives its target, and each kept clause
/// is needed for that.
pub fn check_incorrectness_valid(needed: usize, seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let registry = refuting_registry();
    let (mut done, mut tries) = (0, 0);
    while done < needed {
        tries += 1;
        if tries > needed * 50 {
            return Err(format!("only {done} succeeding programs generated"));
        }
        let text = random_datalog(&mut rng, 6);
        let program = Program::new(parse_file(&text).map_err(|e| e.to_string())?.clauses());
        let (name, arity) = *PREDS.choose(&mut rng).expect("preds");
        let q = [most_general_query(name, arity)];
        let Ok(Outcome::Solutions { answers, .. }) = Engine::new(&program).unknown_fails(true).solve_dfs(&q, &SMALL, Want::First)
        else {
            continue;
        };
        let s = slice_incorrectness(&program, &q, &answers[0].subst, &registry, &SMALL)
            .map_err(|e| format!("program:\n{text}: {e}"))?;
        let context = || format!("program:\n{text}target {}", render_term(&s.target[0]));
        let compiled = s.fragment.compile();
        if !succeeds(&compiled, &s.target, &SMALL) {
            return Err(format!("{}: the fragment does not derive the target", context()));
        }
        for st in &s.stages {
            if !registry.reference_verdict(&st.goals, &SMALL).is_false() || !succeeds(&program, &st.goals, &SMALL) {
                return Err(format!("{}: stage {} is not a wrong answer", context(), st.suggestion()));
            }
        }
        for ci in 0..program.len() {
            if matches!(s.fragment.marks[ci], ClauseMark::Removed) {
                continue;
            }
            let mut trial = s.fragment.clone();
            trial.marks[ci] = ClauseMark::Removed;
            if succeeds(&trial.compile(), &s.target, &SMALL) {
                return Err(format!("{}: clause {ci} is not needed", context()));
            }
        }
        done += 1;
    }
    Ok(format!("{done} programs"))
}

/// The non-termination slice still has a loop certificate.
pub fn check_nontermination_valid(needed: usize, seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let (mut done, mut tries) = (0, 0);
    while done < needed {
        tries += 1;
        if tries > needed * 100 {
            return Err(format!("only {done} looping programs generated"));
        }
        let text = random_datalog(&mut rng, 6);
        let program = Program::new(parse_file(&text).map_err(|e| e.to_string())?.clauses());
        let (name, arity) = *PREDS.choose(&mut rng).expect("preds");
        let q = [most_general_query(name, arity)];
        if !loop_certified(&program, &failing_query(&q), &SMALL) {
            continue;
        }
        let f = slice_nontermination(&program, &q, &SMALL).map_err(|e| format!("program:\n{text}: {e}"))?;
        if !loop_certified(&f.compile(), &f.query, &SMALL) {
            return Err(format!("program:\n{text}: the fragment has no loop certificate"));
        }
        done += 1;
    }
    Ok(format!("{done} programs"))
}

fn random_goal(rng: &mut ChaCha8Rng, vars: &[Term]) -> Term {
    let mut pick = || vars.choose(rng).cloned().unwrap_or_else(Term::nil);
    let (a, b) = (pick(), pick());
    match rng.gen_range(0..7) {
        0 => Term::atom("true"),
        1 => Term::atom("false"),
        2 => Term::compound("dif", vec![a, b]),
        3 => Term::compound("=", vec![a, b]),
        4 => Term::compound("=", vec![a, Term::nil()]),
        5 => Term::compound("alldifferent", vec![a]),
        _ => Term::compound("nonmember_of", vec![a, b]),
    }
}

/// A copy of the program where every part the fragment does not display
/// is replaced at random.
fn mutate_hidden(f: &ProgramFragment, rng: &mut ChaCha8Rng) -> Program {
    let clauses = f
        .base
        .clauses()
        .iter()
        .zip(&f.marks)
        .map(|(c, m)| {
            let vars: Vec<Term> = c.head.vars().into_iter().chain(c.body.iter().flat_map(|g| g.vars())).map(Term::Var).collect();
            let body = match m {
                ClauseMark::Removed | ClauseMark::Kept { false_at: Some(0), .. } => {
                    (0..rng.gen_range(0..3)).map(|_| random_goal(rng, &vars)).collect()
                }
                ClauseMark::Kept { deleted, false_at } => {
                    let mut body: Vec<Term> = c
                        .body
                        .iter()
                        .enumerate()
                        .take(false_at.unwrap_or(c.body.len()))
                        .map(|(i, g)| if deleted.contains(&i) { random_goal(rng, &vars) } else { g.clone() })
                        .collect();
                    if false_at.is_some() {
                        for _ in 0..rng.gen_range(0..3) {
                            body.push(random_goal(rng, &vars));
                        }
                    }
                    body
                }
            };
            Clause::new(c.head.clone(), body)
        })
        .collect();
    Program::new(clauses)
}

/// Editing only struck or hidden parts of the three slices of the buggy
/// program never removes the symptom.
pub fn check_error_persistence(mutations: usize, seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let budget = Budget { max_steps: 20_000, max_depth: 12, per_depth_steps: 5_000 };
    let (p, pos) = setup(BUGGY, GROUND_POSITIVE);
    let (_, pair) = setup(BUGGY, PAIR_QUERY);
    let a = slice_insufficiency(&p, &pos, &budget).map_err(|e| e.to_string())?;
    let witness = match Engine::new(&p).solve_dfs(&pair, &budget, Want::First) {
        Ok(Outcome::Solutions { answers, .. }) => answers[0].subst.clone(),
        other => return Err(format!("no first answer: {other:?}")),
    };
    let b = slice_incorrectness(&p, &pair, &witness, &Registry::builtin(), &budget).map_err(|e| e.to_string())?;
    let c = slice_nontermination(&p, &pair, &budget).map_err(|e| e.to_string())?;
    let mut certified = 0;
    for i in 0..mutations {
        let m = mutate_hidden(&a, &mut rng);
        if matches!(Engine::new(&m).unknown_fails(true).solve_fair(&pos, &budget), Ok(Outcome::Solutions { .. })) {
            return Err(format!("mutation {i} of the failure slice succeeds"));
        }
        let m = mutate_hidden(&b.fragment, &mut rng);
        if !matches!(Engine::new(&m).unknown_fails(true).solve_fair(&b.target, &budget), Ok(Outcome::Solutions { .. })) {
            return Err(format!("mutation {i} of the wrong-answer slice no longer derives the target"));
        }
        let m = mutate_hidden(&c, &mut rng);
        match Engine::new(&m).unknown_fails(true).check_universal_termination(&c.query, &budget) {
            Ok(Termination::Terminates { .. }) => return Err(format!("mutation {i} of the loop slice terminates")),
            Ok(Termination::NonTerminating { .. }) => certified += 1,
            _ => {}
        }
    }
    Ok(format!("{mutations} mutations per slice, {certified} loop certificates re-found"))
}
