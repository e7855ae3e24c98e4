//! Diagnosis soundness, reference and CHR properties, marking and
//! annotation idempotence.

use std::path::{Path, PathBuf};

use exemplar_core::chr::{chr_run, ChrOutcome, ChrProgram};
use exemplar_core::diagnosis::{explain_incorrect_negative, explain_incorrect_positive, ExplanationKind};
use exemplar_core::marking::{interval, ItemState};
use exemplar_core::parser::strip_machine_lines;
use exemplar_core::render::render_term;
use exemplar_core::{annotate_text, check_file, parse_file, Budget, DifStore, Registry, Term, Verdict};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{oracle_instance, var, Check};

const LETTERS: [&str; 3] = ["a", "b", "c"];

fn conj(goals: &[Term]) -> Term {
    Term::compound("c", goals.to_vec())
}

fn alldifferent(items: Vec<Term>, tail: Term) -> Vec<Term> {
    vec![Term::compound("alldifferent", vec![Term::list(items, tail)])]
}

fn pairwise_distinct(items: &[&str]) -> bool {
    items.iter().enumerate().all(|(i, x)| items[i + 1..].iter().all(|y| x != y))
}

/// The shipped alldifferent reference agrees with a pairwise check on
/// every ground list of length at most 6 over three constants.
pub fn check_alldifferent_reference() -> Check {
    let registry = Registry::builtin();
    let budget = Budget::default();
    let mut n = 0;
    for len in 0..=6u32 {
        for mut code in 0..3usize.pow(len) {
            let mut items = Vec::new();
            for _ in 0..len {
                items.push(LETTERS[code % 3]);
                code /= 3;
            }
            let goals = alldifferent(items.iter().map(|s| Term::atom(s)).collect(), Term::nil());
            let v = registry.reference_verdict(&goals, &budget);
            let ok = if pairwise_distinct(&items) { v.is_true() } else { v.is_false() };
            if !ok {
                return Err(format!("{}: {v:?}", render_term(&goals[0])));
            }
            n += 1;
        }
    }
    Ok(format!("{n} ground lists"))
}

/// Whether the single `alldifferent/1` goal `specific` implies `general`:
/// some suffix of its list, which the implication rule may pass to, is an
/// instance of the general list.
fn implies(specific: &Term, general: &[Term]) -> bool {
    let general: Vec<&Term> = general.iter().filter(|g| g.key().is_none_or(|k| &*k.name != "dif")).collect();
    let [g] = general.as_slice() else { return false };
    let mut list = &specific.args()[0];
    loop {
        if oracle_instance(g, &Term::compound("alldifferent", vec![list.clone()])) {
            return true;
        }
        match list {
            Term::Compound(f, args) if &**f == "." => list = &args[1],
            _ => return false,
        }
    }
}

fn nodes(t: &Term) -> i64 {
    match t {
        Term::Compound(_, args) => 1 + args.iter().map(nodes).sum::<i64>(),
        _ => 1,
    }
}

/// Larger is more general: smaller, then more distinct variables, then
/// fewer goals.
fn generality(goals: &[Term]) -> (i64, usize, i64) {
    let vars: std::collections::BTreeSet<u32> = goals.iter().flat_map(|g| g.vars()).map(|v| v.id.0).collect();
    (-goals.iter().map(nodes).sum::<i64>(), vars.len(), -(goals.len() as i64))
}

/// Every generalization stage is refuted by the reference, the original
/// goal implies it, and each stage is strictly more general than the one
/// before.
pub fn check_generalization(cases: usize, seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let registry = Registry::builtin();
    let budget = Budget::default();
    let mut stages = 0;
    for _ in 0..cases {
        let len = rng.gen_range(2..=5);
        let mut items: Vec<&str> = (0..len).map(|_| *LETTERS.choose(&mut rng).expect("letters")).collect();
        if pairwise_distinct(&items) {
            let i = rng.gen_range(1..len);
            items[i] = items[0];
        }
        let goals = alldifferent(items.iter().map(|s| Term::atom(s)).collect(), Term::nil());
        let text = render_term(&goals[0]);
        let e = explain_incorrect_positive(&goals, &registry, &budget).map_err(|e| format!("{text}: {e}"))?;
        if e.kind != ExplanationKind::GeneralizedNegative || e.stages.is_empty() {
            return Err(format!("{text}: no stages"));
        }
        let mut previous = generality(&goals);
        for s in &e.stages {
            if !implies(&goals[0], &s.goals) {
                return Err(format!("{text}: {} does not generalize it", s.suggestion()));
            }
            if generality(&s.goals) <= previous {
                return Err(format!("{text}: {} is not more general than the stage before", s.suggestion()));
            }
            if !registry.reference_verdict(&s.goals, &budget).is_false() {
                return Err(format!("{text}: {} does not re-verify", s.suggestion()));
            }
            previous = generality(&s.goals);
            stages += 1;
        }
    }
    Ok(format!("{cases} explanations, {stages} stages re-verified"))
}

/// For negative assertions on lists without a duplicate, the suggested
/// positive assertion is an instance of the original and verifies true.
pub fn check_specialization(cases: usize, seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let registry = Registry::builtin();
    let budget = Budget::default();
    let mut explained = 0;
    for _ in 0..cases {
        let len = rng.gen_range(1..=3);
        // distinct constants by position, so no duplicate can arise
        let items: Vec<Term> =
            (0..len).map(|i| if rng.gen_bool(0.5) { Term::atom(LETTERS[i]) } else { var(i as u32) }).collect();
        let tail = if rng.gen_bool(0.5) { var(9) } else { Term::nil() };
        let goals = alldifferent(items, tail);
        let text = render_term(&goals[0]);
        let e = explain_incorrect_negative(&goals, &registry, &budget).map_err(|e| format!("{text}: {e}"))?;
        let [s] = e.stages.as_slice() else { return Err(format!("{text}: expected one suggestion")) };
        if !oracle_instance(&conj(&goals), &conj(&s.goals)) {
            return Err(format!("{text}: {} is not an instance", s.suggestion()));
        }
        let mut grounded: Vec<Term> =
            s.equations.iter().map(|(v, t)| Term::compound("=", vec![Term::Var(v.clone()), t.clone()])).collect();
        grounded.extend(s.goals.iter().cloned());
        if !registry.reference_verdict(&grounded, &budget).is_true() {
            return Err(format!("{text}: {} does not verify", s.suggestion()));
        }
        explained += 1;
    }
    Ok(format!("{explained} suggestions verified"))
}

pub fn family() -> ChrProgram {
    ChrProgram::parse(include_str!("../../refs/family.ref.chr")).expect("family rules parse")
}

fn random_constraint(rng: &mut ChaCha8Rng) -> Term {
    let mut arg = || if rng.gen_bool(0.7) { Term::atom(LETTERS.choose(rng).expect("letters")) } else { var(rng.gen_range(0..3)) };
    let (a, b) = (arg(), arg());
    let name = if rng.gen_bool(0.6) { "child_of" } else { "ancestor_of" };
    Term::compound(name, vec![a, b])
}

/// No conjunction containing a family constraint is ever judged true, and
/// adding a constraint to an inconsistent store keeps it inconsistent.
pub fn check_chr(stores: usize, seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let registry = Registry::builtin();
    let chr = family();
    let budget = Budget::default();
    let (mut inconsistent, mut grown) = (0, 0);
    for _ in 0..stores {
        let store: Vec<Term> = (0..rng.gen_range(1..=4)).map(|_| random_constraint(&mut rng)).collect();
        let text = store.iter().map(render_term).collect::<Vec<_>>().join(", ");
        if let v @ Verdict::True { .. } = registry.reference_verdict(&store, &budget) {
            return Err(format!("{text}: {v:?}"));
        }
        match chr_run(&chr, &store, &DifStore::new(), &budget) {
            ChrOutcome::Consistent(s) if s.is_empty() => return Err(format!("{text}: the store empties")),
            ChrOutcome::BudgetExhausted => return Err(format!("{text}: the rules do not reach a fixpoint")),
            ChrOutcome::Inconsistent(_) => {
                inconsistent += 1;
                let mut bigger = store.clone();
                bigger.insert(rng.gen_range(0..=store.len()), random_constraint(&mut rng));
                if !matches!(chr_run(&chr, &bigger, &DifStore::new(), &budget), ChrOutcome::Inconsistent(_)) {
                    return Err(format!("{text}: a superset is consistent"));
                }
                grown += 1;
            }
            ChrOutcome::Consistent(_) => {}
        }
    }
    if inconsistent == 0 {
        return Err("no inconsistent store was generated".to_owned());
    }
    Ok(format!("{stores} stores ({inconsistent} inconsistent, {grown} supersets checked)"))
}

/// The interval by direct search: the largest whole percentages not above
/// the proven share and the not yet disproven share.
fn oracle_interval(states: &[(u32, ItemState)]) -> (u32, u32) {
    let total: u32 = states.iter().map(|(w, _)| w).sum();
    if total == 0 {
        return (0, 0);
    }
    let sum = |keep: &[ItemState]| -> u32 { states.iter().filter(|(_, s)| keep.contains(s)).map(|(w, _)| w).sum() };
    let proven = sum(&[ItemState::Satisfied]);
    let possible = sum(&[ItemState::Satisfied, ItemState::Inconclusive]);
    let low = (0..=100).rev().find(|p| p * total <= 100 * proven).expect("0 qualifies");
    let high = (0..=100).rev().find(|p| p * total <= 100 * possible).expect("0 qualifies");
    (low, high)
}

const STATES: [ItemState; 4] = [ItemState::Satisfied, ItemState::Violated, ItemState::Inconclusive, ItemState::Absent];

/// The fixed cases, agreement with the search oracle, the bounds, and
/// monotonicity under resolving an inconclusive item.
pub fn check_marking(cases: usize, seed: u64) -> Check {
    use ItemState::*;
    let fixed: [(&[ItemState], (u32, u32)); 3] = [
        (&[Satisfied, Satisfied, Satisfied, Inconclusive, Violated], (60, 80)),
        (&[Satisfied, Satisfied, Satisfied], (100, 100)),
        (&[Absent, Absent], (0, 0)),
    ];
    for (states, want) in fixed {
        let weighted: Vec<(u32, ItemState)> = states.iter().map(|s| (1, *s)).collect();
        if interval(&weighted) != want {
            return Err(format!("{states:?}: {:?}, expected {want:?}", interval(&weighted)));
        }
    }
    let mut rng = super::rng(seed);
    for _ in 0..cases {
        let states: Vec<(u32, ItemState)> =
            (0..rng.gen_range(1..=8)).map(|_| (rng.gen_range(1..=4), *STATES.choose(&mut rng).expect("states"))).collect();
        let (low, high) = interval(&states);
        if (low, high) != oracle_interval(&states) {
            return Err(format!("{states:?}: {:?} vs oracle {:?}", (low, high), oracle_interval(&states)));
        }
        if low > high || high > 100 {
            return Err(format!("{states:?}: bounds {low}, {high}"));
        }
        let open = states.iter().any(|(_, s)| *s == Inconclusive);
        let total: u32 = states.iter().map(|(w, _)| w).sum();
        // with at most 100 weight units any open item moves the upper bound
        if total <= 100 && (low == high) == open {
            return Err(format!("{states:?}: bounds {low}, {high} with open = {open}"));
        }
        for (i, (w, s)) in states.iter().enumerate() {
            if *s != Inconclusive {
                continue;
            }
            let mut up = states.clone();
            up[i] = (*w, Satisfied);
            let mut down = states.clone();
            down[i] = (*w, Violated);
            let (ul, uh) = interval(&up);
            let (_, dh) = interval(&down);
            if ul < low || uh < high || dh > high {
                return Err(format!("{states:?}: resolving item {i} is not monotone"));
            }
        }
    }
    Ok(format!("3 fixed cases and {cases} random manifests"))
}

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

fn user_lines(text: &str) -> Vec<&str> {
    text.split_inclusive('\n').filter(|l| !l.trim_start().starts_with("%@")).collect()
}

/// Annotating is idempotent on every corpus file, never touches user
/// lines, and stripping gives back the user text.
pub fn check_corpus_idempotence() -> Check {
    let registry = Registry::builtin();
    let budget = Budget::default();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err("empty corpus".to_owned());
    }
    let annotate = |text: &str, label: &str| -> Result<String, String> {
        let f = parse_file(text).map_err(|e| format!("{label}: {e}"))?;
        Ok(annotate_text(&f, &check_file(&f, &registry, &budget), label))
    };
    for p in &paths {
        let label = p.file_name().and_then(|n| n.to_str()).unwrap_or("file");
        let text = std::fs::read_to_string(p).map_err(|e| e.to_string())?;
        let once = annotate(&text, label)?;
        let twice = annotate(&once, label)?;
        if once != twice {
            return Err(format!("{label}: annotating twice changes the text"));
        }
        let stripped = strip_machine_lines(&parse_file(&once).map_err(|e| e.to_string())?).render();
        if annotate(&stripped, label)? != once {
            return Err(format!("{label}: annotate(strip(annotate)) differs"));
        }
        // a missing final newline is only added when something is appended
        let (before, after) = (user_lines(&text).concat(), user_lines(&once).concat());
        if before.strip_suffix('\n').unwrap_or(&before) != after.strip_suffix('\n').unwrap_or(&after) {
            return Err(format!("{label}: user lines changed"));
        }
    }
    Ok(format!("{} corpus files", paths.len()))
}
