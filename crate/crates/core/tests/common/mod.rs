//! Random generators and independent oracles shared by the property suites
//! and the acceptance target. Every `check_*` function returns a short
//! summary on success and a counterexample description on failure.
#![allow(dead_code)]

pub mod programs;
pub mod slices;
pub mod specs;

use std::collections::HashMap;

use exemplar_core::parser::parse_term;
use exemplar_core::render::render_term;
use exemplar_core::{Bindings, Term, Var, VarAllocator};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn var(id: u32) -> Term {
    Term::Var(Var::new(id))
}

const ATOMS: [&str; 6] = ["a", "b", "c", "[]", "hello world", "it's"];

pub fn random_term(rng: &mut ChaCha8Rng, depth: u32, vars: &[u32]) -> Term {
    if depth == 0 || rng.gen_bool(0.35) {
        return match rng.gen_range(0..5) {
            0 | 1 => var(*vars.choose(rng).expect("some variables")),
            2 | 3 => Term::atom(ATOMS[rng.gen_range(0..3)]),
            _ => Term::Int(rng.gen_range(0..3)),
        };
    }
    match rng.gen_range(0..4) {
        0 => Term::compound("f", vec![random_term(rng, depth - 1, vars)]),
        1 => Term::compound("g", vec![random_term(rng, depth - 1, vars), random_term(rng, depth - 1, vars)]),
        2 => Term::cons(random_term(rng, depth - 1, vars), random_term(rng, depth - 1, vars)),
        _ => Term::atom(ATOMS.choose(rng).expect("atoms")),
    }
}

/// Applies a substitution until no bound variable is left.
pub fn oracle_apply(s: &HashMap<u32, Term>, t: &Term) -> Term {
    match t {
        Term::Var(v) => match s.get(&v.id.0) {
            Some(b) => oracle_apply(s, b),
            None => t.clone(),
        },
        Term::Compound(f, args) => Term::compound(f, args.iter().map(|a| oracle_apply(s, a)).collect()),
        _ => t.clone(),
    }
}

fn oracle_occurs(id: u32, t: &Term) -> bool {
    match t {
        Term::Var(v) => v.id.0 == id,
        Term::Compound(_, args) => args.iter().any(|a| oracle_occurs(id, a)),
        _ => false,
    }
}

/// Textbook unification with the occurs check, on fully applied terms.
pub fn oracle_unify(a: &Term, b: &Term) -> Option<HashMap<u32, Term>> {
    let mut s: HashMap<u32, Term> = HashMap::new();
    let mut todo = vec![(a.clone(), b.clone())];
    while let Some((x, y)) = todo.pop() {
        let x = oracle_apply(&s, &x);
        let y = oracle_apply(&s, &y);
        match (&x, &y) {
            (Term::Var(v), Term::Var(w)) if v.id == w.id => {}
            (Term::Var(v), t) | (t, Term::Var(v)) => {
                if oracle_occurs(v.id.0, t) {
                    return None;
                }
                s.insert(v.id.0, t.clone());
            }
            (Term::Compound(f, xs), Term::Compound(g, ys)) => {
                if f != g || xs.len() != ys.len() {
                    return None;
                }
                todo.extend(xs.iter().cloned().zip(ys.iter().cloned()));
            }
            _ if x == y => {}
            _ => return None,
        }
    }
    Some(s)
}

/// Equal up to a consistent bijective renaming of variables.
pub fn oracle_variant(a: &Term, b: &Term) -> bool {
    fn go(a: &Term, b: &Term, fw: &mut HashMap<u32, u32>, bw: &mut HashMap<u32, u32>) -> bool {
        match (a, b) {
            (Term::Var(x), Term::Var(y)) => {
                let (x, y) = (x.id.0, y.id.0);
                *fw.entry(x).or_insert(y) == y && *bw.entry(y).or_insert(x) == x
            }
            (Term::Compound(f, xs), Term::Compound(g, ys)) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|(x, y)| go(x, y, fw, bw))
            }
            _ => a == b,
        }
    }
    go(a, b, &mut HashMap::new(), &mut HashMap::new())
}

pub fn oracle_variant_all(a: &[Term], b: &[Term]) -> bool {
    a.len() == b.len() && oracle_variant(&Term::compound("c", a.to_vec()), &Term::compound("c", b.to_vec()))
}

/// Whether `target` is an instance of `pattern`.
pub fn oracle_instance(pattern: &Term, target: &Term) -> bool {
    fn go(p: &Term, t: &Term, m: &mut HashMap<u32, Term>) -> bool {
        match (p, t) {
            (Term::Var(v), _) => match m.get(&v.id.0) {
                Some(b) => b == t,
                None => {
                    m.insert(v.id.0, t.clone());
                    true
                }
            },
            (Term::Compound(f, xs), Term::Compound(g, ys)) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|(x, y)| go(x, y, m))
            }
            _ => p == t,
        }
    }
    go(pattern, target, &mut HashMap::new())
}

/// Unification agrees with the oracle on success, the result is a unifier,
/// it is idempotent, and it is a variant of the oracle's most general
/// unifier.
pub fn check_unify(cases: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let (mut ok, mut failed) = (0, 0);
    for case in 0..cases {
        let t1 = random_term(&mut rng, 4, &[0, 1, 2, 3]);
        let t2 = if case % 2 == 0 {
            random_term(&mut rng, 4, &[2, 3, 4, 5])
        } else {
            // an instance of t1 with its variables replaced, so success is likely
            let mut s = HashMap::new();
            for v in t1.vars() {
                s.insert(v.id.0, random_term(&mut rng, 2, &[6, 7]));
            }
            oracle_apply(&s, &t1)
        };
        let mut b = Bindings::new();
        let ours = b.unify(&t1, &t2);
        let oracle = oracle_unify(&t1, &t2);
        if ours != oracle.is_some() {
            return Err(format!("{} = {}: engine {ours}, oracle {}", render_term(&t1), render_term(&t2), oracle.is_some()));
        }
        let Some(s) = oracle else {
            failed += 1;
            continue;
        };
        ok += 1;
        let (r1, r2) = (b.resolve(&t1), b.resolve(&t2));
        if r1 != r2 {
            return Err(format!("not a unifier: {} vs {}", render_term(&r1), render_term(&r2)));
        }
        if b.resolve(&r1) != r1 {
            return Err(format!("not idempotent on {}", render_term(&r1)));
        }
        let expected = oracle_apply(&s, &t1);
        if !oracle_variant(&r1, &expected) {
            return Err(format!("{} is not a variant of the mgu instance {}", render_term(&r1), render_term(&expected)));
        }
    }
    if ok == 0 || failed == 0 {
        return Err(format!("degenerate sample: {ok} unifiable, {failed} not"));
    }
    Ok(format!("{cases} pairs ({ok} unifiable, {failed} not)"))
}

/// Rendering then parsing gives back a variant of the term.
pub fn check_round_trip(cases: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    for _ in 0..cases {
        let t = random_term(&mut rng, 5, &[0, 1, 2]);
        let text = render_term(&t);
        let back = parse_term(&text, &mut VarAllocator::new()).map_err(|e| format!("`{text}` does not parse: {e}"))?;
        if !oracle_variant(&t, &back) {
            return Err(format!("`{text}` parses to `{}`", render_term(&back)));
        }
    }
    Ok(format!("{cases} terms"))
}
