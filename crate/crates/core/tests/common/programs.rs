//! Random function-free programs and a bottom-up model oracle.

use std::collections::{BTreeSet, HashMap};

use exemplar_core::engine::LoopProof;
use exemplar_core::render::render_term;
use exemplar_core::{parse_file, Budget, Engine, Outcome, Program, Term, Want};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{oracle_apply, var, Check};

pub const CONSTS: [&str; 3] = ["a", "b", "c"];
pub const PREDS: [(&str, usize); 4] = [("p", 1), ("q", 1), ("r", 2), ("s", 1)];
const VARS: [&str; 3] = ["X", "Y", "Z"];

fn atom_text(name: &str, args: &[String]) -> String {
    format!("{name}({})", args.join(", "))
}

/// Facts and range-restricted rules over `p/1, q/1, r/2, s/1` with at most
/// `max_goals` body goals in total.
pub fn random_datalog(rng: &mut ChaCha8Rng, max_goals: usize) -> String {
    let mut lines = Vec::new();
    for _ in 0..rng.gen_range(1..=5) {
        let (name, arity) = *PREDS.choose(rng).expect("preds");
        let args: Vec<String> = (0..arity).map(|_| CONSTS.choose(rng).expect("consts").to_string()).collect();
        lines.push(format!("{}.", atom_text(name, &args)));
    }
    let mut left = max_goals;
    for _ in 0..rng.gen_range(1..=3) {
        if left == 0 {
            break;
        }
        let n = rng.gen_range(1..=left.min(2));
        left -= n;
        let mut body_vars: Vec<&str> = Vec::new();
        let mut body = Vec::new();
        for _ in 0..n {
            let (name, arity) = *PREDS.choose(rng).expect("preds");
            let args: Vec<String> = (0..arity)
                .map(|_| {
                    if rng.gen_bool(0.7) {
                        let v = *VARS.choose(rng).expect("vars");
                        body_vars.push(v);
                        v.to_owned()
                    } else {
                        CONSTS.choose(rng).expect("consts").to_string()
                    }
                })
                .collect();
            body.push(atom_text(name, &args));
        }
        let (name, arity) = *PREDS.choose(rng).expect("preds");
        let head: Vec<String> = (0..arity)
            .map(|_| match body_vars.choose(rng) {
                Some(v) if rng.gen_bool(0.8) => v.to_string(),
                _ => CONSTS.choose(rng).expect("consts").to_string(),
            })
            .collect();
        lines.push(format!("{} :- {}.", atom_text(name, &head), body.join(", ")));
    }
    lines.shuffle(rng);
    lines.iter().map(|l| format!("{l}\n")).collect()
}

/// Least model by naive iteration over all ground instances.
pub fn bottom_up(program: &Program) -> BTreeSet<Term> {
    let mut model: BTreeSet<Term> = BTreeSet::new();
    loop {
        let mut grew = false;
        for c in program.clauses() {
            let mut vars: Vec<u32> = c.terms().iter().flat_map(|t| t.vars()).map(|v| v.id.0).collect();
            vars.sort();
            vars.dedup();
            let combos = CONSTS.len().pow(vars.len() as u32);
            for mut code in 0..combos {
                let mut s = HashMap::new();
                for v in &vars {
                    s.insert(*v, Term::atom(CONSTS[code % CONSTS.len()]));
                    code /= CONSTS.len();
                }
                if c.body.iter().all(|g| model.contains(&oracle_apply(&s, g))) {
                    grew |= model.insert(oracle_apply(&s, &c.head));
                }
            }
        }
        if !grew {
            return model;
        }
    }
}

pub fn most_general_query(name: &str, arity: usize) -> Term {
    Term::compound(name, (0..arity as u32).map(|i| var(1000 + i)).collect())
}

/// Depth-first answers equal the least model whenever the search tree is
/// finite; otherwise every answer found is in the model. Fair search finds
/// every model atom, and the loop-checking prover never contradicts the
/// model.
pub fn check_engine(needed: usize, seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let budget = Budget { max_steps: 20_000, max_depth: 24, per_depth_steps: 20_000 };
    let (mut compared, mut partial, mut generated) = (0, 0, 0);
    while compared < needed {
        generated += 1;
        if generated > needed * 5 {
            return Err(format!("only {compared} of {needed} programs had finite search trees"));
        }
        let text = random_datalog(&mut rng, 6);
        let program = Program::new(parse_file(&text).map_err(|e| e.to_string())?.clauses());
        let model = bottom_up(&program);
        let engine = Engine::new(&program).unknown_fails(true);
        let (name, arity) = *PREDS.choose(&mut rng).expect("preds");
        let q = most_general_query(name, arity);
        let expected: BTreeSet<Term> = model.iter().filter(|t| t.key() == q.key()).cloned().collect();
        let context = || format!("program:\n{text}query {}", render_term(&q));
        let found: BTreeSet<Term> = match engine.solve_dfs(std::slice::from_ref(&q), &budget, Want::All) {
            Ok(Outcome::Solutions { answers, exhausted, .. }) => {
                let got = answers.iter().map(|a| a.subst.apply(&q)).collect();
                if exhausted {
                    compared += 1;
                    if got != expected {
                        return Err(format!("{}: answers differ from the model", context()));
                    }
                } else {
                    partial += 1;
                }
                got
            }
            Ok(Outcome::FiniteFailure { .. }) => {
                compared += 1;
                if !expected.is_empty() {
                    return Err(format!("{}: failed but the model has answers", context()));
                }
                BTreeSet::new()
            }
            Ok(Outcome::BudgetExhausted { .. }) => {
                partial += 1;
                BTreeSet::new()
            }
            Err(e) => return Err(format!("{}: {e}", context())),
        };
        if !found.is_subset(&expected) {
            return Err(format!("{}: unsound answer", context()));
        }
        for atom in expected.iter().take(2) {
            if !matches!(engine.solve_fair(std::slice::from_ref(atom), &budget), Ok(Outcome::Solutions { .. })) {
                return Err(format!("{}: fair search misses {}", context(), render_term(atom)));
            }
            if matches!(engine.prove_failure_loopcheck(std::slice::from_ref(atom), &budget), Ok(LoopProof::Proven { .. })) {
                return Err(format!("{}: loop check refutes {}", context(), render_term(atom)));
            }
        }
        let args: Vec<Term> = (0..arity).map(|_| Term::atom(CONSTS.choose(&mut rng).expect("consts"))).collect();
        let ground = Term::compound(name, args);
        if !model.contains(&ground) {
            if matches!(engine.solve_fair(std::slice::from_ref(&ground), &budget), Ok(Outcome::Solutions { .. })) {
                return Err(format!("{}: fair search proves {}", context(), render_term(&ground)));
            }
            if matches!(engine.prove_failure_loopcheck(std::slice::from_ref(&ground), &budget), Ok(LoopProof::Disproven(_))) {
                return Err(format!("{}: loop check proves {}", context(), render_term(&ground)));
            }
        }
    }
    Ok(format!("{compared} programs with equal answer sets ({partial} more checked for soundness only)"))
}
