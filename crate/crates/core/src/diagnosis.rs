//! Explanations for assertions the reference disagrees with. An incorrect
//! negative assertion gets a more specific positive one; an incorrect
//! positive assertion gets staged generalizations that still fail.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::engine::Budget;
use crate::parser::{Assertion, AssertionKind};
use crate::reference::{Registry, Verdict};
use crate::render::{render_conj, render_suggestion, FeedbackLine, Severity};
use crate::term::{vars_of_all, Term, Var, VarAllocator};
use crate::unify::{canonical_all, enumerate_subterms, replace_at, Bindings, Path};

/// Verdict calls allowed per generalization stage.
pub const STAGE_CAP: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    R1,
    R2,
    R3,
    R4,
    R5,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Larger is more general: smaller terms first, then more distinct
/// variables, then fewer goals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GeneralityKey {
    neg_size: i64,
    vars: usize,
    neg_goals: i64,
}

pub fn generality_key(goals: &[Term]) -> GeneralityKey {
    GeneralityKey {
        neg_size: -(goals.iter().map(Term::size).sum::<usize>() as i64),
        vars: vars_of_all(goals).len(),
        neg_goals: -(goals.len() as i64),
    }
}

/// Whether `a` is strictly more general than `b`.
pub fn more_general(a: &[Term], b: &[Term]) -> bool {
    generality_key(a) > generality_key(b)
}

type Position = (usize, Path, Term);

fn positions(goals: &[Term]) -> Vec<Position> {
    goals
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| enumerate_subterms(g).into_iter().map(move |(p, t)| (gi, p, t)))
        .collect()
}

fn overlap(a: &Position, b: &Position) -> bool {
    a.0 == b.0 && (a.1.starts_with(&b.1) || b.1.starts_with(&a.1))
}

fn replace_all(goals: &[Term], at: &[(usize, &Path)], with: &Term) -> Vec<Term> {
    let mut out = goals.to_vec();
    for (gi, path) in at {
        out[*gi] = replace_at(&out[*gi], path, with.clone());
    }
    out
}

/// All single applications of `rule`, unverified.
pub fn apply_rule(rule: Rule, goals: &[Term], registry: &Registry) -> Vec<Vec<Term>> {
    let mut alloc = VarAllocator::above(goals);
    let mut out = Vec::new();
    match rule {
        Rule::R1 => {
            // deleting the last goal leaves `true`, which never fails
            if goals.len() > 1 {
                for i in 0..goals.len() {
                    let mut c = goals.to_vec();
                    c.remove(i);
                    out.push(c);
                }
            }
        }
        Rule::R2 => {
            for (gi, path, t) in positions(goals) {
                if !t.is_var() {
                    let v = Term::Var(alloc.fresh());
                    out.push(replace_all(goals, &[(gi, &path)], &v));
                }
            }
        }
        Rule::R3 => {
            let mut classes: BTreeMap<Term, Vec<(usize, Path)>> = BTreeMap::new();
            for (gi, path, t) in positions(goals) {
                if !t.is_var() {
                    classes.entry(t).or_default().push((gi, path));
                }
            }
            for occ in classes.values().filter(|o| o.len() >= 2) {
                let v = Term::Var(alloc.fresh());
                let at: Vec<(usize, &Path)> = occ.iter().map(|(gi, p)| (*gi, p)).collect();
                out.push(replace_all(goals, &at, &v));
            }
        }
        Rule::R4 => {
            let ps: Vec<Position> = positions(goals).into_iter().filter(|p| !p.2.is_var()).collect();
            let mut b = Bindings::new();
            for i in 0..ps.len() {
                for j in i + 1..ps.len() {
                    if overlap(&ps[i], &ps[j]) || b.unifiable(&ps[i].2, &ps[j].2) {
                        continue;
                    }
                    let v1 = Term::Var(alloc.fresh());
                    let v2 = Term::Var(alloc.fresh());
                    let mut c = replace_all(goals, &[(ps[i].0, &ps[i].1)], &v1);
                    c = replace_all(&c, &[(ps[j].0, &ps[j].1)], &v2);
                    c.push(Term::compound("dif", vec![v1, v2]));
                    out.push(c);
                }
            }
        }
        Rule::R5 => {
            for (gi, g) in goals.iter().enumerate() {
                for rhs in registry.lookup_implications_with(g, &mut alloc) {
                    let mut c = goals[..gi].to_vec();
                    c.extend(rhs);
                    c.extend_from_slice(&goals[gi + 1..]);
                    out.push(c);
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageSpec {
    pub label: &'static str,
    pub rules: &'static [Rule],
    pub rules_text: &'static str,
}

pub const STAGES: [StageSpec; 3] = [
    StageSpec { label: "Generalized negative assertion", rules: &[Rule::R1, Rule::R2], rules_text: "R1,R2" },
    StageSpec { label: "Further generalization", rules: &[Rule::R1, Rule::R2, Rule::R3, Rule::R4], rules_text: "R1-R4" },
    StageSpec {
        label: "Further generalization",
        rules: &[Rule::R1, Rule::R2, Rule::R3, Rule::R4, Rule::R5],
        rules_text: "R1-R5",
    },
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stage {
    pub label: String,
    pub rules: String,
    pub kind: AssertionKind,
    pub equations: Vec<(Var, Term)>,
    pub goals: Vec<Term>,
}

impl Stage {
    pub fn note(&self) -> String {
        if self.rules.is_empty() {
            self.label.clone()
        } else {
            format!("{} (using {})", self.label, self.rules)
        }
    }

    /// The suggested assertion, parseable as written.
    pub fn suggestion(&self) -> String {
        render_suggestion(self.kind, &self.equations, &self.goals, "", 0).pop().expect("assertion line").text
    }
}

/// Best-first search for the most general candidate reachable with
/// `rules` that `verify` accepts. Returns the start when nothing better
/// survives.
pub fn generalize_stage(
    start: &[Term],
    rules: &[Rule],
    registry: &Registry,
    cap: usize,
    verify: &mut dyn FnMut(&[Term]) -> bool,
) -> Vec<Term> {
    type Entry = (GeneralityKey, Reverse<String>, Vec<Term>);
    let entry = |goals: Vec<Term>| -> Entry { (generality_key(&goals), Reverse(render_conj(&goals)), goals) };
    let mut seen: HashSet<Vec<Term>> = HashSet::new();
    seen.insert(canonical_all(start));
    let mut frontier: BinaryHeap<Entry> = BinaryHeap::new();
    let mut best = entry(start.to_vec());
    frontier.push(best.clone());
    let mut calls = 0usize;
    'search: while let Some((_, _, goals)) = frontier.pop() {
        for &rule in rules {
            for child in apply_rule(rule, &goals, registry) {
                if !seen.insert(canonical_all(&child)) {
                    continue;
                }
                if calls >= cap {
                    break 'search;
                }
                calls += 1;
                if verify(&child) {
                    let e = entry(child);
                    if (&e.0, &e.1) > (&best.0, &best.1) {
                        best = e.clone();
                    }
                    frontier.push(e);
                }
            }
        }
    }
    best.2
}

/// Runs the three stages from `goals`, each from the original goals,
/// keeping a stage only when it is strictly more general than the one
/// shown before it.
pub fn generalize(goals: &[Term], registry: &Registry, verify: &mut dyn FnMut(&[Term]) -> bool) -> Vec<Stage> {
    let mut shown: Vec<Term> = goals.to_vec();
    let mut stages = Vec::new();
    for spec in &STAGES {
        let result = generalize_stage(goals, spec.rules, registry, STAGE_CAP, verify);
        if more_general(&result, &shown) {
            shown = result.clone();
            stages.push(Stage {
                label: spec.label.to_owned(),
                rules: spec.rules_text.to_owned(),
                kind: AssertionKind::Neg,
                equations: Vec::new(),
                goals: result,
            });
        }
    }
    stages
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExplanationKind {
    SpecializedPositive,
    GeneralizedNegative,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Explanation {
    pub kind: ExplanationKind,
    pub stages: Vec<Stage>,
    pub anchor_line: usize,
}

impl Explanation {
    pub fn headline(&self) -> &'static str {
        match self.kind {
            ExplanationKind::SpecializedPositive => "!= should be a positive assertion",
            ExplanationKind::GeneralizedNegative => "!= should be a negative assertion",
        }
    }

    /// The `%@@` block inserted after the assertion.
    pub fn feedback_lines(&self) -> Vec<FeedbackLine> {
        let mut out = vec![FeedbackLine {
            severity: Severity::Suggestion,
            text: format!("% {}", self.headline()),
            anchor_line: self.anchor_line,
        }];
        for s in &self.stages {
            out.extend(render_suggestion(s.kind, &s.equations, &s.goals, &s.note(), self.anchor_line));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DiagnosisError {
    #[error("the reference does not contradict this assertion ({0:?})")]
    NotContradicted(Verdict),
    #[error("only plain positive and negative assertions can be explained")]
    UnsupportedKind,
}

pub fn explain_incorrect_negative(goals: &[Term], registry: &Registry, budget: &Budget) -> Result<Explanation, DiagnosisError> {
    match registry.reference_verdict(goals, budget) {
        Verdict::True { answer, grounding } => Ok(Explanation {
            kind: ExplanationKind::SpecializedPositive,
            stages: vec![Stage {
                label: "Also this more specific query should be true.".to_owned(),
                rules: String::new(),
                kind: AssertionKind::Pos,
                equations: grounding,
                goals: answer.apply_all(goals),
            }],
            anchor_line: 0,
        }),
        other => Err(DiagnosisError::NotContradicted(other)),
    }
}

pub fn explain_incorrect_positive(goals: &[Term], registry: &Registry, budget: &Budget) -> Result<Explanation, DiagnosisError> {
    match registry.reference_verdict(goals, budget) {
        Verdict::False => {
            let mut verify = |c: &[Term]| registry.reference_verdict(c, budget).is_false();
            Ok(Explanation {
                kind: ExplanationKind::GeneralizedNegative,
                stages: generalize(goals, registry, &mut verify),
                anchor_line: 0,
            })
        }
        other => Err(DiagnosisError::NotContradicted(other)),
    }
}

pub fn explain_assertion(a: &Assertion, registry: &Registry, budget: &Budget) -> Result<Explanation, DiagnosisError> {
    let mut e = match a.kind {
        AssertionKind::Pos => explain_incorrect_positive(&a.goals, registry, budget)?,
        AssertionKind::Neg => explain_incorrect_negative(&a.goals, registry, budget)?,
        _ => return Err(DiagnosisError::UnsupportedKind),
    };
    e.anchor_line = a.last_line;
    Ok(e)
}
