//! Grading an exercise file against a manifest of required items.
//!
//! The mark is an interval: the lower end counts what is proven, the upper
//! end additionally what is not yet decided.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::is_builtin;
use crate::feedback::{AssertionRecord, CheckReport, CodeOutcome, Status};
use crate::parser::{AssertionKind, SourceFile};
use crate::reference::Verdict;
use crate::term::{PredKey, Program, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ItemKind {
    PosGround,
    PosMostGeneral,
    Neg,
    Nonterm,
    Term,
    Defined,
    AllPass,
}

impl ItemKind {
    pub fn name(self) -> &'static str {
        match self {
            ItemKind::PosGround => "POS_GROUND",
            ItemKind::PosMostGeneral => "POS_MOST_GENERAL",
            ItemKind::Neg => "NEG",
            ItemKind::Nonterm => "NONTERM",
            ItemKind::Term => "TERM",
            ItemKind::Defined => "DEFINED",
            ItemKind::AllPass => "ALL_PASS",
        }
    }
}

impl FromStr for ItemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<ItemKind, String> {
        Ok(match s {
            "POS_GROUND" => ItemKind::PosGround,
            "POS_MOST_GENERAL" => ItemKind::PosMostGeneral,
            "NEG" => ItemKind::Neg,
            "NONTERM" => ItemKind::Nonterm,
            "TERM" => ItemKind::Term,
            "DEFINED" => ItemKind::Defined,
            "ALL_PASS" => ItemKind::AllPass,
            _ => return Err(format!("unknown item kind `{s}`")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestItem {
    pub kind: ItemKind,
    pub target: PredKey,
    pub weight: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExerciseManifest {
    pub name: String,
    pub items: Vec<ManifestItem>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("manifest line {line}: {message}")]
pub struct ManifestError {
    pub line: usize,
    pub message: String,
}

fn parse_pred(s: &str) -> Option<PredKey> {
    let (name, arity) = s.rsplit_once('/')?;
    let arity = arity.parse().ok()?;
    (!name.is_empty()).then(|| PredKey::new(name, arity))
}

impl ExerciseManifest {
    /// Reads `name: <exercise>` and `item <KIND> <name>/<arity> [weight]`
    /// lines. Blank lines and lines starting with `#` or `%` are ignored.
    pub fn parse(text: &str) -> Result<ExerciseManifest, ManifestError> {
        let mut name = None;
        let mut items = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| ManifestError { line, message };
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') || l.starts_with('%') {
                continue;
            }
            if let Some(n) = l.strip_prefix("name:") {
                name = Some(n.trim().to_owned());
                continue;
            }
            let words: Vec<&str> = l.split_whitespace().collect();
            match words.as_slice() {
                ["item", kind, pred, rest @ ..] if rest.len() <= 1 => {
                    let kind = kind.parse().map_err(err)?;
                    let target = parse_pred(pred).ok_or_else(|| err(format!("expected name/arity, found `{pred}`")))?;
                    let weight = match rest {
                        [w] => w.parse().ok().filter(|w| *w > 0).ok_or_else(|| err(format!("bad weight `{w}`")))?,
                        _ => 1,
                    };
                    items.push(ManifestItem { kind, target, weight });
                }
                _ => return Err(err(format!("cannot read `{l}`"))),
            }
        }
        let name = name.ok_or(ManifestError { line: 0, message: "missing `name:` header".to_owned() })?;
        if items.is_empty() {
            return Err(ManifestError { line: 0, message: "no items".to_owned() });
        }
        Ok(ExerciseManifest { name, items })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ItemState {
    Satisfied,
    Violated,
    Inconclusive,
    Absent,
}

impl ItemState {
    pub fn name(self) -> &'static str {
        match self {
            ItemState::Satisfied => "SATISFIED",
            ItemState::Violated => "VIOLATED",
            ItemState::Inconclusive => "INCONCLUSIVE",
            ItemState::Absent => "ABSENT",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkInterval {
    pub low_percent: u32,
    pub high_percent: u32,
    pub items: Vec<(ManifestItem, ItemState)>,
}

impl MarkInterval {
    pub fn satisfied(&self) -> usize {
        self.items.iter().filter(|(_, s)| *s == ItemState::Satisfied).count()
    }
}

impl fmt::Display for MarkInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}–{}% ({}/{} satisfied)", self.low_percent, self.high_percent, self.satisfied(), self.items.len())
    }
}

/// The interval for weighted item states.
pub fn interval(states: &[(u32, ItemState)]) -> (u32, u32) {
    let total: u64 = states.iter().map(|(w, _)| u64::from(*w)).sum();
    if total == 0 {
        return (0, 0);
    }
    let weight_of = |keep: &dyn Fn(ItemState) -> bool| -> u64 {
        states.iter().filter(|(_, s)| keep(*s)).map(|(w, _)| u64::from(*w)).sum()
    };
    let sat = weight_of(&|s| s == ItemState::Satisfied);
    let open = weight_of(&|s| s == ItemState::Inconclusive);
    let low = 100 * sat / total;
    let high = 100 * (sat + open) / total;
    (low as u32, high as u32)
}

fn mentions(r: &AssertionRecord, key: &PredKey) -> bool {
    r.assertion.goals.iter().any(|g| g.key().as_ref() == Some(key))
}

fn ends_in_false(r: &AssertionRecord) -> bool {
    r.assertion.goals.last().is_some_and(|g| g.is_atom("false"))
}

fn most_general(goals: &[Term], key: &PredKey) -> bool {
    let [g] = goals else { return false };
    if g.key().as_ref() != Some(key) {
        return false;
    }
    let vars: Vec<_> = g.args().iter().filter_map(Term::as_var).map(|v| v.id).collect();
    let mut dedup = vars.clone();
    dedup.sort();
    dedup.dedup();
    vars.len() == g.args().len() && dedup.len() == vars.len()
}

/// Judges one matching assertion. `confirmed` says whether the evidence
/// asked for by the item is there.
fn judge(r: &AssertionRecord, confirmed: bool) -> ItemState {
    match &r.status {
        Status::Ok if confirmed => ItemState::Satisfied,
        Status::Ok | Status::Inconclusive(_) => ItemState::Inconclusive,
        _ => ItemState::Violated,
    }
}

fn classify(item: &ManifestItem, program: &Program, report: &CheckReport) -> ItemState {
    let key = &item.target;
    let of_kind = |kind: AssertionKind| report.records.iter().filter(move |r| r.assertion.kind == kind && mentions(r, key));
    let by_precedence = |s: ItemState| match s {
        ItemState::Satisfied => 0,
        ItemState::Inconclusive => 1,
        ItemState::Violated => 2,
        ItemState::Absent => 3,
    };
    // one satisfied assertion is enough
    let pick = |states: Vec<ItemState>| states.into_iter().min_by_key(|s| by_precedence(*s)).unwrap_or(ItemState::Absent);
    match item.kind {
        ItemKind::PosGround => pick(
            of_kind(AssertionKind::Pos)
                .filter(|r| r.assertion.goals.iter().all(Term::is_ground))
                .map(|r| judge(r, matches!(r.verdict, Verdict::True { .. })))
                .collect(),
        ),
        ItemKind::PosMostGeneral => pick(
            of_kind(AssertionKind::Pos)
                .filter(|r| most_general(&r.assertion.goals, key))
                .map(|r| judge(r, r.verdict.is_decisive() || r.code != CodeOutcome::NotRun))
                .collect(),
        ),
        ItemKind::Neg => pick(
            of_kind(AssertionKind::Neg)
                .filter(|r| !ends_in_false(r))
                .map(|r| judge(r, r.verdict == Verdict::False))
                .collect(),
        ),
        ItemKind::Nonterm => pick(
            of_kind(AssertionKind::NegFair)
                .filter(|r| ends_in_false(r))
                .map(|r| judge(r, matches!(r.code, CodeOutcome::NonTerminating { .. })))
                .collect(),
        ),
        ItemKind::Term => pick(
            of_kind(AssertionKind::Neg)
                .filter(|r| ends_in_false(r))
                .map(|r| judge(r, matches!(r.code, CodeOutcome::Terminates { solutions: 0 })))
                .collect(),
        ),
        ItemKind::Defined => {
            if is_builtin(key) || program.defines(key) {
                ItemState::Satisfied
            } else {
                ItemState::Absent
            }
        }
        ItemKind::AllPass => {
            if report.records.is_empty() {
                ItemState::Absent
            } else if !report.missing.is_empty()
                || report.records.iter().any(|r| !r.status.is_ok() && !r.status.is_inconclusive())
            {
                ItemState::Violated
            } else if report.records.iter().all(|r| r.status.is_ok()) {
                ItemState::Satisfied
            } else {
                ItemState::Inconclusive
            }
        }
    }
}

pub fn mark_exercise(file: &SourceFile, report: &CheckReport, manifest: &ExerciseManifest) -> MarkInterval {
    let program = Program::new(file.clauses());
    let items: Vec<(ManifestItem, ItemState)> =
        manifest.items.iter().map(|it| (it.clone(), classify(it, &program, report))).collect();
    let weighted: Vec<(u32, ItemState)> = items.iter().map(|(it, s)| (it.weight, *s)).collect();
    let (low_percent, high_percent) = interval(&weighted);
    MarkInterval { low_percent, high_percent, items }
}
