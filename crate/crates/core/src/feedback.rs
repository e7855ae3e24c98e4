//! Checks every assertion of a file and writes the results back into the
//! file as `%@` lines.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::engine::{is_builtin, Budget, Engine, EngineError, LoopCertificate, LoopProof, Outcome, Termination, Want};
use crate::parser::{parse_file, strip_machine_lines, Assertion, AssertionKind, SourceFile};
use crate::reference::{ground_answer, Registry, Unspecified, Verdict};
use crate::render::{render_term, FeedbackLine, Severity};
use crate::term::{vars_of_all, PredKey, Program, Term};
use crate::unify::Substitution;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Ok,
    RefMismatchNeg,
    RefMismatchPos,
    CodeUnexpectedFailure,
    CodeUnexpectedSuccess,
    WrongFirstAnswer,
    Nontermination,
    FairUnexpectedSuccess,
    FairUnexpectedFailure,
    Inconclusive(String),
    /// Only used by file-level [`MissingDefinition`] records.
    DefMissing,
}

impl Status {
    pub fn code(&self) -> &'static str {
        match self {
            Status::Ok => "OK",
            Status::RefMismatchNeg => "REF_MISMATCH_NEG",
            Status::RefMismatchPos => "REF_MISMATCH_POS",
            Status::CodeUnexpectedFailure => "CODE_UNEXPECTED_FAILURE",
            Status::CodeUnexpectedSuccess => "CODE_UNEXPECTED_SUCCESS",
            Status::WrongFirstAnswer => "WRONG_FIRST_ANSWER",
            Status::Nontermination => "NONTERMINATION",
            Status::FairUnexpectedSuccess => "FAIR_UNEXPECTED_SUCCESS",
            Status::FairUnexpectedFailure => "FAIR_UNEXPECTED_FAILURE",
            Status::Inconclusive(_) => "INCONCLUSIVE",
            Status::DefMissing => "DEF_MISSING",
        }
    }

    pub fn is_ok(&self) -> bool {
        *self == Status::Ok
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self, Status::Inconclusive(_))
    }

    fn severity(&self) -> Severity {
        match self {
            Status::RefMismatchNeg | Status::RefMismatchPos => Severity::RefMismatch,
            Status::CodeUnexpectedFailure | Status::CodeUnexpectedSuccess => Severity::CodeFail,
            Status::WrongFirstAnswer => Severity::CodeWrongAnswer,
            Status::Nontermination => Severity::Nontermination,
            Status::FairUnexpectedSuccess | Status::FairUnexpectedFailure => Severity::FairMismatch,
            Status::Inconclusive(_) => Severity::Inconclusive,
            Status::DefMissing => Severity::DefMissing,
            Status::Ok => unreachable!("OK has no message"),
        }
    }

    /// The message written after `%@ `. `at` is the `file:line` pointer
    /// used by the follow-up commands.
    pub fn message(&self, at: &str) -> Option<String> {
        Some(match self {
            Status::Ok | Status::DefMissing => return None,
            Status::RefMismatchPos => format!("!= should be negative — details: explain {at}"),
            Status::RefMismatchNeg => format!("!= should be positive — details: explain {at}"),
            Status::CodeUnexpectedFailure => format!("! unexpected failure — details: slice {at}"),
            Status::CodeUnexpectedSuccess => "! unexpected success".to_owned(),
            Status::WrongFirstAnswer => format!("!= first solution is incorrect — details: slice {at}"),
            Status::Nontermination => format!("! universal non-termination — details: slice {at}"),
            Status::FairUnexpectedSuccess => "!++ unexpected success under fair search".to_owned(),
            Status::FairUnexpectedFailure => "!++ unexpected failure under fair search".to_owned(),
            Status::Inconclusive(reason) => format!("? inconclusive ({reason})"),
        })
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Inconclusive(r) => write!(f, "INCONCLUSIVE ({r})"),
            s => f.write_str(s.code()),
        }
    }
}

/// What running the user's clauses showed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CodeOutcome {
    /// Some goal predicate has no user clauses.
    NotRun,
    Failure,
    /// First answer, restricted to the query variables.
    Answer { witness: Substitution, fair: bool },
    BudgetExhausted,
    Terminates { solutions: usize },
    NonTerminating { certificate: LoopCertificate, solutions: usize },
    TerminationUnknown { solutions: usize },
    LoopProven,
    LoopDisproven { witness: Substitution },
    LoopUnknown,
    Error(String),
}

impl CodeOutcome {
    pub fn witness(&self) -> Option<&Substitution> {
        match self {
            CodeOutcome::Answer { witness, .. } | CodeOutcome::LoopDisproven { witness } => Some(witness),
            _ => None,
        }
    }
}

/// `X = t, ...` for the named variables; anonymous ones are left out.
pub fn render_witness(s: &Substitution) -> String {
    let parts: Vec<String> = s
        .iter()
        .filter_map(|(v, t)| {
            let name = v.name.as_deref().filter(|n| !n.starts_with('_'))?;
            Some(format!("{name} = {}", render_term(t)))
        })
        .collect();
    if parts.is_empty() {
        "true".to_owned()
    } else {
        parts.join(", ")
    }
}

impl fmt::Display for CodeOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeOutcome::NotRun => f.write_str("not run"),
            CodeOutcome::Failure => f.write_str("finite failure"),
            CodeOutcome::Answer { witness, fair: false } => write!(f, "first answer {}", render_witness(witness)),
            CodeOutcome::Answer { witness, fair: true } => write!(f, "fair answer {}", render_witness(witness)),
            CodeOutcome::BudgetExhausted => f.write_str("budget exhausted"),
            CodeOutcome::Terminates { solutions } => write!(f, "terminates with {solutions} solution(s)"),
            CodeOutcome::NonTerminating { solutions, .. } => {
                write!(f, "does not terminate ({solutions} solution(s) before the loop)")
            }
            CodeOutcome::TerminationUnknown { solutions } => write!(f, "termination unknown ({solutions} solution(s))"),
            CodeOutcome::LoopProven => f.write_str("fails under the loop check"),
            CodeOutcome::LoopDisproven { witness } => write!(f, "succeeds with {}", render_witness(witness)),
            CodeOutcome::LoopUnknown => f.write_str("loop check inconclusive"),
            CodeOutcome::Error(e) => write!(f, "error: {e}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssertionRecord {
    pub assertion: Assertion,
    pub verdict: Verdict,
    pub code: CodeOutcome,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MissingDefinition {
    pub key: PredKey,
    /// Index into [`CheckReport::records`] of the last assertion using it.
    pub after: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckReport {
    pub records: Vec<AssertionRecord>,
    pub missing: Vec<MissingDefinition>,
}

impl CheckReport {
    /// True when no message would be written.
    pub fn is_clean(&self) -> bool {
        self.missing.is_empty() && self.records.iter().all(|r| r.status.is_ok())
    }

    pub fn findings(&self) -> usize {
        self.missing.len() + self.records.iter().filter(|r| !r.status.is_ok() && !r.status.is_inconclusive()).count()
    }
}

fn user_defined(program: &Program, goals: &[Term]) -> bool {
    goals.iter().all(|g| g.key().is_some_and(|k| is_builtin(&k) || program.defines(&k)))
}

fn engine_reason(e: &EngineError) -> String {
    match e {
        EngineError::UnknownPredicate(k) => format!("unknown predicate {k}"),
    }
}

fn first_answer_status(goals: &[Term], witness: &Substitution, registry: &Registry, budget: &Budget, answer: &crate::engine::Answer) -> Status {
    // pending difs must survive the grounding, otherwise no judgment
    let Some(grounding) = ground_answer(goals, answer) else {
        return Status::Ok;
    };
    let mut sub = Substitution::new();
    for (v, t) in grounding {
        sub.insert(v, t);
    }
    let instance = sub.apply_all(&witness.apply_all(goals));
    if registry.reference_verdict(&instance, budget).is_false() {
        Status::WrongFirstAnswer
    } else {
        Status::Ok
    }
}

fn code_positive(program: &Program, goals: &[Term], registry: &Registry, budget: &Budget) -> (CodeOutcome, Status) {
    let engine = Engine::new(program);
    let vars = vars_of_all(goals);
    let judge = |outcome: Result<Outcome, EngineError>, fair: bool| match outcome {
        Err(e) => Some((CodeOutcome::Error(engine_reason(&e)), Status::Inconclusive(engine_reason(&e)))),
        Ok(Outcome::FiniteFailure { .. }) => Some((CodeOutcome::Failure, Status::CodeUnexpectedFailure)),
        Ok(Outcome::Solutions { answers, .. }) => {
            let a = &answers[0];
            let witness = a.subst.restrict(&vars);
            let status = first_answer_status(goals, &witness, registry, budget, a);
            Some((CodeOutcome::Answer { witness, fair }, status))
        }
        Ok(Outcome::BudgetExhausted { .. }) => None,
    };
    judge(engine.solve_dfs(goals, budget, Want::First), false)
        .or_else(|| judge(engine.solve_fair(goals, budget), true))
        .unwrap_or((CodeOutcome::BudgetExhausted, Status::Inconclusive("budget exhausted".to_owned())))
}

fn termination(program: &Program, goals: &[Term], budget: &Budget) -> Result<CodeOutcome, EngineError> {
    Ok(match Engine::new(program).check_universal_termination(goals, budget)? {
        Termination::Terminates { solutions } => CodeOutcome::Terminates { solutions },
        Termination::NonTerminating { certificate, solutions } => CodeOutcome::NonTerminating { certificate, solutions },
        Termination::Unknown { solutions } => CodeOutcome::TerminationUnknown { solutions },
    })
}

fn code_negative(program: &Program, goals: &[Term], budget: &Budget) -> (CodeOutcome, Status) {
    match termination(program, goals, budget) {
        Err(e) => (CodeOutcome::Error(engine_reason(&e)), Status::Inconclusive(engine_reason(&e))),
        Ok(o) => {
            let status = match &o {
                CodeOutcome::Terminates { solutions: 0 } => Status::Ok,
                CodeOutcome::Terminates { .. }
                | CodeOutcome::NonTerminating { solutions: 1.., .. }
                | CodeOutcome::TerminationUnknown { solutions: 1.. } => Status::CodeUnexpectedSuccess,
                CodeOutcome::NonTerminating { .. } => Status::Nontermination,
                _ => Status::Inconclusive("budget exhausted".to_owned()),
            };
            (o, status)
        }
    }
}

fn loopcheck(program: &Program, goals: &[Term], budget: &Budget) -> Result<CodeOutcome, EngineError> {
    Ok(match Engine::new(program).prove_failure_loopcheck(goals, budget)? {
        LoopProof::Proven { .. } => CodeOutcome::LoopProven,
        LoopProof::Disproven(a) => CodeOutcome::LoopDisproven { witness: a.subst.restrict(&vars_of_all(goals)) },
        LoopProof::Unknown { .. } => CodeOutcome::LoopUnknown,
    })
}

fn code_positive_fair(program: &Program, goals: &[Term], budget: &Budget) -> (CodeOutcome, Status) {
    let inconclusive = |e: EngineError| (CodeOutcome::Error(engine_reason(&e)), Status::Inconclusive(engine_reason(&e)));
    match Engine::new(program).solve_fair(goals, budget) {
        Err(e) => inconclusive(e),
        Ok(Outcome::FiniteFailure { .. }) => (CodeOutcome::Failure, Status::FairUnexpectedFailure),
        Ok(Outcome::Solutions { answers, .. }) => {
            let witness = answers[0].subst.restrict(&vars_of_all(goals));
            (CodeOutcome::Answer { witness, fair: true }, Status::Ok)
        }
        Ok(Outcome::BudgetExhausted { .. }) => match loopcheck(program, goals, budget) {
            Err(e) => inconclusive(e),
            Ok(CodeOutcome::LoopProven) => (CodeOutcome::LoopProven, Status::FairUnexpectedFailure),
            Ok(o @ CodeOutcome::LoopDisproven { .. }) => (o, Status::Ok),
            Ok(o) => (o, Status::Inconclusive("budget exhausted".to_owned())),
        },
    }
}

fn code_negative_fair(program: &Program, goals: &[Term], budget: &Budget) -> (CodeOutcome, Status) {
    let ends_in_false = goals.last().is_some_and(|g| g.is_atom("false"));
    let result = if ends_in_false { termination(program, goals, budget) } else { loopcheck(program, goals, budget) };
    match result {
        Err(e) => (CodeOutcome::Error(engine_reason(&e)), Status::Inconclusive(engine_reason(&e))),
        Ok(o) => {
            let status = match &o {
                CodeOutcome::Terminates { .. } => Status::CodeUnexpectedSuccess,
                CodeOutcome::NonTerminating { .. } | CodeOutcome::LoopProven => Status::Ok,
                CodeOutcome::LoopDisproven { .. } => Status::FairUnexpectedSuccess,
                CodeOutcome::TerminationUnknown { .. } => Status::Inconclusive("no loop found".to_owned()),
                _ => Status::Inconclusive("budget exhausted".to_owned()),
            };
            (o, status)
        }
    }
}

/// Checks one assertion against the reference and then against `program`.
pub fn check_assertion(program: &Program, a: &Assertion, registry: &Registry, budget: &Budget) -> AssertionRecord {
    let goals = &a.goals;
    let verdict = match a.kind {
        AssertionKind::Pos | AssertionKind::Neg => registry.reference_verdict(goals, budget),
        _ => Verdict::Unspecified(Unspecified::Pending),
    };
    let reference_status = match (a.kind, &verdict) {
        (AssertionKind::Pos, Verdict::False) => Some(Status::RefMismatchPos),
        (AssertionKind::Neg, Verdict::True { .. }) => Some(Status::RefMismatchNeg),
        _ => None,
    };
    let (code, code_status) = if user_defined(program, goals) {
        match a.kind {
            AssertionKind::Pos => code_positive(program, goals, registry, budget),
            AssertionKind::Neg => code_negative(program, goals, budget),
            AssertionKind::PosFair => code_positive_fair(program, goals, budget),
            AssertionKind::NegFair => code_negative_fair(program, goals, budget),
        }
    } else {
        (CodeOutcome::NotRun, Status::Ok)
    };
    let status = reference_status.unwrap_or(code_status);
    AssertionRecord { assertion: a.clone(), verdict, code, status }
}

/// Runs all checks. Assertions are independent and checked in parallel;
/// the report keeps source order.
pub fn check_file(file: &SourceFile, registry: &Registry, budget: &Budget) -> CheckReport {
    let program = Program::new(file.clauses());
    let assertions = file.assertions();
    let records: Vec<AssertionRecord> =
        assertions.par_iter().map(|a| check_assertion(&program, a, registry, budget)).collect();

    let mut last_use: BTreeMap<PredKey, usize> = BTreeMap::new();
    for (i, a) in assertions.iter().enumerate() {
        for k in a.goals.iter().filter_map(Term::key) {
            if !is_builtin(&k) && !program.defines(&k) {
                last_use.insert(k, i);
            }
        }
    }
    let mut missing: Vec<MissingDefinition> =
        last_use.into_iter().map(|(key, after)| MissingDefinition { key, after }).collect();
    missing.sort_by_key(|m| m.after);
    CheckReport { records, missing }
}

/// Text of the feedback lines for one report, keyed by the index of the
/// assertion they follow. `line_of` gives the line an assertion will have
/// in the annotated file.
fn feedback_for(report: &CheckReport, label: &str, line_of: &[usize]) -> Vec<Vec<FeedbackLine>> {
    let mut out: Vec<Vec<FeedbackLine>> = vec![Vec::new(); report.records.len()];
    for (i, r) in report.records.iter().enumerate() {
        if let Some(text) = r.status.message(&format!("{label}:{}", line_of[i])) {
            out[i].push(FeedbackLine { severity: r.status.severity(), text, anchor_line: line_of[i] });
        }
    }
    for m in &report.missing {
        let text = format!("!def {}/{} missing", m.key.name, m.key.arity);
        out[m.after].push(FeedbackLine { severity: Severity::DefMissing, text, anchor_line: line_of[m.after] });
    }
    out
}

/// Rewrites `file` with the findings of `report` as `%@` lines below the
/// assertions. `label` is the file name used in the `explain`/`slice`
/// pointers; line numbers in them refer to the annotated text.
pub fn annotate_file(file: &SourceFile, report: &CheckReport, label: &str) -> SourceFile {
    parse_file(&annotate_text(file, report, label)).expect("annotation keeps the file parseable")
}

pub fn annotate_text(file: &SourceFile, report: &CheckReport, label: &str) -> String {
    let clean = strip_machine_lines(file);
    let assertions = clean.assertions();
    assert_eq!(assertions.len(), report.records.len(), "report belongs to another file");

    // each assertion moves down by the lines inserted above it
    let mut line_of = Vec::with_capacity(assertions.len());
    let mut shift = 0;
    let mut per_assertion = vec![0usize; assertions.len()];
    for (i, r) in report.records.iter().enumerate() {
        per_assertion[i] = usize::from(!r.status.is_ok());
    }
    for m in &report.missing {
        per_assertion[m.after] += 1;
    }
    for (i, a) in assertions.iter().enumerate() {
        line_of.push(a.line + shift);
        shift += per_assertion[i];
    }
    let lines = feedback_for(report, label, &line_of);

    let mut after: BTreeMap<usize, &[FeedbackLine]> = BTreeMap::new();
    for (i, a) in assertions.iter().enumerate() {
        after.insert(a.last_line, &lines[i]);
    }
    let mut out = String::new();
    for (idx, raw) in clean.lines().iter().enumerate() {
        out.push_str(raw);
        if let Some(fl) = after.get(&(idx + 1)).filter(|fl| !fl.is_empty()) {
            if !raw.ends_with('\n') {
                out.push('\n');
            }
            for l in fl.iter() {
                out.push_str(&l.render());
                out.push('\n');
            }
        }
    }
    out
}
