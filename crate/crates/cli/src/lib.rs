//! The `exemplar` command: check, explain, slice and mark exercise files.

pub mod report;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use exemplar_core::diagnosis::{explain_assertion, DiagnosisError, Stage};
use exemplar_core::feedback::{check_assertion, render_witness, AssertionRecord};
use exemplar_core::marking::ItemState;
use exemplar_core::render::render_group;
use exemplar_core::slicer::{
    all_parts, intersect_fragments, render_fragment, slice_incorrectness, slice_insufficiency, slice_nontermination,
    LineSet, Part, ProgramFragment, SliceError,
};
use exemplar_core::{
    annotate_text, check_file, mark_exercise, parse_file, Assertion, Budget, CheckReport, Engine, ExerciseManifest,
    Outcome, Program, Registry, SourceFile, Status, Unspecified, Verdict, Want,
};

use report::*;

const DEFAULT_STEPS: u64 = 100_000;
const DEFAULT_DEPTH: u32 = 64;
const DEFAULT_PER_DEPTH: u64 = 50_000;

#[derive(Parser, Debug)]
#[command(name = "exemplar", version, about = "Checks logic-program exercises against example assertions")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct Global {
    /// Resolution steps allowed per query
    #[arg(long, global = true, value_name = "N", default_value_t = DEFAULT_STEPS,
          value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: u64,
    /// Deepest bound tried by fair search
    #[arg(long = "fair-depth", global = true, value_name = "N", default_value_t = DEFAULT_DEPTH,
          value_parser = clap::value_parser!(u32).range(1..))]
    pub fair_depth: u32,
    /// Resolution steps allowed per fair-search pass
    #[arg(long = "per-depth", global = true, value_name = "N", default_value_t = DEFAULT_PER_DEPTH,
          value_parser = clap::value_parser!(u64).range(1..))]
    pub per_depth: u64,
    /// Directory with *.ref.pl, *.ref.chr and *.imp files replacing the shipped references
    #[arg(long, global = true, value_name = "DIR")]
    pub refs: Option<PathBuf>,
    /// Check user code only, without any reference
    #[arg(long = "no-reference", global = true, conflicts_with = "refs")]
    pub no_reference: bool,
    /// Print machine-readable output
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check every assertion of FILE
    Check {
        file: PathBuf,
        /// Print the file with feedback lines inserted
        #[arg(long)]
        annotate: bool,
        /// Rewrite FILE instead of printing it
        #[arg(long, requires = "annotate")]
        in_place: bool,
    },
    /// Explain why the reference disagrees with the assertion at FILE:LINE
    Explain {
        #[arg(value_name = "FILE:LINE")]
        target: String,
        /// Insert the suggestions below the assertion
        #[arg(long)]
        annotate: bool,
        /// Rewrite the file instead of printing it
        #[arg(long, requires = "annotate")]
        in_place: bool,
    },
    /// Show the program fragment responsible for a failing assertion
    Slice {
        #[arg(value_name = "FILE:LINE")]
        target: String,
        /// Which slice; by default it follows the assertion's status
        #[arg(long, value_enum)]
        kind: Option<SliceKind>,
        /// Insert the fragments below the assertion
        #[arg(long)]
        annotate: bool,
        /// Rewrite the file instead of printing it
        #[arg(long, requires = "annotate")]
        in_place: bool,
    },
    /// Grade FILE against a manifest of required items
    Mark {
        file: PathBuf,
        /// Manifest listing the graded items and their weights
        #[arg(long, value_name = "M")]
        manifest: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SliceKind {
    Fail,
    Wrong,
    Loop,
    Intersect,
}

impl SliceKind {
    fn name(self) -> &'static str {
        match self {
            SliceKind::Fail => "fail",
            SliceKind::Wrong => "wrong",
            SliceKind::Loop => "loop",
            SliceKind::Intersect => "intersect",
        }
    }

    fn for_status(s: &Status) -> Option<SliceKind> {
        match s {
            Status::CodeUnexpectedFailure => Some(SliceKind::Fail),
            Status::WrongFirstAnswer => Some(SliceKind::Wrong),
            Status::Nontermination => Some(SliceKind::Loop),
            _ => None,
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Internal(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Internal(m) => m,
        }
    }
}

/// Result of a command: text for standard output and the exit code.
pub struct Done {
    pub stdout: String,
    pub code: i32,
}

struct Ctx {
    budget: Budget,
    registry: Registry,
    json: bool,
}

/// Parses `args` and runs the command. Help and version requests come
/// back as `Done` with code 0.
pub fn run<I, T>(args: I) -> Result<Done, Failure>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => return Ok(Done { stdout: e.to_string(), code: 0 }),
        Err(e) => return Err(Failure::Usage(e.render().to_string())),
    };
    let g = &cli.global;
    let budget = Budget { max_steps: g.budget, max_depth: g.fair_depth, per_depth_steps: g.per_depth };
    let registry = if g.no_reference {
        Registry::empty()
    } else if let Some(dir) = &g.refs {
        if !dir.is_dir() {
            return Err(Failure::Usage(format!("reference directory {} does not exist", dir.display())));
        }
        let mut r = Registry::empty();
        r.load_dir(dir).map_err(|e| Failure::Usage(e.to_string()))?;
        r
    } else {
        Registry::builtin()
    };
    let ctx = Ctx { budget, registry, json: g.json };
    match &cli.command {
        Command::Check { file, annotate, in_place } => check(&ctx, file, *annotate, *in_place),
        Command::Explain { target, annotate, in_place } => explain(&ctx, target, *annotate, *in_place),
        Command::Slice { target, kind, annotate, in_place } => slice(&ctx, target, *kind, *annotate, *in_place),
        Command::Mark { file, manifest } => mark(&ctx, file, manifest),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Internal(format!("cannot write {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<SourceFile, Failure> {
    parse_file(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn label(path: &Path) -> String {
    path.display().to_string()
}

/// Splits `FILE:LINE` at the last colon.
fn parse_target(target: &str) -> Result<(PathBuf, usize), Failure> {
    let bad = || Failure::Usage(format!("expected FILE:LINE, found `{target}`"));
    let (file, line) = target.rsplit_once(':').ok_or_else(bad)?;
    let line: usize = line.parse().map_err(|_| bad())?;
    if file.is_empty() || line == 0 {
        return Err(bad());
    }
    Ok((PathBuf::from(file), line))
}

fn assertion_at(src: &SourceFile, path: &Path, line: usize) -> Result<(usize, Assertion), Failure> {
    src.assertions()
        .into_iter()
        .enumerate()
        .find(|(_, a)| a.line <= line && line <= a.last_line)
        .ok_or_else(|| Failure::Usage(format!("{}:{line} is not an assertion", path.display())))
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn source_text(src: &SourceFile, a: &Assertion) -> String {
    src.lines()[a.line - 1..a.last_line].iter().map(|l| l.trim()).collect::<Vec<_>>().join(" ")
}

fn verdict_text(v: &Verdict) -> String {
    match v {
        Verdict::True { .. } => "true".to_owned(),
        Verdict::False => "false".to_owned(),
        Verdict::Unspecified(Unspecified::Budget) => "unspecified (budget)".to_owned(),
        Verdict::Unspecified(Unspecified::Pending) => "unspecified".to_owned(),
        Verdict::Unspecified(Unspecified::UnknownPredicate(k)) => format!("unspecified (no reference for {k})"),
    }
}

fn assertion_json(src: &SourceFile, r: &AssertionRecord, file: &str) -> AssertionJson {
    let a = &r.assertion;
    AssertionJson {
        line: a.line,
        last_line: a.last_line,
        kind: a.kind.token().to_owned(),
        text: source_text(src, a),
        reference: verdict_text(&r.verdict),
        code: r.code.to_string(),
        status: r.status.code().to_owned(),
        reason: match &r.status {
            Status::Inconclusive(reason) => Some(reason.clone()),
            _ => None,
        },
        witness: r.code.witness().map(render_witness),
        message: r.status.message(&format!("{file}:{}", a.line)),
    }
}

fn missing_json(report: &CheckReport) -> Vec<MissingJson> {
    report
        .missing
        .iter()
        .map(|m| MissingJson {
            predicate: m.key.to_string(),
            after_line: report.records[m.after].assertion.last_line,
            message: format!("!def {}/{} missing", m.key.name, m.key.arity),
        })
        .collect()
}

fn check(ctx: &Ctx, path: &Path, annotate: bool, in_place: bool) -> Result<Done, Failure> {
    let src = load(path)?;
    let file = label(path);
    let report = check_file(&src, &ctx.registry, &ctx.budget);
    let code = i32::from(report.findings() > 0);
    let annotated = annotate.then(|| annotate_text(&src, &report, &file));
    if let (true, Some(text)) = (in_place, &annotated) {
        write(path, text)?;
    }
    if ctx.json {
        let out = Report::Check(CheckJson {
            schema: SCHEMA_VERSION.to_owned(),
            file: file.clone(),
            assertions: report.records.iter().map(|r| assertion_json(&src, r, &file)).collect(),
            missing: missing_json(&report),
            findings: report.findings(),
            annotated: annotated.filter(|_| !in_place),
        });
        return Ok(Done { stdout: json(&out)?, code });
    }
    if let (false, Some(text)) = (in_place, annotated) {
        return Ok(Done { stdout: text, code });
    }
    let mut out = String::new();
    for r in &report.records {
        let a = &r.assertion;
        let _ = writeln!(out, "{file}:{}: {} {}", a.line, r.status, source_text(&src, a));
        if let Some(m) = r.status.message(&format!("{file}:{}", a.line)) {
            let _ = writeln!(out, "    {m}");
        }
        if !r.status.is_ok() {
            if let Some(w) = r.code.witness() {
                let _ = writeln!(out, "    answer: {}", render_witness(w));
            }
        }
    }
    for m in missing_json(&report) {
        let _ = writeln!(out, "{file}:{}: DEF_MISSING {}", m.after_line, m.predicate);
        let _ = writeln!(out, "    {}", m.message);
    }
    let _ = writeln!(out, "{} assertion(s), {} finding(s)", report.records.len(), report.findings());
    Ok(Done { stdout: out, code })
}

const EXPLAIN_MARK: &str = "%@@";
const SLICE_MARK: &str = "%@ |";

/// Inserts `block` after the assertion ending on `last_line`. Machine lines
/// already there are kept, except those starting with `mark`, which an
/// earlier run of the same command wrote.
fn insert_block(src: &SourceFile, last_line: usize, block: &[String], mark: &str) -> String {
    let lines = src.lines();
    let mut out = String::new();
    let mut i = 0;
    while i < lines.len() {
        out.push_str(&lines[i]);
        i += 1;
        if i == last_line {
            if !out.ends_with('\n') {
                out.push('\n');
            }
            while i < lines.len() && lines[i].starts_with("%@") {
                if !lines[i].starts_with(mark) {
                    out.push_str(&lines[i]);
                }
                i += 1;
            }
            for l in block {
                out.push_str(l);
                out.push('\n');
            }
        }
    }
    out
}

fn stage_json(s: &Stage) -> StageJson {
    StageJson { note: s.note(), suggestion: s.suggestion() }
}

fn explain(ctx: &Ctx, target: &str, annotate: bool, in_place: bool) -> Result<Done, Failure> {
    let (path, line) = parse_target(target)?;
    let src = load(&path)?;
    let (_, a) = assertion_at(&src, &path, line)?;
    let e = match explain_assertion(&a, &ctx.registry, &ctx.budget) {
        Ok(e) => e,
        Err(DiagnosisError::UnsupportedKind) => {
            return Err(Failure::Usage(format!("{target}: only `<-` and `</-` assertions can be explained")))
        }
        Err(DiagnosisError::NotContradicted(v)) => {
            let msg = format!("nothing to explain: the reference verdict is {}\n", verdict_text(&v));
            if ctx.json {
                let out = Report::Explain(ExplainJson {
                    schema: SCHEMA_VERSION.to_owned(),
                    file: label(&path),
                    line,
                    headline: String::new(),
                    stages: Vec::new(),
                    lines: Vec::new(),
                    annotated: None,
                });
                return Ok(Done { stdout: json(&out)?, code: 0 });
            }
            return Ok(Done { stdout: msg, code: 0 });
        }
    };
    let lines: Vec<String> = e.feedback_lines().iter().map(|l| l.render()).collect();
    let annotated = annotate.then(|| insert_block(&src, a.last_line, &lines, EXPLAIN_MARK));
    if let (true, Some(text)) = (in_place, &annotated) {
        write(&path, text)?;
    }
    if ctx.json {
        let out = Report::Explain(ExplainJson {
            schema: SCHEMA_VERSION.to_owned(),
            file: label(&path),
            line,
            headline: e.headline().to_owned(),
            stages: e.stages.iter().map(stage_json).collect(),
            lines,
            annotated: annotated.filter(|_| !in_place),
        });
        return Ok(Done { stdout: json(&out)?, code: 1 });
    }
    if let (false, Some(text)) = (in_place, annotated) {
        return Ok(Done { stdout: text, code: 1 });
    }
    let mut out = String::new();
    for l in &lines {
        let _ = writeln!(out, "{l}");
    }
    Ok(Done { stdout: out, code: 1 })
}

fn part_json(program: &Program, (ci, part): (usize, Part)) -> PartJson {
    let c = &program.clauses()[ci];
    let mut terms = vec![c.head.clone()];
    terms.extend(c.body.iter().cloned());
    let (_, texts) = render_group(&[], &terms);
    let (line, text, kind) = match part {
        Part::Head => (c.line, texts[0].clone(), "head".to_owned()),
        Part::Goal(i) => (c.goal_lines.get(i).copied().unwrap_or(c.line), texts[i + 1].clone(), format!("goal {i}")),
    };
    PartJson { line, clause: ci, part: kind, text }
}

fn parts_json(program: &Program, set: &LineSet) -> Vec<PartJson> {
    set.iter().map(|p| part_json(program, *p)).collect()
}

struct Sliced {
    kind: SliceKind,
    line: usize,
    fragment: ProgramFragment,
    stages: Vec<Stage>,
}

fn slice_one(ctx: &Ctx, program: &Program, a: &Assertion, kind: SliceKind) -> Result<Sliced, SliceError> {
    let (fragment, stages) = match kind {
        SliceKind::Fail => (slice_insufficiency(program, &a.goals, &ctx.budget)?, Vec::new()),
        SliceKind::Loop => (slice_nontermination(program, &a.goals, &ctx.budget)?, Vec::new()),
        SliceKind::Wrong => {
            let witness = match Engine::new(program).unknown_fails(true).solve_dfs(&a.goals, &ctx.budget, Want::First)? {
                Outcome::Solutions { answers, .. } => answers[0].subst.clone(),
                _ => return Err(SliceError::Precondition("the query must have an answer")),
            };
            let s = slice_incorrectness(program, &a.goals, &witness, &ctx.registry, &ctx.budget)?;
            (s.fragment, s.stages)
        }
        SliceKind::Intersect => unreachable!("intersection is assembled from the other kinds"),
    };
    Ok(Sliced { kind, line: a.line, fragment, stages })
}

fn slice(ctx: &Ctx, target: &str, kind: Option<SliceKind>, annotate: bool, in_place: bool) -> Result<Done, Failure> {
    let (path, line) = parse_target(target)?;
    let src = load(&path)?;
    let file = label(&path);
    let (_, a) = assertion_at(&src, &path, line)?;
    let program = Program::new(src.clauses());
    let nothing = |why: String| -> Result<Done, Failure> {
        if ctx.json {
            let out = Report::Slice(SliceJson {
                schema: SCHEMA_VERSION.to_owned(),
                file: file.clone(),
                line,
                kind: kind.map_or("auto", SliceKind::name).to_owned(),
                fragments: Vec::new(),
                intersection: None,
                total_parts: all_parts(&program).len(),
            });
            return Ok(Done { stdout: json(&out)?, code: 0 });
        }
        Ok(Done { stdout: format!("nothing to slice: {why}\n"), code: 0 })
    };

    let jobs: Vec<(SliceKind, Assertion)> = match kind {
        Some(SliceKind::Intersect) => {
            let report = check_file(&src, &ctx.registry, &ctx.budget);
            let own = report.records.iter().find(|r| r.assertion.line == a.line).map(|r| &r.status);
            if own.and_then(SliceKind::for_status).is_none() {
                return nothing(format!("{file}:{line} has no failure to slice"));
            }
            report
                .records
                .iter()
                .filter_map(|r| SliceKind::for_status(&r.status).map(|k| (k, r.assertion.clone())))
                .collect()
        }
        Some(k) => vec![(k, a.clone())],
        None => {
            let r = check_assertion(&program, &a, &ctx.registry, &ctx.budget);
            match SliceKind::for_status(&r.status) {
                Some(k) => vec![(k, a.clone())],
                None => return nothing(format!("status is {}", r.status)),
            }
        }
    };
    let mut done = Vec::new();
    for (k, a) in &jobs {
        match slice_one(ctx, &program, a, *k) {
            Ok(s) => done.push(s),
            Err(e) => return nothing(e.to_string()),
        }
    }
    let intersection = if kind == Some(SliceKind::Intersect) {
        let frags: Vec<ProgramFragment> = done.iter().map(|s| s.fragment.clone()).collect();
        Some(intersect_fragments(&frags).map_err(|e| Failure::Internal(e.to_string()))?)
    } else {
        None
    };
    let total = all_parts(&program).len();
    let text = slice_text(&done, intersection.as_ref(), &program, &file, total);
    if annotate {
        let block: Vec<String> = text.lines().map(|l| format!("{SLICE_MARK} {l}")).collect();
        let annotated = insert_block(&src, a.last_line, &block, SLICE_MARK);
        if in_place {
            write(&path, &annotated)?;
        } else if !ctx.json {
            return Ok(Done { stdout: annotated, code: 1 });
        }
    }

    if ctx.json {
        let out = Report::Slice(SliceJson {
            schema: SCHEMA_VERSION.to_owned(),
            file,
            line,
            kind: kind.unwrap_or(done[0].kind).name().to_owned(),
            fragments: done
                .iter()
                .map(|s| FragmentJson {
                    kind: s.kind.name().to_owned(),
                    line: s.line,
                    text: render_fragment(&s.fragment),
                    inconclusive: s.fragment.inconclusive,
                    stages: s.stages.iter().map(stage_json).collect(),
                    active: parts_json(&program, &s.fragment.active_parts()),
                })
                .collect(),
            intersection: intersection.as_ref().map(|set| parts_json(&program, set)),
            total_parts: total,
        });
        return Ok(Done { stdout: json(&out)?, code: 1 });
    }
    Ok(Done { stdout: text, code: 1 })
}

fn slice_text(done: &[Sliced], intersection: Option<&LineSet>, program: &Program, file: &str, total: usize) -> String {
    let mut out = String::new();
    for (i, s) in done.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "% {} slice for {file}:{}", s.kind.name(), s.line);
        for st in &s.stages {
            let _ = writeln!(out, "% {}", st.note());
            let _ = writeln!(out, "% {}", st.suggestion());
        }
        out.push_str(&render_fragment(&s.fragment));
        if s.fragment.inconclusive {
            let _ = writeln!(out, "% (inconclusive: some checks ran out of budget)");
        }
    }
    if let Some(set) = intersection {
        let _ = writeln!(out, "\n% intersection: {} of {total} parts", set.len());
        for p in parts_json(program, set) {
            let _ = writeln!(out, "{file}:{}: {} ({})", p.line, p.text, p.part);
        }
    }
    out
}

fn mark(ctx: &Ctx, path: &Path, manifest: &Path) -> Result<Done, Failure> {
    let src = load(path)?;
    let m = ExerciseManifest::parse(&read(manifest)?)
        .map_err(|e| Failure::Usage(format!("{}: {e}", manifest.display())))?;
    let report = check_file(&src, &ctx.registry, &ctx.budget);
    let mark = mark_exercise(&src, &report, &m);
    let code = i32::from(mark.low_percent < 100);
    if ctx.json {
        let out = Report::Mark(MarkJson {
            schema: SCHEMA_VERSION.to_owned(),
            file: label(path),
            exercise: m.name.clone(),
            low: mark.low_percent,
            high: mark.high_percent,
            satisfied: mark.satisfied(),
            total: mark.items.len(),
            items: mark
                .items
                .iter()
                .map(|(it, s)| ItemJson {
                    kind: it.kind.name().to_owned(),
                    target: it.target.to_string(),
                    weight: it.weight,
                    state: s.name().to_owned(),
                })
                .collect(),
        });
        return Ok(Done { stdout: json(&out)?, code });
    }
    let mut out = format!("{}: {mark}\n", m.name);
    for (it, s) in &mark.items {
        let flag = if *s == ItemState::Satisfied { " " } else { "!" };
        let _ = writeln!(out, "{flag} {:<12} {:<16} {} (weight {})", s.name(), it.kind.name(), it.target, it.weight);
    }
    Ok(Done { stdout: out, code })
}
