//! Reader for program files, CHR rule files and implication files.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::term::{Clause, Term, VarAllocator};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Atom(String),
    Var(String),
    Int(i64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Bar,
    Comma,
    End,
    Neck,
    Eq,
    NotEq,
    Pos,
    Neg,
    PosFair,
    NegFair,
    At,
    Simp,
    Prop,
    Viewer,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Atom(a) => return write!(f, "atom `{a}`"),
            Tok::Var(v) => return write!(f, "variable `{v}`"),
            Tok::Int(i) => return write!(f, "integer `{i}`"),
            Tok::LParen => "`(`",
            Tok::RParen => "`)`",
            Tok::LBracket => "`[`",
            Tok::RBracket => "`]`",
            Tok::Bar => "`|`",
            Tok::Comma => "`,`",
            Tok::End => "end `.`",
            Tok::Neck => "`:-`",
            Tok::Eq => "`=`",
            Tok::NotEq => "`\\=`",
            Tok::Pos => "`<-`",
            Tok::Neg => "`</-`",
            Tok::PosFair => "`<<-`",
            Tok::NegFair => "`<</-`",
            Tok::At => "`@`",
            Tok::Simp => "`<=>`",
            Tok::Prop => "`==>`",
            Tok::Viewer => "viewer arrow",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, m: String| ParseError { line, col, message: m };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let adv = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            adv(1, &mut i, &mut col);
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 4)].iter().collect();
        let fixed: &[(&str, Tok)] = &[
            ("<</-", Tok::NegFair),
            ("<<-", Tok::PosFair),
            ("</-", Tok::Neg),
            ("<=>", Tok::Simp),
            ("<-", Tok::Pos),
            ("==>", Tok::Prop),
            (":-", Tok::Neck),
            ("\\=", Tok::NotEq),
            ("~>", Tok::Viewer),
            ("\u{2933}", Tok::Viewer),
            ("=", Tok::Eq),
            ("(", Tok::LParen),
            (")", Tok::RParen),
            ("[", Tok::LBracket),
            ("]", Tok::RBracket),
            ("|", Tok::Bar),
            (",", Tok::Comma),
            ("@", Tok::At),
        ];
        if let Some((s, t)) = fixed.iter().find(|(s, _)| rest.starts_with(s)) {
            out.push(Spanned { tok: t.clone(), line: tl, col: tc });
            adv(s.chars().count(), &mut i, &mut col);
            continue;
        }
        if c == '.' {
            let next = chars.get(i + 1).copied();
            if next.is_none_or(|n| n.is_whitespace() || n == '%') {
                out.push(Spanned { tok: Tok::End, line: tl, col: tc });
                adv(1, &mut i, &mut col);
                continue;
            }
            return Err(err(tl, tc, "unexpected `.`".into()));
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            adv(1, &mut i, &mut col);
            while i < chars.len() && chars[i].is_ascii_digit() {
                adv(1, &mut i, &mut col);
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<i64>().map_err(|_| err(tl, tc, format!("integer `{s}` out of range")))?;
            out.push(Spanned { tok: Tok::Int(v), line: tl, col: tc });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                adv(1, &mut i, &mut col);
            }
            let s: String = chars[start..i].iter().collect();
            let tok = if c.is_uppercase() || c == '_' { Tok::Var(s) } else { Tok::Atom(s) };
            out.push(Spanned { tok, line: tl, col: tc });
            continue;
        }
        if c == '\'' {
            adv(1, &mut i, &mut col);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(err(tl, tc, "unterminated quoted atom".into())),
                    Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                        s.push('\'');
                        adv(2, &mut i, &mut col);
                    }
                    Some('\'') => {
                        adv(1, &mut i, &mut col);
                        break;
                    }
                    Some('\\') => match chars.get(i + 1) {
                        Some(&e @ ('\\' | '\'')) => {
                            s.push(e);
                            adv(2, &mut i, &mut col);
                        }
                        Some('n') => {
                            s.push('\n');
                            adv(2, &mut i, &mut col);
                        }
                        _ => return Err(err(line, col, "bad escape in quoted atom".into())),
                    },
                    Some(&ch) => {
                        s.push(ch);
                        adv(1, &mut i, &mut col);
                    }
                }
            }
            out.push(Spanned { tok: Tok::Atom(s), line: tl, col: tc });
            continue;
        }
        return Err(err(tl, tc, format!("unexpected character `{c}`")));
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    alloc: &'a mut VarAllocator,
    /// Variables named in the current statement.
    scope: HashMap<String, Term>,
    eof: (usize, usize),
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map_or(self.eof, |s| (s.line, s.col))
    }

    fn line(&self) -> usize {
        self.here().0
    }

    fn prev_line(&self) -> usize {
        self.toks[self.pos.saturating_sub(1)].line
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError { line, col, message: message.into() })
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.peek().cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => {
                let m = format!("expected {want}, found {t}");
                self.error(m)
            }
            None => self.error(format!("expected {want}, found end of input")),
        }
    }

    fn start_statement(&mut self) {
        self.scope.clear();
    }

    fn var(&mut self, name: String) -> Term {
        if name == "_" {
            return Term::Var(self.alloc.fresh());
        }
        if let Some(t) = self.scope.get(&name) {
            return t.clone();
        }
        let t = Term::Var(self.alloc.fresh_named(&name));
        self.scope.insert(name, t.clone());
        t
    }

    /// `primary` optionally followed by an infix `=` or `\=`.
    fn term(&mut self) -> Result<Term, ParseError> {
        let lhs = self.primary()?;
        let op = match self.peek() {
            Some(Tok::Eq) => "=",
            Some(Tok::NotEq) => "\\=",
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.primary()?;
        Ok(Term::compound(op, vec![lhs, rhs]))
    }

    fn primary(&mut self) -> Result<Term, ParseError> {
        match self.bump() {
            Some(Tok::Var(v)) => Ok(self.var(v)),
            Some(Tok::Int(i)) => Ok(Term::Int(i)),
            Some(Tok::Atom(a)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let mut args = vec![self.term()?];
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        args.push(self.term()?);
                    }
                    self.expect(Tok::RParen)?;
                    Ok(Term::compound(&a, args))
                } else {
                    Ok(Term::atom(&a))
                }
            }
            Some(Tok::LBracket) => {
                if self.peek() == Some(&Tok::RBracket) {
                    self.pos += 1;
                    return Ok(Term::nil());
                }
                let mut items = vec![self.term()?];
                while self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    items.push(self.term()?);
                }
                let tail = if self.peek() == Some(&Tok::Bar) {
                    self.pos += 1;
                    self.term()?
                } else {
                    Term::nil()
                };
                self.expect(Tok::RBracket)?;
                Ok(Term::list(items, tail))
            }
            Some(Tok::LParen) => {
                let t = self.term()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Some(t) => {
                self.pos -= 1;
                self.error(format!("expected a term, found {t}"))
            }
            None => self.error("expected a term, found end of input"),
        }
    }

    fn goal(&mut self) -> Result<(Term, usize), ParseError> {
        let line = self.line();
        let t = self.term()?;
        if !t.is_callable() {
            return self.error("goal is not callable");
        }
        if self.peek() == Some(&Tok::Viewer) {
            return self.error("viewer assertions (`Viewer ~> Goal`) are not supported");
        }
        Ok((t, line))
    }

    fn conj(&mut self) -> Result<(Vec<Term>, Vec<usize>), ParseError> {
        let (mut goals, mut lines) = (Vec::new(), Vec::new());
        loop {
            let (g, l) = self.goal()?;
            goals.push(g);
            lines.push(l);
            match self.peek() {
                Some(Tok::Comma) => self.pos += 1,
                Some(Tok::End) => break,
                Some(t) => {
                    let m = format!("expected `,` or `.`, found {t}");
                    return self.error(m);
                }
                None => return self.error("missing `.` at end of input"),
            }
        }
        Ok((goals, lines))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AssertionKind {
    Pos,
    Neg,
    PosFair,
    NegFair,
}

impl AssertionKind {
    pub fn token(self) -> &'static str {
        match self {
            AssertionKind::Pos => "<-",
            AssertionKind::Neg => "</-",
            AssertionKind::PosFair => "<<-",
            AssertionKind::NegFair => "<</-",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AssertionKind::Pos => "POS",
            AssertionKind::Neg => "NEG",
            AssertionKind::PosFair => "POSFAIR",
            AssertionKind::NegFair => "NEGFAIR",
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, AssertionKind::Pos | AssertionKind::PosFair)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assertion {
    pub kind: AssertionKind,
    pub goals: Vec<Term>,
    /// First and last source line (1-based).
    pub line: usize,
    pub last_line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ItemKind {
    Clause(Clause),
    Assertion(Assertion),
    Comment(String),
    MachineLine(String),
    Blank,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Item {
    pub kind: ItemKind,
    pub first_line: usize,
    pub last_line: usize,
}

/// A parsed program file. Keeps the raw lines so user text is reproduced
/// byte for byte.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceFile {
    lines: Vec<String>,
    items: Vec<Item>,
}

pub const MACHINE_PREFIX: &str = "%@";

fn is_machine_line(line: &str) -> bool {
    line.starts_with(MACHINE_PREFIX)
}

impl SourceFile {
    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn clauses(&self) -> Vec<Clause> {
        self.items
            .iter()
            .filter_map(|i| match &i.kind {
                ItemKind::Clause(c) => Some(c.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn assertions(&self) -> Vec<Assertion> {
        self.items
            .iter()
            .filter_map(|i| match &i.kind {
                ItemKind::Assertion(a) => Some(a.clone()),
                _ => None,
            })
            .collect()
    }

    /// The assertion whose source span contains `line`.
    pub fn assertion_at(&self, line: usize) -> Option<Assertion> {
        self.assertions().into_iter().find(|a| a.line <= line && line <= a.last_line)
    }

    pub fn render(&self) -> String {
        self.lines.concat()
    }

    /// Largest variable id used anywhere in the file.
    pub fn var_allocator(&self) -> VarAllocator {
        let mut terms = Vec::new();
        for c in self.clauses() {
            terms.extend(c.terms());
        }
        for a in self.assertions() {
            terms.extend(a.goals);
        }
        VarAllocator::above(&terms)
    }
}

pub fn parse_file(text: &str) -> Result<SourceFile, ParseError> {
    let toks = lex(text)?;
    let lines: Vec<String> = text.split_inclusive('\n').map(str::to_owned).collect();
    let mut alloc = VarAllocator::new();
    let mut p = Parser { toks: &toks, pos: 0, alloc: &mut alloc, scope: HashMap::new(), eof: eof_pos(&lines) };
    let mut items = Vec::new();
    while p.peek().is_some() {
        p.start_statement();
        let first = p.line();
        let kind = match p.peek() {
            Some(Tok::Pos) => Some(AssertionKind::Pos),
            Some(Tok::Neg) => Some(AssertionKind::Neg),
            Some(Tok::PosFair) => Some(AssertionKind::PosFair),
            Some(Tok::NegFair) => Some(AssertionKind::NegFair),
            _ => None,
        };
        let item = if let Some(kind) = kind {
            p.pos += 1;
            let (goals, _) = p.conj()?;
            p.expect(Tok::End)?;
            let last = p.prev_line();
            ItemKind::Assertion(Assertion { kind, goals, line: first, last_line: last })
        } else {
            let (head, _) = p.goal()?;
            let (body, goal_lines) = match p.peek() {
                Some(Tok::Neck) => {
                    p.pos += 1;
                    p.conj()?
                }
                Some(Tok::End) => (vec![], vec![]),
                Some(t) => {
                    let m = format!("expected `:-` or `.`, found {t}");
                    return p.error(m);
                }
                None => return p.error("missing `.` at end of input"),
            };
            p.expect(Tok::End)?;
            ItemKind::Clause(Clause { head, body, line: first, goal_lines })
        };
        items.push(Item { kind: item, first_line: first, last_line: p.prev_line() });
    }

    let mut covered = vec![false; lines.len() + 2];
    for it in &items {
        covered[it.first_line..=it.last_line].fill(true);
    }
    for (idx, raw) in lines.iter().enumerate() {
        let n = idx + 1;
        let body = raw.trim_end_matches(['\n', '\r']);
        let kind = if is_machine_line(body) {
            ItemKind::MachineLine(body.to_owned())
        } else if covered[n] {
            continue;
        } else if body.trim().is_empty() {
            ItemKind::Blank
        } else {
            ItemKind::Comment(body.to_owned())
        };
        items.push(Item { kind, first_line: n, last_line: n });
    }
    items.sort_by_key(|i| i.first_line);
    Ok(SourceFile { lines, items })
}

fn eof_pos(lines: &[String]) -> (usize, usize) {
    match lines.last() {
        None => (1, 1),
        Some(l) if l.ends_with('\n') => (lines.len() + 1, 1),
        Some(l) => (lines.len(), l.chars().count() + 1),
    }
}

/// Removes every machine-owned line; all other lines are kept verbatim.
pub fn strip_machine_lines(file: &SourceFile) -> SourceFile {
    let text: String = file.lines.iter().filter(|l| !is_machine_line(l)).map(String::as_str).collect();
    parse_file(&text).expect("removing comment lines keeps a file parseable")
}

/// Parses a single term, e.g. from the command line or a test.
pub fn parse_term(text: &str, alloc: &mut VarAllocator) -> Result<Term, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks: &toks, pos: 0, alloc, scope: HashMap::new(), eof: (1, text.len() + 1) };
    let t = p.term()?;
    if p.peek() == Some(&Tok::End) {
        p.pos += 1;
    }
    if p.peek().is_some() {
        return p.error("trailing input after term");
    }
    Ok(t)
}

/// Parses `G1, ..., Gn` (optionally terminated by `.`) sharing one variable scope.
pub fn parse_conjunction(text: &str, alloc: &mut VarAllocator) -> Result<Vec<Term>, ParseError> {
    let mut text = text.trim_end().to_owned();
    if !text.ends_with('.') {
        text.push('.');
    }
    let toks = lex(&text)?;
    let mut p = Parser { toks: &toks, pos: 0, alloc, scope: HashMap::new(), eof: (1, text.len() + 1) };
    let (goals, _) = p.conj()?;
    p.expect(Tok::End)?;
    if p.peek().is_some() {
        return p.error("trailing input after conjunction");
    }
    Ok(goals)
}

/// Parses a single assertion such as `</- alldifferent([X,X]).`.
pub fn parse_assertion(text: &str) -> Result<Assertion, ParseError> {
    let file = parse_file(text)?;
    let mut asserts = file.assertions();
    match asserts.len() {
        1 => Ok(asserts.remove(0)),
        n => Err(ParseError { line: 1, col: 1, message: format!("expected exactly one assertion, found {n}") }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChrKind {
    Simplification,
    Propagation,
}

/// Raw CHR rule as read from a rule file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChrRuleSyntax {
    pub name: String,
    pub kind: ChrKind,
    pub heads: Vec<Term>,
    pub guard: Vec<(Term, Term)>,
    pub body: Vec<Term>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChrFileSyntax {
    pub rules: Vec<ChrRuleSyntax>,
    pub already_in_store: bool,
}

/// Reads `name @ H1, ..., Hn <=> [Guard |] Body.` and
/// `name @ H1, ..., Hn ==> [Guard |] Body.` rules, plus
/// `option(already_in_store, on|off).`
pub fn parse_chr(text: &str) -> Result<ChrFileSyntax, ParseError> {
    let toks = lex(text)?;
    let lines: Vec<String> = text.split_inclusive('\n').map(str::to_owned).collect();
    let mut alloc = VarAllocator::new();
    let mut p = Parser { toks: &toks, pos: 0, alloc: &mut alloc, scope: HashMap::new(), eof: eof_pos(&lines) };
    let mut out = ChrFileSyntax { rules: Vec::new(), already_in_store: true };
    while p.peek().is_some() {
        p.start_statement();
        if p.peek() == Some(&Tok::Neck) {
            // directive such as `:- use_module(library(chr)).`
            p.pos += 1;
            p.conj()?;
            p.expect(Tok::End)?;
            continue;
        }
        let first = p.term()?;
        if p.peek() == Some(&Tok::End) {
            p.pos += 1;
            match (&first, first.args()) {
                (Term::Compound(f, _), [opt, val]) if &**f == "option" && opt.is_atom("already_in_store") => {
                    out.already_in_store = val.is_atom("on");
                    continue;
                }
                _ => return p.error("expected a CHR rule or `option(already_in_store, on|off)`"),
            }
        }
        let name = match first {
            Term::Atom(a) => a.to_string(),
            _ => return p.error("CHR rule name must be an atom"),
        };
        p.expect(Tok::At)?;
        let mut heads = vec![p.goal()?.0];
        while p.peek() == Some(&Tok::Comma) {
            p.pos += 1;
            heads.push(p.goal()?.0);
        }
        let kind = match p.bump() {
            Some(Tok::Simp) => ChrKind::Simplification,
            Some(Tok::Prop) => ChrKind::Propagation,
            _ => {
                p.pos -= 1;
                return p.error("expected `<=>` or `==>`");
            }
        };
        let save = p.pos;
        let mut guard = Vec::new();
        let mut has_guard = false;
        // a guard is a comma list of `T1 \= T2` (or `true`) terminated by `|`
        while let Ok(t) = p.term() {
            match (&t, t.args()) {
                (Term::Compound(f, _), [l, r]) if &**f == "\\=" => guard.push((l.clone(), r.clone())),
                (Term::Atom(a), _) if &**a == "true" => {}
                _ => break,
            }
            match p.peek() {
                Some(Tok::Comma) => p.pos += 1,
                Some(Tok::Bar) => {
                    p.pos += 1;
                    has_guard = true;
                    break;
                }
                _ => break,
            }
        }
        if !has_guard {
            p.pos = save;
            guard.clear();
        }
        let (body, _) = p.conj()?;
        p.expect(Tok::End)?;
        out.rules.push(ChrRuleSyntax { name, kind, heads, guard, body });
    }
    Ok(out)
}

/// Reads implication rules `Lhs ==> Rhs1, ..., Rhsn.`
pub fn parse_implications(text: &str) -> Result<Vec<(Term, Vec<Term>)>, ParseError> {
    let toks = lex(text)?;
    let lines: Vec<String> = text.split_inclusive('\n').map(str::to_owned).collect();
    let mut alloc = VarAllocator::new();
    let mut p = Parser { toks: &toks, pos: 0, alloc: &mut alloc, scope: HashMap::new(), eof: eof_pos(&lines) };
    let mut out = Vec::new();
    while p.peek().is_some() {
        p.start_statement();
        let (lhs, _) = p.goal()?;
        p.expect(Tok::Prop)?;
        let (rhs, _) = p.conj()?;
        p.expect(Tok::End)?;
        out.push((lhs, rhs));
    }
    Ok(out)
}
