//! Unification with occurs check, disequality constraints, variants and
//! the small term utilities the diagnosis rules are built from.

use std::collections::{BTreeMap, HashMap};
use std::hash::{BuildHasherDefault, Hasher};
use std::sync::Arc;

use crate::term::{Term, Var, VarAllocator, VarId};

/// Variable ids are small dense integers, so one multiplication spreads
/// them well enough and is much cheaper than the default hasher.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdHasher(u64);

impl Hasher for IdHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 = (self.0.rotate_left(8) ^ u64::from(*b)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        }
    }

    fn write_u32(&mut self, n: u32) {
        self.0 = (self.0 ^ u64::from(n)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
}

pub type IdMap<V> = HashMap<VarId, V, BuildHasherDefault<IdHasher>>;

/// Argument slices already expanded by one traversal, keyed by address.
/// Shared subterms would otherwise be walked once per path to them, which
/// is exponential for terms built by repeated aliasing. Small traversals
/// never pay for the set.
#[derive(Default)]
struct SharedSeen {
    expanded: usize,
    seen: std::collections::HashSet<(usize, usize)>,
}

impl SharedSeen {
    const THRESHOLD: usize = 256;

    fn first_visit(&mut self, a: &Arc<[Term]>, b: Option<&Arc<[Term]>>) -> bool {
        self.expanded += 1;
        if self.expanded < Self::THRESHOLD {
            return true;
        }
        let key = (Arc::as_ptr(a) as *const Term as usize, b.map_or(0, |b| Arc::as_ptr(b) as *const Term as usize));
        self.seen.insert(key)
    }
}

/// Triangular binding store with a trail, used by every resolution loop.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    map: IdMap<Term>,
    trail: Vec<VarId>,
}

impl Bindings {
    pub fn new() -> Bindings {
        Bindings::default()
    }

    pub fn mark(&self) -> usize {
        self.trail.len()
    }

    pub fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let id = self.trail.pop().expect("trail is longer than mark");
            self.map.remove(&id);
        }
    }

    pub fn bind(&mut self, id: VarId, t: Term) {
        self.map.insert(id, t);
        self.trail.push(id);
    }

    /// Variables bound after `mark`, oldest first.
    pub fn bound_since(&self, mark: usize) -> &[VarId] {
        &self.trail[mark.min(self.trail.len())..]
    }

    pub fn lookup(&self, id: VarId) -> Option<&Term> {
        self.map.get(&id)
    }

    /// Dereferences the top of `t`.
    pub fn walk(&self, t: &Term) -> Term {
        let mut cur = t;
        while let Term::Var(v) = cur {
            match self.map.get(&v.id) {
                Some(next) => cur = next,
                None => break,
            }
        }
        cur.clone()
    }

    /// Applies all bindings, recursively.
    pub fn resolve(&self, t: &Term) -> Term {
        match self.walk(t) {
            Term::Compound(f, args) => Term::Compound(f, args.iter().map(|a| self.resolve(a)).collect()),
            other => other,
        }
    }

    fn occurs(&self, id: VarId, t: &Term) -> bool {
        let mut stack = vec![t.clone()];
        let mut seen = SharedSeen::default();
        while let Some(t) = stack.pop() {
            match self.walk(&t) {
                Term::Var(v) if v.id == id => return true,
                Term::Compound(_, args) if seen.first_visit(&args, None) => stack.extend(args.iter().cloned()),
                _ => {}
            }
        }
        false
    }

    /// Unifies in place. On failure, partial bindings stay on the trail;
    /// the caller undoes to its own mark.
    pub fn unify(&mut self, a: &Term, b: &Term) -> bool {
        let mut stack = vec![(a.clone(), b.clone())];
        let mut seen = SharedSeen::default();
        while let Some((a, b)) = stack.pop() {
            let a = self.walk(&a);
            let b = self.walk(&b);
            match (&a, &b) {
                (Term::Var(x), Term::Var(y)) if x.id == y.id => {}
                (Term::Var(x), _) => {
                    if self.occurs(x.id, &b) {
                        return false;
                    }
                    self.bind(x.id, b.clone());
                }
                (_, Term::Var(y)) => {
                    if self.occurs(y.id, &a) {
                        return false;
                    }
                    self.bind(y.id, a.clone());
                }
                (Term::Atom(x), Term::Atom(y)) if x == y => {}
                (Term::Int(x), Term::Int(y)) if x == y => {}
                // shared structure reads the same under one binding store
                (Term::Compound(f, xs), Term::Compound(g, ys)) if Arc::ptr_eq(xs, ys) && f == g => {}
                (Term::Compound(f, xs), Term::Compound(g, ys)) if f == g && xs.len() == ys.len() => {
                    if seen.first_visit(xs, Some(ys)) {
                        // pushed in reverse so arguments unify left to right
                        stack.extend(xs.iter().cloned().zip(ys.iter().cloned()).rev());
                    }
                }
                _ => return false,
            }
        }
        true
    }

    /// Whether `a` and `b` unify, leaving the store unchanged.
    pub fn unifiable(&mut self, a: &Term, b: &Term) -> bool {
        let mark = self.mark();
        let ok = self.unify(a, b);
        self.undo_to(mark);
        ok
    }
}

/// Pending disequations `dif(L, R)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DifStore {
    pairs: Vec<(Term, Term)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DifStatus {
    Violated,
    Entailed,
    Pending,
}

/// Classifies a single disequation under the current bindings.
pub fn dif_status(bindings: &mut Bindings, l: &Term, r: &Term) -> DifStatus {
    let mark = bindings.mark();
    let unifies = bindings.unify(l, r);
    let added = bindings.mark() - mark;
    bindings.undo_to(mark);
    match (unifies, added) {
        (false, _) => DifStatus::Entailed,
        (true, 0) => DifStatus::Violated,
        (true, _) => DifStatus::Pending,
    }
}

impl DifStore {
    pub fn new() -> DifStore {
        DifStore::default()
    }

    pub fn from_pairs(pairs: Vec<(Term, Term)>) -> DifStore {
        DifStore { pairs }
    }

    pub fn pairs(&self) -> &[(Term, Term)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn push(&mut self, l: Term, r: Term) {
        self.pairs.push((l, r));
    }

    /// Re-examines every pair: violated pairs fail the store, entailed pairs
    /// are dropped, the rest stay pending.
    pub fn recheck(&mut self, bindings: &mut Bindings) -> bool {
        let mut kept = Vec::with_capacity(self.pairs.len());
        for (l, r) in self.pairs.drain(..) {
            match dif_status(bindings, &l, &r) {
                DifStatus::Violated => return false,
                DifStatus::Entailed => {}
                DifStatus::Pending => kept.push((l, r)),
            }
        }
        self.pairs = kept;
        true
    }

    /// The pairs with all bindings applied.
    pub fn resolved(&self, bindings: &Bindings) -> DifStore {
        DifStore {
            pairs: self.pairs.iter().map(|(l, r)| (bindings.resolve(l), bindings.resolve(r))).collect(),
        }
    }

    /// Whether `dif(l, r)` follows from the store: either the terms cannot
    /// unify, or unifying them violates a pending pair.
    pub fn entails(&self, bindings: &mut Bindings, l: &Term, r: &Term) -> bool {
        let mark = bindings.mark();
        if !bindings.unify(l, r) {
            bindings.undo_to(mark);
            return true;
        }
        let mut scratch = self.clone();
        let consistent = scratch.recheck(bindings);
        bindings.undo_to(mark);
        !consistent
    }
}

/// Backtrackable disequation store for resolution loops. Each pending
/// pair watches the variables of the first binding its residual unifier
/// would make; only a binding of a watched variable triggers a recheck.
/// Pairs are never removed, so undoing is a truncation.
#[derive(Clone, Debug, Default)]
pub struct DifTrail {
    entries: Vec<(Term, Term)>,
    watchers: IdMap<Vec<usize>>,
    log: Vec<VarId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DifMark {
    entries: usize,
    log: usize,
}

impl DifTrail {
    pub fn new() -> DifTrail {
        DifTrail::default()
    }

    pub fn mark(&self) -> DifMark {
        DifMark { entries: self.entries.len(), log: self.log.len() }
    }

    pub fn undo_to(&mut self, mark: DifMark) {
        while self.log.len() > mark.log {
            let v = self.log.pop().expect("log is longer than mark");
            if let Some(list) = self.watchers.get_mut(&v) {
                list.pop();
                if list.is_empty() {
                    self.watchers.remove(&v);
                }
            }
        }
        self.entries.truncate(mark.entries);
    }

    fn watch(&mut self, bindings: &mut Bindings, idx: usize) -> DifStatus {
        let (l, r) = &self.entries[idx];
        let mark = bindings.mark();
        let unifies = bindings.unify(l, r);
        let first = bindings.bound_since(mark).first().copied();
        let partner = first.and_then(|v| bindings.lookup(v).cloned());
        bindings.undo_to(mark);
        let Some(v) = first.filter(|_| unifies) else {
            return if unifies { DifStatus::Violated } else { DifStatus::Entailed };
        };
        let add = |w: VarId, me: &mut DifTrail| {
            me.watchers.entry(w).or_default().push(idx);
            me.log.push(w);
        };
        add(v, self);
        if let Some(Term::Var(w)) = partner.map(|t| bindings.walk(&t)) {
            add(w.id, self);
        }
        DifStatus::Pending
    }

    /// Adds `dif(l, r)`; false if it is already violated.
    pub fn push(&mut self, bindings: &mut Bindings, l: Term, r: Term) -> bool {
        self.entries.push((l, r));
        self.watch(bindings, self.entries.len() - 1) != DifStatus::Violated
    }

    /// Rechecks the pairs woken by bindings made after `since`.
    pub fn wake(&mut self, bindings: &mut Bindings, since: usize) -> bool {
        let mut woken: Vec<usize> = Vec::new();
        for v in bindings.bound_since(since) {
            if let Some(list) = self.watchers.get(v) {
                woken.extend(list.iter().copied());
            }
        }
        woken.sort_unstable();
        woken.dedup();
        woken.into_iter().all(|i| self.watch(bindings, i) != DifStatus::Violated)
    }

    /// The pairs still pending, with all bindings applied.
    pub fn pending(&self, bindings: &mut Bindings) -> DifStore {
        let mut pairs = Vec::new();
        for (l, r) in &self.entries {
            if dif_status(bindings, l, r) == DifStatus::Pending {
                pairs.push((bindings.resolve(l), bindings.resolve(r)));
            }
        }
        DifStore { pairs }
    }
}

/// An idempotent variable-to-term mapping.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Substitution {
    map: BTreeMap<Var, Term>,
}

impl Substitution {
    pub fn new() -> Substitution {
        Substitution::default()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn get(&self, v: &Var) -> Option<&Term> {
        self.map.get(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.map.iter()
    }

    /// Inserts a binding and re-normalizes so the mapping stays idempotent.
    pub fn insert(&mut self, v: Var, t: Term) {
        let mut b = self.to_bindings();
        b.bind(v.id, t);
        let mut vars: Vec<Var> = self.map.keys().cloned().collect();
        vars.push(v);
        *self = Substitution::from_bindings(&b, &vars);
    }

    pub fn apply(&self, t: &Term) -> Term {
        t.map_vars(&mut |v| match self.map.get(v) {
            Some(bound) => self.apply(bound),
            None => Term::Var(v.clone()),
        })
    }

    pub fn apply_all(&self, ts: &[Term]) -> Vec<Term> {
        ts.iter().map(|t| self.apply(t)).collect()
    }

    pub fn to_bindings(&self) -> Bindings {
        let mut b = Bindings::new();
        for (v, t) in &self.map {
            b.bind(v.id, t.clone());
        }
        b
    }

    /// Reads back the fully resolved binding of each variable in `vars`,
    /// skipping unbound ones.
    pub fn from_bindings(b: &Bindings, vars: &[Var]) -> Substitution {
        let mut map = BTreeMap::new();
        for v in vars {
            let t = b.resolve(&Term::Var(v.clone()));
            if t.as_var() != Some(v) {
                map.insert(v.clone(), t);
            }
        }
        Substitution { map }
    }

    /// Keeps only the bindings of `vars`.
    pub fn restrict(&self, vars: &[Var]) -> Substitution {
        Substitution {
            map: self.map.iter().filter(|(v, _)| vars.contains(v)).map(|(v, t)| (v.clone(), t.clone())).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Failure;

/// Most general unifier of `t1` and `t2` extending `subst`, with every
/// pending disequation rechecked.
pub fn unify(t1: &Term, t2: &Term, subst: &Substitution, difs: &DifStore) -> Result<(Substitution, DifStore), Failure> {
    let mut b = subst.to_bindings();
    if !b.unify(t1, t2) {
        return Err(Failure);
    }
    let mut difs = difs.clone();
    if !difs.recheck(&mut b) {
        return Err(Failure);
    }
    let mut vars: Vec<Var> = subst.iter().map(|(v, _)| v.clone()).collect();
    for v in t1.vars().into_iter().chain(t2.vars()) {
        if !vars.contains(&v) {
            vars.push(v);
        }
    }
    Ok((Substitution::from_bindings(&b, &vars), difs.resolved(&b)))
}

/// True iff a bijective variable renaming maps `a` onto `b`.
pub fn variant_of(a: &Term, b: &Term) -> bool {
    fn go(a: &Term, b: &Term, fwd: &mut HashMap<VarId, VarId>, bwd: &mut HashMap<VarId, VarId>) -> bool {
        match (a, b) {
            (Term::Var(x), Term::Var(y)) => {
                let f = *fwd.entry(x.id).or_insert(y.id);
                let g = *bwd.entry(y.id).or_insert(x.id);
                f == y.id && g == x.id
            }
            (Term::Atom(x), Term::Atom(y)) => x == y,
            (Term::Int(x), Term::Int(y)) => x == y,
            (Term::Compound(f, xs), Term::Compound(g, ys)) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|(x, y)| go(x, y, fwd, bwd))
            }
            _ => false,
        }
    }
    go(a, b, &mut HashMap::new(), &mut HashMap::new())
}

/// Variant-invariant form: variables renumbered 0, 1, ... by first
/// occurrence, names dropped. Two terms are variants iff their canonical
/// forms are equal.
pub fn canonical(t: &Term) -> Term {
    canonical_all(std::slice::from_ref(t)).pop().expect("one term in, one term out")
}

pub fn canonical_all(ts: &[Term]) -> Vec<Term> {
    let mut map: HashMap<VarId, u32> = HashMap::new();
    ts.iter()
        .map(|t| {
            t.map_vars(&mut |v| {
                let n = map.len() as u32;
                Term::Var(Var::new(*map.entry(v.id).or_insert(n)))
            })
        })
        .collect()
}

/// Binds every free variable of `goals`, in first-occurrence order, to a
/// fresh constant `any<k>` counting up from `start`.
pub fn ground_with_any_all(goals: &[Term], start: usize) -> (Vec<Term>, Vec<(Var, Term)>) {
    let bindings: Vec<(Var, Term)> = crate::term::vars_of_all(goals)
        .into_iter()
        .enumerate()
        .map(|(k, v)| (v, Term::atom(&format!("any{}", start + k))))
        .collect();
    let lookup: HashMap<VarId, Term> = bindings.iter().map(|(v, t)| (v.id, t.clone())).collect();
    let grounded = goals.iter().map(|g| g.map_vars(&mut |v| lookup[&v.id].clone())).collect();
    (grounded, bindings)
}

pub fn ground_with_any(goal: &Term, start: usize) -> (Term, Vec<(Var, Term)>) {
    let (mut gs, bs) = ground_with_any_all(std::slice::from_ref(goal), start);
    (gs.pop().expect("one goal"), bs)
}

/// Path of 1-based argument indices from a goal to one of its subterms.
pub type Path = Vec<usize>;

/// All subterm positions strictly inside `goal`, in pre-order.
pub fn enumerate_subterms(goal: &Term) -> Vec<(Path, Term)> {
    fn go(t: &Term, path: &mut Path, out: &mut Vec<(Path, Term)>) {
        for (i, a) in t.args().iter().enumerate() {
            path.push(i + 1);
            out.push((path.clone(), a.clone()));
            go(a, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    go(goal, &mut Vec::new(), &mut out);
    out
}

pub fn subterm_at<'a>(t: &'a Term, path: &[usize]) -> Option<&'a Term> {
    match path.split_first() {
        None => Some(t),
        Some((&i, rest)) => t.args().get(i.checked_sub(1)?).and_then(|a| subterm_at(a, rest)),
    }
}

/// Replaces the subterm at `path`. Panics on an invalid path.
pub fn replace_at(t: &Term, path: &[usize], new: Term) -> Term {
    match path.split_first() {
        None => new,
        Some((&i, rest)) => match t {
            Term::Compound(f, args) => {
                let mut args: Vec<Term> = args.to_vec();
                args[i - 1] = replace_at(&args[i - 1], rest, new);
                Term::Compound(f.clone(), args.into())
            }
            _ => panic!("path {path:?} leads into an atomic term"),
        },
    }
}

/// One-way matching: binds variables of `pattern` only; variables of
/// `target` are treated as constants.
pub fn match_term(pattern: &Term, target: &Term, binds: &mut HashMap<VarId, Term>) -> bool {
    match pattern {
        Term::Var(v) => match binds.get(&v.id) {
            Some(bound) => bound == target,
            None => {
                binds.insert(v.id, target.clone());
                true
            }
        },
        Term::Atom(x) => matches!(target, Term::Atom(y) if x == y),
        Term::Int(x) => matches!(target, Term::Int(y) if x == y),
        Term::Compound(f, xs) => match target {
            Term::Compound(g, ys) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|(x, y)| match_term(x, y, binds))
            }
            _ => false,
        },
    }
}

/// Instantiates `t` with a matcher's bindings; unmatched variables become
/// fresh ones.
pub fn instantiate(t: &Term, binds: &mut HashMap<VarId, Term>, alloc: &mut VarAllocator) -> Term {
    t.map_vars(&mut |v| binds.entry(v.id).or_insert_with(|| Term::Var(alloc.fresh())).clone())
}
