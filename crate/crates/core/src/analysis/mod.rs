//! Conservative dependence facts for the finish-elimination rules.
//!
//! Everything here is syntactic and flow-insensitive. Globals are the only
//! state that tasks share: an `async` copies the locals of its parent when it
//! is spawned, so reads of locals inside an async happen, for dependence
//! purposes, at the spawn point. Arrays are a single location.

mod callgraph;

pub use callgraph::{build_call_graph, call_sites, CallGraph, CallSite};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::ir::{BinOp, CatchKind, Expr, LValue, Program, Stmt};

/// Global locations touched by a statement, split by access class.
/// `accums` holds locations only updated through `x = x + e` or
/// `a[i] = a[i] + e`; such updates commute with each other.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Footprint {
    pub reads: BTreeSet<String>,
    pub writes: BTreeSet<String>,
    pub accums: BTreeSet<String>,
}

impl Footprint {
    pub fn union(&mut self, other: &Footprint) {
        self.reads.extend(other.reads.iter().cloned());
        self.writes.extend(other.writes.iter().cloned());
        self.accums.extend(other.accums.iter().cloned());
    }

    pub fn is_empty(&self) -> bool {
        self.reads.is_empty() && self.writes.is_empty() && self.accums.is_empty()
    }

    fn touches(&self, x: &str) -> bool {
        self.reads.contains(x) || self.writes.contains(x) || self.accums.contains(x)
    }

    /// True when some location is written by one side and touched by the
    /// other, or accumulated by one side and read by the other.
    pub fn conflicts(&self, other: &Footprint) -> bool {
        let one_way = |a: &Footprint, b: &Footprint| {
            a.writes.iter().any(|x| b.touches(x)) || a.accums.iter().any(|x| b.reads.contains(x))
        };
        one_way(self, other) || one_way(other, self)
    }
}

/// Exceptions that may leave a statement synchronously.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Throws {
    /// Some exception of statically unknown kind.
    pub any: bool,
    pub tags: BTreeSet<String>,
    pub multiple: bool,
}

impl Throws {
    pub fn is_empty(&self) -> bool {
        !self.any && !self.multiple && self.tags.is_empty()
    }

    pub fn union(&mut self, other: &Throws) {
        self.any |= other.any;
        self.multiple |= other.multiple;
        self.tags.extend(other.tags.iter().cloned());
    }

    fn multiple() -> Throws {
        Throws {
            multiple: true,
            ..Throws::default()
        }
    }

    fn unknown() -> Throws {
        Throws {
            any: true,
            ..Throws::default()
        }
    }

    /// What still escapes a handler of the given kind.
    fn minus(&self, kind: &CatchKind) -> Throws {
        match kind {
            CatchKind::All => Throws::default(),
            CatchKind::Multiple => Throws {
                multiple: false,
                ..self.clone()
            },
            CatchKind::Tag(t) => {
                let mut out = self.clone();
                out.tags.remove(t);
                out
            }
        }
    }
}

/// Facts about one statement (or a method body).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StmtFacts {
    /// Globals touched, including by escaping tasks.
    pub footprint: Footprint,
    /// Locals read by the current task (including values captured at spawn).
    pub local_reads: BTreeSet<String>,
    /// Locals written by the current task.
    pub local_writes: BTreeSet<String>,
    pub throws: Throws,
    /// The current task may execute `advanceAll`.
    pub may_advance: bool,
    /// Some task spawned here may outlive the statement.
    pub escaping_asyncs: bool,
    /// Some escaping task is registered on a clock.
    pub escaping_clocked: bool,
    /// Some escaping task may terminate with an exception.
    pub escaping_throw: bool,
}

impl StmtFacts {
    pub fn may_throw(&self) -> bool {
        !self.throws.is_empty()
    }

    fn join(&mut self, o: &StmtFacts) {
        self.footprint.union(&o.footprint);
        self.local_reads.extend(o.local_reads.iter().cloned());
        self.local_writes.extend(o.local_writes.iter().cloned());
        self.throws.union(&o.throws);
        self.may_advance |= o.may_advance;
        self.escaping_asyncs |= o.escaping_asyncs;
        self.escaping_clocked |= o.escaping_clocked;
        self.escaping_throw |= o.escaping_throw;
    }
}

/// Whole-program facts: per-method summaries computed to a fixed point over
/// the call graph, plus on-demand statement facts.
#[derive(Clone, Debug)]
pub struct Facts {
    globals: BTreeSet<String>,
    summaries: HashMap<String, StmtFacts>,
}

impl Facts {
    pub fn new(program: &Program) -> Facts {
        let mut facts = Facts {
            globals: program.globals.iter().map(|g| g.name().to_string()).collect(),
            summaries: HashMap::new(),
        };
        loop {
            let mut changed = false;
            for m in &program.methods {
                let mut s = facts.stmt(&m.body);
                // a callee's locals are its own
                s.local_reads.clear();
                s.local_writes.clear();
                if facts.summaries.get(&m.name) != Some(&s) {
                    facts.summaries.insert(m.name.clone(), s);
                    changed = true;
                }
            }
            if !changed {
                return facts;
            }
        }
    }

    pub fn summary(&self, method: &str) -> Option<&StmtFacts> {
        self.summaries.get(method)
    }

    pub fn is_global(&self, name: &str) -> bool {
        self.globals.contains(name)
    }

    fn expr_into(&self, e: &Expr, out: &mut StmtFacts) {
        match e {
            Expr::Var(v) => {
                if self.is_global(v) {
                    out.footprint.reads.insert(v.clone());
                } else {
                    out.local_reads.insert(v.clone());
                }
            }
            Expr::Index(a, i) => {
                out.footprint.reads.insert(a.clone());
                self.expr_into(i, out);
            }
            Expr::Unary(_, x) | Expr::WrapMultiple(x) => self.expr_into(x, out),
            Expr::Binary(_, a, b) => {
                self.expr_into(a, out);
                self.expr_into(b, out);
            }
            Expr::Int(_) | Expr::Bool(_) | Expr::Null | Expr::Builtin(_) | Expr::NewExc(_) => {}
        }
    }

    pub fn expr(&self, e: &Expr) -> StmtFacts {
        let mut out = StmtFacts::default();
        self.expr_into(e, &mut out);
        out
    }

    fn assign(&self, lhs: &LValue, rhs: &Expr) -> StmtFacts {
        let mut out = StmtFacts::default();
        if let Some(Accumulation { name: loc, index, addend, .. }) = accumulation(lhs, rhs) {
            if self.is_global(loc) {
                out.footprint.accums.insert(loc.to_string());
                if let Some(i) = index {
                    self.expr_into(i, &mut out);
                }
                self.expr_into(addend, &mut out);
                return out;
            }
        }
        match lhs {
            LValue::Var(v) => {
                if self.is_global(v) {
                    out.footprint.writes.insert(v.clone());
                } else {
                    out.local_writes.insert(v.clone());
                }
            }
            LValue::Index(a, i) => {
                out.footprint.writes.insert(a.clone());
                self.expr_into(i, &mut out);
            }
        }
        self.expr_into(rhs, &mut out);
        out
    }

    /// Facts for a statement in the context of the current summaries.
    pub fn stmt(&self, s: &Stmt) -> StmtFacts {
        match s {
            Stmt::Assign { lhs, rhs } => self.assign(lhs, rhs),
            Stmt::Throw(e) => {
                let mut out = self.expr(e);
                out.throws = match e {
                    Expr::NewExc(t) => Throws {
                        tags: [t.clone()].into(),
                        ..Throws::default()
                    },
                    Expr::WrapMultiple(_) => Throws::multiple(),
                    _ => Throws::unknown(),
                };
                out
            }
            Stmt::AdvanceAll => StmtFacts {
                may_advance: true,
                ..StmtFacts::default()
            },
            Stmt::Call { target, args } => {
                let mut out = StmtFacts::default();
                for a in args {
                    self.expr_into(a, &mut out);
                }
                // not yet summarized: the fixed point will revisit
                if let Some(callee) = self.summaries.get(target) {
                    out.join(callee);
                }
                out
            }
            Stmt::Finish { body, pending } => {
                let b = self.stmt(body);
                let mut out = StmtFacts {
                    footprint: b.footprint,
                    local_reads: b.local_reads,
                    local_writes: b.local_writes,
                    may_advance: b.may_advance,
                    ..StmtFacts::default()
                };
                if b.escaping_throw || !b.throws.is_empty() {
                    out.throws = Throws::multiple();
                }
                if !pending.is_empty() {
                    out.throws.any = true;
                    out.local_reads.extend(pending.iter().cloned());
                }
                out
            }
            Stmt::Async { body, clocks } => {
                let b = self.stmt(body);
                let mut local_reads = b.local_reads;
                local_reads.extend(clocks.iter().cloned());
                StmtFacts {
                    footprint: b.footprint,
                    local_reads,
                    local_writes: BTreeSet::new(),
                    throws: Throws::default(),
                    may_advance: false,
                    escaping_asyncs: true,
                    escaping_clocked: !clocks.is_empty() || b.escaping_clocked,
                    escaping_throw: b.escaping_throw || !b.throws.is_empty(),
                }
            }
            Stmt::TryCatch {
                body,
                var,
                kind,
                handler,
            } => {
                let b = self.stmt(body);
                let h = self.stmt(handler);
                let caught = b.throws.minus(kind);
                let mut out = b;
                out.throws = caught;
                out.local_writes.insert(var.clone());
                out.join(&h);
                out
            }
            Stmt::ClockMake(c) => StmtFacts {
                local_writes: [c.clone()].into(),
                ..StmtFacts::default()
            },
            Stmt::ClockDrop(c) => StmtFacts {
                local_reads: [c.clone()].into(),
                ..StmtFacts::default()
            },
            _ => {
                let mut out = StmtFacts::default();
                for e in s.own_exprs() {
                    self.expr_into(e, &mut out);
                }
                for c in s.children() {
                    out.join(&self.stmt(c));
                }
                out
            }
        }
    }

    pub fn may_throw(&self, s: &Stmt) -> bool {
        self.stmt(s).may_throw()
    }

    /// The escaping asyncs of `s`, with their aggregate facts.
    pub fn escaping_asyncs(&self, s: &Stmt) -> EAsyncSet {
        let mut set = EAsyncSet::default();
        self.collect_escaping(s, &mut Vec::new(), &mut set);
        set
    }

    fn collect_escaping(&self, s: &Stmt, path: &mut Vec<usize>, set: &mut EAsyncSet) {
        match s {
            Stmt::Finish { .. } => return,
            Stmt::Async { .. } => {
                let f = self.stmt(s);
                set.members.push(EAsync {
                    path: path.clone(),
                    kind: EAsyncKind::Async,
                });
                set.absorb(&f);
                // asyncs nested in this one escape too, but are covered above
                return;
            }
            Stmt::Call { target, .. } => {
                if let Some(callee) = self.summaries.get(target) {
                    if callee.escaping_asyncs {
                        set.members.push(EAsync {
                            path: path.clone(),
                            kind: EAsyncKind::Call(target.clone()),
                        });
                        set.footprint.union(&callee.footprint);
                        set.clocked |= callee.escaping_clocked;
                        set.throws |= callee.escaping_throw;
                    }
                }
                return;
            }
            _ => {}
        }
        for (i, c) in s.children().into_iter().enumerate() {
            path.push(i);
            self.collect_escaping(c, path, set);
            path.pop();
        }
    }

    /// Whether `target` may depend on (or be depended on by) the tasks in
    /// `sources`.
    pub fn depends(&self, target: &Stmt, sources: &EAsyncSet) -> bool {
        depends(&self.stmt(target), sources)
    }
}

/// `target` conflicts with the escaping tasks: a global written by one side
/// and touched by the other, or a local the target writes that a task read
/// when it was spawned.
pub fn depends(target: &StmtFacts, sources: &EAsyncSet) -> bool {
    target.footprint.conflicts(&sources.footprint)
        || target
            .local_writes
            .iter()
            .any(|v| sources.captured.contains(v))
}

/// Recognizes `x = x + e`, `x = e + x`, `x = x - e` and the array forms with
/// syntactically identical indices, where `e` (and the index) do not read
/// the updated location.
pub(crate) fn accumulation<'a>(lhs: &'a LValue, rhs: &'a Expr) -> Option<Accumulation<'a>> {
    let Expr::Binary(op @ (BinOp::Add | BinOp::Sub), a, b) = rhs else {
        return None;
    };
    let is_target = |e: &Expr| match (lhs, e) {
        (LValue::Var(x), Expr::Var(y)) => x == y,
        (LValue::Index(x, i), Expr::Index(y, j)) => x == y && i == &**j,
        _ => false,
    };
    let addend = if is_target(a) {
        &**b
    } else if *op == BinOp::Add && is_target(b) {
        &**a
    } else {
        return None;
    };
    let name = lhs.name();
    let mut vars = Vec::new();
    addend.collect_vars(&mut vars);
    if let LValue::Index(_, i) = lhs {
        i.collect_vars(&mut vars);
    }
    if vars.contains(&name) {
        return None;
    }
    Some(Accumulation {
        name,
        index: match lhs {
            LValue::Index(_, i) => Some(i),
            LValue::Var(_) => None,
        },
        addend,
        subtract: *op == BinOp::Sub,
    })
}

/// An update of the form `x = x + e` / `x = x - e` (or on an array cell).
pub(crate) struct Accumulation<'a> {
    pub name: &'a str,
    pub index: Option<&'a Expr>,
    pub addend: &'a Expr,
    pub subtract: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum EAsyncKind {
    Async,
    /// A call whose callee leaves tasks running.
    Call(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EAsync {
    /// Location relative to the statement the set was computed for.
    pub path: Vec<usize>,
    pub kind: EAsyncKind,
}

/// Escaping asyncs of a statement with their combined effects.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EAsyncSet {
    pub members: Vec<EAsync>,
    pub footprint: Footprint,
    /// Locals whose values the tasks captured at spawn.
    pub captured: BTreeSet<String>,
    pub clocked: bool,
    pub throws: bool,
}

impl EAsyncSet {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn absorb(&mut self, f: &StmtFacts) {
        self.footprint.union(&f.footprint);
        self.captured.extend(f.local_reads.iter().cloned());
        self.clocked |= f.escaping_clocked;
        self.throws |= f.escaping_throw;
    }

    /// Any member is registered on a clock.
    pub fn registered_on_clocks(&self) -> bool {
        self.clocked
    }
}

/// Per-statement facts of every method, keyed by method then path.
#[derive(Serialize)]
pub struct FactsDump {
    pub methods: BTreeMap<String, MethodDump>,
}

#[derive(Serialize)]
pub struct MethodDump {
    pub summary: StmtFacts,
    pub recursive: bool,
    pub statements: Vec<StmtDump>,
}

#[derive(Serialize)]
pub struct StmtDump {
    pub path: String,
    pub kind: &'static str,
    pub reads: BTreeSet<String>,
    pub writes: BTreeSet<String>,
    pub accums: BTreeSet<String>,
    pub may_throw: bool,
    pub clock_registered: bool,
}

fn kind_name(s: &Stmt) -> &'static str {
    match s {
        Stmt::Seq(_) => "seq",
        Stmt::Finish { .. } => "finish",
        Stmt::Async { .. } => "async",
        Stmt::For { .. } => "for",
        Stmt::While { .. } => "while",
        Stmt::If { .. } => "if",
        Stmt::Switch { .. } => "switch",
        Stmt::TryCatch { .. } => "try",
        Stmt::Throw(_) => "throw",
        Stmt::AdvanceAll => "advanceAll",
        Stmt::ClockMake(_) => "clock",
        Stmt::ClockDrop(_) => "drop",
        Stmt::Call { .. } => "call",
        Stmt::Assign { .. } => "assign",
        Stmt::Break(_) => "break",
        Stmt::Continue(_) => "continue",
        Stmt::Return => "return",
        Stmt::Skip => "skip",
    }
}

/// Facts for every statement, in a form suitable for JSON output.
pub fn dump_facts(program: &Program) -> FactsDump {
    let facts = Facts::new(program);
    let cg = build_call_graph(program);
    let mut methods = BTreeMap::new();
    for m in &program.methods {
        let mut statements = Vec::new();
        m.body.walk(&mut |s, path| {
            let f = facts.stmt(s);
            let mut reads = f.footprint.reads.clone();
            reads.extend(f.local_reads.iter().cloned());
            let mut writes = f.footprint.writes.clone();
            writes.extend(f.local_writes.iter().cloned());
            statements.push(StmtDump {
                path: crate::ir::path_string(path),
                kind: kind_name(s),
                reads,
                writes,
                accums: f.footprint.accums.clone(),
                may_throw: f.may_throw(),
                clock_registered: f.escaping_clocked,
            });
        });
        methods.insert(
            m.name.clone(),
            MethodDump {
                summary: facts.summary(&m.name).cloned().unwrap_or_default(),
                recursive: cg.is_recursive(&m.name),
                statements,
            },
        );
    }
    FactsDump { methods }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_stmt, parse_str};

    fn facts_for(globals: &str) -> Facts {
        Facts::new(&parse_str(&format!("{globals} def main() {{ }}")).unwrap())
    }

    #[test]
    fn escaping_asyncs_follow_ief() {
        let f = facts_for("");
        let s = parse_stmt("async { x = 1; }").unwrap();
        assert_eq!(f.escaping_asyncs(&s).members.len(), 1);
        let s = parse_stmt("finish { async { x = 1; } }").unwrap();
        assert!(f.escaping_asyncs(&s).is_empty());
        let s = parse_stmt("finish { async { x = 1; } } async { y = 2; }").unwrap();
        let set = f.escaping_asyncs(&s);
        assert_eq!(set.members.len(), 1);
        assert_eq!(set.members[0].path, vec![1]);
    }

    #[test]
    fn depends_on_flow_through_globals() {
        let f = facts_for("var x = 0; var y = 0; var z = 0;");
        let e = f.escaping_asyncs(&parse_stmt("async { x = 1; }").unwrap());
        assert!(f.depends(&parse_stmt("y = x;").unwrap(), &e));
        assert!(!f.depends(&parse_stmt("y = z;").unwrap(), &e));
    }

    #[test]
    fn arrays_are_one_location() {
        let f = facts_for("array a[4]; var y = 0;");
        let e = f.escaping_asyncs(&parse_stmt("async { a[0] = 1; }").unwrap());
        assert!(f.depends(&parse_stmt("y = a[1];").unwrap(), &e));
    }

    #[test]
    fn accumulations_commute() {
        let f = facts_for("var s = 0; var t = 0;");
        let e = f.escaping_asyncs(&parse_stmt("async { s = s + 1; }").unwrap());
        assert!(!f.depends(&parse_stmt("s = s + 2;").unwrap(), &e));
        assert!(f.depends(&parse_stmt("t = s;").unwrap(), &e));
        assert!(f.depends(&parse_stmt("s = s * 2;").unwrap(), &e));
    }

    #[test]
    fn captured_locals_depend_on_later_writes() {
        let f = facts_for("var g = 0;");
        let e = f.escaping_asyncs(&parse_stmt("async { g = k; }").unwrap());
        assert!(f.depends(&parse_stmt("k = 3;").unwrap(), &e));
    }

    #[test]
    fn handled_throw_does_not_escape() {
        let f = facts_for("");
        let s = parse_stmt("try { throw new E; } catch (e: E) { skip; }").unwrap();
        assert!(!f.may_throw(&s));
        let s = parse_stmt("try { throw new E; } catch (e: F) { skip; }").unwrap();
        assert!(f.may_throw(&s));
        // the handler does not see exceptions of escaping tasks
        let s = parse_stmt("finish { try { async { throw new E; } } catch (e: Exception) { } }")
            .unwrap();
        assert!(f.may_throw(&s));
    }

    #[test]
    fn may_throw_through_call_chain() {
        let p = parse_str(
            "def main() { f(); } def f() { g(); } def g() { throw new Boom; }",
        )
        .unwrap();
        let facts = Facts::new(&p);
        assert!(facts.may_throw(&p.method("main").unwrap().body));
    }

    #[test]
    fn clocked_membership() {
        let f = facts_for("");
        let s = parse_stmt("clock c; async clocked(c) { advanceAll; }").unwrap();
        assert!(f.escaping_asyncs(&s).registered_on_clocks());
        let s = parse_stmt("async { skip; }").unwrap();
        assert!(!f.escaping_asyncs(&s).registered_on_clocks());
    }
}
