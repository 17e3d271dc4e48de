//! Dynamic load-balanced loop chunking.
//!
//! A canonical parallel loop `for (i = lo; i < n; i = i + 1) async { B }`
//! (optionally directly inside a `finish`) is replaced by a template that
//! reads the idle-worker count, splits the remaining iterations into one
//! chunk per idle worker plus a smaller share for the current worker, and
//! falls back to a serial loop that keeps polling for idle workers. Loops
//! whose tasks are clocked get one serial loop per barrier phase and a
//! `switch` on the number of phases already run serially.

mod partition;

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

pub use partition::{compute_partition, Partition};

use crate::analysis::Facts;
use crate::ir::{path_string, BinOp, Builtin, Case, Expr, Ident, LValue, NameGen, Program, Stmt};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DlbcError {
    #[error("partition needs at least one iteration and one idle worker (got {actualn} iterations, {workers} workers)")]
    Domain { actualn: i64, workers: i64 },
    #[error("loop is not canonical: {0}")]
    NotCanonical(String),
}

fn reject<T>(why: impl Into<String>) -> Result<T, DlbcError> {
    Err(DlbcError::NotCanonical(why.into()))
}

/// A recognized parallel loop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalLoop {
    pub var: Ident,
    pub lo: Expr,
    pub hi: Expr,
    pub clocks: Vec<Ident>,
    /// Task body split at its top-level barriers; one entry when unclocked.
    pub phases: Vec<Stmt>,
    /// The loop sat directly inside a `finish` that only it occupies.
    pub in_finish: bool,
    /// Tasks spawned by the body may outlive one iteration.
    pub body_escapes: bool,
}

impl CanonicalLoop {
    pub fn clocked(&self) -> bool {
        !self.clocks.is_empty()
    }

    pub fn body(&self) -> Stmt {
        let mut items = Vec::new();
        for (k, p) in self.phases.iter().enumerate() {
            if k > 0 {
                items.push(Stmt::AdvanceAll);
            }
            items.push(p.clone());
        }
        Stmt::seq(items)
    }
}

/// Matches the loop shape without any dependence checks.
fn shape(site: &Stmt) -> Option<(bool, &Stmt)> {
    match site {
        Stmt::Finish { body, pending } if pending.is_empty() && matches!(**body, Stmt::For { .. }) => {
            shape(body).map(|(_, f)| (true, f))
        }
        Stmt::For { body, .. } if matches!(**body, Stmt::Async { .. }) => Some((false, site)),
        _ => None,
    }
}

/// Whether `site` has the syntactic form of a parallel loop.
pub fn looks_parallel(site: &Stmt) -> bool {
    shape(site).is_some()
}

fn var_of(s: &Stmt) -> Option<(&Ident, &Expr)> {
    match s {
        Stmt::Assign {
            lhs: LValue::Var(v),
            rhs,
        } => Some((v, rhs)),
        _ => None,
    }
}

fn is_increment(step: &Stmt, var: &str) -> bool {
    let Some((v, rhs)) = var_of(step) else {
        return false;
    };
    v == var
        && matches!(rhs, Expr::Binary(BinOp::Add, a, b)
            if matches!(&**a, Expr::Var(x) if x == var) && **b == Expr::Int(1))
}

/// Recognizes the loop at `path` in `method_body` and checks that running
/// its iterations grouped in chunks or inline in the current task keeps
/// the meaning of the program.
pub fn recognize(
    method_body: &Stmt,
    params: &[Ident],
    path: &[usize],
    facts: &Facts,
) -> Result<CanonicalLoop, DlbcError> {
    let site = method_body
        .at_path(path)
        .ok_or_else(|| DlbcError::NotCanonical("no statement at path".into()))?;
    let Some((in_finish, Stmt::For {
        init,
        cond,
        step,
        body,
    })) = shape(site)
    else {
        return reject("not a for loop whose body is a single async");
    };
    let Stmt::Async { body: task, clocks } = &**body else {
        unreachable!()
    };
    let Some((var, lo)) = var_of(init) else {
        return reject("loop init is not `i = lo`");
    };
    let hi = match cond {
        Expr::Binary(BinOp::Lt, a, b) if matches!(&**a, Expr::Var(x) if x == var) => (**b).clone(),
        _ => return reject("loop condition is not `i < n`"),
    };
    if !is_increment(step, var) {
        return reject("loop step is not `i = i + 1`");
    }
    if facts.is_global(var) {
        return reject("loop variable is a global");
    }

    let tf = facts.stmt(task);
    let mut hi_vars = Vec::new();
    hi.collect_vars(&mut hi_vars);
    if hi.uses_builtin() || hi_vars.contains(&var.as_str()) {
        return reject("upper bound is not loop invariant");
    }
    for v in &hi_vars {
        if tf.local_writes.contains(*v) || tf.footprint.writes.contains(*v) || tf.footprint.accums.contains(*v) {
            return reject(format!("upper bound variable `{v}` is written by the body"));
        }
    }
    if tf.local_writes.contains(var.as_str()) {
        return reject("body writes the loop variable");
    }
    if tf.may_throw() || tf.escaping_throw {
        return reject("body may throw");
    }
    if task.contains(&|s| matches!(s, Stmt::Return)) {
        return reject("body contains a return");
    }

    let phases = if clocks.is_empty() {
        if tf.may_advance {
            return reject("unclocked body reaches a barrier");
        }
        vec![(**task).clone()]
    } else {
        let mut phases = vec![Vec::new()];
        for s in task.as_slice() {
            if matches!(s, Stmt::AdvanceAll) {
                phases.push(Vec::new());
            } else {
                phases.last_mut().unwrap().push(s.clone());
            }
        }
        let phases: Vec<Stmt> = phases.into_iter().map(Stmt::seq).collect();
        if phases.iter().any(|p| facts.stmt(p).may_advance) {
            return reject("barrier nested below the top level of the body");
        }
        phases
    };

    // iterations of one chunk now share a frame, and the parent and serial
    // blocks run the body in the method's own frame
    let written: BTreeSet<String> = tf
        .local_writes
        .iter()
        .filter(|v| !facts.is_global(v))
        .cloned()
        .collect();
    if !written.is_empty() {
        let mut rest = method_body.clone();
        *rest.at_path_mut(path).unwrap() = Stmt::Skip;
        let mut outside = names_in(&rest);
        outside.extend(params.iter().cloned());
        outside.extend(hi_vars.iter().map(|v| v.to_string()));
        outside.extend({
            let mut lv = Vec::new();
            lo.collect_vars(&mut lv);
            lv.into_iter().map(String::from).collect::<Vec<_>>()
        });
        if let Some(v) = written.iter().find(|v| outside.contains(*v)) {
            return reject(format!("body writes `{v}`, which is used outside the loop"));
        }
        let mut assigned = BTreeSet::new();
        if let Err(v) = assigned_before_read(task, &written, &mut assigned) {
            return reject(format!("`{v}` may carry a value from one iteration to the next"));
        }
    }

    Ok(CanonicalLoop {
        var: var.clone(),
        lo: lo.clone(),
        hi,
        clocks: clocks.clone(),
        phases,
        in_finish,
        body_escapes: tf.escaping_asyncs,
    })
}

/// Every identifier mentioned by a statement.
fn names_in(s: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    s.walk(&mut |n, _| {
        let mut vs = Vec::new();
        for e in n.own_exprs() {
            e.collect_vars(&mut vs);
        }
        out.extend(vs.into_iter().map(String::from));
        match n {
            Stmt::Assign { lhs, .. } => {
                out.insert(lhs.name().to_string());
            }
            Stmt::TryCatch { var, .. } | Stmt::ClockMake(var) | Stmt::ClockDrop(var) => {
                out.insert(var.clone());
            }
            Stmt::Async { clocks, .. } => out.extend(clocks.iter().cloned()),
            Stmt::Finish { pending, .. } => out.extend(pending.iter().cloned()),
            _ => {}
        }
    });
    out
}

fn check_reads(e: &Expr, watched: &BTreeSet<String>, assigned: &BTreeSet<String>) -> Result<(), String> {
    let mut vs = Vec::new();
    e.collect_vars(&mut vs);
    match vs.into_iter().find(|v| watched.contains(*v) && !assigned.contains(*v)) {
        Some(v) => Err(v.to_string()),
        None => Ok(()),
    }
}

/// Conservative definite-assignment check: each watched local must be
/// assigned on every path before it is read.
fn assigned_before_read(
    s: &Stmt,
    watched: &BTreeSet<String>,
    assigned: &mut BTreeSet<String>,
) -> Result<(), String> {
    match s {
        Stmt::Seq(items) => items
            .iter()
            .try_for_each(|i| assigned_before_read(i, watched, assigned)),
        Stmt::Finish { body, .. } => assigned_before_read(body, watched, assigned),
        Stmt::Assign { lhs, rhs } => {
            if let LValue::Index(_, i) = lhs {
                check_reads(i, watched, assigned)?;
            }
            check_reads(rhs, watched, assigned)?;
            if let LValue::Var(v) = lhs {
                assigned.insert(v.clone());
            }
            Ok(())
        }
        Stmt::If { cond, then, els } => {
            check_reads(cond, watched, assigned)?;
            let mut a = assigned.clone();
            let mut b = assigned.clone();
            assigned_before_read(then, watched, &mut a)?;
            assigned_before_read(els, watched, &mut b)?;
            *assigned = a.intersection(&b).cloned().collect();
            Ok(())
        }
        Stmt::For {
            init,
            cond,
            step,
            body,
        } => {
            assigned_before_read(init, watched, assigned)?;
            check_reads(cond, watched, assigned)?;
            let mut inner = assigned.clone();
            assigned_before_read(body, watched, &mut inner)?;
            assigned_before_read(step, watched, &mut inner)
        }
        Stmt::While { cond, body, .. } => {
            check_reads(cond, watched, assigned)?;
            assigned_before_read(body, watched, &mut assigned.clone())
        }
        Stmt::Switch { scrutinee, cases } => {
            check_reads(scrutinee, watched, assigned)?;
            cases
                .iter()
                .try_for_each(|c| assigned_before_read(&c.body, watched, &mut assigned.clone()))
        }
        Stmt::TryCatch { body, handler, .. } => {
            assigned_before_read(body, watched, &mut assigned.clone())?;
            assigned_before_read(handler, watched, &mut assigned.clone())
        }
        Stmt::Async { body, .. } => assigned_before_read(body, watched, &mut assigned.clone()),
        other => other
            .own_exprs()
            .into_iter()
            .try_for_each(|e| check_reads(e, watched, assigned)),
    }
}

fn v(name: &str) -> Expr {
    Expr::var(name)
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    Expr::bin(op, a, b)
}

fn set(name: &str, rhs: Expr) -> Stmt {
    Stmt::assign(name, rhs)
}

/// `for (var = from; var < to; var = var + 1) body`
fn serial_for(var: &str, from: Expr, to: Expr, body: Stmt) -> Stmt {
    Stmt::For {
        init: Box::new(set(var, from)),
        cond: bin(BinOp::Lt, v(var), to),
        step: Box::new(set(var, bin(BinOp::Add, v(var), Expr::int(1)))),
        body: Box::new(body),
    }
}

fn spawn(lp: &CanonicalLoop, body: Stmt) -> Stmt {
    Stmt::Async {
        body: Box::new(body),
        clocks: lp.clocks.clone(),
    }
}

/// `switch (phase)` whose case k runs phase k over `[from, to)` and then
/// the barrier that closes it, falling through to the later phases.
fn phase_switch(lp: &CanonicalLoop, phase: &str, from: &Expr, to: &Expr) -> Stmt {
    let last = lp.phases.len() - 1;
    let cases = lp
        .phases
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let mut body = vec![serial_for(&lp.var, from.clone(), to.clone(), p.clone())];
            if k < last {
                body.push(Stmt::AdvanceAll);
            }
            Case {
                value: k as i64,
                body: Stmt::seq(body),
            }
        })
        .collect();
    Stmt::Switch {
        scrutinee: v(phase),
        cases,
    }
}

/// Iteration count of `[lo, n)` as an expression.
fn span(lp: &CanonicalLoop) -> Expr {
    if lp.lo == Expr::Int(0) {
        lp.hi.clone()
    } else {
        bin(BinOp::Sub, lp.hi.clone(), lp.lo.clone())
    }
}

/// Static chunking: one task per thread, each running a contiguous block
/// of `ceil(span / threads)` iterations.
pub fn lc_chunk(lp: &CanonicalLoop, names: &mut NameGen) -> Stmt {
    let n_chunks = names.fresh("nChunks");
    let chunk = names.fresh("chunkSize");
    let ii = names.fresh("ii");
    let ni = names.fresh("ni");
    let kx = names.fresh("kx");
    let n = lp.hi.clone();

    let mut task = vec![
        set(&kx, bin(BinOp::Add, v(&ni), v(&chunk))),
        Stmt::if_then(bin(BinOp::Gt, v(&kx), n.clone()), set(&kx, n.clone())),
    ];
    for (k, p) in lp.phases.iter().enumerate() {
        if k > 0 {
            task.push(Stmt::AdvanceAll);
        }
        task.push(serial_for(&lp.var, v(&ni), v(&kx), p.clone()));
    }
    let outer = Stmt::For {
        init: Box::new(set(&ii, lp.lo.clone())),
        cond: bin(BinOp::Lt, v(&ii), n.clone()),
        step: Box::new(set(&ii, bin(BinOp::Add, v(&ii), v(&chunk)))),
        body: Box::new(Stmt::seq(vec![set(&ni, v(&ii)), spawn(lp, Stmt::seq(task))])),
    };
    let size = bin(
        BinOp::Div,
        bin(
            BinOp::Sub,
            bin(BinOp::Add, span(lp), v(&n_chunks)),
            Expr::int(1),
        ),
        v(&n_chunks),
    );
    Stmt::seq(vec![
        set(&n_chunks, Expr::Builtin(Builtin::NThreads)),
        set(&chunk, size),
        if lp.in_finish {
            Stmt::finish(outer)
        } else {
            outer
        },
    ])
}

/// The full load-balanced template.
pub fn gen_dlbc(lp: &CanonicalLoop, names: &mut NameGen) -> Stmt {
    let workers = names.fresh("workers");
    let ii = names.fresh("ii");
    let tot = names.fresh("totWorkers");
    let actualn = names.fresh("actualn");
    let eq = names.fresh("eqChunk");
    let new_n = names.fresh("newN");
    let rem = names.fresh("rem");
    let kx = names.fresh("kx");
    let ni = names.fresh("ni");
    let phase = lp.clocked().then(|| names.fresh("phase"));
    let outer = names.fresh("outer");
    let n = lp.hi.clone();
    let i = lp.var.as_str();
    let idle = || Expr::Builtin(Builtin::IdleWorkers);

    // chunked block: one task per idle worker
    let chunk_body = match &phase {
        None => serial_for(i, v(&ni), v(&kx), lp.phases[0].clone()),
        Some(ph) => phase_switch(lp, ph, &v(&ni), &v(&kx)),
    };
    let chunked = Stmt::For {
        init: Box::new(Stmt::Skip),
        cond: bin(BinOp::Lt, v(&ii), v(&new_n)),
        step: Box::new(Stmt::Skip),
        body: Box::new(Stmt::seq(vec![
            set(
                &kx,
                bin(
                    BinOp::Add,
                    bin(BinOp::Add, v(&ii), v(&eq)),
                    bin(BinOp::Div, v(&rem), v(&tot)),
                ),
            ),
            set(&ni, v(&ii)),
            set(&rem, bin(BinOp::Sub, v(&rem), Expr::int(1))),
            set(&ii, v(&kx)),
            spawn(lp, chunk_body),
        ])),
    };
    // parent block: the current worker's own, smallest share
    let parent = match &phase {
        None => serial_for(i, v(&new_n), n.clone(), lp.phases[0].clone()),
        Some(ph) => phase_switch(lp, ph, &v(&new_n), &n),
    };
    let blocks = Stmt::seq(vec![chunked, parent]);
    let parallel = Stmt::seq(vec![
        set(&tot, bin(BinOp::Add, v(&workers), Expr::int(1))),
        set(&actualn, bin(BinOp::Sub, n.clone(), v(&ii))),
        set(&eq, bin(BinOp::Div, v(&actualn), v(&tot))),
        // absolute end of the chunked region, so re-entry with ii > lo works
        set(&new_n, bin(BinOp::Sub, n.clone(), v(&eq))),
        set(
            &rem,
            bin(
                BinOp::Add,
                bin(BinOp::Rem, v(&actualn), v(&tot)),
                v(&workers),
            ),
        ),
        if lp.in_finish && !lp.body_escapes {
            Stmt::finish(blocks)
        } else {
            blocks
        },
    ]);

    // serial block: poll for idle workers and go back to the parallel
    // branch with what is left
    let serial = match &phase {
        None => {
            let resume = Stmt::if_then(
                bin(
                    BinOp::And,
                    bin(BinOp::Gt, v(&workers), Expr::int(0)),
                    bin(BinOp::Lt, v(i), bin(BinOp::Sub, n.clone(), Expr::int(2))),
                ),
                Stmt::seq(vec![
                    set(&ii, bin(BinOp::Add, v(i), Expr::int(1))),
                    Stmt::Continue(Some(outer.clone())),
                ]),
            );
            serial_for(
                i,
                v(&ii),
                n.clone(),
                Stmt::seq(vec![lp.phases[0].clone(), set(&workers, idle()), resume]),
            )
        }
        Some(ph) => {
            let mut items = Vec::new();
            let last = lp.phases.len() - 1;
            for (k, p) in lp.phases.iter().enumerate() {
                items.push(serial_for(i, v(&ii), n.clone(), p.clone()));
                if k < last {
                    items.push(Stmt::AdvanceAll);
                    items.push(set(&workers, idle()));
                    items.push(Stmt::if_then(
                        bin(BinOp::Gt, v(&workers), Expr::int(0)),
                        Stmt::seq(vec![
                            set(ph, Expr::int(k as i64 + 1)),
                            Stmt::Continue(Some(outer.clone())),
                        ]),
                    ));
                }
            }
            Stmt::seq(items)
        }
    };

    let mut head = vec![set(&ii, lp.lo.clone())];
    if let Some(ph) = &phase {
        head.push(set(ph, Expr::int(0)));
    }
    head.push(set(&workers, idle()));
    let template = Stmt::While {
        label: Some(outer.clone()),
        cond: Expr::Bool(true),
        body: Box::new(Stmt::seq(vec![
            Stmt::If {
                cond: bin(BinOp::Gt, v(&workers), Expr::int(0)),
                then: Box::new(parallel),
                els: Box::new(serial),
            },
            Stmt::Break(None),
        ])),
    };
    head.push(template);
    let out = Stmt::seq(head);
    if lp.in_finish && lp.body_escapes {
        Stmt::finish(out)
    } else {
        out
    }
}

/// Which chunking to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Chunking {
    Static,
    LoadBalanced,
}

#[derive(Clone, Debug, Serialize)]
pub struct LoopOutcome {
    pub method: String,
    pub location: String,
    pub clocked: bool,
    /// `None` when transformed, else why the loop was left alone.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DlbcReport {
    pub loops: Vec<LoopOutcome>,
}

impl DlbcReport {
    pub fn transformed(&self) -> usize {
        self.loops.iter().filter(|l| l.skipped.is_none()).count()
    }
}

/// Sites of parallel loops, innermost first.
fn sites(body: &Stmt) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    body.walk(&mut |s, path| {
        if looks_parallel(s) {
            out.push(path.to_vec());
        }
    });
    // a loop wrapped in its finish matches twice; keep the outer one
    let all = out.clone();
    out.retain(|p| {
        !all.iter()
            .any(|q| q.len() + 1 == p.len() && p.starts_with(q) && matches!(body.at_path(q), Some(Stmt::Finish { .. })))
    });
    // deeper first, so rewriting one never moves another that is left
    out.sort_by(|a, b| b.len().cmp(&a.len()).then(b.cmp(a)));
    out
}

/// Chunks every canonical parallel loop of the program.
pub fn chunk_program(program: &Program, how: Chunking) -> (Program, DlbcReport) {
    let mut out = program.clone();
    let mut report = DlbcReport::default();
    let facts = Facts::new(program);
    let mut names = NameGen::for_program(program);
    for m in out.methods.iter_mut() {
        let params: Vec<Ident> = m.params.iter().map(|p| p.name.clone()).collect();
        for path in sites(&m.body) {
            let clocked = shape(m.body.at_path(&path).unwrap())
                .is_some_and(|(_, f)| matches!(f, Stmt::For { body, .. } if matches!(&**body, Stmt::Async { clocks, .. } if !clocks.is_empty())));
            let outcome = recognize(&m.body, &params, &path, &facts).map(|lp| match how {
                Chunking::Static => lc_chunk(&lp, &mut names),
                Chunking::LoadBalanced => gen_dlbc(&lp, &mut names),
            });
            let skipped = match outcome {
                Ok(new) => {
                    *m.body.at_path_mut(&path).unwrap() = new;
                    None
                }
                Err(e) => Some(e.to_string()),
            };
            report.loops.push(LoopOutcome {
                method: m.name.clone(),
                location: path_string(&path),
                clocked,
                skipped,
            });
        }
        m.body = std::mem::replace(&mut m.body, Stmt::Skip).normalized();
    }
    (out, report)
}
