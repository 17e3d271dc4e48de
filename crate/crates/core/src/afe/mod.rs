//! Aggressive finish elimination.
//!
//! Methods are visited callees first. Inside a method the local rules run
//! to a fixed point; if the body ends up as a single `finish`, that finish
//! is moved out to the non-recursive call sites. Otherwise the method is
//! restored to what it was before this pass touched it.

mod rules;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use rules::RuleCtx;

use crate::analysis::{build_call_graph, depends, CallGraph, Facts, StmtFacts};
use crate::ir::{path_string, ExList, Expr, NameGen, Program, Stmt};

/// Upper bound on rule firings inside one method.
pub const MAX_FIRINGS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    LoopFinishInterchange,
    FinishFusion,
    TailFinishElim,
    FinishIfInterchange,
    FinishExpandUpper,
    FinishExpandLower,
    AsyncFinishInterchange,
    FinishMethodPull,
    TryFinishExchange,
    LowerPending,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    Plain,
    Exceptions,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{rule:?} inapplicable: {reason}")]
pub struct Inapplicable {
    pub rule: RuleId,
    pub reason: String,
}

/// One rule firing, with the method body right after it.
#[derive(Clone, Debug, Serialize)]
pub struct Firing {
    pub rule: RuleId,
    pub method: String,
    pub location: String,
    #[serde(skip)]
    pub after: Stmt,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AfeReport {
    pub firings: Vec<Firing>,
    /// Methods restored from their snapshot, with the reason.
    pub rollbacks: Vec<(String, String)>,
    /// Methods whose finish moved to their callers.
    pub pulled: Vec<String>,
    pub processed: Vec<String>,
}

impl AfeReport {
    pub fn fired(&self, rule: RuleId) -> usize {
        self.firings.iter().filter(|f| f.rule == rule).count()
    }

    /// The firing log as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        self.firings
            .iter()
            .map(|f| serde_json::to_string(f).expect("firing serializes") + "\n")
            .collect()
    }
}

/// Processing state across the call graph.
#[derive(Clone, Debug, Default)]
pub struct AfeState {
    pub processed: BTreeSet<String>,
    pub pulled: BTreeSet<String>,
    pub snapshots: BTreeMap<String, Stmt>,
    pub mode: Mode,
}

/// Applies one local rule at `site`. Pair rules (fusion and the two
/// expansions) expect a two-statement sequence.
pub fn apply_rule(rule: RuleId, site: &Stmt, ctx: &mut RuleCtx) -> Result<Stmt, Inapplicable> {
    match rule {
        RuleId::LoopFinishInterchange => ctx.loop_finish(site),
        RuleId::FinishFusion => ctx.fusion(site),
        RuleId::TailFinishElim => ctx.tail_finish(site),
        RuleId::FinishIfInterchange => ctx.finish_if(site),
        RuleId::FinishExpandUpper => ctx.expand_upper(site),
        RuleId::FinishExpandLower => ctx.expand_lower(site),
        RuleId::AsyncFinishInterchange => ctx.async_finish(site),
        RuleId::TryFinishExchange => ctx.try_finish(site),
        RuleId::LowerPending => match site {
            Stmt::Finish { .. } => Ok(lower_stmt(site.clone())),
            _ => Err(Inapplicable {
                rule,
                reason: "site is not a finish".into(),
            }),
        },
        RuleId::FinishMethodPull => Err(Inapplicable {
            rule,
            reason: "applies to whole methods, not statements".into(),
        }),
    }
}

const PAIR_RULES: [RuleId; 3] = [
    RuleId::FinishFusion,
    RuleId::FinishExpandUpper,
    RuleId::FinishExpandLower,
];

/// Tries the rules that can match at this node, in priority order.
fn try_node(s: &Stmt, ctx: &mut RuleCtx) -> Option<(RuleId, Option<usize>, Stmt)> {
    match s {
        Stmt::Seq(items) => {
            for rule in PAIR_RULES {
                for k in 0..items.len().saturating_sub(1) {
                    let site = Stmt::Seq(items[k..k + 2].to_vec());
                    if let Ok(rep) = apply_rule(rule, &site, ctx) {
                        let mut out = items[..k].to_vec();
                        out.push(rep);
                        out.extend_from_slice(&items[k + 2..]);
                        return Some((rule, Some(k), Stmt::seq(out)));
                    }
                }
            }
            None
        }
        Stmt::If { .. } => ok(RuleId::FinishIfInterchange, s, ctx),
        Stmt::Async { .. } => ok(RuleId::AsyncFinishInterchange, s, ctx),
        Stmt::For { .. } | Stmt::While { .. } => ok(RuleId::LoopFinishInterchange, s, ctx),
        Stmt::Finish { .. } => ok(RuleId::TailFinishElim, s, ctx),
        Stmt::TryCatch { .. } => ok(RuleId::TryFinishExchange, s, ctx),
        _ => None,
    }
}

fn ok(rule: RuleId, s: &Stmt, ctx: &mut RuleCtx) -> Option<(RuleId, Option<usize>, Stmt)> {
    apply_rule(rule, s, ctx).ok().map(|r| (rule, None, r))
}

/// Post-order search for the first applicable rule.
fn find(
    s: &Stmt,
    path: &mut Vec<usize>,
    ctx: &mut RuleCtx,
) -> Option<(RuleId, Vec<usize>, Stmt)> {
    for (i, c) in s.children().into_iter().enumerate() {
        path.push(i);
        let hit = find(c, path, ctx);
        path.pop();
        if hit.is_some() {
            return hit;
        }
    }
    try_node(s, ctx).map(|(rule, k, rep)| {
        let mut at = path.clone();
        if let Some(k) = k {
            at.push(k);
        }
        (rule, at, rep)
    })
}

/// Runs the local rules on one body until none applies. Every firing is
/// appended to `log`.
pub fn rewrite_to_fixpoint(
    method: &str,
    body: Stmt,
    facts: &Facts,
    mode: Mode,
    names: &mut NameGen,
    log: &mut Vec<Firing>,
) -> Stmt {
    let mut body = body.normalized();
    for _ in 0..MAX_FIRINGS {
        let mut ctx = RuleCtx { facts, mode, names };
        let Some((rule, at, rep)) = find(&body, &mut Vec::new(), &mut ctx) else {
            return body;
        };
        // `at` may point one level into a sequence (pair rules); the
        // replacement always stands for the node at the parent path
        let node_path: &[usize] = if matches!(rule, RuleId::FinishFusion | RuleId::FinishExpandUpper | RuleId::FinishExpandLower) {
            &at[..at.len() - 1]
        } else {
            &at
        };
        *body
            .at_path_mut(node_path)
            .expect("rule site exists") = rep;
        body = body.normalized();
        log.push(Firing {
            rule,
            method: method.to_string(),
            location: path_string(&at),
            after: body.clone(),
        });
    }
    panic!("finish elimination did not converge in `{method}` after {MAX_FIRINGS} firings");
}

/// Facts of the statements that run after the call at `path` and before
/// the nearest enclosing async or finish. `None` when there is no such
/// boundary inside the method.
fn followers(body: &Stmt, path: &[usize], facts: &Facts) -> Option<StmtFacts> {
    let mut acc = StmtFacts::default();
    let mut add = |f: StmtFacts| {
        acc.footprint.union(&f.footprint);
        acc.local_writes.extend(f.local_writes);
        acc.local_reads.extend(f.local_reads);
        acc.may_advance |= f.may_advance;
    };
    for depth in (0..path.len()).rev() {
        let parent = body.at_path(&path[..depth]).expect("path is valid");
        let idx = path[depth];
        match parent {
            Stmt::Async { .. } | Stmt::Finish { .. } => return Some(acc),
            Stmt::Seq(items) => {
                for s in &items[idx + 1..] {
                    add(facts.stmt(s));
                }
            }
            Stmt::For { .. } | Stmt::While { .. } => add(facts.stmt(parent)),
            _ => {}
        }
    }
    None
}

/// Moves the finish of `callee` (whose body is `finish { b } pending(p)`)
/// to its callers.
fn pull(
    program: &mut Program,
    callee: &str,
    cg: &CallGraph,
    mode: Mode,
    names: &mut NameGen,
) -> Result<(), Inapplicable> {
    let rule = RuleId::FinishMethodPull;
    let fail = |reason: &str| Inapplicable {
        rule,
        reason: reason.to_string(),
    };
    let Some(Stmt::Finish { body, pending }) = program.method(callee).map(|m| m.body.clone())
    else {
        return Err(fail("method body is not a single finish"));
    };
    let mut sites = Vec::new();
    for m in &program.methods {
        for (path, target) in crate::analysis::call_sites(&m.body) {
            if target == callee {
                sites.push((m.name.clone(), path));
            }
        }
    }
    let (recursive, plain): (Vec<_>, Vec<_>) = sites
        .into_iter()
        .partition(|(caller, _)| cg.is_recursive_edge(caller, callee));
    if plain.is_empty() {
        return Err(fail("no non-recursive call site"));
    }

    // check the unjoined tasks against what follows each recursive call,
    // as seen once the finish is gone
    if !recursive.is_empty() {
        if !pending.is_empty() {
            return Err(fail("pending exceptions with recursive call sites"));
        }
        let mut trial = program.clone();
        trial.method_mut(callee).unwrap().body = (*body).clone();
        let facts = Facts::new(&trial);
        let tasks = facts.escaping_asyncs(&body);
        if tasks.clocked {
            return Err(fail("escaping tasks registered on clocks"));
        }
        if mode == Mode::Exceptions && (tasks.throws || facts.may_throw(&body)) {
            return Err(fail("exceptions would reach a different finish"));
        }
        for (caller, path) in &recursive {
            let caller_body = &trial.method(caller).unwrap().body;
            // sites inside the callee itself lost their leading finish step
            let path = if caller == callee { &path[1..] } else { &path[..] };
            let Some(after) = followers(caller_body, path, &facts) else {
                return Err(fail("recursive call site has no enclosing async"));
            };
            if depends(&after, &tasks) || (tasks.clocked && after.may_advance) {
                return Err(fail("statements after a recursive call depend on its tasks"));
            }
        }
    }

    let slot = (!pending.is_empty()).then(|| format!("__gex_{callee}"));
    {
        let m = program.method_mut(callee).unwrap();
        m.body = match &slot {
            None => (*body).clone(),
            Some(g) => {
                let mut items = vec![(*body).clone()];
                if pending.len() == 1 {
                    items.push(Stmt::assign(g.clone(), Expr::var(&pending.0[0])));
                } else {
                    let x = names.fresh("x");
                    items.push(Stmt::assign(g.clone(), Expr::Null));
                    items.push(Stmt::TryCatch {
                        body: Box::new(Stmt::seq(pending.to_stmts())),
                        var: x.clone(),
                        kind: crate::ir::CatchKind::All,
                        handler: Box::new(Stmt::assign(g.clone(), Expr::var(&x))),
                    });
                }
                Stmt::seq(items)
            }
        };
        m.exception_slot = slot.clone();
    }

    // a call has no children, so wrapping one site never moves another
    for (caller, path) in plain {
        let m = program.method_mut(&caller).unwrap();
        let site = m.body.at_path_mut(&path).expect("call site exists");
        let call = std::mem::replace(site, Stmt::Skip);
        *site = match &slot {
            None => Stmt::finish(call),
            Some(g) => {
                let t = names.fresh("t");
                Stmt::finish_pending(
                    Stmt::Seq(vec![
                        Stmt::assign(t.clone(), Expr::Null),
                        call,
                        Stmt::assign(t.clone(), Expr::var(g)),
                    ]),
                    ExList(vec![t]),
                )
            }
        };
    }
    Ok(())
}

/// Runs AFE over the whole program.
pub fn run_afe(program: &Program, mode: Mode) -> (Program, AfeReport) {
    let mut program = program.clone();
    let mut report = AfeReport::default();
    let mut state = AfeState {
        mode,
        ..AfeState::default()
    };
    let cg = build_call_graph(&program);
    let mut names = NameGen::for_program(&program);

    for name in cg.bottom_up() {
        if !state.processed.insert(name.clone()) {
            continue;
        }
        report.processed.push(name.clone());
        let facts = Facts::new(&program);
        let snapshot = program.method(&name).unwrap().body.clone();
        state.snapshots.insert(name.clone(), snapshot.clone());
        let mut log = Vec::new();
        let body = rewrite_to_fixpoint(&name, snapshot.clone(), &facts, mode, &mut names, &mut log);
        program.method_mut(&name).unwrap().body = body;

        if name == program.entry {
            report.firings.extend(log);
            continue;
        }
        let outcome = if state.pulled.contains(&name) {
            Err(Inapplicable {
                rule: RuleId::FinishMethodPull,
                reason: "already pulled".into(),
            })
        } else {
            pull(&mut program, &name, &cg, mode, &mut names)
        };
        match outcome {
            Ok(()) => {
                state.pulled.insert(name.clone());
                report.pulled.push(name.clone());
                report.firings.extend(log);
                report.firings.push(Firing {
                    rule: RuleId::FinishMethodPull,
                    method: name.clone(),
                    location: String::new(),
                    after: program.method(&name).unwrap().body.clone(),
                });
            }
            Err(why) => {
                let m = program.method_mut(&name).unwrap();
                if m.body != snapshot {
                    report.rollbacks.push((name.clone(), why.reason));
                }
                m.body = snapshot;
            }
        }
    }
    (program, report)
}

fn lower_stmt(s: Stmt) -> Stmt {
    let s = match s {
        Stmt::Finish { body, pending } if !pending.is_empty() => {
            let mut items = vec![Stmt::finish(lower_stmt(*body))];
            items.extend(pending.to_stmts());
            return Stmt::seq(items);
        }
        other => other,
    };
    let mut s = s;
    for c in s.children_mut() {
        let taken = std::mem::replace(c, Stmt::Skip);
        *c = lower_stmt(taken);
    }
    s.normalized()
}

/// Replaces every `finish { S } pending(v, ..)` by `finish { S }` followed
/// by `if (v != null) throw v;` for each entry, in order.
pub fn lower_pending(program: &Program) -> Program {
    let mut out = program.clone();
    for m in &mut out.methods {
        m.body = lower_stmt(std::mem::replace(&mut m.body, Stmt::Skip));
    }
    out
}
