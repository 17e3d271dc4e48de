//! The local rewrite rules. Each rule takes the matched site and either
//! returns its replacement or says which precondition failed.

use super::{Inapplicable, Mode, RuleId};
use crate::analysis::{EAsyncSet, Facts};
use crate::ir::{BinOp, CatchKind, ExList, Expr, NameGen, Stmt};

pub struct RuleCtx<'a> {
    pub facts: &'a Facts,
    pub mode: Mode,
    pub names: &'a mut NameGen,
}

fn no(rule: RuleId, reason: &str) -> Inapplicable {
    Inapplicable {
        rule,
        reason: reason.to_string(),
    }
}

fn shape(rule: RuleId) -> Inapplicable {
    no(rule, "site does not match the rule")
}

fn is_null(v: &str) -> Expr {
    Expr::bin(BinOp::Eq, Expr::var(v), Expr::Null)
}

fn null_inits<'a>(vars: impl IntoIterator<Item = &'a String>) -> Vec<Stmt> {
    vars.into_iter()
        .map(|v| Stmt::assign(v.clone(), Expr::Null))
        .collect()
}

/// `try { body } catch (x: Exception) { handler(x) }` with a fresh `x`.
fn catch_all(names: &mut NameGen, body: Stmt, handler: impl FnOnce(&str) -> Stmt) -> Stmt {
    let x = names.fresh("x");
    let h = handler(&x);
    Stmt::TryCatch {
        body: Box::new(body),
        var: x,
        kind: CatchKind::All,
        handler: Box::new(h),
    }
}

/// `try { body } catch (x: Exception) { e = x; }`
fn capture_into(names: &mut NameGen, body: Stmt, e: &str) -> Stmt {
    catch_all(names, body, |x| Stmt::assign(e, Expr::var(x)))
}

fn pending_of(s: &Stmt) -> Option<(&Stmt, &ExList)> {
    match s {
        Stmt::Finish { body, pending } => Some((body, pending)),
        _ => None,
    }
}

impl RuleCtx<'_> {
    fn exceptions(&self) -> bool {
        self.mode == Mode::Exceptions
    }

    fn eas(&self, s: &Stmt) -> EAsyncSet {
        self.facts.escaping_asyncs(s)
    }

    fn throws(&self, s: &Stmt) -> bool {
        self.facts.may_throw(s)
    }

    /// Loop-Finish Interchange: `for (..) { finish S3 }` becomes
    /// `finish { for (..) S3 }`. The loop header stays where it is.
    pub fn loop_finish(&mut self, site: &Stmt) -> Result<Stmt, Inapplicable> {
        let r = RuleId::LoopFinishInterchange;
        let (inner, header_facts) = match site {
            Stmt::For {
                cond, step, body, ..
            } => {
                let mut f = self.facts.expr(cond);
                let s = self.facts.stmt(step);
                f.footprint.union(&s.footprint);
                f.local_writes.extend(s.local_writes);
                (&**body, f)
            }
            Stmt::While { cond, body, .. } => (&**body, self.facts.expr(cond)),
            _ => return Err(shape(r)),
        };
        let Some((s3, pending)) = pending_of(inner) else {
            return Err(shape(r));
        };
        let e = self.eas(s3);
        // values captured at spawn are not affected: spawn order is unchanged
        if header_facts.footprint.conflicts(&e.footprint) {
            return Err(no(r, "loop header depends on an e-async of the body"));
        }
        let body_fp = self.facts.stmt(s3).footprint;
        if e.footprint.conflicts(&body_fp) {
            return Err(no(r, "e-async has a loop-carried dependence"));
        }
        if e.clocked {
            return Err(no(r, "e-asyncs registered on clocks"));
        }
        let rebuild = |body: Stmt| match site {
            Stmt::For {
                init, cond, step, ..
            } => Stmt::For {
                init: init.clone(),
                cond: cond.clone(),
                step: step.clone(),
                body: Box::new(body),
            },
            Stmt::While { label, cond, .. } => Stmt::While {
                label: label.clone(),
                cond: cond.clone(),
                body: Box::new(body),
            },
            _ => unreachable!(),
        };
        if !self.exceptions() || (pending.is_empty() && !self.throws(s3)) {
            if !pending.is_empty() {
                return Err(no(r, "pending exceptions in plain mode"));
            }
            return Ok(Stmt::finish(rebuild(s3.clone())));
        }
        if e.throws {
            return Err(no(r, "e-asyncs may throw"));
        }
        // the body's own exceptions would have surfaced wrapped by the
        // inner finish; pending ones surface as they are
        let ev = self.names.fresh("e");
        let me = self.names.fresh("me");
        let mut body = Vec::new();
        if self.throws(s3) {
            body.push(catch_all(self.names, s3.clone(), |x| {
                Stmt::seq(vec![
                    Stmt::assign(&me, Expr::WrapMultiple(Box::new(Expr::var(x)))),
                    Stmt::Break(None),
                ])
            }));
        } else {
            body.push(s3.clone());
        }
        if !pending.is_empty() {
            body.push(catch_all(self.names, Stmt::seq(pending.to_stmts()), |x| {
                Stmt::seq(vec![Stmt::assign(&ev, Expr::var(x)), Stmt::Break(None)])
            }));
        }
        let mut fin = null_inits([&ev, &me]);
        fin.push(rebuild(Stmt::seq(body)));
        Ok(Stmt::finish_pending(
            Stmt::seq(fin),
            ExList(vec![ev, me]),
        ))
    }

    /// Finish Fusion on a two-statement sequence.
    pub fn fusion(&mut self, site: &Stmt) -> Result<Stmt, Inapplicable> {
        let r = RuleId::FinishFusion;
        let [a, b] = site.as_slice() else {
            return Err(shape(r));
        };
        let (Some((s1, p1)), Some((s2, p2))) = (pending_of(a), pending_of(b)) else {
            return Err(shape(r));
        };
        let e1 = self.eas(s1);
        if self.facts.depends(b, &e1) {
            return Err(no(r, "second finish depends on an e-async of the first"));
        }
        if e1.clocked && self.facts.stmt(s2).may_advance {
            return Err(no(r, "second body is a barrier for clocked e-asyncs"));
        }
        if !self.exceptions() || p1.is_empty() {
            if !self.exceptions() && !(p1.is_empty() && p2.is_empty()) {
                return Err(no(r, "pending exceptions in plain mode"));
            }
            if self.exceptions() && (e1.throws || self.eas(s2).throws) {
                return Err(no(r, "e-asyncs may throw"));
            }
            return Ok(Stmt::finish_pending(
                Stmt::seq(vec![s1.clone(), s2.clone()]),
                p2.clone(),
            ));
        }
        if e1.throws || self.eas(s2).throws {
            return Err(no(r, "e-asyncs may throw"));
        }
        // the first list must still escape unwrapped and skip S2
        let ev = self.names.fresh("e");
        let mut body = null_inits([&ev]);
        body.push(s1.clone());
        body.push(capture_into(self.names, Stmt::seq(p1.to_stmts()), &ev));
        body.push(Stmt::if_then(is_null(&ev), s2.clone()));
        let mut pending = vec![ev];
        pending.extend(p2.iter().cloned());
        Ok(Stmt::finish_pending(Stmt::seq(body), ExList(pending)))
    }

    /// Tail Finish Elimination: `finish { finish S1 }`.
    pub fn tail_finish(&mut self, site: &Stmt) -> Result<Stmt, Inapplicable> {
        let r = RuleId::TailFinishElim;
        let Some((inner, p2)) = pending_of(site) else {
            return Err(shape(r));
        };
        let Some((s1, p1)) = pending_of(inner) else {
            return Err(shape(r));
        };
        let inner_quiet = p1.is_empty() && !self.throws(s1) && !self.eas(s1).throws;
        if !self.exceptions() || inner_quiet {
            if !self.exceptions() && !(p1.is_empty() && p2.is_empty()) {
                return Err(no(r, "pending exceptions in plain mode"));
            }
            return Ok(Stmt::finish_pending(s1.clone(), p2.clone()));
        }
        // the outer finish would have wrapped whatever the inner one threw
        let mut tried = vec![Stmt::finish(s1.clone())];
        tried.extend(p1.to_stmts());
        let mut out = vec![catch_all(self.names, Stmt::seq(tried), |x| {
            Stmt::Throw(Expr::WrapMultiple(Box::new(Expr::var(x))))
        })];
        out.extend(p2.to_stmts());
        Ok(Stmt::seq(out))
    }

    /// Finish-If Interchange, for `if (c) finish S1` and
    /// `if (c) finish S1 else finish S2`.
    pub fn finish_if(&mut self, site: &Stmt) -> Result<Stmt, Inapplicable> {
        let r = RuleId::FinishIfInterchange;
        let Stmt::If { cond, then, els } = site else {
            return Err(shape(r));
        };
        let Some((s1, p1)) = pending_of(then) else {
            return Err(shape(r));
        };
        if !self.exceptions() && !p1.is_empty() {
            return Err(no(r, "pending exceptions in plain mode"));
        }
        match &**els {
            Stmt::Skip => {
                // the pending temporaries must be defined on both paths
                let mut body = null_inits(p1.iter());
                body.push(Stmt::if_then(cond.clone(), s1.clone()));
                Ok(Stmt::finish_pending(Stmt::seq(body), p1.clone()))
            }
            other => {
                let Some((s2, p2)) = pending_of(other) else {
                    return Err(shape(r));
                };
                if !p1.is_empty() || !p2.is_empty() {
                    return Err(no(r, "both branches carry pending exceptions"));
                }
                Ok(Stmt::finish(Stmt::If {
                    cond: cond.clone(),
                    then: Box::new(s1.clone()),
                    els: Box::new(s2.clone()),
                }))
            }
        }
    }

    /// Finish Expansion Upper: `S1; finish S2` becomes `finish { S1; S2 }`.
    pub fn expand_upper(&mut self, site: &Stmt) -> Result<Stmt, Inapplicable> {
        let r = RuleId::FinishExpandUpper;
        let [s1, f] = site.as_slice() else {
            return Err(shape(r));
        };
        let Some((s2, p)) = pending_of(f) else {
            return Err(shape(r));
        };
        if s1.is_finish() {
            return Err(no(r, "preceding statement is a finish"));
        }
        let e1 = self.eas(s1);
        if e1.clocked {
            return Err(no(r, "S1 has e-asyncs registered on clocks"));
        }
        if !self.exceptions() || !self.throws(s1) {
            if !self.exceptions() && !p.is_empty() {
                return Err(no(r, "pending exceptions in plain mode"));
            }
            if self.exceptions() && e1.throws {
                return Err(no(r, "e-asyncs of S1 may throw"));
            }
            return Ok(Stmt::finish_pending(
                Stmt::seq(vec![s1.clone(), s2.clone()]),
                p.clone(),
            ));
        }
        if e1.throws {
            return Err(no(r, "e-asyncs of S1 may throw"));
        }
        let ev = self.names.fresh("e");
        let mut body = null_inits([&ev]);
        body.push(capture_into(self.names, s1.clone(), &ev));
        body.push(Stmt::if_then(is_null(&ev), s2.clone()));
        let mut pending = vec![ev];
        pending.extend(p.iter().cloned());
        Ok(Stmt::finish_pending(Stmt::seq(body), ExList(pending)))
    }

    /// Finish Expansion Lower: `finish S1; S2` becomes `finish { S1; S2 }`.
    pub fn expand_lower(&mut self, site: &Stmt) -> Result<Stmt, Inapplicable> {
        let r = RuleId::FinishExpandLower;
        let [f, s2] = site.as_slice() else {
            return Err(shape(r));
        };
        let Some((s1, p)) = pending_of(f) else {
            return Err(shape(r));
        };
        if s2.is_finish() {
            return Err(no(r, "following statement is a finish"));
        }
        let e1 = self.eas(s1);
        if self.facts.depends(s2, &e1) {
            return Err(no(r, "S2 depends on an e-async of S1"));
        }
        let f2 = self.facts.stmt(s2);
        if f2.may_advance {
            return Err(no(r, "S2 is a barrier"));
        }
        let e2 = self.eas(s2);
        if e2.clocked {
            return Err(no(r, "S2 has e-asyncs registered on clocks"));
        }
        if !self.exceptions() {
            if !p.is_empty() {
                return Err(no(r, "pending exceptions in plain mode"));
            }
            return Ok(Stmt::finish(Stmt::seq(vec![s1.clone(), s2.clone()])));
        }
        if e1.throws || e2.throws {
            return Err(no(r, "e-asyncs may throw"));
        }
        let s2_throws = f2.may_throw();
        if p.is_empty() && !s2_throws {
            return Ok(Stmt::finish(Stmt::seq(vec![s1.clone(), s2.clone()])));
        }
        let ev = self.names.fresh("e");
        let mut body = null_inits([&ev]);
        body.push(s1.clone());
        if !p.is_empty() {
            body.push(capture_into(self.names, Stmt::seq(p.to_stmts()), &ev));
        }
        let tail = if s2_throws {
            capture_into(self.names, s2.clone(), &ev)
        } else {
            s2.clone()
        };
        if p.is_empty() {
            body.push(tail);
        } else {
            body.push(Stmt::if_then(is_null(&ev), tail));
        }
        Ok(Stmt::finish_pending(Stmt::seq(body), ExList(vec![ev])))
    }

    /// Async-Finish Interchange: `async { finish S1 }`.
    pub fn async_finish(&mut self, site: &Stmt) -> Result<Stmt, Inapplicable> {
        let r = RuleId::AsyncFinishInterchange;
        let Stmt::Async { body, clocks } = site else {
            return Err(shape(r));
        };
        let Some((s1, p)) = pending_of(body) else {
            return Err(shape(r));
        };
        if !p.is_empty() {
            return Err(no(r, "inner finish has pending exceptions"));
        }
        if !clocks.is_empty() || self.eas(s1).clocked {
            return Err(no(r, "clocked tasks would block the parent"));
        }
        if self.exceptions() && (self.throws(s1) || self.eas(s1).throws) {
            return Err(no(r, "S1 may throw"));
        }
        Ok(Stmt::finish(Stmt::Async {
            body: Box::new(s1.clone()),
            clocks: clocks.clone(),
        }))
    }

    /// Try-Finish Exchange, exceptions mode, catch-all handlers only.
    pub fn try_finish(&mut self, site: &Stmt) -> Result<Stmt, Inapplicable> {
        let r = RuleId::TryFinishExchange;
        if !self.exceptions() {
            return Err(no(r, "only applies in exceptions mode"));
        }
        let Stmt::TryCatch {
            body,
            var,
            kind,
            handler,
        } = site
        else {
            return Err(shape(r));
        };
        let Some((s1, p)) = pending_of(body) else {
            return Err(shape(r));
        };
        if *kind != CatchKind::All {
            return Err(no(r, "handler does not catch every exception"));
        }
        if self.eas(s1).throws {
            return Err(no(r, "e-asyncs of S1 may throw"));
        }
        let ev = self.names.fresh("e");
        let wrapped = catch_all(self.names, s1.clone(), |x| {
            Stmt::Throw(Expr::WrapMultiple(Box::new(Expr::var(x))))
        });
        let mut tried = vec![wrapped];
        tried.extend(p.to_stmts());
        let mut fin = null_inits([&ev]);
        fin.push(capture_into(self.names, Stmt::seq(tried), &ev));
        Ok(Stmt::seq(vec![
            Stmt::finish(Stmt::seq(fin)),
            Stmt::if_then(
                Expr::bin(BinOp::Ne, Expr::var(&ev), Expr::Null),
                Stmt::seq(vec![Stmt::assign(var.clone(), Expr::var(&ev)), (**handler).clone()]),
            ),
        ]))
    }
}
