use std::collections::HashMap;

use super::{is_temp, Case, Expr, Global, LValue, Method, Program, Stmt};

/// Tracks a bijection between compiler temporaries of two trees.
#[derive(Default)]
struct Renaming {
    fwd: HashMap<String, String>,
    bwd: HashMap<String, String>,
}

impl Renaming {
    fn name(&mut self, a: &str, b: &str) -> bool {
        match (is_temp(a), is_temp(b)) {
            (true, true) => match (self.fwd.get(a), self.bwd.get(b)) {
                (None, None) => {
                    self.fwd.insert(a.to_string(), b.to_string());
                    self.bwd.insert(b.to_string(), a.to_string());
                    true
                }
                (Some(x), Some(y)) => x == b && y == a,
                _ => false,
            },
            (false, false) => a == b,
            _ => false,
        }
    }

    fn opt(&mut self, a: &Option<String>, b: &Option<String>) -> bool {
        match (a, b) {
            (None, None) => true,
            (Some(a), Some(b)) => self.name(a, b),
            _ => false,
        }
    }

    fn names(&mut self, a: &[String], b: &[String]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| self.name(x, y))
    }

    fn expr(&mut self, a: &Expr, b: &Expr) -> bool {
        match (a, b) {
            (Expr::Int(x), Expr::Int(y)) => x == y,
            (Expr::Bool(x), Expr::Bool(y)) => x == y,
            (Expr::Null, Expr::Null) => true,
            (Expr::Var(x), Expr::Var(y)) => self.name(x, y),
            (Expr::Index(x, i), Expr::Index(y, j)) => self.name(x, y) && self.expr(i, j),
            (Expr::Unary(o, x), Expr::Unary(p, y)) => o == p && self.expr(x, y),
            (Expr::Binary(o, x1, x2), Expr::Binary(p, y1, y2)) => {
                o == p && self.expr(x1, y1) && self.expr(x2, y2)
            }
            (Expr::Builtin(x), Expr::Builtin(y)) => x == y,
            (Expr::NewExc(x), Expr::NewExc(y)) => x == y,
            (Expr::WrapMultiple(x), Expr::WrapMultiple(y)) => self.expr(x, y),
            _ => false,
        }
    }

    fn lvalue(&mut self, a: &LValue, b: &LValue) -> bool {
        match (a, b) {
            (LValue::Var(x), LValue::Var(y)) => self.name(x, y),
            (LValue::Index(x, i), LValue::Index(y, j)) => self.name(x, y) && self.expr(i, j),
            _ => false,
        }
    }

    fn stmt(&mut self, a: &Stmt, b: &Stmt) -> bool {
        use Stmt::*;
        match (a, b) {
            (Seq(x), Seq(y)) => x.len() == y.len() && x.iter().zip(y).all(|(s, t)| self.stmt(s, t)),
            (
                Finish {
                    body: b1,
                    pending: p1,
                },
                Finish {
                    body: b2,
                    pending: p2,
                },
            ) => self.stmt(b1, b2) && self.names(&p1.0, &p2.0),
            (
                Async {
                    body: b1,
                    clocks: c1,
                },
                Async {
                    body: b2,
                    clocks: c2,
                },
            ) => self.names(c1, c2) && self.stmt(b1, b2),
            (
                For {
                    init: i1,
                    cond: c1,
                    step: s1,
                    body: b1,
                },
                For {
                    init: i2,
                    cond: c2,
                    step: s2,
                    body: b2,
                },
            ) => self.stmt(i1, i2) && self.expr(c1, c2) && self.stmt(s1, s2) && self.stmt(b1, b2),
            (
                While {
                    label: l1,
                    cond: c1,
                    body: b1,
                },
                While {
                    label: l2,
                    cond: c2,
                    body: b2,
                },
            ) => self.opt(l1, l2) && self.expr(c1, c2) && self.stmt(b1, b2),
            (
                If {
                    cond: c1,
                    then: t1,
                    els: e1,
                },
                If {
                    cond: c2,
                    then: t2,
                    els: e2,
                },
            ) => self.expr(c1, c2) && self.stmt(t1, t2) && self.stmt(e1, e2),
            (
                Switch {
                    scrutinee: s1,
                    cases: k1,
                },
                Switch {
                    scrutinee: s2,
                    cases: k2,
                },
            ) => {
                self.expr(s1, s2)
                    && k1.len() == k2.len()
                    && k1.iter().zip(k2).all(
                        |(Case { value: v1, body: x }, Case { value: v2, body: y })| {
                            v1 == v2 && self.stmt(x, y)
                        },
                    )
            }
            (
                TryCatch {
                    body: b1,
                    var: v1,
                    kind: k1,
                    handler: h1,
                },
                TryCatch {
                    body: b2,
                    var: v2,
                    kind: k2,
                    handler: h2,
                },
            ) => k1 == k2 && self.stmt(b1, b2) && self.name(v1, v2) && self.stmt(h1, h2),
            (Throw(x), Throw(y)) => self.expr(x, y),
            (AdvanceAll, AdvanceAll) | (Return, Return) | (Skip, Skip) => true,
            (ClockMake(x), ClockMake(y)) | (ClockDrop(x), ClockDrop(y)) => self.name(x, y),
            (
                Call {
                    target: t1,
                    args: a1,
                },
                Call {
                    target: t2,
                    args: a2,
                },
            ) => {
                t1 == t2 && a1.len() == a2.len() && a1.iter().zip(a2).all(|(x, y)| self.expr(x, y))
            }
            (Assign { lhs: l1, rhs: r1 }, Assign { lhs: l2, rhs: r2 }) => {
                self.lvalue(l1, l2) && self.expr(r1, r2)
            }
            (Break(x), Break(y)) | (Continue(x), Continue(y)) => self.opt(x, y),
            _ => false,
        }
    }

    fn method(&mut self, a: &Method, b: &Method) -> bool {
        a.name == b.name
            && a.params.len() == b.params.len()
            && a.params
                .iter()
                .zip(&b.params)
                .all(|(x, y)| x.kind == y.kind && self.name(&x.name, &y.name))
            && self.opt(&a.exception_slot, &b.exception_slot)
            && self.stmt(&a.body, &b.body)
    }
}

/// Tree equality up to a consistent renaming of compiler temporaries
/// (names with the reserved prefix). Every other name must match exactly.
pub fn structurally_equal(a: &Stmt, b: &Stmt) -> bool {
    Renaming::default().stmt(a, b)
}

/// Program-level [`structurally_equal`]. Exception slots are shared across
/// methods, so one renaming spans the whole program.
pub fn programs_structurally_equal(a: &Program, b: &Program) -> bool {
    let mut r = Renaming::default();
    a.entry == b.entry
        && a.globals.len() == b.globals.len()
        && a.globals.iter().zip(&b.globals).all(|(x, y)| match (x, y) {
            (Global::Scalar { name: n1, init: i1 }, Global::Scalar { name: n2, init: i2 }) => {
                i1 == i2 && r.name(n1, n2)
            }
            (Global::Array { name: n1, len: l1 }, Global::Array { name: n2, len: l2 }) => {
                l1 == l2 && r.name(n1, n2)
            }
            _ => false,
        })
        && a.methods.len() == b.methods.len()
        && a.methods.iter().zip(&b.methods).all(|(x, y)| {
            // method bodies have independent temporaries except for slots
            let mut local = Renaming {
                fwd: r.fwd.clone(),
                bwd: r.bwd.clone(),
            };
            let ok = local.method(x, y);
            if let (Some(s1), Some(s2)) = (&x.exception_slot, &y.exception_slot) {
                r.name(s1, s2);
            }
            ok
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Expr, Stmt};

    #[test]
    fn reflexive() {
        let s = Stmt::finish(Stmt::assign("x", Expr::int(1)));
        assert!(structurally_equal(&s, &s));
    }

    #[test]
    fn temporaries_rename_consistently() {
        let a = Stmt::seq(vec![
            Stmt::assign("__v1", Expr::var("c")),
            Stmt::assign("y", Expr::var("__v1")),
        ]);
        let b = Stmt::seq(vec![
            Stmt::assign("__v7", Expr::var("c")),
            Stmt::assign("y", Expr::var("__v7")),
        ]);
        assert!(structurally_equal(&a, &b));
        let c = Stmt::seq(vec![
            Stmt::assign("__v7", Expr::var("c")),
            Stmt::assign("y", Expr::var("__v8")),
        ]);
        assert!(!structurally_equal(&a, &c));
    }

    #[test]
    fn user_names_are_not_renamed() {
        let a = Stmt::assign("x", Expr::int(1));
        let b = Stmt::assign("y", Expr::int(1));
        assert!(!structurally_equal(&a, &b));
        let t = Stmt::assign("__x", Expr::int(1));
        assert!(!structurally_equal(&a, &t));
    }
}
