use std::collections::HashSet;
use std::fmt;

use super::{path_string, Expr, Kind, LValue, Method, Program, Stmt};

/// A well-formedness violation, located by method and statement path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub method: Option<String>,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.method {
            Some(m) => write!(f, "{m} @ {}: {}", self.path, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// Checks the structural invariants of a program. An empty result means the
/// program is well formed.
pub fn well_formed(program: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let top = |message: String| Diagnostic {
        method: None,
        path: String::new(),
        message,
    };

    let mut seen = HashSet::new();
    for g in &program.globals {
        if !seen.insert(g.name()) {
            diags.push(top(format!("duplicate global `{}`", g.name())));
        }
    }
    let mut names = HashSet::new();
    for m in &program.methods {
        if !names.insert(m.name.as_str()) {
            diags.push(top(format!("duplicate method `{}`", m.name)));
        }
    }
    match program
        .methods
        .iter()
        .filter(|m| m.name == program.entry)
        .count()
    {
        1 => {}
        0 => diags.push(top(format!(
            "entry method `{}` is not defined",
            program.entry
        ))),
        _ => {}
    }

    for m in &program.methods {
        let mut cx = Checker {
            program,
            method: m,
            diags: &mut diags,
            has_clock: m.params.iter().any(|p| p.kind == Kind::Clock)
                || m.body.contains(&|s| matches!(s, Stmt::ClockMake(_))),
        };
        cx.stmt(&m.body, &mut Vec::new(), &Ctx::default());
    }
    diags
}

#[derive(Clone, Default)]
struct Ctx {
    /// Clocks of the nearest enclosing async, if there is one.
    in_async: Option<bool>,
    loops: usize,
    labels: Vec<String>,
}

struct Checker<'a> {
    program: &'a Program,
    method: &'a Method,
    diags: &'a mut Vec<Diagnostic>,
    has_clock: bool,
}

impl Checker<'_> {
    fn report(&mut self, path: &[usize], message: String) {
        self.diags.push(Diagnostic {
            method: Some(self.method.name.clone()),
            path: path_string(path),
            message,
        });
    }

    fn expr(&mut self, e: &Expr, path: &[usize]) {
        match e {
            Expr::Var(v) if self.program.is_array(v) => {
                self.report(path, format!("array `{v}` used as a scalar"))
            }
            Expr::Index(a, i) => {
                if !self.program.is_array(a) {
                    self.report(path, format!("`{a}` is not a declared array"));
                }
                self.expr(i, path);
            }
            Expr::Unary(_, x) | Expr::WrapMultiple(x) => self.expr(x, path),
            Expr::Binary(_, a, b) => {
                self.expr(a, path);
                self.expr(b, path);
            }
            _ => {}
        }
    }

    fn stmt(&mut self, s: &Stmt, path: &mut Vec<usize>, cx: &Ctx) {
        for e in s.own_exprs() {
            self.expr(e, path);
        }
        match s {
            Stmt::AdvanceAll => {
                let ok = match cx.in_async {
                    Some(clocked) => clocked,
                    None => self.has_clock,
                };
                if !ok {
                    self.report(path, "advanceAll outside any clocked context".into());
                }
            }
            Stmt::Call { target, args } => match self.program.method(target) {
                None => self.report(path, format!("call to undefined method `{target}`")),
                Some(callee) if callee.params.len() != args.len() => self.report(
                    path,
                    format!(
                        "`{target}` expects {} arguments, got {}",
                        callee.params.len(),
                        args.len()
                    ),
                ),
                Some(_) => {}
            },
            Stmt::Assign { lhs, .. } => match lhs {
                LValue::Var(v) if self.program.is_array(v) => {
                    self.report(path, format!("cannot assign to array `{v}`"))
                }
                LValue::Index(a, _) if !self.program.is_array(a) => {
                    self.report(path, format!("`{a}` is not a declared array"))
                }
                _ => {}
            },
            Stmt::Break(label) | Stmt::Continue(label) => {
                if cx.loops == 0 {
                    self.report(path, "break/continue outside a loop".into());
                } else if let Some(l) = label {
                    if !cx.labels.contains(l) {
                        self.report(path, format!("unknown loop label `{l}`"));
                    }
                }
            }
            _ => {}
        }

        let child_cx = match s {
            Stmt::Async { clocks, .. } => Ctx {
                in_async: Some(!clocks.is_empty()),
                loops: 0,
                labels: Vec::new(),
            },
            Stmt::While { label, .. } => {
                let mut c = cx.clone();
                c.loops += 1;
                if let Some(l) = label {
                    c.labels.push(l.clone());
                }
                c
            }
            _ => cx.clone(),
        };
        for (i, c) in s.children().into_iter().enumerate() {
            path.push(i);
            // only the body of a for loop is inside the loop
            if let (Stmt::For { .. }, 2) = (s, i) {
                let mut lc = child_cx.clone();
                lc.loops += 1;
                self.stmt(c, path, &lc);
            } else {
                self.stmt(c, path, &child_cx);
            }
            path.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_str;

    fn diags(src: &str) -> Vec<Diagnostic> {
        let p = crate::frontend::parse_unchecked(src).expect("syntax");
        well_formed(&p)
    }

    #[test]
    fn advance_outside_clocked_context() {
        let d = diags("def main() { advanceAll; }");
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("advanceAll"));
    }

    #[test]
    fn advance_inside_unclocked_async_is_rejected() {
        let d = diags("def main() { clock c; finish async { advanceAll; } drop c; }");
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn advance_inside_clocked_async_is_fine() {
        assert!(
            diags("def main() { clock c; finish async clocked(c) { advanceAll; } }").is_empty()
        );
    }

    #[test]
    fn dangling_call() {
        let d = diags("def main() { nowhere(1); }");
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("nowhere"));
    }

    #[test]
    fn missing_entry() {
        let d = diags("def f() { skip; }");
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn break_may_not_cross_async() {
        let d = diags("def main() { while (true) { async { break; } } }");
        assert_eq!(d.len(), 1);
        assert!(parse_str("def main() { while (true) { break; } }").is_ok());
    }

    #[test]
    fn array_misuse() {
        let d = diags("array a[4]; def main() { a = 1; x = a; b[0] = 2; }");
        assert_eq!(d.len(), 3);
    }
}
