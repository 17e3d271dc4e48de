use std::fmt::Write;

use crate::ir::{CatchKind, Expr, Global, LValue, Method, Program, Stmt, UnOp};

const INDENT: &str = "  ";

pub fn pretty(program: &Program) -> String {
    let mut out = String::new();
    if program.entry != "main" {
        writeln!(out, "entry {};", program.entry).unwrap();
    }
    for g in &program.globals {
        match g {
            Global::Scalar { name, init } => writeln!(out, "var {name} = {init};").unwrap(),
            Global::Array { name, len } => writeln!(out, "array {name}[{len}];").unwrap(),
        }
    }
    for m in &program.methods {
        if !out.is_empty() {
            out.push('\n');
        }
        method(&mut out, m);
    }
    out
}

fn method(out: &mut String, m: &Method) {
    let params: Vec<String> = m
        .params
        .iter()
        .map(|p| format!("{}: {}", p.name, p.kind.keyword()))
        .collect();
    write!(out, "def {}({})", m.name, params.join(", ")).unwrap();
    if let Some(slot) = &m.exception_slot {
        write!(out, " slot({slot})").unwrap();
    }
    out.push(' ');
    block(out, &m.body, 0);
    out.push('\n');
}

/// Renders a single statement (a sequence renders one statement per line).
pub fn pretty_stmt(s: &Stmt) -> String {
    let mut out = String::new();
    if s.as_slice().is_empty() {
        out.push_str("skip;\n");
        return out;
    }
    for item in s.as_slice() {
        stmt(&mut out, item, 0);
    }
    out
}

fn pad(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn block(out: &mut String, body: &Stmt, depth: usize) {
    let items = body.as_slice();
    if items.is_empty() {
        out.push_str("{ }");
        return;
    }
    out.push_str("{\n");
    for s in items {
        stmt(out, s, depth + 1);
    }
    pad(out, depth);
    out.push('}');
}

fn simple(s: &Stmt) -> String {
    match s {
        Stmt::Skip => String::new(),
        Stmt::Assign { lhs, rhs } => format!("{} = {}", lvalue(lhs), pretty_expr(rhs)),
        // not expressible in a for header; kept readable for diagnostics
        other => format!("/* {} */", pretty_stmt(other).trim()),
    }
}

fn lvalue(l: &LValue) -> String {
    match l {
        LValue::Var(v) => v.clone(),
        LValue::Index(a, i) => format!("{a}[{}]", pretty_expr(i)),
    }
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    match s {
        Stmt::Seq(items) => {
            for item in items {
                stmt(out, item, depth);
            }
            return;
        }
        _ => pad(out, depth),
    }
    match s {
        Stmt::Seq(_) => unreachable!(),
        Stmt::Finish { body, pending } => {
            out.push_str("finish ");
            block(out, body, depth);
            if !pending.is_empty() {
                let names: Vec<&str> = pending.iter().map(String::as_str).collect();
                write!(out, " pending({})", names.join(", ")).unwrap();
            }
        }
        Stmt::Async { body, clocks } => {
            out.push_str("async ");
            if !clocks.is_empty() {
                write!(out, "clocked({}) ", clocks.join(", ")).unwrap();
            }
            block(out, body, depth);
        }
        Stmt::For {
            init,
            cond,
            step,
            body,
        } => {
            write!(
                out,
                "for ({}; {}; {}) ",
                simple(init),
                pretty_expr(cond),
                simple(step)
            )
            .unwrap();
            block(out, body, depth);
        }
        Stmt::While { label, cond, body } => {
            if let Some(l) = label {
                write!(out, "{l}: ").unwrap();
            }
            write!(out, "while ({}) ", pretty_expr(cond)).unwrap();
            block(out, body, depth);
        }
        Stmt::If { cond, then, els } => {
            write!(out, "if ({}) ", pretty_expr(cond)).unwrap();
            block(out, then, depth);
            if !matches!(**els, Stmt::Skip) {
                out.push_str(" else ");
                block(out, els, depth);
            }
        }
        Stmt::Switch { scrutinee, cases } => {
            writeln!(out, "switch ({}) {{", pretty_expr(scrutinee)).unwrap();
            for c in cases {
                pad(out, depth + 1);
                writeln!(out, "case {}:", c.value).unwrap();
                for item in c.body.as_slice() {
                    stmt(out, item, depth + 2);
                }
            }
            pad(out, depth);
            out.push('}');
        }
        Stmt::TryCatch {
            body,
            var,
            kind,
            handler,
        } => {
            out.push_str("try ");
            block(out, body, depth);
            let k = match kind {
                CatchKind::All => "Exception",
                CatchKind::Multiple => "ME",
                CatchKind::Tag(t) => t,
            };
            write!(out, " catch ({var}: {k}) ").unwrap();
            block(out, handler, depth);
        }
        Stmt::Throw(e) => write!(out, "throw {};", pretty_expr(e)).unwrap(),
        Stmt::AdvanceAll => out.push_str("advanceAll;"),
        Stmt::ClockMake(c) => write!(out, "clock {c};").unwrap(),
        Stmt::ClockDrop(c) => write!(out, "drop {c};").unwrap(),
        Stmt::Call { target, args } => {
            let a: Vec<String> = args.iter().map(pretty_expr).collect();
            write!(out, "{target}({});", a.join(", ")).unwrap();
        }
        Stmt::Assign { .. } => write!(out, "{};", simple(s)).unwrap(),
        Stmt::Break(l) => match l {
            Some(l) => write!(out, "break {l};").unwrap(),
            None => out.push_str("break;"),
        },
        Stmt::Continue(l) => match l {
            Some(l) => write!(out, "continue {l};").unwrap(),
            None => out.push_str("continue;"),
        },
        Stmt::Return => out.push_str("return;"),
        Stmt::Skip => out.push_str("skip;"),
    }
    out.push('\n');
}

pub fn pretty_expr(e: &Expr) -> String {
    let mut out = String::new();
    expr(&mut out, e);
    out
}

fn expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Int(v) => write!(out, "{v}").unwrap(),
        Expr::Bool(b) => write!(out, "{b}").unwrap(),
        Expr::Null => out.push_str("null"),
        Expr::Var(v) => out.push_str(v),
        Expr::Index(a, i) => {
            write!(out, "{a}[").unwrap();
            expr(out, i);
            out.push(']');
        }
        Expr::Unary(op, x) => {
            out.push(match op {
                UnOp::Neg => '-',
                UnOp::Not => '!',
            });
            let wrap = matches!(**x, Expr::Binary(..) | Expr::Int(_) | Expr::Unary(..));
            if wrap {
                out.push('(');
            }
            expr(out, x);
            if wrap {
                out.push(')');
            }
        }
        Expr::Binary(op, a, b) => {
            let p = op.precedence();
            let wrap_l = matches!(**a, Expr::Binary(q, ..) if q.precedence() < p);
            let wrap_r = matches!(**b, Expr::Binary(q, ..) if q.precedence() <= p);
            if wrap_l {
                out.push('(');
            }
            expr(out, a);
            if wrap_l {
                out.push(')');
            }
            write!(out, " {} ", op.symbol()).unwrap();
            if wrap_r {
                out.push('(');
            }
            expr(out, b);
            if wrap_r {
                out.push(')');
            }
        }
        Expr::Builtin(b) => write!(out, "{}()", b.name()).unwrap(),
        Expr::NewExc(t) => write!(out, "new {t}").unwrap(),
        Expr::WrapMultiple(x) => {
            out.push_str("new ME(");
            expr(out, x);
            out.push(')');
        }
    }
}
