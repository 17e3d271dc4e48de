//! The Finch abstract syntax tree.
//!
//! A [`Program`] is a list of global declarations plus a list of methods,
//! one of which is the entry point. Statement trees are plain owned values;
//! every transformation in this crate consumes or clones a tree and returns
//! a fresh one.

mod alpha;
mod wf;

pub use alpha::{programs_structurally_equal, structurally_equal};
pub use wf::{well_formed, Diagnostic};

use std::fmt;

pub type Ident = String;

/// Prefix reserved for compiler-introduced names (temporaries, labels,
/// exception slots). Source programs may not rely on it.
pub const TEMP_PREFIX: &str = "__";

pub fn is_temp(name: &str) -> bool {
    name.starts_with(TEMP_PREFIX)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub globals: Vec<Global>,
    pub methods: Vec<Method>,
    pub entry: Ident,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Global {
    Scalar { name: Ident, init: i64 },
    Array { name: Ident, len: usize },
}

impl Global {
    pub fn name(&self) -> &str {
        match self {
            Global::Scalar { name, .. } | Global::Array { name, .. } => name,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Int,
    Bool,
    Exc,
    Clock,
}

impl Kind {
    pub fn keyword(self) -> &'static str {
        match self {
            Kind::Int => "int",
            Kind::Bool => "bool",
            Kind::Exc => "exc",
            Kind::Clock => "clock",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: Ident,
    pub kind: Kind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Method {
    pub name: Ident,
    pub params: Vec<Param>,
    pub body: Stmt,
    /// Task-local slot that carries the exception a pulled-out finish would
    /// have rethrown. Only set by the exception-aware finish-method pull.
    pub exception_slot: Option<Ident>,
}

/// Pending conditional rethrows attached to a finish: each entry `v`
/// stands for `if (v != null) throw v;`, evaluated in order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExList(pub Vec<Ident>);

impl ExList {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Ident> {
        self.0.iter()
    }

    /// The conditional throws this list stands for, in order.
    pub fn to_stmts(&self) -> Vec<Stmt> {
        self.0
            .iter()
            .map(|v| Stmt::If {
                cond: Expr::bin(BinOp::Ne, Expr::var(v), Expr::Null),
                then: Box::new(Stmt::Throw(Expr::var(v))),
                els: Box::new(Stmt::Skip),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LValue {
    Var(Ident),
    Index(Ident, Expr),
}

impl LValue {
    pub fn name(&self) -> &str {
        match self {
            LValue::Var(n) | LValue::Index(n, _) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CatchKind {
    /// `catch (e: Exception)`
    All,
    /// `catch (e: ME)`, the aggregate thrown by a finish
    Multiple,
    Tag(Ident),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Case {
    pub value: i64,
    pub body: Stmt,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stmt {
    Seq(Vec<Stmt>),
    Finish {
        body: Box<Stmt>,
        pending: ExList,
    },
    Async {
        body: Box<Stmt>,
        clocks: Vec<Ident>,
    },
    For {
        init: Box<Stmt>,
        cond: Expr,
        step: Box<Stmt>,
        body: Box<Stmt>,
    },
    While {
        label: Option<Ident>,
        cond: Expr,
        body: Box<Stmt>,
    },
    If {
        cond: Expr,
        then: Box<Stmt>,
        els: Box<Stmt>,
    },
    /// C-style switch: control enters at the matching case and falls through
    /// the following ones.
    Switch {
        scrutinee: Expr,
        cases: Vec<Case>,
    },
    TryCatch {
        body: Box<Stmt>,
        var: Ident,
        kind: CatchKind,
        handler: Box<Stmt>,
    },
    Throw(Expr),
    AdvanceAll,
    /// Creates a clock bound to a local and registers the current task on it.
    ClockMake(Ident),
    /// Deregisters the current task from a clock.
    ClockDrop(Ident),
    Call {
        target: Ident,
        args: Vec<Expr>,
    },
    Assign {
        lhs: LValue,
        rhs: Expr,
    },
    Break(Option<Ident>),
    Continue(Option<Ident>),
    Return,
    Skip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Shl,
    Shr,
    BitAnd,
    BitXor,
    BitOr,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::BitAnd => "&",
            BinOp::BitXor => "^",
            BinOp::BitOr => "|",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter. Mirrors C.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::BitOr => 3,
            BinOp::BitXor => 4,
            BinOp::BitAnd => 5,
            BinOp::Eq | BinOp::Ne => 6,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 7,
            BinOp::Shl | BinOp::Shr => 8,
            BinOp::Add | BinOp::Sub => 9,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    /// Racy snapshot of workers with no assigned task.
    IdleWorkers,
    /// Configured worker count.
    NThreads,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::IdleWorkers => "idleWorkers",
            Builtin::NThreads => "nthreads",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Null,
    Var(Ident),
    Index(Ident, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Builtin(Builtin),
    /// `new Tag`
    NewExc(Ident),
    /// `new ME(e)`: wraps one exception in an aggregate.
    WrapMultiple(Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<Ident>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn int(v: i64) -> Expr {
        Expr::Int(v)
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// Variables read by this expression, including array names.
    pub fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(v) => out.push(v),
            Expr::Index(a, i) => {
                out.push(a);
                i.collect_vars(out);
            }
            Expr::Unary(_, e) | Expr::WrapMultiple(e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Int(_) | Expr::Bool(_) | Expr::Null | Expr::Builtin(_) | Expr::NewExc(_) => {}
        }
    }

    pub fn uses_builtin(&self) -> bool {
        match self {
            Expr::Builtin(_) => true,
            Expr::Index(_, e) | Expr::Unary(_, e) | Expr::WrapMultiple(e) => e.uses_builtin(),
            Expr::Binary(_, a, b) => a.uses_builtin() || b.uses_builtin(),
            _ => false,
        }
    }
}

/// Child position of a statement inside its parent; see [`Stmt::children`].
pub type Path = Vec<usize>;

pub fn path_string(path: &[usize]) -> String {
    if path.is_empty() {
        return "root".to_string();
    }
    path.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(".")
}

impl Stmt {
    pub fn seq(items: Vec<Stmt>) -> Stmt {
        Stmt::Seq(items).normalized()
    }

    pub fn finish(body: Stmt) -> Stmt {
        Stmt::Finish {
            body: Box::new(body),
            pending: ExList::default(),
        }
    }

    pub fn finish_pending(body: Stmt, pending: ExList) -> Stmt {
        Stmt::Finish {
            body: Box::new(body),
            pending,
        }
    }

    pub fn assign(name: impl Into<Ident>, rhs: Expr) -> Stmt {
        Stmt::Assign {
            lhs: LValue::Var(name.into()),
            rhs,
        }
    }

    pub fn if_then(cond: Expr, then: Stmt) -> Stmt {
        Stmt::If {
            cond,
            then: Box::new(then),
            els: Box::new(Stmt::Skip),
        }
    }

    pub fn is_finish(&self) -> bool {
        matches!(self, Stmt::Finish { .. })
    }

    /// Direct sub-statements in a fixed order. Positions:
    /// Seq items by index; Finish/Async/While body 0; For init 0, step 1,
    /// body 2; If then 0, else 1; Switch case i; TryCatch body 0, handler 1.
    pub fn children(&self) -> Vec<&Stmt> {
        match self {
            Stmt::Seq(items) => items.iter().collect(),
            Stmt::Finish { body, .. } | Stmt::Async { body, .. } | Stmt::While { body, .. } => {
                vec![body]
            }
            Stmt::For {
                init, step, body, ..
            } => vec![init, step, body],
            Stmt::If { then, els, .. } => vec![then, els],
            Stmt::Switch { cases, .. } => cases.iter().map(|c| &c.body).collect(),
            Stmt::TryCatch { body, handler, .. } => vec![body, handler],
            _ => Vec::new(),
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Stmt> {
        match self {
            Stmt::Seq(items) => items.iter_mut().collect(),
            Stmt::Finish { body, .. } | Stmt::Async { body, .. } | Stmt::While { body, .. } => {
                vec![body]
            }
            Stmt::For {
                init, step, body, ..
            } => vec![init, step, body],
            Stmt::If { then, els, .. } => vec![then, els],
            Stmt::Switch { cases, .. } => cases.iter_mut().map(|c| &mut c.body).collect(),
            Stmt::TryCatch { body, handler, .. } => vec![body, handler],
            _ => Vec::new(),
        }
    }

    pub fn at_path(&self, path: &[usize]) -> Option<&Stmt> {
        let mut cur = self;
        for &i in path {
            cur = cur.children().into_iter().nth(i)?;
        }
        Some(cur)
    }

    pub fn at_path_mut(&mut self, path: &[usize]) -> Option<&mut Stmt> {
        let mut cur = self;
        for &i in path {
            cur = cur.children_mut().into_iter().nth(i)?;
        }
        Some(cur)
    }

    /// Pre-order walk with paths.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt, &[usize])) {
        fn go<'a>(s: &'a Stmt, path: &mut Vec<usize>, f: &mut dyn FnMut(&'a Stmt, &[usize])) {
            f(s, path);
            for (i, c) in s.children().into_iter().enumerate() {
                path.push(i);
                go(c, path, f);
                path.pop();
            }
        }
        go(self, &mut Vec::new(), f)
    }

    /// Expressions held directly by this node (not by its children).
    pub fn own_exprs(&self) -> Vec<&Expr> {
        match self {
            Stmt::For { cond, .. } | Stmt::While { cond, .. } | Stmt::If { cond, .. } => {
                vec![cond]
            }
            Stmt::Switch { scrutinee, .. } => vec![scrutinee],
            Stmt::Throw(e) => vec![e],
            Stmt::Call { args, .. } => args.iter().collect(),
            Stmt::Assign { lhs, rhs } => match lhs {
                LValue::Var(_) => vec![rhs],
                LValue::Index(_, i) => vec![i, rhs],
            },
            _ => Vec::new(),
        }
    }

    pub fn contains(&self, pred: &dyn Fn(&Stmt) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        self.children().into_iter().any(|c| c.contains(pred))
    }

    /// Canonical form: nested sequences flattened, `skip` dropped from
    /// sequences, singleton sequences unwrapped, the empty sequence is `skip`.
    pub fn normalized(self) -> Stmt {
        match self {
            Stmt::Seq(items) => {
                let mut flat = Vec::new();
                for item in items {
                    match item.normalized() {
                        Stmt::Seq(inner) => flat.extend(inner),
                        Stmt::Skip => {}
                        other => flat.push(other),
                    }
                }
                match flat.len() {
                    0 => Stmt::Skip,
                    1 => flat.pop().unwrap(),
                    _ => Stmt::Seq(flat),
                }
            }
            mut other => {
                for c in other.children_mut() {
                    let taken = std::mem::replace(c, Stmt::Skip);
                    *c = taken.normalized();
                }
                other
            }
        }
    }

    /// The statement viewed as a list (a non-sequence is a one-element list).
    pub fn as_slice(&self) -> &[Stmt] {
        match self {
            Stmt::Seq(items) => items,
            Stmt::Skip => &[],
            other => std::slice::from_ref(other),
        }
    }

    pub fn into_vec(self) -> Vec<Stmt> {
        match self {
            Stmt::Seq(items) => items,
            Stmt::Skip => Vec::new(),
            other => vec![other],
        }
    }
}

impl Program {
    pub fn method(&self, name: &str) -> Option<&Method> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn method_mut(&mut self, name: &str) -> Option<&mut Method> {
        self.methods.iter_mut().find(|m| m.name == name)
    }

    pub fn global(&self, name: &str) -> Option<&Global> {
        self.globals.iter().find(|g| g.name() == name)
    }

    pub fn is_global(&self, name: &str) -> bool {
        self.global(name).is_some()
    }

    pub fn is_array(&self, name: &str) -> bool {
        matches!(self.global(name), Some(Global::Array { .. }))
    }
}

/// Hands out compiler temporaries that do not clash with any name already
/// present in a program.
#[derive(Debug, Clone, Default)]
pub struct NameGen {
    next: usize,
}

impl NameGen {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts numbering past every `__<base><n>` already used in `program`.
    pub fn for_program(program: &Program) -> Self {
        let mut max = 0usize;
        let mut see = |name: &str| {
            if let Some(rest) = name.strip_prefix(TEMP_PREFIX) {
                let digits: String = rest
                    .chars()
                    .rev()
                    .take_while(|c| c.is_ascii_digit())
                    .collect::<Vec<_>>()
                    .into_iter()
                    .rev()
                    .collect();
                if let Ok(n) = digits.parse::<usize>() {
                    max = max.max(n + 1);
                }
            }
        };
        for m in &program.methods {
            m.body.walk(&mut |s, _| {
                match s {
                    Stmt::Assign { lhs, .. } => see(lhs.name()),
                    Stmt::While { label: Some(l), .. } => see(l),
                    Stmt::TryCatch { var, .. } => see(var),
                    _ => {}
                }
                for e in s.own_exprs() {
                    let mut vs = Vec::new();
                    e.collect_vars(&mut vs);
                    vs.into_iter().for_each(&mut see);
                }
            });
        }
        NameGen { next: max }
    }

    pub fn fresh(&mut self, base: &str) -> Ident {
        let n = self.next;
        self.next += 1;
        format!("{TEMP_PREFIX}{base}{n}")
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::frontend::pretty(self))
    }
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::frontend::pretty_stmt(self))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::frontend::pretty_expr(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_flattens_and_drops_skip() {
        let s = Stmt::Seq(vec![
            Stmt::Skip,
            Stmt::Seq(vec![Stmt::Return, Stmt::Seq(vec![])]),
        ]);
        assert_eq!(s.normalized(), Stmt::Return);
        assert_eq!(Stmt::Seq(vec![]).normalized(), Stmt::Skip);
    }

    #[test]
    fn paths_address_children() {
        let s = Stmt::seq(vec![
            Stmt::assign("x", Expr::int(1)),
            Stmt::finish(Stmt::Async {
                body: Box::new(Stmt::Return),
                clocks: vec![],
            }),
        ]);
        assert_eq!(s.at_path(&[1, 0, 0]), Some(&Stmt::Return));
        assert!(s.at_path(&[3]).is_none());
    }

    #[test]
    fn namegen_skips_existing_temps() {
        let p = Program {
            globals: vec![],
            methods: vec![Method {
                name: "main".into(),
                params: vec![],
                body: Stmt::assign("__t4", Expr::int(0)),
                exception_slot: None,
            }],
            entry: "main".into(),
        };
        let mut g = NameGen::for_program(&p);
        assert_eq!(g.fresh("e"), "__e5");
    }
}
