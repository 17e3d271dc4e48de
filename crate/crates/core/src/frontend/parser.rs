use super::lexer::{tokenize, Tok, Token};
use super::FrontendError;
use crate::ir::{
    BinOp, Builtin, Case, CatchKind, ExList, Expr, Global, Kind, LValue, Method, Param, Program,
    Stmt, UnOp,
};

const KEYWORDS: &[&str] = &[
    "def",
    "var",
    "array",
    "entry",
    "skip",
    "finish",
    "pending",
    "async",
    "clocked",
    "for",
    "while",
    "if",
    "else",
    "switch",
    "case",
    "try",
    "catch",
    "throw",
    "advanceAll",
    "clock",
    "drop",
    "break",
    "continue",
    "return",
    "true",
    "false",
    "null",
    "new",
    "idleWorkers",
    "nthreads",
    "slot",
];

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, FrontendError>;

impl Parser {
    pub fn new(src: &str) -> PResult<Self> {
        Ok(Parser {
            toks: tokenize(src)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(FrontendError::syntax(t.line, t.col, msg))
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(v) => format!("`{v}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(format!("expected `{p}`, found {}", self.describe()))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.error(format!("expected `{kw}`, found {}", self.describe()))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            _ => self.error(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        let neg = self.eat_punct("-");
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            _ => self.error(format!("expected integer, found {}", self.describe())),
        }
    }

    pub fn program(&mut self) -> PResult<Program> {
        let mut globals = Vec::new();
        let mut methods = Vec::new();
        let mut entry = None;
        loop {
            if matches!(self.peek(), Tok::Eof) {
                break;
            }
            if self.eat_kw("var") {
                let name = self.ident()?;
                self.expect_punct("=")?;
                let init = if self.eat_kw("true") {
                    1
                } else if self.eat_kw("false") {
                    0
                } else {
                    self.int()?
                };
                self.expect_punct(";")?;
                globals.push(Global::Scalar { name, init });
            } else if self.eat_kw("array") {
                let name = self.ident()?;
                self.expect_punct("[")?;
                let len = self.int()?;
                if len < 0 {
                    return self.error("array length must be non-negative");
                }
                self.expect_punct("]")?;
                self.expect_punct(";")?;
                globals.push(Global::Array {
                    name,
                    len: len as usize,
                });
            } else if self.eat_kw("entry") {
                entry = Some(self.ident()?);
                self.expect_punct(";")?;
            } else if self.is_kw("def") {
                methods.push(self.method()?);
            } else {
                return self.error(format!(
                    "expected `def`, `var`, `array` or `entry`, found {}",
                    self.describe()
                ));
            }
        }
        Ok(Program {
            globals,
            methods,
            entry: entry.unwrap_or_else(|| "main".to_string()),
        })
    }

    fn method(&mut self) -> PResult<Method> {
        self.expect_kw("def")?;
        let name = self.ident()?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                let pname = self.ident()?;
                let kind = if self.eat_punct(":") {
                    match self.bump() {
                        Tok::Ident(k) if k == "int" => Kind::Int,
                        Tok::Ident(k) if k == "bool" => Kind::Bool,
                        Tok::Ident(k) if k == "exc" => Kind::Exc,
                        Tok::Ident(k) if k == "clock" => Kind::Clock,
                        _ => {
                            self.pos -= 1;
                            return self.error("expected one of `int`, `bool`, `exc`, `clock`");
                        }
                    }
                } else {
                    Kind::Int
                };
                params.push(Param { name: pname, kind });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        let exception_slot = if self.eat_kw("slot") {
            self.expect_punct("(")?;
            let s = self.ident()?;
            self.expect_punct(")")?;
            Some(s)
        } else {
            None
        };
        if !self.is_punct("{") {
            return self.error(format!("expected method body, found {}", self.describe()));
        }
        let body = self.stmt()?;
        Ok(Method {
            name,
            params,
            body,
            exception_slot,
        })
    }

    fn block_items(&mut self, stop: &dyn Fn(&Parser) -> bool) -> PResult<Vec<Stmt>> {
        let mut items = Vec::new();
        while !stop(self) {
            if matches!(self.peek(), Tok::Eof) {
                return self.error("unexpected end of input inside a block");
            }
            items.push(self.stmt()?);
        }
        Ok(items)
    }

    pub fn stmt(&mut self) -> PResult<Stmt> {
        if self.eat_punct("{") {
            let items = self.block_items(&|p| p.is_punct("}"))?;
            self.expect_punct("}")?;
            return Ok(Stmt::Seq(items).normalized());
        }
        let Tok::Ident(word) = self.peek().clone() else {
            return self.error(format!("expected statement, found {}", self.describe()));
        };
        match word.as_str() {
            "skip" => {
                self.bump();
                self.expect_punct(";")?;
                Ok(Stmt::Skip)
            }
            "finish" => {
                self.bump();
                let body = self.stmt()?;
                let mut pending = ExList::default();
                if self.eat_kw("pending") {
                    self.expect_punct("(")?;
                    if !self.is_punct(")") {
                        loop {
                            pending.0.push(self.ident()?);
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                    }
                    self.expect_punct(")")?;
                }
                Ok(Stmt::Finish {
                    body: Box::new(body),
                    pending,
                })
            }
            "async" => {
                self.bump();
                let mut clocks = Vec::new();
                if self.eat_kw("clocked") {
                    self.expect_punct("(")?;
                    loop {
                        clocks.push(self.ident()?);
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                    self.expect_punct(")")?;
                }
                let body = self.stmt()?;
                Ok(Stmt::Async {
                    body: Box::new(body),
                    clocks,
                })
            }
            "for" => {
                self.bump();
                self.expect_punct("(")?;
                let init = if self.is_punct(";") {
                    Stmt::Skip
                } else {
                    self.simple()?
                };
                self.expect_punct(";")?;
                let cond = if self.is_punct(";") {
                    Expr::Bool(true)
                } else {
                    self.expr()?
                };
                self.expect_punct(";")?;
                let step = if self.is_punct(")") {
                    Stmt::Skip
                } else {
                    self.simple()?
                };
                self.expect_punct(")")?;
                let body = self.stmt()?;
                Ok(Stmt::For {
                    init: Box::new(init),
                    cond,
                    step: Box::new(step),
                    body: Box::new(body),
                })
            }
            "while" => self.while_loop(None),
            "if" => {
                self.bump();
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                let then = self.stmt()?;
                let els = if self.eat_kw("else") {
                    self.stmt()?
                } else {
                    Stmt::Skip
                };
                Ok(Stmt::If {
                    cond,
                    then: Box::new(then),
                    els: Box::new(els),
                })
            }
            "switch" => {
                self.bump();
                self.expect_punct("(")?;
                let scrutinee = self.expr()?;
                self.expect_punct(")")?;
                self.expect_punct("{")?;
                let mut cases = Vec::new();
                while self.eat_kw("case") {
                    let value = self.int()?;
                    self.expect_punct(":")?;
                    let items = self.block_items(&|p| p.is_kw("case") || p.is_punct("}"))?;
                    cases.push(Case {
                        value,
                        body: Stmt::Seq(items).normalized(),
                    });
                }
                self.expect_punct("}")?;
                Ok(Stmt::Switch { scrutinee, cases })
            }
            "try" => {
                self.bump();
                let body = self.stmt()?;
                self.expect_kw("catch")?;
                self.expect_punct("(")?;
                let var = self.ident()?;
                self.expect_punct(":")?;
                let kind = match self.bump() {
                    Tok::Ident(k) if k == "Exception" => CatchKind::All,
                    Tok::Ident(k) if k == "ME" => CatchKind::Multiple,
                    Tok::Ident(k) if !KEYWORDS.contains(&k.as_str()) => CatchKind::Tag(k),
                    _ => {
                        self.pos -= 1;
                        return self.error("expected exception kind");
                    }
                };
                self.expect_punct(")")?;
                let handler = self.stmt()?;
                Ok(Stmt::TryCatch {
                    body: Box::new(body),
                    var,
                    kind,
                    handler: Box::new(handler),
                })
            }
            "throw" => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(";")?;
                Ok(Stmt::Throw(e))
            }
            "advanceAll" => {
                self.bump();
                if self.eat_punct("(") {
                    self.expect_punct(")")?;
                }
                self.expect_punct(";")?;
                Ok(Stmt::AdvanceAll)
            }
            "clock" => {
                self.bump();
                let c = self.ident()?;
                self.expect_punct(";")?;
                Ok(Stmt::ClockMake(c))
            }
            "drop" => {
                self.bump();
                let c = self.ident()?;
                self.expect_punct(";")?;
                Ok(Stmt::ClockDrop(c))
            }
            "break" | "continue" => {
                self.bump();
                let label = if self.is_punct(";") {
                    None
                } else {
                    Some(self.ident()?)
                };
                self.expect_punct(";")?;
                Ok(if word == "break" {
                    Stmt::Break(label)
                } else {
                    Stmt::Continue(label)
                })
            }
            "return" => {
                self.bump();
                self.expect_punct(";")?;
                Ok(Stmt::Return)
            }
            _ => {
                if matches!(self.peek_at(1), Tok::Punct(":"))
                    && matches!(self.peek_at(2), Tok::Ident(w) if w == "while")
                {
                    let label = self.ident()?;
                    self.expect_punct(":")?;
                    return self.while_loop(Some(label));
                }
                if matches!(self.peek_at(1), Tok::Punct("(")) {
                    let target = self.ident()?;
                    self.expect_punct("(")?;
                    let args = self.args()?;
                    self.expect_punct(";")?;
                    return Ok(Stmt::Call { target, args });
                }
                let s = self.simple()?;
                self.expect_punct(";")?;
                Ok(s)
            }
        }
    }

    fn while_loop(&mut self, label: Option<String>) -> PResult<Stmt> {
        self.expect_kw("while")?;
        self.expect_punct("(")?;
        let cond = self.expr()?;
        self.expect_punct(")")?;
        let body = self.stmt()?;
        Ok(Stmt::While {
            label,
            cond,
            body: Box::new(body),
        })
    }

    fn simple(&mut self) -> PResult<Stmt> {
        let name = self.ident()?;
        let lhs = if self.eat_punct("[") {
            let i = self.expr()?;
            self.expect_punct("]")?;
            LValue::Index(name, i)
        } else {
            LValue::Var(name)
        };
        self.expect_punct("=")?;
        let rhs = self.expr()?;
        Ok(Stmt::Assign { lhs, rhs })
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        let mut args = Vec::new();
        if !self.is_punct(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(args)
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        let Tok::Punct(p) = self.peek() else {
            return None;
        };
        Some(match *p {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            "<<" => BinOp::Shl,
            ">>" => BinOp::Shr,
            "&" => BinOp::BitAnd,
            "^" => BinOp::BitXor,
            "|" => BinOp::BitOr,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_punct("-") {
            if let Tok::Int(v) = self.peek().clone() {
                self.bump();
                return Ok(Expr::Int(-v));
            }
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)));
        }
        if self.eat_punct("!") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(w) => match w.as_str() {
                "true" => {
                    self.bump();
                    Ok(Expr::Bool(true))
                }
                "false" => {
                    self.bump();
                    Ok(Expr::Bool(false))
                }
                "null" => {
                    self.bump();
                    Ok(Expr::Null)
                }
                "idleWorkers" | "nthreads" => {
                    self.bump();
                    self.expect_punct("(")?;
                    self.expect_punct(")")?;
                    Ok(Expr::Builtin(if w == "idleWorkers" {
                        Builtin::IdleWorkers
                    } else {
                        Builtin::NThreads
                    }))
                }
                "new" => {
                    self.bump();
                    let tag = self.ident()?;
                    if tag == "ME" {
                        self.expect_punct("(")?;
                        let inner = self.expr()?;
                        self.expect_punct(")")?;
                        Ok(Expr::WrapMultiple(Box::new(inner)))
                    } else {
                        Ok(Expr::NewExc(tag))
                    }
                }
                _ => {
                    let name = self.ident()?;
                    if self.eat_punct("[") {
                        let i = self.expr()?;
                        self.expect_punct("]")?;
                        Ok(Expr::Index(name, Box::new(i)))
                    } else {
                        Ok(Expr::Var(name))
                    }
                }
            },
            _ => self.error(format!("expected expression, found {}", self.describe())),
        }
    }

    pub fn expect_eof(&mut self) -> PResult<()> {
        if matches!(self.peek(), Tok::Eof) {
            Ok(())
        } else {
            self.error(format!("unexpected {} after end", self.describe()))
        }
    }
}
