use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::store::Store;
use super::trace::{Event, Trace};
use super::value::{ClockId, Exc, Value};
use super::{Counters, RunError, RuntimeConfig};
use crate::analysis::accumulation;
use crate::ir::{BinOp, Builtin, CatchKind, Expr, Ident, LValue, Method, Program, Stmt, UnOp};

pub(crate) type Frame = HashMap<Ident, Value>;
pub(crate) type ScopeId = usize;

/// Names with this prefix live in the task, not in a method frame, so a
/// callee can hand a value back to the code that called it.
const REGISTER_PREFIX: &str = "__gex";

/// Non-local control transfer out of a statement.
#[derive(Debug)]
pub(crate) enum Abrupt {
    Throw(Exc),
    Fault(RunError),
}

pub(crate) type Exec<T> = Result<T, Abrupt>;

pub(crate) fn fault<T>(msg: impl Into<String>) -> Exec<T> {
    Err(Abrupt::Fault(RunError::Fault(msg.into())))
}

#[derive(Debug, PartialEq, Eq)]
pub(crate) enum Flow {
    Normal,
    Break(Option<Ident>),
    Continue(Option<Ident>),
    Return,
}

/// Per-task state that is not part of any method frame.
pub(crate) struct TaskCtx {
    pub id: usize,
    /// Finish scope that will join tasks spawned right now.
    pub ief: ScopeId,
    pub clocks: Vec<ClockId>,
    pub registers: HashMap<Ident, Value>,
}

impl TaskCtx {
    pub fn new(id: usize, ief: ScopeId, clocks: Vec<ClockId>) -> TaskCtx {
        TaskCtx {
            id,
            ief,
            clocks,
            registers: HashMap::new(),
        }
    }
}

/// A spawned task that has not started yet.
pub(crate) struct Task<'p> {
    pub id: usize,
    pub body: &'p Stmt,
    pub frame: Frame,
    pub ief: ScopeId,
    pub clocks: Vec<ClockId>,
}

/// The concurrency side of execution: everything the evaluator cannot do
/// on its own.
pub(crate) trait Host<'p>: Sync + Sized {
    /// Called after the child has been registered on its clocks and
    /// counted in its finish scope.
    fn spawn(&self, it: &Interp<'p, Self>, parent: &mut TaskCtx, task: Task<'p>) -> Exec<()>;
    fn open_scope(&self, ctx: &mut TaskCtx) -> ScopeId;
    /// Waits until every task of `scope` has ended and returns what they
    /// threw.
    fn wait_scope(&self, it: &Interp<'p, Self>, ctx: &mut TaskCtx, scope: ScopeId) -> Exec<Vec<Exc>>;

    /// Finish semantics: the body's own exception and those of the joined
    /// tasks leave together as one `Multiple`.
    fn join(&self, it: &Interp<'p, Self>, ctx: &mut TaskCtx, scope: ScopeId, body: Option<Exc>) -> Exec<()> {
        let mut all: Vec<Exc> = body.into_iter().collect();
        all.extend(self.wait_scope(it, ctx, scope)?);
        if all.is_empty() {
            Ok(())
        } else {
            Err(Abrupt::Throw(Exc::Multiple(all)))
        }
    }
    fn advance(&self, it: &Interp<'p, Self>, ctx: &mut TaskCtx) -> Exec<()>;
    fn make_clock(&self, ctx: &mut TaskCtx) -> ClockId;
    fn drop_clock(&self, ctx: &mut TaskCtx, clock: ClockId) -> Exec<()>;
    /// Registers a new child on `clocks`, which the parent must hold.
    fn register(&self, parent: &TaskCtx, clocks: &[ClockId]) -> Exec<()>;
    fn idle_workers(&self) -> i64;
    fn threads(&self) -> i64;
    fn aborted(&self) -> bool;
}

pub(crate) struct AtomicCounters {
    asyncs: AtomicU64,
    finishes: AtomicU64,
    advances: AtomicU64,
    idle_reads: AtomicU64,
}

impl AtomicCounters {
    fn new() -> Self {
        AtomicCounters {
            asyncs: AtomicU64::new(0),
            finishes: AtomicU64::new(0),
            advances: AtomicU64::new(0),
            idle_reads: AtomicU64::new(0),
        }
    }

    pub fn snapshot(&self) -> Counters {
        Counters {
            asyncs: self.asyncs.load(Ordering::SeqCst),
            finishes: self.finishes.load(Ordering::SeqCst),
            advances: self.advances.load(Ordering::SeqCst),
        }
    }
}

pub(crate) struct Interp<'p, H> {
    pub program: &'p Program,
    methods: HashMap<&'p str, &'p Method>,
    pub store: Store,
    pub counters: AtomicCounters,
    pub trace: Option<Trace>,
    pub host: H,
    config: &'p RuntimeConfig,
    next_task: AtomicU64,
}

impl<'p, H: Host<'p>> Interp<'p, H> {
    pub fn new(program: &'p Program, config: &'p RuntimeConfig, host: H) -> Self {
        Interp {
            program,
            methods: program.methods.iter().map(|m| (m.name.as_str(), m)).collect(),
            store: Store::new(program),
            counters: AtomicCounters::new(),
            trace: config.trace.then(|| Trace::new(config.trace_capacity)),
            host,
            config,
            next_task: AtomicU64::new(1),
        }
    }

    pub fn fresh_task_id(&self) -> usize {
        self.next_task.fetch_add(1, Ordering::Relaxed) as usize
    }

    pub fn record(&self, ev: Event) {
        if let Some(t) = &self.trace {
            t.push(ev);
        }
    }

    /// Runs the entry method on the calling thread as task 0.
    pub fn run_entry(&self, ctx: &mut TaskCtx, input: &[i64]) -> Exec<()> {
        let entry = self.program.entry.as_str();
        let m = match self.methods.get(entry) {
            Some(m) => *m,
            None => return fault(format!("no entry method `{entry}`")),
        };
        if m.params.len() != input.len() {
            return fault(format!(
                "entry `{entry}` takes {} arguments, got {}",
                m.params.len(),
                input.len()
            ));
        }
        let args = input.iter().map(|v| Value::Int(*v)).collect();
        self.call(ctx, m, args)
    }

    /// Body of a task; the caller settles its scope and clocks.
    pub fn run_task(&self, ctx: &mut TaskCtx, task: &mut Task<'p>) -> Exec<()> {
        self.exec(ctx, &mut task.frame, task.body).map(|_| ())
    }

    fn call(&self, ctx: &mut TaskCtx, m: &'p Method, args: Vec<Value>) -> Exec<()> {
        let mut frame: Frame = m.params.iter().map(|p| p.name.clone()).zip(args).collect();
        match self.exec(ctx, &mut frame, &m.body)? {
            Flow::Normal | Flow::Return => Ok(()),
            other => fault(format!("`{other:?}` escaped method `{}`", m.name)),
        }
    }

    pub fn exec(&self, ctx: &mut TaskCtx, frame: &mut Frame, s: &'p Stmt) -> Exec<Flow> {
        match s {
            Stmt::Skip => Ok(Flow::Normal),
            Stmt::Seq(items) => {
                for item in items {
                    let f = self.exec(ctx, frame, item)?;
                    if f != Flow::Normal {
                        return Ok(f);
                    }
                }
                Ok(Flow::Normal)
            }
            Stmt::Assign { lhs, rhs } => self.assign(ctx, frame, lhs, rhs).map(|_| Flow::Normal),
            Stmt::If { cond, then, els } => {
                if self.cond(ctx, frame, cond)? {
                    self.exec(ctx, frame, then)
                } else {
                    self.exec(ctx, frame, els)
                }
            }
            Stmt::For {
                init,
                cond,
                step,
                body,
            } => {
                let f = self.exec(ctx, frame, init)?;
                if f != Flow::Normal {
                    return Ok(f);
                }
                loop {
                    self.check_abort()?;
                    if !self.cond(ctx, frame, cond)? {
                        return Ok(Flow::Normal);
                    }
                    match self.exec(ctx, frame, body)? {
                        Flow::Normal | Flow::Continue(None) => {}
                        Flow::Break(None) => return Ok(Flow::Normal),
                        other => return Ok(other),
                    }
                    self.exec(ctx, frame, step)?;
                }
            }
            Stmt::While { label, cond, body } => loop {
                self.check_abort()?;
                if !self.cond(ctx, frame, cond)? {
                    return Ok(Flow::Normal);
                }
                match self.exec(ctx, frame, body)? {
                    Flow::Normal | Flow::Continue(None) => {}
                    Flow::Break(None) => return Ok(Flow::Normal),
                    Flow::Continue(Some(l)) if label.as_ref() == Some(&l) => {}
                    Flow::Break(Some(l)) if label.as_ref() == Some(&l) => return Ok(Flow::Normal),
                    other => return Ok(other),
                }
            },
            Stmt::Switch { scrutinee, cases } => {
                let v = self.int(ctx, frame, scrutinee)?;
                if let Some(start) = cases.iter().position(|c| c.value == v) {
                    for c in &cases[start..] {
                        let f = self.exec(ctx, frame, &c.body)?;
                        if f != Flow::Normal {
                            return Ok(f);
                        }
                    }
                }
                Ok(Flow::Normal)
            }
            Stmt::TryCatch {
                body,
                var,
                kind,
                handler,
            } => match self.exec(ctx, frame, body) {
                Err(Abrupt::Throw(e)) if catches(kind, &e) => {
                    self.write_local(ctx, frame, var, Value::Exc(e));
                    self.exec(ctx, frame, handler)
                }
                other => other,
            },
            Stmt::Throw(e) => match self.eval(ctx, frame, e)? {
                Value::Exc(x) => Err(Abrupt::Throw(x)),
                other => fault(format!("cannot throw {}", other.kind())),
            },
            Stmt::Finish { body, pending } => {
                self.counters.finishes.fetch_add(1, Ordering::Relaxed);
                self.record(Event::FinishEnter { task: ctx.id });
                let outer = ctx.ief;
                let scope = self.host.open_scope(ctx);
                ctx.ief = scope;
                let r = self.exec(ctx, frame, body);
                ctx.ief = outer;
                let (flow, body_exc) = match r {
                    Ok(f) => (f, None),
                    Err(Abrupt::Throw(e)) => (Flow::Normal, Some(e)),
                    Err(f) => return Err(f),
                };
                self.host.join(self, ctx, scope, body_exc)?;
                self.record(Event::FinishExit { task: ctx.id });
                for v in pending.iter() {
                    match self.read_var(ctx, frame, v)? {
                        Value::Exc(e) => return Err(Abrupt::Throw(e)),
                        Value::Null => {}
                        other => return fault(format!("pending slot `{v}` holds {}", other.kind())),
                    }
                }
                Ok(flow)
            }
            Stmt::Async { body, clocks } => {
                let mut ids = Vec::with_capacity(clocks.len());
                for c in clocks {
                    match self.read_var(ctx, frame, c)? {
                        Value::Clock(id) => ids.push(id),
                        other => return fault(format!("`{c}` holds {}, not a clock", other.kind())),
                    }
                }
                self.host.register(ctx, &ids)?;
                self.counters.asyncs.fetch_add(1, Ordering::Relaxed);
                let id = self.fresh_task_id();
                self.record(Event::Spawn {
                    task: id,
                    parent: ctx.id,
                });
                let task = Task {
                    id,
                    body,
                    frame: frame.clone(),
                    ief: ctx.ief,
                    clocks: ids,
                };
                self.host.spawn(self, ctx, task)?;
                Ok(Flow::Normal)
            }
            Stmt::AdvanceAll => {
                self.counters.advances.fetch_add(1, Ordering::Relaxed);
                self.host.advance(self, ctx)?;
                Ok(Flow::Normal)
            }
            Stmt::ClockMake(v) => {
                let id = self.host.make_clock(ctx);
                self.write_local(ctx, frame, v, Value::Clock(id));
                Ok(Flow::Normal)
            }
            Stmt::ClockDrop(v) => match self.read_var(ctx, frame, v)? {
                Value::Clock(id) => self.host.drop_clock(ctx, id).map(|_| Flow::Normal),
                other => fault(format!("`{v}` holds {}, not a clock", other.kind())),
            },
            Stmt::Call { target, args } => {
                let m = match self.methods.get(target.as_str()) {
                    Some(m) => *m,
                    None => return fault(format!("call to unknown method `{target}`")),
                };
                if m.params.len() != args.len() {
                    return fault(format!("`{target}` takes {} arguments", m.params.len()));
                }
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(ctx, frame, a)?);
                }
                self.call(ctx, m, vals).map(|_| Flow::Normal)
            }
            Stmt::Break(l) => Ok(Flow::Break(l.clone())),
            Stmt::Continue(l) => Ok(Flow::Continue(l.clone())),
            Stmt::Return => Ok(Flow::Return),
        }
    }

    fn check_abort(&self) -> Exec<()> {
        if self.host.aborted() {
            Err(Abrupt::Fault(RunError::Aborted))
        } else {
            Ok(())
        }
    }

    fn global_slot(&self, name: &str) -> Option<usize> {
        self.store.slot(name)
    }

    fn write_local(&self, ctx: &mut TaskCtx, frame: &mut Frame, name: &str, v: Value) {
        if name.starts_with(REGISTER_PREFIX) {
            ctx.registers.insert(name.to_string(), v);
        } else {
            frame.insert(name.to_string(), v);
        }
    }

    fn read_var(&self, ctx: &TaskCtx, frame: &Frame, name: &str) -> Exec<Value> {
        if let Some(slot) = self.global_slot(name) {
            if self.store.is_array(slot) {
                return fault(format!("array `{name}` used as a scalar"));
            }
            return Ok(Value::Int(self.store.cell(slot, 0).unwrap().load(Ordering::SeqCst)));
        }
        if name.starts_with(REGISTER_PREFIX) {
            return Ok(ctx.registers.get(name).cloned().unwrap_or(Value::Null));
        }
        match frame.get(name) {
            Some(v) => Ok(v.clone()),
            None => fault(format!("read of unassigned local `{name}`")),
        }
    }

    fn cell(&self, ctx: &mut TaskCtx, frame: &mut Frame, name: &str, index: &Expr) -> Exec<(usize, i64)> {
        let Some(slot) = self.global_slot(name).filter(|s| self.store.is_array(*s)) else {
            return fault(format!("`{name}` is not a global array"));
        };
        let i = self.int(ctx, frame, index)?;
        if self.store.cell(slot, i).is_none() {
            return fault(format!("index {i} out of bounds for `{name}` of length {}", self.store.len(slot)));
        }
        Ok((slot, i))
    }

    fn assign(&self, ctx: &mut TaskCtx, frame: &mut Frame, lhs: &LValue, rhs: &Expr) -> Exec<()> {
        // updates that the analysis treats as commuting are applied atomically
        if let Some(acc) = accumulation(lhs, rhs) {
            if let Some(slot) = self.global_slot(acc.name) {
                let i = match acc.index {
                    Some(ix) => self.cell(ctx, frame, acc.name, ix)?.1,
                    None if !self.store.is_array(slot) => 0,
                    None => return fault(format!("array `{}` used as a scalar", acc.name)),
                };
                let d = self.int(ctx, frame, acc.addend)?;
                let d = if acc.subtract { d.wrapping_neg() } else { d };
                let cell = self.store.cell(slot, i).unwrap();
                let old = cell.fetch_add(d, Ordering::SeqCst);
                self.trace_write(ctx, slot, i, old.wrapping_add(d));
                return Ok(());
            }
        }
        match lhs {
            LValue::Var(x) => {
                let v = self.eval(ctx, frame, rhs)?;
                match self.global_slot(x) {
                    Some(slot) if !self.store.is_array(slot) => {
                        let Value::Int(n) = v else {
                            return fault(format!("global `{x}` cannot hold {}", v.kind()));
                        };
                        self.store.cell(slot, 0).unwrap().store(n, Ordering::SeqCst);
                        self.trace_write(ctx, slot, 0, n);
                    }
                    Some(_) => return fault(format!("cannot assign to array `{x}`")),
                    None => self.write_local(ctx, frame, x, v),
                }
            }
            LValue::Index(a, ix) => {
                let (slot, i) = self.cell(ctx, frame, a, ix)?;
                let n = self.int(ctx, frame, rhs)?;
                self.store.cell(slot, i).unwrap().store(n, Ordering::SeqCst);
                self.trace_write(ctx, slot, i, n);
            }
        }
        Ok(())
    }

    fn trace_write(&self, ctx: &TaskCtx, slot: usize, index: i64, value: i64) {
        if self.trace.is_some() {
            self.record(Event::Write {
                task: ctx.id,
                global: self.store.name(slot).to_string(),
                index,
                value,
            });
        }
    }

    fn cond(&self, ctx: &mut TaskCtx, frame: &mut Frame, e: &Expr) -> Exec<bool> {
        match self.eval(ctx, frame, e)? {
            Value::Bool(b) => Ok(b),
            other => fault(format!("condition is {}, not bool", other.kind())),
        }
    }

    fn int(&self, ctx: &mut TaskCtx, frame: &mut Frame, e: &Expr) -> Exec<i64> {
        match self.eval(ctx, frame, e)? {
            Value::Int(v) => Ok(v),
            other => fault(format!("expected int, found {}", other.kind())),
        }
    }

    pub fn eval(&self, ctx: &mut TaskCtx, frame: &mut Frame, e: &Expr) -> Exec<Value> {
        Ok(match e {
            Expr::Int(v) => Value::Int(*v),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Null => Value::Null,
            Expr::Var(x) => return self.read_var(ctx, frame, x),
            Expr::Index(a, ix) => {
                let (slot, i) = self.cell(ctx, frame, a, ix)?;
                Value::Int(self.store.cell(slot, i).unwrap().load(Ordering::SeqCst))
            }
            Expr::NewExc(tag) => Value::Exc(Exc::Plain(tag.clone())),
            Expr::WrapMultiple(inner) => match self.eval(ctx, frame, inner)? {
                Value::Exc(x) => Value::Exc(Exc::Multiple(vec![x])),
                other => return fault(format!("cannot wrap {} in ME", other.kind())),
            },
            Expr::Builtin(Builtin::NThreads) => Value::Int(self.host.threads()),
            Expr::Builtin(Builtin::IdleWorkers) => {
                let real = self.host.idle_workers();
                let n = self.counters.idle_reads.fetch_add(1, Ordering::SeqCst);
                let v = match &self.config.idle_hook {
                    Some(hook) => hook(n, real),
                    None => real,
                };
                self.record(Event::Idle { task: ctx.id, value: v });
                Value::Int(v)
            }
            Expr::Unary(op, a) => match (op, self.eval(ctx, frame, a)?) {
                (UnOp::Neg, Value::Int(v)) => Value::Int(v.wrapping_neg()),
                (UnOp::Not, Value::Bool(b)) => Value::Bool(!b),
                (op, v) => return fault(format!("cannot apply {op:?} to {}", v.kind())),
            },
            Expr::Binary(BinOp::And, a, b) => Value::Bool(self.cond(ctx, frame, a)? && self.cond(ctx, frame, b)?),
            Expr::Binary(BinOp::Or, a, b) => Value::Bool(self.cond(ctx, frame, a)? || self.cond(ctx, frame, b)?),
            Expr::Binary(op, a, b) => {
                let x = self.eval(ctx, frame, a)?;
                let y = self.eval(ctx, frame, b)?;
                return binary(*op, x, y);
            }
        })
    }
}

fn catches(kind: &CatchKind, e: &Exc) -> bool {
    match (kind, e) {
        (CatchKind::All, _) => true,
        (CatchKind::Multiple, Exc::Multiple(_)) => true,
        (CatchKind::Tag(t), Exc::Plain(u)) => t == u,
        _ => false,
    }
}

fn binary(op: BinOp, x: Value, y: Value) -> Exec<Value> {
    use BinOp::*;
    if let (Eq | Ne, false) = (op, matches!((&x, &y), (Value::Int(_), Value::Int(_)))) {
        let same = match (&x, &y) {
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Null | Value::Exc(_), Value::Null | Value::Exc(_)) => x == y,
            (Value::Clock(a), Value::Clock(b)) => a == b,
            _ => return fault(format!("cannot compare {} with {}", x.kind(), y.kind())),
        };
        return Ok(Value::Bool(same == (op == Eq)));
    }
    let (Value::Int(a), Value::Int(b)) = (&x, &y) else {
        return fault(format!("`{}` needs ints, found {} and {}", op.symbol(), x.kind(), y.kind()));
    };
    let (a, b) = (*a, *b);
    Ok(match op {
        Add => Value::Int(a.wrapping_add(b)),
        Sub => Value::Int(a.wrapping_sub(b)),
        Mul => Value::Int(a.wrapping_mul(b)),
        Div | Rem if b == 0 => return fault("division by zero"),
        Div => Value::Int(a.wrapping_div(b)),
        Rem => Value::Int(a.wrapping_rem(b)),
        Shl => Value::Int(a.wrapping_shl(b as u32)),
        Shr => Value::Int(a.wrapping_shr(b as u32)),
        BitAnd => Value::Int(a & b),
        BitXor => Value::Int(a ^ b),
        BitOr => Value::Int(a | b),
        Lt => Value::Bool(a < b),
        Le => Value::Bool(a <= b),
        Gt => Value::Bool(a > b),
        Ge => Value::Bool(a >= b),
        Eq => Value::Bool(a == b),
        Ne => Value::Bool(a != b),
        And | Or => unreachable!("short-circuit operators are handled by eval"),
    })
}
