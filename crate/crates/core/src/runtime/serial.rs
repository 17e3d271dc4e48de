//! Single-threaded reference execution.
//!
//! An unclocked async runs to completion at its spawn point, as if it were
//! a call whose exceptions go to its finish. Clocked asyncs cannot (they
//! meet their siblings at barriers), so each gets its own coroutine: a
//! thread that only runs while it holds the baton. The baton moves in
//! FIFO order and only when the holder blocks or ends, which makes every
//! run of a program identical.

use std::collections::VecDeque;
use std::sync::mpsc::{channel, Sender};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::thread;

use super::clock::ClockState;
use super::interp::{fault, Abrupt, Exec, Host, Interp, ScopeId, Task, TaskCtx};
use super::trace::Event;
use super::value::{ClockId, Exc};
use super::{finish_run, RunError, RunResult, RuntimeConfig, STACK_SIZE};
use crate::ir::Program;

#[derive(Default)]
struct Scope {
    pending: usize,
    excs: Vec<Exc>,
    waiter: Option<usize>,
}

#[derive(Default)]
struct State {
    scopes: Vec<Scope>,
    clocks: Vec<ClockState>,
    barrier_waiters: Vec<Vec<usize>>,
    /// Task holding the baton.
    current: usize,
    ready: VecDeque<usize>,
    abort: Option<RunError>,
    entry_done: bool,
}

enum Launch<'p> {
    Coroutine(Task<'p>),
    Stop,
}

pub(crate) struct SerialHost<'p> {
    st: Mutex<State>,
    cv: Condvar,
    launch: Sender<Launch<'p>>,
}

impl<'p> SerialHost<'p> {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.st.lock().unwrap()
    }

    fn abort(&self, st: &mut State, e: RunError) {
        if st.abort.is_none() {
            st.abort = Some(e);
        }
        self.cv.notify_all();
    }

    /// Hands the baton on and sleeps until it comes back.
    fn block<'g>(&self, mut st: MutexGuard<'g, State>, me: usize) -> Exec<MutexGuard<'g, State>> {
        match st.ready.pop_front() {
            Some(next) => st.current = next,
            None => {
                let waiting: Vec<String> = st
                    .clocks
                    .iter()
                    .enumerate()
                    .map(|(i, c)| format!("clock {i}: {}/{} arrived", c.arrived, c.registered))
                    .collect();
                self.abort(
                    &mut st,
                    RunError::Deadlock(format!("task {me} blocked with nothing runnable; {}", waiting.join(", "))),
                );
            }
        }
        self.cv.notify_all();
        while st.current != me && st.abort.is_none() {
            st = self.cv.wait(st).unwrap();
        }
        match &st.abort {
            Some(_) => Err(Abrupt::Fault(RunError::Aborted)),
            None => Ok(st),
        }
    }

    fn release(st: &mut State, clock: ClockId) {
        let woken = std::mem::take(&mut st.barrier_waiters[clock]);
        st.ready.extend(woken);
    }

    /// Deregisters an ending or blocking task from its clocks.
    fn leave_clocks(st: &mut State, clocks: &[ClockId]) {
        for &c in clocks {
            if st.clocks[c].deregister() {
                Self::release(st, c);
            }
        }
    }

    /// Bookkeeping once a task body is done.
    fn settle(&self, st: &mut State, ctx: &TaskCtx, ief: ScopeId, r: Exec<()>) -> Exec<()> {
        Self::leave_clocks(st, &ctx.clocks);
        match r {
            Ok(()) => {}
            Err(Abrupt::Throw(e)) => st.scopes[ief].excs.push(e),
            Err(Abrupt::Fault(e)) => {
                self.abort(st, e.clone());
                return Err(Abrupt::Fault(e));
            }
        }
        Ok(())
    }

    fn coroutine(&self, it: &Interp<'p, Self>, mut task: Task<'p>) {
        let me = task.id;
        let mut st = self.lock();
        while st.current != me && st.abort.is_none() {
            st = self.cv.wait(st).unwrap();
        }
        if st.abort.is_some() {
            return;
        }
        drop(st);
        let mut ctx = TaskCtx::new(me, task.ief, std::mem::take(&mut task.clocks));
        let r = it.run_task(&mut ctx, &mut task);
        it.record(Event::TaskEnd { task: me });
        let mut st = self.lock();
        if self.settle(&mut st, &ctx, task.ief, r).is_err() {
            return;
        }
        let scope = &mut st.scopes[task.ief];
        scope.pending -= 1;
        if scope.pending == 0 {
            if let Some(w) = scope.waiter.take() {
                st.ready.push_back(w);
            }
        }
        match st.ready.pop_front() {
            Some(next) => st.current = next,
            // the baton holder is gone and nobody is ready: any remaining
            // task waits forever
            None if !st.entry_done || st.scopes.iter().any(|s| s.pending > 0) => {
                self.abort(&mut st, RunError::Deadlock(format!("task {me} ended with every other task blocked")));
            }
            None => {}
        }
        self.cv.notify_all();
    }
}

impl<'p> Host<'p> for SerialHost<'p> {
    fn spawn(&self, it: &Interp<'p, Self>, _parent: &mut TaskCtx, mut task: Task<'p>) -> Exec<()> {
        if task.clocks.is_empty() {
            let mut ctx = TaskCtx::new(task.id, task.ief, Vec::new());
            let r = it.run_task(&mut ctx, &mut task);
            it.record(Event::TaskEnd { task: task.id });
            let mut st = self.lock();
            return self.settle(&mut st, &ctx, task.ief, r);
        }
        let mut st = self.lock();
        st.scopes[task.ief].pending += 1;
        st.ready.push_back(task.id);
        drop(st);
        self.launch
            .send(Launch::Coroutine(task))
            .map_err(|_| Abrupt::Fault(RunError::Aborted))
    }

    fn open_scope(&self, _ctx: &mut TaskCtx) -> ScopeId {
        let mut st = self.lock();
        st.scopes.push(Scope::default());
        st.scopes.len() - 1
    }

    fn wait_scope(&self, _it: &Interp<'p, Self>, ctx: &mut TaskCtx, scope: ScopeId) -> Exec<Vec<Exc>> {
        let mut st = self.lock();
        if st.scopes[scope].pending > 0 {
            // a task waiting for its children does not hold up barriers
            Self::leave_clocks(&mut st, &ctx.clocks);
            st.scopes[scope].waiter = Some(ctx.id);
            st = self.block(st, ctx.id)?;
            for &c in &ctx.clocks {
                st.clocks[c].registered += 1;
            }
        }
        Ok(std::mem::take(&mut st.scopes[scope].excs))
    }

    fn advance(&self, it: &Interp<'p, Self>, ctx: &mut TaskCtx) -> Exec<()> {
        for &c in &ctx.clocks {
            let mut st = self.lock();
            let (g, released) = st.clocks[c].arrive();
            if released {
                Self::release(&mut st, c);
            } else {
                st.barrier_waiters[c].push(ctx.id);
                st = self.block(st, ctx.id)?;
            }
            drop(st);
            it.record(Event::Advance {
                task: ctx.id,
                clock: c,
                generation: g + 1,
            });
        }
        Ok(())
    }

    fn make_clock(&self, ctx: &mut TaskCtx) -> ClockId {
        let mut st = self.lock();
        st.clocks.push(ClockState::new_registered());
        st.barrier_waiters.push(Vec::new());
        let id = st.clocks.len() - 1;
        ctx.clocks.push(id);
        id
    }

    fn drop_clock(&self, ctx: &mut TaskCtx, clock: ClockId) -> Exec<()> {
        let Some(pos) = ctx.clocks.iter().position(|c| *c == clock) else {
            return fault(format!("task {} drops clock {clock} it is not registered on", ctx.id));
        };
        ctx.clocks.remove(pos);
        let mut st = self.lock();
        Self::leave_clocks(&mut st, &[clock]);
        Ok(())
    }

    fn register(&self, parent: &TaskCtx, clocks: &[ClockId]) -> Exec<()> {
        let mut st = self.lock();
        for &c in clocks {
            if !parent.clocks.contains(&c) {
                return fault(format!("task {} spawns on clock {c} it is not registered on", parent.id));
            }
            st.clocks[c].registered += 1;
        }
        Ok(())
    }

    fn idle_workers(&self) -> i64 {
        0
    }

    fn threads(&self) -> i64 {
        1
    }

    fn aborted(&self) -> bool {
        self.lock().abort.is_some()
    }
}

pub(crate) fn run(program: &Program, config: &RuntimeConfig, input: &[i64]) -> Result<RunResult, RunError> {
    let (tx, rx) = channel();
    let host = SerialHost {
        st: Mutex::new(State {
            scopes: vec![Scope::default()],
            ..State::default()
        }),
        cv: Condvar::new(),
        launch: tx,
    };
    let it = Interp::new(program, config, host);
    let started = std::time::Instant::now();
    let outcome = thread::scope(|s| {
        let entry = thread::Builder::new()
            .stack_size(STACK_SIZE)
            .spawn_scoped(s, || {
                let mut ctx = TaskCtx::new(0, 0, Vec::new());
                let main = it.run_entry(&mut ctx, input);
                let root = match &main {
                    Err(Abrupt::Fault(_)) => Ok(Vec::new()),
                    _ => it.host.wait_scope(&it, &mut ctx, 0),
                };
                it.host.lock().entry_done = true;
                let _ = it.host.launch.send(Launch::Stop);
                (main, root)
            })
            .expect("spawn entry thread");
        for msg in &rx {
            match msg {
                Launch::Coroutine(task) => {
                    let it = &it;
                    thread::Builder::new()
                        .stack_size(STACK_SIZE)
                        .spawn_scoped(s, move || it.host.coroutine(it, task))
                        .expect("spawn coroutine");
                }
                Launch::Stop => break,
            }
        }
        let r = entry.join().expect("entry thread panicked");
        // wake anything still parked so the scope can close
        let mut st = it.host.lock();
        if st.scopes.iter().any(|sc| sc.pending > 0) {
            it.host.abort(&mut st, RunError::Deadlock("tasks outlived the program".into()));
        }
        r
    });
    let abort = it.host.lock().abort.clone();
    finish_run(&it, outcome, abort, started.elapsed())
}
