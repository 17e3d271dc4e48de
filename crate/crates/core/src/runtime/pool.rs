//! Multi-worker execution.
//!
//! `workers` permits bound how many threads execute task code at once. A
//! thread that has to wait (for a finish scope or at a barrier) gives its
//! permit back, and a spare pool thread is started if queued work would
//! otherwise have nobody to run it. A finish join first helps by running
//! queued tasks on its own stack, newest first.
//!
//! The idle count is `workers` minus the permits in use, read without
//! taking the lock.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::clock::ClockState;
use super::interp::{fault, Abrupt, Exec, Host, Interp, ScopeId, Task, TaskCtx};
use super::trace::Event;
use super::value::{ClockId, Exc};
use super::{finish_run, RunError, RunResult, RuntimeConfig, STACK_SIZE};
use crate::ir::Program;

/// Pool threads beyond this are never started; a run that needs more is
/// reported as a deadlock.
const MAX_THREADS: usize = 4096;

#[derive(Default)]
struct Scope {
    pending: usize,
    excs: Vec<Exc>,
}

struct State<'p> {
    queue: VecDeque<Task<'p>>,
    active: usize,
    /// Blocked threads waiting to get a permit back; they go before new work.
    resuming: usize,
    parked: usize,
    threads: usize,
    scopes: Vec<Scope>,
    clocks: Vec<ClockState>,
    abort: Option<RunError>,
    shutdown: bool,
    progress: u64,
    rng: Option<StdRng>,
}

enum Launch {
    Worker,
    Stop,
}

pub(crate) struct PoolHost<'p> {
    st: Mutex<State<'p>>,
    cv: Condvar,
    workers: usize,
    /// Mirror of `active` for the racy idle read.
    busy: AtomicUsize,
    launch: Sender<Launch>,
    stall: Duration,
}

impl<'p> PoolHost<'p> {
    fn lock(&self) -> MutexGuard<'_, State<'p>> {
        self.st.lock().unwrap()
    }

    fn abort(&self, st: &mut State<'p>, e: RunError) {
        if st.abort.is_none() {
            st.abort = Some(e);
        }
        self.cv.notify_all();
    }

    fn set_active(&self, st: &mut State<'p>, delta: isize) {
        st.active = st.active.checked_add_signed(delta).expect("permit count underflow");
        st.progress += 1;
        self.busy.store(st.active, Ordering::Relaxed);
    }

    /// Starts a pool thread if queued work has nobody to run it.
    fn ensure_worker(&self, st: &mut State<'p>) {
        if !st.queue.is_empty() && st.parked == 0 && st.active < self.workers && st.threads < MAX_THREADS {
            st.threads += 1;
            // parked counts it until it looks at the queue
            st.parked += 1;
            let _ = self.launch.send(Launch::Worker);
        }
    }

    fn aborted_err(st: &State<'p>) -> Exec<()> {
        match st.abort {
            Some(_) => Err(Abrupt::Fault(RunError::Aborted)),
            None => Ok(()),
        }
    }

    /// Gives the permit back, sleeps until `done` holds, then waits for a
    /// permit again.
    fn block<'g>(
        &self,
        mut st: MutexGuard<'g, State<'p>>,
        done: &dyn Fn(&State<'p>) -> bool,
    ) -> Exec<MutexGuard<'g, State<'p>>> {
        self.set_active(&mut st, -1);
        self.ensure_worker(&mut st);
        self.cv.notify_all();
        while !done(&st) && st.abort.is_none() {
            st = self.cv.wait(st).unwrap();
        }
        st.resuming += 1;
        while st.active >= self.workers && st.abort.is_none() {
            st = self.cv.wait(st).unwrap();
        }
        st.resuming -= 1;
        self.set_active(&mut st, 1);
        Self::aborted_err(&st)?;
        Ok(st)
    }

    fn take_task(st: &mut State<'p>, newest: bool) -> Option<Task<'p>> {
        let newest = match st.rng.as_mut() {
            Some(r) => r.random_bool(0.5),
            None => newest,
        };
        if newest {
            st.queue.pop_back()
        } else {
            st.queue.pop_front()
        }
    }

    /// Runs a task on the current thread, which holds a permit.
    fn execute(&self, it: &Interp<'p, Self>, mut task: Task<'p>) {
        if let Some(delay) = self.lock().rng.as_mut().map(|r| r.random_range(0..3u64)) {
            // stress mode: perturb interleavings
            for _ in 0..delay {
                thread::yield_now();
            }
        }
        let mut ctx = TaskCtx::new(task.id, task.ief, std::mem::take(&mut task.clocks));
        let r = it.run_task(&mut ctx, &mut task);
        it.record(Event::TaskEnd { task: task.id });
        let mut st = self.lock();
        for &c in &ctx.clocks {
            st.clocks[c].deregister();
        }
        match r {
            Ok(()) => {}
            Err(Abrupt::Throw(e)) => st.scopes[task.ief].excs.push(e),
            Err(Abrupt::Fault(RunError::Aborted)) => {}
            Err(Abrupt::Fault(e)) => self.abort(&mut st, e),
        }
        st.scopes[task.ief].pending -= 1;
        st.progress += 1;
        self.cv.notify_all();
    }

    fn worker_loop(&self, it: &Interp<'p, Self>) {
        let mut st = self.lock();
        loop {
            if st.shutdown || st.abort.is_some() {
                st.parked -= 1;
                st.threads -= 1;
                self.cv.notify_all();
                return;
            }
            if st.resuming == 0 && st.active < self.workers && !st.queue.is_empty() {
                let task = Self::take_task(&mut st, false).unwrap();
                st.parked -= 1;
                self.set_active(&mut st, 1);
                drop(st);
                self.execute(it, task);
                st = self.lock();
                self.set_active(&mut st, -1);
                st.parked += 1;
                self.cv.notify_all();
                continue;
            }
            st = self.cv.wait(st).unwrap();
        }
    }

    fn watchdog(&self) {
        let mut last = (u64::MAX, Instant::now());
        let mut st = self.lock();
        loop {
            if st.shutdown || st.abort.is_some() {
                return;
            }
            let quiet = st.active == 0 && st.progress == last.0;
            if !quiet {
                last = (st.progress, Instant::now());
            } else if last.1.elapsed() >= self.stall {
                let clocks: Vec<String> = st
                    .clocks
                    .iter()
                    .enumerate()
                    .map(|(i, c)| format!("clock {i}: {}/{} arrived", c.arrived, c.registered))
                    .collect();
                let pending = st.scopes.iter().filter(|s| s.pending > 0).count();
                let msg = format!(
                    "no worker running for {:?}: {} queued tasks, {pending} open finish scopes, {} threads; {}",
                    self.stall,
                    st.queue.len(),
                    st.threads,
                    clocks.join(", ")
                );
                self.abort(&mut st, RunError::Deadlock(msg));
                return;
            }
            st = self.cv.wait_timeout(st, Duration::from_millis(10)).unwrap().0;
        }
    }
}

impl<'p> Host<'p> for PoolHost<'p> {
    fn spawn(&self, _it: &Interp<'p, Self>, _parent: &mut TaskCtx, task: Task<'p>) -> Exec<()> {
        let mut st = self.lock();
        Self::aborted_err(&st)?;
        st.scopes[task.ief].pending += 1;
        let front = st.rng.as_mut().is_some_and(|r| r.random_bool(0.5));
        if front {
            st.queue.push_front(task);
        } else {
            st.queue.push_back(task);
        }
        st.progress += 1;
        self.ensure_worker(&mut st);
        self.cv.notify_all();
        Ok(())
    }

    fn open_scope(&self, _ctx: &mut TaskCtx) -> ScopeId {
        let mut st = self.lock();
        st.scopes.push(Scope::default());
        st.scopes.len() - 1
    }

    fn wait_scope(&self, it: &Interp<'p, Self>, ctx: &mut TaskCtx, scope: ScopeId) -> Exec<Vec<Exc>> {
        let mut st = self.lock();
        let mut suspended = false;
        while st.scopes[scope].pending > 0 {
            Self::aborted_err(&st)?;
            if !suspended {
                // a task waiting for its children does not hold up barriers
                for &c in &ctx.clocks {
                    st.clocks[c].deregister();
                }
                suspended = true;
                self.cv.notify_all();
            }
            if let Some(task) = Self::take_task(&mut st, true) {
                drop(st);
                self.execute(it, task);
                st = self.lock();
                continue;
            }
            st = self.block(st, &|s: &State<'p>| s.scopes[scope].pending == 0 || !s.queue.is_empty())?;
        }
        if suspended {
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
            st.progress += 1;
            if released {
                self.cv.notify_all();
            } else {
                st = self.block(st, &|s: &State<'p>| s.clocks[c].generation > g)?;
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
        if st.clocks[clock].deregister() {
            self.cv.notify_all();
        }
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
        self.workers.saturating_sub(self.busy.load(Ordering::Relaxed)) as i64
    }

    fn threads(&self) -> i64 {
        self.workers as i64
    }

    fn aborted(&self) -> bool {
        self.lock().abort.is_some()
    }
}

pub(crate) fn run(program: &Program, config: &RuntimeConfig, input: &[i64]) -> Result<RunResult, RunError> {
    let workers = config.workers.max(1);
    let (tx, rx) = channel();
    let host = PoolHost {
        st: Mutex::new(State {
            queue: VecDeque::new(),
            // the entry task starts with a permit
            active: 1,
            resuming: 0,
            parked: 0,
            threads: 0,
            scopes: vec![Scope::default()],
            clocks: Vec::new(),
            abort: None,
            shutdown: false,
            progress: 0,
            rng: config.seed.map(StdRng::seed_from_u64),
        }),
        cv: Condvar::new(),
        workers,
        busy: AtomicUsize::new(1),
        launch: tx,
        stall: config.deadlock_timeout,
    };
    let it = Interp::new(program, config, host);
    let started = Instant::now();
    let outcome = thread::scope(|s| {
        let it = &it;
        {
            let mut st = it.host.lock();
            st.threads = workers - 1;
            st.parked = workers - 1;
        }
        for _ in 1..workers {
            thread::Builder::new()
                .stack_size(STACK_SIZE)
                .spawn_scoped(s, move || it.host.worker_loop(it))
                .expect("spawn worker");
        }
        s.spawn(move || it.host.watchdog());
        let entry = thread::Builder::new()
            .stack_size(STACK_SIZE)
            .spawn_scoped(s, move || {
                let mut ctx = TaskCtx::new(0, 0, Vec::new());
                let main = it.run_entry(&mut ctx, input);
                let root = match &main {
                    Err(Abrupt::Fault(_)) => Ok(Vec::new()),
                    _ => it.host.wait_scope(it, &mut ctx, 0),
                };
                let mut st = it.host.lock();
                st.shutdown = true;
                it.host.cv.notify_all();
                drop(st);
                let _ = it.host.launch.send(Launch::Stop);
                (main, root)
            })
            .expect("spawn entry thread");
        for msg in &rx {
            match msg {
                Launch::Worker => {
                    thread::Builder::new()
                        .stack_size(STACK_SIZE)
                        .spawn_scoped(s, move || it.host.worker_loop(it))
                        .expect("spawn worker");
                }
                Launch::Stop => break,
            }
        }
        entry.join().expect("entry thread panicked")
    });
    let abort = it.host.lock().abort.clone();
    finish_run(&it, outcome, abort, started.elapsed())
}
