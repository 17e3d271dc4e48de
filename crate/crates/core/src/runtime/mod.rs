//! Interpreter for Finch programs.
//!
//! [`run`] executes on a pool of worker threads; [`serial_oracle`] runs the
//! same program depth-first on one task at a time and serves as ground
//! truth for final stores and exceptions.

mod clock;
mod interp;
mod pool;
mod serial;
mod store;
mod trace;
mod value;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use store::checksum;
pub use trace::Event;
pub use value::{Exc, Value};

use interp::{Abrupt, Exec, Host, Interp};

use crate::ir::Program;

/// Stack for every interpreter thread; deep recursion plus help-first
/// joins nest many tasks on one stack.
pub(crate) const STACK_SIZE: usize = 256 << 20;

/// Test override for the idle-worker count: gets the 0-based index of the
/// read and the real count, returns the value the program sees.
pub type IdleHook = Arc<dyn Fn(u64, i64) -> i64 + Send + Sync>;

#[derive(Clone)]
pub struct RuntimeConfig {
    pub workers: usize,
    /// Seeds scheduling jitter; `None` runs the plain policy.
    pub seed: Option<u64>,
    pub idle_hook: Option<IdleHook>,
    pub trace: bool,
    pub trace_capacity: usize,
    /// How long no worker may run before the run is declared deadlocked.
    pub deadlock_timeout: Duration,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            workers: 1,
            seed: None,
            idle_hook: None,
            trace: false,
            trace_capacity: 1 << 20,
            deadlock_timeout: Duration::from_secs(2),
        }
    }
}

impl fmt::Debug for RuntimeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RuntimeConfig")
            .field("workers", &self.workers)
            .field("seed", &self.seed)
            .field("idle_hook", &self.idle_hook.is_some())
            .field("trace", &self.trace)
            .finish()
    }
}

impl RuntimeConfig {
    pub fn with_workers(workers: usize) -> Self {
        RuntimeConfig {
            workers,
            ..RuntimeConfig::default()
        }
    }

    /// Worker count from `FINCH_NTHREADS`, defaulting to 1.
    pub fn from_env() -> Self {
        let workers = std::env::var("FINCH_NTHREADS")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|n: &usize| *n >= 1)
            .unwrap_or(1);
        RuntimeConfig::with_workers(workers)
    }
}

/// Dynamic operation counts of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub asyncs: u64,
    pub finishes: u64,
    pub advances: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RunError {
    #[error("runtime fault: {0}")]
    Fault(String),
    #[error("deadlock: {0}")]
    Deadlock(String),
    #[error("run aborted")]
    Aborted,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub checksum: u64,
    /// Exception that escaped the program, if any.
    pub exception: Option<Exc>,
    pub counters: Counters,
    /// Final globals sorted by name.
    pub globals: Vec<(String, Vec<i64>)>,
    pub trace: Vec<Event>,
    pub elapsed: Duration,
}

impl RunResult {
    pub fn global(&self, name: &str) -> Option<&[i64]> {
        self.globals.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn scalar(&self, name: &str) -> Option<i64> {
        self.global(name).and_then(|v| v.first().copied())
    }
}

/// Runs `program` on `config.workers` workers.
pub fn run(program: &Program, config: &RuntimeConfig, input: &[i64]) -> Result<RunResult, RunError> {
    pool::run(program, config, input)
}

/// Deterministic single-threaded reference run.
pub fn serial_oracle(program: &Program, input: &[i64]) -> Result<RunResult, RunError> {
    serial_with(program, &RuntimeConfig::default(), input)
}

/// The reference run with tracing or an idle hook.
pub fn serial_with(program: &Program, config: &RuntimeConfig, input: &[i64]) -> Result<RunResult, RunError> {
    serial::run(program, config, input)
}

/// Turns the entry task's outcome and the root scope's exceptions into a
/// result. Exceptions that escaped tasks are reported together with the
/// entry's own as one `Multiple`; an entry exception alone is reported as
/// is.
fn finish_run<'p, H: Host<'p>>(
    it: &Interp<'p, H>,
    (main, root): (Exec<()>, Exec<Vec<Exc>>),
    abort: Option<RunError>,
    elapsed: Duration,
) -> Result<RunResult, RunError> {
    if let Some(e) = abort {
        return Err(e);
    }
    let main_exc = match main {
        Ok(()) => None,
        Err(Abrupt::Throw(e)) => Some(e),
        Err(Abrupt::Fault(e)) => return Err(e),
    };
    let escaped = match root {
        Ok(v) => v,
        Err(Abrupt::Fault(e)) => return Err(e),
        Err(Abrupt::Throw(e)) => vec![e],
    };
    let exception = if escaped.is_empty() {
        main_exc
    } else {
        Some(Exc::Multiple(main_exc.into_iter().chain(escaped).collect()))
    };
    let globals = it.store.snapshot();
    Ok(RunResult {
        checksum: checksum(&globals),
        exception,
        counters: it.counters.snapshot(),
        globals,
        trace: it.trace.as_ref().map(|t| t.take()).unwrap_or_default(),
        elapsed,
    })
}
