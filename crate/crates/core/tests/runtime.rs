use std::sync::Arc;
use std::time::Duration;

use finch::frontend::parse_str;
use finch::runtime::{run, serial_oracle, serial_with, Event, Exc, RunError, RuntimeConfig};

/// Independent n-queens counter: plain backtracking over column sets.
fn brute_force_queens(n: usize) -> i64 {
    fn place(row: usize, n: usize, cols: &mut Vec<usize>) -> i64 {
        if row == n {
            return 1;
        }
        let mut total = 0;
        for c in 0..n {
            let safe = cols
                .iter()
                .enumerate()
                .all(|(r, &q)| q != c && (row - r) != c.abs_diff(q));
            if safe {
                cols.push(c);
                total += place(row + 1, n, cols);
                cols.pop();
            }
        }
        total
    }
    place(0, n, &mut Vec::new())
}

const QUEENS: &str = "
array board[16];
var solutions = 0;
var calls = 0;

def main(n: int) {
  nqueens(n, 0, 0);
}

def nqueens(n: int, j: int, placed: int) {
  calls = calls + 1;
  finish {
    for (i = 0; i < n; i = i + 1) {
      async {
        ok = true;
        for (r = 0; r < j; r = r + 1) {
          q = (placed >> (4 * r)) & 15;
          if (q == i || q - i == j - r || i - q == j - r) {
            ok = false;
          }
        }
        if (ok) {
          if (j + 1 == n) {
            solutions = solutions + 1;
          } else {
            nqueens(n, j + 1, placed | (i << (4 * j)));
          }
        }
      }
    }
  }
}";

#[test]
fn oracle_counts_queens_like_the_enumerator() {
    let p = parse_str(QUEENS).unwrap();
    for n in [4, 5, 6] {
        let r = serial_oracle(&p, &[n]).unwrap();
        assert_eq!(r.scalar("solutions"), Some(brute_force_queens(n as usize)), "n={n}");
        // one finish per call, one async per loop iteration
        let calls = r.scalar("calls").unwrap() as u64;
        assert_eq!(r.counters.finishes, calls);
        assert_eq!(r.counters.asyncs, calls * n as u64);
    }
}

#[test]
fn parallel_runs_agree_with_the_oracle() {
    let p = parse_str(QUEENS).unwrap();
    let want = serial_oracle(&p, &[6]).unwrap();
    for workers in [1, 2, 4, 8] {
        for seed in [None, Some(1), Some(2)] {
            let cfg = RuntimeConfig {
                seed,
                ..RuntimeConfig::with_workers(workers)
            };
            let got = run(&p, &cfg, &[6]).unwrap();
            assert_eq!(got.checksum, want.checksum, "workers={workers} seed={seed:?}");
            assert_eq!(got.counters, want.counters);
        }
    }
}

#[test]
fn sibling_exceptions_are_collected() {
    let src = "
var done = 0;
def main() {
  finish {
    async { throw new A; }
    async { throw new B; }
    async { done = done + 1; }
  }
}";
    let p = parse_str(src).unwrap();
    let want = Exc::Multiple(vec![Exc::Plain("A".into()), Exc::Plain("B".into())]);
    let serial = serial_oracle(&p, &[]).unwrap();
    assert_eq!(serial.exception.as_ref().map(Exc::canonical), Some(want.clone()));
    // the third sibling is not cancelled
    assert_eq!(serial.scalar("done"), Some(1));
    for workers in [1, 4] {
        let r = run(&p, &RuntimeConfig::with_workers(workers), &[]).unwrap();
        assert_eq!(r.exception.as_ref().map(Exc::canonical), Some(want.clone()));
        assert_eq!(r.scalar("done"), Some(1));
    }
}

#[test]
fn top_level_throw_is_reported_plainly() {
    let p = parse_str("def main() { throw new Oops; }").unwrap();
    assert_eq!(serial_oracle(&p, &[]).unwrap().exception, Some(Exc::Plain("Oops".into())));
    assert_eq!(
        run(&p, &RuntimeConfig::with_workers(2), &[]).unwrap().exception,
        Some(Exc::Plain("Oops".into()))
    );
}

#[test]
fn catching_multiple_and_rethrowing() {
    let src = "
var got = 0;
def main() {
  try {
    finish { async { throw new A; } }
  } catch (e: ME) {
    got = 1;
  }
  try { throw new B; } catch (e: B) { got = got + 10; }
}";
    let p = parse_str(src).unwrap();
    assert_eq!(serial_oracle(&p, &[]).unwrap().scalar("got"), Some(11));
    assert_eq!(run(&p, &RuntimeConfig::with_workers(3), &[]).unwrap().scalar("got"), Some(11));
}

const PHASES: &str = "
array a[32];
array b[32];
def main() {
  clock c;
  finish {
    for (i = 0; i < 32; i = i + 1) {
      async clocked(c) {
        a[i] = i + 1;
        advanceAll;
        b[i] = a[31 - i];
      }
    }
  }
  drop c;
}";

fn assert_phase_order(trace: &[Event]) {
    let first_b = trace
        .iter()
        .position(|e| matches!(e, Event::Write { global, .. } if global == "b"))
        .expect("b written");
    let last_a = trace
        .iter()
        .rposition(|e| matches!(e, Event::Write { global, .. } if global == "a"))
        .expect("a written");
    assert!(last_a < first_b, "a write at {last_a} after b write at {first_b}");
}

#[test]
fn barrier_separates_phases() {
    let p = parse_str(PHASES).unwrap();
    let cfg = RuntimeConfig {
        trace: true,
        ..RuntimeConfig::default()
    };
    let serial = serial_with(&p, &cfg, &[]).unwrap();
    assert_phase_order(&serial.trace);
    let want: Vec<i64> = (0..32).map(|i| 32 - i).collect();
    assert_eq!(serial.global("b").unwrap(), &want[..]);
    for workers in [1, 2, 4, 8] {
        let cfg = RuntimeConfig {
            trace: true,
            seed: Some(workers as u64),
            ..RuntimeConfig::with_workers(workers)
        };
        let r = run(&p, &cfg, &[]).unwrap();
        assert_eq!(r.checksum, serial.checksum, "workers={workers}");
        assert_phase_order(&r.trace);
        assert_eq!(r.counters.advances, 32);
    }
}

#[test]
fn runtime_faults_abort_the_run() {
    let p = parse_str("var x = 0; def main() { finish { async { x = 1 / x; } } }").unwrap();
    assert!(matches!(serial_oracle(&p, &[]), Err(RunError::Fault(m)) if m.contains("division")));
    assert!(matches!(run(&p, &RuntimeConfig::with_workers(4), &[]), Err(RunError::Fault(_))));
    let p = parse_str("array a[2]; def main() { a[2] = 1; }").unwrap();
    assert!(matches!(serial_oracle(&p, &[]), Err(RunError::Fault(m)) if m.contains("out of bounds")));
}

#[test]
fn crossed_clock_order_is_reported_as_deadlock() {
    let src = "
def main() {
  clock a;
  clock b;
  async clocked(a, b) { advanceAll; }
  async clocked(b, a) { advanceAll; }
  drop a;
  drop b;
}";
    let p = parse_str(src).unwrap();
    assert!(matches!(serial_oracle(&p, &[]), Err(RunError::Deadlock(_))));
    let cfg = RuntimeConfig {
        deadlock_timeout: Duration::from_millis(200),
        ..RuntimeConfig::with_workers(2)
    };
    assert!(matches!(run(&p, &cfg, &[]), Err(RunError::Deadlock(_))));
}

#[test]
fn idle_count_reflects_busy_workers() {
    let p = parse_str("var seen = 0; def main() { seen = idleWorkers(); }").unwrap();
    let r = run(&p, &RuntimeConfig::with_workers(4), &[]).unwrap();
    assert_eq!(r.scalar("seen"), Some(3));
    let hooked = RuntimeConfig {
        idle_hook: Some(Arc::new(|_, _| 7)),
        ..RuntimeConfig::with_workers(4)
    };
    assert_eq!(run(&p, &hooked, &[]).unwrap().scalar("seen"), Some(7));
}

#[test]
fn task_registers_carry_values_back_from_calls() {
    let src = "
var out = 0;
def main() { f(); if (__gex_f != null) { out = 1; } }
def f() { __gex_f = new E; }";
    let p = parse_str(src).unwrap();
    assert_eq!(serial_oracle(&p, &[]).unwrap().scalar("out"), Some(1));
}

// A worker waiting on a finish gives up its slot unless it runs one of the
// children itself. The barrier makes the child read the count only once
// main has reached its join (main leaves the clock there).
#[test]
fn joining_worker_is_idle_unless_it_adopts() {
    let src = "
var seen = -1;
def main() {
  clock c;
  finish { async clocked(c) { advanceAll; seen = idleWorkers(); } }
  drop c;
}";
    let p = parse_str(src).unwrap();
    for workers in [1, 2, 4] {
        for seed in [None, Some(1), Some(2), Some(3)] {
            let cfg = RuntimeConfig {
                seed,
                ..RuntimeConfig::with_workers(workers)
            };
            let r = run(&p, &cfg, &[]).unwrap();
            assert_eq!(r.scalar("seen"), Some(workers as i64 - 1), "workers={workers} seed={seed:?}");
        }
    }
    assert_eq!(serial_oracle(&p, &[]).unwrap().scalar("seen"), Some(0));
}
