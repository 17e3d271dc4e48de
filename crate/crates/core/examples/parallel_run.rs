//! Run one kernel on several worker counts and watch the async count the
//! load-balanced version settles on. The worker count of the last run can
//! also come from FINCH_NTHREADS.

use std::sync::Arc;

use finch::harness::{build_kernel, kernel, OptLevel};
use finch::runtime::{run, serial_oracle, Event, RuntimeConfig};

fn main() {
    let nq = kernel("nqueens").unwrap();
    let plain = build_kernel(nq, OptLevel::None).unwrap().program;
    let tuned = build_kernel(nq, OptLevel::Dcafe).unwrap().program;
    let want = serial_oracle(&plain, &[7]).unwrap();
    println!("oracle: {:?} solutions", want.scalar("solutions"));

    for workers in [1, 2, 4, 8] {
        let r = run(&tuned, &RuntimeConfig::with_workers(workers), &[7]).unwrap();
        assert_eq!(r.checksum, want.checksum);
        println!(
            "{workers} workers: {:5} asyncs, {} finish, {:?}",
            r.counters.asyncs, r.counters.finishes, r.elapsed
        );
    }

    // pretend nobody is ever idle: everything runs in the serial branch
    let cfg = RuntimeConfig {
        idle_hook: Some(Arc::new(|_, _| 0)),
        trace: true,
        ..RuntimeConfig::from_env()
    };
    let r = run(&tuned, &cfg, &[7]).unwrap();
    let spawns = r.trace.iter().filter(|e| matches!(e, Event::Spawn { .. })).count();
    println!("never idle on {} workers: {} asyncs, {spawns} spawn events", cfg.workers, r.counters.asyncs);
}
