//! One line per acceptance criterion. Lines are written straight to stdout
//! so they show up in `cargo test` output without `--nocapture`.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use finch::afe::{run_afe, Mode, RuleId};
use finch::analysis::Facts;
use finch::dlbc::compute_partition;
use finch::frontend::{parse_stmt, parse_str};
use finch::harness::{build_kernel, kernel, mode_for, oracle, pipeline, OptLevel, KERNELS};
use finch::ir::{structurally_equal, Program};
use finch::runtime::{run, serial_oracle, serial_with, Counters, Event, Exc, RuntimeConfig};

const WORKERS: [usize; 4] = [1, 2, 4, 8];
const SEEDS: [u64; 3] = [11, 22, 33];
/// nqueens n=8 on 8 workers: required async reduction of dcafe over lc.
const NQ_ASYNC_RATIO: u64 = 4;
const SOUNDNESS_PROGRAMS: usize = 1000;
/// At least this many of the random programs must be independent pairs,
/// or the soundness check says little.
const SOUNDNESS_MIN_INDEPENDENT: usize = 200;

fn verdict(name: &str, budget: Duration, started: Instant, result: Result<String, String>) {
    let elapsed = started.elapsed();
    let (ok, detail) = match result {
        Ok(d) if elapsed <= budget => (true, d),
        Ok(d) => (false, format!("{d}; took {elapsed:.1?}, budget {budget:?}")),
        Err(d) => (false, d),
    };
    let line = format!(
        "[{}] {name}: {detail} ({elapsed:.2?})\n",
        if ok { "PASS" } else { "FAIL" }
    );
    std::io::stdout().write_all(line.as_bytes()).unwrap();
    assert!(ok, "{line}");
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn golden(name: &str) -> Program {
    let path = format!("{}/tests/golden/{name}.finch", env!("CARGO_MANIFEST_DIR"));
    parse_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn brute_force_queens(n: usize) -> i64 {
    fn place(row: usize, n: usize, cols: &mut Vec<usize>) -> i64 {
        if row == n {
            return 1;
        }
        let mut total = 0;
        for c in 0..n {
            if cols.iter().enumerate().all(|(r, &q)| q != c && row - r != c.abs_diff(q)) {
                cols.push(c);
                total += place(row + 1, n, cols);
                cols.pop();
            }
        }
        total
    }
    place(0, n, &mut Vec::new())
}

fn counters(program: &Program, workers: usize, input: &[i64]) -> Result<Counters, String> {
    run(program, &RuntimeConfig::with_workers(workers), input)
        .map(|r| r.counters)
        .map_err(|e| e.to_string())
}

#[test]
fn running_example_rule_chain() {
    let started = Instant::now();
    let result = (|| {
        let (_, report) = run_afe(&golden("fig4_a"), Mode::Plain);
        let local: Vec<_> = report
            .firings
            .iter()
            .filter(|f| f.method == "example" && f.rule != RuleId::FinishMethodPull)
            .collect();
        check(local.len() == 7, || format!("{} firings in `example`, want 7", local.len()))?;
        for (f, stage) in local.iter().zip(["b", "c", "d", "e", "f", "g", "h"]) {
            let want = golden(&format!("fig4_{stage}")).method("example").unwrap().body.clone();
            check(structurally_equal(&f.after, &want), || {
                format!("after {:?} differs from stage {stage}:\n{}", f.rule, f.after)
            })?;
        }
        let rules: Vec<_> = local.iter().map(|f| format!("{:?}", f.rule)).collect();
        Ok(format!("7/7 checkpoints match ({})", rules.join(" > ")))
    })();
    verdict("rule chain on the running example", Duration::from_secs(1), started, result);
}

#[test]
fn nqueens_needs_one_finish() {
    let started = Instant::now();
    let result = (|| {
        let nq = kernel("nqueens").unwrap();
        let built = build_kernel(nq, OptLevel::Dcafe).map_err(|e| e.to_string())?;
        for n in [4, 6, 8] {
            for w in WORKERS {
                let r = run(&built.program, &RuntimeConfig::with_workers(w), &[n]).map_err(|e| e.to_string())?;
                check(r.counters.finishes == 1, || {
                    format!("n={n} w={w}: {} finishes", r.counters.finishes)
                })?;
                check(r.scalar("solutions") == Some(brute_force_queens(n as usize)), || {
                    format!("n={n} w={w}: wrong solution count {:?}", r.scalar("solutions"))
                })?;
            }
        }
        Ok("finishes == 1 for n in {4,6,8} x workers {1,2,4,8}".to_string())
    })();
    verdict("nqueens at dcafe runs one finish", Duration::from_secs(10), started, result);
}

#[test]
fn counter_ordering_across_levels() {
    let started = Instant::now();
    let result = (|| {
        let mut worst = String::new();
        for k in KERNELS {
            let build = |l| build_kernel(k, l).map(|b| b.program).map_err(|e| e.to_string());
            let (none, lc, dcafe) = (build(OptLevel::None)?, build(OptLevel::Lc)?, build(OptLevel::Dcafe)?);
            for w in WORKERS {
                let (cn, cl, cd) = (
                    counters(&none, w, k.input)?,
                    counters(&lc, w, k.input)?,
                    counters(&dcafe, w, k.input)?,
                );
                check(cd.asyncs <= cl.asyncs && cl.asyncs <= cn.asyncs, || {
                    format!("{} w={w}: asyncs dcafe {} lc {} none {}", k.name, cd.asyncs, cl.asyncs, cn.asyncs)
                })?;
                check(cd.finishes <= cn.finishes, || {
                    format!("{} w={w}: finishes dcafe {} none {}", k.name, cd.finishes, cn.finishes)
                })?;
            }
        }
        let nq = kernel("nqueens").unwrap();
        let lc = counters(&build_kernel(nq, OptLevel::Lc).unwrap().program, 8, &[8])?;
        let dcafe = counters(&build_kernel(nq, OptLevel::Dcafe).unwrap().program, 8, &[8])?;
        check(dcafe.asyncs * NQ_ASYNC_RATIO <= lc.asyncs, || {
            format!("nqueens n=8 w=8: dcafe {} asyncs vs lc {}", dcafe.asyncs, lc.asyncs)
        })?;
        worst += &format!(
            "all kernels ordered; nqueens n=8 w=8 asyncs dcafe {} <= lc {} / {NQ_ASYNC_RATIO}",
            dcafe.asyncs, lc.asyncs
        );
        Ok(worst)
    })();
    verdict("async and finish counts ordered by level", Duration::from_secs(120), started, result);
}

#[test]
fn partition_table_and_sweep() {
    let started = Instant::now();
    let result = (|| {
        for (n, w, want) in [(10, 3, "{3,3,2|2}"), (12, 3, "{3,3,3|3}")] {
            let got = compute_partition(n, w, 0).map_err(|e| e.to_string())?.describe();
            check(got == want, || format!("({n}, {w}) gave {got}, want {want}"))?;
        }
        let mut cases = 0u64;
        for workers in 1..=64i64 {
            for actualn in 1..=10_000i64 {
                let p = compute_partition(actualn, workers, 0).map_err(|e| e.to_string())?;
                // cover and disjointness: sorted by start, the ranges must
                // tile [0, actualn) without gaps or overlaps
                let mut ranges: Vec<_> = p.chunks.iter().chain(std::iter::once(&p.parent)).cloned().collect();
                ranges.sort_by_key(|r| (r.start, r.end));
                let mut at = 0;
                for r in &ranges {
                    check(r.start == at && r.end >= r.start, || {
                        format!("gap or overlap at {at} for ({actualn}, {workers})")
                    })?;
                    at = r.end;
                }
                check(at == actualn, || format!("cover stops at {at} for ({actualn}, {workers})"))?;
                check(p.chunks.len() as i64 <= workers, || format!("over-spawn at ({actualn}, {workers})"))?;
                let lens = p.lengths();
                let (lo, hi) = (*lens.iter().min().unwrap(), *lens.iter().max().unwrap());
                check(hi - lo <= 1, || format!("imbalance {} at ({actualn}, {workers})", p.describe()))?;
                check(p.parent.end - p.parent.start == lo, || {
                    format!("parent share not minimal: {} at ({actualn}, {workers})", p.describe())
                })?;
                cases += 1;
            }
        }
        Ok(format!("(10,3) and (12,3) exact; {cases} sweep cases hold"))
    })();
    verdict("partition table and exhaustive sweep", Duration::from_secs(30), started, result);
}

#[test]
fn every_level_agrees_with_the_oracle() {
    let started = Instant::now();
    let result = (|| {
        let mut runs = 0;
        for k in KERNELS {
            let want = oracle(k, k.input).map_err(|e| e.to_string())?;
            for level in OptLevel::ALL {
                let program = build_kernel(k, level).map_err(|e| e.to_string())?.program;
                for w in WORKERS {
                    for seed in SEEDS {
                        let cfg = RuntimeConfig {
                            seed: Some(seed),
                            ..RuntimeConfig::with_workers(w)
                        };
                        let r = run(&program, &cfg, k.input).map_err(|e| format!("{} {level} w={w}: {e}", k.name))?;
                        check(r.checksum == want.checksum, || {
                            format!("{} {level} w={w} seed={seed}: store differs", k.name)
                        })?;
                        check(r.exception.as_ref().map(Exc::canonical) == want.exception, || {
                            format!("{} {level} w={w} seed={seed}: exception {:?}", k.name, r.exception)
                        })?;
                        runs += 1;
                    }
                }
            }
        }
        let nq = serial_oracle(&parse_str(kernel("nqueens").unwrap().source).unwrap(), &[6])
            .map_err(|e| e.to_string())?;
        let brute = brute_force_queens(6);
        check(nq.scalar("solutions") == Some(brute), || {
            format!("nqueens(6) oracle gives {:?}, enumerator {brute}", nq.scalar("solutions"))
        })?;
        Ok(format!("{runs} runs match; nqueens(6) = {brute} by both"))
    })();
    verdict("oracle equivalence", Duration::from_secs(300), started, result);
}

#[test]
fn exceptions_survive_optimization() {
    let started = Instant::now();
    let result = (|| {
        let mut shapes = Vec::new();
        for k in KERNELS.iter().filter(|k| k.throws) {
            let want = oracle(k, k.input).map_err(|e| e.to_string())?;
            let want_exc = want.exception.clone().ok_or("kernel threw nothing")?;
            for level in [OptLevel::None, OptLevel::Afe, OptLevel::Dcafe] {
                let program = pipeline(&parse_str(k.source).unwrap(), level, mode_for(k))
                    .map_err(|e| e.to_string())?
                    .program;
                let serial = serial_oracle(&program, k.input).map_err(|e| e.to_string())?;
                let mut outcomes = vec![("serial".to_string(), serial.exception)];
                for w in WORKERS {
                    let r = run(&program, &RuntimeConfig::with_workers(w), k.input).map_err(|e| e.to_string())?;
                    outcomes.push((format!("w={w}"), r.exception));
                }
                for (how, got) in outcomes {
                    let got = got.ok_or_else(|| format!("{} {level} {how}: no exception", k.name))?;
                    check(got.tags() == want_exc.tags(), || {
                        format!("{} {level} {how}: tags {:?} vs {:?}", k.name, got.tags(), want_exc.tags())
                    })?;
                    check(got.canonical() == want_exc, || {
                        format!("{} {level} {how}: {} vs {want_exc}", k.name, got.canonical())
                    })?;
                }
            }
            shapes.push(format!("{} {} tags depth {}", k.name, want_exc.tags().len(), want_exc.depth()));
        }
        Ok(format!("identical at none/afe/dcafe ({})", shapes.join(", ")))
    })();
    verdict("exception preservation", Duration::from_secs(30), started, result);
}

#[test]
fn barriers_order_chunked_phases() {
    let started = Instant::now();
    let result = (|| {
        let program = pipeline(&golden("fig6_input"), OptLevel::Dlbc, Mode::Plain)
            .map_err(|e| e.to_string())?
            .program;
        let mut cases = 0;
        for k in [1, 2, 3, 7] {
            for w in WORKERS {
                let cfg = RuntimeConfig {
                    trace: true,
                    idle_hook: Some(Arc::new(move |read, _| if read == 0 { 0 } else { k })),
                    ..RuntimeConfig::with_workers(w)
                };
                let r = run(&program, &cfg, &[]).map_err(|e| e.to_string())?;
                let writes: Vec<(&str, i64, i64)> = r
                    .trace
                    .iter()
                    .filter_map(|e| match e {
                        Event::Write { global, index, value, .. } => Some((global.as_str(), *index, *value)),
                        _ => None,
                    })
                    .collect();
                let last_s1 = writes.iter().rposition(|w| w.0 == "a");
                let first_s2 = writes.iter().position(|w| w.0 == "b");
                check(matches!((last_s1, first_s2), (Some(x), Some(y)) if x < y), || {
                    format!("k={k} w={w}: S2 write before the last S1 write")
                })?;
                for array in ["a", "b"] {
                    let mut seen = BTreeMap::new();
                    for wr in writes.iter().filter(|wr| wr.0 == array) {
                        *seen.entry(wr.1).or_insert(0) += 1;
                    }
                    check(seen.len() == 64 && seen.values().all(|&c| c == 1), || {
                        format!("k={k} w={w}: `{array}` indices not written exactly once")
                    })?;
                }
                let b = r.global("b").unwrap();
                check((0..64).all(|i| b[i] == 63 - i as i64), || format!("k={k} w={w}: wrong b"))?;
                // the poll after the first barrier must have re-entered the
                // parallel branch
                check(r.counters.asyncs > 0, || format!("k={k} w={w}: never left the serial block"))?;
                cases += 1;
            }
        }
        Ok(format!("{cases} hooked runs: S1 before S2, each index once"))
    })();
    verdict("clocked chunking keeps phase order", Duration::from_secs(30), started, result);
}

/// Random straight-line-ish programs over three scalars, one array and two
/// locals. Indices are masked into range and there is no division, so no
/// generated program can fault.
struct Gen {
    rng: StdRng,
}

impl Gen {
    fn expr(&mut self, depth: u32, vars: &[&str]) -> String {
        let pick = if depth == 0 { self.rng.random_range(0..4) } else { self.rng.random_range(0..6) };
        match pick {
            0 => self.rng.random_range(0..6).to_string(),
            1 => format!("g{}", self.rng.random_range(0..3)),
            2 => format!("a[{}]", self.rng.random_range(0..4)),
            3 if !vars.is_empty() => vars[self.rng.random_range(0..vars.len())].to_string(),
            3 => "1".into(),
            4 => {
                let op = ["+", "-", "*"][self.rng.random_range(0..3)];
                format!("({} {op} {})", self.expr(depth - 1, vars), self.expr(depth - 1, vars))
            }
            _ => format!("a[({}) & 3]", self.expr(depth - 1, vars)),
        }
    }

    /// `locals`: the main-task locals that may be written here.
    fn stmt(&mut self, depth: u32, vars: &mut Vec<&'static str>, locals: bool, calls: bool) -> String {
        let top = if depth == 0 { 6 } else { 10 };
        match self.rng.random_range(0..top) {
            0 => format!("g{} = {};", self.rng.random_range(0..3), self.expr(2, vars)),
            1 => {
                let g = self.rng.random_range(0..3);
                format!("g{g} = g{g} + {};", self.expr(1, vars))
            }
            2 => format!("a[({}) & 3] = {};", self.expr(1, vars), self.expr(2, vars)),
            3 => {
                let c = self.rng.random_range(0..4);
                format!("a[{c}] = a[{c}] - {};", self.expr(1, vars))
            }
            4 if locals => format!("{} = {};", ["t", "u"][self.rng.random_range(0..2)], self.expr(2, vars)),
            4 | 5 if calls => format!("h{}();", self.rng.random_range(0..2)),
            4 | 5 => "g0 = g0 + 1;".into(),
            6 => format!(
                "if ({} < {}) {{ {} }} else {{ {} }}",
                self.expr(1, vars),
                self.expr(1, vars),
                self.stmt(depth - 1, vars, locals, calls),
                self.stmt(depth - 1, vars, locals, calls)
            ),
            7 => {
                let i = ["i0", "i1", "i2"][depth as usize % 3];
                vars.push(i);
                let body = self.stmt(depth - 1, vars, locals, calls);
                vars.pop();
                format!("for ({i} = 0; {i} < 2; {i} = {i} + 1) {{ {body} }}")
            }
            8 => format!("finish {{ async {{ {} }} }}", self.stmt(depth - 1, vars, false, calls)),
            _ => format!(
                "{} {}",
                self.stmt(depth - 1, vars, locals, calls),
                self.stmt(depth - 1, vars, locals, calls)
            ),
        }
    }

    fn program(&mut self) -> (String, String, String) {
        let mut helpers = String::new();
        for h in 0..2 {
            helpers += &format!("def h{h}() {{ {} }}\n", self.stmt(2, &mut Vec::new(), false, false));
        }
        // e0/e1 always leave a task running
        for e in 0..2 {
            helpers += &format!(
                "def e{e}() {{ {} async {{ {} }} }}\n",
                self.stmt(1, &mut Vec::new(), false, true),
                self.stmt(2, &mut Vec::new(), false, true)
            );
        }
        let mut s1 = String::new();
        for _ in 0..self.rng.random_range(1..3) {
            if self.rng.random_bool(0.6) {
                s1 += &format!("async {{ {} }} ", self.stmt(2, &mut vec!["t", "u"], false, true));
            } else {
                s1 += &format!("e{}(); ", self.rng.random_range(0..2));
            }
        }
        let s2 = if self.rng.random_bool(0.2) {
            format!("async {{ {} }}", self.stmt(2, &mut vec!["t", "u"], false, true))
        } else {
            self.stmt(2, &mut vec!["t", "u"], true, true)
        };
        let globals = "var g0 = 1; var g1 = 2; var g2 = 3; array a[4];\n";
        (format!("{globals}{helpers}"), s1, s2)
    }
}

#[test]
fn independence_licenses_reordering() {
    let started = Instant::now();
    let result = (|| {
        let mut gen = Gen {
            rng: StdRng::seed_from_u64(0xF1_7C4),
        };
        let (mut independent, mut dependent_differs) = (0, 0);
        for case in 0..SOUNDNESS_PROGRAMS {
            let (decls, s1, s2) = gen.program();
            let main = |first: &str, second: &str| format!("{decls}def main() {{ t = 4; u = 5; {first} {second} }}");
            let forward = parse_str(&main(&s1, &s2)).map_err(|e| format!("case {case}: {e}\n{}", main(&s1, &s2)))?;
            let swapped = parse_str(&main(&s2, &s1)).map_err(|e| format!("case {case}: {e}"))?;
            let facts = Facts::new(&forward);
            let sources = facts.escaping_asyncs(&parse_stmt(&s1).unwrap());
            check(!sources.is_empty(), || format!("case {case}: first block has no escaping task"))?;
            let depends = facts.depends(&parse_stmt(&s2).unwrap(), &sources);
            let a = serial_oracle(&forward, &[]).map_err(|e| format!("case {case}: {e}"))?;
            let b = serial_oracle(&swapped, &[]).map_err(|e| format!("case {case}: {e}"))?;
            if !depends {
                independent += 1;
                check(a.checksum == b.checksum, || {
                    format!("case {case}: reordering independent blocks changed the store\n  {s1}\n  {s2}")
                })?;
            } else if a.checksum != b.checksum {
                dependent_differs += 1;
            }
        }
        check(independent >= SOUNDNESS_MIN_INDEPENDENT, || {
            format!("only {independent} independent pairs generated")
        })?;
        Ok(format!(
            "{SOUNDNESS_PROGRAMS} programs, {independent} independent pairs all reorder safely \
             ({dependent_differs} dependent pairs observably differ)"
        ))
    })();
    verdict("dependence analysis is sound", Duration::from_secs(60), started, result);
}

#[test]
fn clocked_serial_reference_matches() {
    // the serial reference itself obeys the barrier on the same program
    let r = serial_with(
        &golden("fig6_input"),
        &RuntimeConfig {
            trace: true,
            ..RuntimeConfig::default()
        },
        &[],
    )
    .unwrap();
    assert_eq!(r.counters.advances, 64);
}
