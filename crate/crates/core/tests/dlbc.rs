use finch::dlbc::{chunk_program, compute_partition, Chunking};
use finch::frontend::{parse_str, pretty};
use finch::ir::{structurally_equal, Program};

fn golden(name: &str) -> Program {
    let path = format!("{}/tests/golden/{name}.finch", env!("CARGO_MANIFEST_DIR"));
    parse_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn assert_same(got: &Program, want: &Program, method: &str) {
    let g = &got.method(method).unwrap().body;
    let w = &want.method(method).unwrap().body;
    assert!(structurally_equal(g, w), "got:\n{}\nwant:\n{}", pretty(got), pretty(want));
}

#[test]
fn nqueens_loop_becomes_the_load_balanced_template() {
    let (out, report) = chunk_program(&golden("fig5_input"), Chunking::LoadBalanced);
    assert_eq!(report.transformed(), 1, "{report:?}");
    assert_same(&out, &golden("fig5_dlbc"), "nqueens");
    // what we print parses back to the same program
    assert_eq!(parse_str(&pretty(&out)).unwrap(), out);
}

#[test]
fn clocked_loop_gets_phase_switches() {
    let (out, report) = chunk_program(&golden("fig6_input"), Chunking::LoadBalanced);
    assert_eq!(report.transformed(), 1, "{report:?}");
    assert!(report.loops[0].clocked);
    assert_same(&out, &golden("fig6_dlbc"), "main");
    assert!(pretty(&out).contains("switch (__phase"));
}

#[test]
fn clocked_loop_static_chunking() {
    let (out, _) = chunk_program(&golden("fig6_input"), Chunking::Static);
    assert_same(&out, &golden("fig6_lc"), "main");
}

fn rejected(src: &str) -> String {
    let (out, report) = chunk_program(&parse_str(src).unwrap(), Chunking::LoadBalanced);
    assert_eq!(report.transformed(), 0);
    assert_eq!(out, parse_str(src).unwrap());
    report.loops[0].skipped.clone().unwrap()
}

#[test]
fn loop_carried_local_is_rejected() {
    let why = rejected(
        "var s = 0; def main() { t = 0; finish { for (i = 0; i < 8; i = i + 1) { async { t = t + i; s = t; } } } }",
    );
    assert!(why.contains("`t`"), "{why}");
}

#[test]
fn body_local_assigned_first_is_accepted() {
    let src = "var s = 0; def main() { finish { for (i = 0; i < 8; i = i + 1) { async { t = i * 2; s = s + t; } } } }";
    let (_, report) = chunk_program(&parse_str(src).unwrap(), Chunking::LoadBalanced);
    assert_eq!(report.transformed(), 1, "{report:?}");
}

#[test]
fn throwing_body_is_rejected() {
    let why = rejected("def main() { finish { for (i = 0; i < 8; i = i + 1) { async { throw new Bad; } } } }");
    assert!(why.contains("throw"), "{why}");
}

#[test]
fn bound_written_by_body_is_rejected() {
    let why = rejected("var n = 8; def main() { finish { for (i = 0; i < n; i = i + 1) { async { n = n - 1; } } } }");
    assert!(why.contains("bound"), "{why}");
}

#[test]
fn nested_barrier_is_rejected() {
    let why = rejected(
        "def main() { clock c; finish { for (i = 0; i < 4; i = i + 1) { async clocked(c) { if (i > 0) { advanceAll; } } } } drop c; }",
    );
    assert!(why.contains("barrier"), "{why}");
}

#[test]
fn loop_without_finish_gets_no_local_finish() {
    let src = "var s = 0; def main() { finish { go(); } } def go() { for (i = 0; i < 8; i = i + 1) { async { s = s + i; } } }";
    let (out, report) = chunk_program(&parse_str(src).unwrap(), Chunking::LoadBalanced);
    assert_eq!(report.transformed(), 1);
    assert!(!out.method("go").unwrap().body.contains(&|s| s.is_finish()));
}

#[test]
fn single_iteration_loop_still_gets_the_template() {
    let src = "var s = 0; def main() { finish { for (i = 0; i < 1; i = i + 1) { async { s = s + 1; } } } }";
    let (out, report) = chunk_program(&parse_str(src).unwrap(), Chunking::LoadBalanced);
    assert_eq!(report.transformed(), 1);
    assert!(pretty(&out).contains("i < 1 - 2"));
}

#[test]
fn partition_examples() {
    assert_eq!(compute_partition(10, 3, 0).unwrap().describe(), "{3,3,2|2}");
    assert_eq!(compute_partition(12, 3, 0).unwrap().describe(), "{3,3,3|3}");
}

#[test]
fn partition_sweep() {
    for workers in 1..=64i64 {
        for actualn in 1..=10_000i64 {
            let start = 7;
            let p = compute_partition(actualn, workers, start).unwrap();
            // contiguous cover of [start, start + actualn)
            let mut at = start;
            for r in p.chunks.iter().chain(std::iter::once(&p.parent)) {
                assert_eq!(r.start, at, "gap or overlap at {actualn}/{workers}");
                assert!(r.end >= r.start);
                at = r.end;
            }
            assert_eq!(at, start + actualn);
            assert!(p.chunks.len() as i64 <= workers, "over-spawn at {actualn}/{workers}");
            let lens = p.lengths();
            let max = *lens.iter().max().unwrap();
            let min = *lens.iter().min().unwrap();
            assert!(max - min <= 1, "unbalanced at {actualn}/{workers}: {}", p.describe());
            assert_eq!(min, p.parent.end - p.parent.start, "parent not minimal at {actualn}/{workers}");
        }
    }
}
