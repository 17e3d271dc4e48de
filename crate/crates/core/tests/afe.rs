use finch::afe::{apply_rule, lower_pending, rewrite_to_fixpoint, run_afe, Mode, RuleCtx, RuleId};
use finch::analysis::{build_call_graph, Facts};
use finch::frontend::{parse_stmt, parse_str, pretty};
use finch::ir::{structurally_equal, NameGen, Stmt};

fn golden(name: &str) -> finch::ir::Program {
    let path = format!("{}/tests/golden/{name}.finch", env!("CARGO_MANIFEST_DIR"));
    parse_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn example_body(p: &finch::ir::Program) -> Stmt {
    p.method("example").unwrap().body.clone()
}

#[test]
fn running_example_chain() {
    let a = golden("fig4_a");
    let facts = Facts::new(&a);
    let mut names = NameGen::for_program(&a);
    let mut log = Vec::new();
    let end = rewrite_to_fixpoint("example", example_body(&a), &facts, Mode::Plain, &mut names, &mut log);
    let rules: Vec<RuleId> = log.iter().map(|f| f.rule).collect();
    assert_eq!(
        rules,
        vec![
            RuleId::FinishFusion,
            RuleId::FinishIfInterchange,
            RuleId::AsyncFinishInterchange,
            RuleId::LoopFinishInterchange,
            RuleId::TailFinishElim,
            RuleId::FinishExpandUpper,
            RuleId::FinishExpandLower,
        ]
    );
    for (firing, name) in log.iter().zip(["b", "c", "d", "e", "f", "g", "h"]) {
        let want = example_body(&golden(&format!("fig4_{name}")));
        assert!(
            structurally_equal(&firing.after, &want),
            "step {name}:\n{}\nexpected:\n{}",
            firing.after,
            want
        );
    }
    assert!(structurally_equal(&end, &example_body(&golden("fig4_h"))));
}

#[test]
fn golden_files_round_trip() {
    for name in ["a", "b", "c", "d", "e", "f", "g", "h"] {
        let p = golden(&format!("fig4_{name}"));
        let q = parse_str(&pretty(&p)).unwrap();
        assert_eq!(p, q);
    }
}

#[test]
fn stages_are_distinct() {
    assert!(!structurally_equal(
        &example_body(&golden("fig4_a")),
        &example_body(&golden("fig4_b"))
    ));
}

fn ctx_apply(globals: &str, rule: RuleId, site: &str, mode: Mode) -> Result<Stmt, finch::afe::Inapplicable> {
    let p = parse_str(&format!("{globals} def main() {{ }}")).unwrap();
    let facts = Facts::new(&p);
    let mut names = NameGen::new();
    let mut ctx = RuleCtx {
        facts: &facts,
        mode,
        names: &mut names,
    };
    apply_rule(rule, &parse_stmt(site).unwrap(), &mut ctx)
}

#[test]
fn loop_interchange_blocked_by_condition_dependence() {
    let err = ctx_apply(
        "var x = 0;",
        RuleId::LoopFinishInterchange,
        "while (x < 3) { finish { async { x = x + 1; } } }",
        Mode::Plain,
    )
    .unwrap_err();
    assert!(err.reason.contains("header"), "{err}");
}

#[test]
fn expand_lower_blocked_by_barrier() {
    let err = ctx_apply(
        "",
        RuleId::FinishExpandLower,
        "finish { y = 1; } advanceAll;",
        Mode::Plain,
    )
    .unwrap_err();
    assert!(err.reason.contains("barrier"), "{err}");
}

#[test]
fn tail_finish_with_pending_lists_wraps_in_me() {
    let out = ctx_apply(
        "",
        RuleId::TailFinishElim,
        "finish { finish { throw new A; } pending(__e1) } pending(__e2)",
        Mode::Exceptions,
    )
    .unwrap();
    let want = parse_stmt(
        "try { finish { throw new A; } if (__e1 != null) { throw __e1; } }
         catch (__x0: Exception) { throw new ME(__x0); }
         if (__e2 != null) { throw __e2; }",
    )
    .unwrap();
    assert!(structurally_equal(&out, &want), "{out}");
}

#[test]
fn fusion_blocked_by_dependence() {
    assert!(ctx_apply(
        "var x = 0; var y = 0;",
        RuleId::FinishFusion,
        "finish { async { x = 1; } } finish { y = x; }",
        Mode::Plain,
    )
    .is_err());
    assert!(ctx_apply(
        "var x = 0; var y = 0;",
        RuleId::FinishFusion,
        "finish { async { x = 1; } } finish { y = 2; }",
        Mode::Plain,
    )
    .is_ok());
}

#[test]
fn try_finish_exchange_only_in_exception_mode() {
    let site = "try { finish { x = 1; } } catch (e: Exception) { y = 2; }";
    assert!(ctx_apply("", RuleId::TryFinishExchange, site, Mode::Plain).is_err());
    assert!(ctx_apply("", RuleId::TryFinishExchange, site, Mode::Exceptions).is_ok());
}

const NQUEENS_LIKE: &str = "
var solutions = 0;
def main() { find(4); }
def find(n: int) { solutions = 0; step(n, 0); }
def step(n: int, j: int) {
  finish {
    for (i = 0; i < n; i = i + 1) {
      async {
        if (j + 1 == n) { solutions = solutions + 1; } else { step(n, j + 1); }
      }
    }
  }
}";

#[test]
fn finish_moves_to_the_non_recursive_site() {
    let p = parse_str(NQUEENS_LIKE).unwrap();
    let (q, report) = run_afe(&p, Mode::Plain);
    assert_eq!(report.pulled, vec!["step".to_string(), "find".to_string()]);
    let step = &q.method("step").unwrap().body;
    assert!(!step.contains(&|s| s.is_finish()));
    // the finish was absorbed into `find` and then pulled on into the entry
    let find = &q.method("find").unwrap().body;
    let want = parse_stmt("solutions = 0; step(n, 0);").unwrap();
    assert!(structurally_equal(find, &want), "{find}");
    let main = &q.method("main").unwrap().body;
    assert!(structurally_equal(main, &parse_stmt("finish { find(4); }").unwrap()), "{main}");
    // the recursive site is never wrapped
    let cg = build_call_graph(&q);
    assert_eq!(cg.recursive_sites.len(), 1);
}

#[test]
fn blocked_method_is_rolled_back_verbatim() {
    let src = "
array sums[4];
var out = 0;
def main() { work(); }
def work() {
  finish { async { sums[0] = 1; } }
  out = sums[0];
}";
    let p = parse_str(src).unwrap();
    let (q, report) = run_afe(&p, Mode::Plain);
    assert_eq!(q.method("work"), p.method("work"));
    assert!(report.pulled.is_empty());
}

#[test]
fn only_recursive_callers_block_the_pull() {
    let src = "
var s = 0;
def main() { f(3); }
def f(n: int) { if (n > 0) { g(n - 1); } }
def g(n: int) { finish { async { s = s + 1; f(n); } } }";
    let p = parse_str(src).unwrap();
    let (q, _) = run_afe(&p, Mode::Plain);
    assert_eq!(q.method("g"), p.method("g"));
}

#[test]
fn lowering_pending_lists_keeps_order() {
    let p = parse_str("def main() { finish { __a = null; __b = null; } pending(__a, __b) }").unwrap();
    let q = lower_pending(&p);
    let want = parse_stmt(
        "finish { __a = null; __b = null; }
         if (__a != null) { throw __a; }
         if (__b != null) { throw __b; }",
    )
    .unwrap();
    assert!(structurally_equal(&q.method("main").unwrap().body, &want));
    let plain = parse_str("def main() { finish { x = 1; } }").unwrap();
    assert_eq!(lower_pending(&plain), plain);
}
