use std::path::PathBuf;
use std::process::Command;

use finch::frontend::parse_str;
use finch::harness::read_jsonl;

fn finchc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_finchc"))
}

fn kernel_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("kernels").join(format!("{name}.finch"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("finchc-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn build_prints_a_parseable_program() {
    let out = finchc()
        .args(["build", "--opt=dcafe", "--dump-dlbc"])
        .arg(kernel_path("nqueens"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let program = &text[text.find("var solutions").unwrap()..];
    parse_str(program).unwrap();
    assert!(text.contains("\"loops\""));
}

#[test]
fn run_reports_counters_and_checks_the_oracle() {
    let out = finchc()
        .args(["run", "--opt=dcafe", "--workers=2", "--seed=5", "--input=5"])
        .arg(kernel_path("nqueens"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("finishes 1 "), "{text}");
}

#[test]
fn worker_count_comes_from_the_environment() {
    let out = finchc()
        .args(["run", "--input=4"])
        .arg(kernel_path("nqueens"))
        .env("FINCH_NTHREADS", "3")
        .output()
        .unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().contains("on 3 workers"));
}

#[test]
fn runtime_faults_exit_with_two() {
    let src = scratch("fault.finch");
    std::fs::write(&src, "array a[2]; def main() { a[5] = 1; }").unwrap();
    let out = finchc().arg("run").arg(&src).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let missing = finchc().args(["run", "/nonexistent/x.finch"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let usage = finchc().args(["build", "--opt=fast", "x.finch"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
}

#[test]
fn bench_writes_jsonl_and_csv() {
    let out_path = scratch("report.jsonl");
    let out = finchc()
        .args(["bench", "--kernels=byzantine", "--levels=none,lc", "--workers=1,2", "--repeats=1"])
        .arg(format!("--out={}", out_path.display()))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let reports = read_jsonl(std::io::BufReader::new(std::fs::File::open(&out_path).unwrap())).unwrap();
    assert_eq!(reports.len(), 4);
    let csv = std::fs::read_to_string(out_path.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}
