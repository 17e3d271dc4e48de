//! Static and load-balanced chunking of a clocked loop, plus the split the
//! load-balanced template computes for a few idle-worker counts.

use finch::dlbc::{chunk_program, compute_partition, Chunking};
use finch::frontend::{parse_str, pretty};

const PHASED: &str = "
array a[16];
array b[16];
def main() {
  clock c;
  finish {
    for (i = 0; i < 16; i = i + 1) {
      async clocked(c) {
        a[i] = i * i;
        advanceAll;
        b[i] = a[15 - i];
      }
    }
  }
  drop c;
}";

fn main() {
    let program = parse_str(PHASED).unwrap();
    for how in [Chunking::Static, Chunking::LoadBalanced] {
        let (out, report) = chunk_program(&program, how);
        println!("== {how:?}: {} loop(s) chunked", report.transformed());
        print!("{}", pretty(&out));
    }

    println!("\niterations  idle  split (chunks | kept)");
    for (n, idle) in [(10, 3), (12, 3), (5, 7), (100, 6)] {
        let p = compute_partition(n, idle, 0).unwrap();
        println!("{n:10}  {idle:4}  {}", p.describe());
    }
}
