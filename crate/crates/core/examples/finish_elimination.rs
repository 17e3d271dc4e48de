//! Finish elimination on a recursive search: every per-call finish is
//! replaced by a single one around the outermost call.

use finch::afe::{run_afe, Mode};
use finch::frontend::{parse_str, pretty};
use finch::runtime::serial_oracle;

const SEARCH: &str = "
var leaves = 0;
def main() { explore(5, 0); }
def explore(depth: int, at: int) {
  finish {
    for (i = 0; i < 3; i = i + 1) {
      async {
        if (at + 1 == depth) { leaves = leaves + 1; } else { explore(depth, at + 1); }
      }
    }
  }
}";

fn main() {
    let before = parse_str(SEARCH).unwrap();
    let (after, report) = run_afe(&before, Mode::Plain);
    for f in &report.firings {
        println!("fired {:?} in {} {}", f.rule, f.method, f.location);
    }
    println!("pulled: {:?}\n", report.pulled);
    print!("{}", pretty(&after));

    let (a, b) = (serial_oracle(&before, &[]).unwrap(), serial_oracle(&after, &[]).unwrap());
    println!(
        "\nfinishes {} -> {}, leaves {:?} -> {:?}",
        a.counters.finishes,
        b.counters.finishes,
        a.scalar("leaves"),
        b.scalar("leaves")
    );
}
