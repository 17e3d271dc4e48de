//! Parse a Finch program, print it back, and show what the
//! well-formedness checker says about a broken one.

use finch::frontend::{parse_str, pretty, FrontendError};

const PROGRAM: &str = "
var total = 0;
def main(n: int) {
  finish {
    for (i = 0; i < n; i = i + 1) {
      async { total = total + i; }
    }
  }
}";

fn main() {
    let program = parse_str(PROGRAM).expect("valid program");
    print!("{}", pretty(&program));

    // advancing a clock inside a plain async, and breaking outside a loop
    match parse_str("def main() { break; async { advanceAll; } }") {
        Err(FrontendError::IllFormed(diags)) => {
            println!("\n{} diagnostics:", diags.len());
            for d in diags {
                println!("  {d}");
            }
        }
        other => println!("unexpected: {other:?}"),
    }
}
