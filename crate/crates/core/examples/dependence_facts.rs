//! Escaping tasks and the dependence test that licenses moving code past
//! them. Accumulations into the same global commute with each other.

use finch::analysis::Facts;
use finch::frontend::{parse_stmt, parse_str};

fn main() {
    let program = parse_str(
        "var x = 0; var y = 0; var z = 0; array a[4];
         def spawn_writer() { async { x = x + 1; } }
         def main() { }",
    )
    .unwrap();
    let facts = Facts::new(&program);

    let first = parse_stmt("async { a[0] = y; } spawn_writer();").unwrap();
    let tasks = facts.escaping_asyncs(&first);
    println!("escaping tasks: {:?}", tasks.members);
    println!("their footprint: {:?}", tasks.footprint);

    for later in ["y = 2;", "x = x + 5;", "t = x;", "a[1] = 3;", "z = y + 1;"] {
        let s = parse_stmt(later).unwrap();
        println!("{later:12} depends on them: {}", facts.depends(&s, &tasks));
    }
}
